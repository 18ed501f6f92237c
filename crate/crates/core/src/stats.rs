//! Statistical comparison of repeated-run samples: Mann-Whitney U test,
//! Vargha-Delaney A12 effect size, standard deviations, and CSV report
//! emission.

use crate::campaign::RunResult;
use crate::metrics::MetricReport;
use itertools::Itertools;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use thiserror::Error;

/// Largest combined sample size for which the exact permutation p-value is
/// computed (C(12,6) = 924 assignments); larger samples use the normal
/// approximation with tie and continuity corrections.
pub const EXACT_ENUMERATION_LIMIT: usize = 12;

/// A12 at or beyond these bounds counts as a medium effect.
pub const A12_MEDIUM: f64 = 0.638;
/// A12 at or beyond these bounds counts as a large effect.
pub const A12_LARGE: f64 = 0.714;

/// Significance level for the Mann-Whitney test.
pub const ALPHA: f64 = 0.05;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("statistical test requires non-empty groups")]
    EmptyGroup,
    #[error("missing campaign artifact: {path}")]
    MissingArtifact { path: String },
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to parse {path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
}

/// Two samples of one metric to compare.
#[derive(Debug, Clone)]
pub struct SampleSet {
    pub metric_name: String,
    pub group_a: Vec<f64>,
    pub group_b: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Effect {
    Large,
    Medium,
    Negligible,
}

impl fmt::Display for Effect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Effect::Large => "large",
            Effect::Medium => "medium",
            Effect::Negligible => "negligible",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    Exact,
    NormalApprox,
}

impl fmt::Display for PValueMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PValueMethod::Exact => "exact",
            PValueMethod::NormalApprox => "normal_approx",
        })
    }
}

/// Outcome of comparing one metric across two groups.
#[derive(Debug, Clone, Serialize)]
pub struct StatResult {
    pub p_value: f64,
    pub a12: f64,
    pub significant: bool,
    pub effect: Effect,
    pub std_a: f64,
    pub std_b: f64,
    pub p_method: PValueMethod,
}

/// The U statistic of group `a` with 0.5 credit for ties.
fn u_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut u = 0.0;
    for &x in a {
        for &y in b {
            if x > y {
                u += 1.0;
            } else if x == y {
                u += 0.5;
            }
        }
    }
    u
}

fn exact_two_sided_p(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pooled.len();
    let n1 = a.len();
    let u_obs = u_statistic(a, b);

    let mut le = 0usize;
    let mut ge = 0usize;
    let mut total = 0usize;
    for combo in (0..n).combinations(n1) {
        let mut in_a = vec![false; n];
        for &i in &combo {
            in_a[i] = true;
        }
        let ga: Vec<f64> = (0..n).filter(|&i| in_a[i]).map(|i| pooled[i]).collect();
        let gb: Vec<f64> = (0..n).filter(|&i| !in_a[i]).map(|i| pooled[i]).collect();
        let u = u_statistic(&ga, &gb);
        if u <= u_obs + 1e-12 {
            le += 1;
        }
        if u >= u_obs - 1e-12 {
            ge += 1;
        }
        total += 1;
    }
    let p = 2.0 * (le.min(ge) as f64) / total as f64;
    p.min(1.0)
}

fn normal_approx_two_sided_p(a: &[f64], b: &[f64]) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};

    let n1 = a.len() as f64;
    let n2 = b.len() as f64;
    let n = n1 + n2;
    let u = u_statistic(a, b);
    let mean = n1 * n2 / 2.0;

    // Tie correction over the pooled sample.
    let mut pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    pooled.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i + 1;
        while j < pooled.len() && pooled[j] == pooled[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let variance = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if variance <= 0.0 {
        return 1.0;
    }
    // Continuity correction of 0.5 toward the mean.
    let z = ((u - mean).abs() - 0.5).max(0.0) / variance.sqrt();
    let normal = Normal::new(0.0, 1.0).unwrap();
    (2.0 * (1.0 - normal.cdf(z))).clamp(0.0, 1.0)
}

/// Two-sided Mann-Whitney U test p-value with the method used: exact
/// permutation enumeration for small samples, normal approximation with tie
/// and continuity corrections otherwise.
pub fn mann_whitney_u_detailed(a: &[f64], b: &[f64]) -> Result<(f64, PValueMethod), StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptyGroup);
    }
    if a.len() + b.len() <= EXACT_ENUMERATION_LIMIT {
        Ok((exact_two_sided_p(a, b), PValueMethod::Exact))
    } else {
        Ok((normal_approx_two_sided_p(a, b), PValueMethod::NormalApprox))
    }
}

/// Two-sided Mann-Whitney U test p-value.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    mann_whitney_u_detailed(a, b).map(|(p, _)| p)
}

/// Vargha-Delaney A12: probability (with tie credit) that a value from `a`
/// exceeds one from `b`.
pub fn vargha_delaney_a12(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.5;
    }
    u_statistic(a, b) / (a.len() * b.len()) as f64
}

/// Effect size category from A12 magnitude.
pub fn effect_size(a12: f64) -> Effect {
    let shift = (a12 - 0.5).abs();
    if shift >= A12_LARGE - 0.5 {
        Effect::Large
    } else if shift >= A12_MEDIUM - 0.5 {
        Effect::Medium
    } else {
        Effect::Negligible
    }
}

/// Sample standard deviation (n - 1 denominator); zero for fewer than two
/// values.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    var.sqrt()
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Full comparison of one sample set.
pub fn compare(set: &SampleSet) -> Result<StatResult, StatsError> {
    let (p_value, p_method) = mann_whitney_u_detailed(&set.group_a, &set.group_b)?;
    let a12 = vargha_delaney_a12(&set.group_a, &set.group_b);
    Ok(StatResult {
        p_value,
        a12,
        significant: p_value < ALPHA,
        effect: effect_size(a12),
        std_a: std_dev(&set.group_a),
        std_b: std_dev(&set.group_b),
        p_method,
    })
}

/// Load the metric reports of every `run_<i>.json` in a repeats directory,
/// ordered by run index.
pub fn load_run_reports(dir: impl AsRef<Path>) -> Result<Vec<MetricReport>, StatsError> {
    let dir = dir.as_ref();
    let entries = std::fs::read_dir(dir).map_err(|source| StatsError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let re = regex::Regex::new(r"^run_(\d+)\.json$").unwrap();
    let mut indexed = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| StatsError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        let name = entry.file_name().to_string_lossy().to_string();
        if let Some(c) = re.captures(&name) {
            let idx: usize = c[1].parse().unwrap();
            indexed.push((idx, entry.path()));
        }
    }
    if indexed.is_empty() {
        return Err(StatsError::MissingArtifact {
            path: format!("{}/run_*.json", dir.display()),
        });
    }
    indexed.sort_by_key(|(idx, _)| *idx);
    let mut reports = Vec::new();
    for (_, path) in indexed {
        let text = std::fs::read_to_string(&path).map_err(|source| StatsError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let result: RunResult = serde_json::from_str(&text).map_err(|source| StatsError::Parse {
            path: path.display().to_string(),
            source,
        })?;
        reports.push(result.metric_report);
    }
    Ok(reports)
}

fn metric_samples(reports: &[MetricReport], name: &str) -> Vec<f64> {
    reports
        .iter()
        .map(|r| r.value(name).expect("known metric"))
        .collect()
}

/// Per-metric comparison CSV plus a long-form per-repeat plot-data CSV.
///
/// With one group the statistics columns stay empty and only means and
/// standard deviations are emitted.
pub fn emit_report(
    a_dir: &Path,
    b_dir: Option<&Path>,
    csv_path: &Path,
    plot_csv_path: Option<&Path>,
) -> Result<(), StatsError> {
    let a_reports = load_run_reports(a_dir)?;
    let b_reports = match b_dir {
        Some(dir) => Some(load_run_reports(dir)?),
        None => None,
    };

    let mut csv = String::from("metric,mean_a,mean_b,std_a,std_b,p,a12,effect,p_method\n");
    for name in MetricReport::NAMES {
        let a = metric_samples(&a_reports, name);
        match &b_reports {
            Some(b_reports) => {
                let b = metric_samples(b_reports, name);
                let result = compare(&SampleSet {
                    metric_name: name.to_string(),
                    group_a: a.clone(),
                    group_b: b.clone(),
                })?;
                csv.push_str(&format!(
                    "{name},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{}\n",
                    mean(&a),
                    mean(&b),
                    result.std_a,
                    result.std_b,
                    result.p_value,
                    result.a12,
                    result.effect,
                    result.p_method,
                ));
            }
            None => {
                csv.push_str(&format!(
                    "{name},{:.6},,{:.6},,,,,\n",
                    mean(&a),
                    std_dev(&a),
                ));
            }
        }
    }
    std::fs::write(csv_path, &csv).map_err(|source| StatsError::Io {
        path: csv_path.display().to_string(),
        source,
    })?;

    if let Some(plot_path) = plot_csv_path {
        let mut plot = String::from("group,run,metric,value\n");
        let mut push_group = |group: &str, reports: &[MetricReport]| {
            for (i, report) in reports.iter().enumerate() {
                for name in MetricReport::NAMES {
                    plot.push_str(&format!(
                        "{group},{i},{name},{:.6}\n",
                        report.value(name).unwrap()
                    ));
                }
            }
        };
        push_group("a", &a_reports);
        if let Some(b_reports) = &b_reports {
            push_group("b", b_reports);
        }
        std::fs::write(plot_path, &plot).map_err(|source| StatsError::Io {
            path: plot_path.display().to_string(),
            source,
        })?;
    }
    Ok(())
}
