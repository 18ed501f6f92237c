//! Diversity metrics over generated scenarios: description embeddings,
//! task-text edit distance, and trajectory DTW distance.

use super::MetricsError;
use crate::geom::Vec2;
use crate::sim::TrajectoryLog;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Diversity summary over a set of scenarios / runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    /// Scenario description diversity: 1 - mean pairwise embedding cosine.
    pub sdd: f64,
    /// High-level task diversity: mean normalized Levenshtein distance.
    pub htd: f64,
    /// Mean raw (unnormalized) Levenshtein distance.
    pub htd_raw: f64,
    /// Scenario simulation diversity: mean pairwise DTW distance (m).
    pub ssd: f64,
}

/// Unit-cost edit distance (insertions, deletions, substitutions) over
/// Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Mean raw and length-normalized Levenshtein distance over all unordered
/// pairs. The normalized value is the headline number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HtdValues {
    pub normalized: f64,
    pub raw: f64,
}

pub fn htd(tasks: &[String]) -> HtdValues {
    let mut raw_sum = 0.0;
    let mut norm_sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..tasks.len() {
        for j in i + 1..tasks.len() {
            let d = levenshtein(&tasks[i], &tasks[j]) as f64;
            let max_len = tasks[i].chars().count().max(tasks[j].chars().count());
            raw_sum += d;
            norm_sum += if max_len == 0 { 0.0 } else { d / max_len as f64 };
            pairs += 1;
        }
    }
    if pairs == 0 {
        HtdValues {
            normalized: 0.0,
            raw: 0.0,
        }
    } else {
        HtdValues {
            normalized: norm_sum / pairs as f64,
            raw: raw_sum / pairs as f64,
        }
    }
}

/// Classic dynamic time warping with Euclidean local cost and an
/// unconstrained window; returns the cumulative cost of the optimal
/// alignment path.
pub fn dtw(a: &[Vec2], b: &[Vec2]) -> Result<f64, MetricsError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricsError::EmptySequence);
    }
    let mut prev = vec![f64::INFINITY; b.len() + 1];
    let mut cur = vec![f64::INFINITY; b.len() + 1];
    prev[0] = 0.0;
    for &pa in a {
        cur[0] = f64::INFINITY;
        for (j, &pb) in b.iter().enumerate() {
            let cost = pa.distance(pb);
            cur[j + 1] = cost + prev[j + 1].min(cur[j]).min(prev[j]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[b.len()])
}

/// Mean pairwise DTW distance over runs. Each pair contributes the DTW of the
/// two robot trajectories averaged with the mean DTW over index-matched human
/// trajectories (in lexicographic id order); unmatched humans are ignored and
/// the human term is zero when no pair matches.
pub fn ssd(runs: &[TrajectoryLog]) -> Result<f64, MetricsError> {
    if runs.len() < 2 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..runs.len() {
        for j in i + 1..runs.len() {
            let (a, b) = (&runs[i], &runs[j]);
            let robot = dtw(&a.robot.body.pos, &b.robot.body.pos)?;
            let ha: Vec<_> = a.human_series().collect();
            let hb: Vec<_> = b.human_series().collect();
            let matched = ha.len().min(hb.len());
            let mut human = 0.0;
            for k in 0..matched {
                human += dtw(&ha[k].1.pos, &hb[k].1.pos)?;
            }
            if matched > 0 {
                human /= matched as f64;
            }
            total += (robot + human) / 2.0;
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// Text embedding provider for scenario description diversity.
pub trait Embedder {
    /// Embed a batch of texts into a shared vector space.
    fn embed(&self, texts: &[String]) -> Vec<Vec<f64>>;
}

/// Deterministic fallback embedder: L2-normalized token-count vectors over
/// the batch vocabulary. Tokens are lowercase alphanumeric runs.
#[derive(Debug, Default, Clone)]
pub struct TokenCountEmbedder;

impl TokenCountEmbedder {
    fn tokens(text: &str) -> Vec<String> {
        text.to_lowercase()
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(|t| t.to_string())
            .collect()
    }
}

impl Embedder for TokenCountEmbedder {
    fn embed(&self, texts: &[String]) -> Vec<Vec<f64>> {
        let mut vocab: BTreeMap<String, usize> = BTreeMap::new();
        let token_lists: Vec<Vec<String>> = texts.iter().map(|t| Self::tokens(t)).collect();
        for tokens in &token_lists {
            for t in tokens {
                let next = vocab.len();
                vocab.entry(t.clone()).or_insert(next);
            }
        }
        token_lists
            .into_iter()
            .map(|tokens| {
                let mut v = vec![0.0; vocab.len()];
                for t in &tokens {
                    v[vocab[t]] += 1.0;
                }
                let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 0.0 {
                    for x in &mut v {
                        *x /= norm;
                    }
                }
                v
            })
            .collect()
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Scenario description diversity: one minus the mean pairwise cosine
/// similarity of embeddings. Zero by convention for fewer than two texts.
pub fn sdd(descriptions: &[String], embedder: &dyn Embedder) -> f64 {
    if descriptions.len() < 2 {
        return 0.0;
    }
    let vecs = embedder.embed(descriptions);
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..vecs.len() {
        for j in i + 1..vecs.len() {
            total += cosine(&vecs[i], &vecs[j]);
            pairs += 1;
        }
    }
    1.0 - total / pairs as f64
}
