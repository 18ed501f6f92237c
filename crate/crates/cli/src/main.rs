//! `forge`: requirement-driven scenario-generation test harness for mobile
//! robot navigation.
//!
//! Exit codes: 0 success, 1 validation failure, 2 runtime error.

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use forge_core::campaign::{Campaign, CampaignConfig, CampaignResult, ScenarioOutcome};
use forge_core::env::{validate_environment, validate_route, EnvironmentModel, Route};
use forge_core::metrics::MetricReport;
use forge_core::sim::TrajectoryLog;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "forge", version, about = "Scenario-generation test harness for robot navigation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Best,
    Worst,
}

#[derive(Subcommand)]
enum Command {
    /// Check an environment file against every structural invariant.
    ValidateEnv {
        /// Environment JSON file.
        env: PathBuf,
        /// Optional route files to validate against the environment.
        #[arg(long)]
        route: Vec<PathBuf>,
    },
    /// Run (or resume) a scenario-generation campaign.
    Run {
        /// Campaign configuration JSON.
        #[arg(long)]
        campaign: PathBuf,
        /// Output directory for all artifacts.
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-run the best or worst scenario of a finished campaign n times.
    Repeats {
        /// Campaign output directory.
        #[arg(long)]
        out: PathBuf,
        /// Which extreme scenario to repeat.
        #[arg(long, value_enum)]
        which: Which,
        /// Number of repetitions.
        #[arg(long, default_value_t = 30)]
        n: usize,
        /// First seed; runs use base_seed .. base_seed + n - 1.
        /// Defaults to a value derived from the campaign seed.
        #[arg(long)]
        base_seed: Option<u64>,
    },
    /// Compare repeat samples and emit a CSV report (plus plot data).
    Stats {
        /// Directory of run_<i>.json files for group A.
        #[arg(long)]
        a: PathBuf,
        /// Directory of run_<i>.json files for group B (optional).
        #[arg(long)]
        b: Option<PathBuf>,
        /// Output CSV path.
        #[arg(long)]
        csv: PathBuf,
        /// Long-form per-repeat values for external plotting.
        #[arg(long)]
        plot_csv: Option<PathBuf>,
    },
    /// Recompute the metric report of a persisted trajectory log.
    Metrics {
        /// Trajectory log JSON.
        #[arg(long)]
        log: PathBuf,
        /// Environment file; when given, static obstacles join the DTO
        /// object set (matching campaign-computed metrics).
        #[arg(long)]
        env: Option<PathBuf>,
    },
}

/// Exit classification: inputs that parsed but are semantically wrong exit
/// with 1; anything unreadable or unexpected exits with 2.
enum Outcome {
    Ok,
    ValidationFailed,
}

fn validate_env_cmd(env_path: &PathBuf, routes: &[PathBuf]) -> anyhow::Result<Outcome> {
    let env = EnvironmentModel::from_file(env_path)
        .with_context(|| format!("loading {}", env_path.display()))?;
    let mut violations = validate_environment(&env);
    for route_path in routes {
        let route = Route::from_file(route_path)
            .with_context(|| format!("loading {}", route_path.display()))?;
        violations.extend(validate_route(&env, &route));
    }
    if violations.is_empty() {
        println!(
            "ok: {} areas, {} obstacles, {} valid waypoints",
            env.areas.len(),
            env.obstacles.len(),
            env.grid.valid.len()
        );
        Ok(Outcome::Ok)
    } else {
        for v in &violations {
            println!("violation: {v}");
        }
        println!("{} violation(s)", violations.len());
        Ok(Outcome::ValidationFailed)
    }
}

fn summarize(result: &CampaignResult) {
    let mut completed = 0;
    let mut failed = 0;
    for scenario in &result.scenarios {
        match scenario {
            ScenarioOutcome::Completed(record) => {
                completed += 1;
                let best = record
                    .best()
                    .map(|b| format!("{} = {:.4}", b.result.objective_name, b.result.objective_value))
                    .unwrap_or_else(|| "no completed configuration".into());
                println!(
                    "scenario {}: {} configs, best {}",
                    record.index,
                    record.configs.len(),
                    best
                );
            }
            ScenarioOutcome::Failed { index, reason } => {
                failed += 1;
                println!("scenario {index}: FAILED ({reason})");
            }
        }
    }
    println!("{completed} scenario(s) completed, {failed} failed");
    if let Ok(extremes) = result.select_extremes() {
        println!(
            "best scenario {} (objective {:.4}), worst scenario {} (objective {:.4})",
            extremes.best_scenario,
            extremes.best_objective,
            extremes.worst_scenario,
            extremes.worst_objective
        );
    }
}

fn run_cmd(campaign_path: &PathBuf, out: &PathBuf) -> anyhow::Result<Outcome> {
    let config = CampaignConfig::from_file(campaign_path)
        .with_context(|| format!("loading {}", campaign_path.display()))?;
    let campaign = match Campaign::new(config) {
        Ok(c) => c,
        Err(
            e @ (forge_core::campaign::CampaignError::EnvInvalid(_)
            | forge_core::campaign::CampaignError::RouteInvalid(_)),
        ) => {
            eprintln!("{e}");
            return Ok(Outcome::ValidationFailed);
        }
        Err(e) => return Err(e.into()),
    };
    let result = campaign.run(out)?;
    summarize(&result);
    Ok(Outcome::Ok)
}

fn repeats_cmd(
    out: &PathBuf,
    which: Which,
    n: usize,
    base_seed: Option<u64>,
) -> anyhow::Result<Outcome> {
    anyhow::ensure!(n >= 1, "--n must be at least 1");
    let result = CampaignResult::load(out)?;
    let extremes = result.select_extremes()?;
    let (index, label, seed_offset) = match which {
        Which::Best => (extremes.best_scenario, "best", 100_000),
        Which::Worst => (extremes.worst_scenario, "worst", 200_000),
    };
    let records = result.completed_records();
    let record = records
        .iter()
        .find(|r| r.index == index)
        .expect("extreme scenario exists");
    let campaign = Campaign::new(result.config.clone())?;
    let base_seed = base_seed.unwrap_or(result.config.seed.wrapping_add(seed_offset));
    let dir = out.join("repeats").join(label);
    let results = campaign.repeat_experiment(record, n, base_seed, Some(&dir))?;
    println!(
        "{label}: scenario {index}, {n} runs with seeds {base_seed}..{}",
        base_seed + n as u64 - 1
    );
    let values: Vec<f64> = results.iter().map(|r| r.objective_value).collect();
    println!(
        "objective {}: mean {:.4}, std {:.4} -> {}",
        results[0].objective_name,
        forge_core::stats::mean(&values),
        forge_core::stats::std_dev(&values),
        dir.display()
    );
    Ok(Outcome::Ok)
}

fn stats_cmd(
    a: &Path,
    b: Option<&PathBuf>,
    csv: &Path,
    plot_csv: Option<&PathBuf>,
) -> anyhow::Result<Outcome> {
    forge_core::stats::emit_report(a, b.map(|p| p.as_path()), csv, plot_csv.map(|p| p.as_path()))?;
    println!("wrote {}", csv.display());
    if let Some(p) = plot_csv {
        println!("wrote {}", p.display());
    }
    Ok(Outcome::Ok)
}

fn metrics_cmd(log_path: &PathBuf, env_path: Option<&PathBuf>) -> anyhow::Result<Outcome> {
    let log = TrajectoryLog::load(log_path)
        .with_context(|| format!("loading {}", log_path.display()))?;
    let obstacles = match env_path {
        Some(path) => EnvironmentModel::from_file(path)?
            .obstacles
            .iter()
            .map(|o| o.shape)
            .collect(),
        None => Vec::new(),
    };
    let report = MetricReport::compute(&log, &obstacles);
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
    Ok(Outcome::Ok)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::ValidateEnv { env, route } => validate_env_cmd(env, route),
        Command::Run { campaign, out } => run_cmd(campaign, out),
        Command::Repeats {
            out,
            which,
            n,
            base_seed,
        } => repeats_cmd(out, *which, *n, *base_seed),
        Command::Stats { a, b, csv, plot_csv } => {
            stats_cmd(a, b.as_ref(), csv, plot_csv.as_ref())
        }
        Command::Metrics { log, env } => metrics_cmd(log, env.as_ref()),
    };
    match outcome {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::ValidationFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
