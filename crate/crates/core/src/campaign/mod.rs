//! End-to-end campaign orchestration: drive the prompt workflow through the
//! conversation backend, decode and validate configurations, run simulations,
//! maintain the scenario memory, select extremes, and execute repeat
//! experiments.

mod runner;

pub use runner::{Campaign, RunOptions};

use crate::config::HumanConfiguration;
use crate::env::Violation;
use crate::llm::BackendKind;
use crate::metrics::MetricReport;
use crate::prompt::TriggerPolicy;
use crate::sim::SimParams;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error(transparent)]
    Env(#[from] crate::env::EnvError),
    #[error("environment fails validation:\n{0}")]
    EnvInvalid(String),
    #[error("route fails validation:\n{0}")]
    RouteInvalid(String),
    #[error(transparent)]
    Gateway(#[from] crate::llm::GatewayError),
    #[error(transparent)]
    Template(#[from] crate::prompt::TemplateError),
    #[error(transparent)]
    Sim(#[from] crate::sim::SimError),
    #[error("failed to access {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to parse {path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
    #[error("output directory holds a different campaign configuration: {path}")]
    ConfigMismatch { path: String },
    #[error("need at least 2 completed scenarios, have {have}")]
    NotEnoughScenarios { have: usize },
    #[error("scenario {index} has no completed configuration")]
    NoCompletedConfig { index: usize },
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CampaignError + '_ {
    move |source| CampaignError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn render_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| format!("  - {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// The functional/safety requirement under test, with its hard-bound
/// objective and violating direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Requirement {
    /// Collision avoidance: violated by small distance-to-objects.
    #[serde(rename = "R1_collision")]
    R1Collision,
    /// Operational stability: violated by large jerk.
    #[serde(rename = "R2_stability")]
    R2Stability,
    /// Efficiency: violated by long time-to-reach-goal.
    #[serde(rename = "R3_efficiency")]
    R3Efficiency,
}

impl Requirement {
    pub fn objective_name(self) -> &'static str {
        match self {
            Requirement::R1Collision => "dto",
            Requirement::R2Stability => "jerk",
            Requirement::R3Efficiency => "trg",
        }
    }

    /// True when violating the requirement means driving the objective down.
    pub fn minimize(self) -> bool {
        matches!(self, Requirement::R1Collision)
    }

    /// Objective value extracted from a metric report.
    pub fn objective_of(self, report: &MetricReport) -> f64 {
        report.value(self.objective_name()).unwrap()
    }

    /// Sentinel for failed configurations: never selected as best.
    pub fn sentinel(self) -> f64 {
        if self.minimize() {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        }
    }

    /// True when `x` is strictly more violating than `y`.
    pub fn more_violating(self, x: f64, y: f64) -> bool {
        if self.minimize() {
            x < y
        } else {
            x > y
        }
    }

    /// Requirement prose filled into the prompts.
    pub fn text(self) -> &'static str {
        match self {
            Requirement::R1Collision => {
                "Collision Avoidance: the robot must always keep a safe clearance \
                 from people and objects while navigating; any close approach or \
                 contact violates the requirement. Objective: distance to the \
                 nearest object (DTO), to be minimized by the test scenario."
            }
            Requirement::R2Stability => {
                "Stability: the robot must move smoothly and keep operational \
                 stability; abrupt accelerations, oscillations or jerky motion \
                 violate the requirement. Objective: motion jerk, to be maximized \
                 by the test scenario."
            }
            Requirement::R3Efficiency => {
                "Efficiency: the robot should finish its navigation task without \
                 unnecessary delay; long travel times, detours and standstills \
                 violate the requirement. Objective: time to reach the goal (TRG), \
                 to be maximized by the test scenario."
            }
        }
    }
}

/// One simulated configuration execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    /// Log file path relative to the campaign output directory.
    pub trajectory_path: String,
    pub metric_report: MetricReport,
    pub objective_name: String,
    pub objective_value: f64,
    pub seed: u64,
}

/// Outcome of one configuration slot within a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ConfigOutcome {
    Completed {
        config: HumanConfiguration,
        result: RunResult,
    },
    Failed {
        reason: String,
    },
}

impl ConfigOutcome {
    /// Objective value, substituting the requirement's sentinel for failures.
    pub fn objective(&self, requirement: Requirement) -> f64 {
        match self {
            ConfigOutcome::Completed { result, .. } => result.objective_value,
            ConfigOutcome::Failed { .. } => requirement.sentinel(),
        }
    }

    pub fn is_completed(&self) -> bool {
        matches!(self, ConfigOutcome::Completed { .. })
    }
}

/// A completed configuration borrowed out of a scenario record.
#[derive(Debug, Clone, Copy)]
pub struct CompletedConfig<'a> {
    pub config: &'a HumanConfiguration,
    pub result: &'a RunResult,
}

/// One scenario: its description, every configuration tried, per-run
/// feedback texts, and the index of the best configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRecord {
    pub index: usize,
    pub description: String,
    pub configs: Vec<ConfigOutcome>,
    pub best_index: Option<usize>,
    pub feedback_texts: Vec<String>,
}

impl ScenarioRecord {
    /// The best completed configuration, per the requirement direction used
    /// when the record was built.
    pub fn best(&self) -> Option<CompletedConfig<'_>> {
        let idx = self.best_index?;
        match &self.configs[idx] {
            ConfigOutcome::Completed { config, result } => {
                Some(CompletedConfig { config, result })
            }
            ConfigOutcome::Failed { .. } => None,
        }
    }

    /// Best objective value, or the sentinel when nothing completed.
    pub fn best_objective(&self, requirement: Requirement) -> f64 {
        self.best()
            .map(|c| c.result.objective_value)
            .unwrap_or_else(|| requirement.sentinel())
    }
}

/// Append-only store of completed scenario records, persisted as
/// `memory.json` in generation order.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MemoryStore {
    records: Vec<ScenarioRecord>,
}

impl MemoryStore {
    pub fn records(&self) -> &[ScenarioRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn append(&mut self, record: ScenarioRecord) {
        self.records.push(record);
    }

    pub fn load(path: &Path) -> Result<Self, CampaignError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|source| CampaignError::Parse {
            path: path.display().to_string(),
            source,
        })
    }

    /// Atomic save: write to a temp file, then rename over the target.
    pub fn save(&self, path: &Path) -> Result<(), CampaignError> {
        let tmp = path.with_extension("json.tmp");
        let text = serde_json::to_string_pretty(self).expect("memory serializes");
        std::fs::write(&tmp, text).map_err(io_err(&tmp))?;
        std::fs::rename(&tmp, path).map_err(io_err(path))?;
        Ok(())
    }
}

/// Campaign-level configuration, persisted as `campaign.json` in the output
/// directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub requirement: Requirement,
    /// Environment file path.
    pub environment: PathBuf,
    /// Route file path; the route's name comes from the file.
    pub route: PathBuf,
    #[serde(default)]
    pub policy: TriggerPolicy,
    #[serde(default = "default_repeats")]
    pub repeats_for_extremes: usize,
    #[serde(default)]
    pub seed: u64,
    pub backend: BackendKind,
    #[serde(default)]
    pub sim: SimParams,
    /// Override directory for prompt templates; built-in prose otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub templates_dir: Option<PathBuf>,
    /// Baseline mode: no feedback or memory guidance. Forces the effective
    /// budgets to (0, memory_budget) and uses the initial prompt for every
    /// scenario.
    #[serde(default)]
    pub unguided: bool,
    /// Model identifier recorded in conversations.
    #[serde(default)]
    pub model_id: String,
}

fn default_repeats() -> usize {
    30
}

impl CampaignConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, CampaignError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|source| CampaignError::Parse {
            path: path.display().to_string(),
            source,
        })
    }

    /// Effective trigger policy after the unguided flag.
    pub fn effective_policy(&self) -> TriggerPolicy {
        if self.unguided {
            TriggerPolicy {
                feedback_budget: 0,
                memory_budget: self.policy.memory_budget,
            }
        } else {
            self.policy
        }
    }
}

/// Outcome of one scenario slot.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ScenarioOutcome {
    Completed(ScenarioRecord),
    Failed { index: usize, reason: String },
}

/// Everything a finished (or resumed) campaign produced.
#[derive(Debug, Clone)]
pub struct CampaignResult {
    pub config: CampaignConfig,
    pub out_dir: PathBuf,
    pub scenarios: Vec<ScenarioOutcome>,
}

impl CampaignResult {
    pub fn completed_records(&self) -> Vec<&ScenarioRecord> {
        self.scenarios
            .iter()
            .filter_map(|s| match s {
                ScenarioOutcome::Completed(r) => Some(r),
                ScenarioOutcome::Failed { .. } => None,
            })
            .collect()
    }

    /// Reload a campaign result from its output directory.
    pub fn load(out_dir: impl AsRef<Path>) -> Result<Self, CampaignError> {
        let out_dir = out_dir.as_ref().to_path_buf();
        let config = CampaignConfig::from_file(out_dir.join("campaign.json"))?;
        let memory_path = out_dir.join("memory.json");
        let store = if memory_path.exists() {
            MemoryStore::load(&memory_path)?
        } else {
            MemoryStore::default()
        };
        let mut scenarios: Vec<ScenarioOutcome> = store
            .records()
            .iter()
            .cloned()
            .map(ScenarioOutcome::Completed)
            .collect();
        // Failed scenarios leave a marker file instead of a memory entry.
        for index in 0..config.policy.memory_budget {
            let marker = out_dir.join(format!("scenario_{index}")).join("failed.json");
            if marker.exists() {
                let text = std::fs::read_to_string(&marker).map_err(io_err(&marker))?;
                let reason = serde_json::from_str::<serde_json::Value>(&text)
                    .ok()
                    .and_then(|v| v["reason"].as_str().map(String::from))
                    .unwrap_or_else(|| "unknown".into());
                scenarios.push(ScenarioOutcome::Failed { index, reason });
            }
        }
        Ok(CampaignResult {
            config,
            out_dir,
            scenarios,
        })
    }

    pub fn select_extremes(&self) -> Result<Extremes, CampaignError> {
        select_extremes(&self.completed_records(), self.config.requirement)
    }
}

/// Indices and objective values of the best and worst scenarios.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Extremes {
    pub best_scenario: usize,
    pub worst_scenario: usize,
    pub best_objective: f64,
    pub worst_objective: f64,
}

/// Pick the scenarios extremal in the requirement-violating direction of
/// their best objective values. The best keeps the lowest index on ties; the
/// worst keeps the highest, so fully tied campaigns yield best = first,
/// worst = last.
pub fn select_extremes(
    records: &[&ScenarioRecord],
    requirement: Requirement,
) -> Result<Extremes, CampaignError> {
    let complete: Vec<&ScenarioRecord> = records
        .iter()
        .copied()
        .filter(|r| r.best().is_some())
        .collect();
    if complete.len() < 2 {
        return Err(CampaignError::NotEnoughScenarios {
            have: complete.len(),
        });
    }
    let mut best = complete[0];
    let mut worst = complete[0];
    for record in &complete[1..] {
        let objective = record.best_objective(requirement);
        if requirement.more_violating(objective, best.best_objective(requirement)) {
            best = record;
        }
        if !requirement.more_violating(objective, worst.best_objective(requirement)) {
            worst = record;
        }
    }
    Ok(Extremes {
        best_scenario: best.index,
        worst_scenario: worst.index,
        best_objective: best.best_objective(requirement),
        worst_objective: worst.best_objective(requirement),
    })
}
