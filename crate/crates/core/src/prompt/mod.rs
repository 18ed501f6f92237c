//! Prompt templates and the conversation workflow state machine.
//!
//! Seven templates drive the multi-turn flow: scenario description (initial
//! and diversity variants), high-level tasks, waypoint paths, configuration
//! regeneration from feedback, validity check, and JSON output. The state
//! machine selects which sequence to run per stage and when the feedback and
//! memory triggers fire.

use crate::campaign::{RunResult, ScenarioRecord};
use crate::sim::TrajectoryLog;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("missing or empty field {placeholder:?} required by template {template}")]
    MissingField {
        template: TemplateId,
        placeholder: String,
    },
    #[error("template {template} left unresolved placeholder {placeholder:?}")]
    Unresolved {
        template: TemplateId,
        placeholder: String,
    },
    #[error("template directory is missing {file}")]
    MissingTemplate { file: String },
    #[error("failed to read template {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// The seven prompt templates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    P1Scenario,
    P2DiverseScenario,
    P3HighLevelTask,
    P4WaypointPath,
    P5Regenerate,
    P6ValidityCheck,
    P7JsonOutput,
}

impl TemplateId {
    pub const ALL: [TemplateId; 7] = [
        TemplateId::P1Scenario,
        TemplateId::P2DiverseScenario,
        TemplateId::P3HighLevelTask,
        TemplateId::P4WaypointPath,
        TemplateId::P5Regenerate,
        TemplateId::P6ValidityCheck,
        TemplateId::P7JsonOutput,
    ];

    /// File name of this template inside a template directory.
    pub fn file_name(self) -> &'static str {
        match self {
            TemplateId::P1Scenario => "p1_scenario.txt",
            TemplateId::P2DiverseScenario => "p2_diverse_scenario.txt",
            TemplateId::P3HighLevelTask => "p3_high_level_task.txt",
            TemplateId::P4WaypointPath => "p4_waypoint_path.txt",
            TemplateId::P5Regenerate => "p5_regenerate.txt",
            TemplateId::P6ValidityCheck => "p6_validity_check.txt",
            TemplateId::P7JsonOutput => "p7_json_output.txt",
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = self.file_name();
        f.write_str(name.trim_end_matches(".txt"))
    }
}

/// A template body with `{{name}}` placeholders.
#[derive(Debug, Clone)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub body: String,
}

impl PromptTemplate {
    /// Placeholder names in order of appearance.
    pub fn placeholders(&self) -> Vec<String> {
        let re = regex::Regex::new(r"\{\{([a-z_]+)\}\}").unwrap();
        re.captures_iter(&self.body)
            .map(|c| c[1].to_string())
            .collect()
    }
}

/// Values available for template filling. The first three are required by
/// the scenario templates; feedback and memory are stage-specific.
#[derive(Debug, Clone, Default)]
pub struct PromptFields {
    pub environment_description: String,
    pub robot_navigation_route: String,
    pub requirement: String,
    pub feedback: Option<String>,
    pub historical_scenario_memory: Option<String>,
}

impl PromptFields {
    fn get(&self, name: &str) -> Option<&str> {
        match name {
            "environment_description" => Some(self.environment_description.as_str()),
            "robot_navigation_route" => Some(self.robot_navigation_route.as_str()),
            "requirement" => Some(self.requirement.as_str()),
            "feedback" => self.feedback.as_deref(),
            "historical_scenario_memory" => self.historical_scenario_memory.as_deref(),
            _ => None,
        }
    }

    /// All placeholder names a template may consume.
    pub const NAMES: [&'static str; 5] = [
        "environment_description",
        "robot_navigation_route",
        "requirement",
        "feedback",
        "historical_scenario_memory",
    ];
}

/// Fill a template; every placeholder must resolve to a non-empty value.
pub fn fill_template(tpl: &PromptTemplate, fields: &PromptFields) -> Result<String, TemplateError> {
    let mut out = tpl.body.clone();
    for name in tpl.placeholders() {
        let value = fields.get(&name).filter(|v| !v.trim().is_empty()).ok_or(
            TemplateError::MissingField {
                template: tpl.id,
                placeholder: name.clone(),
            },
        )?;
        out = out.replace(&format!("{{{{{name}}}}}"), value);
    }
    let re = regex::Regex::new(r"\{\{([a-z_]+)\}\}").unwrap();
    if let Some(c) = re.captures(&out) {
        return Err(TemplateError::Unresolved {
            template: tpl.id,
            placeholder: c[1].to_string(),
        });
    }
    Ok(out)
}

/// The template set in use; ships with built-in bodies and can be overridden
/// from a directory of text files (one per template id).
#[derive(Debug, Clone)]
pub struct PromptLibrary {
    templates: BTreeMap<TemplateId, PromptTemplate>,
}

impl PromptLibrary {
    /// The prompt prose shipped with the artifact.
    pub fn builtin() -> Self {
        let bodies: [(TemplateId, &str); 7] = [
            (TemplateId::P1Scenario, include_str!("templates/p1_scenario.txt")),
            (
                TemplateId::P2DiverseScenario,
                include_str!("templates/p2_diverse_scenario.txt"),
            ),
            (
                TemplateId::P3HighLevelTask,
                include_str!("templates/p3_high_level_task.txt"),
            ),
            (
                TemplateId::P4WaypointPath,
                include_str!("templates/p4_waypoint_path.txt"),
            ),
            (TemplateId::P5Regenerate, include_str!("templates/p5_regenerate.txt")),
            (
                TemplateId::P6ValidityCheck,
                include_str!("templates/p6_validity_check.txt"),
            ),
            (TemplateId::P7JsonOutput, include_str!("templates/p7_json_output.txt")),
        ];
        let templates = bodies
            .into_iter()
            .map(|(id, body)| {
                (
                    id,
                    PromptTemplate {
                        id,
                        body: body.to_string(),
                    },
                )
            })
            .collect();
        PromptLibrary { templates }
    }

    /// Load all seven templates from a directory.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self, TemplateError> {
        let dir = dir.as_ref();
        let mut templates = BTreeMap::new();
        for id in TemplateId::ALL {
            let path = dir.join(id.file_name());
            if !path.exists() {
                return Err(TemplateError::MissingTemplate {
                    file: path.display().to_string(),
                });
            }
            let body = std::fs::read_to_string(&path).map_err(|source| TemplateError::Io {
                path: path.display().to_string(),
                source,
            })?;
            templates.insert(id, PromptTemplate { id, body });
        }
        Ok(PromptLibrary { templates })
    }

    pub fn get(&self, id: TemplateId) -> &PromptTemplate {
        &self.templates[&id]
    }

    pub fn fill(&self, id: TemplateId, fields: &PromptFields) -> Result<String, TemplateError> {
        fill_template(self.get(id), fields)
    }
}

/// Workflow stage within a campaign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Initial,
    FeedbackOpt,
    Diversity,
    Done,
}

/// Stopping conditions: how many re-optimizations each scenario gets and how
/// many scenarios a campaign generates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TriggerPolicy {
    pub feedback_budget: usize,
    pub memory_budget: usize,
}

impl Default for TriggerPolicy {
    fn default() -> Self {
        TriggerPolicy {
            feedback_budget: 4,
            memory_budget: 10,
        }
    }
}

/// Position within the campaign loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkflowState {
    pub stage: Stage,
    pub scenario_index: usize,
    pub config_index: usize,
}

impl WorkflowState {
    pub fn new(policy: &TriggerPolicy) -> Self {
        WorkflowState {
            stage: if policy.memory_budget == 0 {
                Stage::Done
            } else {
                Stage::Initial
            },
            scenario_index: 0,
            config_index: 0,
        }
    }
}

const INITIAL_SEQUENCE: [TemplateId; 5] = [
    TemplateId::P1Scenario,
    TemplateId::P3HighLevelTask,
    TemplateId::P4WaypointPath,
    TemplateId::P6ValidityCheck,
    TemplateId::P7JsonOutput,
];

const FEEDBACK_SEQUENCE: [TemplateId; 3] = [
    TemplateId::P5Regenerate,
    TemplateId::P6ValidityCheck,
    TemplateId::P7JsonOutput,
];

const DIVERSITY_SEQUENCE: [TemplateId; 5] = [
    TemplateId::P2DiverseScenario,
    TemplateId::P3HighLevelTask,
    TemplateId::P4WaypointPath,
    TemplateId::P6ValidityCheck,
    TemplateId::P7JsonOutput,
];

/// Ordered template sequence for the current stage. Initial and diversity
/// stages open a fresh conversation; the feedback stage appends to the
/// scenario's existing one.
pub fn plan_stage(state: &WorkflowState, _policy: &TriggerPolicy) -> &'static [TemplateId] {
    match state.stage {
        Stage::Initial => &INITIAL_SEQUENCE,
        Stage::FeedbackOpt => &FEEDBACK_SEQUENCE,
        Stage::Diversity => &DIVERSITY_SEQUENCE,
        Stage::Done => &[],
    }
}

/// Advance after a simulation result: spend the feedback budget first
/// (yielding `feedback_budget + 1` configurations per scenario), then move to
/// the next scenario until the memory budget is exhausted. Objective values
/// do not influence transitions; the full budget is always spent.
pub fn advance(state: &WorkflowState, policy: &TriggerPolicy) -> WorkflowState {
    match state.stage {
        Stage::Done => *state,
        _ => {
            if state.config_index < policy.feedback_budget {
                WorkflowState {
                    stage: Stage::FeedbackOpt,
                    scenario_index: state.scenario_index,
                    config_index: state.config_index + 1,
                }
            } else if state.scenario_index + 1 < policy.memory_budget {
                WorkflowState {
                    stage: Stage::Diversity,
                    scenario_index: state.scenario_index + 1,
                    config_index: 0,
                }
            } else {
                WorkflowState {
                    stage: Stage::Done,
                    scenario_index: state.scenario_index + 1,
                    config_index: 0,
                }
            }
        }
    }
}

/// Human-readable objective direction for a metric name.
fn direction(objective_name: &str) -> &'static str {
    match objective_name {
        "dto" => "minimize",
        _ => "maximize",
    }
}

/// Render simulation feedback for the regeneration prompt: objective name,
/// value and direction, plus a compact run summary (closest human approach,
/// collision counts, completion time or timeout).
pub fn render_feedback(result: &RunResult, log: &TrajectoryLog) -> String {
    use crate::sim::EventKind;

    let name_upper = result.objective_name.to_uppercase();
    let mut out = format!(
        "Objective {name_upper} = {:.3} ({}: the violating direction is to {} this value).\n",
        result.objective_value,
        result.objective_name,
        direction(&result.objective_name),
    );

    // Closest approach to any human over the run.
    let mut min_d = f64::INFINITY;
    let mut min_t = 0.0;
    for k in 0..log.steps() {
        for (_, series) in log.human_series() {
            let d = log.robot.body.pos[k].distance(series.pos[k]);
            if d < min_d {
                min_d = d;
                min_t = log.times[k];
            }
        }
    }
    if min_d.is_finite() {
        out.push_str(&format!(
            "Closest human approach: {min_d:.3} m at t = {min_t:.1} s.\n"
        ));
    } else {
        out.push_str("No humans were present in this run.\n");
    }

    let robot_hits = log
        .events
        .iter()
        .filter(|e| e.kind == EventKind::CollisionRobotInitiated)
        .count();
    let human_hits = log
        .events
        .iter()
        .filter(|e| e.kind == EventKind::CollisionHumanInitiated)
        .count();
    out.push_str(&format!(
        "Collisions: {robot_hits} robot-initiated, {human_hits} human-initiated.\n"
    ));

    let trg = crate::metrics::trg(log);
    if trg.finished {
        out.push_str(&format!("Goal reached in {:.1} s.\n", trg.seconds));
    } else {
        out.push_str(&format!(
            "Goal NOT reached: timed out after {:.1} s of motion budget.\n",
            trg.seconds
        ));
    }
    out.push_str(&format!(
        "Other metrics: jerk = {:.3}, path length = {:.2} m, time not moving = {:.1} s.",
        result.metric_report.jerk, result.metric_report.pl, result.metric_report.tnm
    ));
    out
}

/// Render the historical scenario memory: one block per completed scenario
/// with its description, best configuration summary, and best objective
/// value, in generation order.
pub fn render_memory(records: &[ScenarioRecord]) -> String {
    let mut out = String::new();
    for record in records {
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str(&format!(
            "Scenario {}: {}\n",
            record.index + 1,
            record.description
        ));
        match record.best() {
            Some(best) => {
                out.push_str(&format!(
                    "  Best configuration: {}\n",
                    best.config.summary()
                ));
                out.push_str(&format!(
                    "  Best objective: {} = {:.3}\n",
                    best.result.objective_name, best.result.objective_value
                ));
            }
            None => out.push_str("  No completed configuration.\n"),
        }
    }
    out
}
