//! Codec and validator for the JSON human-behavior configuration produced at
//! the end of a conversation.
//!
//! Schema (exact keys):
//! ```json
//! {
//!   "scenario_description": "...",
//!   "tasks": [{"agent_id": "a1", "task": "...", "key_areas": ["Storage"]}],
//!   "agents": [{"id": "a1", "role": "picker", "behavior": "regular",
//!               "speed": 1.0, "path": ["E15", "E16"], "loop": false}]
//! }
//! ```

use crate::env::{parse_waypoint_label, EnvironmentModel};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

/// Hard cap on agents per configuration; keeps desk-scale runs fast.
pub const MAX_AGENTS: usize = 10;

/// Maximum desired speed accepted for an agent (m/s).
pub const MAX_AGENT_SPEED: f64 = 2.0;

/// Behavior mode of a simulated human, mapped onto social-force modifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Behavior {
    Regular,
    Curious,
    Scared,
    Threatening,
}

impl fmt::Display for Behavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Behavior::Regular => "regular",
            Behavior::Curious => "curious",
            Behavior::Scared => "scared",
            Behavior::Threatening => "threatening",
        };
        f.write_str(s)
    }
}

/// One simulated human: identity, behavior mode, waypoint path and speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub id: String,
    pub role: String,
    pub behavior: Behavior,
    pub speed: f64,
    pub path: Vec<String>,
    #[serde(rename = "loop")]
    pub loop_path: bool,
}

/// A high-level task assigned to one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub agent_id: String,
    pub task: String,
    pub key_areas: Vec<String>,
}

/// Decoded human-behavior configuration for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanConfiguration {
    pub scenario_description: String,
    pub tasks: Vec<TaskSpec>,
    pub agents: Vec<AgentSpec>,
}

impl HumanConfiguration {
    /// One-line digest of the agents, used in memory blocks and logs.
    pub fn summary(&self) -> String {
        let agents: Vec<String> = self
            .agents
            .iter()
            .map(|a| {
                format!(
                    "{} {} {:.1} m/s {}{}",
                    a.id,
                    a.behavior,
                    a.speed,
                    a.path.join("->"),
                    if a.loop_path { " (loop)" } else { "" }
                )
            })
            .collect();
        format!("{} agents: {}", self.agents.len(), agents.join("; "))
    }
}

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("configuration is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("schema violation at {path}: {message}")]
    Schema { path: String, message: String },
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> DecodeError {
    DecodeError::Schema {
        path: path.into(),
        message: message.into(),
    }
}

/// Successful decode plus any non-fatal warnings (unknown fields etc.).
#[derive(Debug, Clone)]
pub struct DecodeOutcome {
    pub config: HumanConfiguration,
    pub warnings: Vec<String>,
}

fn warn_unknown(warnings: &mut Vec<String>, obj: &serde_json::Map<String, Value>, known: &[&str], path: &str) {
    for key in obj.keys() {
        if !known.contains(&key.as_str()) {
            let w = format!("ignoring unknown field {path}.{key}");
            log::warn!("{w}");
            warnings.push(w);
        }
    }
}

fn get_str(obj: &serde_json::Map<String, Value>, key: &str, path: &str) -> Result<String, DecodeError> {
    match obj.get(key) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(schema(format!("{path}.{key}"), "expected a string")),
        None => Err(schema(format!("{path}.{key}"), "missing required field")),
    }
}

/// Parse and schema-check a configuration against an environment.
///
/// Unknown extra fields are ignored with a warning; structural problems
/// (missing fields, wrong types, out-of-range waypoints) are errors carrying
/// the path of the offending element.
pub fn decode(json_text: &str, env: &EnvironmentModel) -> Result<DecodeOutcome, DecodeError> {
    let root: Value = serde_json::from_str(json_text)?;
    let mut warnings = Vec::new();
    let obj = root
        .as_object()
        .ok_or_else(|| schema("$", "expected a JSON object"))?;
    warn_unknown(
        &mut warnings,
        obj,
        &["scenario_description", "tasks", "agents"],
        "$",
    );

    let scenario_description = match obj.get("scenario_description") {
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(schema("$.scenario_description", "expected a string")),
        None => String::new(),
    };

    let mut agents = Vec::new();
    let agents_raw = obj
        .get("agents")
        .ok_or_else(|| schema("$.agents", "missing required field"))?
        .as_array()
        .ok_or_else(|| schema("$.agents", "expected an array"))?;
    if agents_raw.is_empty() || agents_raw.len() > MAX_AGENTS {
        return Err(schema(
            "$.agents",
            format!("expected between 1 and {MAX_AGENTS} agents, got {}", agents_raw.len()),
        ));
    }
    let mut ids = BTreeSet::new();
    for (i, raw) in agents_raw.iter().enumerate() {
        let path = format!("$.agents[{i}]");
        let a = raw
            .as_object()
            .ok_or_else(|| schema(&path, "expected an object"))?;
        warn_unknown(
            &mut warnings,
            a,
            &["id", "role", "behavior", "speed", "path", "loop"],
            &path,
        );
        let id = get_str(a, "id", &path)?;
        if !ids.insert(id.clone()) {
            return Err(schema(format!("{path}.id"), format!("duplicate agent id {id:?}")));
        }
        let role = match a.get("role") {
            Some(Value::String(s)) => s.clone(),
            Some(_) => return Err(schema(format!("{path}.role"), "expected a string")),
            None => String::new(),
        };
        let behavior_str = get_str(a, "behavior", &path)?;
        let behavior: Behavior = serde_json::from_value(Value::String(behavior_str.clone()))
            .map_err(|_| {
                schema(
                    format!("{path}.behavior"),
                    format!(
                        "unknown behavior {behavior_str:?}; expected regular, curious, scared or threatening"
                    ),
                )
            })?;
        let speed = a
            .get("speed")
            .ok_or_else(|| schema(format!("{path}.speed"), "missing required field"))?
            .as_f64()
            .ok_or_else(|| schema(format!("{path}.speed"), "expected a number"))?;
        if !(speed > 0.0 && speed <= MAX_AGENT_SPEED) {
            return Err(schema(
                format!("{path}.speed"),
                format!("speed must be in (0, {MAX_AGENT_SPEED}] m/s, got {speed}"),
            ));
        }
        let path_raw = a
            .get("path")
            .ok_or_else(|| schema(format!("{path}.path"), "missing required field"))?
            .as_array()
            .ok_or_else(|| schema(format!("{path}.path"), "expected an array"))?;
        if path_raw.is_empty() {
            return Err(schema(format!("{path}.path"), "path needs at least one waypoint"));
        }
        let mut labels = Vec::new();
        for (j, v) in path_raw.iter().enumerate() {
            let lpath = format!("{path}.path[{j}]");
            let label = v
                .as_str()
                .ok_or_else(|| schema(&lpath, "expected a waypoint label string"))?;
            let (row, col) =
                parse_waypoint_label(label).map_err(|e| schema(&lpath, e.to_string()))?;
            if row >= env.grid.rows || col >= env.grid.cols {
                return Err(schema(
                    &lpath,
                    format!(
                        "waypoint out of range: {label} exceeds the {}x{} grid",
                        env.grid.rows, env.grid.cols
                    ),
                ));
            }
            if labels.last() == Some(&label.to_string()) {
                return Err(schema(&lpath, format!("consecutive duplicate waypoint {label}")));
            }
            labels.push(label.to_string());
        }
        let loop_path = match a.get("loop") {
            Some(Value::Bool(b)) => *b,
            Some(_) => return Err(schema(format!("{path}.loop"), "expected a boolean")),
            None => false,
        };
        agents.push(AgentSpec {
            id,
            role,
            behavior,
            speed,
            path: labels,
            loop_path,
        });
    }

    let mut tasks = Vec::new();
    match obj.get("tasks") {
        None => {}
        Some(Value::Array(raw_tasks)) => {
            for (i, raw) in raw_tasks.iter().enumerate() {
                let path = format!("$.tasks[{i}]");
                let t = raw
                    .as_object()
                    .ok_or_else(|| schema(&path, "expected an object"))?;
                warn_unknown(&mut warnings, t, &["agent_id", "task", "key_areas"], &path);
                let agent_id = get_str(t, "agent_id", &path)?;
                if !ids.contains(&agent_id) {
                    return Err(schema(
                        format!("{path}.agent_id"),
                        format!("references unknown agent {agent_id:?}"),
                    ));
                }
                let task = get_str(t, "task", &path)?;
                let mut key_areas = Vec::new();
                match t.get("key_areas") {
                    None => {}
                    Some(Value::Array(areas)) => {
                        for (j, v) in areas.iter().enumerate() {
                            let apath = format!("{path}.key_areas[{j}]");
                            let name = v
                                .as_str()
                                .ok_or_else(|| schema(&apath, "expected an area name string"))?;
                            key_areas.push(name.to_string());
                        }
                    }
                    Some(_) => return Err(schema(format!("{path}.key_areas"), "expected an array")),
                }
                tasks.push(TaskSpec {
                    agent_id,
                    task,
                    key_areas,
                });
            }
        }
        Some(_) => return Err(schema("$.tasks", "expected an array")),
    }

    Ok(DecodeOutcome {
        config: HumanConfiguration {
            scenario_description,
            tasks,
            agents,
        },
        warnings,
    })
}

/// One mechanically checkable problem in a configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidityIssue {
    /// The agent id or `tasks[i]` index the issue belongs to.
    pub subject: String,
    pub rule: String,
    pub message: String,
}

/// Result of the mechanical validity check driving the revision turn.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidityReport {
    pub ok: bool,
    pub issues: Vec<ValidityIssue>,
}

impl ValidityReport {
    pub fn from_issues(issues: Vec<ValidityIssue>) -> Self {
        ValidityReport {
            ok: issues.is_empty(),
            issues,
        }
    }
}

fn issue(subject: impl Into<String>, rule: &str, message: impl Into<String>) -> ValidityIssue {
    ValidityIssue {
        subject: subject.into(),
        rule: rule.to_string(),
        message: message.into(),
    }
}

/// Check a decoded configuration for feasibility in an environment:
///
/// 1. every path waypoint must be a valid (unobstructed) grid point,
/// 2. straight segments between consecutive waypoints must not cross obstacles,
/// 3. every task key area must exist,
/// 4. each tasked agent's path must start or end inside one of its key areas.
pub fn check_validity(cfg: &HumanConfiguration, env: &EnvironmentModel) -> ValidityReport {
    let mut issues = Vec::new();

    for agent in &cfg.agents {
        let mut points = Vec::new();
        for label in &agent.path {
            match parse_waypoint_label(label) {
                Ok((row, col)) => {
                    if !env.grid.is_valid(row, col) {
                        issues.push(issue(
                            &agent.id,
                            "obstructed waypoint",
                            format!("waypoint {label} is blocked or too close to an obstacle"),
                        ));
                    }
                    if let Ok(p) = env.grid.waypoint_to_world(row, col) {
                        points.push(p);
                    }
                }
                Err(e) => issues.push(issue(&agent.id, "bad waypoint label", e.to_string())),
            }
        }
        for (k, w) in points.windows(2).enumerate() {
            for obs in &env.obstacles {
                if obs.shape.intersects_segment(w[0], w[1]) {
                    issues.push(issue(
                        &agent.id,
                        "infeasible segment",
                        format!(
                            "segment {} -> {} crosses obstacle {:?}",
                            agent.path[k],
                            agent.path[k + 1],
                            obs.tag
                        ),
                    ));
                }
            }
        }
    }

    for (i, task) in cfg.tasks.iter().enumerate() {
        let subject = format!("tasks[{i}]");
        let mut known_areas = Vec::new();
        for name in &task.key_areas {
            match env.area(name) {
                Some(a) => known_areas.push(a),
                None => issues.push(issue(
                    &subject,
                    "unknown area",
                    format!("key area {name:?} does not exist in the environment"),
                )),
            }
        }
        if known_areas.is_empty() {
            continue;
        }
        let Some(agent) = cfg.agents.iter().find(|a| a.id == task.agent_id) else {
            continue;
        };
        let endpoints: Vec<_> = [agent.path.first(), agent.path.last()]
            .into_iter()
            .flatten()
            .filter_map(|label| env.label_to_world(label).ok())
            .collect();
        let anchored = endpoints
            .iter()
            .any(|p| known_areas.iter().any(|a| a.bounds.contains(*p)));
        if !anchored {
            issues.push(issue(
                &subject,
                "path not anchored",
                format!(
                    "agent {:?} path must start or end inside one of the task's key areas",
                    agent.id
                ),
            ));
        }
    }

    ValidityReport::from_issues(issues)
}

/// Render a validity report as a numbered issue list for the revision turn;
/// empty string when the report is clean.
pub fn report_to_prompt_fragment(report: &ValidityReport) -> String {
    if report.ok {
        return String::new();
    }
    let mut out = String::from("Detected configuration problems:\n");
    for (i, issue) in report.issues.iter().enumerate() {
        out.push_str(&format!(
            "{}. [{}] {}: {}\n",
            i + 1,
            issue.subject,
            issue.rule,
            issue.message
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Description, GridMap, LabeledArea, StaticObstacle};
    use crate::geom::{Rect, Vec2};
    use std::collections::BTreeSet;

    fn grid_env() -> EnvironmentModel {
        let mut env = EnvironmentModel {
            areas: vec![
                LabeledArea {
                    name: "Floor".into(),
                    bounds: Rect::from_corners(-0.5, -0.5, 9.5, 9.5),
                },
                LabeledArea {
                    name: "Dock".into(),
                    bounds: Rect::from_corners(-0.5, -0.5, 2.4, 2.4),
                },
            ],
            obstacles: vec![StaticObstacle {
                shape: Rect::from_corners(3.6, 3.6, 5.4, 5.4),
                tag: "shelf".into(),
            }],
            grid: GridMap {
                origin: Vec2::ZERO,
                cell_size: 1.0,
                rows: 10,
                cols: 10,
                blocked: vec![],
                valid: BTreeSet::new(),
            },
            description: Description {
                map: "floor".into(),
                grid: "grid".into(),
            },
            agent_radius: 0.3,
        };
        env.recompute_valid();
        env
    }

    #[test]
    fn decode_minimal_config() {
        let env = grid_env();
        let text = r#"{"scenario_description":"one walker",
            "agents":[{"id":"a1","role":"walker","behavior":"regular","speed":1.0,
                       "path":["A1","A2"],"loop":false}]}"#;
        let out = decode(text, &env).unwrap();
        assert_eq!(out.config.agents.len(), 1);
        assert_eq!(out.config.agents[0].path, vec!["A1", "A2"]);
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn decode_rejects_out_of_range_waypoint() {
        let env = grid_env();
        let text = r#"{"scenario_description":"x",
            "agents":[{"id":"a1","behavior":"regular","speed":1.0,"path":["Z99"]}]}"#;
        match decode(text, &env) {
            Err(DecodeError::Schema { path, message }) => {
                assert_eq!(path, "$.agents[0].path[0]");
                assert!(message.contains("out of range"), "{message}");
            }
            other => panic!("expected schema violation, got {other:?}"),
        }
    }

    #[test]
    fn decode_rejects_bad_speed_and_duplicate_ids() {
        let env = grid_env();
        let bad_speed = r#"{"agents":[{"id":"a1","behavior":"regular","speed":2.5,"path":["A1"]}]}"#;
        assert!(matches!(decode(bad_speed, &env), Err(DecodeError::Schema { .. })));

        let dup = r#"{"agents":[
            {"id":"a1","behavior":"regular","speed":1.0,"path":["A1"]},
            {"id":"a1","behavior":"regular","speed":1.0,"path":["A2"]}]}"#;
        match decode(dup, &env) {
            Err(DecodeError::Schema { path, .. }) => assert_eq!(path, "$.agents[1].id"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn decode_rejects_syntax_error_and_unknown_behavior() {
        let env = grid_env();
        assert!(matches!(decode("{not json", &env), Err(DecodeError::Json(_))));
        let text = r#"{"agents":[{"id":"a1","behavior":"sleepy","speed":1.0,"path":["A1"]}]}"#;
        match decode(text, &env) {
            Err(DecodeError::Schema { path, .. }) => assert_eq!(path, "$.agents[0].behavior"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn decode_warns_on_unknown_fields() {
        let env = grid_env();
        let text = r#"{"scenario_description":"x","mood":"tense",
            "agents":[{"id":"a1","behavior":"regular","speed":1.0,"path":["A1"],"hat":true}]}"#;
        let out = decode(text, &env).unwrap();
        assert_eq!(out.warnings.len(), 2);
        assert!(out.warnings[0].contains("$.mood"));
        assert!(out.warnings[1].contains("$.agents[0].hat"));
    }

    #[test]
    fn decode_rejects_task_with_unknown_agent() {
        let env = grid_env();
        let text = r#"{"tasks":[{"agent_id":"ghost","task":"t","key_areas":[]}],
            "agents":[{"id":"a1","behavior":"regular","speed":1.0,"path":["A1"]}]}"#;
        match decode(text, &env) {
            Err(DecodeError::Schema { path, .. }) => assert_eq!(path, "$.tasks[0].agent_id"),
            other => panic!("{other:?}"),
        }
    }

    fn full_fixture() -> &'static str {
        r#"{
          "scenario_description": "Two pickers restock while a visitor wanders near the dock.",
          "tasks": [
            {"agent_id": "p1", "task": "pick items along the north aisle", "key_areas": ["Floor"]},
            {"agent_id": "v1", "task": "wait at the dock for a delivery", "key_areas": ["Dock"]}
          ],
          "agents": [
            {"id": "p1", "role": "picker", "behavior": "regular", "speed": 1.2,
             "path": ["A1", "A5", "C5"], "loop": true},
            {"id": "v1", "role": "visitor", "behavior": "curious", "speed": 0.8,
             "path": ["B2", "B1"], "loop": false}
          ]
        }"#
    }

    #[test]
    fn round_trip_preserves_semantics() {
        let env = grid_env();
        let cfg = decode(full_fixture(), &env).unwrap().config;
        let encoded = serde_json::to_string(&cfg).unwrap();
        let again = decode(&encoded, &env).unwrap().config;
        assert_eq!(cfg, again);
        // The serialized form uses the exact schema key for path looping.
        assert!(encoded.contains("\"loop\":"));
    }

    #[test]
    fn validity_clean_fixture() {
        let env = grid_env();
        let cfg = decode(full_fixture(), &env).unwrap().config;
        let report = check_validity(&cfg, &env);
        assert!(report.ok, "{:?}", report.issues);
        assert_eq!(report_to_prompt_fragment(&report), "");
    }

    #[test]
    fn validity_flags_crossing_segment() {
        let env = grid_env();
        // E1 -> E9 passes straight through the shelf at y = 4.
        let text = r#"{"agents":[{"id":"a1","behavior":"regular","speed":1.0,"path":["E1","E9"]}]}"#;
        let cfg = decode(text, &env).unwrap().config;
        let report = check_validity(&cfg, &env);
        assert!(!report.ok);
        assert!(report.issues.iter().any(|i| i.rule == "infeasible segment"));
    }

    #[test]
    fn validity_flags_unknown_area_and_unanchored_path() {
        let env = grid_env();
        let text = r#"{
            "tasks":[
              {"agent_id":"a1","task":"t","key_areas":["Packing"]},
              {"agent_id":"a2","task":"t","key_areas":["Dock"]}
            ],
            "agents":[
              {"id":"a1","behavior":"regular","speed":1.0,"path":["A1","A2"]},
              {"id":"a2","behavior":"regular","speed":1.0,"path":["J9","J10"]}
            ]}"#;
        let cfg = decode(text, &env).unwrap().config;
        let report = check_validity(&cfg, &env);
        assert!(report.issues.iter().any(|i| i.rule == "unknown area" && i.subject == "tasks[0]"));
        assert!(report.issues.iter().any(|i| i.rule == "path not anchored" && i.subject == "tasks[1]"));
    }

    #[test]
    fn validity_flags_obstructed_waypoint() {
        let env = grid_env();
        // E5 at world (4, 4) sits inside the shelf.
        let text = r#"{"agents":[{"id":"a1","behavior":"regular","speed":1.0,"path":["E5"]}]}"#;
        let cfg = decode(text, &env).unwrap().config;
        let report = check_validity(&cfg, &env);
        assert!(report.issues.iter().any(|i| i.rule == "obstructed waypoint"));
    }

    #[test]
    fn fragment_numbers_issues() {
        let report = ValidityReport::from_issues(vec![
            issue("a1", "obstructed waypoint", "waypoint E5 is blocked"),
            issue("tasks[0]", "unknown area", "key area \"X\" does not exist"),
        ]);
        let frag = report_to_prompt_fragment(&report);
        assert!(frag.starts_with("Detected configuration problems:\n1. [a1]"));
        assert!(frag.contains("\n2. [tasks[0]]"));
    }
}
