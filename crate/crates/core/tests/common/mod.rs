//! Shared fixtures for integration tests: a compact hall environment, a
//! crossing-agent configuration family, and scripted-backend builders that
//! mirror the campaign's turn order.

use forge_core::campaign::{CampaignConfig, Requirement};
use forge_core::llm::{BackendKind, ScriptEntry};
use forge_core::prompt::TriggerPolicy;
use std::path::{Path, PathBuf};

pub const HALL_ENV: &str = r#"{
  "areas": [{"name": "Hall", "bounds": [-1.0, -1.0, 13.0, 13.0]}],
  "obstacles": [{"shape": [5.0, 4.0, 7.0, 5.0], "tag": "crate"}],
  "grid": {"origin": [0.0, 0.0], "cell_size": 1.0, "rows": 13, "cols": 13, "blocked": []},
  "description": {
    "map": "An open test hall with a single crate island south of the route.",
    "grid": "13x13 grid, 1 m spacing, rows A-M south to north, columns 1-13 west to east."
  }
}"#;

pub const HALL_ROUTE: &str = r#"{"name": "hall_route", "waypoints": [[0.0, 6.0], [10.0, 6.0]]}"#;

/// Write the hall environment and route files, returning their paths.
pub fn write_hall(dir: &Path) -> (PathBuf, PathBuf) {
    let env = dir.join("env.json");
    let route = dir.join("route.json");
    std::fs::write(&env, HALL_ENV).unwrap();
    std::fs::write(&route, HALL_ROUTE).unwrap();
    (env, route)
}

/// A valid single-agent configuration crossing the hall route. Scenario and
/// config indices vary the crossing column, speed and behavior so objective
/// values differ across the campaign.
pub fn crossing_config(scenario: usize, config: usize) -> String {
    // Columns left or right of the crate at x in [5, 7].
    let xs = [1, 2, 3, 4, 8, 9, 10, 11, 12, 1];
    let x = xs[scenario % xs.len()];
    let behaviors = ["regular", "curious", "scared", "threatening", "regular"];
    let behavior = behaviors[config % behaviors.len()];
    let speed = 0.8 + 0.1 * config as f64;
    let col = x + 1; // 1-based column label for x with origin 0 and 1 m cells
    format!(
        r#"{{"scenario_description":"Scenario {s}: a worker crosses the hall at column {col} (variant {c}).",
           "tasks":[{{"agent_id":"w","task":"Cross the hall at column {col}, variant {c}.","key_areas":["Hall"]}}],
           "agents":[{{"id":"w","role":"worker","behavior":"{behavior}","speed":{speed:.2},"path":["B{col}","L{col}"],"loop":true}}]}}"#,
        s = scenario,
        c = config,
    )
}

/// Script entries for one scenario in campaign turn order, using the given
/// P7 reply per config round.
pub fn scenario_entries(
    scenario: usize,
    feedback_budget: usize,
    diversity: bool,
    p7_reply: impl Fn(usize) -> String,
) -> Vec<ScriptEntry> {
    let mut entries = Vec::new();
    let first_guard = if diversity {
        "Historical Scenario Memory"
    } else {
        "Requirement:"
    };
    entries.push(ScriptEntry::expect(
        first_guard,
        format!("Scenario {scenario}: a worker repeatedly crosses the robot's corridor."),
    ));
    entries.push(ScriptEntry::reply("w: cross the hall (Hall)."));
    entries.push(ScriptEntry::reply("w path stated."));
    entries.push(ScriptEntry::expect(
        "Check the human configuration",
        "Configuration verified; no changes needed.",
    ));
    entries.push(ScriptEntry::expect("single JSON object", p7_reply(0)));
    for config in 1..=feedback_budget {
        entries.push(ScriptEntry::expect(
            "Simulation Feedback:",
            "Adjusting the crossing to press the corridor harder.",
        ));
        entries.push(ScriptEntry::reply("Revised configuration stated."));
        entries.push(ScriptEntry::expect("single JSON object", p7_reply(config)));
    }
    entries
}

/// A full well-formed script for the given budgets.
pub fn full_script(policy: TriggerPolicy, unguided: bool) -> Vec<ScriptEntry> {
    let mut entries = Vec::new();
    let feedback_budget = if unguided { 0 } else { policy.feedback_budget };
    for scenario in 0..policy.memory_budget {
        let diversity = !unguided && scenario > 0;
        entries.extend(scenario_entries(scenario, feedback_budget, diversity, |config| {
            crossing_config(scenario, config)
        }));
    }
    entries
}

pub fn write_script(dir: &Path, name: &str, entries: &[ScriptEntry]) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(entries).unwrap()).unwrap();
    path
}

/// Campaign config over the hall fixture with a scripted backend.
pub fn hall_campaign(
    dir: &Path,
    script: &Path,
    requirement: Requirement,
    policy: TriggerPolicy,
) -> CampaignConfig {
    let (env, route) = write_hall(dir);
    CampaignConfig {
        requirement,
        environment: env,
        route,
        policy,
        repeats_for_extremes: 30,
        seed: 42,
        backend: BackendKind::ScriptedMock {
            script: script.to_path_buf(),
        },
        sim: forge_core::sim::SimParams {
            max_time: 60.0,
            ..Default::default()
        },
        templates_dir: None,
        unguided: false,
        model_id: "mock".into(),
    }
}
