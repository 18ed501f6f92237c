//! Snapshot tests for the rendered prompt fragments: simulation feedback,
//! historical scenario memory, and the validity-issue list. Set
//! `UPDATE_GOLDEN=1` to regenerate the expected files after an intentional
//! format change.

use forge_core::campaign::{ConfigOutcome, RunResult, ScenarioRecord};
use forge_core::config::{
    report_to_prompt_fragment, AgentSpec, Behavior, HumanConfiguration, TaskSpec, ValidityIssue,
    ValidityReport,
};
use forge_core::geom::Vec2;
use forge_core::metrics::MetricReport;
use forge_core::prompt::{render_feedback, render_memory};
use forge_core::sim::{BodySeries, Event, EventKind, LogMeta, RobotSeries, TrajectoryLog};
use std::collections::BTreeMap;
use std::path::Path;

fn check_golden(name: &str, actual: &str) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var("UPDATE_GOLDEN").is_ok() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path)
        .unwrap_or_else(|_| panic!("golden file {name} missing; run with UPDATE_GOLDEN=1"));
    assert_eq!(actual, expected, "snapshot {name} drifted");
}

fn fixture_result() -> (RunResult, TrajectoryLog) {
    let robot_pos: Vec<Vec2> = (0..=30).map(|k| Vec2::new(0.06 * k as f64, 0.0)).collect();
    let human_pos = vec![Vec2::new(2.0, 0.8); 31];
    let mut humans = BTreeMap::new();
    humans.insert("h1".to_string(), BodySeries::from_positions(0.1, human_pos));
    let log = TrajectoryLog {
        dt: 0.1,
        times: (0..=30).map(|k| k as f64 * 0.1).collect(),
        robot: RobotSeries {
            body: BodySeries::from_positions(0.1, robot_pos),
            t_start: Some(0.0),
            t_goal: Some(3.0),
            reached_goal: true,
        },
        humans,
        events: vec![Event {
            time: 3.0,
            kind: EventKind::GoalReached,
            agent_id: None,
        }],
        meta: LogMeta::default(),
    };
    let report = MetricReport::compute(&log, &[]);
    let result = RunResult {
        trajectory_path: "scenario_0/log_1.json".into(),
        objective_name: "dto".into(),
        objective_value: report.dto,
        metric_report: report,
        seed: 7,
    };
    (result, log)
}

fn fixture_config(speed: f64) -> HumanConfiguration {
    HumanConfiguration {
        scenario_description: "A porter crosses the corridor with a cart.".into(),
        tasks: vec![TaskSpec {
            agent_id: "h1".into(),
            task: "Push the cart across the corridor.".into(),
            key_areas: vec!["Hall".into()],
        }],
        agents: vec![AgentSpec {
            id: "h1".into(),
            role: "porter".into(),
            behavior: Behavior::Regular,
            speed,
            path: vec!["B2".into(), "L2".into()],
            loop_path: true,
        }],
    }
}

#[test]
fn feedback_snapshot() {
    let (result, log) = fixture_result();
    check_golden("feedback.txt", &render_feedback(&result, &log));
}

#[test]
fn feedback_flags_timeout() {
    let (result, mut log) = fixture_result();
    log.robot.reached_goal = false;
    log.robot.t_goal = None;
    let text = render_feedback(&result, &log);
    assert!(text.contains("NOT reached"), "{text}");
    assert!(text.contains("timed out"), "{text}");
}

#[test]
fn feedback_contains_objective_value() {
    let (mut result, log) = fixture_result();
    result.objective_value = 0.8;
    let text = render_feedback(&result, &log);
    assert!(text.contains("DTO"), "{text}");
    assert!(text.contains("0.8"), "{text}");
}

#[test]
fn memory_snapshot() {
    let (result, _) = fixture_result();
    let records = vec![
        ScenarioRecord {
            index: 0,
            description: "Morning rush: three packers crowd the aisle.".into(),
            configs: vec![ConfigOutcome::Completed {
                config: fixture_config(1.2),
                result: result.clone(),
            }],
            best_index: Some(0),
            feedback_texts: vec![],
        },
        ScenarioRecord {
            index: 1,
            description: "A forklift drill blocks the main corridor.".into(),
            configs: vec![
                ConfigOutcome::Failed {
                    reason: "bad json".into(),
                },
                ConfigOutcome::Completed {
                    config: fixture_config(0.9),
                    result,
                },
            ],
            best_index: Some(1),
            feedback_texts: vec![],
        },
    ];
    let rendered = render_memory(&records);
    // Blocks appear in generation order.
    let first = rendered.find("Scenario 1").unwrap();
    let second = rendered.find("Scenario 2").unwrap();
    assert!(first < second);
    check_golden("memory.txt", &rendered);
}

#[test]
fn validity_fragment_snapshot() {
    let report = ValidityReport::from_issues(vec![
        ValidityIssue {
            subject: "h1".into(),
            rule: "obstructed waypoint".into(),
            message: "waypoint E5 is blocked or too close to an obstacle".into(),
        },
        ValidityIssue {
            subject: "tasks[0]".into(),
            rule: "unknown area".into(),
            message: "key area \"Packing\" does not exist in the environment".into(),
        },
    ]);
    check_golden("validity_fragment.txt", &report_to_prompt_fragment(&report));
}
