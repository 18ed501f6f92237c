//! End-to-end campaign tests against the scripted backend: protocol shape,
//! memory injection, determinism, crash/resume, fault injection, and the
//! unguided baseline mode.

mod common;

use common::*;
use forge_core::campaign::{
    Campaign, CampaignError, ConfigOutcome, MemoryStore, Requirement, RunOptions, ScenarioOutcome,
};
use forge_core::llm::{Conversation, Role, ScriptEntry};
use forge_core::prompt::{render_memory, TriggerPolicy};
use std::collections::BTreeMap;
use std::path::Path;

fn policy(feedback: usize, memory: usize) -> TriggerPolicy {
    TriggerPolicy {
        feedback_budget: feedback,
        memory_budget: memory,
    }
}

fn transcript(dir: &Path, scenario: usize) -> Conversation {
    let path = dir.join(format!("scenario_{scenario}/transcript.json"));
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// All artifact files under a campaign directory, keyed by relative path.
fn artifact_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let entry = entry.unwrap();
            let path = entry.path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

#[test]
fn full_campaign_protocol() {
    let tmp = tempfile::tempdir().unwrap();
    let pol = policy(4, 10);
    let script = write_script(tmp.path(), "script.json", &full_script(pol, false));
    let cfg = hall_campaign(tmp.path(), &script, Requirement::R1Collision, pol);
    let campaign = Campaign::new(cfg).unwrap();
    let out = tmp.path().join("out");
    let result = campaign.run(&out).unwrap();

    // 10 scenarios x 5 configurations = 50 simulation runs.
    let records = result.completed_records();
    assert_eq!(records.len(), 10);
    let mut runs = 0;
    for record in &records {
        assert_eq!(record.configs.len(), 5);
        assert_eq!(record.feedback_texts.len(), 5);
        runs += record.configs.iter().filter(|c| c.is_completed()).count();
        assert!(record.best_index.is_some());
    }
    assert_eq!(runs, 50);

    // Memory store persisted with 10 entries in generation order.
    let store = MemoryStore::load(&out.join("memory.json")).unwrap();
    assert_eq!(store.len(), 10);
    for (k, record) in store.records().iter().enumerate() {
        assert_eq!(record.index, k);
    }

    // The P2 injection of scenario k equals render_memory over records 0..k.
    for k in 1..10 {
        let conv = transcript(&out, k);
        let first_user = conv
            .messages
            .iter()
            .find(|m| m.role == Role::User)
            .unwrap();
        let expected = render_memory(&store.records()[..k]);
        assert!(
            first_user.text.contains(&expected),
            "scenario {k} transcript lacks the rendered memory block"
        );
    }

    // Conservation of turns: the script is consumed exactly.
    let mut assistant_turns = 0;
    for k in 0..10 {
        assistant_turns += transcript(&out, k)
            .messages
            .iter()
            .filter(|m| m.role == Role::Assistant)
            .count();
    }
    assert_eq!(assistant_turns, 10 * (5 + 4 * 3));

    // Per-run artifacts exist.
    for k in 0..10 {
        for j in 0..5 {
            for file in [
                format!("scenario_{k}/config_{j}.json"),
                format!("scenario_{k}/log_{j}.json"),
                format!("scenario_{k}/metrics_{j}.json"),
            ] {
                assert!(out.join(&file).exists(), "{file} missing");
            }
        }
    }
    assert!(out.join("extremes.json").exists());
    assert!(out.join("diversity.json").exists());
}

#[test]
fn campaign_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let pol = policy(2, 3);
    let script = write_script(tmp.path(), "script.json", &full_script(pol, false));
    let cfg = hall_campaign(tmp.path(), &script, Requirement::R2Stability, pol);

    let campaign = Campaign::new(cfg.clone()).unwrap();
    campaign.run(tmp.path().join("a")).unwrap();
    let campaign = Campaign::new(cfg).unwrap();
    campaign.run(tmp.path().join("b")).unwrap();

    let a = artifact_bytes(&tmp.path().join("a"));
    let b = artifact_bytes(&tmp.path().join("b"));
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (file, bytes) in &a {
        assert_eq!(bytes, &b[file], "{file} differs between identical runs");
    }
}

#[test]
fn crash_resume_reproduces_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let pol = policy(2, 5);
    let script = write_script(tmp.path(), "script.json", &full_script(pol, false));
    let cfg = hall_campaign(tmp.path(), &script, Requirement::R1Collision, pol);

    // Uninterrupted reference run.
    let campaign = Campaign::new(cfg.clone()).unwrap();
    campaign.run(tmp.path().join("ref")).unwrap();

    // Interrupted run: stop after 2 scenarios, leave a partial third, resume.
    let out = tmp.path().join("resumed");
    let campaign = Campaign::new(cfg.clone()).unwrap();
    campaign
        .run_with_options(
            &out,
            RunOptions {
                stop_after_scenarios: Some(2),
            },
        )
        .unwrap();
    assert!(!out.join("scenario_2").exists());
    // Simulate a crash that left partial scenario artifacts behind.
    std::fs::create_dir_all(out.join("scenario_2")).unwrap();
    std::fs::write(out.join("scenario_2/turn_0.json"), b"{stale}").unwrap();

    let campaign = Campaign::new(cfg).unwrap();
    let result = campaign.run(&out).unwrap();
    assert_eq!(result.completed_records().len(), 5);

    let reference = artifact_bytes(&tmp.path().join("ref"));
    let resumed = artifact_bytes(&out);
    assert_eq!(
        reference.keys().collect::<Vec<_>>(),
        resumed.keys().collect::<Vec<_>>()
    );
    for (file, bytes) in &reference {
        assert_eq!(bytes, &resumed[file], "{file} differs after resume");
    }
}

#[test]
fn malformed_reply_fails_single_config() {
    let tmp = tempfile::tempdir().unwrap();
    let pol = policy(4, 10);
    let mut entries = Vec::new();
    for scenario in 0..pol.memory_budget {
        let diversity = scenario > 0;
        let mut scenario_script =
            scenario_entries(scenario, pol.feedback_budget, diversity, |config| {
                crossing_config(scenario, config)
            });
        if scenario == 5 {
            // Break config 2's JSON turn (entry offset: 5 initial + 3 covers
            // config 1; config 2's P7 is at offset 5 + 3 + 3 - 1 = 10).
            scenario_script[10] = ScriptEntry::expect("single JSON object", "NOT { JSON ]");
            // The campaign then asks for one revision and one retry.
            scenario_script.insert(
                11,
                ScriptEntry::expect("Detected configuration problems", "Sorry, revising."),
            );
            scenario_script.insert(
                12,
                ScriptEntry::expect("single JSON object", "STILL NOT JSON"),
            );
        }
        entries.extend(scenario_script);
    }
    let script = write_script(tmp.path(), "script.json", &entries);
    let cfg = hall_campaign(tmp.path(), &script, Requirement::R1Collision, pol);
    let campaign = Campaign::new(cfg).unwrap();
    let out = tmp.path().join("out");
    let result = campaign.run(&out).unwrap();

    let records = result.completed_records();
    assert_eq!(records.len(), 10);
    let completed: usize = records
        .iter()
        .map(|r| r.configs.iter().filter(|c| c.is_completed()).count())
        .sum();
    assert_eq!(completed, 49);

    let broken = &records[5];
    match &broken.configs[2] {
        ConfigOutcome::Failed { reason } => {
            assert!(reason.contains("Detected configuration problems"), "{reason}");
        }
        other => panic!("expected failed config, got {other:?}"),
    }
    // The sentinel keeps the failed config out of the best slot.
    assert_ne!(broken.best_index, Some(2));
    assert_eq!(
        broken.configs[2].objective(Requirement::R1Collision),
        f64::INFINITY
    );
    // The rest of the report is intact.
    assert!(out.join("extremes.json").exists());
    assert!(MemoryStore::load(&out.join("memory.json")).unwrap().len() == 10);
}

#[test]
fn revision_round_trip_recovers_bad_config() {
    let tmp = tempfile::tempdir().unwrap();
    let pol = policy(0, 1);
    // The first JSON reply uses an obstructed waypoint (F7 sits inside the
    // crate); the revision retry fixes it.
    let bad = r#"{"scenario_description":"x",
        "tasks":[{"agent_id":"w","task":"cross","key_areas":["Hall"]}],
        "agents":[{"id":"w","behavior":"regular","speed":1.0,"path":["F7","L4"],"loop":true}]}"#;
    let mut entries = scenario_entries(0, 0, false, |_| bad.to_string());
    entries.push(ScriptEntry::expect(
        "obstructed waypoint",
        "Replacing the blocked waypoint.",
    ));
    entries.push(ScriptEntry::expect(
        "single JSON object",
        crossing_config(0, 0),
    ));
    let script = write_script(tmp.path(), "script.json", &entries);
    let cfg = hall_campaign(tmp.path(), &script, Requirement::R1Collision, pol);
    let campaign = Campaign::new(cfg).unwrap();
    let out = tmp.path().join("out");
    let result = campaign.run(&out).unwrap();

    let records = result.completed_records();
    assert_eq!(records.len(), 1);
    assert!(records[0].configs[0].is_completed());
    // The transcript shows the extra revision turns.
    let conv = transcript(&out, 0);
    let texts: Vec<&str> = conv.messages.iter().map(|m| m.text.as_str()).collect();
    assert!(texts
        .iter()
        .any(|t| t.contains("Detected configuration problems")));
    assert_eq!(
        conv.messages
            .iter()
            .filter(|m| m.role == Role::Assistant)
            .count(),
        7
    );
}

#[test]
fn llm_exhaustion_fails_scenario_but_campaign_continues() {
    let tmp = tempfile::tempdir().unwrap();
    let pol = policy(0, 3);
    // Only enough replies for the first two scenarios.
    let mut entries = Vec::new();
    for scenario in 0..2 {
        entries.extend(scenario_entries(scenario, 0, scenario > 0, |config| {
            crossing_config(scenario, config)
        }));
    }
    let script = write_script(tmp.path(), "script.json", &entries);
    let cfg = hall_campaign(tmp.path(), &script, Requirement::R3Efficiency, pol);
    let campaign = Campaign::new(cfg).unwrap();
    let out = tmp.path().join("out");
    let result = campaign.run(&out).unwrap();

    assert_eq!(result.completed_records().len(), 2);
    let failed: Vec<_> = result
        .scenarios
        .iter()
        .filter_map(|s| match s {
            ScenarioOutcome::Failed { index, reason } => Some((*index, reason.clone())),
            _ => None,
        })
        .collect();
    assert_eq!(failed.len(), 1);
    assert_eq!(failed[0].0, 2);
    assert!(failed[0].1.contains("script exhausted"), "{}", failed[0].1);
    assert!(out.join("scenario_2/failed.json").exists());
}

#[test]
fn unguided_mode_uses_initial_prompt_only() {
    let tmp = tempfile::tempdir().unwrap();
    let pol = policy(4, 3);
    let script = write_script(tmp.path(), "script.json", &full_script(pol, true));
    let mut cfg = hall_campaign(tmp.path(), &script, Requirement::R1Collision, pol);
    cfg.unguided = true;
    let campaign = Campaign::new(cfg).unwrap();
    let out = tmp.path().join("out");
    let result = campaign.run(&out).unwrap();

    // One configuration per scenario, no feedback rounds.
    let records = result.completed_records();
    assert_eq!(records.len(), 3);
    for record in &records {
        assert_eq!(record.configs.len(), 1);
    }
    // Every conversation used the initial prompt; no memory injection.
    for k in 0..3 {
        let conv = transcript(&out, k);
        for msg in conv.messages.iter().filter(|m| m.role == Role::User) {
            assert!(!msg.text.contains("Historical Scenario Memory"));
        }
    }
}

#[test]
fn repeat_experiment_produces_distinct_seeds_and_variation() {
    let tmp = tempfile::tempdir().unwrap();
    let pol = policy(1, 2);
    let script = write_script(tmp.path(), "script.json", &full_script(pol, false));
    let cfg = hall_campaign(tmp.path(), &script, Requirement::R1Collision, pol);
    let campaign = Campaign::new(cfg).unwrap();
    let out = tmp.path().join("out");
    let result = campaign.run(&out).unwrap();

    let records = result.completed_records();
    let repeats_dir = out.join("repeats/best");
    let results = campaign
        .repeat_experiment(records[0], 10, 1000, Some(&repeats_dir))
        .unwrap();
    assert_eq!(results.len(), 10);
    let seeds: std::collections::BTreeSet<u64> = results.iter().map(|r| r.seed).collect();
    assert_eq!(seeds.len(), 10);
    assert_eq!(*seeds.iter().next().unwrap(), 1000);
    // Seed jitter must actually move the objective.
    let values: std::collections::BTreeSet<String> = results
        .iter()
        .map(|r| format!("{:.12}", r.objective_value))
        .collect();
    assert!(values.len() > 1, "all repeats produced identical objectives");
    for i in 0..10 {
        assert!(repeats_dir.join(format!("run_{i}.json")).exists());
    }

    // Same seed reproduces the original run's objective exactly.
    let original = records[0].best().unwrap();
    let replay = campaign
        .repeat_experiment(records[0], 1, original.result.seed, None)
        .unwrap();
    assert_eq!(replay[0].objective_value, original.result.objective_value);
    assert_eq!(replay[0].metric_report, original.result.metric_report);
}

#[test]
fn mismatched_config_rejected_on_resume() {
    let tmp = tempfile::tempdir().unwrap();
    let pol = policy(0, 1);
    let script = write_script(tmp.path(), "script.json", &full_script(pol, false));
    let cfg = hall_campaign(tmp.path(), &script, Requirement::R1Collision, pol);
    let out = tmp.path().join("out");
    Campaign::new(cfg.clone()).unwrap().run(&out).unwrap();

    let mut altered = cfg;
    altered.seed = 999;
    let err = Campaign::new(altered).unwrap().run(&out).unwrap_err();
    assert!(matches!(err, CampaignError::ConfigMismatch { .. }));
}
