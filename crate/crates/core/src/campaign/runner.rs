//! The campaign runner: scenario loop, feedback loop, persistence, resume,
//! and repeat experiments.
//!
//! Output directory layout:
//!
//! ```text
//! campaign.json
//! scenario_<k>/{turn_<n>.json, transcript.json, config_<j>.json,
//!               log_<j>.json, metrics_<j>.json [, failed.json]}
//! memory.json
//! extremes.json
//! diversity.json
//! repeats/{best,worst}/run_<i>.json (+ run_<i>_log.json)
//! ```

use super::{
    io_err, render_violations, CampaignConfig, CampaignError, CampaignResult, ConfigOutcome,
    MemoryStore, RunResult, ScenarioOutcome, ScenarioRecord,
};
use crate::config::{check_validity, decode, report_to_prompt_fragment, HumanConfiguration};
use crate::env::{validate_environment, validate_route, EnvironmentModel, Route};
use crate::llm::{
    load_script, send_turn, BackendKind, ChatBackend, ChatMessage, Conversation, GatewayError,
    HttpChatBackend, ScriptedBackend,
};
use crate::metrics::{ssd, DiversityReport, MetricReport, TokenCountEmbedder};
use crate::prompt::{
    plan_stage, render_feedback, render_memory, PromptFields, PromptLibrary, Stage, TemplateId,
    TriggerPolicy, WorkflowState,
};
use crate::sim::{SimParams, TrajectoryLog};
use serde::Serialize;
use serde_json::json;
use std::path::{Path, PathBuf};

/// Run-time options for [`Campaign::run_with_options`].
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Stop after this many scenarios exist (completed or failed); used to
    /// exercise crash/resume behavior.
    pub stop_after_scenarios: Option<usize>,
}

enum BackendInstance {
    Http(HttpChatBackend),
    Scripted(ScriptedBackend),
}

impl BackendInstance {
    fn build(kind: &BackendKind) -> Result<Self, GatewayError> {
        match kind {
            BackendKind::HttpChat => Ok(BackendInstance::Http(HttpChatBackend::from_env()?)),
            BackendKind::ScriptedMock { script } => {
                Ok(BackendInstance::Scripted(load_script(script)?))
            }
        }
    }

    fn chat(&self) -> &dyn ChatBackend {
        match self {
            BackendInstance::Http(b) => b,
            BackendInstance::Scripted(b) => b,
        }
    }
}

/// A loaded, validated campaign ready to run.
pub struct Campaign {
    config: CampaignConfig,
    env: EnvironmentModel,
    route: Route,
    library: PromptLibrary,
    policy: TriggerPolicy,
}

impl Campaign {
    pub fn new(config: CampaignConfig) -> Result<Self, CampaignError> {
        let env = EnvironmentModel::from_file(&config.environment)?;
        let violations = validate_environment(&env);
        if !violations.is_empty() {
            return Err(CampaignError::EnvInvalid(render_violations(&violations)));
        }
        let route = Route::from_file(&config.route)?;
        let violations = validate_route(&env, &route);
        if !violations.is_empty() {
            return Err(CampaignError::RouteInvalid(render_violations(&violations)));
        }
        let library = match &config.templates_dir {
            Some(dir) => PromptLibrary::from_dir(dir)?,
            None => PromptLibrary::builtin(),
        };
        let policy = config.effective_policy();
        Ok(Campaign {
            config,
            env,
            route,
            library,
            policy,
        })
    }

    pub fn config(&self) -> &CampaignConfig {
        &self.config
    }

    pub fn env(&self) -> &EnvironmentModel {
        &self.env
    }

    pub fn route(&self) -> &Route {
        &self.route
    }

    pub fn effective_policy(&self) -> TriggerPolicy {
        self.policy
    }

    /// Prompt field values shared by every scenario.
    fn base_fields(&self) -> PromptFields {
        let env_desc = format!(
            "{}\n\n{}\n\nValid waypoints (row by row):\n{}",
            self.env.description.map,
            self.env.description.grid,
            self.env.valid_waypoint_listing()
        );
        let route_desc = format!(
            "Route {:?}: {}",
            self.route.name,
            self.route
                .waypoints
                .iter()
                .map(|p| format!("({:.1}, {:.1})", p.x, p.y))
                .collect::<Vec<_>>()
                .join(" -> ")
        );
        PromptFields {
            environment_description: env_desc,
            robot_navigation_route: route_desc,
            requirement: self.config.requirement.text().to_string(),
            feedback: None,
            historical_scenario_memory: None,
        }
    }

    fn seed_for(&self, scenario: usize, config: usize) -> u64 {
        let per_scenario = self.policy.feedback_budget + 1;
        self.config
            .seed
            .wrapping_add((scenario * per_scenario + config) as u64)
    }

    fn scenario_dir(out_dir: &Path, index: usize) -> PathBuf {
        out_dir.join(format!("scenario_{index}"))
    }

    fn failed_marker(&self, out_dir: &Path, index: usize) -> Result<Option<String>, CampaignError> {
        let marker = Self::scenario_dir(out_dir, index).join("failed.json");
        if !marker.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&marker).map_err(io_err(&marker))?;
        let reason = serde_json::from_str::<serde_json::Value>(&text)
            .ok()
            .and_then(|v| v["reason"].as_str().map(String::from))
            .unwrap_or_else(|| "unknown".into());
        Ok(Some(reason))
    }

    /// Assistant turns consumed by the first `scenarios` scenario transcripts;
    /// used to fast-forward a scripted backend on resume.
    fn turns_consumed(&self, out_dir: &Path, scenarios: usize) -> Result<usize, CampaignError> {
        let mut total = 0;
        for index in 0..scenarios {
            let path = Self::scenario_dir(out_dir, index).join("transcript.json");
            if !path.exists() {
                continue;
            }
            let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
            let conv: Conversation =
                serde_json::from_str(&text).map_err(|source| CampaignError::Parse {
                    path: path.display().to_string(),
                    source,
                })?;
            total += conv
                .messages
                .iter()
                .filter(|m| m.role == crate::llm::Role::Assistant)
                .count();
        }
        Ok(total)
    }

    fn write_or_check_config(&self, out_dir: &Path) -> Result<(), CampaignError> {
        let path = out_dir.join("campaign.json");
        let current = serde_json::to_value(&self.config).expect("config serializes");
        if path.exists() {
            let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
            let existing: serde_json::Value =
                serde_json::from_str(&text).map_err(|source| CampaignError::Parse {
                    path: path.display().to_string(),
                    source,
                })?;
            if existing != current {
                return Err(CampaignError::ConfigMismatch {
                    path: path.display().to_string(),
                });
            }
            return Ok(());
        }
        write_json(&path, &self.config)
    }

    pub fn run(&self, out_dir: impl AsRef<Path>) -> Result<CampaignResult, CampaignError> {
        self.run_with_options(out_dir, RunOptions::default())
    }

    pub fn run_with_options(
        &self,
        out_dir: impl AsRef<Path>,
        options: RunOptions,
    ) -> Result<CampaignResult, CampaignError> {
        let out_dir = out_dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&out_dir).map_err(io_err(&out_dir))?;
        self.write_or_check_config(&out_dir)?;

        let backend = BackendInstance::build(&self.config.backend)?;

        // Resume: completed and failed scenarios form a contiguous prefix.
        let memory_path = out_dir.join("memory.json");
        let mut store = if memory_path.exists() {
            MemoryStore::load(&memory_path)?
        } else {
            MemoryStore::default()
        };
        let mut outcomes: Vec<ScenarioOutcome> = Vec::new();
        let mut resume_at = 0;
        for index in 0..self.policy.memory_budget {
            if let Some(record) = store.records().iter().find(|r| r.index == index) {
                outcomes.push(ScenarioOutcome::Completed(record.clone()));
                resume_at = index + 1;
            } else if let Some(reason) = self.failed_marker(&out_dir, index)? {
                outcomes.push(ScenarioOutcome::Failed { index, reason });
                resume_at = index + 1;
            } else {
                break;
            }
        }
        if let BackendInstance::Scripted(scripted) = &backend {
            let consumed = self.turns_consumed(&out_dir, resume_at)?;
            scripted.skip(consumed);
        }

        for index in resume_at..self.policy.memory_budget {
            if let Some(limit) = options.stop_after_scenarios {
                if index >= limit {
                    return Ok(CampaignResult {
                        config: self.config.clone(),
                        out_dir,
                        scenarios: outcomes,
                    });
                }
            }
            log::info!("scenario {index}: starting");
            match self.run_scenario(backend.chat(), &out_dir, &store, index)? {
                Ok(record) => {
                    log::info!(
                        "scenario {index}: done, best objective {}",
                        record.best_objective(self.config.requirement)
                    );
                    store.append(record.clone());
                    store.save(&memory_path)?;
                    outcomes.push(ScenarioOutcome::Completed(record));
                }
                Err(reason) => {
                    log::warn!("scenario {index}: failed ({reason}); continuing");
                    let dir = Self::scenario_dir(&out_dir, index);
                    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
                    write_json(
                        &dir.join("failed.json"),
                        &json!({"index": index, "reason": reason}),
                    )?;
                    outcomes.push(ScenarioOutcome::Failed { index, reason });
                }
            }
        }

        if store.len() >= 2 {
            let refs: Vec<&ScenarioRecord> = store.records().iter().collect();
            let extremes = super::select_extremes(&refs, self.config.requirement)?;
            write_json(&out_dir.join("extremes.json"), &extremes)?;
        }
        if !store.is_empty() {
            let diversity = self.diversity_report(&out_dir, &store)?;
            write_json(&out_dir.join("diversity.json"), &diversity)?;
        }

        Ok(CampaignResult {
            config: self.config.clone(),
            out_dir,
            scenarios: outcomes,
        })
    }

    /// One scenario: the initial (or diversity) conversation plus the
    /// feedback-optimization rounds. Hard errors (I/O) abort the campaign;
    /// backend failures fail the scenario only.
    fn run_scenario(
        &self,
        backend: &dyn ChatBackend,
        out_dir: &Path,
        store: &MemoryStore,
        index: usize,
    ) -> Result<Result<ScenarioRecord, String>, CampaignError> {
        let dir = Self::scenario_dir(out_dir, index);
        if dir.exists() {
            // Partial remnants from an interrupted run are redone from scratch.
            std::fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
        }
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;

        let mut fields = self.base_fields();
        let diversity_stage = !self.config.unguided && index > 0;
        if diversity_stage {
            fields.historical_scenario_memory = Some(render_memory(store.records()));
        }

        let mut conv = Conversation::new(&self.config.model_id);
        let mut turn = 0usize;

        let mut send = |conv: &mut Conversation,
                        label: &str,
                        text: String|
         -> Result<Result<String, String>, CampaignError> {
            let msg = ChatMessage::user(text);
            let prompt_json = serde_json::to_value(&msg).unwrap();
            match send_turn(backend, conv, msg) {
                Ok(reply) => {
                    write_json(
                        &dir.join(format!("turn_{turn}.json")),
                        &json!({
                            "turn": turn,
                            "template": label,
                            "prompt": prompt_json,
                            "reply": serde_json::to_value(&reply).unwrap(),
                        }),
                    )?;
                    conv.save(dir.join("transcript.json"))?;
                    turn += 1;
                    Ok(Ok(reply.text))
                }
                Err(GatewayError::Io { path, source }) => Err(CampaignError::Io { path, source }),
                Err(e) => Ok(Err(e.to_string())),
            }
        };

        let mut description = String::new();
        let mut configs: Vec<ConfigOutcome> = Vec::new();
        let mut feedback_texts: Vec<String> = Vec::new();

        for config_index in 0..=self.policy.feedback_budget {
            let stage = if config_index > 0 {
                Stage::FeedbackOpt
            } else if diversity_stage {
                Stage::Diversity
            } else {
                Stage::Initial
            };
            let state = WorkflowState {
                stage,
                scenario_index: index,
                config_index,
            };
            let sequence = plan_stage(&state, &self.policy);

            let mut json_reply = String::new();
            for &id in sequence {
                let text = self.library.fill(id, &fields)?;
                match send(&mut conv, &id.to_string(), text)? {
                    Ok(reply) => {
                        if matches!(id, TemplateId::P1Scenario | TemplateId::P2DiverseScenario) {
                            description = reply.clone();
                        }
                        if id == TemplateId::P7JsonOutput {
                            json_reply = reply;
                        }
                    }
                    Err(reason) => return Ok(Err(reason)),
                }
            }

            let mut accepted = self.decode_and_validate(&json_reply);
            if let Err(problem) = &accepted {
                // One automatic revision round-trip, then give up on this config.
                let revision = format!(
                    "{}\n\n{}",
                    self.library.fill(TemplateId::P6ValidityCheck, &fields)?,
                    problem
                );
                match send(&mut conv, "p6_revision", revision)? {
                    Ok(_) => {}
                    Err(reason) => return Ok(Err(reason)),
                }
                let retry = self.library.fill(TemplateId::P7JsonOutput, &fields)?;
                match send(&mut conv, "p7_retry", retry)? {
                    Ok(reply) => accepted = self.decode_and_validate(&reply),
                    Err(reason) => return Ok(Err(reason)),
                }
            }

            let feedback = match accepted {
                Ok(config) => {
                    let seed = self.seed_for(index, config_index);
                    let params = SimParams {
                        seed,
                        ..self.config.sim
                    };
                    let log = crate::sim::run(&self.env, &self.route, &config, &params)?;
                    let rel_log = format!("scenario_{index}/log_{config_index}.json");
                    log.save(out_dir.join(&rel_log))
                        .map_err(io_err(&out_dir.join(&rel_log)))?;
                    let obstacles: Vec<_> = self.env.obstacles.iter().map(|o| o.shape).collect();
                    let report = MetricReport::compute(&log, &obstacles);
                    write_json(
                        &dir.join(format!("metrics_{config_index}.json")),
                        &report,
                    )?;
                    write_json(&dir.join(format!("config_{config_index}.json")), &config)?;
                    let result = RunResult {
                        trajectory_path: rel_log,
                        objective_name: self.config.requirement.objective_name().to_string(),
                        objective_value: self.config.requirement.objective_of(&report),
                        metric_report: report,
                        seed,
                    };
                    let feedback = render_feedback(&result, &log);
                    configs.push(ConfigOutcome::Completed { config, result });
                    feedback
                }
                Err(problem) => {
                    configs.push(ConfigOutcome::Failed {
                        reason: problem.clone(),
                    });
                    format!(
                        "The previous configuration could not be executed.\n{problem}\n\
                         Produce a corrected configuration that follows every rule \
                         (valid waypoints, feasible segments, exact JSON schema)."
                    )
                }
            };
            feedback_texts.push(feedback.clone());
            fields.feedback = Some(feedback);
        }

        let requirement = self.config.requirement;
        let mut best_index: Option<usize> = None;
        for (i, outcome) in configs.iter().enumerate() {
            if !outcome.is_completed() {
                continue;
            }
            let objective = outcome.objective(requirement);
            match best_index {
                None => best_index = Some(i),
                Some(b) if requirement.more_violating(objective, configs[b].objective(requirement)) => {
                    best_index = Some(i)
                }
                _ => {}
            }
        }

        Ok(Ok(ScenarioRecord {
            index,
            description,
            configs,
            best_index,
            feedback_texts,
        }))
    }

    /// Decode a P7 reply and run the mechanical validity check; the error
    /// carries the text embedded into the revision turn.
    fn decode_and_validate(&self, json_text: &str) -> Result<HumanConfiguration, String> {
        match decode(json_text, &self.env) {
            Ok(outcome) => {
                for warning in &outcome.warnings {
                    log::warn!("{warning}");
                }
                let report = check_validity(&outcome.config, &self.env);
                if report.ok {
                    Ok(outcome.config)
                } else {
                    Err(report_to_prompt_fragment(&report))
                }
            }
            Err(e) => Err(format!("Detected configuration problems:\n1. {e}")),
        }
    }

    fn diversity_report(
        &self,
        out_dir: &Path,
        store: &MemoryStore,
    ) -> Result<DiversityReport, CampaignError> {
        let descriptions: Vec<String> = store
            .records()
            .iter()
            .map(|r| r.description.clone())
            .collect();
        let mut task_texts = Vec::new();
        let mut best_logs = Vec::new();
        for record in store.records() {
            if let Some(best) = record.best() {
                task_texts.extend(best.config.tasks.iter().map(|t| t.task.clone()));
                let path = out_dir.join(&best.result.trajectory_path);
                if path.exists() {
                    best_logs.push(TrajectoryLog::load(&path)?);
                }
            }
        }
        let htd_values = crate::metrics::htd(&task_texts);
        let ssd_value = if best_logs.len() >= 2 {
            ssd(&best_logs).unwrap_or(0.0)
        } else {
            0.0
        };
        Ok(DiversityReport {
            sdd: crate::metrics::sdd(&descriptions, &TokenCountEmbedder),
            htd: htd_values.normalized,
            htd_raw: htd_values.raw,
            ssd: ssd_value,
        })
    }

    /// Re-run a scenario's best configuration `n` times with seeds
    /// `base_seed..base_seed + n`, optionally persisting
    /// `run_<i>.json` / `run_<i>_log.json` under `out_dir`.
    pub fn repeat_experiment(
        &self,
        record: &ScenarioRecord,
        n: usize,
        base_seed: u64,
        out_dir: Option<&Path>,
    ) -> Result<Vec<RunResult>, CampaignError> {
        let best = record.best().ok_or(CampaignError::NoCompletedConfig {
            index: record.index,
        })?;
        if let Some(dir) = out_dir {
            std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        let obstacles: Vec<_> = self.env.obstacles.iter().map(|o| o.shape).collect();
        let mut results = Vec::with_capacity(n);
        for i in 0..n {
            let seed = base_seed.wrapping_add(i as u64);
            let params = SimParams {
                seed,
                ..self.config.sim
            };
            let log = crate::sim::run(&self.env, &self.route, best.config, &params)?;
            let report = MetricReport::compute(&log, &obstacles);
            let trajectory_path = match out_dir {
                Some(dir) => {
                    let log_path = dir.join(format!("run_{i}_log.json"));
                    log.save(&log_path).map_err(io_err(&log_path))?;
                    log_path.display().to_string()
                }
                None => String::new(),
            };
            let result = RunResult {
                trajectory_path,
                objective_name: self.config.requirement.objective_name().to_string(),
                objective_value: self.config.requirement.objective_of(&report),
                metric_report: report,
                seed,
            };
            if let Some(dir) = out_dir {
                write_json(&dir.join(format!("run_{i}.json")), &result)?;
            }
            results.push(result);
        }
        Ok(results)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CampaignError> {
    let text = serde_json::to_string_pretty(value).expect("serializes");
    std::fs::write(path, text).map_err(io_err(path))
}
