//! Requirement-driven test scenario generation for autonomous mobile robot
//! navigation.
//!
//! The crate drives a multi-turn conversation with a language-model backend
//! to synthesize human-behavior configurations aimed at violating a
//! functional or safety requirement, executes them in an embedded 2D
//! social-force simulator, scores them with objective, performance and
//! diversity metrics, and iterates through feedback and memory loops. A
//! statistics module compares repeated executions of the best and worst
//! scenarios.

pub mod campaign;
pub mod config;
pub mod env;
pub mod geom;
pub mod llm;
pub mod metrics;
pub mod prompt;
pub mod sim;
pub mod stats;

pub use campaign::{Campaign, CampaignConfig, CampaignResult, Requirement, RunResult, ScenarioRecord};
pub use config::{HumanConfiguration, ValidityReport};
pub use env::{EnvironmentModel, Route};
pub use geom::{Rect, Vec2};
pub use metrics::{DiversityReport, MetricReport};
pub use sim::{SimParams, TrajectoryLog};
