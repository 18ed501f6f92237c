//! Time-series recording of one simulation run.

use crate::geom::Vec2;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// Discrete events observed during a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    CollisionRobotInitiated,
    CollisionHumanInitiated,
    GoalReached,
    Timeout,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent_id: Option<String>,
}

/// Position/velocity/acceleration series for one body. Acceleration is the
/// finite difference of consecutive velocities.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BodySeries {
    pub pos: Vec<Vec2>,
    pub vel: Vec<Vec2>,
    pub acc: Vec<Vec2>,
}

impl BodySeries {
    /// Build a series from positions alone, deriving velocity and
    /// acceleration by finite differences. Handy for fixtures.
    pub fn from_positions(dt: f64, pos: Vec<Vec2>) -> Self {
        let vel: Vec<Vec2> = std::iter::once(Vec2::ZERO)
            .chain(pos.windows(2).map(|w| (w[1] - w[0]) / dt))
            .collect();
        let acc: Vec<Vec2> = std::iter::once(Vec2::ZERO)
            .chain(vel.windows(2).map(|w| (w[1] - w[0]) / dt))
            .collect();
        BodySeries { pos, vel, acc }
    }

    pub fn len(&self) -> usize {
        self.pos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pos.is_empty()
    }
}

/// Robot series plus navigation milestones.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RobotSeries {
    #[serde(flatten)]
    pub body: BodySeries,
    /// Time of the first nonzero velocity command.
    pub t_start: Option<f64>,
    /// Time the final route waypoint was reached.
    pub t_goal: Option<f64>,
    pub reached_goal: bool,
}

/// Run parameters a persisted log must carry so every metric can be
/// recomputed from the file alone.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LogMeta {
    pub agent_radius: f64,
    pub robot_radius: f64,
    pub max_time: f64,
    pub seed: u64,
}

impl Default for LogMeta {
    fn default() -> Self {
        LogMeta {
            agent_radius: 0.3,
            robot_radius: 0.35,
            max_time: 120.0,
            seed: 0,
        }
    }
}

/// Full trajectory record of one run: robot and per-agent series sampled at
/// `dt`, plus events. Series all have the same length and `times[k] = k * dt`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub dt: f64,
    pub times: Vec<f64>,
    pub robot: RobotSeries,
    pub humans: BTreeMap<String, BodySeries>,
    pub events: Vec<Event>,
    #[serde(default)]
    pub meta: LogMeta,
}

impl TrajectoryLog {
    pub fn steps(&self) -> usize {
        self.times.len()
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string(self)
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, self.to_json().expect("log serializes"))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, crate::sim::SimError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| crate::sim::SimError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text).map_err(|source| crate::sim::SimError::Parse {
            path: path.display().to_string(),
            source,
        })
    }

    /// Human series in deterministic (lexicographic id) order.
    pub fn human_series(&self) -> impl Iterator<Item = (&String, &BodySeries)> {
        self.humans.iter()
    }
}
