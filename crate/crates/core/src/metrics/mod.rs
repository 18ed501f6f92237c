//! Objective and performance metrics computed from trajectory logs.
//!
//! All functions are pure; recomputing on a persisted log reproduces the
//! stored report exactly.

mod diversity;

pub use diversity::{
    dtw, htd, levenshtein, sdd, ssd, DiversityReport, Embedder, HtdValues, TokenCountEmbedder,
};

use crate::geom::Rect;
use crate::sim::{Event, EventKind, TrajectoryLog};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Robot speeds below this count as "not moving" for TNM.
pub const TNM_EPS_SPEED: f64 = 0.05;

/// Collision contact must open up by this much before a new event can start.
pub const COLLISION_HYSTERESIS: f64 = 0.05;

/// A robot slower than this at contact onset cannot have initiated the collision.
pub const INITIATOR_MIN_SPEED: f64 = 0.05;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("dynamic time warping requires non-empty sequences")]
    EmptySequence,
}

/// All objective and performance metrics of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Mean distance to the nearest object (m); the R1 objective.
    pub dto: f64,
    /// Mean magnitude of acceleration change per second (m/s^3); the R2 objective.
    pub jerk: f64,
    /// Time to reach the goal (s); the R3 objective.
    pub trg: f64,
    /// Robot-initiated collisions with a person.
    pub rpc: u32,
    /// Cumulative heading change (rad).
    pub chc: f64,
    /// Path length (m).
    pub pl: f64,
    /// Time not moving (s).
    pub tnm: f64,
    /// False when the robot never reached the goal and `trg` reports the
    /// truncated duration instead.
    pub finished: bool,
}

impl MetricReport {
    /// Compute every metric from a log. `obstacles` feeds the DTO object set
    /// in addition to the humans; pass an empty slice for humans-only DTO.
    pub fn compute(log: &TrajectoryLog, obstacles: &[Rect]) -> MetricReport {
        let t = trg(log);
        MetricReport {
            dto: dto_with(log, obstacles),
            jerk: jerk(log),
            trg: t.seconds,
            rpc: rpc_with_radii(log, log.meta.robot_radius, log.meta.agent_radius),
            chc: chc(log),
            pl: pl(log),
            tnm: tnm(log, TNM_EPS_SPEED),
            finished: t.finished,
        }
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        match name {
            "dto" => Some(self.dto),
            "jerk" => Some(self.jerk),
            "trg" => Some(self.trg),
            "rpc" => Some(self.rpc as f64),
            "chc" => Some(self.chc),
            "pl" => Some(self.pl),
            "tnm" => Some(self.tnm),
            _ => None,
        }
    }

    /// Metric names in report order.
    pub const NAMES: [&'static str; 7] = ["dto", "jerk", "trg", "rpc", "chc", "pl", "tnm"];
}

/// Mean over timesteps of the distance from the robot to the nearest object,
/// computed over all humans and the given obstacle rectangles.
pub fn dto(log: &TrajectoryLog, env: &crate::env::EnvironmentModel) -> f64 {
    let rects: Vec<Rect> = env.obstacles.iter().map(|o| o.shape).collect();
    dto_with(log, &rects)
}

/// DTO against humans plus an explicit obstacle set. An empty slice restricts
/// the object set to humans only.
pub fn dto_with(log: &TrajectoryLog, obstacles: &[Rect]) -> f64 {
    let steps = log.steps();
    if steps == 0 {
        return f64::INFINITY;
    }
    let mut total = 0.0;
    for k in 0..steps {
        let robot = log.robot.body.pos[k];
        let mut nearest = f64::INFINITY;
        for (_, series) in log.human_series() {
            nearest = nearest.min(robot.distance(series.pos[k]));
        }
        for rect in obstacles {
            nearest = nearest.min(rect.distance(robot));
        }
        total += nearest;
    }
    total / steps as f64
}

/// Mean magnitude of acceleration change per unit time over the robot series.
pub fn jerk(log: &TrajectoryLog) -> f64 {
    let acc = &log.robot.body.acc;
    if acc.len() < 2 {
        return 0.0;
    }
    let sum: f64 = acc.windows(2).map(|w| (w[1] - w[0]).norm() / log.dt).sum();
    sum / (acc.len() - 1) as f64
}

/// Time to reach the goal; truncated at the end of the log when unfinished.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trg {
    pub seconds: f64,
    pub finished: bool,
}

pub fn trg(log: &TrajectoryLog) -> Trg {
    let start = log.robot.t_start.unwrap_or(0.0);
    match log.robot.t_goal {
        Some(goal) if log.robot.reached_goal => Trg {
            seconds: goal - start,
            finished: true,
        },
        _ => Trg {
            seconds: log.meta.max_time - start,
            finished: false,
        },
    }
}

/// Scan the series for robot/human contacts. A contact opens when the center
/// distance drops below the radius sum and closes once it exceeds the sum plus
/// [`COLLISION_HYSTERESIS`]. The party moving into the other at onset is the
/// initiator: the robot initiates iff its speed exceeds
/// [`INITIATOR_MIN_SPEED`] and its velocity points within 90 degrees of the
/// human.
pub fn collision_events(log: &TrajectoryLog, robot_radius: f64, agent_radius: f64) -> Vec<Event> {
    let contact = robot_radius + agent_radius;
    let mut events = Vec::new();
    for (id, series) in log.human_series() {
        let mut in_contact = false;
        for k in 0..log.steps() {
            let rp = log.robot.body.pos[k];
            let hp = series.pos[k];
            let d = rp.distance(hp);
            if !in_contact && d < contact {
                in_contact = true;
                let rv = log.robot.body.vel[k];
                let toward = hp - rp;
                let robot_initiated = rv.norm() > INITIATOR_MIN_SPEED && rv.dot(toward) > 0.0;
                events.push(Event {
                    time: log.times[k],
                    kind: if robot_initiated {
                        EventKind::CollisionRobotInitiated
                    } else {
                        EventKind::CollisionHumanInitiated
                    },
                    agent_id: Some(id.clone()),
                });
            } else if in_contact && d > contact + COLLISION_HYSTERESIS {
                in_contact = false;
            }
        }
    }
    events.sort_by(|a, b| {
        a.time
            .partial_cmp(&b.time)
            .unwrap()
            .then_with(|| a.agent_id.cmp(&b.agent_id))
    });
    events
}

/// Number of robot-initiated collisions with a person.
pub fn rpc(log: &TrajectoryLog, params: &crate::sim::SimParams) -> u32 {
    rpc_with_radii(log, params.robot_radius, params.agent_radius)
}

pub fn rpc_with_radii(log: &TrajectoryLog, robot_radius: f64, agent_radius: f64) -> u32 {
    collision_events(log, robot_radius, agent_radius)
        .iter()
        .filter(|e| e.kind == EventKind::CollisionRobotInitiated)
        .count() as u32
}

/// Sum of absolute heading changes between successive motion segments of the
/// robot trajectory. Segments shorter than 0.1 mm are skipped.
pub fn chc(log: &TrajectoryLog) -> f64 {
    let mut headings = Vec::new();
    for w in log.robot.body.pos.windows(2) {
        let seg = w[1] - w[0];
        if seg.norm() > 1e-4 {
            headings.push(seg.angle());
        }
    }
    headings
        .windows(2)
        .map(|h| {
            let mut d = h[1] - h[0];
            while d > std::f64::consts::PI {
                d -= 2.0 * std::f64::consts::PI;
            }
            while d < -std::f64::consts::PI {
                d += 2.0 * std::f64::consts::PI;
            }
            d.abs()
        })
        .sum()
}

/// Total distance traveled by the robot.
pub fn pl(log: &TrajectoryLog) -> f64 {
    log.robot.body.pos.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

/// Seconds the robot remains stationary between the start of motion and goal
/// arrival (or the end of the log). The window is open at the start: at
/// `t_start` the first command was just issued and motion materializes over
/// the following step.
pub fn tnm(log: &TrajectoryLog, eps_speed: f64) -> f64 {
    if log.steps() == 0 {
        return 0.0;
    }
    let from = log.robot.t_start.unwrap_or(log.times[0]);
    let to = log
        .robot
        .t_goal
        .unwrap_or_else(|| *log.times.last().unwrap());
    let still = log
        .times
        .iter()
        .zip(&log.robot.body.vel)
        .filter(|(&t, v)| t > from && t <= to && v.norm() < eps_speed)
        .count();
    still as f64 * log.dt
}
