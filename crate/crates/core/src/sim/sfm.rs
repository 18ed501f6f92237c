//! Social-force dynamics for human agents.
//!
//! Standard Helbing form: a goal-attraction relaxation term plus exponential
//! repulsions from other agents and obstacles, with per-behavior modifiers
//! that change how an agent reacts to the robot.

use crate::config::Behavior;
use crate::geom::{Rect, Vec2};
use crate::sim::SimParams;
use std::hash::{Hash, Hasher};

/// Distance at which curious/scared agents start reacting to the robot.
pub const BEHAVIOR_AWARENESS_RADIUS: f64 = 4.0;

/// How far ahead of the robot a threatening agent aims on the robot's
/// planned segment.
pub const THREAT_LEAD_DISTANCE: f64 = 1.0;

/// Another agent as seen by the force model.
#[derive(Debug, Clone)]
pub struct NeighborView {
    pub id: String,
    pub pos: Vec2,
    pub radius: f64,
}

/// The robot as seen by the force model.
#[derive(Debug, Clone, Copy)]
pub struct RobotView {
    pub pos: Vec2,
    pub radius: f64,
    /// Unit direction of the robot's current route segment, when moving.
    pub segment_dir: Option<Vec2>,
}

/// The agent whose acceleration is being computed.
#[derive(Debug, Clone)]
pub struct AgentView<'a> {
    pub id: &'a str,
    pub pos: Vec2,
    pub vel: Vec2,
    pub radius: f64,
    pub desired_speed: f64,
    /// Current goal waypoint; `None` holds position.
    pub goal: Option<Vec2>,
    pub behavior: Behavior,
}

/// Deterministic unit vector for coincident bodies, derived from the run seed
/// and both ids.
pub fn tie_break_dir(seed: u64, a: &str, b: &str) -> Vec2 {
    let mut hasher = std::collections::hash_map::DefaultHasher::new();
    seed.hash(&mut hasher);
    a.hash(&mut hasher);
    b.hash(&mut hasher);
    let h = hasher.finish();
    let angle = (h % 62832) as f64 / 10000.0; // [0, 2*pi)
    Vec2::from_angle(angle)
}

fn separation_dir(seed: u64, from: Vec2, to_self: Vec2, id_a: &str, id_b: &str) -> (f64, Vec2) {
    let delta = to_self - from;
    match delta.try_normalize() {
        Some(n) => (delta.norm(), n),
        None => (0.0, tie_break_dir(seed, id_a, id_b)),
    }
}

/// Total social-force acceleration on one agent.
pub fn sfm_force(
    agent: &AgentView,
    neighbors: &[NeighborView],
    robot: Option<&RobotView>,
    obstacles: &[Rect],
    params: &SimParams,
    seed: u64,
) -> Vec2 {
    let sfm = &params.sfm;

    // Behavior-adjusted goal seeking.
    let robot_near = robot
        .map(|r| agent.pos.distance(r.pos) <= BEHAVIOR_AWARENESS_RADIUS)
        .unwrap_or(false);
    let desired_vel = match (agent.behavior, robot) {
        (Behavior::Curious, Some(r)) if robot_near => (r.pos - agent.pos)
            .try_normalize()
            .map(|d| d * agent.desired_speed)
            .unwrap_or(Vec2::ZERO),
        (Behavior::Scared, Some(r)) if robot_near => (agent.pos - r.pos)
            .try_normalize()
            .map(|d| d * agent.desired_speed)
            .unwrap_or(Vec2::ZERO),
        (Behavior::Threatening, Some(r)) => {
            let lead = r
                .segment_dir
                .map(|d| r.pos + d * THREAT_LEAD_DISTANCE)
                .unwrap_or(r.pos);
            (lead - agent.pos)
                .try_normalize()
                .map(|d| d * agent.desired_speed)
                .unwrap_or(Vec2::ZERO)
        }
        _ => match agent.goal {
            Some(goal) => (goal - agent.pos)
                .try_normalize()
                .map(|d| d * agent.desired_speed)
                .unwrap_or(Vec2::ZERO),
            None => Vec2::ZERO,
        },
    };
    let mut force = (desired_vel - agent.vel) / sfm.tau;

    // Repulsion from other humans.
    for other in neighbors {
        if other.id == agent.id {
            continue;
        }
        let (d, n) = separation_dir(seed, other.pos, agent.pos, agent.id, &other.id);
        let mag = sfm.a_social * ((agent.radius + other.radius - d) / sfm.b_social).exp();
        force += n * mag;
    }

    // Repulsion from the robot; scared agents react twice as strongly.
    if let Some(r) = robot {
        let a_robot = match agent.behavior {
            Behavior::Scared => 2.0 * sfm.a_social,
            _ => sfm.a_social,
        };
        let (d, n) = separation_dir(seed, r.pos, agent.pos, agent.id, "robot");
        let mag = a_robot * ((agent.radius + r.radius - d) / sfm.b_social).exp();
        force += n * mag;
    }

    // Repulsion from static obstacles.
    for rect in obstacles {
        let closest = rect.closest_point(agent.pos);
        let (d, n) = if rect.contains(agent.pos) {
            (0.0, separation_dir(seed, rect.center(), agent.pos, agent.id, "obstacle").1)
        } else {
            separation_dir(seed, closest, agent.pos, agent.id, "obstacle")
        };
        let mag = sfm.a_obstacle * ((agent.radius - d) / sfm.b_obstacle).exp();
        force += n * mag;
    }

    force
}
