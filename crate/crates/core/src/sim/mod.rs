//! Deterministic 2D time-stepped simulator: social-force human agents
//! executing a decoded configuration and a waypoint-following robot executing
//! a route, with full trajectory recording.
//!
//! Integration is semi-implicit Euler (velocity, then position) at a fixed
//! timestep. Identical inputs and seed produce bitwise-identical logs.

mod log;
mod robot;
mod sfm;

pub use log::{BodySeries, Event, EventKind, LogMeta, RobotSeries, TrajectoryLog};
pub use robot::{RobotCommand, RobotController};
pub use sfm::{
    sfm_force, tie_break_dir, AgentView, NeighborView, RobotView, BEHAVIOR_AWARENESS_RADIUS,
    THREAT_LEAD_DISTANCE,
};

use crate::config::{check_validity, Behavior, HumanConfiguration};
use crate::env::{EnvironmentModel, Route};
use crate::geom::{Rect, Vec2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("configuration failed validity check: {issues}")]
    InvalidConfiguration { issues: String },
    #[error("route {0:?} needs at least 2 waypoints")]
    DegenerateRoute(String),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to parse {path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
}

/// Social-force coefficients.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct SfmParams {
    /// Relaxation time toward the desired velocity (s).
    pub tau: f64,
    /// Social repulsion strength (m/s^2) and range (m).
    pub a_social: f64,
    pub b_social: f64,
    /// Obstacle repulsion strength (m/s^2) and range (m).
    pub a_obstacle: f64,
    pub b_obstacle: f64,
    /// Hard cap on agent speed (m/s).
    pub v_max: f64,
}

impl Default for SfmParams {
    fn default() -> Self {
        SfmParams {
            tau: 0.5,
            a_social: 2.0,
            b_social: 0.3,
            a_obstacle: 3.0,
            b_obstacle: 0.2,
            v_max: 1.8,
        }
    }
}

/// Robot controller parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct RobotParams {
    pub v_nominal: f64,
    pub safety_stop_dist: f64,
    pub slow_zone: f64,
}

impl Default for RobotParams {
    fn default() -> Self {
        RobotParams {
            v_nominal: 0.6,
            safety_stop_dist: 0.6,
            slow_zone: 1.2,
        }
    }
}

/// All simulation parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct SimParams {
    pub dt: f64,
    pub max_time: f64,
    pub agent_radius: f64,
    pub robot_radius: f64,
    pub goal_tolerance: f64,
    pub sfm: SfmParams,
    pub robot: RobotParams,
    pub seed: u64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            dt: 0.1,
            max_time: 120.0,
            agent_radius: 0.3,
            robot_radius: 0.35,
            goal_tolerance: 0.3,
            sfm: SfmParams::default(),
            robot: RobotParams::default(),
            seed: 0,
        }
    }
}

/// Spawn-time jitter bounds; the seed perturbs where agents start and how
/// fast they want to walk, so repeated runs explore nearby executions.
const SPAWN_POS_JITTER: f64 = 0.05;
const SPEED_JITTER_FRAC: f64 = 0.05;

struct Agent {
    id: String,
    behavior: Behavior,
    desired_speed: f64,
    path: Vec<Vec2>,
    loop_path: bool,
    waypoint_idx: usize,
    pos: Vec2,
    vel: Vec2,
}

impl Agent {
    /// Current goal waypoint; `None` once a non-looping path is finished.
    fn goal(&self, goal_tolerance: f64) -> Option<Vec2> {
        let target = self.path[self.waypoint_idx];
        let at_last = self.waypoint_idx + 1 == self.path.len();
        if at_last && !self.loop_path && self.pos.distance(target) < goal_tolerance {
            None
        } else {
            Some(target)
        }
    }

    fn advance_waypoint(&mut self, goal_tolerance: f64) {
        if self.pos.distance(self.path[self.waypoint_idx]) < goal_tolerance {
            if self.waypoint_idx + 1 < self.path.len() {
                self.waypoint_idx += 1;
            } else if self.loop_path {
                self.waypoint_idx = 0;
            }
        }
    }
}

/// Push a body out of every obstacle it penetrates (inflated by its radius)
/// and zero the inward velocity component along the contact normal.
fn resolve_obstacle_penetration(
    pos: &mut Vec2,
    vel: &mut Vec2,
    radius: f64,
    obstacles: &[Rect],
    seed: u64,
    id: &str,
) {
    for _ in 0..3 {
        let mut touched = false;
        for rect in obstacles {
            let d = rect.distance(*pos);
            if d >= radius {
                continue;
            }
            touched = true;
            let normal = if rect.contains(*pos) {
                // Inside: exit through the nearest face.
                let left = *pos - Vec2::new(rect.min.x, pos.y);
                let right = Vec2::new(rect.max.x, pos.y) - *pos;
                let down = *pos - Vec2::new(pos.x, rect.min.y);
                let up = Vec2::new(pos.x, rect.max.y) - *pos;
                let candidates = [
                    (left.norm(), Vec2::new(-1.0, 0.0)),
                    (right.norm(), Vec2::new(1.0, 0.0)),
                    (down.norm(), Vec2::new(0.0, -1.0)),
                    (up.norm(), Vec2::new(0.0, 1.0)),
                ];
                let (_, n) = candidates
                    .iter()
                    .cloned()
                    .reduce(|a, b| if b.0 < a.0 { b } else { a })
                    .unwrap();
                // Move onto the face before projecting outward.
                let face_point = rect.closest_point(*pos + n * (radius + 1.0));
                *pos = face_point;
                n
            } else {
                (*pos - rect.closest_point(*pos))
                    .try_normalize()
                    .unwrap_or_else(|| tie_break_dir(seed, id, "obstacle"))
            };
            let surface = rect.closest_point(*pos);
            *pos = surface + normal * radius;
            let inward = vel.dot(normal);
            if inward < 0.0 {
                *vel += normal * (-inward);
            }
        }
        if !touched {
            break;
        }
    }
}

/// Execute one simulation run. The configuration must pass
/// [`check_validity`]; invalid configurations are refused.
pub fn run(
    env: &EnvironmentModel,
    route: &Route,
    cfg: &HumanConfiguration,
    params: &SimParams,
) -> Result<TrajectoryLog, SimError> {
    let report = check_validity(cfg, env);
    if !report.ok {
        let issues = report
            .issues
            .iter()
            .map(|i| format!("[{}] {}", i.subject, i.rule))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(SimError::InvalidConfiguration { issues });
    }
    if route.waypoints.len() < 2 {
        return Err(SimError::DegenerateRoute(route.name.clone()));
    }

    let obstacles: Vec<Rect> = env.obstacles.iter().map(|o| o.shape).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let mut agents: Vec<Agent> = Vec::with_capacity(cfg.agents.len());
    for spec in &cfg.agents {
        let path: Vec<Vec2> = spec
            .path
            .iter()
            .map(|label| env.label_to_world(label).expect("validity checked"))
            .collect();
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        let dist = rng.gen::<f64>() * SPAWN_POS_JITTER;
        let speed_factor = 1.0 - SPEED_JITTER_FRAC + 2.0 * SPEED_JITTER_FRAC * rng.gen::<f64>();
        let mut pos = path[0] + Vec2::from_angle(angle) * dist;
        let mut vel = Vec2::ZERO;
        resolve_obstacle_penetration(&mut pos, &mut vel, params.agent_radius, &obstacles, params.seed, &spec.id);
        agents.push(Agent {
            id: spec.id.clone(),
            behavior: spec.behavior,
            desired_speed: (spec.speed * speed_factor).min(params.sfm.v_max),
            waypoint_idx: if path.len() > 1 { 1 } else { 0 },
            path,
            loop_path: spec.loop_path,
            pos,
            vel,
        });
    }

    let mut controller = RobotController::new(route.waypoints.clone());
    let mut robot_pos = controller.start();
    let mut robot_vel = Vec2::ZERO;
    let mut t_start: Option<f64> = None;
    let mut t_goal: Option<f64> = None;
    let mut segment_dir: Option<Vec2> = None;

    let steps = (params.max_time / params.dt).round() as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut robot_series = BodySeries::default();
    let mut human_series: BTreeMap<String, BodySeries> = cfg
        .agents
        .iter()
        .map(|a| (a.id.clone(), BodySeries::default()))
        .collect();
    let mut events: Vec<Event> = Vec::new();

    let record = |t: f64,
                  times: &mut Vec<f64>,
                  robot_series: &mut BodySeries,
                  human_series: &mut BTreeMap<String, BodySeries>,
                  robot_pos: Vec2,
                  robot_vel: Vec2,
                  agents: &[Agent],
                  dt: f64| {
        times.push(t);
        let racc = match robot_series.vel.last() {
            Some(&prev) => (robot_vel - prev) / dt,
            None => Vec2::ZERO,
        };
        robot_series.pos.push(robot_pos);
        robot_series.vel.push(robot_vel);
        robot_series.acc.push(racc);
        for agent in agents {
            let series = human_series.get_mut(&agent.id).unwrap();
            let acc = match series.vel.last() {
                Some(&prev) => (agent.vel - prev) / dt,
                None => Vec2::ZERO,
            };
            series.pos.push(agent.pos);
            series.vel.push(agent.vel);
            series.acc.push(acc);
        }
    };

    let mut t = 0.0;
    record(
        t,
        &mut times,
        &mut robot_series,
        &mut human_series,
        robot_pos,
        robot_vel,
        &agents,
        params.dt,
    );

    for _ in 0..steps {
        if controller.reached {
            break;
        }

        // Synchronous force computation from the state at time t.
        let views: Vec<NeighborView> = agents
            .iter()
            .map(|a| NeighborView {
                id: a.id.clone(),
                pos: a.pos,
                radius: params.agent_radius,
            })
            .collect();
        let robot_view = RobotView {
            pos: robot_pos,
            radius: params.robot_radius,
            segment_dir,
        };
        let forces: Vec<Vec2> = agents
            .iter()
            .map(|a| {
                let view = AgentView {
                    id: &a.id,
                    pos: a.pos,
                    vel: a.vel,
                    radius: params.agent_radius,
                    desired_speed: a.desired_speed,
                    goal: a.goal(params.goal_tolerance),
                    behavior: a.behavior,
                };
                sfm_force(&view, &views, Some(&robot_view), &obstacles, params, params.seed)
            })
            .collect();

        // Robot command from the same snapshot.
        let human_positions: Vec<Vec2> = agents.iter().map(|a| a.pos).collect();
        let cmd = controller.command(robot_pos, &human_positions, &obstacles, params);
        segment_dir = cmd.segment_dir;

        // Integrate agents: velocity then position, with a hard speed cap.
        for (agent, force) in agents.iter_mut().zip(&forces) {
            agent.vel += *force * params.dt;
            let speed = agent.vel.norm();
            if speed > params.sfm.v_max {
                agent.vel = agent.vel * (params.sfm.v_max / speed);
            }
            agent.pos += agent.vel * params.dt;
            resolve_obstacle_penetration(
                &mut agent.pos,
                &mut agent.vel,
                params.agent_radius,
                &obstacles,
                params.seed,
                &agent.id,
            );
            agent.advance_waypoint(params.goal_tolerance);
        }

        // Integrate the robot.
        robot_vel = cmd.velocity;
        if robot_vel.norm() > 0.0 && t_start.is_none() {
            t_start = Some(t);
        }
        robot_pos += robot_vel * params.dt;
        resolve_obstacle_penetration(
            &mut robot_pos,
            &mut robot_vel,
            params.robot_radius,
            &obstacles,
            params.seed,
            "robot",
        );

        t += params.dt;
        // Round accumulated time to the grid so serialized times are stable.
        t = (t / params.dt).round() * params.dt;

        if cmd.lands_on_goal {
            robot_pos = controller.goal();
            controller.reached = true;
            t_goal = Some(t);
        }

        record(
            t,
            &mut times,
            &mut robot_series,
            &mut human_series,
            robot_pos,
            robot_vel,
            &agents,
            params.dt,
        );
    }

    if controller.reached {
        events.push(Event {
            time: t_goal.unwrap(),
            kind: EventKind::GoalReached,
            agent_id: None,
        });
    } else {
        events.push(Event {
            time: t,
            kind: EventKind::Timeout,
            agent_id: None,
        });
    }

    let mut log = TrajectoryLog {
        dt: params.dt,
        times,
        robot: RobotSeries {
            body: robot_series,
            t_start,
            t_goal,
            reached_goal: controller.reached,
        },
        humans: human_series,
        events,
        meta: LogMeta {
            agent_radius: params.agent_radius,
            robot_radius: params.robot_radius,
            max_time: params.max_time,
            seed: params.seed,
        },
    };

    // Contact events are recomputed from the recorded series so that a
    // persisted log carries exactly what the metrics see.
    let mut collisions =
        crate::metrics::collision_events(&log, params.robot_radius, params.agent_radius);
    log.events.append(&mut collisions);
    log.events.sort_by(|a, b| {
        a.time
            .partial_cmp(&b.time)
            .unwrap()
            .then_with(|| a.kind.cmp(&b.kind))
            .then_with(|| a.agent_id.cmp(&b.agent_id))
    });

    Ok(log)
}
