//! Waypoint-following robot controller with cone-based speed scaling.
//!
//! Stands in for a full navigation stack at desk scale: the robot heads for
//! the next route waypoint at nominal speed and linearly scales its commanded
//! speed to zero between `slow_zone` and `safety_stop_dist` based on the
//! nearest human or obstacle inside a +-60 degree cone along the heading.

use crate::geom::{Rect, Vec2};
use crate::sim::SimParams;

/// cos(60 degrees): cone half-angle test threshold.
const CONE_COS: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct RobotController {
    route: Vec<Vec2>,
    target_idx: usize,
    pub reached: bool,
}

/// Velocity command for one step.
#[derive(Debug, Clone, Copy)]
pub struct RobotCommand {
    pub velocity: Vec2,
    /// Set when this step lands exactly on the final waypoint.
    pub lands_on_goal: bool,
    /// Unit direction of the current route segment, if the robot has one.
    pub segment_dir: Option<Vec2>,
}

impl RobotController {
    pub fn new(route: Vec<Vec2>) -> Self {
        RobotController {
            route,
            target_idx: 1,
            reached: false,
        }
    }

    pub fn start(&self) -> Vec2 {
        self.route[0]
    }

    pub fn goal(&self) -> Vec2 {
        *self.route.last().unwrap()
    }

    /// Nearest constraining distance inside the heading cone: center distance
    /// for humans, surface distance for obstacles.
    fn cone_distance(
        pos: Vec2,
        heading: Vec2,
        humans: &[Vec2],
        obstacles: &[Rect],
    ) -> f64 {
        let mut d_min = f64::INFINITY;
        for &h in humans {
            let to = h - pos;
            if let Some(dir) = to.try_normalize() {
                if dir.dot(heading) >= CONE_COS {
                    d_min = d_min.min(to.norm());
                }
            } else {
                d_min = 0.0;
            }
        }
        for rect in obstacles {
            let to = rect.closest_point(pos) - pos;
            if let Some(dir) = to.try_normalize() {
                if dir.dot(heading) >= CONE_COS {
                    d_min = d_min.min(to.norm());
                }
            } else {
                d_min = 0.0;
            }
        }
        d_min
    }

    fn scaled_speed(d_min: f64, params: &SimParams) -> f64 {
        let r = &params.robot;
        if d_min <= r.safety_stop_dist {
            0.0
        } else if d_min >= r.slow_zone {
            r.v_nominal
        } else {
            r.v_nominal * (d_min - r.safety_stop_dist) / (r.slow_zone - r.safety_stop_dist)
        }
    }

    /// Compute the velocity command for the step starting at `pos`.
    pub fn command(
        &mut self,
        pos: Vec2,
        humans: &[Vec2],
        obstacles: &[Rect],
        params: &SimParams,
    ) -> RobotCommand {
        if self.reached || self.route.len() < 2 {
            return RobotCommand {
                velocity: Vec2::ZERO,
                lands_on_goal: false,
                segment_dir: None,
            };
        }

        // Advance through intermediate waypoints already within tolerance.
        while self.target_idx + 1 < self.route.len()
            && pos.distance(self.route[self.target_idx]) < params.goal_tolerance
        {
            self.target_idx += 1;
        }

        let target = self.route[self.target_idx];
        let to = target - pos;
        let rem = to.norm();
        let dir = match to.try_normalize() {
            Some(d) => d,
            None => {
                // Sitting exactly on the final waypoint.
                self.reached = self.target_idx + 1 == self.route.len();
                return RobotCommand {
                    velocity: Vec2::ZERO,
                    lands_on_goal: self.reached,
                    segment_dir: None,
                };
            }
        };

        let d_min = Self::cone_distance(pos, dir, humans, obstacles);
        let speed = Self::scaled_speed(d_min, params);
        if speed <= 0.0 {
            return RobotCommand {
                velocity: Vec2::ZERO,
                lands_on_goal: false,
                segment_dir: Some(dir),
            };
        }

        let is_final = self.target_idx + 1 == self.route.len();
        if is_final && rem <= speed * params.dt + 1e-9 {
            // Land exactly on the goal this step.
            return RobotCommand {
                velocity: to / params.dt,
                lands_on_goal: true,
                segment_dir: Some(dir),
            };
        }

        RobotCommand {
            velocity: dir * speed,
            lands_on_goal: false,
            segment_dir: Some(dir),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn full_speed_in_open_space() {
        let params = SimParams::default();
        let mut ctl = RobotController::new(vec![Vec2::ZERO, Vec2::new(6.0, 0.0)]);
        let cmd = ctl.command(Vec2::ZERO, &[], &[], &params);
        assert_abs_diff_eq!(cmd.velocity.x, 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(cmd.velocity.y, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn stops_for_human_inside_safety_distance() {
        let params = SimParams::default();
        let mut ctl = RobotController::new(vec![Vec2::ZERO, Vec2::new(6.0, 0.0)]);
        let cmd = ctl.command(Vec2::ZERO, &[Vec2::new(0.5, 0.0)], &[], &params);
        assert_abs_diff_eq!(cmd.velocity.norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn linear_slow_down_in_cone() {
        let params = SimParams::default();
        let mut ctl = RobotController::new(vec![Vec2::ZERO, Vec2::new(6.0, 0.0)]);
        let cmd = ctl.command(Vec2::ZERO, &[Vec2::new(0.9, 0.0)], &[], &params);
        // 0.6 * (0.9 - 0.6) / (1.2 - 0.6) = 0.3
        assert_abs_diff_eq!(cmd.velocity.norm(), 0.3, epsilon = 1e-12);
    }

    #[test]
    fn ignores_human_outside_cone() {
        let params = SimParams::default();
        let mut ctl = RobotController::new(vec![Vec2::ZERO, Vec2::new(6.0, 0.0)]);
        // Human at 90 degrees off heading, close by.
        let cmd = ctl.command(Vec2::ZERO, &[Vec2::new(0.0, 0.8)], &[], &params);
        assert_abs_diff_eq!(cmd.velocity.norm(), 0.6, epsilon = 1e-12);
    }

    #[test]
    fn lands_exactly_on_final_waypoint() {
        let params = SimParams::default();
        let mut ctl = RobotController::new(vec![Vec2::ZERO, Vec2::new(6.0, 0.0)]);
        let pos = Vec2::new(5.95, 0.0);
        let cmd = ctl.command(pos, &[], &[], &params);
        assert!(cmd.lands_on_goal);
        let landed = pos + cmd.velocity * params.dt;
        assert_abs_diff_eq!(landed.x, 6.0, epsilon = 1e-12);
        // Landing speed never exceeds the commanded speed.
        assert!(cmd.velocity.norm() <= params.robot.v_nominal + 1e-9);
    }
}
