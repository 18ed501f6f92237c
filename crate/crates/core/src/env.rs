//! Test environment model: labeled areas, static obstacles, a lettered/numbered
//! waypoint grid, and robot navigation routes.
//!
//! Environments are authored as JSON files. Rows are labeled with letters
//! (`A` at the grid origin) and columns with numbers (`1` at the origin), so a
//! label such as `E15` names the cell in row `E`, column `15`. Only waypoints
//! that are not blocked and keep `agent_radius` clearance from every obstacle
//! are considered valid.

use crate::geom::{Rect, Vec2};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use thiserror::Error;

/// Clearance a grid cell must keep from obstacles to count as valid.
pub const DEFAULT_AGENT_RADIUS: f64 = 0.3;

#[derive(Debug, Error)]
pub enum EnvError {
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
    #[error("invalid waypoint label {label:?}: unexpected character {ch:?}")]
    BadLabel { label: String, ch: char },
    #[error("waypoint ({row}, {col}) outside grid extents {rows}x{cols}")]
    OutOfRange {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
}

/// Named rectangular region of the map (e.g. "Storage", "Packing").
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabeledArea {
    pub name: String,
    pub bounds: Rect,
}

/// Impassable axis-aligned rectangle with a free-form tag ("shelf", "box", ...).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StaticObstacle {
    pub shape: Rect,
    pub tag: String,
}

/// Evenly spaced square waypoint grid. `valid` is derived on load: all cells
/// minus the authored `blocked` set minus cells obstructed by obstacles or
/// lying outside the environment's outer bounds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridMap {
    pub origin: Vec2,
    pub cell_size: f64,
    pub rows: usize,
    pub cols: usize,
    #[serde(default)]
    pub blocked: Vec<String>,
    #[serde(skip)]
    pub valid: BTreeSet<(usize, usize)>,
}

/// Free-text description blocks fed to the conversation engine.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Description {
    #[serde(default)]
    pub map: String,
    #[serde(default)]
    pub grid: String,
}

/// The complete environment: areas, obstacles, grid, and its textual description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvironmentModel {
    #[serde(default)]
    pub areas: Vec<LabeledArea>,
    #[serde(default)]
    pub obstacles: Vec<StaticObstacle>,
    pub grid: GridMap,
    #[serde(default)]
    pub description: Description,
    /// Clearance used when deriving valid waypoints.
    #[serde(default = "default_agent_radius")]
    pub agent_radius: f64,
}

fn default_agent_radius() -> f64 {
    DEFAULT_AGENT_RADIUS
}

/// A named robot navigation route through world space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Route {
    pub name: String,
    pub waypoints: Vec<Vec2>,
}

/// Parse a waypoint label like `"E15"` into 0-based `(row, col)`.
///
/// Rows use bijective base-26 letters (`A`=0 .. `Z`=25, `AA`=26); columns are
/// 1-based numbers.
pub fn parse_waypoint_label(label: &str) -> Result<(usize, usize), EnvError> {
    let bad = |ch| EnvError::BadLabel {
        label: label.to_string(),
        ch,
    };
    let mut chars = label.chars().peekable();
    let mut row_plus_one: usize = 0;
    let mut saw_letter = false;
    while let Some(&c) = chars.peek() {
        if c.is_ascii_uppercase() {
            row_plus_one = row_plus_one * 26 + (c as usize - 'A' as usize + 1);
            saw_letter = true;
            chars.next();
        } else {
            break;
        }
    }
    if !saw_letter {
        return Err(bad(label.chars().next().unwrap_or('?')));
    }
    let digits: String = chars.collect();
    if digits.is_empty() {
        return Err(bad(label.chars().last().unwrap()));
    }
    if let Some(c) = digits.chars().find(|c| !c.is_ascii_digit()) {
        return Err(bad(c));
    }
    let col: usize = digits.parse().map_err(|_| bad(digits.chars().next().unwrap()))?;
    if col == 0 {
        return Err(bad('0'));
    }
    Ok((row_plus_one - 1, col - 1))
}

/// Inverse of [`parse_waypoint_label`]: `(4, 14)` → `"E15"`.
pub fn format_waypoint_label(row: usize, col: usize) -> String {
    let mut letters = Vec::new();
    let mut n = row + 1;
    while n > 0 {
        let rem = (n - 1) % 26;
        letters.push((b'A' + rem as u8) as char);
        n = (n - 1) / 26;
    }
    letters.reverse();
    let mut s: String = letters.into_iter().collect();
    fmt::Write::write_fmt(&mut s, format_args!("{}", col + 1)).unwrap();
    s
}

impl GridMap {
    /// World position of the cell `(row, col)`.
    pub fn waypoint_to_world(&self, row: usize, col: usize) -> Result<Vec2, EnvError> {
        if row >= self.rows || col >= self.cols {
            return Err(EnvError::OutOfRange {
                row,
                col,
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok(self.origin + Vec2::new(col as f64 * self.cell_size, row as f64 * self.cell_size))
    }

    /// Nearest cell for a world position; inverse of [`Self::waypoint_to_world`]
    /// on cell centers.
    pub fn world_to_waypoint(&self, p: Vec2) -> Result<(usize, usize), EnvError> {
        let col = ((p.x - self.origin.x) / self.cell_size).round();
        let row = ((p.y - self.origin.y) / self.cell_size).round();
        if row < 0.0 || col < 0.0 {
            return Err(EnvError::OutOfRange {
                row: 0,
                col: 0,
                rows: self.rows,
                cols: self.cols,
            });
        }
        let (row, col) = (row as usize, col as usize);
        if row >= self.rows || col >= self.cols {
            return Err(EnvError::OutOfRange {
                row,
                col,
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok((row, col))
    }

    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        self.valid.contains(&(row, col))
    }
}

impl EnvironmentModel {
    /// Load an environment file and derive its valid waypoint set.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, EnvError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| EnvError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text).map_err(|source| EnvError::Parse {
            path: path.display().to_string(),
            source,
        })
    }

    /// Parse an environment from JSON text and derive its valid waypoint set.
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let mut env: EnvironmentModel = serde_json::from_str(text)?;
        env.recompute_valid();
        Ok(env)
    }

    /// Outer bounds of the world: the bounding box of all labeled areas, or
    /// the grid extent when no areas are declared.
    pub fn outer_bounds(&self) -> Rect {
        let mut it = self.areas.iter().map(|a| a.bounds);
        match it.next() {
            Some(first) => it.fold(first, |acc, b| acc.union(&b)),
            None => {
                let far = Vec2::new(
                    (self.grid.cols.max(1) - 1) as f64 * self.grid.cell_size,
                    (self.grid.rows.max(1) - 1) as f64 * self.grid.cell_size,
                );
                Rect::new(self.grid.origin, self.grid.origin + far)
            }
        }
    }

    /// Recompute the valid waypoint set: every cell not in `blocked`, inside
    /// the outer bounds, and at least `agent_radius` away from every obstacle.
    pub fn recompute_valid(&mut self) {
        let mut blocked = BTreeSet::new();
        for label in &self.grid.blocked {
            if let Ok(rc) = parse_waypoint_label(label) {
                blocked.insert(rc);
            }
        }
        let bounds = self.outer_bounds();
        let mut valid = BTreeSet::new();
        for row in 0..self.grid.rows {
            for col in 0..self.grid.cols {
                if blocked.contains(&(row, col)) {
                    continue;
                }
                let p = self.grid.waypoint_to_world(row, col).expect("in range");
                if !bounds.contains(p) {
                    continue;
                }
                if self
                    .obstacles
                    .iter()
                    .any(|o| o.shape.distance(p) < self.agent_radius)
                {
                    continue;
                }
                valid.insert((row, col));
            }
        }
        self.grid.valid = valid;
    }

    /// World position of a labeled waypoint, checking validity of the label
    /// and grid extents (not obstruction).
    pub fn label_to_world(&self, label: &str) -> Result<Vec2, EnvError> {
        let (row, col) = parse_waypoint_label(label)?;
        self.grid.waypoint_to_world(row, col)
    }

    pub fn area(&self, name: &str) -> Option<&LabeledArea> {
        self.areas.iter().find(|a| a.name == name)
    }

    /// Compact per-row listing of valid waypoints, appended to the grid
    /// description handed to the conversation engine.
    pub fn valid_waypoint_listing(&self) -> String {
        let mut out = String::new();
        for row in 0..self.grid.rows {
            let labels: Vec<String> = (0..self.grid.cols)
                .filter(|&col| self.grid.is_valid(row, col))
                .map(|col| format_waypoint_label(row, col))
                .collect();
            if labels.is_empty() {
                continue;
            }
            out.push_str(&labels.join(" "));
            out.push('\n');
        }
        out
    }
}

impl Route {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, EnvError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| EnvError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| EnvError::Parse {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn length(&self) -> f64 {
        self.waypoints
            .windows(2)
            .map(|w| w[0].distance(w[1]))
            .sum()
    }
}

/// One broken invariant found by [`validate_environment`].
#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub entity: String,
    pub rule: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}]: {}", self.entity, self.rule, self.message)
    }
}

fn violation(entity: impl Into<String>, rule: &str, message: impl Into<String>) -> Violation {
    Violation {
        entity: entity.into(),
        rule: rule.to_string(),
        message: message.into(),
    }
}

/// Check every structural invariant of the environment; an empty list means
/// the model is sound. Violations are data, not errors.
pub fn validate_environment(env: &EnvironmentModel) -> Vec<Violation> {
    let mut out = Vec::new();

    let mut seen = BTreeSet::new();
    for area in &env.areas {
        if !seen.insert(area.name.clone()) {
            out.push(violation(
                format!("area {:?}", area.name),
                "duplicate area",
                "area names must be unique within one environment",
            ));
        }
        if !area.bounds.is_valid() {
            out.push(violation(
                format!("area {:?}", area.name),
                "degenerate bounds",
                "min corner must be strictly below max corner on both axes",
            ));
        }
    }

    for (i, obs) in env.obstacles.iter().enumerate() {
        if !obs.shape.is_valid() {
            out.push(violation(
                format!("obstacle {} ({:?})", i, obs.tag),
                "degenerate obstacle",
                "obstacle rectangles must have positive area",
            ));
        }
    }

    if env.grid.cell_size <= 0.0 {
        out.push(violation("grid", "cell size", "cell_size must be > 0"));
    }
    if env.grid.rows == 0 || env.grid.cols == 0 {
        out.push(violation("grid", "extent", "grid must have rows and cols"));
    }

    for label in &env.grid.blocked {
        if let Err(e) = parse_waypoint_label(label) {
            out.push(violation(
                format!("blocked {:?}", label),
                "bad label",
                e.to_string(),
            ));
        }
    }

    let bounds = env.outer_bounds();
    for &(row, col) in &env.grid.valid {
        let label = format_waypoint_label(row, col);
        let p = match env.grid.waypoint_to_world(row, col) {
            Ok(p) => p,
            Err(e) => {
                out.push(violation(
                    format!("waypoint {label}"),
                    "out of range",
                    e.to_string(),
                ));
                continue;
            }
        };
        if !bounds.contains(p) {
            out.push(violation(
                format!("waypoint {label}"),
                "outside bounds",
                "valid waypoint lies outside the environment's outer bounds",
            ));
        }
        for obs in &env.obstacles {
            if obs.shape.distance(p) < env.agent_radius {
                out.push(violation(
                    format!("waypoint {label}"),
                    "obstructed waypoint",
                    format!(
                        "marked valid but within {} m of obstacle {:?}",
                        env.agent_radius, obs.tag
                    ),
                ));
            }
        }
    }

    if env.description.map.trim().is_empty() {
        out.push(violation(
            "description",
            "empty map description",
            "map description block is empty",
        ));
    }
    if env.description.grid.trim().is_empty() {
        out.push(violation(
            "description",
            "empty grid description",
            "grid description block is empty",
        ));
    }

    out
}

/// Check a route against an environment: length, distinct consecutive points,
/// in bounds, outside obstacles.
pub fn validate_route(env: &EnvironmentModel, route: &Route) -> Vec<Violation> {
    let mut out = Vec::new();
    let entity = format!("route {:?}", route.name);
    if route.waypoints.len() < 2 {
        out.push(violation(
            entity.clone(),
            "too short",
            "a route needs at least 2 waypoints",
        ));
    }
    for w in route.waypoints.windows(2) {
        if w[0].distance(w[1]) < 1e-9 {
            out.push(violation(
                entity.clone(),
                "repeated waypoint",
                "consecutive route waypoints must be distinct",
            ));
        }
    }
    let bounds = env.outer_bounds();
    for (i, &p) in route.waypoints.iter().enumerate() {
        if !bounds.contains(p) {
            out.push(violation(
                entity.clone(),
                "outside bounds",
                format!("waypoint {i} at ({}, {}) is outside the environment", p.x, p.y),
            ));
        }
        for obs in &env.obstacles {
            if obs.shape.contains(p) {
                out.push(violation(
                    entity.clone(),
                    "waypoint in obstacle",
                    format!("waypoint {i} lies inside obstacle {:?}", obs.tag),
                ));
            }
        }
    }
    out
}
