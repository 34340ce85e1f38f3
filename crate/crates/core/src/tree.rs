//! Coarse trajectory tree: a hand-built W-ary tree over future breakpoints.
//!
//! The root sits at the last observed position. Each level advances one
//! temporal interval; a node splits into `width` children whose directions
//! are rotations of the node's own incoming segment. Every root-to-leaf path
//! is one coarse future hypothesis, and there are `width^depth` of them.

use crate::error::{Error, Result};
use crate::geometry::{high_order_velocity, rotate, velocities, Point2};

/// Tree construction parameters.
///
/// `interval` is the number of time steps covered by one split segment,
/// `depth` the number of levels, `width` the (odd) number of split
/// directions per node, `angles` one rotation step per level, and `horizon`
/// the number of future time steps the tree must span.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeConfig {
    pub interval: usize,
    pub depth: usize,
    pub width: usize,
    pub angles: Vec<f64>,
    pub horizon: usize,
}

impl TreeConfig {
    pub fn new(
        interval: usize,
        depth: usize,
        width: usize,
        angles: Vec<f64>,
        horizon: usize,
    ) -> Result<Self> {
        let cfg = TreeConfig { interval, depth, width, angles, horizon };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.interval == 0 {
            return Err(Error::config("interval must be positive"));
        }
        if self.horizon == 0 {
            return Err(Error::config("horizon must be positive"));
        }
        if self.width == 0 || self.width % 2 == 0 {
            return Err(Error::config(format!(
                "width must be odd and positive, got {}",
                self.width
            )));
        }
        if self.depth > 0 {
            let expected = self.horizon.div_ceil(self.interval);
            if self.depth != expected {
                return Err(Error::config(format!(
                    "depth {} inconsistent with ceil(horizon {} / interval {}) = {}",
                    self.depth, self.horizon, self.interval, expected
                )));
            }
        }
        if self.angles.len() != self.depth {
            return Err(Error::config(format!(
                "expected {} angles (one per level), got {}",
                self.depth,
                self.angles.len()
            )));
        }
        if self.angles.iter().any(|a| !a.is_finite()) {
            return Err(Error::config("angles must be finite"));
        }
        Ok(())
    }

    /// Number of root-to-leaf paths, `width^depth`.
    pub fn path_count(&self) -> usize {
        self.width.pow(self.depth as u32)
    }

    /// Time steps covered by level `k` (0-based). All levels cover
    /// `interval` steps except the last, which covers the remainder when
    /// `horizon` is not divisible by `interval`.
    pub fn level_steps(&self, level: usize) -> usize {
        if self.depth > 0 && level == self.depth - 1 {
            self.horizon - (self.depth - 1) * self.interval
        } else {
            self.interval
        }
    }

    /// Serializes as a plain-text `key = value` config.
    pub fn to_config_text(&self) -> String {
        let angles = self
            .angles
            .iter()
            .map(|a| format!("{a:?}"))
            .collect::<Vec<_>>()
            .join(", ");
        format!(
            "interval = {}\ndepth = {}\nwidth = {}\nangles = {}\nhorizon = {}\n",
            self.interval, self.depth, self.width, angles, self.horizon
        )
    }

    /// Parses the plain-text `key = value` form produced by
    /// [`TreeConfig::to_config_text`]. Angles are radians.
    pub fn from_config_text(text: &str) -> Result<Self> {
        let mut interval = None;
        let mut depth = None;
        let mut width = None;
        let mut angles: Option<Vec<f64>> = None;
        let mut horizon = None;
        for (no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("line {}: expected `key = value`, got {raw:?}", no + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let parse_usize = |v: &str| {
                v.parse::<usize>()
                    .map_err(|e| Error::config(format!("line {}: {key}: {e}", no + 1)))
            };
            match key {
                "interval" => interval = Some(parse_usize(value)?),
                "depth" => depth = Some(parse_usize(value)?),
                "width" => width = Some(parse_usize(value)?),
                "horizon" => horizon = Some(parse_usize(value)?),
                "angles" => {
                    let mut parsed = Vec::new();
                    for part in value.split(',').map(str::trim).filter(|p| !p.is_empty()) {
                        parsed.push(part.parse::<f64>().map_err(|e| {
                            Error::config(format!("line {}: angles: {e}", no + 1))
                        })?);
                    }
                    angles = Some(parsed);
                }
                other => {
                    return Err(Error::config(format!("line {}: unknown key {other:?}", no + 1)))
                }
            }
        }
        let missing = |name: &str| Error::config(format!("missing key {name:?}"));
        TreeConfig::new(
            interval.ok_or_else(|| missing("interval"))?,
            depth.ok_or_else(|| missing("depth"))?,
            width.ok_or_else(|| missing("width"))?,
            angles.unwrap_or_default(),
            horizon.ok_or_else(|| missing("horizon"))?,
        )
    }
}

/// The breakpoint tree of one agent.
#[derive(Debug, Clone)]
pub struct CoarseTree {
    root: Point2,
    /// `levels[k]` holds `width^(k+1)` breakpoints, children of the
    /// previous level in fixed order.
    levels: Vec<Vec<Point2>>,
    /// Displacement of the forward split over one full interval. Retained
    /// for the depth-0 constant-velocity case, which has no breakpoints.
    seed_segment: Point2,
    config: TreeConfig,
}

/// One root-to-leaf breakpoint chain. `index` is unique within its tree and
/// stable across runs: children are ordered by descending rotation angle.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarsePath {
    pub breakpoints: Vec<Point2>,
    pub index: usize,
}

impl CoarseTree {
    pub fn root(&self) -> Point2 {
        self.root
    }

    pub fn config(&self) -> &TreeConfig {
        &self.config
    }

    pub fn depth(&self) -> usize {
        self.config.depth
    }

    pub fn path_count(&self) -> usize {
        self.config.path_count()
    }

    pub fn level(&self, k: usize) -> &[Point2] {
        &self.levels[k]
    }

    /// Displacement of the all-forward split over one interval.
    pub fn seed_segment(&self) -> Point2 {
        self.seed_segment
    }

    /// Expands a coarse path to one position per future time step. For a
    /// depth-0 tree this is the constant-velocity ray from the root.
    pub fn interpolate(&self, path: &CoarsePath, horizon: usize) -> Vec<Point2> {
        if self.config.depth == 0 {
            let step = self.seed_segment / self.config.interval as f64;
            return (1..=horizon).map(|t| self.root + step * t as f64).collect();
        }
        interpolate_path(self.root, &path.breakpoints, horizon, self.config.interval)
    }
}

/// Rotation offsets of one split, ordered left-to-right by descending angle:
/// `+m*step, ..., +step, 0, -step, ..., -m*step` for `width = 2m+1`.
fn split_offsets(width: usize, step: f64) -> Vec<f64> {
    let m = (width as i64 - 1) / 2;
    (-(m as i64)..=m)
        .rev()
        .map(|j| j as f64 * step)
        .collect()
}

/// Builds the coarse trajectory tree for one observed track.
///
/// The forward split covers one temporal interval at the speed of the last
/// observed step: the agent is extrapolated along its most recent velocity.
/// At deeper levels each node splits around its own incoming segment, so
/// branches curve with their chosen heading. The last level is shortened to
/// `horizon - (depth-1)*interval` steps when `horizon` is not divisible by
/// `interval`, at the same per-step speed.
pub fn build_tree(observed: &[Point2], config: &TreeConfig) -> Result<CoarseTree> {
    config.validate()?;
    let vels = velocities(observed)?;
    let last_step = high_order_velocity(&vels, 1)?;
    let seed_segment = last_step * config.interval as f64;

    let mut levels: Vec<Vec<Point2>> = Vec::with_capacity(config.depth);
    // Incoming full-interval segment of each node at the current level.
    let mut headings = vec![seed_segment];
    let mut parents = vec![observed[observed.len() - 1]];

    for (k, &angle_step) in config.angles.iter().enumerate() {
        let offsets = split_offsets(config.width, angle_step);
        let scale = config.level_steps(k) as f64 / config.interval as f64;
        let mut next_positions = Vec::with_capacity(parents.len() * config.width);
        let mut next_headings = Vec::with_capacity(parents.len() * config.width);
        for (node, &incoming) in parents.iter().zip(&headings) {
            for &offset in &offsets {
                let dir = rotate(incoming, offset);
                next_positions.push(*node + dir * scale);
                next_headings.push(dir);
            }
        }
        levels.push(next_positions.clone());
        parents = next_positions;
        headings = next_headings;
    }

    Ok(CoarseTree {
        root: observed[observed.len() - 1],
        levels,
        seed_segment,
        config: config.clone(),
    })
}

/// Enumerates all `width^depth` root-to-leaf paths in index order. Path `i`
/// follows the base-`width` digits of `i`, most significant digit first.
pub fn enumerate_paths(tree: &CoarseTree) -> Vec<CoarsePath> {
    let w = tree.config.width;
    let d = tree.config.depth;
    let count = tree.path_count();
    let mut paths = Vec::with_capacity(count);
    for index in 0..count {
        let mut breakpoints = Vec::with_capacity(d);
        let mut node = 0usize;
        for k in 0..d {
            let digit = index / w.pow((d - 1 - k) as u32) % w;
            node = node * w + digit;
            breakpoints.push(tree.levels[k][node]);
        }
        paths.push(CoarsePath { breakpoints, index });
    }
    paths
}

/// Linearly subdivides a breakpoint chain into one position per time step.
/// Every segment covers `interval` steps except the last, which covers the
/// remaining `horizon - (len-1)*interval` steps.
pub fn interpolate_path(
    root: Point2,
    breakpoints: &[Point2],
    horizon: usize,
    interval: usize,
) -> Vec<Point2> {
    let mut out = Vec::with_capacity(horizon);
    let mut prev = root;
    let mut emitted = 0usize;
    for (k, &bp) in breakpoints.iter().enumerate() {
        let steps = if k + 1 == breakpoints.len() {
            horizon - emitted
        } else {
            interval.min(horizon - emitted)
        };
        for t in 1..=steps {
            let frac = t as f64 / steps as f64;
            out.push(prev + (bp - prev) * frac);
        }
        emitted += steps;
        prev = bp;
        if emitted >= horizon {
            break;
        }
    }
    out
}
