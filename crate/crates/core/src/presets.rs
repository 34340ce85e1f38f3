//! Per-scene defaults: coordinate units and split-angle schedules.
//!
//! Angle schedules are given in radians as `pi / k`. Each scene carries
//! three per-level values; deeper trees repeat the last value, shallower
//! trees take a prefix.

use std::f64::consts::PI;

use crate::data::Unit;
use crate::error::{Error, Result};
use crate::tree::TreeConfig;

pub const ETH_UCY_SCENES: [&str; 5] = ["eth", "hotel", "univ", "zara1", "zara2"];

pub fn scene_unit(scene: &str) -> Unit {
    if scene == "sdd" {
        Unit::Pixels
    } else {
        Unit::Meters
    }
}

/// Split-angle schedule per scene, one angle per tree level.
pub fn scene_angles(scene: &str) -> Option<[f64; 3]> {
    let ks: [f64; 3] = match scene {
        "eth" | "univ" | "sdd" => [4.0, 6.0, 4.0],
        "hotel" | "zara2" => [6.0, 6.0, 4.0],
        "zara1" => [12.0, 6.0, 4.0],
        _ => return None,
    };
    Some([PI / ks[0], PI / ks[1], PI / ks[2]])
}

/// Level-angle list for an arbitrary depth: prefix of the scene schedule,
/// extended by repeating its last entry.
pub fn angle_schedule(scene: &str, depth: usize) -> Result<Vec<f64>> {
    let base = scene_angles(scene).ok_or_else(|| {
        Error::config(format!(
            "no angle preset for scene {scene:?}; pass angles explicitly"
        ))
    })?;
    Ok((0..depth).map(|k| base[k.min(base.len() - 1)]).collect())
}

/// Standard tree configuration for a scene at a given depth and width.
///
/// Depth 0 is the constant-velocity predictor: the forward direction is the
/// last observed step, extrapolated for the whole horizon. Deeper trees
/// split the horizon into `depth` intervals of `ceil(horizon/depth)` steps.
pub fn raw_tree_config(
    scene: &str,
    depth: usize,
    width: usize,
    horizon: usize,
    angles: Option<Vec<f64>>,
) -> Result<TreeConfig> {
    let interval = if depth == 0 { 1 } else { horizon.div_ceil(depth) };
    let angles = match angles {
        Some(a) => {
            if a.len() != depth {
                return Err(Error::config(format!(
                    "expected {depth} angles, got {}",
                    a.len()
                )));
            }
            a
        }
        None => {
            if depth == 0 {
                Vec::new()
            } else {
                angle_schedule(scene, depth)?
            }
        }
    };
    TreeConfig::new(interval, depth, width, angles, horizon)
}
