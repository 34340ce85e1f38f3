//! Coarse ground truth: the future track sampled at interval boundaries,
//! the breakpoint-mean distance between a path and it, and the resulting
//! classification label.

use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::tree::CoarsePath;

/// Ground-truth future positions at the tree's breakpoint times.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseGroundTruth {
    pub breakpoints: Vec<Point2>,
}

/// Index of the path closest to the coarse ground truth, plus its distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLabel {
    pub index: usize,
    pub distance: f64,
}

/// Samples the future at indices `interval, 2*interval, ...`. When the
/// horizon is not divisible by the interval the final breakpoint is the last
/// future position, matching the tree's shortened last level.
pub fn coarsify_gt(future: &[Point2], interval: usize, depth: usize) -> Result<CoarseGroundTruth> {
    let horizon = future.len();
    if horizon == 0 {
        return Err(Error::invalid_input("empty future track"));
    }
    if interval == 0 {
        return Err(Error::invalid_input("interval must be positive"));
    }
    let expected = horizon.div_ceil(interval);
    if depth != expected {
        return Err(Error::invalid_input(format!(
            "depth {depth} inconsistent with ceil(horizon {horizon} / interval {interval}) = {expected}",
        )));
    }
    let mut breakpoints = Vec::with_capacity(depth);
    for k in 1..=depth {
        let t = (k * interval).min(horizon);
        breakpoints.push(future[t - 1]);
    }
    Ok(CoarseGroundTruth { breakpoints })
}

/// Mean Euclidean distance between corresponding breakpoints.
pub fn path_distance(path: &CoarsePath, gt: &CoarseGroundTruth) -> Result<f64> {
    breakpoint_distance(&path.breakpoints, &gt.breakpoints)
}

pub(crate) fn breakpoint_distance(a: &[Point2], b: &[Point2]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid_input(format!(
            "breakpoint count mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::invalid_input("empty breakpoint sequences"));
    }
    let sum: f64 = a.iter().zip(b).map(|(p, q)| p.dist(*q)).sum();
    Ok(sum / a.len() as f64)
}

/// Index of the path minimizing [`path_distance`]; ties break to the lowest
/// index so labels are deterministic.
pub fn closest_path_label(paths: &[CoarsePath], gt: &CoarseGroundTruth) -> Result<PathLabel> {
    if paths.is_empty() {
        return Err(Error::invalid_input("empty path set"));
    }
    let mut best = PathLabel { index: 0, distance: f64::INFINITY };
    for (i, path) in paths.iter().enumerate() {
        let d = path_distance(path, gt)?;
        if d < best.distance {
            best = PathLabel { index: i, distance: d };
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{build_tree, enumerate_paths, TreeConfig};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn path(bps: &[(f64, f64)], index: usize) -> CoarsePath {
        CoarsePath {
            breakpoints: bps.iter().map(|&(x, y)| Point2::new(x, y)).collect(),
            index,
        }
    }

    fn gt(bps: &[(f64, f64)]) -> CoarseGroundTruth {
        CoarseGroundTruth {
            breakpoints: bps.iter().map(|&(x, y)| Point2::new(x, y)).collect(),
        }
    }

    #[test]
    fn coarsify_samples_a_line() {
        let future: Vec<Point2> = (1..=12).map(|t| Point2::new(t as f64, 0.5)).collect();
        let coarse = coarsify_gt(&future, 4, 3).unwrap();
        assert_eq!(
            coarse.breakpoints,
            vec![Point2::new(4.0, 0.5), Point2::new(8.0, 0.5), Point2::new(12.0, 0.5)]
        );
    }

    #[test]
    fn coarsify_single_segment() {
        let future: Vec<Point2> = (1..=12).map(|t| Point2::new(0.0, t as f64)).collect();
        let coarse = coarsify_gt(&future, 12, 1).unwrap();
        assert_eq!(coarse.breakpoints, vec![Point2::new(0.0, 12.0)]);
    }

    #[test]
    fn coarsify_short_final_segment() {
        // horizon 10, interval 4 -> breakpoints at t = 4, 8, 10.
        let future: Vec<Point2> = (1..=10).map(|t| Point2::new(t as f64, -(t as f64))).collect();
        let coarse = coarsify_gt(&future, 4, 3).unwrap();
        assert_eq!(
            coarse.breakpoints,
            vec![Point2::new(4.0, -4.0), Point2::new(8.0, -8.0), Point2::new(10.0, -10.0)]
        );
    }

    #[test]
    fn coarsify_rejects_inconsistent_depth() {
        let future: Vec<Point2> = (1..=12).map(|t| Point2::new(t as f64, 0.0)).collect();
        assert!(coarsify_gt(&future, 4, 2).is_err());
        assert!(coarsify_gt(&[], 4, 0).is_err());
    }

    #[test]
    fn distance_zero_iff_identical() {
        let p = path(&[(1.0, 0.0), (2.0, 0.0)], 0);
        let g = gt(&[(1.0, 0.0), (2.0, 0.0)]);
        assert_eq!(path_distance(&p, &g).unwrap(), 0.0);
    }

    #[test]
    fn distance_hand_computed() {
        let p = path(&[(1.0, 0.0), (2.0, 0.0)], 0);
        let g = gt(&[(1.0, 0.0), (2.0, 1.0)]);
        assert!((path_distance(&p, &g).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn distance_constant_offset() {
        let p = path(&[(0.0, 0.0), (1.0, 1.0), (2.0, 0.0)], 0);
        let g = gt(&[(3.0, 4.0), (4.0, 5.0), (5.0, 4.0)]);
        assert!((path_distance(&p, &g).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn distance_rejects_length_mismatch() {
        let p = path(&[(1.0, 0.0)], 0);
        let g = gt(&[(1.0, 0.0), (2.0, 0.0)]);
        assert!(path_distance(&p, &g).is_err());
    }

    #[test]
    fn distance_symmetric_and_triangle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let mut sample = || -> Vec<Point2> {
                (0..3)
                    .map(|_| Point2::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)))
                    .collect()
            };
            let (a, b, c) = (sample(), sample(), sample());
            let d = |u: &[Point2], v: &[Point2]| breakpoint_distance(u, v).unwrap();
            assert!((d(&a, &b) - d(&b, &a)).abs() < 1e-12);
            assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12);
        }
    }

    #[test]
    fn exact_match_wins() {
        let observed: Vec<Point2> = (0..8).map(|t| Point2::new(0.4 * t as f64, 0.0)).collect();
        let config = TreeConfig::new(4, 3, 3, vec![0.7, 0.5, 0.7], 12).unwrap();
        let tree = build_tree(&observed, &config).unwrap();
        let paths = enumerate_paths(&tree);
        let g = CoarseGroundTruth { breakpoints: paths[13].breakpoints.clone() };
        let label = closest_path_label(&paths, &g).unwrap();
        assert_eq!(label.index, 13);
        assert!(label.distance < 1e-12);
    }

    #[test]
    fn ties_break_to_lowest_index() {
        // Stationary track: every path is identical, so index 0 wins.
        let observed = vec![Point2::new(1.0, 1.0); 8];
        let config = TreeConfig::new(4, 3, 3, vec![0.7, 0.5, 0.7], 12).unwrap();
        let tree = build_tree(&observed, &config).unwrap();
        let paths = enumerate_paths(&tree);
        let g = gt(&[(2.0, 2.0), (2.0, 2.0), (2.0, 2.0)]);
        assert_eq!(closest_path_label(&paths, &g).unwrap().index, 0);
    }

    /// Independent exhaustive-scan oracle: recompute every distance with a
    /// separate double loop and take the argmin.
    fn oracle_closest(paths: &[CoarsePath], g: &CoarseGroundTruth) -> usize {
        let mut best_i = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in paths.iter().enumerate() {
            let mut sum = 0.0;
            for (a, b) in p.breakpoints.iter().zip(&g.breakpoints) {
                sum += ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt();
            }
            let d = sum / p.breakpoints.len() as f64;
            if d < best_d {
                best_d = d;
                best_i = i;
            }
        }
        best_i
    }

    #[test]
    fn coarse_breakpoints_survive_linear_interpolation() {
        use crate::tree::interpolate_path;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let root = Point2::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            let future: Vec<Point2> = (0..12)
                .map(|_| Point2::new(rng.gen_range(-9.0..9.0), rng.gen_range(-9.0..9.0)))
                .collect();
            let coarse = coarsify_gt(&future, 4, 3).unwrap();
            let rebuilt = interpolate_path(root, &coarse.breakpoints, 12, 4);
            // The reconstruction passes through every breakpoint exactly.
            for (k, bp) in coarse.breakpoints.iter().enumerate() {
                let at = rebuilt[(k + 1) * 4 - 1];
                assert!((at - *bp).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn label_matches_exhaustive_scan_on_random_trees() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..1000 {
            let step = Point2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let start = Point2::new(rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0));
            let observed: Vec<Point2> = (0..8).map(|t| start + step * t as f64).collect();
            let angles = vec![rng.gen_range(0.1..1.2), rng.gen_range(0.1..1.2), rng.gen_range(0.1..1.2)];
            let config = TreeConfig::new(4, 3, 3, angles, 12).unwrap();
            let tree = build_tree(&observed, &config).unwrap();
            let paths = enumerate_paths(&tree);
            let g = CoarseGroundTruth {
                breakpoints: (0..3)
                    .map(|_| {
                        Point2::new(rng.gen_range(-15.0..15.0), rng.gen_range(-15.0..15.0))
                    })
                    .collect(),
            };
            let label = closest_path_label(&paths, &g).unwrap();
            assert_eq!(label.index, oracle_closest(&paths, &g));
        }
    }
}
