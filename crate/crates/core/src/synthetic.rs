//! Synthetic corpora: tracks whose futures follow tree paths exactly (plus
//! noise), used for training sanity checks, and plain random-walk scenes
//! for oracle and property tests.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::data::{SceneWindow, TrajectorySample};
use crate::error::Result;
use crate::geometry::{rotate, Point2};
use crate::tree::{build_tree, enumerate_paths, TreeConfig};

#[derive(Debug, Clone)]
pub struct TreePathCorpusConfig {
    pub tree: TreeConfig,
    pub t_obs: usize,
    pub n_windows: usize,
    pub agents_per_window: usize,
    /// Noise sigma as a fraction of the split segment length.
    pub noise_frac: f64,
    pub seed: u64,
}

impl Default for TreePathCorpusConfig {
    fn default() -> Self {
        TreePathCorpusConfig {
            tree: TreeConfig::new(
                4,
                3,
                3,
                vec![
                    std::f64::consts::FRAC_PI_4,
                    std::f64::consts::FRAC_PI_6,
                    std::f64::consts::FRAC_PI_4,
                ],
                12,
            )
            .expect("static config is valid"),
            t_obs: 8,
            n_windows: 256,
            agents_per_window: 1,
            noise_frac: 0.05,
            seed: 1,
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller on two uniforms.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Maps a turn choice to the child index of a `width`-way split (children
/// are ordered by descending angle, so 0 turns hardest left).
fn turn_to_digit(turn: i64, width: usize) -> usize {
    let m = (width as i64 - 1) / 2;
    (m - turn) as usize
}

/// Generates windows whose futures are exact tree paths plus Gaussian
/// noise. The chosen leaf is a deterministic function of the observed
/// motion: the agent's turn tendency over the first and second halves of
/// the observed track selects alternating level directions, so path
/// selection is learnable from the observation alone.
pub fn tree_path_corpus(cfg: &TreePathCorpusConfig) -> Result<Vec<SceneWindow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let width = cfg.tree.width;
    let m = (width as i64 - 1) / 2;
    let mut windows = Vec::with_capacity(cfg.n_windows);
    let mut agent_counter = 0u64;

    for w in 0..cfg.n_windows {
        let mut samples = Vec::with_capacity(cfg.agents_per_window);
        for _ in 0..cfg.agents_per_window {
            let speed = rng.gen_range(0.3..0.7);
            let heading = rng.gen_range(0.0..std::f64::consts::TAU);
            let start = Point2::new(rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0));

            // Per-interval turn tendencies; the first level angle drives
            // the observed curvature so the tendency is visible.
            let early_turn = rng.gen_range(-m..=m);
            let late_turn = rng.gen_range(-m..=m);
            let angle0 = cfg.tree.angles.first().copied().unwrap_or(0.5);
            let half = cfg.t_obs / 2;

            let mut observed = Vec::with_capacity(cfg.t_obs);
            let mut pos = start;
            let mut dir = heading;
            observed.push(pos);
            for t in 1..cfg.t_obs {
                let turn = if t <= half { early_turn } else { late_turn };
                dir += turn as f64 * angle0 / cfg.tree.interval as f64;
                pos += rotate(Point2::new(speed, 0.0), dir);
                observed.push(pos);
            }

            let tree = build_tree(&observed, &cfg.tree)?;
            let paths = enumerate_paths(&tree);
            // Leaf digits alternate late/early/late/... turn tendencies.
            let mut index = 0usize;
            for level in 0..cfg.tree.depth {
                let turn = if level % 2 == 0 { late_turn } else { early_turn };
                index = index * width + turn_to_digit(turn, width);
            }
            let ideal = tree.interpolate(&paths[index], cfg.tree.horizon);
            let sigma = cfg.noise_frac * tree.seed_segment().norm();
            let future: Vec<Point2> = ideal
                .iter()
                .map(|&p| {
                    p + Point2::new(sigma * gaussian(&mut rng), sigma * gaussian(&mut rng))
                })
                .collect();

            agent_counter += 1;
            samples.push(TrajectorySample { agent_id: agent_counter, observed, future });
        }
        windows.push(SceneWindow {
            scene_name: "synthetic".into(),
            start_frame: (w as i64) * 100,
            samples,
        });
    }
    Ok(windows)
}

/// Random-walk windows for oracle and statistics tests. Each agent moves
/// with a random constant velocity plus per-step jitter.
pub fn random_walk_windows(
    n_windows: usize,
    agents_per_window: usize,
    t_obs: usize,
    horizon: usize,
    seed: u64,
) -> Vec<SceneWindow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut windows = Vec::with_capacity(n_windows);
    let mut agent_counter = 0u64;
    for w in 0..n_windows {
        let mut samples = Vec::with_capacity(agents_per_window);
        for _ in 0..agents_per_window {
            let mut pos = Point2::new(rng.gen_range(-8.0..8.0), rng.gen_range(-8.0..8.0));
            let vel = Point2::new(rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6));
            let mut track = Vec::with_capacity(t_obs + horizon);
            for _ in 0..t_obs + horizon {
                track.push(pos);
                pos += vel
                    + Point2::new(rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05));
            }
            agent_counter += 1;
            samples.push(TrajectorySample {
                agent_id: agent_counter,
                observed: track[..t_obs].to_vec(),
                future: track[t_obs..].to_vec(),
            });
        }
        windows.push(SceneWindow {
            scene_name: "walk".into(),
            start_frame: (w as i64) * 100,
            samples,
        });
    }
    windows
}

/// Writes windows out as a trajectory text file (frame agent x y rows) so
/// synthetic corpora can drive the command-line pipeline. Windows are kept
/// disjoint on the frame axis.
pub fn windows_to_trajectory_text(windows: &[SceneWindow]) -> String {
    let mut rows: Vec<(i64, u64, Point2)> = Vec::new();
    for (w, window) in windows.iter().enumerate() {
        let base = w as i64 * 1000;
        for sample in &window.samples {
            for (t, p) in sample.observed.iter().chain(&sample.future).enumerate() {
                rows.push((base + t as i64, sample.agent_id, *p));
            }
        }
    }
    rows.sort_by_key(|&(frame, agent, _)| (frame, agent));
    let mut out = String::new();
    for (frame, agent, p) in rows {
        out.push_str(&format!("{frame}\t{agent}\t{:.6}\t{:.6}\n", p.x, p.y));
    }
    out
}
