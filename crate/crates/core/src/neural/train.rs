//! End-to-end training: per-window loss graphs, Adam updates, and the
//! seeded epoch loop. Windows are prepared once (trees, labels, normalized
//! targets) and reused across epochs.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::coarse_gt::{closest_path_label, coarsify_gt};
use crate::data::{normalize_window, SceneWindow};
use crate::error::{Error, Result};
use crate::neural::model::Forward;
use crate::neural::params::{ModelDims, ModelParams};
use crate::neural::tape::{Mat, NodeId};
use crate::tree::{build_tree, enumerate_paths, TreeConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub huber_delta: f64,
    /// Windows folded into one optimizer step.
    pub batch_windows: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: 1.0,
            learning_rate: 1e-3,
            epochs: 200,
            seed: 1,
            huber_delta: 1.0,
            batch_windows: 32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("learning rate must be positive"));
        }
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 || self.lambda3 < 0.0 {
            return Err(Error::config("loss weights must be non-negative"));
        }
        if !(self.huber_delta > 0.0) {
            return Err(Error::config("huber delta must be positive"));
        }
        if self.batch_windows == 0 {
            return Err(Error::config("batch_windows must be positive"));
        }
        Ok(())
    }
}

/// One agent's training inputs in agent-centric coordinates.
#[derive(Debug, Clone)]
pub struct PreparedAgent {
    pub obs_input: Vec<f64>,
    /// `[M, 2*depth]` flattened path breakpoints.
    pub path_inputs: Mat,
    pub label: usize,
    /// `[1, 2*depth]` coarse ground-truth breakpoints.
    pub coarse_target: Mat,
    /// `[1, 2*horizon]` fine ground truth.
    pub future_target: Mat,
}

#[derive(Debug, Clone)]
pub struct PreparedWindow {
    pub agents: Vec<PreparedAgent>,
}

/// Builds trees, labels, and normalized tensors for one window.
pub fn prepare_window(
    window: &SceneWindow,
    tree_config: &TreeConfig,
    dims: &ModelDims,
) -> Result<PreparedWindow> {
    if tree_config.depth != dims.depth || tree_config.horizon != dims.horizon {
        return Err(Error::config(
            "tree depth/horizon do not match model dims".to_string(),
        ));
    }
    let m = tree_config.path_count();
    let (normalized, transform) = normalize_window(window);
    let mut agents = Vec::with_capacity(window.samples.len());
    for (i, sample) in window.samples.iter().enumerate() {
        if sample.observed.len() != dims.t_obs {
            return Err(Error::invalid_input(format!(
                "agent {}: observed length {} != t_obs {}",
                sample.agent_id,
                sample.observed.len(),
                dims.t_obs
            )));
        }
        if sample.future.len() != dims.horizon {
            return Err(Error::invalid_input(format!(
                "agent {}: future length {} != horizon {}",
                sample.agent_id,
                sample.future.len(),
                dims.horizon
            )));
        }
        let tree = build_tree(&sample.observed, tree_config)?;
        let paths = enumerate_paths(&tree);
        let coarse = coarsify_gt(&sample.future, tree_config.interval, tree_config.depth)?;
        let label = closest_path_label(&paths, &coarse)?;

        let origin = transform.origins[i];
        let local = &normalized.samples[i];
        let mut obs_input = Vec::with_capacity(2 * dims.t_obs);
        for p in &local.observed {
            obs_input.push(p.x);
            obs_input.push(p.y);
        }
        let mut path_data = Vec::with_capacity(m * 2 * dims.depth);
        for path in &paths {
            for bp in &path.breakpoints {
                path_data.push(bp.x - origin.x);
                path_data.push(bp.y - origin.y);
            }
        }
        let mut coarse_data = Vec::with_capacity(2 * dims.depth);
        for bp in &coarse.breakpoints {
            coarse_data.push(bp.x - origin.x);
            coarse_data.push(bp.y - origin.y);
        }
        let mut future_data = Vec::with_capacity(2 * dims.horizon);
        for p in &local.future {
            future_data.push(p.x);
            future_data.push(p.y);
        }
        agents.push(PreparedAgent {
            obs_input,
            path_inputs: Mat::from_vec(m, 2 * dims.depth, path_data),
            label: label.index,
            coarse_target: Mat::from_vec(1, 2 * dims.depth, coarse_data),
            future_target: Mat::from_vec(1, 2 * dims.horizon, future_data),
        });
    }
    Ok(PreparedWindow { agents })
}

pub fn prepare_windows(
    windows: &[SceneWindow],
    tree_config: &TreeConfig,
    dims: &ModelDims,
) -> Result<Vec<PreparedWindow>> {
    windows.iter().map(|w| prepare_window(w, tree_config, dims)).collect()
}

/// Per-agent mean loss components of one batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub coarse: f64,
    pub clf: f64,
    pub refine: f64,
    pub n_agents: usize,
}

/// Builds the full batch graph and returns the scalar mean-loss node plus
/// the unweighted component sums.
fn batch_graph(
    fwd: &mut Forward,
    batch: &[PreparedWindow],
    cfg: &TrainConfig,
) -> Result<(NodeId, LossBreakdown)> {
    let mut agent_losses: Vec<NodeId> = Vec::new();
    let mut sums = (0.0, 0.0, 0.0);

    for window in batch {
        let n = window.agents.len();
        if n == 0 {
            continue;
        }
        let obs_width = window.agents[0].obs_input.len();
        let mut obs_data = Vec::with_capacity(n * obs_width);
        for a in &window.agents {
            obs_data.extend_from_slice(&a.obs_input);
        }
        let obs = fwd.input(Mat::from_vec(n, obs_width, obs_data));
        let fx = fwd.encode_observed(obs);
        let fs = fwd.interaction_attention(fx);

        for (i, agent) in window.agents.iter().enumerate() {
            let paths_in = fwd.input(agent.path_inputs.clone());
            let ftree = fwd.encode_paths(paths_in);
            let fs_row = fwd.tape.select_row(fs, i);

            let probs = fwd.score_paths(fs_row, ftree);
            let l_clf = fwd.tape.neg_log_entry(probs, agent.label);

            // Greedy coarse optimization: only the most confident path's
            // embedding drives the coarse regression.
            let probs_row = fwd.tape.value(probs).row(0);
            let mut argmax = 0;
            for (j, &p) in probs_row.iter().enumerate() {
                if p > probs_row[argmax] {
                    argmax = j;
                }
            }
            let f_star = fwd.tape.select_row(ftree, argmax);
            let coarse_pred = fwd.coarse_head(f_star, fs_row);
            let l_coarse =
                fwd.tape.huber_mean(coarse_pred, agent.coarse_target.clone(), cfg.huber_delta);

            // Teacher forcing: refinement consumes the coarse ground truth.
            let coarse_in = fwd.input(agent.coarse_target.clone());
            let fine = fwd.refine(coarse_in, fs_row);
            let l_ref = fwd.tape.huber_mean(fine, agent.future_target.clone(), cfg.huber_delta);

            sums.0 += fwd.tape.scalar_value(l_coarse);
            sums.1 += fwd.tape.scalar_value(l_clf);
            sums.2 += fwd.tape.scalar_value(l_ref);

            let wc = fwd.tape.scale(l_coarse, cfg.lambda1);
            let wn = fwd.tape.scale(l_clf, cfg.lambda2);
            let wr = fwd.tape.scale(l_ref, cfg.lambda3);
            let partial = fwd.tape.add(wc, wn);
            agent_losses.push(fwd.tape.add(partial, wr));
        }
    }

    let n_agents = agent_losses.len();
    if n_agents == 0 {
        return Err(Error::invalid_input("batch contains no agents"));
    }
    let mut sum = agent_losses[0];
    for &l in &agent_losses[1..] {
        sum = fwd.tape.add(sum, l);
    }
    let mean = fwd.tape.scale(sum, 1.0 / n_agents as f64);
    let breakdown = LossBreakdown {
        total: fwd.tape.scalar_value(mean),
        coarse: sums.0 / n_agents as f64,
        clf: sums.1 / n_agents as f64,
        refine: sums.2 / n_agents as f64,
        n_agents,
    };
    Ok((mean, breakdown))
}

/// Forward-only batch loss, used by the finite-difference oracle.
pub fn batch_loss_value(
    params: &ModelParams,
    batch: &[PreparedWindow],
    cfg: &TrainConfig,
) -> Result<f64> {
    let mut fwd = Forward::new(params);
    let (_, breakdown) = batch_graph(&mut fwd, batch, cfg)?;
    Ok(breakdown.total)
}

/// Loss plus gradients for every parameter tensor.
pub fn batch_loss_and_grads(
    params: &ModelParams,
    batch: &[PreparedWindow],
    cfg: &TrainConfig,
) -> Result<(LossBreakdown, Vec<Mat>)> {
    let mut fwd = Forward::new(params);
    let (loss, breakdown) = batch_graph(&mut fwd, batch, cfg)?;
    let grads = fwd.param_grads(loss);
    Ok((breakdown, grads))
}

/// Adam optimizer state with the usual (0.9, 0.999) moment decays.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<Mat>,
    v: Vec<Mat>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(params: &ModelParams) -> Self {
        let shapes: Vec<Mat> = params
            .tensors()
            .iter()
            .map(|(_, m)| Mat::zeros(m.rows, m.cols))
            .collect();
        Adam { m: shapes.clone(), v: shapes, t: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &[Mat], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (((m, v), (_, tensor)), grad) in self
            .m
            .iter_mut()
            .zip(self.v.iter_mut())
            .zip(params.tensors_mut())
            .zip(grads)
        {
            for i in 0..tensor.data.len() {
                let g = grad.data[i];
                m.data[i] = self.beta1 * m.data[i] + (1.0 - self.beta1) * g;
                v.data[i] = self.beta2 * v.data[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m.data[i] / bc1;
                let v_hat = v.data[i] / bc2;
                tensor.data[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// One optimizer update over a batch of prepared windows.
pub fn train_step(
    batch: &[PreparedWindow],
    params: &mut ModelParams,
    opt: &mut Adam,
    cfg: &TrainConfig,
) -> Result<LossBreakdown> {
    cfg.validate()?;
    let (breakdown, grads) = batch_loss_and_grads(params, batch, cfg)?;
    if !breakdown.total.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite loss (coarse {}, clf {}, refine {}) over {} agents",
            breakdown.coarse, breakdown.clf, breakdown.refine, breakdown.n_agents
        )));
    }
    opt.step(params, &grads, cfg.learning_rate);
    Ok(breakdown)
}

/// Per-epoch mean losses, weighted by agents per batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub total: f64,
    pub coarse: f64,
    pub clf: f64,
    pub refine: f64,
}

pub fn loss_log_csv(records: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,total,coarse,clf,refine\n");
    for r in records {
        out.push_str(&format!(
            "{},{:.12e},{:.12e},{:.12e},{:.12e}\n",
            r.epoch, r.total, r.coarse, r.clf, r.refine
        ));
    }
    out
}

/// Trains a fresh model on the given windows. Initialization, batch order,
/// and therefore the whole run are determined by `cfg.seed`.
pub fn train(
    windows: &[SceneWindow],
    tree_config: &TreeConfig,
    dims: ModelDims,
    cfg: &TrainConfig,
) -> Result<(ModelParams, Vec<EpochRecord>)> {
    cfg.validate()?;
    let prepared = prepare_windows(windows, tree_config, &dims)?;
    let mut params = ModelParams::init(dims, cfg.seed)?;
    let mut opt = Adam::new(&params);
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x9e3779b9).wrapping_add(1));

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sums = (0.0, 0.0, 0.0, 0.0);
        let mut n_total = 0usize;
        for chunk in order.chunks(cfg.batch_windows) {
            let batch: Vec<PreparedWindow> =
                chunk.iter().map(|&i| prepared[i].clone()).collect();
            let breakdown = train_step(&batch, &mut params, &mut opt, cfg)?;
            let w = breakdown.n_agents as f64;
            sums.0 += breakdown.total * w;
            sums.1 += breakdown.coarse * w;
            sums.2 += breakdown.clf * w;
            sums.3 += breakdown.refine * w;
            n_total += breakdown.n_agents;
        }
        let n = n_total.max(1) as f64;
        records.push(EpochRecord {
            epoch,
            total: sums.0 / n,
            coarse: sums.1 / n,
            clf: sums.2 / n,
            refine: sums.3 / n,
        });
    }
    Ok((params, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::TrajectorySample;
    use crate::geometry::Point2;

    fn toy_window() -> SceneWindow {
        let observed: Vec<Point2> = (0..8).map(|t| Point2::new(0.4 * t as f64, 0.0)).collect();
        let future: Vec<Point2> =
            (1..=12).map(|t| Point2::new(0.4 * (7 + t) as f64, 0.02 * t as f64)).collect();
        SceneWindow {
            scene_name: "toy".into(),
            start_frame: 0,
            samples: vec![
                TrajectorySample { agent_id: 1, observed: observed.clone(), future: future.clone() },
                TrajectorySample {
                    agent_id: 2,
                    observed: observed.iter().map(|&p| p + Point2::new(0.0, 1.0)).collect(),
                    future: future.iter().map(|&p| p + Point2::new(0.0, 1.0)).collect(),
                },
            ],
        }
    }

    fn setup() -> (Vec<PreparedWindow>, ModelParams, TrainConfig) {
        let tree_config = TreeConfig::new(4, 3, 3, vec![0.6, 0.5, 0.6], 12).unwrap();
        let dims = ModelDims::new(8, 3, 12, 16).unwrap();
        let prepared = prepare_windows(&[toy_window()], &tree_config, &dims).unwrap();
        let params = ModelParams::init(dims, 3).unwrap();
        (prepared, params, TrainConfig { batch_windows: 1, ..TrainConfig::default() })
    }

    #[test]
    fn zero_learning_rate_leaves_params_unchanged() {
        let (prepared, mut params, cfg) = setup();
        let before = params.clone();
        let mut opt = Adam::new(&params);
        let (_, grads) = batch_loss_and_grads(&params, &prepared, &cfg).unwrap();
        opt.step(&mut params, &grads, 0.0);
        assert_eq!(before, params);
    }

    #[test]
    fn repeated_steps_reduce_loss_on_fixed_batch() {
        let (prepared, mut params, cfg) = setup();
        let mut opt = Adam::new(&params);
        let mut losses = Vec::new();
        for _ in 0..100 {
            losses.push(train_step(&prepared, &mut params, &mut opt, &cfg).unwrap().total);
        }
        assert!(losses[99] < losses[9], "after warm-up: {} vs {}", losses[99], losses[9]);
        assert!(losses.iter().all(|l| l.is_finite()));
    }

    #[test]
    fn training_is_seed_deterministic() {
        let tree_config = TreeConfig::new(4, 3, 3, vec![0.6, 0.5, 0.6], 12).unwrap();
        let dims = ModelDims::new(8, 3, 12, 16).unwrap();
        let cfg = TrainConfig { epochs: 3, ..TrainConfig::default() };
        let (pa, ra) = train(&[toy_window()], &tree_config, dims, &cfg).unwrap();
        let (pb, rb) = train(&[toy_window()], &tree_config, dims, &cfg).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(pa, pb);
        assert_eq!(loss_log_csv(&ra), loss_log_csv(&rb));
    }

    #[test]
    fn lambda_selectors_gate_terms() {
        let (prepared, params, cfg) = setup();
        let off = TrainConfig { lambda1: 0.0, lambda2: 0.0, lambda3: 0.0, ..cfg.clone() };
        assert!(batch_loss_value(&params, &prepared, &off).unwrap().abs() < 1e-12);

        let only_coarse = TrainConfig { lambda2: 0.0, lambda3: 0.0, ..cfg.clone() };
        let l = batch_loss_value(&params, &prepared, &only_coarse).unwrap();
        let (breakdown, _) = batch_loss_and_grads(&params, &prepared, &cfg).unwrap();
        assert!((l - breakdown.coarse).abs() < 1e-12);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let cfg = TrainConfig { learning_rate: 0.0, ..TrainConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = TrainConfig { lambda2: -1.0, ..TrainConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = TrainConfig { batch_windows: 0, ..TrainConfig::default() };
        assert!(cfg.validate().is_err());
    }
}
