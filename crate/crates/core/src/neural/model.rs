//! Model forward pass: observed/tree encoders, interaction attention, path
//! scoring, the coarse and refinement heads, losses, and top-K prediction.
//!
//! `Forward` wires one computation graph per batch. The free functions
//! mirror the same operations on plain slices for callers that only need a
//! single evaluation (tests, prediction plumbing).

use crate::coarse_gt::PathLabel;
use crate::data::{normalize_window, SceneWindow};
use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::neural::params::ModelParams;
use crate::neural::tape::{Mat, NodeId, Tape};
use crate::tree::{build_tree, enumerate_paths, TreeConfig};

/// A D-dimensional feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub values: Vec<f64>,
}

/// Softmax scores over the M tree paths.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceVector {
    pub probs: Vec<f64>,
}

impl ConfidenceVector {
    /// Highest-confidence index; ties break to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    /// Indices of the top `k` scores in descending confidence order, ties
    /// broken by lower index.
    pub fn top_k(&self, k: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.probs.len()).collect();
        order.sort_by(|&a, &b| {
            self.probs[b].partial_cmp(&self.probs[a]).expect("finite probs").then(a.cmp(&b))
        });
        order.truncate(k);
        order
    }
}

/// Node ids of one affine stack's parameters.
#[derive(Debug, Clone, Copy)]
struct StackNodes {
    w: [NodeId; 3],
    b: [NodeId; 3],
    slopes: [NodeId; 2],
}

impl StackNodes {
    fn from_base(base: usize) -> Self {
        StackNodes {
            w: [base, base + 2, base + 4],
            b: [base + 1, base + 3, base + 5],
            slopes: [base + 6, base + 7],
        }
    }
}

/// One forward graph over shared parameters. Parameter leaves are
/// registered first, in `ModelParams::tensors` order, so gradient slots
/// line up with the optimizer's state.
pub struct Forward<'a> {
    pub tape: Tape,
    params: &'a ModelParams,
    obs: StackNodes,
    tree: StackNodes,
    coarse: StackNodes,
    refine: StackNodes,
    wq: NodeId,
    wk: NodeId,
    wv: NodeId,
    phi: NodeId,
    psi: NodeId,
    n_param_nodes: usize,
}

impl<'a> Forward<'a> {
    pub fn new(params: &'a ModelParams) -> Self {
        let mut tape = Tape::new();
        let tensors = params.tensors();
        for (_, m) in &tensors {
            tape.leaf((*m).clone());
        }
        let n = tensors.len();
        // tensors() layout: four 8-slot stacks, then the five projections.
        Forward {
            tape,
            params,
            obs: StackNodes::from_base(0),
            tree: StackNodes::from_base(8),
            coarse: StackNodes::from_base(16),
            refine: StackNodes::from_base(24),
            wq: 32,
            wk: 33,
            wv: 34,
            phi: 35,
            psi: 36,
            n_param_nodes: n,
        }
    }

    pub fn dims_embed(&self) -> usize {
        self.params.dims.embed
    }

    /// Registers a non-learnable input.
    pub fn input(&mut self, m: Mat) -> NodeId {
        self.tape.leaf(m)
    }

    fn stack(&mut self, nodes: StackNodes, x: NodeId) -> NodeId {
        let mut h = x;
        for i in 0..3 {
            let lin = self.tape.matmul(h, nodes.w[i]);
            h = self.tape.add_row(lin, nodes.b[i]);
            if i < 2 {
                h = self.tape.prelu(h, nodes.slopes[i]);
            }
        }
        h
    }

    /// `[N, 2*t_obs] -> [N, D]`, rows independent, weights shared.
    pub fn encode_observed(&mut self, x: NodeId) -> NodeId {
        self.stack(self.obs, x)
    }

    /// `[M, 2*depth] -> [M, D]`, rows independent, weights shared.
    pub fn encode_paths(&mut self, x: NodeId) -> NodeId {
        self.stack(self.tree, x)
    }

    /// Single-head scaled dot-product self-attention over the N agents of
    /// one window, no positional encoding: `[N, D] -> [N, D]`.
    pub fn interaction_attention(&mut self, fx: NodeId) -> NodeId {
        let q = self.tape.matmul(fx, self.wq);
        let k = self.tape.matmul(fx, self.wk);
        let v = self.tape.matmul(fx, self.wv);
        let scores = self.tape.matmul_nt(q, k);
        let scaled = self.tape.scale(scores, 1.0 / (self.params.dims.embed as f64).sqrt());
        let attn = self.tape.softmax_rows(scaled);
        self.tape.matmul(attn, v)
    }

    /// Confidence over paths: `softmax(phi(F_s) . psi(f_i))`, max-shifted.
    pub fn score_paths(&mut self, fs_row: NodeId, ftree: NodeId) -> NodeId {
        let q = self.tape.matmul(fs_row, self.phi);
        let k = self.tape.matmul(ftree, self.psi);
        let logits = self.tape.matmul_nt(q, k);
        self.tape.softmax_rows(logits)
    }

    /// Coarse regression from the selected path embedding fused with the
    /// agent's interaction embedding: `-> [1, 2*depth]`.
    pub fn coarse_head(&mut self, f_star: NodeId, fs_row: NodeId) -> NodeId {
        let fused = self.tape.concat_cols(f_star, fs_row);
        self.stack(self.coarse, fused)
    }

    /// Refinement from a flattened coarse trajectory fused with the agent's
    /// interaction embedding: `-> [1, 2*horizon]`.
    pub fn refine(&mut self, coarse_flat: NodeId, fs_row: NodeId) -> NodeId {
        let fused = self.tape.concat_cols(coarse_flat, fs_row);
        self.stack(self.refine, fused)
    }

    /// Gradients of `loss` for every parameter tensor, in
    /// `ModelParams::tensors` order.
    pub fn param_grads(&self, loss: NodeId) -> Vec<Mat> {
        let mut grads = self.tape.backward(loss);
        grads.truncate(self.n_param_nodes);
        grads
    }
}

fn flatten_points(points: &[Point2]) -> Vec<f64> {
    let mut out = Vec::with_capacity(points.len() * 2);
    for p in points {
        out.push(p.x);
        out.push(p.y);
    }
    out
}

fn unflatten_points(flat: &[f64]) -> Vec<Point2> {
    flat.chunks(2).map(|c| Point2::new(c[0], c[1])).collect()
}

fn embedding_from(mat: &Mat, row: usize) -> Embedding {
    Embedding { values: mat.row(row).to_vec() }
}

/// Encodes one flattened observed track (agent-centric coordinates).
pub fn encode_observed(observed: &[f64], params: &ModelParams) -> Result<Embedding> {
    if observed.len() != params.dims.obs_input() {
        return Err(Error::invalid_input(format!(
            "observed input length {} != 2*t_obs = {}",
            observed.len(),
            params.dims.obs_input()
        )));
    }
    let mut fwd = Forward::new(params);
    let x = fwd.input(Mat::row_vector(observed.to_vec()));
    let y = fwd.encode_observed(x);
    Ok(embedding_from(fwd.tape.value(y), 0))
}

/// Encodes each flattened path independently with shared weights.
pub fn encode_paths(paths: &[Vec<f64>], params: &ModelParams) -> Result<Vec<Embedding>> {
    let width = params.dims.path_input();
    if paths.iter().any(|p| p.len() != width) {
        return Err(Error::invalid_input(format!("every path input must have length {width}")));
    }
    let mut data = Vec::with_capacity(paths.len() * width);
    for p in paths {
        data.extend_from_slice(p);
    }
    let mut fwd = Forward::new(params);
    let x = fwd.input(Mat::from_vec(paths.len(), width, data));
    let y = fwd.encode_paths(x);
    let out = fwd.tape.value(y);
    Ok((0..paths.len()).map(|r| embedding_from(out, r)).collect())
}

/// Self-attention over the co-present agents' observed encodings.
pub fn interaction_attention(
    scene_embeddings: &[Embedding],
    params: &ModelParams,
) -> Result<Vec<Embedding>> {
    if scene_embeddings.is_empty() {
        return Err(Error::invalid_input("attention needs at least one agent"));
    }
    let d = params.dims.embed;
    if scene_embeddings.iter().any(|e| e.values.len() != d) {
        return Err(Error::invalid_input(format!("embeddings must have dimension {d}")));
    }
    let mut data = Vec::with_capacity(scene_embeddings.len() * d);
    for e in scene_embeddings {
        data.extend_from_slice(&e.values);
    }
    let mut fwd = Forward::new(params);
    let x = fwd.input(Mat::from_vec(scene_embeddings.len(), d, data));
    let y = fwd.interaction_attention(x);
    let out = fwd.tape.value(y);
    Ok((0..scene_embeddings.len()).map(|r| embedding_from(out, r)).collect())
}

/// Scores every path embedding against one agent's interaction embedding.
pub fn score_paths(
    agent_interaction: &Embedding,
    tree_embeddings: &[Embedding],
    params: &ModelParams,
) -> Result<ConfidenceVector> {
    if tree_embeddings.is_empty() {
        return Err(Error::invalid_input("no path embeddings to score"));
    }
    let d = params.dims.embed;
    let mut data = Vec::with_capacity(tree_embeddings.len() * d);
    for e in tree_embeddings {
        if e.values.len() != d {
            return Err(Error::invalid_input(format!("embeddings must have dimension {d}")));
        }
        data.extend_from_slice(&e.values);
    }
    let mut fwd = Forward::new(params);
    let fs = fwd.input(Mat::row_vector(agent_interaction.values.clone()));
    let ftree = fwd.input(Mat::from_vec(tree_embeddings.len(), d, data));
    let probs = fwd.score_paths(fs, ftree);
    Ok(ConfidenceVector { probs: fwd.tape.value(probs).data.clone() })
}

/// Regresses the coarse trajectory from the selected path embedding.
pub fn coarse_head(
    selected_path: &Embedding,
    agent_interaction: &Embedding,
    params: &ModelParams,
) -> Result<Vec<Point2>> {
    let mut fwd = Forward::new(params);
    let f_star = fwd.input(Mat::row_vector(selected_path.values.clone()));
    let fs = fwd.input(Mat::row_vector(agent_interaction.values.clone()));
    let y = fwd.coarse_head(f_star, fs);
    Ok(unflatten_points(&fwd.tape.value(y).data))
}

/// Refines a coarse trajectory to one position per future step.
pub fn refine(
    coarse: &[Point2],
    agent_interaction: &Embedding,
    params: &ModelParams,
) -> Result<Vec<Point2>> {
    if coarse.len() != params.dims.depth {
        return Err(Error::invalid_input(format!(
            "coarse trajectory must have {} breakpoints, got {}",
            params.dims.depth,
            coarse.len()
        )));
    }
    let mut fwd = Forward::new(params);
    let c = fwd.input(Mat::row_vector(flatten_points(coarse)));
    let fs = fwd.input(Mat::row_vector(agent_interaction.values.clone()));
    let y = fwd.refine(c, fs);
    Ok(unflatten_points(&fwd.tape.value(y).data))
}

/// Mean elementwise Huber loss over the coordinates of two point sequences.
pub fn huber(pred: &[Point2], target: &[Point2], delta: f64) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::invalid_input(format!(
            "shape mismatch: {} vs {} points",
            pred.len(),
            target.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::invalid_input("empty point sequences"));
    }
    let mut sum = 0.0;
    for (p, t) in pred.iter().zip(target) {
        for e in [(p.x - t.x).abs(), (p.y - t.y).abs()] {
            sum += if e <= delta { 0.5 * e * e } else { delta * (e - 0.5 * delta) };
        }
    }
    Ok(sum / (2 * pred.len()) as f64)
}

/// Classification loss `-ln p[q]` of a confidence vector at its label.
pub fn cross_entropy(p: &ConfidenceVector, q: &PathLabel) -> f64 {
    -p.probs[q.index].ln()
}

/// Weighted sum of the three training losses.
#[allow(clippy::too_many_arguments)]
pub fn total_loss(
    coarse_pred: &[Point2],
    coarse_gt: &[Point2],
    p: &ConfidenceVector,
    q: &PathLabel,
    fine_pred: &[Point2],
    future: &[Point2],
    lambdas: (f64, f64, f64),
    huber_delta: f64,
) -> Result<f64> {
    let l_coarse = huber(coarse_pred, coarse_gt, huber_delta)?;
    let l_clf = cross_entropy(p, q);
    let l_ref = huber(fine_pred, future, huber_delta)?;
    Ok(lambdas.0 * l_coarse + lambdas.1 * l_clf + lambdas.2 * l_ref)
}

/// One scored hypothesis for one agent, in world coordinates.
#[derive(Debug, Clone)]
pub struct Hypothesis {
    pub confidence: f64,
    pub path_index: usize,
    pub fine: Vec<Point2>,
}

#[derive(Debug, Clone)]
pub struct AgentPrediction {
    pub agent_id: u64,
    pub hypotheses: Vec<Hypothesis>,
}

/// Predicts the top-`k` refined trajectories per agent of one window.
///
/// Trees are built in world coordinates; encoder inputs are translated to
/// each agent's last observed position and predictions are translated back.
/// Hypotheses come out sorted by descending confidence.
pub fn predict(
    window: &SceneWindow,
    params: &ModelParams,
    tree_config: &TreeConfig,
    k: usize,
) -> Result<Vec<AgentPrediction>> {
    let m = tree_config.path_count();
    if k == 0 || k > m {
        return Err(Error::invalid_input(format!(
            "k must be in 1..={m} (width^depth), got {k}"
        )));
    }
    if tree_config.depth != params.dims.depth || tree_config.horizon != params.dims.horizon {
        return Err(Error::config(format!(
            "tree depth/horizon ({}, {}) do not match model dims ({}, {})",
            tree_config.depth, tree_config.horizon, params.dims.depth, params.dims.horizon
        )));
    }
    for s in &window.samples {
        if s.observed.len() != params.dims.t_obs {
            return Err(Error::invalid_input(format!(
                "agent {} has {} observed steps, model expects {}",
                s.agent_id,
                s.observed.len(),
                params.dims.t_obs
            )));
        }
    }

    let (normalized, transform) = normalize_window(window);
    let n = window.samples.len();
    let d_obs = params.dims.obs_input();

    let mut fwd = Forward::new(params);
    let mut obs_data = Vec::with_capacity(n * d_obs);
    for s in &normalized.samples {
        obs_data.extend_from_slice(&flatten_points(&s.observed));
    }
    let obs = fwd.input(Mat::from_vec(n, d_obs, obs_data));
    let fx = fwd.encode_observed(obs);
    let fs = fwd.interaction_attention(fx);

    let mut out = Vec::with_capacity(n);
    for (i, sample) in window.samples.iter().enumerate() {
        let tree = build_tree(&sample.observed, tree_config)?;
        let paths = enumerate_paths(&tree);
        let origin = transform.origins[i];

        let mut path_data = Vec::with_capacity(m * params.dims.path_input());
        for p in &paths {
            for bp in &p.breakpoints {
                let local = *bp - origin;
                path_data.push(local.x);
                path_data.push(local.y);
            }
        }
        let path_in = fwd.input(Mat::from_vec(m, params.dims.path_input(), path_data));
        let ftree = fwd.encode_paths(path_in);
        let fs_row = fwd.tape.select_row(fs, i);
        let probs_node = fwd.score_paths(fs_row, ftree);
        let confidence = ConfidenceVector { probs: fwd.tape.value(probs_node).data.clone() };

        let mut hypotheses = Vec::with_capacity(k);
        for idx in confidence.top_k(k) {
            let f_star = fwd.tape.select_row(ftree, idx);
            let coarse = fwd.coarse_head(f_star, fs_row);
            let fine = fwd.refine(coarse, fs_row);
            let local = unflatten_points(&fwd.tape.value(fine).data);
            hypotheses.push(Hypothesis {
                confidence: confidence.probs[idx],
                path_index: paths[idx].index,
                fine: local.iter().map(|&p| p + origin).collect(),
            });
        }
        out.push(AgentPrediction { agent_id: sample.agent_id, hypotheses });
    }
    Ok(out)
}
