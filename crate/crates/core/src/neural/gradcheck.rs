//! Finite-difference verification of the tape's analytic gradients. The
//! numeric side only ever calls a forward-evaluation closure, so it stays
//! independent of the reverse-mode path it checks.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::neural::params::ModelParams;
use crate::neural::tape::Mat;
use crate::neural::train::{batch_loss_and_grads, batch_loss_value, PreparedWindow, TrainConfig};

/// Central difference `(f(x+h) - f(x-h)) / 2h`.
pub fn central_difference<F>(mut f: F, x: f64, h: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    Ok((f(x + h)? - f(x - h)?) / (2.0 * h))
}

#[derive(Debug, Clone)]
pub struct GradCheckFailure {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub failures: Vec<GradCheckFailure>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn merge(&mut self, other: GradCheckReport) {
        self.checked += other.checked;
        self.max_rel_error = self.max_rel_error.max(other.max_rel_error);
        self.failures.extend(other.failures);
    }
}

/// Checks analytic parameter gradients against central differences of a
/// forward-only loss. `picks_per_tensor` entries of every tensor are
/// sampled; gradients below `abs_floor` on both sides are accepted without
/// a relative comparison (they sit inside finite-difference noise).
pub fn check_gradients_with<F>(
    params: &ModelParams,
    loss: F,
    analytic: &[Mat],
    picks_per_tensor: usize,
    h: f64,
    rel_tol: f64,
    abs_floor: f64,
    seed: u64,
) -> Result<GradCheckReport>
where
    F: Fn(&ModelParams) -> Result<f64>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport::default();
    let names: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();

    for (ti, grad) in analytic.iter().enumerate() {
        let n = grad.data.len();
        let mut picks: Vec<usize> = (0..n).collect();
        if n > picks_per_tensor {
            picks.shuffle(&mut rng);
            picks.truncate(picks_per_tensor);
            picks.sort_unstable();
        }
        for &ei in &picks {
            let base = params.tensors()[ti].1.data[ei];
            let numeric = central_difference(
                |x| {
                    let mut probe = params.clone();
                    probe.tensors_mut()[ti].1.data[ei] = x;
                    loss(&probe)
                },
                base,
                h,
            )?;
            let a = grad.data[ei];
            let abs_err = (a - numeric).abs();
            let denom = a.abs().max(numeric.abs());
            let rel = abs_err / denom.max(f64::MIN_POSITIVE);
            report.checked += 1;
            // Track the worst relative error where a relative view is
            // meaningful; tiny gradients are covered by the absolute floor.
            if denom > 1e-3 {
                report.max_rel_error = report.max_rel_error.max(rel);
            }
            if abs_err > abs_floor && rel > rel_tol {
                report.failures.push(GradCheckFailure {
                    tensor: names[ti].clone(),
                    index: ei,
                    analytic: a,
                    numeric,
                    rel_error: rel,
                });
            }
        }
    }
    Ok(report)
}

/// Full-model gradient check over a prepared batch.
pub fn check_batch_gradients(
    params: &ModelParams,
    batch: &[PreparedWindow],
    cfg: &TrainConfig,
    picks_per_tensor: usize,
    h: f64,
    rel_tol: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    let (_, grads) = batch_loss_and_grads(params, batch, cfg)?;
    check_gradients_with(
        params,
        |p| batch_loss_value(p, batch, cfg),
        &grads,
        picks_per_tensor,
        h,
        rel_tol,
        1e-7,
        seed,
    )
}
