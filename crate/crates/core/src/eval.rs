//! ADE/FDE metrics, the best-of-K protocol, training-free raw-tree
//! evaluation, top-K selection accuracy, and sweep plumbing with CSV/JSON
//! reports.

use serde::Serialize;

use crate::coarse_gt::{coarsify_gt, CoarseGroundTruth};
use crate::data::{SceneWindow, Unit};
use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::neural::{predict, ModelParams};
use crate::tree::{build_tree, enumerate_paths, CoarsePath, TreeConfig};

/// Mean per-step Euclidean distance between prediction and ground truth.
pub fn ade(pred: &[Point2], gt: &[Point2]) -> Result<f64> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(Error::invalid_input(format!(
            "trajectory length mismatch: {} vs {}",
            pred.len(),
            gt.len()
        )));
    }
    let sum: f64 = pred.iter().zip(gt).map(|(p, g)| p.dist(*g)).sum();
    Ok(sum / pred.len() as f64)
}

/// Euclidean distance at the final step.
pub fn fde(pred: &[Point2], gt: &[Point2]) -> Result<f64> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(Error::invalid_input(format!(
            "trajectory length mismatch: {} vs {}",
            pred.len(),
            gt.len()
        )));
    }
    Ok(pred[pred.len() - 1].dist(gt[gt.len() - 1]))
}

/// Best-of-K protocol: minimum ADE and minimum FDE over the hypothesis
/// set, minimized independently (the winners may differ).
pub fn best_of_k(preds: &[Vec<Point2>], gt: &[Point2]) -> Result<(f64, f64)> {
    if preds.is_empty() {
        return Err(Error::invalid_input("empty hypothesis set"));
    }
    let mut min_ade = f64::INFINITY;
    let mut min_fde = f64::INFINITY;
    for pred in preds {
        min_ade = min_ade.min(ade(pred, gt)?);
        min_fde = min_fde.min(fde(pred, gt)?);
    }
    Ok((min_ade, min_fde))
}

/// One evaluation result row.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub scene: String,
    pub k: usize,
    pub depth: usize,
    pub width: usize,
    pub horizon: usize,
    pub ade: f64,
    pub fde: f64,
    pub n_agents: usize,
    pub unit: Unit,
}

pub const REPORT_CSV_HEADER: &str = "scene,k,depth,width,horizon,ade,fde,n_agents,unit";

impl MetricsReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{:.6},{:.6},{},{}",
            self.scene,
            self.k,
            self.depth,
            self.width,
            self.horizon,
            self.ade,
            self.fde,
            self.n_agents,
            self.unit
        )
    }
}

pub fn reports_csv(reports: &[MetricsReport]) -> String {
    let mut out = String::from(REPORT_CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

pub fn reports_json(reports: &[MetricsReport]) -> String {
    let mut s = serde_json::to_string_pretty(reports).expect("reports serialize");
    s.push('\n');
    s
}

fn check_horizon(windows: &[SceneWindow], horizon: usize) -> Result<()> {
    for w in windows {
        for s in &w.samples {
            if s.future.len() != horizon {
                return Err(Error::invalid_input(format!(
                    "agent {} in scene {} has future length {}, expected {}",
                    s.agent_id,
                    w.scene_name,
                    s.future.len(),
                    horizon
                )));
            }
        }
    }
    Ok(())
}

/// Best-over-all-paths error of one agent's raw tree.
fn raw_tree_agent(
    observed: &[Point2],
    future: &[Point2],
    config: &TreeConfig,
) -> Result<(f64, f64)> {
    let tree = build_tree(observed, config)?;
    let paths = enumerate_paths(&tree);
    let hyps: Vec<Vec<Point2>> =
        paths.iter().map(|p| tree.interpolate(p, config.horizon)).collect();
    best_of_k(&hyps, future)
}

/// Maps windows to per-agent values on `jobs` threads. Outputs stay in
/// window order and each value is a pure function of its window, so the
/// result is identical for any thread count.
fn per_agent_map<T, F>(windows: &[SceneWindow], jobs: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&SceneWindow) -> Result<Vec<T>> + Sync,
{
    let jobs = jobs.max(1).min(windows.len().max(1));
    if jobs == 1 {
        let mut out = Vec::new();
        for w in windows {
            out.extend(f(w)?);
        }
        return Ok(out);
    }
    let chunk_len = windows.len().div_ceil(jobs);
    let chunks: Vec<&[SceneWindow]> = windows.chunks(chunk_len).collect();
    let results: Vec<Result<Vec<T>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = chunks
            .into_iter()
            .map(|chunk| {
                let f = &f;
                scope.spawn(move || {
                    let mut acc = Vec::new();
                    for w in chunk {
                        acc.extend(f(w)?);
                    }
                    Ok(acc)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut out = Vec::new();
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

/// Training-free evaluation: each agent's error is the best over all
/// `width^depth` interpolated tree paths, averaged per agent.
pub fn raw_tree_eval(
    windows: &[SceneWindow],
    config: &TreeConfig,
    scene: &str,
    unit: Unit,
    jobs: usize,
) -> Result<MetricsReport> {
    config.validate()?;
    check_horizon(windows, config.horizon)?;
    let pairs = per_agent_map(windows, jobs, |w| {
        w.samples
            .iter()
            .map(|s| raw_tree_agent(&s.observed, &s.future, config))
            .collect()
    })?;
    if pairs.is_empty() {
        return Err(Error::invalid_input("no agents to evaluate"));
    }
    let n = pairs.len();
    let (sum_ade, sum_fde) = pairs
        .iter()
        .fold((0.0, 0.0), |(a, f), &(pa, pf)| (a + pa, f + pf));
    Ok(MetricsReport {
        scene: scene.to_string(),
        k: config.path_count(),
        depth: config.depth,
        width: config.width,
        horizon: config.horizon,
        ade: sum_ade / n as f64,
        fde: sum_fde / n as f64,
        n_agents: n,
        unit,
    })
}

/// Best-of-K evaluation of a trained model.
pub fn model_eval(
    windows: &[SceneWindow],
    params: &ModelParams,
    config: &TreeConfig,
    k: usize,
    scene: &str,
    unit: Unit,
) -> Result<MetricsReport> {
    check_horizon(windows, config.horizon)?;
    let mut sum_ade = 0.0;
    let mut sum_fde = 0.0;
    let mut n = 0usize;
    for window in windows {
        let predictions = predict(window, params, config, k)?;
        for (sample, pred) in window.samples.iter().zip(&predictions) {
            let hyps: Vec<Vec<Point2>> =
                pred.hypotheses.iter().map(|h| h.fine.clone()).collect();
            let (a, f) = best_of_k(&hyps, &sample.future)?;
            sum_ade += a;
            sum_fde += f;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::invalid_input("no agents to evaluate"));
    }
    Ok(MetricsReport {
        scene: scene.to_string(),
        k,
        depth: config.depth,
        width: config.width,
        horizon: config.horizon,
        ade: sum_ade / n as f64,
        fde: sum_fde / n as f64,
        n_agents: n,
        unit,
    })
}

/// Which distance picks the ground-truth-closest path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionCriterion {
    MinAde,
    MinFde,
}

/// Closest path index under the criterion, ties to the lowest index.
fn closest_index(
    paths: &[CoarsePath],
    gt: &CoarseGroundTruth,
    criterion: SelectionCriterion,
) -> Result<usize> {
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for (i, path) in paths.iter().enumerate() {
        if path.breakpoints.len() != gt.breakpoints.len() {
            return Err(Error::invalid_input("breakpoint count mismatch"));
        }
        let d = match criterion {
            SelectionCriterion::MinAde => {
                let sum: f64 = path
                    .breakpoints
                    .iter()
                    .zip(&gt.breakpoints)
                    .map(|(a, b)| a.dist(*b))
                    .sum();
                sum / path.breakpoints.len() as f64
            }
            SelectionCriterion::MinFde => {
                path.breakpoints[path.breakpoints.len() - 1].dist(gt.breakpoints[gt.breakpoints.len() - 1])
            }
        };
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    Ok(best)
}

/// Fraction of agents whose criterion-closest path appears among the top-K
/// scores produced by `scorer`. The scorer sees one agent at a time and
/// returns M raw scores (higher is more confident).
pub fn topk_selection_accuracy<F>(
    windows: &[SceneWindow],
    mut scorer: F,
    config: &TreeConfig,
    k: usize,
    criterion: SelectionCriterion,
) -> Result<f64>
where
    F: FnMut(&SceneWindow, usize, &[CoarsePath]) -> Result<Vec<f64>>,
{
    let m = config.path_count();
    if k == 0 || k > m {
        return Err(Error::invalid_input(format!("k must be in 1..={m}, got {k}")));
    }
    check_horizon(windows, config.horizon)?;
    let mut hits = 0usize;
    let mut total = 0usize;
    for window in windows {
        for (i, sample) in window.samples.iter().enumerate() {
            let tree = build_tree(&sample.observed, config)?;
            let paths = enumerate_paths(&tree);
            let gt = coarsify_gt(&sample.future, config.interval, config.depth)?;
            let target = closest_index(&paths, &gt, criterion)?;
            let scores = scorer(window, i, &paths)?;
            if scores.len() != m {
                return Err(Error::invalid_input(format!(
                    "scorer returned {} scores for {m} paths",
                    scores.len()
                )));
            }
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&a, &b| {
                scores[b].partial_cmp(&scores[a]).expect("finite scores").then(a.cmp(&b))
            });
            if order[..k].contains(&target) {
                hits += 1;
            }
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::invalid_input("no agents to evaluate"));
    }
    Ok(hits as f64 / total as f64)
}

/// Uniform-random scorer with its own seeded stream.
pub fn uniform_random_scorer(
    seed: u64,
) -> impl FnMut(&SceneWindow, usize, &[CoarsePath]) -> Result<Vec<f64>> {
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    move |_, _, paths| Ok((0..paths.len()).map(|_| rng.gen::<f64>()).collect())
}

/// Selection accuracy of a trained model's confidence scores.
pub fn model_topk_selection_accuracy(
    windows: &[SceneWindow],
    params: &ModelParams,
    config: &TreeConfig,
    k: usize,
    criterion: SelectionCriterion,
) -> Result<f64> {
    use crate::data::normalize_window;
    use crate::neural::{Forward, Mat};

    let m = config.path_count();
    if k == 0 || k > m {
        return Err(Error::invalid_input(format!("k must be in 1..={m}, got {k}")));
    }
    check_horizon(windows, config.horizon)?;
    let mut hits = 0usize;
    let mut total = 0usize;
    for window in windows {
        let (normalized, transform) = normalize_window(window);
        let n = window.samples.len();
        let d_obs = params.dims.obs_input();
        let mut fwd = Forward::new(params);
        let mut obs_data = Vec::with_capacity(n * d_obs);
        for s in &normalized.samples {
            for p in &s.observed {
                obs_data.push(p.x);
                obs_data.push(p.y);
            }
        }
        let obs = fwd.input(Mat::from_vec(n, d_obs, obs_data));
        let fx = fwd.encode_observed(obs);
        let fs = fwd.interaction_attention(fx);

        for (i, sample) in window.samples.iter().enumerate() {
            let tree = build_tree(&sample.observed, config)?;
            let paths = enumerate_paths(&tree);
            let gt = coarsify_gt(&sample.future, config.interval, config.depth)?;
            let target = closest_index(&paths, &gt, criterion)?;

            let origin = transform.origins[i];
            let mut path_data = Vec::with_capacity(m * params.dims.path_input());
            for p in &paths {
                for bp in &p.breakpoints {
                    path_data.push(bp.x - origin.x);
                    path_data.push(bp.y - origin.y);
                }
            }
            let path_in = fwd.input(Mat::from_vec(m, params.dims.path_input(), path_data));
            let ftree = fwd.encode_paths(path_in);
            let fs_row = fwd.tape.select_row(fs, i);
            let probs_node = fwd.score_paths(fs_row, ftree);
            let probs = fwd.tape.value(probs_node).row(0).to_vec();

            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&a, &b| {
                probs[b].partial_cmp(&probs[a]).expect("finite probs").then(a.cmp(&b))
            });
            if order[..k].contains(&target) {
                hits += 1;
            }
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::invalid_input("no agents to evaluate"));
    }
    Ok(hits as f64 / total as f64)
}

/// One sweep point: a label plus the tree configuration to evaluate.
#[derive(Debug, Clone)]
pub struct AblationSetting {
    pub label: String,
    pub tree: TreeConfig,
}

/// Runs every setting through `runner`, collecting one report per setting.
pub fn ablate<F>(settings: &[AblationSetting], mut runner: F) -> Result<Vec<MetricsReport>>
where
    F: FnMut(&AblationSetting) -> Result<MetricsReport>,
{
    settings.iter().map(|s| runner(s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::random_walk_windows;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn pts(raw: &[(f64, f64)]) -> Vec<Point2> {
        raw.iter().map(|&(x, y)| Point2::new(x, y)).collect()
    }

    #[test]
    fn ade_fde_basics() {
        let gt = pts(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]);
        assert_eq!(ade(&gt, &gt).unwrap(), 0.0);
        assert_eq!(fde(&gt, &gt).unwrap(), 0.0);

        let off: Vec<Point2> = gt.iter().map(|&p| p + Point2::new(3.0, 4.0)).collect();
        assert!((ade(&off, &gt).unwrap() - 5.0).abs() < 1e-12);
        assert!((fde(&off, &gt).unwrap() - 5.0).abs() < 1e-12);

        let final_off = pts(&[(0.0, 0.0), (1.0, 0.0), (2.0, 2.0)]);
        assert!((fde(&final_off, &gt).unwrap() - 2.0).abs() < 1e-12);
        // FDE ignores every non-final step.
        let scrambled = pts(&[(9.0, 9.0), (-4.0, 2.0), (2.0, 2.0)]);
        assert_eq!(fde(&scrambled, &gt).unwrap(), fde(&final_off, &gt).unwrap());

        // Single-step horizon collapses ADE to FDE.
        let one_p = pts(&[(1.0, 1.0)]);
        let one_g = pts(&[(4.0, 5.0)]);
        assert_eq!(ade(&one_p, &one_g).unwrap(), fde(&one_p, &one_g).unwrap());

        assert!(ade(&gt, &one_g).is_err());
    }

    #[test]
    fn ade_fde_match_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let n = rng.gen_range(1..20);
            let pred: Vec<Point2> = (0..n)
                .map(|_| Point2::new(rng.gen_range(-9.0..9.0), rng.gen_range(-9.0..9.0)))
                .collect();
            let gt: Vec<Point2> = (0..n)
                .map(|_| Point2::new(rng.gen_range(-9.0..9.0), rng.gen_range(-9.0..9.0)))
                .collect();
            // Naive double-loop oracle.
            let mut sum = 0.0;
            for i in 0..n {
                sum += ((pred[i].x - gt[i].x).powi(2) + (pred[i].y - gt[i].y).powi(2)).sqrt();
            }
            let oracle_ade = sum / n as f64;
            let oracle_fde = ((pred[n - 1].x - gt[n - 1].x).powi(2)
                + (pred[n - 1].y - gt[n - 1].y).powi(2))
            .sqrt();
            assert!((ade(&pred, &gt).unwrap() - oracle_ade).abs() < 1e-12);
            assert!((fde(&pred, &gt).unwrap() - oracle_fde).abs() < 1e-12);
        }
    }

    #[test]
    fn best_of_k_contracts() {
        let gt = pts(&[(0.0, 0.0), (1.0, 0.0)]);
        let good = pts(&[(0.1, 0.0), (1.1, 0.0)]);
        let bad = pts(&[(5.0, 5.0), (6.0, 5.0)]);

        let single = best_of_k(&[good.clone()], &gt).unwrap();
        assert_eq!(single, (ade(&good, &gt).unwrap(), fde(&good, &gt).unwrap()));

        // Duplicating the best hypothesis changes nothing.
        let dup = best_of_k(&[good.clone(), good.clone(), good.clone()], &gt).unwrap();
        assert_eq!(dup, single);

        // Nested prefixes are monotone.
        let sets = [
            vec![bad.clone()],
            vec![bad.clone(), good.clone()],
            vec![bad, good, pts(&[(0.0, 0.0), (1.0, 0.0)])],
        ];
        let mut prev = (f64::INFINITY, f64::INFINITY);
        for set in &sets {
            let cur = best_of_k(set, &gt).unwrap();
            assert!(cur.0 <= prev.0 && cur.1 <= prev.1);
            prev = cur;
        }
    }

    #[test]
    fn best_of_k_minimizers_may_differ() {
        let gt = pts(&[(0.0, 0.0), (10.0, 0.0)]);
        // Hypothesis A: great everywhere but the final step.
        let a = pts(&[(0.0, 0.0), (10.0, 3.0)]);
        // Hypothesis B: bad on average, perfect final step.
        let b = pts(&[(0.0, 5.0), (10.0, 0.0)]);
        let (min_ade, min_fde) = best_of_k(&[a.clone(), b.clone()], &gt).unwrap();
        assert_eq!(min_ade, ade(&a, &gt).unwrap());
        assert_eq!(min_fde, fde(&b, &gt).unwrap());
    }

    #[test]
    fn raw_tree_width1_equals_central_path() {
        let windows = random_walk_windows(20, 2, 8, 12, 7);
        let w1 = TreeConfig::new(4, 3, 1, vec![0.0; 3], 12).unwrap();
        let report = raw_tree_eval(&windows, &w1, "walk", Unit::Meters, 1).unwrap();

        // Oracle: central path only, via direct interpolation.
        let mut sum_ade = 0.0;
        let mut sum_fde = 0.0;
        let mut n = 0;
        let w3 = TreeConfig::new(4, 3, 3, vec![0.5; 3], 12).unwrap();
        for w in &windows {
            for s in &w.samples {
                let tree = build_tree(&s.observed, &w3).unwrap();
                let paths = enumerate_paths(&tree);
                let central = tree.interpolate(&paths[13], 12);
                sum_ade += ade(&central, &s.future).unwrap();
                sum_fde += fde(&central, &s.future).unwrap();
                n += 1;
            }
        }
        assert!((report.ade - sum_ade / n as f64).abs() < 1e-9);
        assert!((report.fde - sum_fde / n as f64).abs() < 1e-9);
    }

    #[test]
    fn raw_tree_eval_is_thread_count_invariant() {
        let windows = random_walk_windows(33, 3, 8, 12, 11);
        let cfg = TreeConfig::new(4, 3, 3, vec![0.7, 0.5, 0.7], 12).unwrap();
        let a = raw_tree_eval(&windows, &cfg, "walk", Unit::Meters, 1).unwrap();
        let b = raw_tree_eval(&windows, &cfg, "walk", Unit::Meters, 4).unwrap();
        assert_eq!(a.ade.to_bits(), b.ade.to_bits());
        assert_eq!(a.fde.to_bits(), b.fde.to_bits());
        assert_eq!(a.n_agents, b.n_agents);
    }

    #[test]
    fn full_k_selection_always_hits() {
        let windows = random_walk_windows(10, 2, 8, 12, 3);
        let cfg = TreeConfig::new(4, 3, 3, vec![0.7, 0.5, 0.7], 12).unwrap();
        let acc = topk_selection_accuracy(
            &windows,
            uniform_random_scorer(1),
            &cfg,
            27,
            SelectionCriterion::MinFde,
        )
        .unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn reports_serialize_deterministically() {
        let report = MetricsReport {
            scene: "eth".into(),
            k: 27,
            depth: 3,
            width: 3,
            horizon: 12,
            ade: 0.123456789,
            fde: 1.23456789,
            n_agents: 42,
            unit: Unit::Meters,
        };
        let csv = reports_csv(std::slice::from_ref(&report));
        assert!(csv.starts_with(REPORT_CSV_HEADER));
        assert!(csv.contains("eth,27,3,3,12,0.123457,1.234568,42,meters"));
        let json = reports_json(std::slice::from_ref(&report));
        assert!(json.contains("\"unit\": \"meters\""));
        assert_eq!(csv, reports_csv(std::slice::from_ref(&report)));
    }
}
