//! End-to-end integration over the synthetic corpus: training improves
//! selection, the teacher-forced refinement head reconstructs noiseless
//! paths, checkpoints reproduce predictions bitwise, and world-frame
//! metrics agree with the normalize/invert pipeline.

use trajtree::coarse_gt::{closest_path_label, coarsify_gt};
use trajtree::data::normalize_window;
use trajtree::eval::{ade, model_topk_selection_accuracy, SelectionCriterion};
use trajtree::geometry::Point2;
use trajtree::neural::{
    self, predict, refine, Embedding, Forward, Mat, ModelDims, ModelParams, TrainConfig,
};
use trajtree::synthetic::{tree_path_corpus, TreePathCorpusConfig};
use trajtree::tree::{build_tree, enumerate_paths};

fn corpus() -> (TreePathCorpusConfig, Vec<trajtree::data::SceneWindow>) {
    // Small-noise corpus: futures sit on tree paths with 2% jitter.
    let cfg = TreePathCorpusConfig {
        n_windows: 1024,
        noise_frac: 0.02,
        seed: 31,
        ..Default::default()
    };
    let windows = tree_path_corpus(&cfg).unwrap();
    (cfg, windows)
}

#[test]
fn training_pipeline_meets_module_invariants() {
    let (gen_cfg, windows) = corpus();
    let dims = ModelDims::new(8, 3, 12, 64).unwrap();
    let train_cfg = TrainConfig { epochs: 200, seed: 5, ..TrainConfig::default() };
    let (params, records) = neural::train(&windows, &gen_cfg.tree, dims, &train_cfg).unwrap();
    assert!(records.iter().all(|r| r.total.is_finite()));

    // Selection learned far beyond chance on held-out data.
    let eval_cfg = TreePathCorpusConfig { n_windows: 96, seed: 77, ..gen_cfg.clone() };
    let eval_windows = tree_path_corpus(&eval_cfg).unwrap();
    let acc = model_topk_selection_accuracy(
        &eval_windows,
        &params,
        &gen_cfg.tree,
        1,
        SelectionCriterion::MinAde,
    )
    .unwrap();
    assert!(acc > 0.9, "top-1 selection accuracy {acc:.3}");

    // Teacher-forced refinement reconstructs the noiseless generating path
    // to under 0.05 segment lengths, averaged over held-out agents.
    let mut norm_err = 0.0;
    let mut n = 0usize;
    for window in &eval_windows {
        let (normalized, transform) = normalize_window(window);
        let obs_width = 2 * dims.t_obs;
        let mut fwd = Forward::new(&params);
        let mut obs_data = Vec::new();
        for s in &normalized.samples {
            for p in &s.observed {
                obs_data.push(p.x);
                obs_data.push(p.y);
            }
        }
        let obs = fwd.input(Mat::from_vec(normalized.samples.len(), obs_width, obs_data));
        let fx = fwd.encode_observed(obs);
        let fs = fwd.interaction_attention(fx);

        for (i, sample) in window.samples.iter().enumerate() {
            let tree = build_tree(&sample.observed, &gen_cfg.tree).unwrap();
            let paths = enumerate_paths(&tree);
            let cgt =
                coarsify_gt(&sample.future, gen_cfg.tree.interval, gen_cfg.tree.depth).unwrap();
            let label = closest_path_label(&paths, &cgt).unwrap();
            let ideal = tree.interpolate(&paths[label.index], gen_cfg.tree.horizon);

            let origin = transform.origins[i];
            let fs_row = fwd.tape.value(fs).row(i).to_vec();
            let coarse_local: Vec<Point2> =
                cgt.breakpoints.iter().map(|&b| b - origin).collect();
            let fine_local =
                refine(&coarse_local, &Embedding { values: fs_row }, &params).unwrap();
            let fine: Vec<Point2> = fine_local.iter().map(|&p| p + origin).collect();

            let seg = tree.seed_segment().norm();
            norm_err += ade(&fine, &ideal).unwrap() / seg;
            n += 1;
        }
    }
    norm_err /= n as f64;
    assert!(
        norm_err < 0.05,
        "teacher-forced refinement ADE {norm_err:.4} segment-lengths (limit 0.05)"
    );

    // Checkpoint round trip reproduces predictions bit for bit.
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    params.save(&path).unwrap();
    let reloaded = ModelParams::load(&path).unwrap();
    let before = predict(&eval_windows[0], &params, &gen_cfg.tree, 5).unwrap();
    let after = predict(&eval_windows[0], &reloaded, &gen_cfg.tree, 5).unwrap();
    for (a, b) in before.iter().zip(&after) {
        for (ha, hb) in a.hypotheses.iter().zip(&b.hypotheses) {
            assert_eq!(ha.confidence.to_bits(), hb.confidence.to_bits());
            for (pa, pb) in ha.fine.iter().zip(&hb.fine) {
                assert_eq!(pa.x.to_bits(), pb.x.to_bits());
                assert_eq!(pa.y.to_bits(), pb.y.to_bits());
            }
        }
    }
}

#[test]
fn metrics_agree_between_raw_and_normalized_pipelines() {
    let (_, windows) = corpus();
    for window in windows.iter().take(32) {
        let (normalized, transform) = normalize_window(window);
        for (i, sample) in window.samples.iter().enumerate() {
            // A fake prediction in world coordinates and its local twin.
            let pred_world: Vec<Point2> = sample
                .future
                .iter()
                .map(|&p| p + Point2::new(0.25, -0.4))
                .collect();
            let pred_local: Vec<Point2> = pred_world
                .iter()
                .map(|&p| p - transform.origins[i])
                .collect();
            let restored = transform.restore(i, &pred_local);

            let direct = ade(&pred_world, &sample.future).unwrap();
            let via_local = ade(&restored, &sample.future).unwrap();
            assert!((direct - via_local).abs() < 1e-9);

            let local_metric = ade(&pred_local, &normalized.samples[i].future).unwrap();
            assert!((direct - local_metric).abs() < 1e-9);
        }
    }
}
