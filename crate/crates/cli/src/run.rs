//! Command implementations. Every command resolves and validates its full
//! configuration, loads data, computes, and only then creates the output
//! directory and writes artifacts, so failures never leave partial output.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Result};

use trajtree::data::{
    load_trajectory_file, make_splits_leave_one_out, parse_split_manifest, window_scenes,
    DatasetConfig, SceneWindow, SplitSpec, Unit,
};
use trajtree::eval::{
    ablate as run_settings, model_eval, model_topk_selection_accuracy, raw_tree_eval,
    reports_csv, reports_json, AblationSetting, SelectionCriterion,
};
use trajtree::neural::{self, loss_log_csv, ModelDims, ModelParams, TrainConfig};
use trajtree::presets::{angle_schedule, raw_tree_config, scene_unit, ETH_UCY_SCENES};
use trajtree::tree::TreeConfig;

use crate::{DataOpts, OutOpts, TrainOpts, TreeOpts};

pub fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<trajtree::Error>() {
        Some(trajtree::Error::Io { .. } | trajtree::Error::Parse { .. }) => 3,
        Some(trajtree::Error::Numerical(_)) => 4,
        Some(trajtree::Error::Config(_) | trajtree::Error::InvalidInput(_)) => 2,
        None => 2,
    }
}

fn data_root(opts: &DataOpts) -> PathBuf {
    opts.data_dir
        .clone()
        .or_else(|| std::env::var_os("TRAJTREE_DATA_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data"))
}

fn list_scene_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|source| trajtree::Error::Io { path: dir.to_path_buf(), source })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!(trajtree::Error::invalid_input(format!(
            "no .txt trajectory files under {}",
            dir.display()
        )));
    }
    Ok(files)
}

/// Train/test file lists for a scene: leave-one-out over the ETH-UCY scene
/// directories, or the fixed manifest split for SDD.
fn resolve_split(root: &Path, scene: &str) -> Result<SplitSpec> {
    if scene == "sdd" {
        let manifest = root.join("sdd/split.txt");
        let text = fs::read_to_string(&manifest)
            .map_err(|source| trajtree::Error::Io { path: manifest.clone(), source })?;
        return Ok(parse_split_manifest(&text, &root.join("sdd"))?);
    }
    let mut scenes = BTreeMap::new();
    for name in ETH_UCY_SCENES {
        let dir = root.join("ethucy").join(name);
        if dir.is_dir() {
            scenes.insert(name.to_string(), list_scene_files(&dir)?);
        }
    }
    if scenes.is_empty() {
        bail!(trajtree::Error::Io {
            path: root.join("ethucy"),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no scene directories"),
        });
    }
    Ok(make_splits_leave_one_out(&scenes, scene)?)
}

fn load_windows(files: &[PathBuf], scene: &str, unit: Unit, cfg: &DatasetConfig) -> Result<Vec<SceneWindow>> {
    let mut windows = Vec::new();
    for file in files {
        let tracks = load_trajectory_file(file, scene, unit)?;
        for w in &tracks.warnings {
            eprintln!("warning: {w}");
        }
        windows.extend(window_scenes(&tracks, cfg)?);
    }
    if windows.is_empty() {
        bail!(trajtree::Error::invalid_input(format!(
            "no usable windows for scene {scene} (need {} contiguous frames per agent)",
            cfg.window_len()
        )));
    }
    Ok(windows)
}

fn dataset_config(data: &DataOpts) -> Result<DatasetConfig> {
    let cfg = DatasetConfig { t_obs: data.t_obs, horizon: data.horizon, stride: data.stride };
    cfg.validate()?;
    Ok(cfg)
}

/// Flags override config-file values override presets.
fn resolve_tree(data: &DataOpts, tree: &TreeOpts) -> Result<TreeConfig> {
    let mut base: Option<TreeConfig> = None;
    if let Some(path) = &tree.config {
        let text = fs::read_to_string(path)
            .map_err(|source| trajtree::Error::Io { path: path.clone(), source })?;
        let cfg = TreeConfig::from_config_text(&text)?;
        if cfg.horizon != data.horizon {
            bail!(trajtree::Error::config(format!(
                "config file horizon {} != --horizon {}; pass --horizon {}",
                cfg.horizon, data.horizon, cfg.horizon
            )));
        }
        base = Some(cfg);
    }
    let depth = tree.depth.or(base.as_ref().map(|c| c.depth)).unwrap_or(3);
    let width = tree.width.or(base.as_ref().map(|c| c.width)).unwrap_or(3);
    let interval = tree
        .interval
        .or(base.as_ref().map(|c| c.interval))
        .unwrap_or(if depth == 0 { 1 } else { data.horizon.div_ceil(depth) });
    let angles = match (&tree.angles, &base) {
        (Some(a), _) => a.clone(),
        (None, Some(c)) => c.angles.clone(),
        (None, None) => {
            if depth == 0 {
                Vec::new()
            } else {
                angle_schedule(&data.scene, depth)?
            }
        }
    };
    Ok(TreeConfig::new(interval, depth, width, angles, data.horizon)?)
}

fn default_out(seed: u64) -> PathBuf {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).expect("clock").as_secs();
    PathBuf::from("runs").join(format!("{secs}-seed{seed}"))
}

struct RunOutput {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl RunOutput {
    fn new(out: &OutOpts, seed: u64) -> Self {
        RunOutput {
            dir: out.out.clone().unwrap_or_else(|| default_out(seed)),
            files: Vec::new(),
        }
    }

    fn dir(&self) -> &Path {
        &self.dir
    }

    fn add(&mut self, name: &str, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.to_string(), bytes.into()));
    }

    fn write(self) -> Result<()> {
        fs::create_dir_all(&self.dir)
            .map_err(|source| trajtree::Error::Io { path: self.dir.clone(), source })?;
        for (name, bytes) in &self.files {
            let path = self.dir.join(name);
            fs::write(&path, bytes)
                .map_err(|source| trajtree::Error::Io { path: path.clone(), source })?;
            println!("wrote {}", path.display());
        }
        Ok(())
    }
}

fn effective_config(
    command: &str,
    data: &DataOpts,
    tree: &TreeConfig,
    extra: &[(&str, String)],
) -> String {
    let mut out = String::new();
    out.push_str(&format!("command = {command}\n"));
    out.push_str(&format!("scene = {}\n", data.scene));
    out.push_str(&format!("t_obs = {}\n", data.t_obs));
    out.push_str(&format!("stride = {}\n", data.stride));
    out.push_str(&tree.to_config_text());
    for (k, v) in extra {
        out.push_str(&format!("{k} = {v}\n"));
    }
    out
}

pub fn eval_raw(data: DataOpts, tree: TreeOpts, out: OutOpts, seed: u64) -> Result<()> {
    let dcfg = dataset_config(&data)?;
    let tcfg = resolve_tree(&data, &tree)?;
    let root = data_root(&data);
    let split = resolve_split(&root, &data.scene)?;
    let unit = scene_unit(&data.scene);
    let windows = load_windows(&split.test, &data.scene, unit, &dcfg)?;

    let report = raw_tree_eval(&windows, &tcfg, &data.scene, unit, out.jobs)?;
    println!(
        "scene {} raw tree: {} hypotheses, ADE {:.4} FDE {:.4} over {} agents ({})",
        report.scene, report.k, report.ade, report.fde, report.n_agents, report.unit
    );

    let mut output = RunOutput::new(&out, seed);
    output.add("effective-config.txt", effective_config("eval-raw", &data, &tcfg, &[]));
    output.add("report.csv", reports_csv(std::slice::from_ref(&report)));
    output.add("report.json", reports_json(std::slice::from_ref(&report)));
    output.write()
}

pub fn train(
    data: DataOpts,
    tree: TreeOpts,
    topts: TrainOpts,
    out: OutOpts,
    seed: u64,
) -> Result<()> {
    let dcfg = dataset_config(&data)?;
    let tcfg = resolve_tree(&data, &tree)?;
    if tcfg.depth == 0 {
        bail!(trajtree::Error::config(
            "training requires tree depth >= 1 (depth 0 has a single path)"
        ));
    }
    let train_cfg = TrainConfig {
        lambda1: topts.lambda1,
        lambda2: topts.lambda2,
        lambda3: topts.lambda3,
        learning_rate: topts.lr,
        epochs: topts.epochs,
        seed,
        huber_delta: 1.0,
        batch_windows: topts.batch_windows,
    };
    train_cfg.validate()?;
    let dims = ModelDims::new(data.t_obs, tcfg.depth, tcfg.horizon, topts.embed)?;

    let root = data_root(&data);
    let split = resolve_split(&root, &data.scene)?;
    if split.train.is_empty() {
        bail!(trajtree::Error::config(format!(
            "split for scene {} has no training files",
            data.scene
        )));
    }
    let unit = scene_unit(&data.scene);
    let windows = load_windows(&split.train, &data.scene, unit, &dcfg)?;
    println!("training on {} windows from {} files", windows.len(), split.train.len());

    let (params, records) = neural::train(&windows, &tcfg, dims, &train_cfg)?;
    if let Some(last) = records.last() {
        println!(
            "epoch {}: total {:.6} coarse {:.6} clf {:.6} refine {:.6}",
            last.epoch, last.total, last.coarse, last.clf, last.refine
        );
    }

    let mut output = RunOutput::new(&out, seed);
    output.add(
        "effective-config.txt",
        effective_config(
            "train",
            &data,
            &tcfg,
            &[
                ("epochs", topts.epochs.to_string()),
                ("lr", format!("{:?}", topts.lr)),
                ("lambda1", format!("{:?}", topts.lambda1)),
                ("lambda2", format!("{:?}", topts.lambda2)),
                ("lambda3", format!("{:?}", topts.lambda3)),
                ("embed", topts.embed.to_string()),
                ("batch_windows", topts.batch_windows.to_string()),
                ("seed", seed.to_string()),
            ],
        ),
    );
    output.add("loss.csv", loss_log_csv(&records));
    let ckpt = output.dir().join("checkpoint.ckpt");
    output.write()?;
    params.save(&ckpt)?;
    println!("wrote {}", ckpt.display());
    Ok(())
}

fn load_checkpoint(path: &Path, data: &DataOpts, tcfg: &TreeConfig) -> Result<ModelParams> {
    let params = ModelParams::load(path)?;
    let d = params.dims;
    if d.t_obs != data.t_obs || d.depth != tcfg.depth || d.horizon != tcfg.horizon {
        bail!(trajtree::Error::config(format!(
            "checkpoint dims (t_obs {}, depth {}, horizon {}) do not match requested \
             (t_obs {}, depth {}, horizon {})",
            d.t_obs, d.depth, d.horizon, data.t_obs, tcfg.depth, tcfg.horizon
        )));
    }
    Ok(params)
}

pub fn eval_model(
    data: DataOpts,
    tree: TreeOpts,
    out: OutOpts,
    checkpoint: PathBuf,
    k: usize,
    seed: u64,
) -> Result<()> {
    let dcfg = dataset_config(&data)?;
    let tcfg = resolve_tree(&data, &tree)?;
    let params = load_checkpoint(&checkpoint, &data, &tcfg)?;
    let root = data_root(&data);
    let split = resolve_split(&root, &data.scene)?;
    let unit = scene_unit(&data.scene);
    let windows = load_windows(&split.test, &data.scene, unit, &dcfg)?;

    let report = model_eval(&windows, &params, &tcfg, k, &data.scene, unit)?;
    println!(
        "scene {} best-of-{}: ADE {:.4} FDE {:.4} over {} agents ({})",
        report.scene, report.k, report.ade, report.fde, report.n_agents, report.unit
    );

    // Top-K accuracy of selecting the ground-truth-closest path.
    let mut selection = String::from("criterion,k,accuracy\n");
    for criterion in [SelectionCriterion::MinFde, SelectionCriterion::MinAde] {
        let name = match criterion {
            SelectionCriterion::MinFde => "min_fde",
            SelectionCriterion::MinAde => "min_ade",
        };
        for kk in [1usize, 5, 10, 15, 20] {
            if kk > tcfg.path_count() {
                continue;
            }
            let acc = model_topk_selection_accuracy(&windows, &params, &tcfg, kk, criterion)?;
            selection.push_str(&format!("{name},{kk},{:.6}\n", acc));
        }
    }

    let mut output = RunOutput::new(&out, seed);
    output.add(
        "effective-config.txt",
        effective_config(
            "eval",
            &data,
            &tcfg,
            &[("k", k.to_string()), ("checkpoint", checkpoint.display().to_string())],
        ),
    );
    output.add("report.csv", reports_csv(std::slice::from_ref(&report)));
    output.add("report.json", reports_json(std::slice::from_ref(&report)));
    output.add("selection.csv", selection);
    output.write()
}

pub fn predict(
    data: DataOpts,
    tree: TreeOpts,
    out: OutOpts,
    checkpoint: PathBuf,
    k: usize,
    seed: u64,
) -> Result<()> {
    let dcfg = dataset_config(&data)?;
    let tcfg = resolve_tree(&data, &tree)?;
    let params = load_checkpoint(&checkpoint, &data, &tcfg)?;
    let root = data_root(&data);
    let split = resolve_split(&root, &data.scene)?;
    let unit = scene_unit(&data.scene);
    let windows = load_windows(&split.test, &data.scene, unit, &dcfg)?;

    let mut lines = String::new();
    for window in &windows {
        let predictions = neural::predict(window, &params, &tcfg, k)?;
        for pred in predictions {
            let confidences: Vec<f64> =
                pred.hypotheses.iter().map(|h| h.confidence).collect();
            let trajectories: Vec<Vec<[f64; 2]>> = pred
                .hypotheses
                .iter()
                .map(|h| h.fine.iter().map(|p| [p.x, p.y]).collect())
                .collect();
            let record = serde_json::json!({
                "scene": window.scene_name,
                "start_frame": window.start_frame,
                "agent_id": pred.agent_id,
                "confidences": confidences,
                "trajectories": trajectories,
            });
            lines.push_str(&serde_json::to_string(&record).expect("json record"));
            lines.push('\n');
        }
    }

    let mut output = RunOutput::new(&out, seed);
    output.add(
        "effective-config.txt",
        effective_config(
            "predict",
            &data,
            &tcfg,
            &[("k", k.to_string()), ("checkpoint", checkpoint.display().to_string())],
        ),
    );
    output.add("predictions.jsonl", lines);
    output.write()
}

#[allow(clippy::too_many_arguments)]
pub fn ablate(
    data: DataOpts,
    out: OutOpts,
    sweep: String,
    values: Vec<usize>,
    width: usize,
    depth: usize,
    horizon_base: usize,
    checkpoint: Option<PathBuf>,
    seed: u64,
) -> Result<()> {
    if values.is_empty() {
        bail!(trajtree::Error::config("--values must not be empty"));
    }
    let root = data_root(&data);
    let split = resolve_split(&root, &data.scene)?;
    let unit = scene_unit(&data.scene);

    let settings: Vec<AblationSetting> = match sweep.as_str() {
        "depth" => values
            .iter()
            .map(|&d| {
                Ok(AblationSetting {
                    label: format!("depth{d}"),
                    tree: raw_tree_config(&data.scene, d, width, horizon_base, None)?,
                })
            })
            .collect::<Result<_, trajtree::Error>>()?,
        "width" => values
            .iter()
            .map(|&w| {
                Ok(AblationSetting {
                    label: format!("width{w}"),
                    tree: raw_tree_config(&data.scene, depth, w, horizon_base, None)?,
                })
            })
            .collect::<Result<_, trajtree::Error>>()?,
        "horizon" => values
            .iter()
            .map(|&h| {
                Ok(AblationSetting {
                    label: format!("horizon{h}"),
                    tree: raw_tree_config(&data.scene, h.div_ceil(4), width, h, None)?,
                })
            })
            .collect::<Result<_, trajtree::Error>>()?,
        "k" => {
            let tree = raw_tree_config(&data.scene, depth, width, horizon_base, None)?;
            values
                .iter()
                .map(|&k| AblationSetting { label: format!("k{k}"), tree: tree.clone() })
                .collect()
        }
        other => bail!(trajtree::Error::config(format!(
            "unknown sweep {other:?}; expected depth, width, horizon, or k"
        ))),
    };

    let model = match (&checkpoint, sweep.as_str()) {
        (Some(path), "k") => Some(ModelParams::load(path)?),
        (None, "k") => {
            bail!(trajtree::Error::config("k sweeps need --checkpoint"))
        }
        _ => None,
    };

    // Window once at the longest horizon so every sweep row scores the
    // same agent population; shorter settings truncate the futures.
    let max_horizon = settings.iter().map(|s| s.tree.horizon).max().expect("settings");
    let dcfg = DatasetConfig { t_obs: data.t_obs, horizon: max_horizon, stride: data.stride };
    dcfg.validate()?;
    let base_windows = load_windows(&split.test, &data.scene, unit, &dcfg)?;

    let reports = run_settings(&settings, |setting| {
        let windows: Vec<SceneWindow> = if setting.tree.horizon == max_horizon {
            base_windows.clone()
        } else {
            base_windows
                .iter()
                .map(|w| {
                    let mut w = w.clone();
                    for s in &mut w.samples {
                        s.future.truncate(setting.tree.horizon);
                    }
                    w
                })
                .collect()
        };
        match &model {
            Some(params) => {
                let k: usize = setting.label.trim_start_matches('k').parse().map_err(|_| {
                    trajtree::Error::config(format!("bad k label {}", setting.label))
                })?;
                model_eval(&windows, params, &setting.tree, k, &data.scene, unit)
            }
            None => raw_tree_eval(&windows, &setting.tree, &data.scene, unit, out.jobs),
        }
    })?;

    for r in &reports {
        println!(
            "{}: depth {} width {} horizon {} k {} -> ADE {:.4} FDE {:.4} (n={})",
            data.scene, r.depth, r.width, r.horizon, r.k, r.ade, r.fde, r.n_agents
        );
    }

    let mut output = RunOutput::new(&out, seed);
    let sweep_desc: Vec<String> = values.iter().map(|v| v.to_string()).collect();
    output.add(
        "effective-config.txt",
        format!(
            "command = ablate\nscene = {}\nsweep = {}\nvalues = {}\nwidth = {width}\ndepth = {depth}\nhorizon_base = {horizon_base}\n",
            data.scene,
            sweep,
            sweep_desc.join(",")
        ),
    );
    output.add("sweep.csv", reports_csv(&reports));
    output.add("sweep.json", reports_json(&reports));
    output.write()
}

