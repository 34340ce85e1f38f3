//! Trajectory corpora: plain-text ingestion, sliding scene windows, splits,
//! and the agent-centric normalization used by the encoders.
//!
//! Input files are whitespace- or tab-separated lines of
//! `frame_id agent_id x y`, already sampled at the dataset's fixed time step
//! (0.4 s for the supported corpora). Tracks with missing frames are split
//! at the gap rather than imputed.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point2;

/// Coordinate unit of a scene. Carried through to reports so meter-based
/// and pixel-based results are never mixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Meters,
    Pixels,
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Unit::Meters => f.write_str("meters"),
            Unit::Pixels => f.write_str("pixels"),
        }
    }
}

/// One contiguous span of an agent's positions, one per frame step.
#[derive(Debug, Clone)]
pub struct Track {
    pub agent_id: u64,
    pub start_frame: i64,
    pub positions: Vec<Point2>,
}

impl Track {
    pub fn end_frame(&self, frame_step: i64) -> i64 {
        self.start_frame + (self.positions.len() as i64 - 1) * frame_step
    }
}

/// All tracks of one scene, split at frame gaps.
#[derive(Debug, Clone)]
pub struct SceneTracks {
    pub name: String,
    pub unit: Unit,
    pub frame_step: i64,
    pub tracks: Vec<Track>,
    pub warnings: Vec<String>,
}

/// One agent's observed and future positions within a window.
#[derive(Debug, Clone)]
pub struct TrajectorySample {
    pub agent_id: u64,
    pub observed: Vec<Point2>,
    pub future: Vec<Point2>,
}

/// Co-present agents over one full sliding window; the unit of interaction.
#[derive(Debug, Clone)]
pub struct SceneWindow {
    pub scene_name: String,
    pub start_frame: i64,
    pub samples: Vec<TrajectorySample>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetConfig {
    pub t_obs: usize,
    pub horizon: usize,
    pub stride: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig { t_obs: 8, horizon: 12, stride: 1 }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_obs < 2 {
            return Err(Error::config("t_obs must be at least 2"));
        }
        if self.horizon == 0 || self.stride == 0 {
            return Err(Error::config("horizon and stride must be positive"));
        }
        Ok(())
    }

    pub fn window_len(&self) -> usize {
        self.t_obs + self.horizon
    }
}

/// Loads one scene file into per-agent, frame-ordered tracks.
pub fn load_trajectory_file(path: &Path, name: &str, unit: Unit) -> Result<SceneTracks> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    load_trajectory_text(&text, path, name, unit)
}

fn load_trajectory_text(text: &str, path: &Path, name: &str, unit: Unit) -> Result<SceneTracks> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };

    // (agent, frame) -> position, ordered for deterministic assembly.
    let mut by_agent: BTreeMap<u64, BTreeMap<i64, Point2>> = BTreeMap::new();
    let mut n_rows = 0usize;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(parse_err(
                line_no,
                format!("expected 4 fields (frame agent x y), got {}", fields.len()),
            ));
        }
        let num = |i: usize| -> Result<f64> {
            fields[i]
                .parse::<f64>()
                .map_err(|e| parse_err(line_no, format!("field {}: {e}", i + 1)))
        };
        let frame_f = num(0)?;
        let agent_f = num(1)?;
        let x = num(2)?;
        let y = num(3)?;
        if frame_f.fract() != 0.0 || agent_f.fract() != 0.0 || agent_f < 0.0 {
            return Err(parse_err(line_no, "frame and agent ids must be integers".into()));
        }
        if !x.is_finite() || !y.is_finite() {
            return Err(parse_err(line_no, "non-finite coordinate".into()));
        }
        let frame = frame_f as i64;
        let agent = agent_f as u64;
        if by_agent.entry(agent).or_default().insert(frame, Point2::new(x, y)).is_some() {
            return Err(parse_err(
                line_no,
                format!("duplicate entry for frame {frame}, agent {agent}"),
            ));
        }
        n_rows += 1;
    }

    let mut warnings = Vec::new();
    if n_rows == 0 {
        warnings.push(format!("{}: no trajectory rows", path.display()));
    }

    let frame_step = infer_frame_step(&by_agent);
    let mut tracks = Vec::new();
    for (agent_id, frames) in &by_agent {
        let mut current: Vec<(i64, Point2)> = Vec::new();
        for (&frame, &pos) in frames {
            if let Some(&(last_frame, _)) = current.last() {
                if frame - last_frame != frame_step {
                    flush_track(&mut tracks, *agent_id, &mut current);
                }
            }
            current.push((frame, pos));
        }
        flush_track(&mut tracks, *agent_id, &mut current);
    }

    Ok(SceneTracks {
        name: name.to_string(),
        unit,
        frame_step,
        tracks,
        warnings,
    })
}

fn flush_track(tracks: &mut Vec<Track>, agent_id: u64, current: &mut Vec<(i64, Point2)>) {
    if current.is_empty() {
        return;
    }
    tracks.push(Track {
        agent_id,
        start_frame: current[0].0,
        positions: current.iter().map(|&(_, p)| p).collect(),
    });
    current.clear();
}

/// Most common positive frame delta across all agents; ties go to the
/// smaller delta. Falls back to 1 when no agent has two frames.
fn infer_frame_step(by_agent: &BTreeMap<u64, BTreeMap<i64, Point2>>) -> i64 {
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for frames in by_agent.values() {
        let keys: Vec<i64> = frames.keys().copied().collect();
        for w in keys.windows(2) {
            let delta = w[1] - w[0];
            if delta > 0 {
                *counts.entry(delta).or_insert(0) += 1;
            }
        }
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(delta, _)| delta)
        .unwrap_or(1)
}

/// Slides a `t_obs + horizon` window over the scene's frame grid. Only
/// agents present for every frame of a window are included; windows with no
/// qualifying agent are dropped.
pub fn window_scenes(scene: &SceneTracks, config: &DatasetConfig) -> Result<Vec<SceneWindow>> {
    config.validate()?;
    let seq_len = config.window_len();
    let step = scene.frame_step;

    let mut frames: Vec<i64> = Vec::new();
    for track in &scene.tracks {
        for i in 0..track.positions.len() {
            frames.push(track.start_frame + i as i64 * step);
        }
    }
    frames.sort_unstable();
    frames.dedup();

    let mut windows = Vec::new();
    if frames.len() < seq_len {
        return Ok(windows);
    }
    let mut i = 0usize;
    while i + seq_len <= frames.len() {
        let first = frames[i];
        let last = frames[i + seq_len - 1];
        // A window must be a contiguous run of the frame grid.
        if last - first == (seq_len as i64 - 1) * step {
            let mut samples = Vec::new();
            for track in &scene.tracks {
                if track.start_frame <= first && track.end_frame(step) >= last {
                    let offset = ((first - track.start_frame) / step) as usize;
                    let span = &track.positions[offset..offset + seq_len];
                    samples.push(TrajectorySample {
                        agent_id: track.agent_id,
                        observed: span[..config.t_obs].to_vec(),
                        future: span[config.t_obs..].to_vec(),
                    });
                }
            }
            if !samples.is_empty() {
                samples.sort_by_key(|s| s.agent_id);
                windows.push(SceneWindow {
                    scene_name: scene.name.clone(),
                    start_frame: first,
                    samples,
                });
            }
        }
        i += config.stride;
    }
    Ok(windows)
}

/// Train/test file lists produced by a split policy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSpec {
    pub train: Vec<PathBuf>,
    pub test: Vec<PathBuf>,
}

/// How train and test sets are derived from the scene files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SplitPolicy {
    /// Hold the named scene out for testing; every other scene trains.
    LeaveOneOut(String),
    /// Explicit file lists, e.g. from a split manifest.
    Fixed(SplitSpec),
}

pub fn make_splits(
    scene_files: &BTreeMap<String, Vec<PathBuf>>,
    policy: &SplitPolicy,
) -> Result<SplitSpec> {
    match policy {
        SplitPolicy::LeaveOneOut(held_out) => make_splits_leave_one_out(scene_files, held_out),
        SplitPolicy::Fixed(spec) => Ok(spec.clone()),
    }
}

/// Leave-one-out split: the named scene is held out for testing and every
/// other scene trains.
pub fn make_splits_leave_one_out(
    scene_files: &BTreeMap<String, Vec<PathBuf>>,
    held_out: &str,
) -> Result<SplitSpec> {
    if !scene_files.contains_key(held_out) {
        return Err(Error::config(format!(
            "unknown scene {held_out:?}; known scenes: {:?}",
            scene_files.keys().collect::<Vec<_>>()
        )));
    }
    let mut split = SplitSpec { train: Vec::new(), test: Vec::new() };
    for (scene, files) in scene_files {
        if scene == held_out {
            split.test.extend(files.iter().cloned());
        } else {
            split.train.extend(files.iter().cloned());
        }
    }
    Ok(split)
}

/// Parses a fixed-split manifest: one `train <path>` or `test <path>` per
/// line, `#` comments allowed. Paths are taken relative to `base`.
pub fn parse_split_manifest(text: &str, base: &Path) -> Result<SplitSpec> {
    let mut split = SplitSpec { train: Vec::new(), test: Vec::new() };
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (kind, file) = line.split_once(char::is_whitespace).ok_or_else(|| Error::Parse {
            path: base.to_path_buf(),
            line: idx + 1,
            msg: format!("expected `train <file>` or `test <file>`, got {line:?}"),
        })?;
        let path = base.join(file.trim());
        match kind {
            "train" => split.train.push(path),
            "test" => split.test.push(path),
            other => {
                return Err(Error::Parse {
                    path: base.to_path_buf(),
                    line: idx + 1,
                    msg: format!("unknown split kind {other:?}"),
                })
            }
        }
    }
    Ok(split)
}

/// Renders a split back into manifest text with paths relative to `base`.
pub fn split_manifest_text(split: &SplitSpec, base: &Path) -> String {
    let mut out = String::new();
    for p in &split.train {
        let rel = p.strip_prefix(base).unwrap_or(p);
        out.push_str(&format!("train {}\n", rel.display()));
    }
    for p in &split.test {
        let rel = p.strip_prefix(base).unwrap_or(p);
        out.push_str(&format!("test {}\n", rel.display()));
    }
    out
}

/// Per-agent translations taking each last observed point to the origin.
/// Encoders consume normalized coordinates; tree building and metrics stay
/// in the original frame.
#[derive(Debug, Clone)]
pub struct WindowTransform {
    pub origins: Vec<Point2>,
}

impl WindowTransform {
    pub fn restore(&self, agent_idx: usize, traj: &[Point2]) -> Vec<Point2> {
        let o = self.origins[agent_idx];
        traj.iter().map(|&p| p + o).collect()
    }
}

/// Translates every agent so its last observed point is the origin. Returns
/// the normalized window and the inverse transform.
pub fn normalize_window(window: &SceneWindow) -> (SceneWindow, WindowTransform) {
    let mut normalized = window.clone();
    let mut origins = Vec::with_capacity(window.samples.len());
    for sample in &mut normalized.samples {
        let origin = *sample.observed.last().expect("observed track is non-empty");
        for p in sample.observed.iter_mut().chain(sample.future.iter_mut()) {
            *p = *p - origin;
        }
        origins.push(origin);
    }
    (normalized, WindowTransform { origins })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_fixture(lines: &[(i64, u64, f64, f64)]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for (frame, agent, x, y) in lines {
            writeln!(f, "{frame}\t{agent}\t{x}\t{y}").unwrap();
        }
        f.flush().unwrap();
        f
    }

    fn straight(agent: u64, frames: impl Iterator<Item = i64>) -> Vec<(i64, u64, f64, f64)> {
        frames
            .map(|fr| (fr * 10, agent, fr as f64 * 0.4, 1.0))
            .collect()
    }

    #[test]
    fn empty_file_warns_and_yields_nothing() {
        let f = write_fixture(&[]);
        let scene = load_trajectory_file(f.path(), "empty", Unit::Meters).unwrap();
        assert!(scene.tracks.is_empty());
        assert_eq!(scene.warnings.len(), 1);
    }

    #[test]
    fn contiguous_frames_one_track() {
        let f = write_fixture(&straight(1, 0..20));
        let scene = load_trajectory_file(f.path(), "s", Unit::Meters).unwrap();
        assert_eq!(scene.frame_step, 10);
        assert_eq!(scene.tracks.len(), 1);
        assert_eq!(scene.tracks[0].positions.len(), 20);
    }

    #[test]
    fn gap_splits_track() {
        let mut rows = straight(1, 0..5);
        rows.extend(straight(1, 8..12)); // 3-frame hole
        let f = write_fixture(&rows);
        let scene = load_trajectory_file(f.path(), "s", Unit::Meters).unwrap();
        assert_eq!(scene.tracks.len(), 2);
        assert_eq!(scene.tracks[0].positions.len(), 5);
        assert_eq!(scene.tracks[1].positions.len(), 4);
        assert_eq!(scene.tracks[1].start_frame, 80);
    }

    #[test]
    fn malformed_rows_are_rejected_with_line_numbers() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "0\t1\t0.0\t0.0").unwrap();
        writeln!(f, "10\t1\tnot_a_number\t0.0").unwrap();
        f.flush().unwrap();
        let err = load_trajectory_file(f.path(), "s", Unit::Meters).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");

        let mut g = tempfile::NamedTempFile::new().unwrap();
        writeln!(g, "0\t1\t0.0").unwrap();
        g.flush().unwrap();
        assert!(load_trajectory_file(g.path(), "s", Unit::Meters).is_err());
    }

    #[test]
    fn duplicate_frame_agent_pair_rejected() {
        let f = write_fixture(&[(0, 1, 0.0, 0.0), (0, 1, 1.0, 1.0)]);
        assert!(load_trajectory_file(f.path(), "s", Unit::Meters).is_err());
    }

    #[test]
    fn window_count_matches_sliding_arithmetic() {
        // 25 frames, window 20, stride 1 -> 6 windows.
        let f = write_fixture(&straight(1, 0..25));
        let scene = load_trajectory_file(f.path(), "s", Unit::Meters).unwrap();
        let windows = window_scenes(&scene, &DatasetConfig::default()).unwrap();
        assert_eq!(windows.len(), 6);
        let starts: Vec<i64> = windows.iter().map(|w| w.start_frame).collect();
        assert_eq!(starts, vec![0, 10, 20, 30, 40, 50]);
        for w in &windows {
            assert_eq!(w.samples[0].observed.len(), 8);
            assert_eq!(w.samples[0].future.len(), 12);
        }
    }

    #[test]
    fn partially_present_agent_excluded() {
        let mut rows = straight(1, 0..20);
        rows.extend(straight(2, 1..20)); // misses the first frame
        let f = write_fixture(&rows);
        let scene = load_trajectory_file(f.path(), "s", Unit::Meters).unwrap();
        let windows = window_scenes(&scene, &DatasetConfig::default()).unwrap();
        assert_eq!(windows.len(), 1);
        let ids: Vec<u64> = windows[0].samples.iter().map(|s| s.agent_id).collect();
        assert_eq!(ids, vec![1]);
    }

    #[test]
    fn stride_covers_arithmetic_sequence() {
        let f = write_fixture(&straight(1, 0..30));
        let scene = load_trajectory_file(f.path(), "s", Unit::Meters).unwrap();
        let cfg = DatasetConfig { stride: 3, ..DatasetConfig::default() };
        let windows = window_scenes(&scene, &cfg).unwrap();
        let starts: Vec<i64> = windows.iter().map(|w| w.start_frame).collect();
        assert_eq!(starts, vec![0, 30, 60, 90]);
    }

    #[test]
    fn leave_one_out_split() {
        let mut scenes = BTreeMap::new();
        for name in ["eth", "hotel", "univ", "zara1", "zara2"] {
            scenes.insert(name.to_string(), vec![PathBuf::from(format!("{name}.txt"))]);
        }
        let split = make_splits(&scenes, &SplitPolicy::LeaveOneOut("eth".into())).unwrap();
        assert_eq!(split.test, vec![PathBuf::from("eth.txt")]);
        assert_eq!(split.train.len(), 4);
        assert!(!split.train.contains(&PathBuf::from("eth.txt")));
        assert!(make_splits(&scenes, &SplitPolicy::LeaveOneOut("nowhere".into())).is_err());

        let fixed = SplitPolicy::Fixed(split.clone());
        assert_eq!(make_splits(&scenes, &fixed).unwrap(), split);
    }

    #[test]
    fn split_manifest_round_trips() {
        let base = Path::new("/data");
        let split = SplitSpec {
            train: vec![base.join("a.txt"), base.join("b.txt")],
            test: vec![base.join("c.txt")],
        };
        let text = split_manifest_text(&split, base);
        let back = parse_split_manifest(&text, base).unwrap();
        assert_eq!(split, back);
        assert_eq!(text, split_manifest_text(&back, base));
    }

    #[test]
    fn normalize_centers_last_observed_and_inverts() {
        let f = write_fixture(&straight(1, 0..20));
        let scene = load_trajectory_file(f.path(), "s", Unit::Meters).unwrap();
        let windows = window_scenes(&scene, &DatasetConfig::default()).unwrap();
        let (norm, transform) = normalize_window(&windows[0]);
        let last = *norm.samples[0].observed.last().unwrap();
        assert!(last.norm() < 1e-12);
        let restored = transform.restore(0, &norm.samples[0].future);
        for (a, b) in restored.iter().zip(&windows[0].samples[0].future) {
            assert!((*a - *b).norm() < 1e-12);
        }
    }
}
