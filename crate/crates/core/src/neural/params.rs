//! Learnable parameters: three-layer affine stacks with PReLU, one
//! attention layer, and the two scoring projections. Includes seeded
//! initialization and a bit-exact binary checkpoint format.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::neural::tape::Mat;

const CHECKPOINT_MAGIC: &[u8; 4] = b"TTCP";
const CHECKPOINT_VERSION: u32 = 1;

/// Fixed sizes of one model instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub t_obs: usize,
    pub depth: usize,
    pub horizon: usize,
    pub embed: usize,
}

impl ModelDims {
    pub fn new(t_obs: usize, depth: usize, horizon: usize, embed: usize) -> Result<Self> {
        let dims = ModelDims { t_obs, depth, horizon, embed };
        dims.validate()?;
        Ok(dims)
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_obs < 2 {
            return Err(Error::config("t_obs must be at least 2"));
        }
        if self.depth == 0 {
            return Err(Error::config("model requires tree depth >= 1"));
        }
        if self.horizon < self.depth {
            return Err(Error::config("horizon must be at least the tree depth"));
        }
        if self.embed == 0 {
            return Err(Error::config("embedding dimension must be positive"));
        }
        Ok(())
    }

    pub fn obs_input(&self) -> usize {
        2 * self.t_obs
    }

    pub fn path_input(&self) -> usize {
        2 * self.depth
    }

    pub fn coarse_output(&self) -> usize {
        2 * self.depth
    }

    pub fn refine_input(&self) -> usize {
        2 * self.depth + self.embed
    }

    pub fn refine_output(&self) -> usize {
        2 * self.horizon
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub w: Mat,
    pub b: Mat,
}

/// Three affine layers with learnable-slope PReLU between them.
#[derive(Debug, Clone, PartialEq)]
pub struct Stack3 {
    pub layers: [Affine; 3],
    pub slopes: [Mat; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub wq: Mat,
    pub wk: Mat,
    pub wv: Mat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoringParams {
    pub phi: Mat,
    pub psi: Mat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dims: ModelDims,
    pub obs_encoder: Stack3,
    pub tree_encoder: Stack3,
    pub interaction: AttentionParams,
    pub scoring: ScoringParams,
    pub coarse_head: Stack3,
    pub refine_head: Stack3,
}

fn init_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    // fan-in is the input width of x * W, i.e. the row count.
    let bound = 1.0 / (rows as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound);
    let data = (0..rows * cols).map(|_| dist.sample(rng)).collect();
    Mat::from_vec(rows, cols, data)
}

fn init_stack(rng: &mut ChaCha8Rng, input: usize, hidden: usize, output: usize) -> Stack3 {
    let layer = |rng: &mut ChaCha8Rng, i: usize, o: usize| {
        let w = init_mat(rng, i, o);
        let bound = 1.0 / (i as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        let b = Mat::row_vector((0..o).map(|_| dist.sample(rng)).collect());
        Affine { w, b }
    };
    Stack3 {
        layers: [
            layer(rng, input, hidden),
            layer(rng, hidden, hidden),
            layer(rng, hidden, output),
        ],
        slopes: [Mat::scalar(0.25), Mat::scalar(0.25)],
    }
}

impl ModelParams {
    /// Seeded initialization: weights and biases uniform in
    /// `+-1/sqrt(fan_in)`, PReLU slopes at 0.25.
    pub fn init(dims: ModelDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = dims.embed;
        Ok(ModelParams {
            dims,
            obs_encoder: init_stack(&mut rng, dims.obs_input(), d, d),
            tree_encoder: init_stack(&mut rng, dims.path_input(), d, d),
            interaction: AttentionParams {
                wq: init_mat(&mut rng, d, d),
                wk: init_mat(&mut rng, d, d),
                wv: init_mat(&mut rng, d, d),
            },
            scoring: ScoringParams {
                phi: init_mat(&mut rng, d, d),
                psi: init_mat(&mut rng, d, d),
            },
            coarse_head: init_stack(&mut rng, 2 * d, d, dims.coarse_output()),
            refine_head: init_stack(&mut rng, dims.refine_input(), d, dims.refine_output()),
        })
    }

    /// All-zero parameters, used by linearity tests.
    pub fn zeros(dims: ModelDims) -> Result<Self> {
        let mut params = ModelParams::init(dims, 0)?;
        for (_, m) in params.tensors_mut() {
            for v in &mut m.data {
                *v = 0.0;
            }
        }
        Ok(params)
    }

    /// Stable (name, tensor) listing; the order defines checkpoint layout
    /// and optimizer state slots.
    pub fn tensors(&self) -> Vec<(String, &Mat)> {
        let mut out = Vec::new();
        let stacks = [
            ("obs_encoder", &self.obs_encoder),
            ("tree_encoder", &self.tree_encoder),
            ("coarse_head", &self.coarse_head),
            ("refine_head", &self.refine_head),
        ];
        for (name, stack) in stacks {
            for (i, layer) in stack.layers.iter().enumerate() {
                out.push((format!("{name}.w{i}"), &layer.w));
                out.push((format!("{name}.b{i}"), &layer.b));
            }
            for (i, slope) in stack.slopes.iter().enumerate() {
                out.push((format!("{name}.slope{i}"), slope));
            }
        }
        out.push(("interaction.wq".to_string(), &self.interaction.wq));
        out.push(("interaction.wk".to_string(), &self.interaction.wk));
        out.push(("interaction.wv".to_string(), &self.interaction.wv));
        out.push(("scoring.phi".to_string(), &self.scoring.phi));
        out.push(("scoring.psi".to_string(), &self.scoring.psi));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Mat)> {
        let mut out = Vec::new();
        let stacks = [
            ("obs_encoder", &mut self.obs_encoder),
            ("tree_encoder", &mut self.tree_encoder),
            ("coarse_head", &mut self.coarse_head),
            ("refine_head", &mut self.refine_head),
        ];
        for (name, stack) in stacks {
            let [l0, l1, l2] = &mut stack.layers;
            for (i, layer) in [l0, l1, l2].into_iter().enumerate() {
                out.push((format!("{name}.w{i}"), &mut layer.w));
                out.push((format!("{name}.b{i}"), &mut layer.b));
            }
            let [s0, s1] = &mut stack.slopes;
            out.push((format!("{name}.slope0"), s0));
            out.push((format!("{name}.slope1"), s1));
        }
        out.push(("interaction.wq".to_string(), &mut self.interaction.wq));
        out.push(("interaction.wk".to_string(), &mut self.interaction.wk));
        out.push(("interaction.wv".to_string(), &mut self.interaction.wv));
        out.push(("scoring.phi".to_string(), &mut self.scoring.phi));
        out.push(("scoring.psi".to_string(), &mut self.scoring.psi));
        out
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, m)| m.all_finite())
    }

    /// Writes a versioned binary checkpoint. Round-trips bit-exactly.
    pub fn save(&self, path: &Path) -> Result<()> {
        let io_err = |source| Error::Io { path: path.to_path_buf(), source };
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        for dim in [self.dims.t_obs, self.dims.depth, self.dims.horizon, self.dims.embed] {
            buf.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        let tensors = self.tensors();
        buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, m) in tensors {
            let bytes = name.as_bytes();
            buf.extend_from_slice(&(bytes.len() as u16).to_le_bytes());
            buf.extend_from_slice(bytes);
            buf.extend_from_slice(&(m.rows as u32).to_le_bytes());
            buf.extend_from_slice(&(m.cols as u32).to_le_bytes());
            for v in &m.data {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut file = fs::File::create(path).map_err(io_err)?;
        file.write_all(&buf).map_err(io_err)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let io_err = |source| Error::Io { path: path.to_path_buf(), source };
        let mut bytes = Vec::new();
        fs::File::open(path).map_err(io_err)?.read_to_end(&mut bytes).map_err(io_err)?;
        let mut cur = Cursor { bytes: &bytes, pos: 0, path };

        let magic = cur.take(4)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::invalid_input(format!(
                "{}: not a model checkpoint",
                path.display()
            )));
        }
        let version = cur.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::invalid_input(format!(
                "{}: unsupported checkpoint version {version}",
                path.display()
            )));
        }
        let t_obs = cur.u32()? as usize;
        let depth = cur.u32()? as usize;
        let horizon = cur.u32()? as usize;
        let embed = cur.u32()? as usize;
        let dims = ModelDims::new(t_obs, depth, horizon, embed)?;
        let mut params = ModelParams::zeros(dims)?;

        let n_tensors = cur.u32()? as usize;
        let mut slots = params.tensors_mut();
        if n_tensors != slots.len() {
            return Err(Error::invalid_input(format!(
                "{}: expected {} tensors, found {n_tensors}",
                path.display(),
                slots.len()
            )));
        }
        for (expected_name, slot) in slots.iter_mut() {
            let name_len = cur.u16()? as usize;
            let name = String::from_utf8(cur.take(name_len)?.to_vec())
                .map_err(|_| Error::invalid_input("checkpoint tensor name is not utf-8"))?;
            let rows = cur.u32()? as usize;
            let cols = cur.u32()? as usize;
            if name != *expected_name || rows != slot.rows || cols != slot.cols {
                return Err(Error::invalid_input(format!(
                    "{}: tensor mismatch: found {name} [{rows}x{cols}], expected {expected_name} [{}x{}]",
                    path.display(),
                    slot.rows,
                    slot.cols
                )));
            }
            for i in 0..rows * cols {
                let raw = cur.take(8)?;
                slot.data[i] = f64::from_le_bytes(raw.try_into().expect("8-byte slice"));
            }
        }
        if cur.pos != bytes.len() {
            return Err(Error::invalid_input(format!(
                "{}: {} trailing bytes",
                path.display(),
                bytes.len() - cur.pos
            )));
        }
        Ok(params)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::invalid_input(format!(
                "{}: truncated checkpoint",
                self.path.display()
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2-byte slice")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4-byte slice")))
    }
}
