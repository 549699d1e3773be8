//! Recurrent multimodal describer: flattened raster → affine → dropout, joined
//! with joints, language input and mask bits, fed through a single-layer LSTM
//! and an affine head over the vocabulary.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autodiff::{softmax, AutodiffError, Tape, Tensor, Var};
use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::datagen::{Episode, JOINT_DIM};
use crate::language::{MaskConfig, NA, VOCAB_SIZE};
use crate::scene::{RASTER_HEIGHT, RASTER_WIDTH};

/// Joint angles (degrees) are multiplied by this before entering the network.
pub const JOINT_SCALE: f64 = 1.0 / 180.0;
pub const MASK_DIM: usize = 3;
/// Pixel values are shifted by this so the empty table reads as zero.
pub const PIXEL_CENTER: f64 = 0.5;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("episode does not fit model: {0}")]
    Shape(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub raster_dim: usize,
    pub vision_out: usize,
    pub hidden: usize,
    pub vocab: usize,
    pub joint_dim: usize,
    pub mask_dim: usize,
    pub dropout: f64,
}

impl ModelConfig {
    /// Full-size network: 32 vision units, 256 LSTM cells.
    pub fn paper(joints: bool) -> Self {
        Self {
            raster_dim: RASTER_HEIGHT * RASTER_WIDTH * 3,
            vision_out: 32,
            hidden: 256,
            vocab: VOCAB_SIZE,
            joint_dim: if joints { JOINT_DIM } else { 0 },
            mask_dim: MASK_DIM,
            dropout: 0.5,
        }
    }

    /// Reduced network for quick CPU runs: 16 vision units, 64 LSTM cells.
    pub fn desk(joints: bool) -> Self {
        Self { vision_out: 16, hidden: 64, ..Self::paper(joints) }
    }

    pub fn input_width(&self) -> usize {
        self.vision_out + self.joint_dim + self.vocab + self.mask_dim
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.raster_dim, self.vision_out, self.hidden, self.vocab];
        if positive.contains(&0) {
            return Err(ModelError::Config("dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::Config(format!("dropout rate {} outside [0, 1)", self.dropout)));
        }
        if self.mask_dim != MASK_DIM {
            return Err(ModelError::Config("mask width must be 3".into()));
        }
        Ok(())
    }

    fn to_meta(self) -> Vec<(String, String)> {
        vec![
            ("raster_dim".into(), self.raster_dim.to_string()),
            ("vision_out".into(), self.vision_out.to_string()),
            ("hidden".into(), self.hidden.to_string()),
            ("vocab".into(), self.vocab.to_string()),
            ("joint_dim".into(), self.joint_dim.to_string()),
            ("mask_dim".into(), self.mask_dim.to_string()),
            ("dropout".into(), self.dropout.to_string()),
        ]
    }

    fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        fn field<T: std::str::FromStr>(ck: &Checkpoint, k: &str) -> Result<T> {
            ck.meta_value(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| ModelError::Config(format!("checkpoint lacks a valid {k:?}")))
        }
        let cfg = Self {
            raster_dim: field(ck, "raster_dim")?,
            vision_out: field(ck, "vision_out")?,
            hidden: field(ck, "hidden")?,
            vocab: field(ck, "vocab")?,
            joint_dim: field(ck, "joint_dim")?,
            mask_dim: field(ck, "mask_dim")?,
            dropout: field(ck, "dropout")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

pub const PARAM_NAMES: [&str; 6] = ["vision.w", "vision.b", "lstm.w", "lstm.b", "head.w", "head.b"];

/// Network weights, in [`PARAM_NAMES`] order. LSTM gate rows are stacked
/// input, forget, cell, output.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub tensors: [Tensor; 6],
}

fn uniform_matrix(rows: usize, cols: usize, bound: f64, rng: &mut impl Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
    Tensor::matrix(rows, cols, data).expect("shape matches data").with_grad()
}

fn uniform_vector(len: usize, bound: f64, rng: &mut impl Rng) -> Tensor {
    Tensor::vector((0..len).map(|_| rng.gen_range(-bound..=bound)).collect()).with_grad()
}

impl ModelParams {
    /// Uniform ±1/√fan_in initialization; forget-gate biases start at +1.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = config.hidden;
        let lstm_in = config.input_width() + h;
        let vb = 1.0 / (config.raster_dim as f64).sqrt();
        let lb = 1.0 / (lstm_in as f64).sqrt();
        let hb = 1.0 / (h as f64).sqrt();
        let vision_w = uniform_matrix(config.vision_out, config.raster_dim, vb, &mut rng);
        let vision_b = uniform_vector(config.vision_out, vb, &mut rng);
        let lstm_w = uniform_matrix(4 * h, lstm_in, lb, &mut rng);
        let mut lstm_b = uniform_vector(4 * h, lb, &mut rng);
        for v in &mut lstm_b.data_mut()[h..2 * h] {
            *v = 1.0;
        }
        let head_w = uniform_matrix(config.vocab, h, hb, &mut rng);
        let head_b = uniform_vector(config.vocab, hb, &mut rng);
        Ok(Self { config, tensors: [vision_w, vision_b, lstm_w, lstm_b, head_w, head_b] })
    }

    /// All-zero weights (useful for analytic checks).
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        let mut p = Self::init(config, 0)?;
        for t in &mut p.tensors {
            t.data_mut().fill(0.0);
        }
        Ok(p)
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data().iter().all(|v| v.is_finite()))
    }

    pub fn to_checkpoint(&self, extra_meta: &[(String, String)]) -> Checkpoint {
        let mut meta = self.config.to_meta();
        meta.extend_from_slice(extra_meta);
        Checkpoint {
            meta,
            tensors: PARAM_NAMES.iter().map(|n| n.to_string()).zip(self.tensors.iter().cloned()).collect(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let config = ModelConfig::from_checkpoint(ck)?;
        let template = Self::zeros(config)?;
        let mut tensors = template.tensors.clone();
        for (slot, (name, expected)) in tensors.iter_mut().zip(PARAM_NAMES.iter().zip(&template.tensors)) {
            let (_, t) = ck
                .tensors
                .iter()
                .find(|(n, _)| n == name)
                .ok_or_else(|| ModelError::Config(format!("checkpoint lacks tensor {name}")))?;
            if t.shape() != expected.shape() {
                return Err(ModelError::Config(format!(
                    "{name} has shape {:?}, config implies {:?}",
                    t.shape(),
                    expected.shape()
                )));
            }
            *slot = t.clone().with_grad();
        }
        Ok(Self { config, tensors })
    }

    pub fn save(&self, path: &Path, extra_meta: &[(String, String)]) -> Result<()> {
        Ok(self.to_checkpoint(extra_meta).save(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// How the language and mask channels are fed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputMode {
    /// Use the episode's recorded language input and mask bits.
    Recorded,
    /// Generation: all-"n/a" language input and every mask neuron on.
    Generate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        Self { h: vec![0.0; hidden], c: vec![0.0; hidden] }
    }
}

/// Parameter handles on one tape.
#[derive(Debug, Clone, Copy)]
pub struct ParamVars(pub [Var; 6]);

impl ParamVars {
    pub fn record(tape: &mut Tape, params: &ModelParams) -> Self {
        Self(std::array::from_fn(|i| tape.leaf(&params.tensors[i])))
    }
}

/// Dropout mode for the vision layer.
pub enum Dropout<'a> {
    Off,
    On(&'a mut dyn rand::RngCore),
}

/// Flatten → affine → (inverted) dropout.
pub fn vision_encode(
    tape: &mut Tape,
    pixels: Var,
    p: &ParamVars,
    rate: f64,
    dropout: &mut Dropout<'_>,
) -> Result<Var> {
    let z = tape.affine(pixels, p.0[0], p.0[1])?;
    match dropout {
        Dropout::Off => Ok(z),
        Dropout::On(rng) => {
            let keep = 1.0 - rate;
            let n = tape.value(z).len();
            let mask: Vec<f64> = (0..n).map(|_| if rng.gen_bool(keep) { 1.0 / keep } else { 0.0 }).collect();
            Ok(tape.mul_const(z, mask)?)
        }
    }
}

/// One LSTM cell update on the tape. Returns the new (h, c).
pub fn lstm_step(tape: &mut Tape, x: Var, h: Var, c: Var, w: Var, b: Var, hidden: usize) -> Result<(Var, Var)> {
    let xh = tape.concat(&[x, h])?;
    let z = tape.affine(xh, w, b)?;
    let zi = tape.slice(z, 0, hidden)?;
    let zf = tape.slice(z, hidden, hidden)?;
    let zg = tape.slice(z, 2 * hidden, hidden)?;
    let zo = tape.slice(z, 3 * hidden, hidden)?;
    let i = tape.sigmoid(zi)?;
    let f = tape.sigmoid(zf)?;
    let g = tape.tanh(zg)?;
    let o = tape.sigmoid(zo)?;
    let fc = tape.mul(f, c)?;
    let ig = tape.mul(i, g)?;
    let c_new = tape.add(fc, ig)?;
    let tc = tape.tanh(c_new)?;
    let h_new = tape.mul(o, tc)?;
    Ok((h_new, c_new))
}

/// Value-level LSTM step on its own throwaway tape.
pub fn lstm_step_values(x: &[f64], state: &LstmState, params: &ModelParams) -> Result<LstmState> {
    let hidden = params.config.hidden;
    let mut tape = Tape::new();
    let xv = tape.constant(x.to_vec());
    let h = tape.constant(state.h.clone());
    let c = tape.constant(state.c.clone());
    let w = tape.leaf(&params.tensors[2]);
    let b = tape.leaf(&params.tensors[3]);
    let (h, c) = lstm_step(&mut tape, xv, h, c, w, b, hidden)?;
    Ok(LstmState { h: tape.value(h).to_vec(), c: tape.value(c).to_vec() })
}

/// An unrolled episode on a tape.
pub struct EpisodeGraph {
    pub tape: Tape,
    pub params: ParamVars,
    pub logits: Vec<Var>,
}

impl EpisodeGraph {
    pub fn logit_values(&self) -> Vec<Vec<f64>> {
        self.logits.iter().map(|&l| self.tape.value(l).to_vec()).collect()
    }
}

fn check_episode(episode: &Episode, config: &ModelConfig) -> Result<()> {
    for (k, f) in episode.frames.iter().enumerate() {
        if f.raster.len() != config.raster_dim {
            return Err(ModelError::Shape(format!(
                "frame {k}: raster has {} values, model expects {}",
                f.raster.len(),
                config.raster_dim
            )));
        }
        if config.joint_dim > 0 && f.joints.len() != config.joint_dim {
            return Err(ModelError::Shape(format!(
                "frame {k}: {} joint values, model expects {}",
                f.joints.len(),
                config.joint_dim
            )));
        }
    }
    Ok(())
}

/// Unrolls the network over every frame from a zero state.
pub fn build_episode_graph(
    episode: &Episode,
    params: &ModelParams,
    mode: InputMode,
    mut dropout: Dropout<'_>,
) -> Result<EpisodeGraph> {
    let cfg = params.config;
    check_episode(episode, &cfg)?;
    let mut tape = Tape::new();
    let p = ParamVars::record(&mut tape, params);
    let mask = match mode {
        InputMode::Recorded => episode.mask,
        InputMode::Generate => MaskConfig::FULL,
    };
    let mut h = tape.constant(vec![0.0; cfg.hidden]);
    let mut c = tape.constant(vec![0.0; cfg.hidden]);
    let mut pixels = Vec::with_capacity(cfg.raster_dim);
    let mut logits = Vec::with_capacity(episode.frames.len());
    for frame in &episode.frames {
        pixels.clear();
        frame.raster.write_values_into(&mut pixels);
        let px = tape.constant(pixels.iter().map(|v| v - PIXEL_CENTER).collect());
        let v = vision_encode(&mut tape, px, &p, cfg.dropout, &mut dropout)?;
        let mut side = Vec::with_capacity(cfg.joint_dim + cfg.vocab + cfg.mask_dim);
        if cfg.joint_dim > 0 {
            side.extend(frame.joints.iter().map(|d| d * JOINT_SCALE));
        }
        let token = match mode {
            InputMode::Recorded => frame.lang_input,
            InputMode::Generate => NA,
        };
        let mut onehot = vec![0.0; cfg.vocab];
        onehot[token.index()] = 1.0;
        side.extend(onehot);
        side.extend(mask.bits());
        let side = tape.constant(side);
        let x = tape.concat(&[v, side])?;
        let (h2, c2) = lstm_step(&mut tape, x, h, c, p.0[2], p.0[3], cfg.hidden)?;
        h = h2;
        c = c2;
        logits.push(tape.affine(h, p.0[4], p.0[5])?);
    }
    Ok(EpisodeGraph { tape, params: p, logits })
}

/// Per-frame logits (frames × vocab). Dropout is applied only in training.
pub fn forward_episode(
    episode: &Episode,
    params: &ModelParams,
    mode: InputMode,
    training: bool,
    rng: &mut dyn rand::RngCore,
) -> Result<Vec<Vec<f64>>> {
    let dropout = if training { Dropout::On(rng) } else { Dropout::Off };
    Ok(build_episode_graph(episode, params, mode, dropout)?.logit_values())
}

/// Eval-mode forward pass; needs no randomness.
pub fn forward_eval(episode: &Episode, params: &ModelParams, mode: InputMode) -> Result<Vec<Vec<f64>>> {
    Ok(build_episode_graph(episode, params, mode, Dropout::Off)?.logit_values())
}

/// Mean softmax cross-entropy over frames, recorded on the tape.
pub fn sequence_loss(tape: &mut Tape, logits: &[Var], targets: &[usize]) -> Result<Var> {
    if logits.len() != targets.len() || logits.is_empty() {
        return Err(ModelError::Shape(format!("{} logit rows vs {} targets", logits.len(), targets.len())));
    }
    let terms: Vec<Var> =
        logits.iter().zip(targets).map(|(&l, &t)| tape.softmax_cross_entropy(l, t)).collect::<std::result::Result<_, _>>()?;
    let total = tape.sum(&terms)?;
    Ok(tape.scale(total, 1.0 / targets.len() as f64)?)
}

/// Value-only version of [`sequence_loss`].
pub fn sequence_loss_values(logits: &[Vec<f64>], targets: &[usize]) -> Result<f64> {
    if logits.len() != targets.len() || logits.is_empty() {
        return Err(ModelError::Shape(format!("{} logit rows vs {} targets", logits.len(), targets.len())));
    }
    let mut total = 0.0;
    for (row, &t) in logits.iter().zip(targets) {
        let p = softmax(row);
        let pt = p.get(t).ok_or(AutodiffError::Index { index: t, classes: row.len() })?;
        total -= pt.max(f64::MIN_POSITIVE).ln();
    }
    Ok(total / targets.len() as f64)
}

pub fn episode_targets(episode: &Episode) -> Vec<usize> {
    episode.frames.iter().map(|f| f.lang_target.index()).collect()
}

/// Loss and parameter gradients (in [`PARAM_NAMES`] order) for one episode.
pub fn episode_loss_and_grads(
    episode: &Episode,
    params: &ModelParams,
    mode: InputMode,
    dropout: Dropout<'_>,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut g = build_episode_graph(episode, params, mode, dropout)?;
    let targets = episode_targets(episode);
    let loss = sequence_loss(&mut g.tape, &g.logits, &targets)?;
    let grads = g.tape.backward(loss)?;
    let out = g.params.0.iter().zip(&params.tensors).map(|(&v, t)| grads.get_or_zeros(v, t.len())).collect();
    Ok((g.tape.scalar_value(loss), out))
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
