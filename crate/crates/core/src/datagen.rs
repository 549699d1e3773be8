//! Experiment conditions, legal interaction combos, episode synthesis and the
//! balanced dataset file format.

use std::fmt;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::kinematics::{
    plan_action_trajectory, sample_joint_frames, Action, ArmModel, IkSettings, DEFAULT_FPS, MOTION_FRAMES,
};
use crate::language::{
    apply_mask, build_sentence, sample_mask_config, schedule_word_frames, vocabulary, MaskConfig, Sentence,
    Token, WordTrack, NA, WORD_DURATION,
};
use crate::scene::{
    render_frame, sample_scene, step_scene, ColorId, Raster, SceneError, ShapeId, RASTER_HEIGHT, RASTER_WIDTH,
};

pub const DATASET_FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "compgen-dataset";
pub const JOINT_DIM: usize = 6;
const GENERATION_ATTEMPTS: usize = 5;

pub fn episode_frames() -> usize {
    MOTION_FRAMES + crate::language::speech_frames(DEFAULT_FPS, WORD_DURATION)
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("invalid condition {name}: {reason}")]
    Condition { name: String, reason: String },
    #[error("{episodes} episodes cannot cover {combos} combos evenly")]
    Balance { episodes: usize, combos: usize },
    #[error("episode generation failed after {GENERATION_ATTEMPTS} attempts: {0}")]
    Generation(String),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("unsupported dataset format version {found} (expected {expected})")]
    Version { found: String, expected: u32 },
    #[error("malformed dataset header: {0}")]
    Header(String),
    #[error("truncated dataset: {0}")]
    Truncated(String),
    #[error("checksum mismatch: stored {stored:016x}, computed {computed:016x}")]
    Checksum { stored: u64, computed: u64 },
    #[error("malformed record: {0}")]
    Record(String),
}

impl DatasetError {
    /// Stable numeric code per failure class (used as the CLI exit status).
    pub fn code(&self) -> i32 {
        match self {
            DatasetError::Condition { .. } => 10,
            DatasetError::Balance { .. } => 11,
            DatasetError::Generation(_) => 12,
            DatasetError::Io(_) => 13,
            DatasetError::Version { .. } => 14,
            DatasetError::Header(_) => 15,
            DatasetError::Truncated(_) => 16,
            DatasetError::Checksum { .. } => 17,
            DatasetError::Record(_) => 18,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Condition {
    /// 2 (push left/right) or 4 (all actions).
    pub actions: u8,
    /// 1 or 2 visible objects.
    pub visible: u8,
    /// 4 or 9 object classes.
    pub shapes: u8,
    /// 1 color per shape, or 6 colors.
    pub colors: u8,
    /// Test colors exclusive to their test shapes (X) or shared (notX).
    pub exclusive: bool,
    pub joints: bool,
}

impl Default for Condition {
    /// The simplest setting: V1-C1-O4-A2-X with joints.
    fn default() -> Self {
        Self { actions: 2, visible: 1, shapes: 4, colors: 1, exclusive: true, joints: true }
    }
}

/// The four interactions shared by every training condition.
pub const CONSTANT_COMBOS: [Combo; 4] = [
    Combo { action: Action::PushRight, color: ColorId::White, shape: ShapeId::Football },
    Combo { action: Action::PushRight, color: ColorId::Yellow, shape: ShapeId::Banana },
    Combo { action: Action::PushLeft, color: ColorId::Brown, shape: ShapeId::Bottle },
    Combo { action: Action::PushLeft, color: ColorId::Red, shape: ShapeId::Ring },
];

/// The held-out interactions: the constant combos with mirrored pushes.
pub const LEAVE_OUT_COMBOS: [Combo; 4] = [
    Combo { action: Action::PushLeft, color: ColorId::White, shape: ShapeId::Football },
    Combo { action: Action::PushLeft, color: ColorId::Yellow, shape: ShapeId::Banana },
    Combo { action: Action::PushRight, color: ColorId::Brown, shape: ShapeId::Bottle },
    Combo { action: Action::PushRight, color: ColorId::Red, shape: ShapeId::Ring },
];

/// The test shapes with their fixed single color.
const TEST_PAIRS: [(ShapeId, ColorId); 4] = [
    (ShapeId::Football, ColorId::White),
    (ShapeId::Banana, ColorId::Yellow),
    (ShapeId::Bottle, ColorId::Brown),
    (ShapeId::Ring, ColorId::Red),
];

impl Condition {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let fail = |reason: &str| Err(DatasetError::Condition { name: self.name(), reason: reason.into() });
        if !matches!(self.actions, 2 | 4) {
            return fail("actions must be 2 or 4");
        }
        if !matches!(self.visible, 1 | 2) {
            return fail("visible objects must be 1 or 2");
        }
        if !matches!(self.shapes, 4 | 9) {
            return fail("shapes must be 4 or 9");
        }
        if !matches!(self.colors, 1 | 6) {
            return fail("colors must be 1 or 6");
        }
        if self.shapes == 9 && self.colors == 6 && self.exclusive {
            return fail("O9 with C6 and exclusive colors is not a defined cell (N/A)");
        }
        if self.shapes == 4 && self.colors == 1 && !self.exclusive {
            return fail("with four single-colored shapes no other shape can share a test color");
        }
        Ok(())
    }

    /// Compact label, e.g. `V1-C1-O4-A2-X`, with `-NJ` when joints are off.
    pub fn name(&self) -> String {
        format!(
            "V{}-C{}-O{}-A{}-{}{}",
            self.visible,
            self.colors,
            self.shapes,
            self.actions,
            if self.exclusive { "X" } else { "notX" },
            if self.joints { "" } else { "-NJ" }
        )
    }

    pub fn action_set(&self) -> &'static [Action] {
        if self.actions == 2 {
            &Action::ALL[..2]
        } else {
            &Action::ALL
        }
    }

    pub fn shape_set(&self) -> &'static [ShapeId] {
        &ShapeId::ALL[..usize::from(self.shapes)]
    }

    pub fn joint_width(&self) -> usize {
        if self.joints {
            JOINT_DIM
        } else {
            0
        }
    }

    /// Legal (shape, color) pairs under the color regime.
    pub fn legal_pairs(&self) -> Result<Vec<(ShapeId, ColorId)>, DatasetError> {
        self.validate()?;
        let test_color = |s: ShapeId| TEST_PAIRS.iter().find(|(ts, _)| *ts == s).map(|(_, c)| *c);
        let test_colors: Vec<ColorId> = TEST_PAIRS.iter().map(|(_, c)| *c).collect();
        let mut pairs = Vec::new();
        match (self.colors, self.exclusive) {
            (1, exclusive) => {
                let cycle: &[ColorId] = if exclusive {
                    &[ColorId::Green, ColorId::Blue]
                } else {
                    &[ColorId::White, ColorId::Yellow, ColorId::Brown, ColorId::Red]
                };
                let mut k = 0;
                for &s in self.shape_set() {
                    match test_color(s) {
                        Some(c) => pairs.push((s, c)),
                        None => {
                            pairs.push((s, cycle[k % cycle.len()]));
                            k += 1;
                        }
                    }
                }
            }
            (_, false) => {
                for &s in self.shape_set() {
                    for c in ColorId::ALL {
                        pairs.push((s, c));
                    }
                }
            }
            (_, true) => {
                for &s in self.shape_set() {
                    for c in ColorId::ALL {
                        let exclusive_elsewhere = test_colors.contains(&c) && test_color(s) != Some(c);
                        if !exclusive_elsewhere {
                            pairs.push((s, c));
                        }
                    }
                }
            }
        }
        Ok(pairs)
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Condition {
    type Err = DatasetError;

    /// Parses the label produced by [`Condition::name`].
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || DatasetError::Condition { name: s.to_string(), reason: "unrecognized label".into() };
        let mut c = Condition::default();
        let parts: Vec<&str> = s.split('-').collect();
        if parts.len() < 5 || parts.len() > 6 {
            return Err(bad());
        }
        let num = |p: &str, prefix: char| -> Result<u8, DatasetError> {
            p.strip_prefix(prefix).and_then(|n| n.parse().ok()).ok_or_else(bad)
        };
        c.visible = num(parts[0], 'V')?;
        c.colors = num(parts[1], 'C')?;
        c.shapes = num(parts[2], 'O')?;
        c.actions = num(parts[3], 'A')?;
        c.exclusive = match parts[4] {
            "X" => true,
            "notX" => false,
            _ => return Err(bad()),
        };
        c.joints = match parts.get(5) {
            None => true,
            Some(&"NJ") => false,
            _ => return Err(bad()),
        };
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Combo {
    pub action: Action,
    pub color: ColorId,
    pub shape: ShapeId,
}

impl Combo {
    pub fn sentence(&self) -> Sentence {
        build_sentence(self.action, self.color, self.shape)
    }
}

impl fmt::Display for Combo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.action, self.color, self.shape)
    }
}

/// Actions × legal pairs, minus the held-out interactions.
pub fn enumerate_training_combos(condition: &Condition) -> Result<Vec<Combo>, DatasetError> {
    let pairs = condition.legal_pairs()?;
    let mut combos = Vec::new();
    for &action in condition.action_set() {
        for &(shape, color) in &pairs {
            let combo = Combo { action, color, shape };
            if !LEAVE_OUT_COMBOS.contains(&combo) {
                combos.push(combo);
            }
        }
    }
    Ok(combos)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub raster: Raster,
    /// Joint angles in degrees; empty when joints are disabled.
    pub joints: Vec<f64>,
    pub lang_input: Token,
    pub lang_target: Token,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub combo: Combo,
    pub mask: MaskConfig,
    pub scrubbed: bool,
    pub frames: Vec<Frame>,
}

impl Episode {
    pub fn sentence(&self) -> Sentence {
        self.combo.sentence()
    }

    /// Unmasked word track of the ground-truth sentence.
    pub fn word_track(&self) -> WordTrack {
        schedule_word_frames(&self.sentence(), MOTION_FRAMES, DEFAULT_FPS, WORD_DURATION)
    }

    pub fn target_track(&self) -> WordTrack {
        WordTrack(self.frames.iter().map(|f| f.lang_target).collect())
    }

    pub fn input_track(&self) -> WordTrack {
        WordTrack(self.frames.iter().map(|f| f.lang_input).collect())
    }

    /// Copy with a different mask and scrub setting applied to both tracks.
    pub fn relabeled(&self, mask: MaskConfig, scrub: bool) -> Episode {
        let mut ep = self.clone();
        ep.relabel_in_place(mask, scrub);
        ep
    }

    pub fn relabel_in_place(&mut self, mask: MaskConfig, scrub: bool) {
        let target = apply_mask(&self.word_track(), mask);
        for (f, &t) in self.frames.iter_mut().zip(&target.0) {
            f.lang_target = t;
            f.lang_input = if scrub { NA } else { t };
        }
        self.mask = mask;
        self.scrubbed = scrub;
    }
}

/// Renders one interaction end to end. Retries with fresh randomness from the
/// same stream when placement or IK fails.
pub fn generate_episode(
    combo: Combo,
    condition: &Condition,
    rng: &mut impl Rng,
    mask: MaskConfig,
    scrub: bool,
) -> Result<Episode, DatasetError> {
    let pool = distractor_pool(condition)?;
    generate_episode_with_pool(combo, condition, pool.as_deref(), rng, mask, scrub)
}

fn distractor_pool(condition: &Condition) -> Result<Option<Vec<(ShapeId, ColorId)>>, DatasetError> {
    Ok(if condition.visible == 2 { Some(condition.legal_pairs()?) } else { None })
}

fn generate_episode_with_pool(
    combo: Combo,
    condition: &Condition,
    pool: Option<&[(ShapeId, ColorId)]>,
    rng: &mut impl Rng,
    mask: MaskConfig,
    scrub: bool,
) -> Result<Episode, DatasetError> {
    let arm = ArmModel::default();
    let ik = IkSettings::default();
    let mut last_err = String::new();
    for _ in 0..GENERATION_ATTEMPTS {
        match try_generate(&arm, &ik, combo, condition, pool, rng, mask, scrub) {
            Ok(ep) => return Ok(ep),
            Err(e) => last_err = e.to_string(),
        }
    }
    Err(DatasetError::Generation(last_err))
}

#[allow(clippy::too_many_arguments)]
fn try_generate(
    arm: &ArmModel,
    ik: &IkSettings,
    combo: Combo,
    condition: &Condition,
    pool: Option<&[(ShapeId, ColorId)]>,
    rng: &mut impl Rng,
    mask: MaskConfig,
    scrub: bool,
) -> Result<Episode, SceneError> {
    let scene0 = sample_scene(arm, combo.action, combo.shape, combo.color, pool, rng)?;
    let plan = plan_action_trajectory(arm, combo.action, scene0.placement, scene0.placement)?;
    let joints = sample_joint_frames(arm, &plan, DEFAULT_FPS, MOTION_FRAMES, ik)?;
    let n = episode_frames();
    let mut frames = Vec::with_capacity(n);
    for k in 0..n {
        let q = joints[k.min(MOTION_FRAMES - 1)];
        let mut scene = step_scene(&scene0, arm, k)?;
        scene.joints = q;
        let raster = render_frame(&scene, arm);
        let joints = if condition.joints { q.to_degrees().to_vec() } else { Vec::new() };
        frames.push(Frame { raster, joints, lang_input: NA, lang_target: NA });
    }
    let mut ep = Episode { combo, mask, scrubbed: scrub, frames };
    ep.relabel_in_place(mask, scrub);
    Ok(ep)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Validation,
    ConstantTest,
    CompGenTest,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::Validation, Split::ConstantTest, Split::CompGenTest];

    pub fn tag(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::ConstantTest => "constant-test",
            Split::CompGenTest => "compgen-test",
        }
    }

    /// Row label used in result tables.
    pub fn label(self) -> &'static str {
        match self {
            Split::Train => "Training",
            Split::Validation => "Validation",
            Split::ConstantTest => "Constant Test Set",
            Split::CompGenTest => "Comp. Gen. Test Set",
        }
    }

    fn stream_id(self) -> u64 {
        match self {
            Split::Train => 1,
            Split::Validation => 2,
            Split::ConstantTest => 3,
            Split::CompGenTest => 4,
        }
    }

    pub fn is_test(self) -> bool {
        matches!(self, Split::ConstantTest | Split::CompGenTest)
    }
}

impl FromStr for Split {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Split::ALL
            .into_iter()
            .find(|sp| sp.tag() == s)
            .ok_or_else(|| DatasetError::Header(format!("unknown split {s:?}")))
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent RNG stream for one episode.
pub fn episode_rng(seed: u64, split: Split, index: usize) -> ChaCha8Rng {
    let h = splitmix(splitmix(splitmix(seed) ^ split.stream_id()) ^ index as u64);
    ChaCha8Rng::seed_from_u64(h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub condition: Condition,
    pub split: Split,
    pub seed: u64,
    pub scrub_probability: f64,
    pub episodes: Vec<Episode>,
}

/// Round-robin assignment of episodes to combos: counts differ by at most one.
fn balanced_assignment(n: usize, combos: &[Combo]) -> Result<Vec<Combo>, DatasetError> {
    if combos.is_empty() || n < combos.len() {
        return Err(DatasetError::Balance { episodes: n, combos: combos.len() });
    }
    Ok((0..n).map(|i| combos[i % combos.len()]).collect())
}

/// Training and validation datasets: balanced over the condition's combos,
/// masks sampled per episode, input scrubbed with `scrub_probability`.
pub fn generate_dataset(
    condition: &Condition,
    n_episodes: usize,
    split: Split,
    seed: u64,
    scrub_probability: f64,
) -> Result<Dataset, DatasetError> {
    let combos = enumerate_training_combos(condition)?;
    let assignment = balanced_assignment(n_episodes, &combos)?;
    let pool = distractor_pool(condition)?;
    let episodes = generate_indexed(&assignment, condition, pool.as_deref(), split, seed, |rng| {
        if split.is_test() {
            (MaskConfig::FULL, true)
        } else {
            let mask = sample_mask_config(rng);
            (mask, rng.gen_bool(scrub_probability))
        }
    })?;
    Ok(Dataset { condition: *condition, split, seed, scrub_probability, episodes })
}

fn generate_indexed(
    assignment: &[Combo],
    condition: &Condition,
    pool: Option<&[(ShapeId, ColorId)]>,
    split: Split,
    seed: u64,
    labels: impl Fn(&mut ChaCha8Rng) -> (MaskConfig, bool) + Sync,
) -> Result<Vec<Episode>, DatasetError> {
    assignment
        .par_iter()
        .enumerate()
        .map(|(i, &combo)| {
            let mut rng = episode_rng(seed, split, i);
            let (mask, scrub) = labels(&mut rng);
            generate_episode_with_pool(combo, condition, pool, &mut rng, mask, scrub)
        })
        .collect()
}

/// Visibility family for the shared test sets.
pub fn test_family(visible: u8, joints: bool) -> Condition {
    Condition { visible, joints, ..Condition::default() }
}

/// Constant and compositional-generalization test sets for one visibility
/// family. Both use full masks and scrubbed language input; distractors (V2)
/// come from the four test (shape, color) pairs.
pub fn build_test_sets(
    visible: u8,
    joints: bool,
    n_per_interaction: usize,
    seed: u64,
) -> Result<(Dataset, Dataset), DatasetError> {
    let family = test_family(visible, joints);
    family.validate()?;
    let pool = (visible == 2).then_some(&TEST_PAIRS[..]);
    let build = |split: Split, combos: &[Combo]| -> Result<Dataset, DatasetError> {
        let assignment = balanced_assignment(n_per_interaction * combos.len(), combos)?;
        let episodes =
            generate_indexed(&assignment, &family, pool, split, seed, |_| (MaskConfig::FULL, true))?;
        Ok(Dataset { condition: family, split, seed, scrub_probability: 1.0, episodes })
    };
    Ok((build(Split::ConstantTest, &CONSTANT_COMBOS)?, build(Split::CompGenTest, &LEAVE_OUT_COMBOS)?))
}

/// Episodes per combo, in first-seen order.
pub fn combo_counts(dataset: &Dataset) -> Vec<(Combo, usize)> {
    let mut counts: Vec<(Combo, usize)> = Vec::new();
    for ep in &dataset.episodes {
        match counts.iter_mut().find(|(c, _)| *c == ep.combo) {
            Some((_, n)) => *n += 1,
            None => counts.push((ep.combo, 1)),
        }
    }
    counts
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl Dataset {
    pub fn raster_shape(&self) -> (usize, usize) {
        self.episodes
            .first()
            .and_then(|e| e.frames.first())
            .map_or((RASTER_HEIGHT, RASTER_WIDTH), |f| (f.raster.height(), f.raster.width()))
    }

    pub fn frame_count(&self) -> usize {
        self.episodes.first().map_or_else(episode_frames, |e| e.frames.len())
    }

    fn header(&self) -> String {
        let (h, w) = self.raster_shape();
        let c = &self.condition;
        let lines = [
            ("format", format!("{MAGIC} {DATASET_FORMAT_VERSION}")),
            ("split", self.split.tag().to_string()),
            ("seed", self.seed.to_string()),
            ("condition", c.name()),
            ("actions", c.actions.to_string()),
            ("visible", c.visible.to_string()),
            ("shapes", c.shapes.to_string()),
            ("colors", c.colors.to_string()),
            ("exclusive", c.exclusive.to_string()),
            ("joints", c.joints.to_string()),
            ("scrub_probability", self.scrub_probability.to_string()),
            ("vocabulary", vocabulary().join(",")),
            ("raster", format!("{h}x{w}x3")),
            ("frames", self.frame_count().to_string()),
            ("joint_width", c.joint_width().to_string()),
            ("episodes", self.episodes.len().to_string()),
        ];
        let mut out = String::new();
        for (k, v) in lines {
            out.push_str(k);
            out.push_str(": ");
            out.push_str(&v);
            out.push('\n');
        }
        out.push('\n');
        out
    }

    fn payload(&self) -> Vec<u8> {
        let (h, w) = self.raster_shape();
        let jw = self.condition.joint_width();
        let per_frame = h * w * 3 * 8 + jw * 8 + 2;
        let mut out = Vec::with_capacity(self.episodes.len() * (5 + self.frame_count() * per_frame));
        for ep in &self.episodes {
            out.push(ep.combo.action.index() as u8);
            out.push(ep.combo.color.index() as u8);
            out.push(ep.combo.shape.index() as u8);
            out.push(ep.mask.to_byte());
            out.push(u8::from(ep.scrubbed));
            for f in &ep.frames {
                for v in f.raster.to_values() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            for f in &ep.frames {
                for v in &f.joints {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            out.extend(ep.frames.iter().map(|f| f.lang_input.0));
            out.extend(ep.frames.iter().map(|f| f.lang_target.0));
        }
        out
    }

    /// Header, payload, then the FNV-1a checksum of the payload.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.header().into_bytes();
        let payload = self.payload();
        let sum = fnv1a64(&payload);
        out.extend_from_slice(&payload);
        out.extend_from_slice(&sum.to_le_bytes());
        out
    }

    pub fn write_to(&self, mut w: impl Write) -> io::Result<()> {
        w.write_all(&self.to_bytes())
    }

    pub fn write(&self, path: &Path) -> Result<(), DatasetError> {
        let mut f = io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, DatasetError> {
        Self::read_from(std::fs::File::open(path)?)
    }

    /// Reads just the header fields of a dataset file.
    pub fn read_header(path: &Path) -> Result<Vec<(String, String)>, DatasetError> {
        let mut r = BufReader::new(std::fs::File::open(path)?);
        parse_header(&mut r)
    }

    pub fn read_from(r: impl Read) -> Result<Self, DatasetError> {
        let mut r = BufReader::new(r);
        let header = parse_header(&mut r)?;
        let get = |k: &str| -> Result<&str, DatasetError> {
            header
                .iter()
                .find(|(key, _)| key == k)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| DatasetError::Header(format!("missing key {k:?}")))
        };
        fn parse<T: FromStr>(k: &str, v: &str) -> Result<T, DatasetError> {
            v.parse().map_err(|_| DatasetError::Header(format!("bad value for {k}: {v:?}")))
        }
        let condition = Condition {
            actions: parse("actions", get("actions")?)?,
            visible: parse("visible", get("visible")?)?,
            shapes: parse("shapes", get("shapes")?)?,
            colors: parse("colors", get("colors")?)?,
            exclusive: parse("exclusive", get("exclusive")?)?,
            joints: parse("joints", get("joints")?)?,
        };
        condition.validate()?;
        if get("vocabulary")? != vocabulary().join(",") {
            return Err(DatasetError::Header("vocabulary order differs from this build".into()));
        }
        let split: Split = get("split")?.parse()?;
        let seed: u64 = parse("seed", get("seed")?)?;
        let scrub_probability: f64 = parse("scrub_probability", get("scrub_probability")?)?;
        let dims: Vec<usize> = get("raster")?
            .split('x')
            .map(|d| parse("raster", d))
            .collect::<Result<_, _>>()?;
        if dims.len() != 3 || dims[2] != 3 {
            return Err(DatasetError::Header(format!("bad raster shape {dims:?}")));
        }
        let (h, w) = (dims[0], dims[1]);
        let frames: usize = parse("frames", get("frames")?)?;
        let jw: usize = parse("joint_width", get("joint_width")?)?;
        if jw != condition.joint_width() {
            return Err(DatasetError::Header(format!("joint width {jw} contradicts joints flag")));
        }
        let n: usize = parse("episodes", get("episodes")?)?;

        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        let record = 5 + frames * (h * w * 3 * 8 + jw * 8 + 2);
        let expected = n * record + 8;
        if rest.len() != expected {
            return Err(DatasetError::Truncated(format!("expected {expected} bytes after header, found {}", rest.len())));
        }
        let (payload, tail) = rest.split_at(n * record);
        let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
        let computed = fnv1a64(payload);
        if stored != computed {
            return Err(DatasetError::Checksum { stored, computed });
        }

        let f64_at = |b: &[u8], i: usize| f64::from_le_bytes(b[i * 8..i * 8 + 8].try_into().expect("8 bytes"));
        let mut episodes = Vec::with_capacity(n);
        for rec in payload.chunks_exact(record) {
            let bad = |what: &str| DatasetError::Record(what.to_string());
            let combo = Combo {
                action: Action::from_index(rec[0].into()).ok_or_else(|| bad("action index"))?,
                color: ColorId::from_index(rec[1].into()).ok_or_else(|| bad("color index"))?,
                shape: ShapeId::from_index(rec[2].into()).ok_or_else(|| bad("shape index"))?,
            };
            let mask = MaskConfig::from_byte(rec[3]).ok_or_else(|| bad("mask byte"))?;
            let scrubbed = match rec[4] {
                0 => false,
                1 => true,
                _ => return Err(bad("scrub byte")),
            };
            let raster_bytes = h * w * 3 * 8;
            let rasters = &rec[5..5 + frames * raster_bytes];
            let joints = &rec[5 + frames * raster_bytes..5 + frames * (raster_bytes + jw * 8)];
            let tracks = &rec[5 + frames * (raster_bytes + jw * 8)..];
            let mut frame_list = Vec::with_capacity(frames);
            for k in 0..frames {
                let block = &rasters[k * raster_bytes..(k + 1) * raster_bytes];
                let values: Vec<f64> = (0..h * w * 3).map(|i| f64_at(block, i)).collect();
                let raster = Raster::from_values(h, w, &values).ok_or_else(|| bad("raster value off grid"))?;
                let jblock = &joints[k * jw * 8..(k + 1) * jw * 8];
                let joint_values: Vec<f64> = (0..jw).map(|i| f64_at(jblock, i)).collect();
                let tok = |b: u8| Token::new(b.into()).map_err(|_| bad("token index"));
                frame_list.push(Frame {
                    raster,
                    joints: joint_values,
                    lang_input: tok(tracks[k])?,
                    lang_target: tok(tracks[frames + k])?,
                });
            }
            episodes.push(Episode { combo, mask, scrubbed, frames: frame_list });
        }
        Ok(Dataset { condition, split, seed, scrub_probability, episodes })
    }
}

fn parse_header(r: &mut impl BufRead) -> Result<Vec<(String, String)>, DatasetError> {
    let mut header = Vec::new();
    loop {
        let mut raw = Vec::new();
        if r.read_until(b'\n', &mut raw)? == 0 {
            return Err(DatasetError::Truncated("header not terminated".into()));
        }
        let line = String::from_utf8(raw).map_err(|_| DatasetError::Header("non-UTF-8 header".into()))?;
        let line = line.trim_end_matches('\n');
        if line.is_empty() {
            break;
        }
        let (k, v) = line
            .split_once(": ")
            .ok_or_else(|| DatasetError::Header(format!("not a key: value line: {line:?}")))?;
        if header.is_empty() {
            if k != "format" || !v.starts_with(MAGIC) {
                return Err(DatasetError::Header("missing format line".into()));
            }
            let version = v[MAGIC.len()..].trim();
            if version != DATASET_FORMAT_VERSION.to_string() {
                return Err(DatasetError::Version { found: version.to_string(), expected: DATASET_FORMAT_VERSION });
            }
        }
        header.push((k.to_string(), v.to_string()));
    }
    Ok(header)
}
