//! Condition-grid runner: plan files, cached datasets, multi-seed training and
//! grid-style reports.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::datagen::{build_test_sets, generate_dataset, Condition, Dataset, DatasetError, Split};
use crate::evaluation::{aggregate_runs, evaluate, Aggregate, MetricError, EXTRACTION_RULE};
use crate::model::{ModelConfig, ModelError, ModelParams};
use crate::training::{train_run_with, TrainConfig, TrainError};

/// Seed of the shared test sets; independent of the training seeds.
pub const TEST_SET_SEED: u64 = 0x7e57;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("plan line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("malformed results file: {0}")]
    Results(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Desk,
    Paper,
}

impl Scale {
    pub fn model(self, joints: bool) -> ModelConfig {
        match self {
            Scale::Desk => ModelConfig::desk(joints),
            Scale::Paper => ModelConfig::paper(joints),
        }
    }

    /// (train, validation, test-per-interaction) episode counts.
    pub fn sizes(self) -> (usize, usize, usize) {
        match self {
            Scale::Desk => (800, 300, 50),
            Scale::Paper => (5000, 2500, 500),
        }
    }
}

impl FromStr for Scale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            _ => Err(format!("unknown scale {s:?} (expected desk or paper)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub cells: Vec<Condition>,
    pub seeds: usize,
    pub scale: Scale,
    pub train_episodes: usize,
    pub val_episodes: usize,
    pub test_per_interaction: usize,
    /// Overrides of the model width (0 keeps the scale's value).
    pub vision_out: usize,
    pub hidden: usize,
    pub train: TrainConfig,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self::for_scale(Scale::Desk)
    }
}

impl ExperimentPlan {
    pub fn for_scale(scale: Scale) -> Self {
        let (train_episodes, val_episodes, test_per_interaction) = scale.sizes();
        Self {
            cells: vec![Condition::default()],
            seeds: 3,
            scale,
            train_episodes,
            val_episodes,
            test_per_interaction,
            vision_out: 0,
            hidden: 0,
            train: TrainConfig::default(),
        }
    }

    pub fn model_config(&self, cell: &Condition) -> ModelConfig {
        let mut m = self.scale.model(cell.joints);
        if self.vision_out > 0 {
            m.vision_out = self.vision_out;
        }
        if self.hidden > 0 {
            m.hidden = self.hidden;
        }
        m
    }
}

/// Keys accepted in plan files, with their defaults, for `--help` text.
pub const PLAN_KEYS: &[(&str, &str)] = &[
    ("scale", "desk | paper (sets sizes and model width; default desk)"),
    ("seeds", "runs per cell (default 3)"),
    ("train", "training episodes (desk 800, paper 5000)"),
    ("val", "validation episodes (desk 300, paper 2500)"),
    ("test", "test episodes per interaction (desk 50, paper 500)"),
    ("epochs", "training epochs (default 60)"),
    ("batch", "episodes per Adam step (default 16)"),
    ("lr", "initial learning rate (default 0.001)"),
    ("scrub", "probability of scrubbing the language input in training (default 0.5)"),
    ("vision_out", "vision layer width override"),
    ("hidden", "LSTM width override"),
    ("cell", "a condition label such as V1-C6-O4-A2-notX; may repeat"),
    ("actions", "2 | 4 (cell key)"),
    ("visible", "1 | 2 (cell key)"),
    ("shapes", "4 | 9 (cell key)"),
    ("colors", "1 | 6 (cell key)"),
    ("exclusive", "true | false (cell key)"),
    ("joints", "true | false (cell key)"),
];

const CELL_KEYS: [&str; 6] = ["actions", "visible", "shapes", "colors", "exclusive", "joints"];

fn set_cell_key(cell: &mut Condition, key: &str, value: &str) -> Result<(), String> {
    let num = |v: &str| v.parse::<u8>().map_err(|_| format!("{key} expects a number, got {v:?}"));
    let flag = |v: &str| v.parse::<bool>().map_err(|_| format!("{key} expects true or false, got {v:?}"));
    match key {
        "actions" => cell.actions = num(value)?,
        "visible" => cell.visible = num(value)?,
        "shapes" => cell.shapes = num(value)?,
        "colors" => cell.colors = num(value)?,
        "exclusive" => cell.exclusive = flag(value)?,
        "joints" => cell.joints = flag(value)?,
        _ => return Err(format!("unknown cell key {key:?}")),
    }
    Ok(())
}

/// Line-oriented `key=value` plan. Several pairs may share a line; `#` starts
/// a comment. Cell keys outside a `[cell]` section describe one implicit
/// cell; each `[cell]` header starts a new cell from the simplest setting.
pub fn parse_plan(text: &str) -> Result<ExperimentPlan, ExperimentError> {
    let mut plan = ExperimentPlan::default();
    let mut explicit_scale = None;
    let mut sizes: [Option<usize>; 3] = [None; 3];
    let mut cells: Vec<(usize, Condition)> = Vec::new();
    let mut implicit: Option<(usize, Condition)> = None;
    let mut in_section = false;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let err = |message: String| ExperimentError::Parse { line: line_no, message };
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line == "[cell]" {
            in_section = true;
            cells.push((line_no, Condition::default()));
            continue;
        }
        if line.starts_with('[') {
            return Err(err(format!("unknown section {line}")));
        }
        for token in line.split_whitespace() {
            let (key, value) =
                token.split_once('=').ok_or_else(|| err(format!("expected key=value, got {token:?}")))?;
            if CELL_KEYS.contains(&key) {
                let cell = if in_section {
                    &mut cells.last_mut().expect("section opened").1
                } else {
                    &mut implicit.get_or_insert((line_no, Condition::default())).1
                };
                set_cell_key(cell, key, value).map_err(&err)?;
                continue;
            }
            let int = |v: &str| v.parse::<usize>().map_err(|_| err(format!("{key} expects an integer, got {v:?}")));
            let real = |v: &str| v.parse::<f64>().map_err(|_| err(format!("{key} expects a number, got {v:?}")));
            match key {
                "scale" => explicit_scale = Some(value.parse::<Scale>().map_err(&err)?),
                "seeds" => plan.seeds = int(value)?,
                "train" => sizes[0] = Some(int(value)?),
                "val" => sizes[1] = Some(int(value)?),
                "test" => sizes[2] = Some(int(value)?),
                "epochs" => plan.train.max_epochs = int(value)?,
                "batch" => plan.train.batch_size = int(value)?,
                "lr" => plan.train.lr = real(value)?,
                "scrub" => plan.train.scrub_probability = real(value)?,
                "vision_out" => plan.vision_out = int(value)?,
                "hidden" => plan.hidden = int(value)?,
                "cell" => {
                    let c: Condition = value.parse().map_err(|e: DatasetError| err(e.to_string()))?;
                    cells.push((line_no, c));
                }
                _ => return Err(err(format!("unknown key {key:?}"))),
            }
        }
    }
    if let Some(scale) = explicit_scale {
        let (t, v, x) = scale.sizes();
        plan.scale = scale;
        plan.train_episodes = t;
        plan.val_episodes = v;
        plan.test_per_interaction = x;
    }
    if let Some(t) = sizes[0] {
        plan.train_episodes = t;
    }
    if let Some(v) = sizes[1] {
        plan.val_episodes = v;
    }
    if let Some(x) = sizes[2] {
        plan.test_per_interaction = x;
    }
    if let Some(c) = implicit {
        cells.insert(0, c);
    }
    if !cells.is_empty() {
        plan.cells = Vec::with_capacity(cells.len());
        for (line, c) in cells {
            c.validate().map_err(|e| ExperimentError::Parse { line, message: e.to_string() })?;
            if !plan.cells.contains(&c) {
                plan.cells.push(c);
            }
        }
    }
    if plan.seeds == 0 {
        return Err(ExperimentError::Parse { line: 0, message: "seeds must be at least 1".into() });
    }
    plan.train.validate().map_err(|e| ExperimentError::Parse { line: 0, message: e.to_string() })?;
    Ok(plan)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub condition: Condition,
    pub split: Split,
    pub seed: u64,
    pub frame_accuracy: f64,
    pub sentence_accuracy: f64,
}

pub const RESULTS_HEADER: &str = "condition,actions,visible,shapes,colors,exclusive,joints,split,seed,frame_acc,sentence_acc";
pub const AGGREGATE_HEADER: &str =
    "condition,actions,visible,shapes,colors,exclusive,joints,split,n,sentence_mean_pct,sentence_std_pct,frame_mean_pct";

fn condition_fields(c: &Condition) -> String {
    format!("{},{},{},{},{},{},{}", c.name(), c.actions, c.visible, c.shapes, c.colors, c.exclusive, c.joints)
}

pub fn write_results_csv(rows: &[ResultRow]) -> String {
    let mut out = format!("{RESULTS_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            condition_fields(&r.condition),
            r.split.tag(),
            r.seed,
            r.frame_accuracy,
            r.sentence_accuracy
        );
    }
    out
}

pub fn read_results_csv(text: &str) -> Result<Vec<ResultRow>, ExperimentError> {
    let mut lines = text.lines();
    if lines.next() != Some(RESULTS_HEADER) {
        return Err(ExperimentError::Results("unexpected header".into()));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
        let bad = || ExperimentError::Results(format!("row {}: {line:?}", i + 2));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 11 {
            return Err(bad());
        }
        rows.push(ResultRow {
            condition: f[0].parse().map_err(|_| bad())?,
            split: f[7].parse().map_err(|_| bad())?,
            seed: f[8].parse().map_err(|_| bad())?,
            frame_accuracy: f[9].parse().map_err(|_| bad())?,
            sentence_accuracy: f[10].parse().map_err(|_| bad())?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub condition: Condition,
    pub split: Split,
    pub sentence: Aggregate,
    pub frame: Aggregate,
}

/// Groups per-seed rows by (condition, split), keeping first-seen order.
pub fn aggregate(rows: &[ResultRow]) -> Result<Vec<AggregateRow>, ExperimentError> {
    let mut keys: Vec<(Condition, Split)> = Vec::new();
    for r in rows {
        if !keys.contains(&(r.condition, r.split)) {
            keys.push((r.condition, r.split));
        }
    }
    keys.into_iter()
        .map(|(condition, split)| {
            let group: Vec<&ResultRow> =
                rows.iter().filter(|r| r.condition == condition && r.split == split).collect();
            let s: Vec<f64> = group.iter().map(|r| r.sentence_accuracy).collect();
            let f: Vec<f64> = group.iter().map(|r| r.frame_accuracy).collect();
            Ok(AggregateRow { condition, split, sentence: aggregate_runs(&s)?, frame: aggregate_runs(&f)? })
        })
        .collect()
}

pub fn write_aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut out = format!("{AGGREGATE_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{:.2},{:.2},{:.2}",
            condition_fields(&r.condition),
            r.split.tag(),
            r.sentence.n,
            r.sentence.mean,
            r.sentence.std,
            r.frame.mean
        );
    }
    out
}

/// Plain-text results grid: columns are
/// (objects, exclusivity, actions), row blocks are (joints, visible, colors)
/// with one line per split. Unrun cells print `-`; the undefined
/// O9/C6/X cells print `N/A`.
pub fn render_table(rows: &[AggregateRow]) -> String {
    let columns: [(u8, bool, u8); 6] = [(4, true, 2), (4, true, 4), (9, false, 2), (9, false, 4), (9, true, 2), (9, true, 4)];
    let lookup = |c: Condition, split: Split| rows.iter().find(|r| r.condition == c && r.split == split);
    let mut out = String::new();
    let _ = writeln!(out, "Mean sentence-wise accuracy in percent (population std in parentheses)");
    let _ = writeln!(out, "Sentence rule: {EXTRACTION_RULE}");
    let header: Vec<String> = columns
        .iter()
        .map(|&(o, x, a)| format!("O{o}-{}-A{a}", if x { "X" } else { "notX" }))
        .collect();
    let _ = writeln!(out, "{:<28}{}", "", header.iter().map(|h| format!("{h:>16}")).collect::<String>());
    for joints in [true, false] {
        let present = rows.iter().any(|r| r.condition.joints == joints);
        if !present {
            continue;
        }
        if !joints {
            let _ = writeln!(out, "Without Joint Readings");
        }
        for visible in [1u8, 2] {
            for colors in [1u8, 6] {
                let block_present = rows
                    .iter()
                    .any(|r| r.condition.joints == joints && r.condition.visible == visible && r.condition.colors == colors);
                if !block_present {
                    continue;
                }
                let _ = writeln!(out, "V{visible} C{colors}");
                for split in Split::ALL {
                    let mut line = format!("  {:<26}", split.label());
                    for &(shapes, exclusive, actions) in &columns {
                        let c = Condition { actions, visible, shapes, colors, exclusive, joints };
                        let cell = if c.validate().is_err() {
                            "N/A".to_string()
                        } else {
                            lookup(c, split).map_or_else(|| "-".to_string(), |r| r.sentence.display())
                        };
                        let _ = write!(line, "{cell:>16}");
                    }
                    let _ = writeln!(out, "{}", line.trim_end());
                }
            }
        }
    }
    let extra: Vec<&AggregateRow> = rows
        .iter()
        .filter(|r| {
            let c = r.condition;
            !columns.contains(&(c.shapes, c.exclusive, c.actions))
        })
        .collect();
    if !extra.is_empty() {
        let _ = writeln!(out, "Other cells");
        for r in extra {
            let _ = writeln!(out, "  {:<20} {:<26} {}", r.condition.name(), r.split.label(), r.sentence.display());
        }
    }
    out
}

/// Options that do not change results.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub jobs: usize,
    pub use_cache: bool,
    pub verbose: bool,
}

impl RunOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self { out_dir: out_dir.into(), jobs: 1, use_cache: true, verbose: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub condition: Condition,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutcome {
    pub rows: Vec<ResultRow>,
    pub aggregates: Vec<AggregateRow>,
    pub failures: Vec<CellFailure>,
    /// Dataset files written (not served from cache) during this run.
    pub generated: Vec<PathBuf>,
}

fn data_dir(opts: &RunOptions) -> PathBuf {
    opts.out_dir.join("data")
}

fn header_matches(path: &Path, expect: &[(&str, String)]) -> bool {
    let Ok(header) = Dataset::read_header(path) else { return false };
    expect.iter().all(|(k, v)| header.iter().any(|(hk, hv)| hk == k && hv == v))
}

/// Loads a cached dataset when its header matches, otherwise builds and
/// writes it. Returns the dataset and whether it was generated.
fn cached(
    path: &Path,
    opts: &RunOptions,
    expect: &[(&str, String)],
    build: impl FnOnce() -> Result<Dataset, DatasetError>,
) -> Result<(Dataset, bool), ExperimentError> {
    if opts.use_cache && path.exists() && header_matches(path, expect) {
        return Ok((Dataset::read(path)?, false));
    }
    let d = build()?;
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("partial");
    d.write(&tmp)?;
    fs::rename(&tmp, path)?;
    Ok((d, true))
}

fn dataset_expect(c: &Condition, split: Split, seed: u64, n: usize) -> Vec<(&'static str, String)> {
    vec![
        ("condition", c.name()),
        ("split", split.tag().to_string()),
        ("seed", seed.to_string()),
        ("episodes", n.to_string()),
    ]
}

/// The family's constant and compositional test sets, cached on disk.
pub fn test_sets(
    visible: u8,
    joints: bool,
    per_interaction: usize,
    opts: &RunOptions,
) -> Result<(Dataset, Dataset, Vec<PathBuf>), ExperimentError> {
    let family = crate::datagen::test_family(visible, joints);
    let dir = data_dir(opts).join(format!("tests-V{visible}{}", if joints { "" } else { "-NJ" }));
    let n = per_interaction * 4;
    let cp = dir.join(format!("constant-{per_interaction}.ds"));
    let gp = dir.join(format!("compgen-{per_interaction}.ds"));
    let ce = dataset_expect(&family, Split::ConstantTest, TEST_SET_SEED, n);
    let ge = dataset_expect(&family, Split::CompGenTest, TEST_SET_SEED, n);
    if opts.use_cache && cp.exists() && gp.exists() && header_matches(&cp, &ce) && header_matches(&gp, &ge) {
        return Ok((Dataset::read(&cp)?, Dataset::read(&gp)?, Vec::new()));
    }
    let (c, g) = build_test_sets(visible, joints, per_interaction, TEST_SET_SEED)?;
    let (c, _) = cached(&cp, &RunOptions { use_cache: false, ..opts.clone() }, &ce, || Ok(c))?;
    let (g, _) = cached(&gp, &RunOptions { use_cache: false, ..opts.clone() }, &ge, || Ok(g))?;
    Ok((c, g, vec![cp, gp]))
}

/// Training and validation sets of one (cell, seed), cached on disk.
pub fn train_val_sets(
    cell: &Condition,
    seed: u64,
    plan: &ExperimentPlan,
    opts: &RunOptions,
) -> Result<(Dataset, Dataset, Vec<PathBuf>), ExperimentError> {
    let dir = data_dir(opts).join(cell.name());
    let scrub = plan.train.scrub_probability;
    let tp = dir.join(format!("train-{}-seed{seed}.ds", plan.train_episodes));
    let vp = dir.join(format!("validation-{}-seed{seed}.ds", plan.val_episodes));
    let mut te = dataset_expect(cell, Split::Train, seed, plan.train_episodes);
    te.push(("scrub_probability", scrub.to_string()));
    let mut ve = dataset_expect(cell, Split::Validation, seed, plan.val_episodes);
    ve.push(("scrub_probability", scrub.to_string()));
    let mut generated = Vec::new();
    let (t, gt) = cached(&tp, opts, &te, || generate_dataset(cell, plan.train_episodes, Split::Train, seed, scrub))?;
    let (v, gv) =
        cached(&vp, opts, &ve, || generate_dataset(cell, plan.val_episodes, Split::Validation, seed, scrub))?;
    if gt {
        generated.push(tp);
    }
    if gv {
        generated.push(vp);
    }
    Ok((t, v, generated))
}

/// Trains one (cell, seed) and scores all four splits.
pub fn run_cell_seed(
    cell: &Condition,
    seed: u64,
    plan: &ExperimentPlan,
    opts: &RunOptions,
    tests: &(Dataset, Dataset),
) -> Result<(Vec<ResultRow>, Vec<PathBuf>), ExperimentError> {
    let (train, val, generated) = train_val_sets(cell, seed, plan, opts)?;
    let cfg = TrainConfig { seed, ..plan.train };
    let run_dir = opts.out_dir.join("runs").join(cell.name()).join(format!("seed{seed}"));
    fs::create_dir_all(&run_dir)?;
    let name = cell.name();
    let (params, history) = train_run_with(&train, &val, plan.model_config(cell), &cfg, |r| {
        if opts.verbose {
            eprintln!(
                "[{name} seed {seed}] epoch {:>3} train {:.4} val {:.4} acc {:.3} lr {:.0e}",
                r.epoch, r.train_loss, r.val_loss, r.val_sentence_acc, r.lr
            );
        }
    })?;
    params.save(
        &run_dir.join("model.params"),
        &[("condition".into(), name.clone()), ("seed".into(), seed.to_string())],
    )?;
    let mut csv = Vec::new();
    history.write_csv(&mut csv)?;
    fs::write(run_dir.join("history.csv"), csv)?;
    let mut rows = Vec::with_capacity(4);
    for (split, data) in [(Split::Train, &train), (Split::Validation, &val), (Split::ConstantTest, &tests.0), (Split::CompGenTest, &tests.1)] {
        let s = evaluate(&data.episodes, &params)?;
        rows.push(ResultRow {
            condition: *cell,
            split,
            seed,
            frame_accuracy: s.frame_accuracy,
            sentence_accuracy: s.sentence_accuracy,
        });
    }
    Ok((rows, generated))
}

/// Loads a saved model and scores it on a dataset.
pub fn evaluate_checkpoint(params: &Path, data: &Path) -> Result<crate::evaluation::EvalSummary, ExperimentError> {
    let p = ModelParams::load(params)?;
    let d = Dataset::read(data)?;
    Ok(evaluate(&d.episodes, &p)?)
}

/// Runs every (cell, seed) of the plan, writes `results.csv`,
/// `aggregate.csv`, `report.txt` and `failures.csv` under the output
/// directory. A failing run is recorded and the rest of the plan continues.
pub fn run_plan(plan: &ExperimentPlan, opts: &RunOptions) -> Result<PlanOutcome, ExperimentError> {
    fs::create_dir_all(&opts.out_dir)?;
    let mut generated = Vec::new();
    let mut families: Vec<((u8, bool), (Dataset, Dataset))> = Vec::new();
    for cell in &plan.cells {
        let key = (cell.visible, cell.joints);
        if families.iter().all(|(k, _)| *k != key) {
            let (c, g, made) = test_sets(cell.visible, cell.joints, plan.test_per_interaction, opts)?;
            generated.extend(made);
            families.push((key, (c, g)));
        }
    }
    let jobs: Vec<(Condition, u64)> =
        plan.cells.iter().flat_map(|c| (0..plan.seeds as u64).map(move |s| (*c, s))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .map_err(|e| io::Error::new(io::ErrorKind::Other, e.to_string()))?;
    let results: Vec<Result<(Vec<ResultRow>, Vec<PathBuf>), ExperimentError>> = pool.install(|| {
        jobs.par_iter()
            .map(|(cell, seed)| {
                let tests = &families.iter().find(|(k, _)| *k == (cell.visible, cell.joints)).expect("family built").1;
                run_cell_seed(cell, *seed, plan, opts, tests)
            })
            .collect()
    });
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for ((cell, seed), r) in jobs.iter().zip(results) {
        match r {
            Ok((mut rs, made)) => {
                rows.append(&mut rs);
                generated.extend(made);
            }
            Err(e) => failures.push(CellFailure { condition: *cell, seed: *seed, message: e.to_string() }),
        }
    }
    let aggregates = aggregate(&rows)?;
    fs::write(opts.out_dir.join("results.csv"), write_results_csv(&rows))?;
    fs::write(opts.out_dir.join("aggregate.csv"), write_aggregate_csv(&aggregates))?;
    fs::write(opts.out_dir.join("report.txt"), render_table(&aggregates))?;
    let mut fcsv = String::from("condition,seed,error\n");
    for f in &failures {
        let _ = writeln!(fcsv, "{},{},\"{}\"", f.condition.name(), f.seed, f.message.replace('"', "'"));
    }
    fs::write(opts.out_dir.join("failures.csv"), fcsv)?;
    Ok(PlanOutcome { rows, aggregates, failures, generated })
}

/// Re-renders `aggregate.csv` and `report.txt` from an existing `results.csv`.
pub fn rerender_report(out_dir: &Path) -> Result<String, ExperimentError> {
    let rows = read_results_csv(&fs::read_to_string(out_dir.join("results.csv"))?)?;
    let aggregates = aggregate(&rows)?;
    let table = render_table(&aggregates);
    fs::write(out_dir.join("aggregate.csv"), write_aggregate_csv(&aggregates))?;
    fs::write(out_dir.join("report.txt"), &table)?;
    Ok(table)
}
