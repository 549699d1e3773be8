use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use compgen_core::datagen::{Condition, Split};
use compgen_core::experiment::{
    self, evaluate_checkpoint, parse_plan, rerender_report, run_cell_seed, test_sets, train_val_sets,
    ExperimentError, ExperimentPlan, RunOptions, Scale, PLAN_KEYS,
};

#[derive(Parser)]
#[command(name = "compgen", version, about = "Grounded compositional-generalization laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Plan file of key=value lines (see `compgen keys`)
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Output directory for datasets, checkpoints and reports
    #[arg(long, env = "COMPGEN_OUT", default_value = "compgen-out")]
    out: PathBuf,
    /// Seeds per cell (overrides the plan)
    #[arg(long)]
    seeds: Option<usize>,
    /// desk (800/300 episodes, 16/64 units) or paper (5000/2500, 32/256)
    #[arg(long)]
    scale: Option<Scale>,
    /// Worker threads for independent runs
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Regenerate datasets even when cached copies match
    #[arg(long)]
    no_cache: bool,
    /// Print per-epoch progress
    #[arg(long, short)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate (or refresh) every dataset the plan needs
    Gen(Common),
    /// Train and evaluate one cell
    Train {
        #[command(flatten)]
        common: Common,
        /// Condition label, e.g. V1-C6-O4-A2-notX
        #[arg(long)]
        cell: Condition,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Score a saved checkpoint on a dataset file
    Eval {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Run the whole plan and write results, aggregates and the report
    Run(Common),
    /// Re-render aggregate.csv and report.txt from results.csv
    Report {
        #[arg(long, env = "COMPGEN_OUT", default_value = "compgen-out")]
        out: PathBuf,
    },
    /// List plan-file keys and their defaults
    Keys,
}

fn load_plan(c: &Common) -> Result<ExperimentPlan, ExperimentError> {
    let mut plan = match &c.plan {
        Some(p) => parse_plan(&std::fs::read_to_string(p)?)?,
        None => ExperimentPlan::default(),
    };
    if let Some(scale) = c.scale {
        let fresh = ExperimentPlan::for_scale(scale);
        plan.scale = scale;
        plan.train_episodes = fresh.train_episodes;
        plan.val_episodes = fresh.val_episodes;
        plan.test_per_interaction = fresh.test_per_interaction;
    }
    if let Some(s) = c.seeds {
        plan.seeds = s.max(1);
    }
    if plan.scale == Scale::Paper {
        eprintln!("warning: paper scale trains 5000-episode sets with 256 LSTM cells; expect hours per run on a CPU");
    }
    Ok(plan)
}

fn options(c: &Common) -> RunOptions {
    RunOptions { out_dir: c.out.clone(), jobs: c.jobs, use_cache: !c.no_cache, verbose: c.verbose }
}

fn gen(c: &Common) -> Result<(), ExperimentError> {
    let plan = load_plan(c)?;
    let opts = options(c);
    let mut families = Vec::new();
    for cell in &plan.cells {
        if !families.contains(&(cell.visible, cell.joints)) {
            families.push((cell.visible, cell.joints));
            let (_, _, made) = test_sets(cell.visible, cell.joints, plan.test_per_interaction, &opts)?;
            report_made(&made);
        }
        for seed in 0..plan.seeds as u64 {
            let (_, _, made) = train_val_sets(cell, seed, &plan, &opts)?;
            report_made(&made);
        }
    }
    Ok(())
}

fn report_made(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn train(c: &Common, cell: &Condition, seed: u64) -> Result<(), ExperimentError> {
    let mut plan = load_plan(c)?;
    plan.cells = vec![*cell];
    let opts = options(c);
    let (constant, compgen, _) = test_sets(cell.visible, cell.joints, plan.test_per_interaction, &opts)?;
    let (rows, _) = run_cell_seed(cell, seed, &plan, &opts, &(constant, compgen))?;
    for r in rows {
        println!(
            "{:<22} frame {:6.2}%  sentence {:6.2}%",
            r.split.label(),
            100.0 * r.frame_accuracy,
            100.0 * r.sentence_accuracy
        );
    }
    Ok(())
}

fn eval(params: &Path, data: &Path) -> Result<(), ExperimentError> {
    let s = evaluate_checkpoint(params, data)?;
    println!("episodes {}", s.episodes);
    println!("frame accuracy    {:.2}%", 100.0 * s.frame_accuracy);
    println!("sentence accuracy {:.2}%", 100.0 * s.sentence_accuracy);
    println!("loss              {:.6}", s.loss);
    Ok(())
}

fn run(c: &Common) -> Result<bool, ExperimentError> {
    let plan = load_plan(c)?;
    let opts = options(c);
    let outcome = experiment::run_plan(&plan, &opts)?;
    print!("{}", experiment::render_table(&outcome.aggregates));
    for f in &outcome.failures {
        eprintln!("failed: {} seed {}: {}", f.condition, f.seed, f.message);
    }
    println!("results in {}", opts.out_dir.display());
    Ok(outcome.failures.is_empty())
}

fn exit_code(e: &ExperimentError) -> u8 {
    match e {
        ExperimentError::Dataset(d) => d.code() as u8,
        ExperimentError::Parse { .. } => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Gen(c) => gen(c).map(|_| true),
        Command::Train { common, cell, seed } => train(common, cell, *seed).map(|_| true),
        Command::Eval { params, data } => eval(params, data).map(|_| true),
        Command::Run(c) => run(c),
        Command::Report { out } => rerender_report(out).map(|t| {
            print!("{t}");
            true
        }),
        Command::Keys => {
            for (k, d) in PLAN_KEYS {
                println!("{k:<12} {d}");
            }
            println!("splits: {}", Split::ALL.map(|s| s.tag()).join(", "));
            Ok(true)
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
