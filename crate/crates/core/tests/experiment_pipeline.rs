use std::fs;
use std::time::SystemTime;

use compgen_core::datagen::Split;
use compgen_core::experiment::{
    aggregate, parse_plan, read_results_csv, rerender_report, run_plan, write_results_csv, ExperimentError,
    RunOptions,
};

const PLAN: &str = "
# smallest useful plan
seeds=1 train=40 val=8 test=2
epochs=2 batch=8 vision_out=4 hidden=8
cell=V1-C1-O4-A2-X
";

fn mtimes(dir: &std::path::Path) -> Vec<(String, SystemTime)> {
    let mut out = Vec::new();
    for entry in walk(dir) {
        if entry.extension().is_some_and(|e| e == "ds") {
            out.push((entry.display().to_string(), fs::metadata(&entry).unwrap().modified().unwrap()));
        }
    }
    out.sort();
    out
}

fn walk(dir: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn one_cell_one_seed_runs_end_to_end_and_reuses_its_cache() {
    let dir = tempfile::tempdir().unwrap();
    let plan = parse_plan(PLAN).unwrap();
    let opts = RunOptions::new(dir.path());

    let first = run_plan(&plan, &opts).unwrap();
    assert!(first.failures.is_empty(), "{:?}", first.failures);
    assert_eq!(first.rows.len(), 4);
    let splits: Vec<Split> = first.rows.iter().map(|r| r.split).collect();
    assert_eq!(splits, Split::ALL.to_vec());
    assert_eq!(first.generated.len(), 4);
    for name in ["results.csv", "aggregate.csv", "report.txt", "failures.csv"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    assert!(dir.path().join("runs/V1-C1-O4-A2-X/seed0/model.params").exists());
    assert!(dir.path().join("runs/V1-C1-O4-A2-X/seed0/history.csv").exists());

    let before = mtimes(&dir.path().join("data"));
    let aggregate_before = fs::read(dir.path().join("aggregate.csv")).unwrap();
    let second = run_plan(&plan, &opts).unwrap();
    assert!(second.generated.is_empty(), "{:?}", second.generated);
    assert_eq!(mtimes(&dir.path().join("data")), before);
    assert_eq!(second.rows, first.rows);
    assert_eq!(fs::read(dir.path().join("aggregate.csv")).unwrap(), aggregate_before);

    let table = rerender_report(dir.path()).unwrap();
    assert!(table.contains("V1 C1"));
    assert!(table.contains(Split::CompGenTest.label()));
    assert_eq!(fs::read(dir.path().join("aggregate.csv")).unwrap(), aggregate_before);
}

#[test]
fn changed_settings_invalidate_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    let opts = RunOptions::new(dir.path());
    let plan = parse_plan(PLAN).unwrap();
    run_plan(&plan, &opts).unwrap();
    let rescrubbed = parse_plan(&format!("{PLAN}\nscrub=0.25")).unwrap();
    let out = run_plan(&rescrubbed, &opts).unwrap();
    assert_eq!(out.generated.len(), 2, "train and validation sets are rebuilt, tests are not");
}

#[test]
fn results_csv_round_trips_and_aggregates_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let plan = parse_plan(PLAN).unwrap();
    let out = run_plan(&plan, &RunOptions::new(dir.path())).unwrap();
    let text = write_results_csv(&out.rows);
    let back = read_results_csv(&text).unwrap();
    assert_eq!(back, out.rows);
    assert_eq!(aggregate(&back).unwrap(), out.aggregates);
    assert!(read_results_csv("bogus\n").is_err());
}

#[test]
fn plan_errors_carry_line_numbers() {
    match parse_plan("seeds=2\n\nbogus=1\n") {
        Err(ExperimentError::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
    match parse_plan("[cell]\ncolors=6\nshapes=9\n") {
        Err(ExperimentError::Parse { line, message }) => {
            assert_eq!(line, 1);
            assert!(message.contains("N/A"), "{message}");
        }
        other => panic!("{other:?}"),
    }
    let p = parse_plan("[cell]\nactions=4\n[cell]\njoints=false\n").unwrap();
    assert_eq!(p.cells.len(), 2);
    assert_eq!(p.cells[0].actions, 4);
    assert!(!p.cells[1].joints);
}
