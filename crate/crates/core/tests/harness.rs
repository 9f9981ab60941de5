use std::fs;
use std::path::Path;
use std::process::Command;

use cadam::harness::{self, compare, Config, Experiment, RunManifest, RunOutput, SweepAxis, SweepSpec, TRACE_HEADER};
use cadam::{Error, Variant};

fn short_synthetic(variant: Variant, seed: u64) -> RunManifest {
    let mut m = RunManifest::preset(Experiment::Synthetic, variant, seed);
    m.iterations = 20_000;
    m.trace_stride = 100;
    m
}

fn digits(experiment: Experiment, variant: Variant) -> RunManifest {
    RunManifest::preset(experiment, variant, 1).with_synthetic_digits()
}

#[test]
fn preset_matches_golden_manifest() {
    let m = RunManifest::preset(Experiment::Synthetic, Variant::CAdam, 1);
    let golden = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/preset-synthetic-cadam.json")).unwrap();
    let expected: RunManifest = serde_json::from_str(&golden).unwrap();
    let mut expected = expected;
    // the version string moves with the crate; everything else is frozen
    expected.code_version = m.code_version.clone();
    assert_eq!(m, expected);
}

#[test]
fn same_manifest_gives_byte_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    for m in [short_synthetic(Variant::CAdam, 7), digits(Experiment::LogReg, Variant::Adam)] {
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        harness::run(&m).unwrap().write(&a).unwrap();
        harness::run(&m).unwrap().write(&b).unwrap();
        for f in ["manifest.json", "summary.json", "trace.csv"] {
            assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
        }
    }
}

#[test]
fn different_seeds_give_different_traces() {
    let a = harness::run(&short_synthetic(Variant::Adam, 1)).unwrap();
    let b = harness::run(&short_synthetic(Variant::Adam, 2)).unwrap();
    assert_ne!(a.trace, b.trace);
}

#[test]
fn logreg_trace_has_one_row_per_iteration() {
    let out = harness::run(&digits(Experiment::LogReg, Variant::CAdam)).unwrap();
    assert_eq!(out.trace.len(), 200);
    assert_eq!(out.trace.last().unwrap().t, 200);
    let csv = harness::trace_csv(&out.trace);
    assert_eq!(csv.lines().next().unwrap(), TRACE_HEADER);
    assert_eq!(csv.lines().count(), 201);
    let s = &out.summary;
    assert!(s.final_loss < s.initial_loss.unwrap());
    assert!(s.val_accuracy.unwrap() > 0.5);
    assert!(s.lambda_min.unwrap() >= 0.0 && s.lambda_max.unwrap() <= 1.0);
}

#[test]
fn run_directory_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = harness::run(&short_synthetic(Variant::AmsGrad, 3)).unwrap();
    out.write(dir.path()).unwrap();
    assert_eq!(RunOutput::load(dir.path()).unwrap(), out);
}

#[test]
fn comparison_aligns_runs_and_reports_deltas() {
    let a = harness::run(&short_synthetic(Variant::AmsGrad, 1)).unwrap();
    let c = harness::run(&short_synthetic(Variant::CAdam, 1)).unwrap();
    let cmp = compare(&[a.clone(), c.clone()]).unwrap();
    assert_eq!(cmp.labels, vec!["amsgrad-s1".to_string(), "cadam-s1".to_string()]);
    assert_eq!(cmp.t.len(), a.trace.len());
    assert_eq!(cmp.deltas[0].final_loss, 0.0);
    assert_eq!(cmp.deltas[0].average_regret, Some(0.0));
    let d = cmp.deltas[1].average_regret.unwrap();
    assert_eq!(d, c.summary.average_regret.unwrap() - a.summary.average_regret.unwrap());

    let dup = compare(&[a.clone(), a.clone()]).unwrap();
    assert_eq!(dup.labels, vec!["amsgrad-s1".to_string(), "amsgrad-s1#1".to_string()]);

    assert!(matches!(compare(std::slice::from_ref(&a)), Err(Error::IncompatibleRuns(_))));
    let other = harness::run(&digits(Experiment::LogReg, Variant::Adam)).unwrap();
    assert!(matches!(compare(&[a.clone(), other]), Err(Error::IncompatibleRuns(_))));
    let mut longer = short_synthetic(Variant::CAdam, 1);
    longer.iterations = 30_000;
    let longer = harness::run(&longer).unwrap();
    assert!(matches!(compare(&[a, longer]), Err(Error::IncompatibleRuns(_))));
}

#[test]
fn seed_sweep_keeps_grid_order() {
    let spec = SweepSpec {
        base: short_synthetic(Variant::CAdam, 1),
        axis: SweepAxis::Seeds(vec![5, 3, 9]),
    };
    let outs = harness::sweep(&spec).unwrap();
    let seeds: Vec<u64> = outs.iter().map(|o| o.summary.seed).collect();
    assert_eq!(seeds, vec![5, 3, 9]);
    for (o, s) in outs.iter().zip([5, 3, 9]) {
        assert_eq!(o.trace, harness::run(&short_synthetic(Variant::CAdam, s)).unwrap().trace);
    }
    let table = harness::sweep_table(&spec, &outs);
    assert_eq!(table.lines().count(), 4);
}

#[test]
fn config_file_resolves_like_flags() {
    let cfg = Config::parse(
        "# short run\nexperiment = synthetic\noptimizer = C-Adam\nseed = 4\niterations = 1000 # inline\n",
    )
    .unwrap();
    let m = cfg.resolve().unwrap();
    let mut expected = RunManifest::preset(Experiment::Synthetic, Variant::CAdam, 4);
    expected.iterations = 1000;
    assert_eq!(m, expected);
    assert!(matches!(Config::parse("no equals sign"), Err(Error::ConfigInvalid { .. })));
}

fn cli(args: &[&str], cwd: &Path) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_cadam")).args(args).current_dir(cwd).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stdout).into_owned())
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let (code, stdout) = cli(
        &["run", "--experiment", "synthetic", "--optimizer", "cadam", "--set", "iterations=2000", "--out", "r1"],
        p,
    );
    assert_eq!(code, 0);
    assert!(stdout.contains("\"final_x\""));
    assert!(p.join("r1/trace.csv").exists());
    let (code, _) = cli(
        &["run", "--experiment", "synthetic", "--optimizer", "amsgrad", "--set", "iterations=2000", "--out", "r2"],
        p,
    );
    assert_eq!(code, 0);
    assert_eq!(cli(&["compare", "r1", "r2", "--out", "cmp"], p).0, 0);
    assert!(p.join("cmp/compare.csv").exists());

    assert_eq!(cli(&["run", "--experiment", "synthetic", "--optimizer", "nadam"], p).0, 1);
    assert_eq!(cli(&["run", "--experiment", "synthetic", "--optimizer", "cadam_v2"], p).0, 1);
    assert_eq!(
        cli(&["run", "--experiment", "logreg", "--optimizer", "adam", "--mnist-images", "x", "--mnist-labels", "y"], p).0,
        1
    );
    assert_eq!(cli(&["run", "--experiment", "synthetic", "--optimizer", "adam", "--config", "missing.cfg"], p).0, 1);
    // a directory that is not a run cannot be compared
    assert_eq!(cli(&["compare", "r1", "cmp"], p).0, 2);
}

#[test]
fn cli_epsilon0_sweep_uses_default_grid() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout) = cli(
        &[
            "sweep", "--experiment", "synthetic", "--optimizer", "cadam_v2", "--set", "iterations=1000", "--epsilon0-grid",
            "--out", "sw",
        ],
        dir.path(),
    );
    assert_eq!(code, 0);
    assert_eq!(stdout.lines().filter(|l| l.contains(",epsilon0,")).count(), harness::EPSILON0_GRID.len());
    assert!(dir.path().join("sw/run_5/summary.json").exists());
}
