use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cadam::checks;
use cadam::harness::{self, Config, RunManifest, RunOutput, SweepAxis, SweepSpec, EPSILON0_GRID};
use cadam::Error;

/// Adaptive-optimizer experiments: Adam, AMSGrad, C-Adam and C-Adam_V2.
#[derive(Parser)]
#[command(name = "cadam", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write manifest.json, summary.json, trace.csv.
    Run(RunArgs),
    /// Run a grid of experiments in parallel.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',', group = "axis")]
        seeds: Option<Vec<u64>>,
        /// Comma-separated ε0 values; bare flag uses the default grid.
        #[arg(long, value_delimiter = ',', num_args = 0.., group = "axis")]
        epsilon0_grid: Option<Vec<f64>>,
        /// Comma-separated base learning rates.
        #[arg(long, value_delimiter = ',', group = "axis")]
        alpha0_grid: Option<Vec<f64>>,
    },
    /// Align the traces of finished runs and report metric deltas.
    Compare {
        /// Run directories, each holding manifest.json, summary.json, trace.csv.
        #[arg(required = true, num_args = 2..)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the optimizer and model property suites.
    Check {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    experiment: Option<String>,
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// File of `key = value` lines; command-line flags win over it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Retain the gradient history and evaluate the regret bound.
    #[arg(long)]
    theorem_check: bool,
    /// Use generated digit images instead of IDX files.
    #[arg(long)]
    synthetic_digits: bool,
    #[arg(long)]
    mnist_images: Option<PathBuf>,
    #[arg(long)]
    mnist_labels: Option<PathBuf>,
    #[arg(long)]
    trace_stride: Option<u64>,
}

impl RunArgs {
    fn manifest(&self) -> cadam::Result<RunManifest> {
        self.manifest_with(None)
    }

    /// `axis` seeds the swept key with its first grid value so the base
    /// manifest validates on its own.
    fn manifest_with(&self, axis: Option<&SweepAxis>) -> cadam::Result<RunManifest> {
        let mut cfg = match &self.config {
            Some(path) => Config::load(path)?,
            None => Config::default(),
        };
        let mut flags = Config::default();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                flags.set(k, v);
            }
        };
        put("experiment", self.experiment.clone());
        put("optimizer", self.optimizer.clone());
        put("seed", self.seed.map(|s| s.to_string()));
        put("out", self.out.as_ref().map(|p| p.display().to_string()));
        put("theorem_check", self.theorem_check.then(|| "true".into()));
        put("synthetic_digits", self.synthetic_digits.then(|| "true".into()));
        put("mnist_images", self.mnist_images.as_ref().map(|p| p.display().to_string()));
        put("mnist_labels", self.mnist_labels.as_ref().map(|p| p.display().to_string()));
        put("trace_stride", self.trace_stride.map(|s| s.to_string()));
        for kv in &self.sets {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::ConfigInvalid { field: "set".into(), message: format!("expected KEY=VALUE, got `{kv}`") })?;
            flags.set(k.trim(), v.trim());
        }
        if let Some(axis) = axis {
            if !axis.is_empty() {
                flags.set(axis.name(), axis.value(0));
            }
        }
        cfg.merge(&flags);
        cfg.resolve()
    }
}

fn default_dir(m: &RunManifest) -> PathBuf {
    m.out_dir.clone().unwrap_or_else(|| {
        PathBuf::from("runs").join(format!("{}-{}-s{}", m.experiment, m.optimizer.name(), m.seed))
    })
}

fn report(out: &RunOutput, dir: &Path) -> cadam::Result<()> {
    println!("{}", serde_json::to_string_pretty(&out.summary)?);
    eprintln!("wrote {}", dir.display());
    Ok(())
}

enum Failure {
    Error(Error),
    Checks,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run(args) => {
            let m = args.manifest()?;
            let out = harness::run(&m)?;
            let dir = default_dir(&m);
            out.write(&dir)?;
            report(&out, &dir)?;
        }
        Command::Sweep { run, seeds, epsilon0_grid, alpha0_grid } => {
            let axis = match (seeds, epsilon0_grid, alpha0_grid) {
                (Some(s), _, _) => SweepAxis::Seeds(s),
                (_, Some(g), _) if g.is_empty() => SweepAxis::Epsilon0Grid(EPSILON0_GRID.to_vec()),
                (_, Some(g), _) => SweepAxis::Epsilon0Grid(g),
                (_, _, Some(g)) => SweepAxis::Alpha0Grid(g),
                _ => {
                    return Err(Error::ConfigInvalid {
                        field: "axis".into(),
                        message: "pass one of --seeds, --epsilon0-grid, --alpha0-grid".into(),
                    }
                    .into())
                }
            };
            let base = run.manifest_with(Some(&axis))?;
            let dir = base.out_dir.clone().unwrap_or_else(|| {
                PathBuf::from("runs").join(format!("sweep-{}-{}-{}", base.experiment, base.optimizer.name(), axis.name()))
            });
            let spec = SweepSpec { base, axis };
            let outputs = harness::sweep(&spec)?;
            harness::write_sweep(&spec, &outputs, &dir)?;
            print!("{}", harness::sweep_table(&spec, &outputs));
            if let Some(i) = harness::best_by_first_hit(&outputs) {
                println!("best by first hit: index {i} ({}={})", spec.axis.name(), spec.axis.value(i));
            }
            eprintln!("wrote {}", dir.display());
        }
        Command::Compare { runs, out } => {
            let loaded = runs.iter().map(RunOutput::load).collect::<cadam::Result<Vec<_>>>()?;
            let cmp = harness::compare(&loaded)?;
            println!("{}", serde_json::to_string_pretty(&cmp.deltas).map_err(Error::from)?);
            if let Some(dir) = out {
                cmp.write(&dir)?;
                eprintln!("wrote {}", dir.display());
            }
        }
        Command::Check { seed } => {
            let results = checks::run_all(seed)?;
            for r in &results {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            if results.iter().any(|r| !r.passed) {
                return Err(Failure::Checks);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checks) => ExitCode::from(3),
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}
