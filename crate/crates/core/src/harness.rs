//! Experiment orchestration: presets, `key = value` configs, single runs,
//! parallel sweeps and side-by-side comparisons.
//!
//! A run directory holds `manifest.json` (the fully resolved configuration),
//! `summary.json` and `trace.csv`. Outputs depend only on the manifest, so
//! two runs of the same manifest produce byte-identical files.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{self, BatchStream, Boundary, Dataset};
use crate::diagnostics::{bound_rhs, BoundReport, StepTrace, DEFAULT_HISTORY_CAP};
use crate::error::{Error, Result};
use crate::models::{self, ModelSpec};
use crate::oco::{run_online, LinearLossProblem, LossMode, OcoOptions, OnlineProblem};
use crate::optim::{AlphaSchedule, Beta1Schedule, Hyperparams, SecondMomentBase, Variant, DEFAULT_BETA1_DECAY};
use crate::projection::FeasibleBox;
use crate::rng::{self, streams};
use crate::vecmath::Vector;

/// Period of the deterministic counterexample; the per-period mean slope
/// `(1010 − 100·10)/101` stays positive.
pub const SYNTHETIC_PERIOD: u64 = 101;

/// Distance to the optimum that counts as having reached it.
pub const REACH_TOLERANCE: f64 = 0.05;

/// Default threshold grid for C-Adam_V2 sweeps.
pub const EPSILON0_GRID: [f64; 6] = [1e-4, 1e-2, 1.0, 1e2, 1e4, 1e6];

pub const TRACE_HEADER: &str = "t,loss,avg_regret,x0,psi_min,lambda_min,lambda_max,grad_inf,lr_eff_min,lr_eff_max";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Experiment {
    #[serde(rename = "synthetic")]
    Synthetic,
    #[serde(rename = "synthetic_deterministic")]
    SyntheticDeterministic,
    #[serde(rename = "noisy_2d")]
    Noisy2D,
    #[serde(rename = "logreg")]
    LogReg,
    #[serde(rename = "mlp")]
    Mlp,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::Synthetic,
        Experiment::SyntheticDeterministic,
        Experiment::Noisy2D,
        Experiment::LogReg,
        Experiment::Mlp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Synthetic => "synthetic",
            Experiment::SyntheticDeterministic => "synthetic_deterministic",
            Experiment::Noisy2D => "noisy_2d",
            Experiment::LogReg => "logreg",
            Experiment::Mlp => "mlp",
        }
    }

    pub fn is_synthetic(self) -> bool {
        matches!(self, Experiment::Synthetic | Experiment::SyntheticDeterministic)
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let squash = |x: &str| -> String {
            x.to_ascii_lowercase().chars().filter(|c| !matches!(c, '-' | '_')).collect()
        };
        let key = squash(s.trim());
        Experiment::ALL
            .into_iter()
            .find(|e| squash(e.name()) == key)
            .ok_or_else(|| {
                Error::config(
                    "experiment",
                    format!("unknown experiment `{s}` (expected synthetic, synthetic_deterministic, noisy_2d, logreg or mlp)"),
                )
            })
    }
}

/// Where a run's losses come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DatasetSpec {
    /// The linear counterexample; `period` selects the deterministic form.
    Linear {
        c_rare: f64,
        c_common: f64,
        p: f64,
        period: Option<u64>,
        lower: f64,
        upper: f64,
    },
    Noisy2D { n: usize, flip: f64, train_fraction: f64 },
    SyntheticDigits { n_train: usize, n_val: usize },
    Mnist {
        images: Option<PathBuf>,
        labels: Option<PathBuf>,
        n_train: usize,
        n_val: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: Experiment,
    pub optimizer: Variant,
    pub hyper: Hyperparams,
    pub seed: u64,
    pub iterations: u64,
    pub batch_size: usize,
    pub l2: f64,
    pub hidden: Option<usize>,
    pub dataset: DatasetSpec,
    /// Initial point of the synthetic runs.
    pub x0: Option<f64>,
    pub trace_stride: u64,
    pub theorem_check: bool,
    pub reach_tolerance: f64,
    pub code_version: String,
    pub generator: String,
    pub out_dir: Option<PathBuf>,
}

impl RunManifest {
    /// The preset hyperparameters of an experiment.
    pub fn preset(experiment: Experiment, optimizer: Variant, seed: u64) -> Self {
        let classification = Hyperparams::new(1e-3, 0.9, 0.999, 1e-12).with_second_moment_base(SecondMomentBase::Raw);
        let base = RunManifest {
            experiment,
            optimizer,
            hyper: Hyperparams::new(0.5, 0.9, 0.99, 1e-8)
                .with_alpha_schedule(AlphaSchedule::InverseSqrt)
                .with_second_moment_base(SecondMomentBase::Raw),
            seed,
            iterations: 5_000_000,
            batch_size: 1,
            l2: 0.0,
            hidden: None,
            dataset: DatasetSpec::Linear {
                c_rare: 1010.0,
                c_common: -10.0,
                p: 0.01,
                period: None,
                lower: -1.0,
                upper: 1.0,
            },
            x0: Some(0.0),
            trace_stride: 1000,
            theorem_check: false,
            reach_tolerance: REACH_TOLERANCE,
            code_version: concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION")).to_string(),
            generator: rng::GENERATOR.to_string(),
            out_dir: None,
        };
        let digits = |iterations| RunManifest {
            hyper: classification.clone(),
            iterations,
            batch_size: 128,
            l2: 1e-4,
            dataset: DatasetSpec::Mnist {
                images: None,
                labels: None,
                n_train: 2000,
                n_val: 500,
            },
            x0: None,
            trace_stride: 1,
            ..base.clone()
        };
        match experiment {
            Experiment::Synthetic => base,
            Experiment::SyntheticDeterministic => {
                let mut m = base;
                if let DatasetSpec::Linear { period, .. } = &mut m.dataset {
                    *period = Some(SYNTHETIC_PERIOD);
                }
                m
            }
            Experiment::LogReg => digits(200),
            Experiment::Mlp => {
                let mut m = digits(500);
                m.hidden = Some(100);
                m.hyper.beta1_schedule = Beta1Schedule::Decaying(DEFAULT_BETA1_DECAY);
                m
            }
            Experiment::Noisy2D => RunManifest {
                dataset: DatasetSpec::Noisy2D {
                    n: 10_000,
                    flip: 0.1,
                    train_fraction: 0.8,
                },
                ..digits(200)
            },
        }
    }

    /// Switches a digits experiment to the built-in synthetic digit images.
    pub fn with_synthetic_digits(mut self) -> Self {
        if let DatasetSpec::Mnist { n_train, n_val, .. } = self.dataset {
            self.dataset = DatasetSpec::SyntheticDigits { n_train, n_val };
        }
        self
    }

    pub fn model(&self) -> Option<ModelSpec> {
        match self.experiment {
            Experiment::Synthetic | Experiment::SyntheticDeterministic => None,
            Experiment::Noisy2D => Some(ModelSpec::Linear2D { l2: self.l2 }),
            Experiment::LogReg => Some(ModelSpec::Softmax {
                classes: data::DIGIT_CLASSES,
                features: data::DIGIT_FEATURES,
                l2: self.l2,
            }),
            Experiment::Mlp => Some(ModelSpec::Mlp {
                features: data::DIGIT_FEATURES,
                hidden: self.hidden.unwrap_or(100),
                classes: data::DIGIT_CLASSES,
                l2: self.l2,
            }),
        }
    }

    /// Number of optimized parameters.
    pub fn dim(&self) -> usize {
        self.model().map_or(1, |m| m.num_params())
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        if self.optimizer == Variant::CAdamV2 && self.hyper.epsilon0 <= 0.0 {
            return Err(Error::ThresholdUnset);
        }
        if self.iterations == 0 {
            return Err(Error::config("iterations", "must be at least 1"));
        }
        if self.trace_stride == 0 {
            return Err(Error::config("trace_stride", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return Err(Error::config("l2", "must be finite and non-negative"));
        }
        if !(self.reach_tolerance > 0.0) {
            return Err(Error::config("reach_tolerance", "must be positive"));
        }
        if self.theorem_check {
            if !self.experiment.is_synthetic() {
                return Err(Error::config("theorem_check", "needs a bounded domain (synthetic experiments only)"));
            }
            let cells = (self.iterations as usize).saturating_mul(self.dim());
            if cells > DEFAULT_HISTORY_CAP {
                return Err(Error::HistoryTooLarge { cells, cap: DEFAULT_HISTORY_CAP });
            }
        }
        match &self.dataset {
            DatasetSpec::Linear { .. } => {
                if !self.experiment.is_synthetic() {
                    return Err(Error::config("dataset", "linear losses belong to the synthetic experiments"));
                }
                self.linear_problem()?.validate()?;
                if let Some(x0) = self.x0 {
                    if !self.linear_problem()?.domain().contains(&Vector::filled(1, x0)) {
                        return Err(Error::config("x0", "initial point lies outside the box"));
                    }
                }
            }
            DatasetSpec::Noisy2D { n, flip, train_fraction } => {
                if self.experiment != Experiment::Noisy2D {
                    return Err(Error::config("dataset", "noisy 2-D data belongs to the noisy_2d experiment"));
                }
                if *n < 2 {
                    return Err(Error::config("n_points", "must be at least 2"));
                }
                if !(0.0..0.5).contains(flip) {
                    return Err(Error::config("flip", "must lie in [0, 0.5)"));
                }
                if !(*train_fraction > 0.0 && *train_fraction < 1.0) {
                    return Err(Error::config("train_fraction", "must lie strictly between 0 and 1"));
                }
            }
            DatasetSpec::SyntheticDigits { n_train, n_val } | DatasetSpec::Mnist { n_train, n_val, .. } => {
                if !matches!(self.experiment, Experiment::LogReg | Experiment::Mlp) {
                    return Err(Error::config("dataset", "digit images belong to the logreg and mlp experiments"));
                }
                if *n_train == 0 || *n_val == 0 {
                    return Err(Error::config("n_train", "train and validation sizes must be positive"));
                }
                if let DatasetSpec::Mnist { images, labels, .. } = &self.dataset {
                    if images.is_none() || labels.is_none() {
                        return Err(Error::config(
                            "mnist_images",
                            "pass both IDX paths (mnist_images, mnist_labels) or select synthetic_digits",
                        ));
                    }
                }
            }
        }
        if let Some(0) = self.hidden {
            return Err(Error::config("hidden", "must be at least 1"));
        }
        Ok(())
    }

    fn linear_problem(&self) -> Result<LinearLossProblem> {
        match self.dataset {
            DatasetSpec::Linear {
                c_rare,
                c_common,
                p,
                period,
                lower,
                upper,
            } => Ok(LinearLossProblem {
                c_rare,
                c_common,
                p,
                mode: match period {
                    Some(period) => LossMode::Deterministic { period },
                    None => LossMode::Stochastic { seed: self.seed },
                },
                lower,
                upper,
            }),
            _ => Err(Error::config("dataset", "not a linear-loss experiment")),
        }
    }

    /// Applies one `key = value` setting.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "experiment" => {
                let e: Experiment = value.parse()?;
                if e != self.experiment {
                    return Err(Error::config("experiment", "cannot change after the preset is chosen"));
                }
            }
            "optimizer" => self.optimizer = value.parse()?,
            "seed" => self.seed = num(key, value)?,
            "iterations" => self.iterations = num(key, value)?,
            "alpha0" => self.hyper.alpha0 = num(key, value)?,
            "alpha_schedule" => {
                self.hyper.alpha_schedule = match value {
                    "constant" => AlphaSchedule::Constant,
                    "inverse_sqrt" => AlphaSchedule::InverseSqrt,
                    _ => return Err(Error::config(key, "expected constant or inverse_sqrt")),
                }
            }
            "beta1" => self.hyper.beta1 = num(key, value)?,
            "beta1_schedule" => {
                self.hyper.beta1_schedule = match value {
                    "constant" => Beta1Schedule::Constant,
                    "decaying" => match self.hyper.beta1_schedule {
                        Beta1Schedule::Decaying(r) => Beta1Schedule::Decaying(r),
                        Beta1Schedule::Constant => Beta1Schedule::Decaying(DEFAULT_BETA1_DECAY),
                    },
                    _ => return Err(Error::config(key, "expected constant or decaying")),
                }
            }
            "beta1_decay" => self.hyper.beta1_schedule = Beta1Schedule::Decaying(num(key, value)?),
            "beta2" => self.hyper.beta2 = num(key, value)?,
            "epsilon" => self.hyper.epsilon = num(key, value)?,
            "epsilon0" => self.hyper.epsilon0 = num(key, value)?,
            "second_moment_base" => {
                self.hyper.second_moment_base = match value {
                    "raw" => SecondMomentBase::Raw,
                    "running_max" => SecondMomentBase::RunningMax,
                    _ => return Err(Error::config(key, "expected raw or running_max")),
                }
            }
            "batch_size" => self.batch_size = num(key, value)?,
            "l2" => self.l2 = num(key, value)?,
            "hidden" => {
                if self.experiment != Experiment::Mlp {
                    return Err(Error::config(key, "only the mlp experiment has a hidden layer"));
                }
                self.hidden = Some(num(key, value)?);
            }
            "x0" => {
                if !self.experiment.is_synthetic() {
                    return Err(Error::config(key, "only synthetic experiments take an initial point"));
                }
                self.x0 = Some(num(key, value)?);
            }
            "trace_stride" => self.trace_stride = num(key, value)?,
            "theorem_check" => self.theorem_check = flag(key, value)?,
            "reach_tolerance" => self.reach_tolerance = num(key, value)?,
            "out" => self.out_dir = Some(PathBuf::from(value)),
            "p" | "period" => match &mut self.dataset {
                DatasetSpec::Linear { p, period, .. } => {
                    if key == "p" {
                        *p = num(key, value)?;
                    } else if self.experiment == Experiment::SyntheticDeterministic {
                        *period = Some(num(key, value)?);
                    } else {
                        return Err(Error::config(key, "only the deterministic synthetic experiment has a period"));
                    }
                }
                _ => return Err(Error::config(key, "only synthetic experiments use this setting")),
            },
            "n_points" | "flip" | "train_fraction" => match &mut self.dataset {
                DatasetSpec::Noisy2D { n, flip, train_fraction } => match key {
                    "n_points" => *n = num(key, value)?,
                    "flip" => *flip = num(key, value)?,
                    _ => *train_fraction = num(key, value)?,
                },
                _ => return Err(Error::config(key, "only the noisy_2d experiment uses this setting")),
            },
            "n_train" | "n_val" => match &mut self.dataset {
                DatasetSpec::SyntheticDigits { n_train, n_val } | DatasetSpec::Mnist { n_train, n_val, .. } => {
                    if key == "n_train" {
                        *n_train = num(key, value)?;
                    } else {
                        *n_val = num(key, value)?;
                    }
                }
                _ => return Err(Error::config(key, "only digit experiments use this setting")),
            },
            "synthetic_digits" => {
                if !matches!(self.dataset, DatasetSpec::SyntheticDigits { .. } | DatasetSpec::Mnist { .. }) {
                    return Err(Error::config(key, "only digit experiments use this setting"));
                }
                if flag(key, value)? {
                    *self = self.clone().with_synthetic_digits();
                } else if let DatasetSpec::SyntheticDigits { n_train, n_val } = self.dataset {
                    self.dataset = DatasetSpec::Mnist {
                        images: None,
                        labels: None,
                        n_train,
                        n_val,
                    };
                }
            }
            "mnist_images" | "mnist_labels" => match &mut self.dataset {
                DatasetSpec::Mnist { images, labels, .. } => {
                    let slot = if key == "mnist_images" { images } else { labels };
                    *slot = Some(PathBuf::from(value));
                }
                DatasetSpec::SyntheticDigits { .. } => {
                    return Err(Error::config(key, "conflicts with synthetic_digits"));
                }
                _ => return Err(Error::config(key, "only digit experiments use this setting")),
            },
            _ => return Err(Error::config(key, "unknown setting")),
        }
        Ok(())
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{value}`")))
}

fn flag(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::config(key, format!("expected true or false, got `{value}`"))),
    }
}

/// Ordered `key = value` settings. Later entries win.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}", n + 1), "expected `key = value`"))?;
            cfg.set(k.trim(), v.trim());
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// Overlays `other`; its entries win.
    pub fn merge(&mut self, other: &Config) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    /// Preset for `experiment`/`optimizer`/`seed`, then every other setting.
    pub fn resolve(&self) -> Result<RunManifest> {
        let experiment: Experiment = self
            .get("experiment")
            .ok_or_else(|| Error::config("experiment", "missing"))?
            .parse()?;
        let optimizer: Variant = self
            .get("optimizer")
            .ok_or_else(|| Error::config("optimizer", "missing"))?
            .parse()?;
        let seed = self.get("seed").map_or(Ok(1), |s| num("seed", s))?;
        let mut m = RunManifest::preset(experiment, optimizer, seed);
        // the digits source must be fixed before its sizes and paths
        if let Some(v) = self.get("synthetic_digits") {
            m.apply("synthetic_digits", v)?;
        }
        for (k, v) in &self.entries {
            if !matches!(k.as_str(), "experiment" | "optimizer" | "seed" | "synthetic_digits") {
                m.apply(k, v)?;
            }
        }
        m.validate()?;
        Ok(m)
    }
}

/// One `trace.csv` row. Cells a variant does not produce are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: u64,
    pub loss: f64,
    pub avg_regret: Option<f64>,
    pub x0: f64,
    pub psi_min: Option<f64>,
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
    pub grad_inf: f64,
    pub lr_eff_min: Option<f64>,
    pub lr_eff_max: Option<f64>,
}

impl From<&StepTrace> for TraceRow {
    fn from(s: &StepTrace) -> Self {
        TraceRow {
            t: s.t,
            loss: s.loss,
            avg_regret: s.avg_regret,
            x0: s.x0,
            psi_min: s.psi_min,
            lambda_min: s.lambda_min,
            lambda_max: s.lambda_max,
            grad_inf: s.grad_norm_inf,
            lr_eff_min: s.lr_eff_min,
            lr_eff_max: s.lr_eff_max,
        }
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

impl TraceRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.t,
            self.loss,
            cell(self.avg_regret),
            self.x0,
            cell(self.psi_min),
            cell(self.lambda_min),
            cell(self.lambda_max),
            self.grad_inf,
            cell(self.lr_eff_min),
            cell(self.lr_eff_max)
        )
    }

    pub fn parse_csv(line: &str) -> Result<Self> {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 10 {
            return Err(Error::config("trace", format!("expected 10 cells, got {}", cells.len())));
        }
        let req = |i: usize| -> Result<f64> { num("trace", cells[i]) };
        let opt = |i: usize| -> Result<Option<f64>> {
            if cells[i].is_empty() {
                Ok(None)
            } else {
                num("trace", cells[i]).map(Some)
            }
        };
        Ok(TraceRow {
            t: num("trace", cells[0])?,
            loss: req(1)?,
            avg_regret: opt(2)?,
            x0: req(3)?,
            psi_min: opt(4)?,
            lambda_min: opt(5)?,
            lambda_max: opt(6)?,
            grad_inf: req(7)?,
            lr_eff_min: opt(8)?,
            lr_eff_max: opt(9)?,
        })
    }
}

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}

pub fn parse_trace(text: &str) -> Result<Vec<TraceRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(TRACE_HEADER) {
        return Err(Error::config("trace", "unexpected header"));
    }
    lines.map(TraceRow::parse_csv).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub experiment: Experiment,
    pub optimizer: Variant,
    pub seed: u64,
    pub iterations: u64,
    /// Synthetic: the last round's loss. Classification: full training loss
    /// at the final parameters.
    pub final_loss: f64,
    /// Classification: full training loss at the initial parameters.
    pub initial_loss: Option<f64>,
    pub final_x: Option<f64>,
    pub average_regret: Option<f64>,
    pub train_accuracy: Option<f64>,
    pub val_accuracy: Option<f64>,
    pub val_loss: Option<f64>,
    /// First round whose iterate is within `reach_tolerance` of the optimum.
    pub first_hit: Option<u64>,
    pub psi_min: Option<f64>,
    pub lemma2_margin_min: Option<f64>,
    pub grad_bound: f64,
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
    pub lambda_inf: Option<f64>,
    pub case1_fraction: Option<f64>,
    pub bound: Option<BoundReport>,
    pub true_boundary: Option<Boundary>,
    pub learned_boundary: Option<Boundary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub manifest: RunManifest,
    pub summary: RunSummary,
    pub trace: Vec<TraceRow>,
}

impl RunOutput {
    /// Writes `manifest.json`, `summary.json` and `trace.csv` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&self.manifest)? + "\n")?;
        fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&self.summary)? + "\n")?;
        fs::write(dir.join("trace.csv"), trace_csv(&self.trace))?;
        Ok(())
    }

    /// Reads a run directory written by [`RunOutput::write`].
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let read = |name: &str| -> Result<String> {
            let path = dir.join(name);
            fs::read_to_string(&path).map_err(|e| Error::IncompatibleRuns(format!("{}: {e}", path.display())))
        };
        Ok(RunOutput {
            manifest: serde_json::from_str(&read("manifest.json")?)?,
            summary: serde_json::from_str(&read("summary.json")?)?,
            trace: parse_trace(&read("trace.csv")?)?,
        })
    }
}

/// Mini-batch training seen as an online problem on an unbounded domain.
struct MinibatchProblem<'a> {
    spec: ModelSpec,
    data: &'a Dataset,
    batches: BatchStream,
}

impl OnlineProblem for MinibatchProblem<'_> {
    fn dim(&self) -> usize {
        self.spec.num_params()
    }

    fn domain(&self) -> FeasibleBox {
        FeasibleBox::unbounded(self.dim())
    }

    fn play(&mut self, _t: u64, x: &Vector) -> Result<(f64, Vector)> {
        let batch = self.batches.next().expect("batch stream is endless");
        models::loss_and_grad(&self.spec, x, self.data, &batch)
    }
}

/// Train and validation sets of a classification manifest, plus the true
/// boundary for noisy 2-D data.
pub fn load_data(m: &RunManifest) -> Result<(Dataset, Dataset, Option<Boundary>)> {
    match &m.dataset {
        DatasetSpec::Noisy2D { n, flip, train_fraction } => {
            let (full, boundary) = data::gen_noisy_2d(*n, *flip, m.seed)?;
            let (train, val) = data::split(&full, *train_fraction, m.seed)?;
            Ok((train, val, Some(boundary)))
        }
        DatasetSpec::SyntheticDigits { n_train, n_val } => {
            let full = data::synthetic_digits(n_train + n_val, m.seed)?;
            let (train, val) = data::stratified_split(&full, *n_train, m.seed)?;
            Ok((train, val, None))
        }
        DatasetSpec::Mnist {
            images,
            labels,
            n_train,
            n_val,
        } => {
            let (Some(images), Some(labels)) = (images, labels) else {
                return Err(Error::config("mnist_images", "IDX paths are not set"));
            };
            let full = data::load_idx(images, labels)?;
            let pool = if n_train + n_val < full.n() {
                data::subsample(&full, n_train + n_val, m.seed)?
            } else {
                full
            };
            let (train, val) = data::stratified_split(&pool, (*n_train).min(pool.n() - 1), m.seed)?;
            Ok((train, val, None))
        }
        DatasetSpec::Linear { .. } => Err(Error::config("dataset", "linear losses have no dataset")),
    }
}

/// Executes one run. Pure in the manifest.
pub fn run(m: &RunManifest) -> Result<RunOutput> {
    m.validate()?;
    if m.experiment.is_synthetic() {
        run_synthetic(m)
    } else {
        run_classification(m)
    }
}

fn run_synthetic(m: &RunManifest) -> Result<RunOutput> {
    let problem = m.linear_problem()?;
    let mut stream = problem.stream();
    let mut opts = OcoOptions::new(Vector::filled(1, m.x0.unwrap_or(0.0)));
    opts.trace_stride = m.trace_stride;
    opts.retain_history = m.theorem_check;
    opts.target = Some((Vector::filled(1, problem.optimum()), m.reach_tolerance));
    let run = run_online(&mut stream, m.optimizer, &m.hyper, m.iterations, &opts)?;
    let regret = run.regret.expect("linear streams track regret");
    let bound = match &run.history {
        Some(history) => Some(bound_rhs(history, &m.hyper, &problem.domain(), regret)?),
        None => None,
    };
    let d = &run.diagnostics;
    let summary = RunSummary {
        experiment: m.experiment,
        optimizer: m.optimizer,
        seed: m.seed,
        iterations: m.iterations,
        final_loss: run.trace.last().map_or(0.0, |r| r.loss),
        initial_loss: None,
        final_x: Some(run.final_x[0]),
        average_regret: run.average_regret(),
        train_accuracy: None,
        val_accuracy: None,
        val_loss: None,
        first_hit: run.first_hit,
        psi_min: d.psi_min,
        lemma2_margin_min: d.lemma2_margin_min,
        grad_bound: d.grad_bound,
        lambda_min: d.lambda_min,
        lambda_max: d.lambda_max,
        lambda_inf: d.lambda_inf,
        case1_fraction: d.case1_fraction(),
        bound,
        true_boundary: None,
        learned_boundary: None,
    };
    Ok(RunOutput {
        manifest: m.clone(),
        summary,
        trace: run.trace.iter().map(TraceRow::from).collect(),
    })
}

fn run_classification(m: &RunManifest) -> Result<RunOutput> {
    let spec = m.model().expect("classification experiments have a model");
    let (train, val, true_boundary) = load_data(m)?;
    let x0 = spec.init_params(&mut rng::stream(m.seed, streams::INIT));
    let initial_loss = models::dataset_loss(&spec, &x0, &train)?;
    let mut problem = MinibatchProblem {
        spec: spec.clone(),
        data: &train,
        batches: BatchStream::new(train.n(), m.batch_size.min(train.n()), m.seed)?,
    };
    let mut opts = OcoOptions::new(x0);
    opts.trace_stride = m.trace_stride;
    let run = run_online(&mut problem, m.optimizer, &m.hyper, m.iterations, &opts)?;
    let params = &run.final_x;
    let learned_boundary = match spec {
        ModelSpec::Linear2D { .. } => models::decision_boundary(&spec, params)
            .ok()
            .map(|(w1, w2, b)| Boundary { w1, w2, b }),
        _ => None,
    };
    let d = &run.diagnostics;
    let summary = RunSummary {
        experiment: m.experiment,
        optimizer: m.optimizer,
        seed: m.seed,
        iterations: m.iterations,
        final_loss: models::dataset_loss(&spec, params, &train)?,
        initial_loss: Some(initial_loss),
        final_x: None,
        average_regret: None,
        train_accuracy: Some(models::accuracy(&spec, params, &train)?),
        val_accuracy: Some(models::accuracy(&spec, params, &val)?),
        val_loss: Some(models::dataset_loss(&spec, params, &val)?),
        first_hit: None,
        psi_min: d.psi_min,
        lemma2_margin_min: d.lemma2_margin_min,
        grad_bound: d.grad_bound,
        lambda_min: d.lambda_min,
        lambda_max: d.lambda_max,
        lambda_inf: d.lambda_inf,
        case1_fraction: d.case1_fraction(),
        bound: None,
        true_boundary,
        learned_boundary,
    };
    Ok(RunOutput {
        manifest: m.clone(),
        summary,
        trace: run.trace.iter().map(TraceRow::from).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Seeds(Vec<u64>),
    Epsilon0Grid(Vec<f64>),
    Alpha0Grid(Vec<f64>),
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Seeds(_) => "seed",
            SweepAxis::Epsilon0Grid(_) => "epsilon0",
            SweepAxis::Alpha0Grid(_) => "alpha0",
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn len(&self) -> usize {
        match self {
            SweepAxis::Seeds(v) => v.len(),
            SweepAxis::Epsilon0Grid(v) | SweepAxis::Alpha0Grid(v) => v.len(),
        }
    }

    /// The grid value of row `i`, as text.
    pub fn value(&self, i: usize) -> String {
        match self {
            SweepAxis::Seeds(v) => v[i].to_string(),
            SweepAxis::Epsilon0Grid(v) | SweepAxis::Alpha0Grid(v) => v[i].to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub base: RunManifest,
    pub axis: SweepAxis,
}

impl SweepSpec {
    /// One validated manifest per grid point, in grid order.
    pub fn manifests(&self) -> Result<Vec<RunManifest>> {
        if self.axis.is_empty() {
            return Err(Error::config("grid", "sweep grid is empty"));
        }
        (0..self.axis.len())
            .map(|i| {
                let mut m = self.base.clone();
                match &self.axis {
                    SweepAxis::Seeds(v) => m.seed = v[i],
                    SweepAxis::Epsilon0Grid(v) => m.hyper.epsilon0 = v[i],
                    SweepAxis::Alpha0Grid(v) => m.hyper.alpha0 = v[i],
                }
                m.validate()?;
                Ok(m)
            })
            .collect()
    }
}

/// Runs every grid point in parallel; results keep grid order.
pub fn sweep(spec: &SweepSpec) -> Result<Vec<RunOutput>> {
    let manifests = spec.manifests()?;
    manifests.par_iter().map(run).collect()
}

pub const SWEEP_HEADER: &str = "index,axis,value,seed,optimizer,final_loss,final_x,average_regret,val_accuracy,first_hit";

/// One summary line per grid point.
pub fn sweep_table(spec: &SweepSpec, outputs: &[RunOutput]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for (i, o) in outputs.iter().enumerate() {
        let s = &o.summary;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            i,
            spec.axis.name(),
            spec.axis.value(i),
            s.seed,
            s.optimizer,
            s.final_loss,
            cell(s.final_x),
            cell(s.average_regret),
            cell(s.val_accuracy),
            s.first_hit.map_or_else(String::new, |t| t.to_string())
        ));
    }
    out
}

/// Writes each run to `dir/run_<i>` and the table to `dir/sweep.csv`.
pub fn write_sweep(spec: &SweepSpec, outputs: &[RunOutput], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for (i, o) in outputs.iter().enumerate() {
        o.write(dir.join(format!("run_{i}")))?;
    }
    fs::write(dir.join("sweep.csv"), sweep_table(spec, outputs))?;
    Ok(())
}

/// Index of the run that reached the optimum first; ties go to the lower
/// average regret, then the earlier grid point. Runs that never reached it
/// are ignored.
pub fn best_by_first_hit(outputs: &[RunOutput]) -> Option<usize> {
    (0..outputs.len())
        .filter(|&i| outputs[i].summary.first_hit.is_some())
        .min_by(|&a, &b| {
            let (sa, sb) = (&outputs[a].summary, &outputs[b].summary);
            sa.first_hit
                .cmp(&sb.first_hit)
                .then(sa.average_regret.unwrap_or(f64::INFINITY).total_cmp(&sb.average_regret.unwrap_or(f64::INFINITY)))
        })
}

/// Final-metric differences against the first compared run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDeltas {
    pub label: String,
    pub final_loss: f64,
    pub average_regret: Option<f64>,
    pub val_accuracy: Option<f64>,
    pub final_x: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub experiment: Experiment,
    pub labels: Vec<String>,
    pub t: Vec<u64>,
    /// `loss[run][row]`
    pub loss: Vec<Vec<f64>>,
    pub avg_regret: Vec<Vec<Option<f64>>>,
    pub deltas: Vec<MetricDeltas>,
}

fn delta(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some(a? - b?)
}

/// Aligns runs of one experiment row by row.
pub fn compare(runs: &[RunOutput]) -> Result<Comparison> {
    let Some(first) = runs.first() else {
        return Err(Error::IncompatibleRuns("nothing to compare".into()));
    };
    if runs.len() < 2 {
        return Err(Error::IncompatibleRuns("need at least two runs".into()));
    }
    let t: Vec<u64> = first.trace.iter().map(|r| r.t).collect();
    for r in &runs[1..] {
        if r.manifest.experiment != first.manifest.experiment {
            return Err(Error::IncompatibleRuns(format!(
                "experiments differ: {} vs {}",
                first.manifest.experiment, r.manifest.experiment
            )));
        }
        if r.trace.len() != t.len() || r.trace.iter().zip(&t).any(|(row, &ti)| row.t != ti) {
            return Err(Error::IncompatibleRuns("trace rows do not align".into()));
        }
    }

    let mut labels: Vec<String> = Vec::with_capacity(runs.len());
    for r in runs {
        let base = format!("{}-s{}", r.manifest.optimizer, r.manifest.seed);
        let n = labels.iter().filter(|l| l.split('#').next() == Some(base.as_str())).count();
        labels.push(if n == 0 { base } else { format!("{base}#{n}") });
    }
    let f = &first.summary;
    let deltas = runs
        .iter()
        .zip(&labels)
        .map(|(r, label)| {
            let s = &r.summary;
            MetricDeltas {
                label: label.clone(),
                final_loss: s.final_loss - f.final_loss,
                average_regret: delta(s.average_regret, f.average_regret),
                val_accuracy: delta(s.val_accuracy, f.val_accuracy),
                final_x: delta(s.final_x, f.final_x),
            }
        })
        .collect();
    Ok(Comparison {
        experiment: first.manifest.experiment,
        labels,
        t,
        loss: runs.iter().map(|r| r.trace.iter().map(|row| row.loss).collect()).collect(),
        avg_regret: runs.iter().map(|r| r.trace.iter().map(|row| row.avg_regret).collect()).collect(),
        deltas,
    })
}

impl Comparison {
    /// `t`, then one loss column per run, then one average-regret column per run.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for l in &self.labels {
            out.push_str(&format!(",loss_{l}"));
        }
        for l in &self.labels {
            out.push_str(&format!(",avg_regret_{l}"));
        }
        out.push('\n');
        for (row, t) in self.t.iter().enumerate() {
            out.push_str(&t.to_string());
            for col in &self.loss {
                out.push_str(&format!(",{}", col[row]));
            }
            for col in &self.avg_regret {
                out.push(',');
                out.push_str(&cell(col[row]));
            }
            out.push('\n');
        }
        out
    }

    /// Writes `compare.csv` and `compare.json` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join("compare.csv"), self.to_csv())?;
        fs::write(dir.join("compare.json"), serde_json::to_string_pretty(&self.deltas)? + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_synthetic(optimizer: Variant) -> RunManifest {
        let mut m = RunManifest::preset(Experiment::Synthetic, optimizer, 7);
        m.iterations = 20_000;
        m
    }

    #[test]
    fn presets_carry_table_values() {
        let s = RunManifest::preset(Experiment::Synthetic, Variant::CAdam, 1);
        assert_eq!((s.hyper.alpha0, s.hyper.beta1, s.hyper.beta2, s.hyper.epsilon), (0.5, 0.9, 0.99, 1e-8));
        assert_eq!((s.batch_size, s.iterations, s.l2), (1, 5_000_000, 0.0));
        let l = RunManifest::preset(Experiment::LogReg, Variant::Adam, 1);
        assert_eq!((l.hyper.alpha0, l.hyper.beta1, l.hyper.beta2, l.hyper.epsilon), (1e-3, 0.9, 0.999, 1e-12));
        assert_eq!((l.batch_size, l.iterations, l.l2), (128, 200, 1e-4));
        let m = RunManifest::preset(Experiment::Mlp, Variant::Adam, 1);
        assert_eq!((m.batch_size, m.iterations, m.l2, m.hidden), (128, 500, 1e-4, Some(100)));
        assert!(matches!(m.hyper.beta1_schedule, Beta1Schedule::Decaying(_)));
    }

    #[test]
    fn config_parsing_and_overrides() {
        let mut cfg = Config::parse("experiment = synthetic\noptimizer = C-Adam # comment\n\niterations = 100\n").unwrap();
        let mut cli = Config::default();
        cli.set("iterations", "50");
        cfg.merge(&cli);
        let m = cfg.resolve().unwrap();
        assert_eq!((m.optimizer, m.iterations, m.seed), (Variant::CAdam, 50, 1));
        assert!(Config::parse("no equals sign").is_err());
    }

    #[test]
    fn unknown_optimizer_names_the_field() {
        let cfg = Config::parse("experiment = logreg\noptimizer = adagrad").unwrap();
        assert!(matches!(cfg.resolve(), Err(Error::ConfigInvalid { field, .. }) if field == "optimizer"));
        let cfg = Config::parse("experiment = logreg\noptimizer = adam\nsynthetic_digits = true\nbogus = 1").unwrap();
        assert!(matches!(cfg.resolve(), Err(Error::ConfigInvalid { field, .. }) if field == "bogus"));
    }

    #[test]
    fn digits_need_a_source() {
        let cfg = Config::parse("experiment = logreg\noptimizer = adam").unwrap();
        assert!(matches!(cfg.resolve(), Err(Error::ConfigInvalid { field, .. }) if field == "mnist_images"));
        let cfg = Config::parse("experiment = logreg\noptimizer = adam\nsynthetic_digits = true\nn_train = 100").unwrap();
        let m = cfg.resolve().unwrap();
        assert_eq!(m.dataset, DatasetSpec::SyntheticDigits { n_train: 100, n_val: 500 });
    }

    #[test]
    fn v2_needs_threshold() {
        let m = small_synthetic(Variant::CAdamV2);
        assert!(matches!(m.validate(), Err(Error::ThresholdUnset)));
    }

    #[test]
    fn trace_rows_round_trip() {
        let out = run(&small_synthetic(Variant::CAdam)).unwrap();
        assert_eq!(out.trace.len(), 20);
        let text = trace_csv(&out.trace);
        assert!(text.starts_with(TRACE_HEADER));
        assert_eq!(parse_trace(&text).unwrap(), out.trace);
        let adam = run(&small_synthetic(Variant::Adam)).unwrap();
        let line = adam.trace[0].to_csv();
        // no lambda cells for Adam, but the columns are kept
        assert_eq!(line.split(',').count(), 10);
        assert!(line.contains(",,,"));
    }

    #[test]
    fn empty_sweep_is_rejected() {
        let spec = SweepSpec {
            base: small_synthetic(Variant::CAdam),
            axis: SweepAxis::Seeds(vec![]),
        };
        assert!(matches!(sweep(&spec), Err(Error::ConfigInvalid { .. })));
    }

    #[test]
    fn theorem_check_is_synthetic_only() {
        let mut m = RunManifest::preset(Experiment::LogReg, Variant::CAdam, 1).with_synthetic_digits();
        m.theorem_check = true;
        assert!(m.validate().is_err());
        let mut s = RunManifest::preset(Experiment::Synthetic, Variant::CAdam, 1);
        s.theorem_check = true;
        assert!(matches!(s.validate(), Err(Error::HistoryTooLarge { .. })));
    }
}
