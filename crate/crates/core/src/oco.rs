//! Online convex optimization: play `x_t`, observe `f_t`, pay `f_t(x_t)`,
//! update. Includes the rare-large-gradient linear counterexample and an
//! online softmax-regression stream used for regret-bound checks.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{Batch, Dataset};
use crate::diagnostics::{psi_moment, GradientHistory, RunDiagnostics, StepTrace};
use crate::error::{Error, Result};
use crate::models::{loss_and_grad, ModelSpec};
use crate::optim::{Beta1Schedule, Hyperparams, Optimizer, SecondMomentBase, Variant};
use crate::projection::FeasibleBox;
use crate::rng::{self, Rng};
use crate::vecmath::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// Rare slope with probability `p`, one draw per round.
    Stochastic { seed: u64 },
    /// Rare slope exactly when `t mod period == 1`.
    Deterministic { period: u64 },
}

/// `f_t(x) = c_rare·x` with probability `p` (or once per period), else
/// `c_common·x`, on a one-dimensional box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearLossProblem {
    pub c_rare: f64,
    pub c_common: f64,
    pub p: f64,
    pub mode: LossMode,
    pub lower: f64,
    pub upper: f64,
}

impl LinearLossProblem {
    /// `1010x` w.p. 0.01, `−10x` otherwise, on `[−1, 1]`.
    pub fn stochastic(seed: u64) -> Self {
        LinearLossProblem {
            c_rare: 1010.0,
            c_common: -10.0,
            p: 0.01,
            mode: LossMode::Stochastic { seed },
            lower: -1.0,
            upper: 1.0,
        }
    }

    /// Same slopes with the rare one at `t ≡ 1 (mod period)`.
    pub fn deterministic(period: u64) -> Self {
        LinearLossProblem {
            mode: LossMode::Deterministic { period },
            ..Self::stochastic(0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            LossMode::Stochastic { .. } if !(self.p > 0.0 && self.p <= 1.0) => {
                Err(Error::config("p", "probability must lie in (0, 1]"))
            }
            LossMode::Deterministic { period } if period < 2 => {
                Err(Error::config("period", "must be at least 2"))
            }
            _ if !(self.lower < self.upper) => Err(Error::config("box", "lower must be below upper")),
            _ => Ok(()),
        }
    }

    /// Per-round expected slope (per-period mean in deterministic mode).
    pub fn mean_slope(&self) -> f64 {
        match self.mode {
            LossMode::Stochastic { .. } => self.p * self.c_rare + (1.0 - self.p) * self.c_common,
            LossMode::Deterministic { period } => {
                (self.c_rare + (period - 1) as f64 * self.c_common) / period as f64
            }
        }
    }

    /// The box endpoint minimizing the expected loss.
    pub fn optimum(&self) -> f64 {
        if self.mean_slope() > 0.0 {
            self.lower
        } else {
            self.upper
        }
    }

    pub fn domain(&self) -> FeasibleBox {
        FeasibleBox::uniform(1, self.lower, self.upper).expect("validated bounds")
    }

    /// Slope of `f_t` for round `t ≥ 1`. Stochastic mode consumes one draw.
    pub fn sample_loss(&self, t: u64, rng: &mut Rng) -> f64 {
        match self.mode {
            LossMode::Stochastic { .. } => {
                if rng.gen::<f64>() < self.p {
                    self.c_rare
                } else {
                    self.c_common
                }
            }
            LossMode::Deterministic { period } => {
                if t % period == 1 {
                    self.c_rare
                } else {
                    self.c_common
                }
            }
        }
    }

    pub fn stream(&self) -> LinearLossStream {
        let seed = match self.mode {
            LossMode::Stochastic { seed } => seed,
            LossMode::Deterministic { .. } => 0,
        };
        LinearLossStream {
            problem: self.clone(),
            rng: rng::stream(seed, rng::streams::LOSS),
            tracker: RegretTracker::new(self.lower, self.upper),
        }
    }
}

/// Exact regret for linear losses on an interval.
///
/// `Σ_t f_t(x) = S·x` with `S` the slope sum, so the best fixed point in
/// hindsight is an endpoint and the comparator loss is `min(S·lo, S·hi)`.
/// Regret can be negative: an online learner is not restricted to one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretTracker {
    pub cumulative_loss: f64,
    pub slope_sum: f64,
    pub t: u64,
    lower: f64,
    upper: f64,
}

impl RegretTracker {
    pub fn new(lower: f64, upper: f64) -> Self {
        RegretTracker {
            cumulative_loss: 0.0,
            slope_sum: 0.0,
            t: 0,
            lower,
            upper,
        }
    }

    pub fn record(&mut self, slope: f64, x: f64) {
        self.cumulative_loss += slope * x;
        self.slope_sum += slope;
        self.t += 1;
    }

    pub fn comparator_loss(&self) -> f64 {
        (self.slope_sum * self.lower).min(self.slope_sum * self.upper)
    }

    pub fn regret(&self) -> f64 {
        self.cumulative_loss - self.comparator_loss()
    }

    /// `R_t / t`; zero before the first round.
    pub fn average_regret(&self) -> f64 {
        if self.t == 0 {
            0.0
        } else {
            self.regret() / self.t as f64
        }
    }
}

/// A sequence of convex losses revealed one round at a time.
pub trait OnlineProblem {
    fn dim(&self) -> usize;

    fn domain(&self) -> FeasibleBox;

    /// Reveals `f_t` and returns `(f_t(x_t), ∇f_t(x_t))`.
    fn play(&mut self, t: u64, x: &Vector) -> Result<(f64, Vector)>;

    /// Regret so far, when it is cheap to maintain online.
    fn regret(&self) -> Option<f64> {
        None
    }
}

pub struct LinearLossStream {
    problem: LinearLossProblem,
    rng: Rng,
    pub tracker: RegretTracker,
}

impl OnlineProblem for LinearLossStream {
    fn dim(&self) -> usize {
        1
    }

    fn domain(&self) -> FeasibleBox {
        self.problem.domain()
    }

    fn play(&mut self, t: u64, x: &Vector) -> Result<(f64, Vector)> {
        let slope = self.problem.sample_loss(t, &mut self.rng);
        self.tracker.record(slope, x[0]);
        Ok((slope * x[0], Vector::filled(1, slope)))
    }

    fn regret(&self) -> Option<f64> {
        Some(self.tracker.regret())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcoOptions {
    pub x0: Vector,
    /// Emit a trace row every `trace_stride` rounds (and always at `T`).
    pub trace_stride: u64,
    /// Keep the full gradient history for [`crate::diagnostics::bound_rhs`].
    pub retain_history: bool,
    /// Record the first round whose post-step iterate lies within this
    /// distance of `target`.
    pub target: Option<(Vector, f64)>,
}

impl OcoOptions {
    pub fn new(x0: Vector) -> Self {
        OcoOptions {
            x0,
            trace_stride: 1,
            retain_history: false,
            target: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OcoRun {
    pub trace: Vec<StepTrace>,
    pub final_x: Vector,
    pub rounds: u64,
    pub cumulative_loss: f64,
    pub regret: Option<f64>,
    pub diagnostics: RunDiagnostics,
    pub history: Option<GradientHistory>,
    pub first_hit: Option<u64>,
}

impl OcoRun {
    pub fn average_regret(&self) -> Option<f64> {
        self.regret.map(|r| r / self.rounds as f64)
    }
}

/// Whether the first-moment bound check applies to a configuration: the
/// stored `v` must be the raw EMA and `β1` constant with `δ < 1`.
pub fn lemma2_applies(variant: Variant, h: &Hyperparams) -> bool {
    let raw_v = match variant {
        Variant::Sgd => false,
        Variant::Adam => true,
        _ => h.second_moment_base == SecondMomentBase::Raw,
    };
    raw_v && h.beta1_schedule == Beta1Schedule::Constant && h.delta() < 1.0
}

/// Runs `rounds` rounds of online learning. At round `t` the loss is
/// evaluated at the current iterate `x_t` before the optimizer moves.
pub fn run_online<P: OnlineProblem>(
    problem: &mut P,
    variant: Variant,
    h: &Hyperparams,
    rounds: u64,
    opts: &OcoOptions,
) -> Result<OcoRun> {
    if rounds == 0 {
        return Err(Error::config("iterations", "must be at least 1"));
    }
    if opts.trace_stride == 0 {
        return Err(Error::config("trace_stride", "must be at least 1"));
    }
    let domain = problem.domain();
    if !domain.contains(&opts.x0) {
        return Err(Error::config("x0", "initial point lies outside the feasible set"));
    }
    let mut opt = Optimizer::new(variant, h.clone(), domain, opts.x0.clone())?;
    let mut diag = RunDiagnostics::default();
    let mut history = opts
        .retain_history
        .then(|| GradientHistory::new(variant, problem.dim()));
    let lemma2 = lemma2_applies(variant, h);
    let mut trace = Vec::new();
    let mut cumulative = 0.0;
    let mut first_hit = None;

    for t in 1..=rounds {
        let (loss, g) = problem.play(t, opt.x())?;
        cumulative += loss;
        let prev = psi_moment(&opt.state).cloned();
        let outcome = opt.advance(&g)?;
        let emit = t % opts.trace_stride == 0 || t == rounds;
        let avg_regret = if emit { problem.regret().map(|r| r / t as f64) } else { None };
        let row = diag.observe(loss, avg_regret, prev.as_ref(), &opt.state, &outcome, &g, h, lemma2)?;
        if emit {
            trace.push(row);
        }
        if let Some(hist) = history.as_mut() {
            hist.push(&opt.state, &outcome, &g, h)?;
        }
        if first_hit.is_none() {
            if let Some((target, tol)) = &opts.target {
                let x = opt.x();
                if (0..x.dim()).all(|i| (x[i] - target[i]).abs() <= *tol) {
                    first_hit = Some(t);
                }
            }
        }
    }

    Ok(OcoRun {
        trace,
        final_x: opt.state.x.clone(),
        rounds,
        cumulative_loss: cumulative,
        regret: problem.regret(),
        diagnostics: diag,
        history,
        first_hit,
    })
}

/// Runs the linear counterexample from `x0`.
pub fn run_oco(
    problem: &LinearLossProblem,
    variant: Variant,
    h: &Hyperparams,
    rounds: u64,
    opts: &OcoOptions,
) -> Result<OcoRun> {
    problem.validate()?;
    let mut stream = problem.stream();
    run_online(&mut stream, variant, h, rounds, opts)
}

/// Online softmax regression: round `t` reveals the cross-entropy on one
/// example, cycling through a fixed seeded order. Parameters live in a box.
pub struct SoftmaxStream<'a> {
    pub spec: ModelSpec,
    pub data: &'a Dataset,
    order: Vec<usize>,
    bound: f64,
}

impl<'a> SoftmaxStream<'a> {
    pub fn new(spec: ModelSpec, data: &'a Dataset, bound: f64, seed: u64) -> Result<Self> {
        if !matches!(spec, ModelSpec::Softmax { .. }) {
            return Err(Error::InvalidModel("online softmax stream needs a softmax model".into()));
        }
        let mut order: Vec<usize> = (0..data.n()).collect();
        let mut r = rng::stream(seed, rng::streams::BATCH);
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut r);
        Ok(SoftmaxStream { spec, data, order, bound })
    }

    fn round_index(&self, t: u64) -> usize {
        self.order[((t - 1) as usize) % self.order.len()]
    }

    /// Total loss `Σ_{t≤T} f_t(x)` and its gradient.
    pub fn total_loss(&self, rounds: u64, x: &Vector) -> Result<(f64, Vector)> {
        let mut counts = vec![0usize; self.data.n()];
        for t in 1..=rounds {
            counts[self.round_index(t)] += 1;
        }
        let mut total = 0.0;
        let mut grad = vec![0.0; x.dim()];
        for (row, &c) in counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let (l, g) = loss_and_grad(&self.spec, x, self.data, &Batch::new(vec![row]))?;
            total += c as f64 * l;
            for (acc, gi) in grad.iter_mut().zip(&g) {
                *acc += c as f64 * gi;
            }
        }
        Ok((total, Vector::new(grad)?))
    }

    /// A certified lower bound on `min_{x∈Ω} Σ_{t≤T} f_t(x)`.
    ///
    /// Runs projected gradient descent on the total loss, then uses convexity:
    /// for any `x̂ ∈ Ω`, `min F ≥ F(x̂) + min_{x∈Ω} ⟨∇F(x̂), x − x̂⟩`, and the
    /// inner minimum over a box is attained at a vertex.
    pub fn comparator_lower_bound(&self, rounds: u64, iters: usize) -> Result<f64> {
        let d = self.spec.num_params();
        let mut x = Vector::zeros(d);
        let (mut f, mut g) = self.total_loss(rounds, &x)?;
        let mut step = 1.0 / rounds as f64;
        for _ in 0..iters {
            let cand = x.zip_map(&g, |xi, gi| (xi - step * gi).clamp(-self.bound, self.bound))?;
            let (fc, gc) = self.total_loss(rounds, &cand)?;
            if fc <= f {
                x = cand;
                f = fc;
                g = gc;
                step *= 1.2;
            } else {
                step *= 0.5;
            }
        }
        let mut gap = 0.0;
        for i in 0..d {
            let vertex = if g[i] > 0.0 { -self.bound } else { self.bound };
            gap += g[i] * (vertex - x[i]);
        }
        Ok(f + gap)
    }
}

impl OnlineProblem for SoftmaxStream<'_> {
    fn dim(&self) -> usize {
        self.spec.num_params()
    }

    fn domain(&self) -> FeasibleBox {
        FeasibleBox::uniform(self.dim(), -self.bound, self.bound).expect("positive bound")
    }

    fn play(&mut self, t: u64, x: &Vector) -> Result<(f64, Vector)> {
        let row = self.round_index(t);
        let (loss, grad) = loss_and_grad(&self.spec, x, self.data, &Batch::new(vec![row]))?;
        Ok((loss, grad))
    }
}
