//! Adaptive optimizer update rules: Adam, AMSGrad, C-Adam, C-Adam_V2 and a
//! plain SGD baseline.
//!
//! Every rule is a state transition `(state, g) -> (state', proposed x)`.
//! The proposed point is *not* written back into the state; the caller
//! projects it onto the feasible set and then calls
//! [`OptimizerState::set_point`]. [`Optimizer`] bundles the three steps.
//!
//! Conventions shared by all adaptive rules:
//!
//! * `ε` sits inside the square root: the denominator is `√(v + ε)`.
//! * Only Adam applies bias correction. AMSGrad and C-Adam use `m_t` and the
//!   running second moment directly.
//! * A step that would produce a non-finite value anywhere leaves the state
//!   untouched and returns an error.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::projection::{project, FeasibleBox};
use crate::vecmath::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Sgd,
    Adam,
    #[serde(rename = "amsgrad")]
    AmsGrad,
    #[serde(rename = "cadam")]
    CAdam,
    #[serde(rename = "cadam_v2")]
    CAdamV2,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Sgd,
        Variant::Adam,
        Variant::AmsGrad,
        Variant::CAdam,
        Variant::CAdamV2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Sgd => "sgd",
            Variant::Adam => "adam",
            Variant::AmsGrad => "amsgrad",
            Variant::CAdam => "cadam",
            Variant::CAdamV2 => "cadam_v2",
        }
    }

    /// Variants whose running second moment never decreases.
    pub fn is_monotone(self) -> bool {
        matches!(self, Variant::AmsGrad | Variant::CAdam | Variant::CAdamV2)
    }

    /// Variants that emit a convex-combination weight `λ`.
    pub fn has_lambda(self) -> bool {
        matches!(self, Variant::CAdam | Variant::CAdamV2)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.trim().to_ascii_lowercase().chars().filter(|c| !matches!(c, '-' | '_')).collect();
        Variant::ALL
            .into_iter()
            .find(|v| v.name().replace('_', "") == key)
            .ok_or_else(|| {
                Error::config(
                    "optimizer",
                    format!("unknown optimizer `{s}` (expected sgd, adam, amsgrad, cadam or cadam_v2)"),
                )
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaSchedule {
    /// `α_t = α`
    Constant,
    /// `α_t = α / √t`
    InverseSqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Beta1Schedule {
    /// `β1_t = β1`
    Constant,
    /// `β1_t = β1 · ρ^(t-1)` with `ρ ∈ (0, 1]`.
    Decaying(f64),
}

/// Which quantity the second-moment EMA decays from in AMSGrad and C-Adam.
///
/// The algorithm listings write `v_t = β2·v̂_{t-1} + (1-β2)·g_t²`, decaying the
/// running maximum (`RunningMax`). The textual definition of the second
/// moment, `v_t = (1-β2) Σ β2^{t-i} g_i²`, is the ordinary EMA of squared
/// gradients (`Raw`). Adam always uses the raw EMA.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SecondMomentBase {
    RunningMax,
    Raw,
}

/// Default ratio for [`Beta1Schedule::Decaying`] when none is given.
pub const DEFAULT_BETA1_DECAY: f64 = 0.999;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub alpha0: f64,
    pub alpha_schedule: AlphaSchedule,
    pub beta1: f64,
    pub beta1_schedule: Beta1Schedule,
    pub beta2: f64,
    pub epsilon: f64,
    /// Floor on the moment maximum, read by C-Adam_V2 only.
    pub epsilon0: f64,
    pub second_moment_base: SecondMomentBase,
}

impl Hyperparams {
    pub fn new(alpha0: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Hyperparams {
            alpha0,
            alpha_schedule: AlphaSchedule::Constant,
            beta1,
            beta1_schedule: Beta1Schedule::Constant,
            beta2,
            epsilon,
            epsilon0: 0.0,
            second_moment_base: SecondMomentBase::RunningMax,
        }
    }

    pub fn with_alpha_schedule(mut self, s: AlphaSchedule) -> Self {
        self.alpha_schedule = s;
        self
    }

    pub fn with_beta1_schedule(mut self, s: Beta1Schedule) -> Self {
        self.beta1_schedule = s;
        self
    }

    pub fn with_epsilon0(mut self, epsilon0: f64) -> Self {
        self.epsilon0 = epsilon0;
        self
    }

    pub fn with_second_moment_base(mut self, base: SecondMomentBase) -> Self {
        self.second_moment_base = base;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field, message: &str| {
            Err(Error::InvalidHyperparam {
                field,
                message: message.to_string(),
            })
        };
        if !(self.alpha0.is_finite() && self.alpha0 >= 0.0) {
            return bad("alpha0", "must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return bad("beta1", "must lie in [0, 1)");
        }
        if let Beta1Schedule::Decaying(rho) = self.beta1_schedule {
            if !(rho > 0.0 && rho <= 1.0) {
                return bad("beta1_decay", "must lie in (0, 1]");
            }
        }
        if !(self.beta2 > 0.0 && self.beta2 < 1.0) {
            return bad("beta2", "must lie in (0, 1)");
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return bad("epsilon", "must be finite and positive");
        }
        if !(self.epsilon0.is_finite() && self.epsilon0 >= 0.0) {
            return bad("epsilon0", "must be finite and non-negative");
        }
        Ok(())
    }

    /// Step size for round `t ≥ 1`.
    pub fn alpha_at(&self, t: u64) -> f64 {
        match self.alpha_schedule {
            AlphaSchedule::Constant => self.alpha0,
            AlphaSchedule::InverseSqrt => self.alpha0 / (t.max(1) as f64).sqrt(),
        }
    }

    /// First-moment decay for round `t ≥ 1`; never exceeds `beta1`.
    pub fn beta1_at(&self, t: u64) -> f64 {
        match self.beta1_schedule {
            Beta1Schedule::Constant => self.beta1,
            Beta1Schedule::Decaying(rho) => {
                let exp = t.saturating_sub(1).min(i32::MAX as u64) as i32;
                self.beta1 * rho.powi(exp)
            }
        }
    }

    /// `δ = β1 / √β2`.
    pub fn delta(&self) -> f64 {
        self.beta1 / self.beta2.sqrt()
    }
}

/// Per-parameter optimizer memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub variant: Variant,
    /// Number of completed steps.
    pub t: u64,
    pub m: Vector,
    /// Second-moment EMA computed at the latest step.
    pub v: Vector,
    /// `v̂` for AMSGrad, `ṽ` for C-Adam and C-Adam_V2; zero otherwise.
    pub v_aux: Vector,
    pub x: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Update before projection.
    pub proposed_x: Vector,
    /// Per-coordinate `λ`, present for the C-Adam variants only.
    pub lambda: Option<Vector>,
    /// `α_t / √(second moment + ε)` per coordinate (`α_t` for SGD).
    pub effective_lr: Vector,
}

struct Moments {
    m: Vector,
    v: Vector,
    v_aux: Vector,
}

impl OptimizerState {
    pub fn new(variant: Variant, x0: Vector) -> Self {
        let d = x0.dim();
        OptimizerState {
            variant,
            t: 0,
            m: Vector::zeros(d),
            v: Vector::zeros(d),
            v_aux: Vector::zeros(d),
            x: x0,
        }
    }

    pub fn dim(&self) -> usize {
        self.x.dim()
    }

    /// Replaces the current iterate, typically with the projected proposal.
    pub fn set_point(&mut self, x: Vector) -> Result<()> {
        self.x.ensure_same_dim(&x)?;
        x.ensure_finite("x")?;
        self.x = x;
        Ok(())
    }

    /// Dispatches on `self.variant`.
    pub fn step(&mut self, h: &Hyperparams, g: &Vector) -> Result<StepOutcome> {
        match self.variant {
            Variant::Sgd => self.step_sgd(h, g),
            Variant::Adam => self.step_adam(h, g),
            Variant::AmsGrad => self.step_amsgrad(h, g),
            Variant::CAdam => self.step_cadam(h, g),
            Variant::CAdamV2 => self.step_cadam_v2(h, g),
        }
    }

    /// The second moment that scales the update and weights the projection:
    /// bias-corrected `v̄` for Adam, `v_aux` for the monotone variants, `None`
    /// for SGD.
    pub fn second_moment(&self, h: &Hyperparams) -> Option<Vector> {
        match self.variant {
            Variant::Sgd => None,
            Variant::Adam => {
                if self.t == 0 {
                    return Some(self.v.clone());
                }
                let c = bias_correction(h.beta2, self.t);
                Some(self.v.map(|v| v / c))
            }
            _ => Some(self.v_aux.clone()),
        }
    }

    /// Diagonal weights `√(second moment)` for the weighted projection.
    pub fn projection_weights(&self, h: &Hyperparams) -> Vector {
        match self.second_moment(h) {
            Some(s) => s.map(|x| x.max(0.0).sqrt()),
            None => Vector::filled(self.dim(), 1.0),
        }
    }

    pub fn step_sgd(&mut self, h: &Hyperparams, g: &Vector) -> Result<StepOutcome> {
        self.precheck(Variant::Sgd, g)?;
        let t = self.t + 1;
        let alpha = h.alpha_at(t);
        let proposed = self.x.zip_map(g, |x, g| x - alpha * g)?;
        proposed.ensure_finite("x")?;
        self.t = t;
        Ok(StepOutcome {
            proposed_x: proposed,
            lambda: None,
            effective_lr: Vector::filled(self.dim(), alpha),
        })
    }

    pub fn step_adam(&mut self, h: &Hyperparams, g: &Vector) -> Result<StepOutcome> {
        self.precheck(Variant::Adam, g)?;
        let t = self.t + 1;
        let (alpha, b1, b2) = (h.alpha_at(t), h.beta1_at(t), h.beta2);
        let m = first_moment(&self.m, g, b1)?;
        let v = ema_sq(&self.v, g, b2)?;
        let (c1, c2) = (bias_correction(h.beta1, t), bias_correction(b2, t));

        let mut proposed = self.x.clone();
        let mut lr = Vector::zeros(self.dim());
        for i in 0..self.dim() {
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            let rate = alpha / (v_hat + h.epsilon).sqrt();
            lr.as_mut_slice()[i] = rate;
            proposed.as_mut_slice()[i] -= rate * m_hat;
        }
        let v_aux = self.v_aux.clone();
        self.commit(t, Moments { m, v, v_aux }, &proposed)?;
        Ok(StepOutcome {
            proposed_x: proposed,
            lambda: None,
            effective_lr: lr,
        })
    }

    pub fn step_amsgrad(&mut self, h: &Hyperparams, g: &Vector) -> Result<StepOutcome> {
        self.precheck(Variant::AmsGrad, g)?;
        let t = self.t + 1;
        let (alpha, b1) = (h.alpha_at(t), h.beta1_at(t));
        let m = first_moment(&self.m, g, b1)?;
        let v = ema_sq(self.decay_base(h), g, h.beta2)?;
        let v_aux = v.elementwise_max(&self.v_aux)?;
        let (proposed, lr) = adaptive_update(&self.x, &m, &v_aux, alpha, h.epsilon);
        self.commit(t, Moments { m, v, v_aux }, &proposed)?;
        Ok(StepOutcome {
            proposed_x: proposed,
            lambda: None,
            effective_lr: lr,
        })
    }

    pub fn step_cadam(&mut self, h: &Hyperparams, g: &Vector) -> Result<StepOutcome> {
        self.precheck(Variant::CAdam, g)?;
        self.convex_combination_step(h, g, 0.0)
    }

    pub fn step_cadam_v2(&mut self, h: &Hyperparams, g: &Vector) -> Result<StepOutcome> {
        self.precheck(Variant::CAdamV2, g)?;
        if h.epsilon0 <= 0.0 {
            return Err(Error::ThresholdUnset);
        }
        self.convex_combination_step(h, g, h.epsilon0)
    }

    /// Shared C-Adam / C-Adam_V2 body. `floor = 0` recovers plain C-Adam.
    fn convex_combination_step(
        &mut self,
        h: &Hyperparams,
        g: &Vector,
        floor: f64,
    ) -> Result<StepOutcome> {
        let t = self.t + 1;
        let (alpha, b1) = (h.alpha_at(t), h.beta1_at(t));
        let m = first_moment(&self.m, g, b1)?;
        let v = ema_sq(self.decay_base(h), g, h.beta2)?;

        let d = self.dim();
        let mut v_aux = Vector::zeros(d);
        let mut lambda = Vector::zeros(d);
        for i in 0..d {
            let (prev, cur) = (self.v_aux[i], v[i]);
            let max = prev.max(cur).max(floor);
            let (l, next) = convex_combination(prev, max);
            lambda.as_mut_slice()[i] = l;
            v_aux.as_mut_slice()[i] = next;
        }
        let (proposed, lr) = adaptive_update(&self.x, &m, &v_aux, alpha, h.epsilon);
        self.commit(t, Moments { m, v, v_aux }, &proposed)?;
        Ok(StepOutcome {
            proposed_x: proposed,
            lambda: Some(lambda),
            effective_lr: lr,
        })
    }

    fn decay_base(&self, h: &Hyperparams) -> &Vector {
        match h.second_moment_base {
            SecondMomentBase::RunningMax => &self.v_aux,
            SecondMomentBase::Raw => &self.v,
        }
    }

    fn precheck(&self, expected: Variant, g: &Vector) -> Result<()> {
        if self.variant != expected {
            return Err(Error::VariantMismatch {
                expected: expected.name(),
                actual: self.variant.name(),
            });
        }
        self.x.ensure_same_dim(g)?;
        if let Some(index) = g.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFiniteGradient { index });
        }
        Ok(())
    }

    fn commit(&mut self, t: u64, next: Moments, proposed: &Vector) -> Result<()> {
        next.m.ensure_finite("m")?;
        next.v.ensure_finite("v")?;
        next.v_aux.ensure_finite("v_aux")?;
        proposed.ensure_finite("x")?;
        self.t = t;
        self.m = next.m;
        self.v = next.v;
        self.v_aux = next.v_aux;
        Ok(())
    }
}

/// `λ = prev / max` and `ṽ = (1-λ)·max + λ·prev` for one coordinate.
///
/// The combination is evaluated as `prev + (1-λ)(max - prev)`, clamped to
/// `max`. This is the same quantity, but in floating point it keeps
/// `prev ≤ ṽ ≤ max` exact. When `max == 0` (every gradient so far was zero)
/// `λ = 1` and `ṽ = 0`.
pub fn convex_combination(prev: f64, max: f64) -> (f64, f64) {
    if max <= 0.0 {
        return (1.0, prev);
    }
    let lambda = (prev / max).min(1.0);
    let next = (prev + (1.0 - lambda) * (max - prev)).min(max);
    (lambda, next)
}

fn bias_correction(beta: f64, t: u64) -> f64 {
    1.0 - beta.powi(t.min(i32::MAX as u64) as i32)
}

fn first_moment(m: &Vector, g: &Vector, b1: f64) -> Result<Vector> {
    m.zip_map(g, |m, g| b1 * m + (1.0 - b1) * g)
}

fn ema_sq(base: &Vector, g: &Vector, b2: f64) -> Result<Vector> {
    base.zip_map(g, |v, g| b2 * v + (1.0 - b2) * g * g)
}

fn adaptive_update(x: &Vector, m: &Vector, second: &Vector, alpha: f64, eps: f64) -> (Vector, Vector) {
    let lr = second.map(|s| alpha / (s + eps).sqrt());
    let mut proposed = x.clone();
    for (i, p) in proposed.as_mut_slice().iter_mut().enumerate() {
        *p -= lr[i] * m[i];
    }
    (proposed, lr)
}

/// An optimizer state bound to its hyperparameters and feasible set.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub state: OptimizerState,
    pub hyper: Hyperparams,
    pub domain: FeasibleBox,
}

impl Optimizer {
    pub fn new(variant: Variant, hyper: Hyperparams, domain: FeasibleBox, x0: Vector) -> Result<Self> {
        hyper.validate()?;
        domain.ensure_dim(x0.dim())?;
        if variant == Variant::CAdamV2 && hyper.epsilon0 <= 0.0 {
            return Err(Error::ThresholdUnset);
        }
        Ok(Optimizer {
            state: OptimizerState::new(variant, x0),
            hyper,
            domain,
        })
    }

    /// Step, project with weights `√(second moment)`, and accept the
    /// projected point.
    pub fn advance(&mut self, g: &Vector) -> Result<StepOutcome> {
        let outcome = self.state.step(&self.hyper, g)?;
        let weights = self.state.projection_weights(&self.hyper);
        let x = project(&outcome.proposed_x, &weights, &self.domain)?;
        self.state.set_point(x)?;
        Ok(outcome)
    }

    pub fn x(&self) -> &Vector {
        &self.state.x
    }
}
