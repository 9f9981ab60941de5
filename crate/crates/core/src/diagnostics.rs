//! Runtime evaluation of the convergence quantities: the per-step increment
//! `ψ_t`, the first-moment bound margin, C-Adam's case split and `λ∞`, and
//! the full regret-bound right-hand side.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{AlphaSchedule, Hyperparams, OptimizerState, StepOutcome, Variant};
use crate::projection::FeasibleBox;
use crate::vecmath::Vector;

/// Which branch of the convex-combination update a step took.
///
/// `Case1`: every coordinate kept its previous moment (`λ = 1`).
/// `Case2`: every coordinate moved toward the new maximum (`λ < 1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseTag {
    Case1,
    Case2,
    Mixed,
}

pub fn case_tag(lambda: &Vector) -> CaseTag {
    let frozen = lambda.iter().filter(|&&l| l == 1.0).count();
    if frozen == lambda.dim() {
        CaseTag::Case1
    } else if frozen == 0 {
        CaseTag::Case2
    } else {
        CaseTag::Mixed
    }
}

/// One row of per-iteration diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub t: u64,
    pub loss: f64,
    pub avg_regret: Option<f64>,
    /// First coordinate of the iterate after the step.
    pub x0: f64,
    pub x_snapshot: Option<Vector>,
    pub m_norm_inf: f64,
    pub v_norm_inf: f64,
    pub vaux_norm_inf: f64,
    pub psi_min: Option<f64>,
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
    pub grad_norm_inf: f64,
    pub lr_eff_min: Option<f64>,
    pub lr_eff_max: Option<f64>,
    pub case_tag: Option<CaseTag>,
}

/// The moment whose growth `ψ_t` measures: `v̂`/`ṽ` for the monotone
/// variants, the raw `v` for Adam, nothing for SGD.
pub fn psi_moment(state: &OptimizerState) -> Option<&Vector> {
    match state.variant {
        Variant::Sgd => None,
        Variant::Adam => Some(&state.v),
        _ => Some(&state.v_aux),
    }
}

/// `min_i [√s_t[i]/α_t − √s_{t−1}[i]/α_{t−1}]` where `t` is the step that
/// produced `next`. At `t = 1` the previous term is zero.
pub fn psi_min(prev: &Vector, next: &Vector, h: &Hyperparams, t: u64) -> Result<f64> {
    prev.ensure_same_dim(next)?;
    let alpha_t = h.alpha_at(t);
    let alpha_prev = if t > 1 { h.alpha_at(t - 1) } else { f64::NAN };
    let mut out = f64::INFINITY;
    for i in 0..next.dim() {
        let cur = next[i].max(0.0).sqrt() / alpha_t;
        let before = if t > 1 {
            prev[i].max(0.0).sqrt() / alpha_prev
        } else {
            0.0
        };
        out = out.min(cur - before);
    }
    Ok(out)
}

/// `ψ_t` between two consecutive states of a monotone variant. Calling this
/// on Adam or SGD is a `VariantMismatch`; use [`psi_min`] on Adam's raw `v`
/// to observe the sign violations directly.
pub fn check_psi(prev: &OptimizerState, next: &OptimizerState, h: &Hyperparams) -> Result<f64> {
    if !next.variant.is_monotone() || prev.variant != next.variant {
        return Err(Error::VariantMismatch {
            expected: "amsgrad | cadam | cadam_v2",
            actual: next.variant.name(),
        });
    }
    psi_min(&prev.v_aux, &next.v_aux, h, next.t)
}

/// Factor `(1−β1)/√(1−β2) · 1/√(1−δ²)` of the first-moment bound.
fn lemma2_scale(h: &Hyperparams) -> Result<f64> {
    let delta = h.delta();
    if !(delta < 1.0) {
        return Err(Error::DeltaNotLessThanOne { delta });
    }
    Ok((1.0 - h.beta1) / (1.0 - h.beta2).sqrt() / (1.0 - delta * delta).sqrt())
}

/// `min_i [(1−β1)/√(1−β2) · √(v_i/(1−δ²)) − |m_i|]` for moments produced by the
/// raw EMA recursions with constant `β1` from zero state.
pub fn check_lemma2(m: &Vector, v: &Vector, h: &Hyperparams) -> Result<f64> {
    m.ensure_same_dim(v)?;
    let scale = lemma2_scale(h)?;
    Ok((0..m.dim())
        .map(|i| scale * v[i].max(0.0).sqrt() - m[i].abs())
        .fold(f64::INFINITY, f64::min))
}

/// Running minima and maxima of the per-step diagnostics across a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunDiagnostics {
    pub steps: u64,
    pub psi_min: Option<f64>,
    pub lemma2_margin_min: Option<f64>,
    /// Running `max_t ‖g_t‖∞`, the empirical gradient bound `M`.
    pub grad_bound: f64,
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
    /// Coordinate-steps with `λ = 1`.
    pub case1_coords: u64,
    /// Coordinate-steps with `λ < 1`.
    pub case2_coords: u64,
    /// `max 1/√(1−λ_i)` over Case-2 coordinate-steps.
    pub lambda_inf: Option<f64>,
}

fn min_opt(a: Option<f64>, b: f64) -> Option<f64> {
    Some(a.map_or(b, |a| a.min(b)))
}

fn max_opt(a: Option<f64>, b: f64) -> Option<f64> {
    Some(a.map_or(b, |a| a.max(b)))
}

impl RunDiagnostics {
    /// Folds one completed step in and returns its trace row.
    ///
    /// `prev_psi` is [`psi_moment`] of the state before the step; `lemma2`
    /// enables the first-moment bound check (valid only for raw-EMA moments
    /// with constant `β1` and `δ < 1`).
    #[allow(clippy::too_many_arguments)]
    pub fn observe(
        &mut self,
        loss: f64,
        avg_regret: Option<f64>,
        prev_psi: Option<&Vector>,
        state: &OptimizerState,
        outcome: &StepOutcome,
        g: &Vector,
        h: &Hyperparams,
        lemma2: bool,
    ) -> Result<StepTrace> {
        self.steps += 1;
        let grad_inf = g.norm_linf();
        self.grad_bound = self.grad_bound.max(grad_inf);

        let psi = match (prev_psi, psi_moment(state)) {
            (Some(prev), Some(next)) => Some(psi_min(prev, next, h, state.t)?),
            _ => None,
        };
        if let Some(p) = psi {
            self.psi_min = min_opt(self.psi_min, p);
        }
        if lemma2 {
            let margin = check_lemma2(&state.m, &state.v, h)?;
            self.lemma2_margin_min = min_opt(self.lemma2_margin_min, margin);
        }

        let (mut lmin, mut lmax, mut tag) = (None, None, None);
        if let Some(lambda) = &outcome.lambda {
            let (lo, hi) = (lambda.min_value(), lambda.max_value());
            lmin = Some(lo);
            lmax = Some(hi);
            self.lambda_min = min_opt(self.lambda_min, lo);
            self.lambda_max = max_opt(self.lambda_max, hi);
            for &l in lambda {
                if l == 1.0 {
                    self.case1_coords += 1;
                } else {
                    self.case2_coords += 1;
                    self.lambda_inf = max_opt(self.lambda_inf, 1.0 / (1.0 - l).sqrt());
                }
            }
            tag = Some(case_tag(lambda));
        }

        let adaptive = state.variant != Variant::Sgd;
        Ok(StepTrace {
            t: state.t,
            loss,
            avg_regret,
            x0: state.x[0],
            x_snapshot: None,
            m_norm_inf: state.m.norm_linf(),
            v_norm_inf: state.v.norm_linf(),
            vaux_norm_inf: state.v_aux.norm_linf(),
            psi_min: psi,
            lambda_min: lmin,
            lambda_max: lmax,
            grad_norm_inf: grad_inf,
            lr_eff_min: adaptive.then(|| outcome.effective_lr.min_value()),
            lr_eff_max: adaptive.then(|| outcome.effective_lr.max_value()),
            case_tag: tag,
        })
    }

    /// Fraction of C-Adam coordinate-steps that froze the moment.
    pub fn case1_fraction(&self) -> Option<f64> {
        let total = self.case1_coords + self.case2_coords;
        (total > 0).then(|| self.case1_coords as f64 / total as f64)
    }
}

/// Default cap on retained `T·d` history cells.
pub const DEFAULT_HISTORY_CAP: usize = 2_000_000;

/// Everything the regret bound needs from one step.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub grad: Vector,
    pub v_aux: Vector,
    pub lambda: Option<Vector>,
    pub alpha: f64,
    pub beta1: f64,
}

/// Full per-step history, kept only when a bound check is requested.
#[derive(Debug, Clone)]
pub struct GradientHistory {
    pub variant: Variant,
    pub dim: usize,
    rows: Vec<HistoryRow>,
    cap: usize,
}

impl GradientHistory {
    pub fn new(variant: Variant, dim: usize) -> Self {
        Self::with_cap(variant, dim, DEFAULT_HISTORY_CAP)
    }

    pub fn with_cap(variant: Variant, dim: usize, cap: usize) -> Self {
        GradientHistory {
            variant,
            dim,
            rows: Vec::new(),
            cap,
        }
    }

    pub fn push(&mut self, state: &OptimizerState, outcome: &StepOutcome, g: &Vector, h: &Hyperparams) -> Result<()> {
        let cells = (self.rows.len() + 1) * self.dim;
        if cells > self.cap {
            return Err(Error::HistoryTooLarge { cells, cap: self.cap });
        }
        self.rows.push(HistoryRow {
            grad: g.clone(),
            v_aux: state.v_aux.clone(),
            lambda: outcome.lambda.clone(),
            alpha: h.alpha_at(state.t),
            beta1: h.beta1_at(state.t),
        });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[HistoryRow] {
        &self.rows
    }
}

/// Components of the regret bound
/// `Ω∞²/(2α_T(1−β1)) Σ_i √ṽ_{T,i} + Ω∞²/(1−β1)² Σ_t Σ_i β1_t √ṽ_{t,i}/α_t + ζ·max(K1, K2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub rounds: u64,
    pub omega_inf: f64,
    pub term1: f64,
    pub term2: f64,
    pub zeta: f64,
    /// `K1 = 1/(1−β1)` as stated.
    pub k1: f64,
    /// `K1` as it arises in the Case-1 derivation,
    /// `√β2 (1−δ) / ((1−β1)(√β2 − β1))`. Reported next to `k1` for comparison.
    pub k1_case1_display: f64,
    pub k2: f64,
    /// `max 1/√(1−λ_i)` over Case-2 coordinate-steps only (`λ_i < 1`).
    /// Mixed-case traces are the norm in practice, so this filter is an
    /// extension of the single-case analysis.
    pub lambda_inf: f64,
    pub case1_fraction: f64,
    pub rhs: f64,
    pub realized_regret: f64,
    pub holds: bool,
}

/// Evaluates the regret bound over a completed history.
pub fn bound_rhs(
    history: &GradientHistory,
    h: &Hyperparams,
    domain: &FeasibleBox,
    realized_regret: f64,
) -> Result<BoundReport> {
    if !history.variant.is_monotone() {
        return Err(Error::VariantMismatch {
            expected: "amsgrad | cadam | cadam_v2",
            actual: history.variant.name(),
        });
    }
    if h.alpha_schedule != AlphaSchedule::InverseSqrt {
        return Err(Error::InvalidHyperparam {
            field: "alpha_schedule",
            message: "the regret bound assumes alpha_t = alpha / sqrt(t)".into(),
        });
    }
    if !domain.is_bounded() {
        return Err(Error::UnboundedDomain);
    }
    let delta = h.delta();
    if !(delta < 1.0) {
        return Err(Error::DeltaNotLessThanOne { delta });
    }
    let last = history.rows.last().ok_or_else(|| Error::InvalidHyperparam {
        field: "rounds",
        message: "history is empty".into(),
    })?;
    let d = history.dim;
    let rounds = history.rows.len() as u64;
    let omega = domain.diameter_inf();
    let omega2 = omega * omega;
    let (b1, b2) = (h.beta1, h.beta2);

    let sum_sqrt_last = last.v_aux.iter().fold(0.0, |acc, v| acc + v.max(0.0).sqrt());
    let term1 = omega2 / (2.0 * last.alpha * (1.0 - b1)) * sum_sqrt_last;

    let mut inner = 0.0;
    let mut col_sq = vec![0.0; d];
    let mut lambda_inf: f64 = 1.0;
    let (mut frozen, mut moved) = (0u64, 0u64);
    for row in &history.rows {
        let s = row.v_aux.iter().fold(0.0, |acc, v| acc + v.max(0.0).sqrt());
        inner += row.beta1 * s / row.alpha;
        for (acc, g) in col_sq.iter_mut().zip(&row.grad) {
            *acc += g * g;
        }
        if let Some(lambda) = &row.lambda {
            for &l in lambda {
                if l == 1.0 {
                    frozen += 1;
                } else {
                    moved += 1;
                    lambda_inf = lambda_inf.max(1.0 / (1.0 - l).sqrt());
                }
            }
        }
    }
    let term2 = omega2 / ((1.0 - b1) * (1.0 - b1)) * inner;

    let col_norm_sum = col_sq.iter().fold(0.0, |acc, s| acc + s.sqrt());
    let zeta = h.alpha0 * (1.0 + (rounds as f64).ln()).sqrt() / ((1.0 - delta) * (1.0 - b2).sqrt())
        * col_norm_sum;
    let k1 = 1.0 / (1.0 - b1);
    let k1_case1_display = b2.sqrt() * (1.0 - delta) / ((1.0 - b1) * (b2.sqrt() - b1));
    let k2 = (1.0 - b1) * (1.0 - b1) * lambda_inf / ((1.0 - b2.sqrt()) * (1.0 + delta));
    let rhs = term1 + term2 + zeta * k1.max(k2);
    let total = frozen + moved;

    Ok(BoundReport {
        rounds,
        omega_inf: omega,
        term1,
        term2,
        zeta,
        k1,
        k1_case1_display,
        k2,
        lambda_inf,
        case1_fraction: if total > 0 { frozen as f64 / total as f64 } else { 0.0 },
        rhs,
        realized_regret,
        holds: realized_regret <= rhs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::{Beta1Schedule, Optimizer};

    fn v(data: &[f64]) -> Vector {
        Vector::new(data.to_vec()).unwrap()
    }

    fn hp() -> Hyperparams {
        Hyperparams::new(0.5, 0.9, 0.99, 1e-8)
    }

    #[test]
    fn lemma2_single_step_margin() {
        // δ² = 0.81/0.99, bound = (0.1/0.1)·√(0.01/(1−δ²)), margin = bound − 0.1
        let delta_sq: f64 = 0.81 / 0.99;
        let expected = (0.01 / (1.0 - delta_sq)).sqrt() - 0.1;
        assert!((expected - 0.13452).abs() < 1e-5);
        let margin = check_lemma2(&v(&[0.1]), &v(&[0.01]), &hp()).unwrap();
        assert!((margin - expected).abs() < 1e-14);
    }

    #[test]
    fn lemma2_zero_history() {
        assert_eq!(check_lemma2(&v(&[0.0]), &v(&[0.0]), &hp()).unwrap(), 0.0);
    }

    #[test]
    fn lemma2_requires_delta_below_one() {
        let h = Hyperparams::new(0.5, 0.9, 0.5, 1e-8);
        assert!(matches!(
            check_lemma2(&v(&[0.0]), &v(&[0.0]), &h),
            Err(Error::DeltaNotLessThanOne { .. })
        ));
    }

    #[test]
    fn psi_is_zero_on_case_one_with_constant_alpha() {
        let h = hp();
        let mut s = OptimizerState::new(Variant::CAdam, v(&[0.0]));
        s.step(&h, &v(&[10.0])).unwrap();
        let prev = s.clone();
        let out = s.step(&h, &v(&[0.1])).unwrap();
        assert_eq!(case_tag(out.lambda.as_ref().unwrap()), CaseTag::Case1);
        assert_eq!(check_psi(&prev, &s, &h).unwrap(), 0.0);
    }

    #[test]
    fn psi_rejects_adam() {
        let h = hp();
        let mut s = OptimizerState::new(Variant::Adam, v(&[0.0]));
        let prev = s.clone();
        s.step(&h, &v(&[1.0])).unwrap();
        assert!(matches!(check_psi(&prev, &s, &h), Err(Error::VariantMismatch { .. })));
    }

    #[test]
    fn adam_psi_goes_negative_after_a_burst() {
        let h = hp();
        let mut s = OptimizerState::new(Variant::Adam, v(&[0.0]));
        let mut worst = f64::INFINITY;
        for g in [10.0, 0.01, 0.01, 0.01] {
            let prev = s.v.clone();
            s.step(&h, &v(&[g])).unwrap();
            worst = worst.min(psi_min(&prev, &s.v, &h, s.t).unwrap());
        }
        // v: 1.0, 0.990001, ... so ψ_2 = (√0.990001 − 1)/0.5 < 0
        assert!(worst < -1e-3, "{worst}");
    }

    #[test]
    fn case_tags() {
        assert_eq!(case_tag(&v(&[1.0, 1.0])), CaseTag::Case1);
        assert_eq!(case_tag(&v(&[0.2, 0.0])), CaseTag::Case2);
        assert_eq!(case_tag(&v(&[1.0, 0.3])), CaseTag::Mixed);
    }

    fn run_history(variant: Variant, h: &Hyperparams, grads: &[f64]) -> (GradientHistory, FeasibleBox) {
        let dom = FeasibleBox::uniform(1, -1.0, 1.0).unwrap();
        let mut opt = Optimizer::new(variant, h.clone(), dom.clone(), v(&[0.0])).unwrap();
        let mut hist = GradientHistory::new(variant, 1);
        for &g in grads {
            let g = v(&[g]);
            let out = opt.advance(&g).unwrap();
            hist.push(&opt.state, &out, &g, h).unwrap();
        }
        (hist, dom)
    }

    #[test]
    fn single_step_bound_by_hand() {
        let h = hp().with_alpha_schedule(AlphaSchedule::InverseSqrt);
        let (hist, dom) = run_history(Variant::CAdam, &h, &[1.0]);
        // x_1 = 0 and f_1(x) = x, so the regret against x* = −1 is 1.
        let r = bound_rhs(&hist, &h, &dom, 1.0).unwrap();
        let delta = 0.9 / 0.99f64.sqrt();
        let term1 = 4.0 / (2.0 * 0.5 * 0.1) * 0.1;
        let term2 = 4.0 / 0.01 * 0.9 * 0.1 / 0.5;
        let zeta = 0.5 * 1.0 / ((1.0 - delta) * 0.1);
        let k2 = 0.01 / ((1.0 - 0.99f64.sqrt()) * (1.0 + delta));
        assert!((r.term1 - term1).abs() < 1e-9 * term1);
        assert!((r.term2 - term2).abs() < 1e-9 * term2);
        assert!((r.zeta - zeta).abs() < 1e-9 * zeta);
        assert!((r.k2 - k2).abs() < 1e-12);
        assert_eq!(r.lambda_inf, 1.0);
        let rhs = term1 + term2 + zeta * 10.0;
        assert!((r.rhs - rhs).abs() < 1e-9 * rhs);
        assert!(r.holds && r.rhs.is_finite());
    }

    #[test]
    fn both_k1_forms_agree() {
        let h = hp().with_alpha_schedule(AlphaSchedule::InverseSqrt);
        let (hist, dom) = run_history(Variant::AmsGrad, &h, &[1.0, -2.0, 0.5]);
        let r = bound_rhs(&hist, &h, &dom, 0.0).unwrap();
        assert!((r.k1 - r.k1_case1_display).abs() < 1e-12 * r.k1);
    }

    #[test]
    fn zero_beta1_kills_middle_term() {
        let h = Hyperparams::new(0.5, 0.0, 0.99, 1e-8).with_alpha_schedule(AlphaSchedule::InverseSqrt);
        let (hist, dom) = run_history(Variant::CAdam, &h, &[1.0, -3.0, 2.0, 0.1]);
        assert_eq!(bound_rhs(&hist, &h, &dom, 0.0).unwrap().term2, 0.0);
    }

    #[test]
    fn bound_errors() {
        let h = hp().with_alpha_schedule(AlphaSchedule::InverseSqrt);
        let (hist, dom) = run_history(Variant::CAdam, &h, &[1.0]);
        assert!(matches!(
            bound_rhs(&hist, &h, &FeasibleBox::unbounded(1), 0.0),
            Err(Error::UnboundedDomain)
        ));
        assert!(bound_rhs(&hist, &hp(), &dom, 0.0).is_err());
        let adam = GradientHistory::new(Variant::Adam, 1);
        assert!(matches!(bound_rhs(&adam, &h, &dom, 0.0), Err(Error::VariantMismatch { .. })));

        let mut small = GradientHistory::with_cap(Variant::CAdam, 1, 1);
        let mut s = OptimizerState::new(Variant::CAdam, v(&[0.0]));
        let out = s.step(&h, &v(&[1.0])).unwrap();
        small.push(&s, &out, &v(&[1.0]), &h).unwrap();
        assert!(matches!(
            small.push(&s, &out, &v(&[1.0]), &h),
            Err(Error::HistoryTooLarge { cells: 2, cap: 1 })
        ));
    }

    #[test]
    fn lambda_inf_never_shrinks_with_prefix() {
        let h = hp()
            .with_alpha_schedule(AlphaSchedule::InverseSqrt)
            .with_beta1_schedule(Beta1Schedule::Constant);
        let grads: Vec<f64> = (0..200).map(|k| ((k * 37 % 11) as f64 - 5.0) * 0.7).collect();
        let (full, dom) = run_history(Variant::CAdam, &h, &grads);
        let mut last = 0.0;
        for n in 1..=grads.len() {
            let mut prefix = GradientHistory::new(Variant::CAdam, 1);
            prefix.rows = full.rows()[..n].to_vec();
            let li = bound_rhs(&prefix, &h, &dom, 0.0).unwrap().lambda_inf;
            assert!(li >= last);
            last = li;
        }
    }
}
