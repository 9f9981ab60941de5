//! Randomized property suites over the optimizer invariants. The CLI's
//! `check` command runs them all; each returns one [`CheckResult`].
//!
//! Gradient traces are drawn from a heavy-tailed family: signed magnitudes
//! `10^U(−3, 3)` with occasional exact zeros, which exercises both branches
//! of the C-Adam update and the `0/0` rule.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{Batch, Dataset};
use crate::diagnostics::{bound_rhs, check_lemma2, check_psi, BoundReport};
use crate::error::Result;
use crate::models::{self, ModelSpec};
use crate::oco::{run_online, LinearLossProblem, OcoOptions, SoftmaxStream};
use crate::projection::{project, FeasibleBox};
use crate::optim::{AlphaSchedule, Hyperparams, OptimizerState, SecondMomentBase, Variant};
use crate::rng::{self, streams, Rng};
use crate::vecmath::Vector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        CheckResult {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

const MONOTONE: [Variant; 3] = [Variant::AmsGrad, Variant::CAdam, Variant::CAdamV2];

/// One heavy-tailed gradient vector.
pub fn random_gradient(r: &mut Rng, dim: usize) -> Vector {
    let g = (0..dim)
        .map(|_| {
            if r.gen::<f64>() < 0.05 {
                0.0
            } else {
                let mag = 10f64.powf(r.gen_range(-3.0..3.0));
                if r.gen::<bool>() {
                    mag
                } else {
                    -mag
                }
            }
        })
        .collect();
    Vector::new(g).expect("dim >= 1")
}

fn constant_alpha(base: SecondMomentBase) -> Hyperparams {
    Hyperparams::new(0.01, 0.9, 0.99, 1e-8)
        .with_epsilon0(1e-3)
        .with_second_moment_base(base)
}

/// Monotone second moment and `ψ_t ≥ 0` (constant `α`), exact, for every
/// monotone variant and both decay bases. Runs at least `min_steps` steps.
pub fn monotone_and_psi(seed: u64, min_steps: u64) -> Result<CheckResult> {
    let mut r = rng::stream(seed, streams::PROPERTY);
    let (dim, len) = (4, 1000);
    let mut steps = 0u64;
    let mut worst_psi = f64::INFINITY;
    let mut violations = 0u64;
    while steps < min_steps {
        for base in [SecondMomentBase::Raw, SecondMomentBase::RunningMax] {
            let h = constant_alpha(base);
            for variant in MONOTONE {
                let mut s = OptimizerState::new(variant, Vector::zeros(dim));
                for _ in 0..len {
                    let prev = s.clone();
                    s.step(&h, &random_gradient(&mut r, dim))?;
                    if (0..dim).any(|i| s.v_aux[i] < prev.v_aux[i]) {
                        violations += 1;
                    }
                    let psi = check_psi(&prev, &s, &h)?;
                    worst_psi = worst_psi.min(psi);
                    if psi < 0.0 {
                        violations += 1;
                    }
                    steps += 1;
                }
            }
        }
    }
    Ok(CheckResult::new(
        "monotone second moment and psi >= 0",
        violations == 0,
        format!("{steps} steps, min psi {worst_psi:e}, {violations} violations"),
    ))
}

/// First-moment bound margin over `trials` random traces of `len` steps,
/// each with random `β1 < √β2`.
pub fn lemma2_margin(seed: u64, trials: usize, len: usize) -> Result<CheckResult> {
    let mut r = rng::stream(seed, streams::PROPERTY);
    let mut worst = f64::INFINITY;
    for _ in 0..trials {
        let beta2: f64 = r.gen_range(0.5..0.9999);
        let beta1 = r.gen_range(0.0..0.999 * beta2.sqrt());
        let h = Hyperparams::new(0.01, beta1, beta2, 1e-8);
        let mut s = OptimizerState::new(Variant::Adam, Vector::zeros(1));
        for _ in 0..len {
            s.step(&h, &random_gradient(&mut r, 1))?;
            worst = worst.min(check_lemma2(&s.m, &s.v, &h)?);
        }
    }
    Ok(CheckResult::new(
        "first-moment bound margin >= -1e-12",
        worst >= -1e-12,
        format!("{trials} traces x {len} steps, min margin {worst:e}"),
    ))
}

/// `ṽ_{t−1} ≤ ṽ_t ≤ max(ṽ_{t−1}, v_t)` and C-Adam's `ṽ` never above
/// AMSGrad's `v̂` on the same trace (so its step sizes are never smaller).
pub fn sandwich_and_domination(seed: u64, traces: usize, len: usize) -> Result<CheckResult> {
    let mut r = rng::stream(seed, streams::PROPERTY);
    let dim = 3;
    let mut violations = 0u64;
    for k in 0..traces {
        let base = if k % 2 == 0 { SecondMomentBase::Raw } else { SecondMomentBase::RunningMax };
        let h = constant_alpha(base);
        let mut c = OptimizerState::new(Variant::CAdam, Vector::zeros(dim));
        let mut a = OptimizerState::new(Variant::AmsGrad, Vector::zeros(dim));
        for _ in 0..len {
            let g = random_gradient(&mut r, dim);
            let prev = c.v_aux.clone();
            let oc = c.step(&h, &g)?;
            let oa = a.step(&h, &g)?;
            for i in 0..dim {
                let upper = prev[i].max(c.v[i]);
                if !(prev[i] <= c.v_aux[i] && c.v_aux[i] <= upper) {
                    violations += 1;
                }
                if c.v_aux[i] > a.v_aux[i] || oc.effective_lr[i] < oa.effective_lr[i] {
                    violations += 1;
                }
            }
        }
    }
    Ok(CheckResult::new(
        "C-Adam sandwich and domination by AMSGrad",
        violations == 0,
        format!("{traces} traces x {len} steps, {violations} violations"),
    ))
}

/// Under componentwise non-decreasing `|g_t|` the running maximum never
/// binds: AMSGrad's `v̂` equals its raw `v`.
pub fn monotone_gradients_agree(seed: u64, traces: usize, len: usize) -> Result<CheckResult> {
    let mut r = rng::stream(seed, streams::PROPERTY);
    let dim = 3;
    let mut violations = 0u64;
    for k in 0..traces {
        let base = if k % 2 == 0 { SecondMomentBase::Raw } else { SecondMomentBase::RunningMax };
        let h = constant_alpha(base);
        let mut s = OptimizerState::new(Variant::AmsGrad, Vector::zeros(dim));
        let mut mag: Vec<f64> = (0..dim).map(|_| r.gen_range(0.0..1.0)).collect();
        for _ in 0..len {
            for m in mag.iter_mut() {
                *m += r.gen_range(0.0..0.1);
            }
            let g = Vector::new(mag.iter().map(|&m| if r.gen::<bool>() { m } else { -m }).collect())?;
            s.step(&h, &g)?;
            if s.v_aux != s.v {
                violations += 1;
            }
        }
    }
    Ok(CheckResult::new(
        "AMSGrad max inactive under growing gradients",
        violations == 0,
        format!("{traces} traces x {len} steps, {violations} violations"),
    ))
}

/// Regret-bound report for the deterministic counterexample at `rounds`.
pub fn deterministic_bound(variant: Variant, rounds: u64) -> Result<BoundReport> {
    let h = Hyperparams::new(0.5, 0.9, 0.99, 1e-8)
        .with_alpha_schedule(AlphaSchedule::InverseSqrt)
        .with_second_moment_base(SecondMomentBase::Raw)
        .with_epsilon0(1.0);
    let problem = LinearLossProblem::deterministic(crate::harness::SYNTHETIC_PERIOD);
    let mut stream = problem.stream();
    let mut opts = OcoOptions::new(Vector::zeros(1));
    opts.trace_stride = rounds;
    opts.retain_history = true;
    let run = run_online(&mut stream, variant, &h, rounds, &opts)?;
    let history = run.history.as_ref().expect("history retained");
    bound_rhs(history, &h, &problem.domain(), run.regret.expect("tracked"))
}

/// A small random classification set: `n` rows, `d` features in `[−1, 1]`,
/// labels from a random linear rule.
pub fn small_softmax_data(seed: u64, n: usize, d: usize, k: usize) -> Result<Dataset> {
    let mut r = rng::stream(seed, streams::DATA);
    let w: Vec<f64> = (0..k * d).map(|_| r.gen_range(-1.0..1.0)).collect();
    let mut features = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..d).map(|_| r.gen_range(-1.0..1.0)).collect();
        let scores: Vec<f64> = (0..k)
            .map(|c| (0..d).map(|j| w[c * d + j] * x[j]).sum::<f64>() + 0.3 * r.gen_range(-1.0..1.0))
            .collect();
        let label = (0..k).fold(0, |best, c| if scores[c] > scores[best] { c } else { best });
        features.extend(x);
        labels.push(label);
    }
    Dataset::new(features, labels, d, k)
}

/// Regret-bound report for online softmax regression on a box of radius
/// `bound`. The realized regret uses a certified lower bound on the
/// comparator, so it over-estimates the true regret.
pub fn softmax_bound(variant: Variant, seed: u64, rounds: u64) -> Result<BoundReport> {
    let (d, k) = (4, 3);
    let data = small_softmax_data(seed, 200, d, k)?;
    let spec = ModelSpec::Softmax { classes: k, features: d, l2: 0.0 };
    let h = Hyperparams::new(0.1, 0.9, 0.99, 1e-8)
        .with_alpha_schedule(AlphaSchedule::InverseSqrt)
        .with_second_moment_base(SecondMomentBase::Raw)
        .with_epsilon0(1e-4);
    let mut stream = SoftmaxStream::new(spec.clone(), &data, 2.0, seed)?;
    let mut opts = OcoOptions::new(Vector::zeros(spec.num_params()));
    opts.trace_stride = rounds;
    opts.retain_history = true;
    let run = run_online(&mut stream, variant, &h, rounds, &opts)?;
    let comparator = stream.comparator_lower_bound(rounds, 300)?;
    let history = run.history.as_ref().expect("history retained");
    let domain = crate::oco::OnlineProblem::domain(&stream);
    bound_rhs(history, &h, &domain, run.cumulative_loss - comparator)
}

pub fn bound_soundness() -> Result<CheckResult> {
    let mut lines = Vec::new();
    let mut ok = true;
    for variant in MONOTONE {
        for rounds in [1_000, 10_000] {
            let b = deterministic_bound(variant, rounds)?;
            ok &= b.holds;
            lines.push(format!("{variant} T={rounds}: regret {:.3} <= rhs {:.3}", b.realized_regret, b.rhs));
        }
        let b = softmax_bound(variant, 3, 1_000)?;
        ok &= b.holds;
        lines.push(format!("{variant} softmax T=1000: regret {:.3} <= rhs {:.3}", b.realized_regret, b.rhs));
    }
    Ok(CheckResult::new("regret bound soundness", ok, lines.join("; ")))
}

/// Worst `|g_a − g_fd| / max(1, |g_a|)` over `instances` random problems
/// of every model kind, central differences with step `1e-5`.
pub fn gradient_check(seed: u64, instances: usize) -> Result<CheckResult> {
    let mut r = rng::stream(seed, streams::PROPERTY);
    let mut worst: f64 = 0.0;
    for k in 0..instances {
        let spec = match k % 3 {
            0 => ModelSpec::Softmax {
                classes: r.gen_range(2..5),
                features: r.gen_range(1..5),
                l2: r.gen_range(0.0..0.1),
            },
            1 => ModelSpec::Linear2D { l2: r.gen_range(0.0..0.1) },
            _ => ModelSpec::Mlp {
                features: r.gen_range(1..4),
                hidden: r.gen_range(1..5),
                classes: r.gen_range(2..4),
                l2: r.gen_range(0.0..0.1),
            },
        };
        let (d, c) = (spec.features(), spec.classes());
        let n = r.gen_range(1..6);
        let features: Vec<f64> = (0..n * d).map(|_| r.gen_range(-1.0..1.0)).collect();
        let labels: Vec<usize> = (0..n).map(|_| r.gen_range(0..c)).collect();
        let data = Dataset::new(features, labels, d, c)?;
        let batch = Batch::all(&data);
        let p = Vector::new((0..spec.num_params()).map(|_| r.gen_range(-1.0..1.0)).collect())?;
        let (_, g) = models::loss_and_grad(&spec, &p, &data, &batch)?;
        let step = 1e-5;
        for i in 0..p.dim() {
            let mut up = p.clone();
            let mut dn = p.clone();
            up.as_mut_slice()[i] += step;
            dn.as_mut_slice()[i] -= step;
            let fd = (models::loss_and_grad(&spec, &up, &data, &batch)?.0
                - models::loss_and_grad(&spec, &dn, &data, &batch)?.0)
                / (2.0 * step);
            worst = worst.max((g[i] - fd).abs() / g[i].abs().max(1.0));
        }
    }
    Ok(CheckResult::new(
        "analytic gradients match finite differences",
        worst <= 1e-5,
        format!("{instances} instances, worst scaled error {worst:e}"),
    ))
}

/// Brute-force weighted projection onto `[lo, hi]^d` over a grid of
/// spacing `step`.
fn grid_projection(y: &[f64], w: &[f64], lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize + 1;
    let d = y.len();
    let mut idx = vec![0usize; d];
    let (mut best, mut best_val) = (vec![lo; d], f64::INFINITY);
    loop {
        let z: Vec<f64> = idx.iter().map(|&i| lo + i as f64 * step).collect();
        let val: f64 = (0..d).map(|i| w[i] * (z[i] - y[i]).powi(2)).sum();
        if val < best_val {
            best_val = val;
            best = z;
        }
        let mut carry = 0;
        while carry < d && idx[carry] + 1 == n {
            idx[carry] = 0;
            carry += 1;
        }
        if carry == d {
            return best;
        }
        idx[carry] += 1;
    }
}

/// Projection against a grid oracle in dimensions 1 to 3, plus exact
/// idempotence and containment.
pub fn projection_oracle(seed: u64, instances: usize) -> Result<CheckResult> {
    let mut r = rng::stream(seed, streams::PROPERTY);
    let mut violations = 0usize;
    for k in 0..instances {
        let d = 1 + k % 3;
        let step = if d == 3 { 5e-2 } else { 1e-2 };
        let domain = FeasibleBox::uniform(d, -1.0, 1.0)?;
        let y: Vec<f64> = (0..d).map(|_| r.gen_range(-3.0..3.0)).collect();
        let w: Vec<f64> = (0..d).map(|_| r.gen_range(0.1..10.0)).collect();
        let wv = Vector::new(w.clone())?;
        let p = project(&Vector::new(y.clone())?, &wv, &domain)?;
        let oracle = grid_projection(&y, &w, -1.0, 1.0, step);
        if (0..d).any(|i| (oracle[i] - p[i]).abs() > step) {
            violations += 1;
        }
        if !domain.contains(&p) || project(&p, &wv, &domain)? != p {
            violations += 1;
        }
    }
    Ok(CheckResult::new(
        "projection matches grid oracle, idempotent, contained",
        violations == 0,
        format!("{instances} instances, {violations} violations"),
    ))
}

/// Midpoint convexity of the softmax loss along random segments.
pub fn softmax_convexity(seed: u64, segments: usize) -> Result<CheckResult> {
    let mut r = rng::stream(seed, streams::PROPERTY);
    let (d, k) = (4, 3);
    let data = small_softmax_data(seed, 50, d, k)?;
    let batch = Batch::all(&data);
    let spec = ModelSpec::Softmax { classes: k, features: d, l2: 1e-2 };
    let n = spec.num_params();
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..segments {
        let a = Vector::new((0..n).map(|_| r.gen_range(-3.0..3.0)).collect())?;
        let b = Vector::new((0..n).map(|_| r.gen_range(-3.0..3.0)).collect())?;
        let mid = a.zip_map(&b, |x, y| 0.5 * (x + y))?;
        let la = models::dataset_loss(&spec, &a, &data)?;
        let lb = models::dataset_loss(&spec, &b, &data)?;
        let lm = models::loss_and_grad(&spec, &mid, &data, &batch)?.0;
        worst = worst.max(lm - 0.5 * (la + lb));
    }
    Ok(CheckResult::new(
        "softmax loss is midpoint convex",
        worst <= 1e-10,
        format!("{segments} segments, worst excess {worst:e}"),
    ))
}

/// Adam on the stochastic counterexample: its `ψ_t` must dip below zero,
/// which is exactly what the monotone variants rule out.
pub fn adam_psi_goes_negative(seed: u64, rounds: u64) -> Result<CheckResult> {
    let h = Hyperparams::new(0.5, 0.9, 0.99, 1e-8)
        .with_alpha_schedule(AlphaSchedule::InverseSqrt)
        .with_second_moment_base(SecondMomentBase::Raw);
    let mut problem = LinearLossProblem::stochastic(seed).stream();
    let mut opts = OcoOptions::new(Vector::zeros(1));
    opts.trace_stride = rounds;
    let run = run_online(&mut problem, Variant::Adam, &h, rounds, &opts)?;
    let psi = run.diagnostics.psi_min.unwrap_or(f64::NAN);
    Ok(CheckResult::new(
        "Adam psi goes negative on the counterexample",
        psi < 0.0,
        format!("{rounds} rounds, min psi {psi:e}"),
    ))
}

/// Every suite at full size.
pub fn run_all(seed: u64) -> Result<Vec<CheckResult>> {
    Ok(vec![
        monotone_and_psi(seed, 1_000_000)?,
        lemma2_margin(seed, 1_000, 10_000)?,
        sandwich_and_domination(seed, 200, 1_000)?,
        monotone_gradients_agree(seed, 100, 500)?,
        bound_soundness()?,
        gradient_check(seed, 150)?,
        softmax_convexity(seed, 1_000)?,
        projection_oracle(seed, 60)?,
        adam_psi_goes_negative(seed, 10_000)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suites_pass() {
        assert!(monotone_and_psi(1, 20_000).unwrap().passed);
        assert!(lemma2_margin(1, 20, 500).unwrap().passed);
        assert!(sandwich_and_domination(1, 10, 200).unwrap().passed);
        assert!(monotone_gradients_agree(1, 10, 200).unwrap().passed);
        assert!(gradient_check(1, 12).unwrap().passed);
        assert!(softmax_convexity(1, 50).unwrap().passed);
        assert!(projection_oracle(1, 6).unwrap().passed);
        assert!(adam_psi_goes_negative(1, 2_000).unwrap().passed);
    }

    #[test]
    fn single_step_bound_holds() {
        let b = deterministic_bound(Variant::CAdam, 1).unwrap();
        assert!(b.rhs.is_finite() && b.holds);
    }
}
