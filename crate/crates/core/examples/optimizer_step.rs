//! One hand-fed gradient sequence through every optimizer, printing the
//! second-moment state after each step.

use cadam::optim::{AlphaSchedule, SecondMomentBase};
use cadam::{Hyperparams, OptimizerState, Variant, Vector};

fn main() -> cadam::Result<()> {
    let h = Hyperparams::new(0.1, 0.9, 0.99, 1e-8)
        .with_alpha_schedule(AlphaSchedule::InverseSqrt)
        .with_second_moment_base(SecondMomentBase::Raw)
        .with_epsilon0(1e-2);
    // a large gradient, then small ones: the moments part ways here
    let grads = [4.0, 0.5, 0.5, -0.2, 3.0];

    for variant in Variant::ALL {
        let mut s = OptimizerState::new(variant, Vector::zeros(1));
        println!("{variant}");
        for &g in &grads {
            let out = s.step(&h, &Vector::new(vec![g])?)?;
            let lambda = out.lambda.map(|l| format!("{:.4}", l[0])).unwrap_or_else(|| "-".into());
            println!(
                "  t={} g={g:+.1}  v={:.5}  v_aux={:.5}  lambda={lambda}  lr_eff={:.5}  x={:+.5}",
                s.t, s.v[0], s.v_aux[0], out.effective_lr[0], out.proposed_x[0]
            );
            s.set_point(out.proposed_x)?;
        }
    }
    Ok(())
}
