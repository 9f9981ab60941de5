//! Realized regret against the closed-form bound, on the periodic
//! counterexample and on online softmax regression.

use cadam::checks::{deterministic_bound, softmax_bound};
use cadam::Variant;

fn main() -> cadam::Result<()> {
    for variant in [Variant::AmsGrad, Variant::CAdam, Variant::CAdamV2] {
        for rounds in [1_000, 10_000] {
            let b = deterministic_bound(variant, rounds)?;
            println!("{variant:>9} periodic T={rounds:>5}: regret {:>10.3}  bound {:.4e}  holds {}", b.realized_regret, b.rhs, b.holds);
        }
        let b = softmax_bound(variant, 3, 1_000)?;
        println!("{variant:>9} softmax  T= 1000: regret {:>10.3}  bound {:.4e}  holds {}", b.realized_regret, b.rhs, b.holds);
        println!("          terms: {:.3e} + {:.3e} + {:.3e} x max({:.3}, {:.3})", b.term1, b.term2, b.zeta, b.k1, b.k2);
    }
    Ok(())
}
