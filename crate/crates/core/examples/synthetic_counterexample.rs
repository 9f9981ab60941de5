//! The stochastic linear counterexample: f_t(x) = 1010x with probability
//! 0.01, else −10x, on [−1, 1]. The optimum is x = −1.
//!
//! `cargo run --release --example synthetic_counterexample [T] [seed]`

use cadam::harness::{self, Experiment, RunManifest};
use cadam::Variant;

fn main() -> cadam::Result<()> {
    let mut args = std::env::args().skip(1);
    let iterations: u64 = args.next().map_or(5_000_000, |a| a.parse().expect("T"));
    let seed: u64 = args.next().map_or(1, |a| a.parse().expect("seed"));

    println!("T = {iterations}, seed = {seed}");
    for variant in [Variant::Adam, Variant::AmsGrad, Variant::CAdam] {
        let mut m = RunManifest::preset(Experiment::Synthetic, variant, seed);
        m.iterations = iterations;
        let s = harness::run(&m)?.summary;
        println!(
            "{:>8}: final x {:+.5}  R_T/T {:.4}  first |x+1|<=0.05 at {:?}  min psi {:.3e}",
            variant.to_string(),
            s.final_x.unwrap(),
            s.average_regret.unwrap(),
            s.first_hit,
            s.psi_min.unwrap_or(f64::NAN),
        );
    }
    Ok(())
}
