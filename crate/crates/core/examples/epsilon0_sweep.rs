//! C-Adam_V2 across an ε0 grid on the synthetic problem, against plain
//! C-Adam on the same seed.
//!
//! `cargo run --release --example epsilon0_sweep [T]`

use cadam::harness::{self, Experiment, RunManifest, SweepAxis, SweepSpec, EPSILON0_GRID};
use cadam::Variant;

fn main() -> cadam::Result<()> {
    let iterations: u64 = std::env::args().nth(1).map_or(5_000_000, |a| a.parse().expect("T"));
    let mut cadam = RunManifest::preset(Experiment::Synthetic, Variant::CAdam, 1);
    cadam.iterations = iterations;
    let reference = harness::run(&cadam)?.summary;

    let mut base = RunManifest::preset(Experiment::Synthetic, Variant::CAdamV2, 1);
    base.iterations = iterations;
    base.hyper.epsilon0 = EPSILON0_GRID[0];
    let spec = SweepSpec { base, axis: SweepAxis::Epsilon0Grid(EPSILON0_GRID.to_vec()) };
    let outs = harness::sweep(&spec)?;
    print!("{}", harness::sweep_table(&spec, &outs));
    println!("cadam first hit: {:?}", reference.first_hit);
    if let Some(i) = harness::best_by_first_hit(&outs) {
        println!("best eps0 {} first hit {:?}", spec.axis.value(i), outs[i].summary.first_hit);
    }
    Ok(())
}
