//! Runs AMSGrad and C-Adam on the periodic counterexample, saves both run
//! directories, reloads them and prints the aligned comparison.

use cadam::harness::{self, Experiment, RunManifest, RunOutput};
use cadam::Variant;

fn main() -> cadam::Result<()> {
    let root = std::env::temp_dir().join("cadam-compare-example");
    let mut dirs = Vec::new();
    for variant in [Variant::AmsGrad, Variant::CAdam] {
        let mut m = RunManifest::preset(Experiment::SyntheticDeterministic, variant, 1);
        m.iterations = 200_000;
        m.trace_stride = 20_000;
        let dir = root.join(variant.name());
        harness::run(&m)?.write(&dir)?;
        dirs.push(dir);
    }
    let runs = dirs.iter().map(RunOutput::load).collect::<cadam::Result<Vec<_>>>()?;
    let cmp = harness::compare(&runs)?;
    print!("{}", cmp.to_csv());
    for d in &cmp.deltas {
        println!("{}: final loss delta {:+.3e}, final x delta {:+.3e}", d.label, d.final_loss, d.final_x.unwrap_or(f64::NAN));
    }
    cmp.write(root.join("comparison"))?;
    println!("wrote {}", root.display());
    Ok(())
}
