//! One-hidden-layer ReLU network (100 units) on synthetic digits, with a
//! strictly decreasing β1.

use cadam::harness::{self, Experiment, RunManifest};
use cadam::Variant;

fn main() -> cadam::Result<()> {
    for variant in [Variant::Adam, Variant::AmsGrad, Variant::CAdam] {
        let m = RunManifest::preset(Experiment::Mlp, variant, 1).with_synthetic_digits();
        let s = harness::run(&m)?.summary;
        println!(
            "{:>8}: train loss {:.4} -> {:.5}  train acc {:.3}  val acc {:.3}",
            variant.to_string(),
            s.initial_loss.unwrap(),
            s.final_loss,
            s.train_accuracy.unwrap(),
            s.val_accuracy.unwrap()
        );
    }
    Ok(())
}
