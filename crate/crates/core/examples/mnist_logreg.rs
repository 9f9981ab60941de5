//! Softmax regression on a 2000/500 digit subset.
//!
//! With two arguments (IDX image and label files) it trains on real MNIST;
//! otherwise on the built-in synthetic digits.

use cadam::harness::{self, Experiment, RunManifest};
use cadam::Variant;

fn main() -> cadam::Result<()> {
    let paths: Vec<String> = std::env::args().skip(1).collect();
    for variant in [Variant::Adam, Variant::AmsGrad, Variant::CAdam] {
        let mut m = RunManifest::preset(Experiment::LogReg, variant, 1);
        if let [images, labels] = paths.as_slice() {
            m.apply("mnist_images", images)?;
            m.apply("mnist_labels", labels)?;
        } else {
            m = m.with_synthetic_digits();
        }
        let out = harness::run(&m)?;
        let s = &out.summary;
        println!(
            "{:>8}: train loss {:.4} -> {:.4}  val acc {:.3}",
            variant.to_string(),
            s.initial_loss.unwrap(),
            s.final_loss,
            s.val_accuracy.unwrap()
        );
        for row in out.trace.iter().step_by(50) {
            println!("          t={:>3} batch loss {:.4}", row.t, row.loss);
        }
    }
    Ok(())
}
