//! Linear classifier on 10⁴ uniform points with 10% flipped labels.
//! Prints the learned boundary of each optimizer next to the true one.

use cadam::harness::{self, Experiment, RunManifest};
use cadam::Variant;

fn main() -> cadam::Result<()> {
    let seed = std::env::args().nth(1).map_or(1, |a| a.parse().expect("seed"));
    for variant in [Variant::Adam, Variant::AmsGrad, Variant::CAdam] {
        let s = harness::run(&RunManifest::preset(Experiment::Noisy2D, variant, seed))?.summary;
        let t = s.true_boundary.unwrap();
        println!(
            "{:>8}: val acc {:.4}  val loss {:.4}",
            variant.to_string(),
            s.val_accuracy.unwrap(),
            s.val_loss.unwrap()
        );
        match s.learned_boundary {
            Some(b) => println!("          learned {:+.3}x {:+.3}y {:+.3} = 0", b.w1, b.w2, b.b),
            None => println!("          learned boundary degenerate"),
        }
        println!("          true    {:+.3}x {:+.3}y {:+.3} = 0", t.w1, t.w2, t.b);
    }
    Ok(())
}
