//! Analytic gradients of each model against central differences.

use cadam::data::{Batch, Dataset};
use cadam::models::{self, ModelSpec};
use cadam::rng::{self, streams};
use cadam::Vector;
use rand::Rng as _;

fn main() -> cadam::Result<()> {
    let mut r = rng::stream(11, streams::PROPERTY);
    let specs = [
        ModelSpec::Softmax { classes: 3, features: 4, l2: 1e-2 },
        ModelSpec::Linear2D { l2: 1e-2 },
        ModelSpec::Mlp { features: 3, hidden: 5, classes: 3, l2: 1e-2 },
    ];
    for spec in specs {
        let (d, k) = (spec.features(), spec.classes());
        let n = 6;
        let data = Dataset::new(
            (0..n * d).map(|_| r.gen_range(-1.0..1.0)).collect(),
            (0..n).map(|_| r.gen_range(0..k)).collect(),
            d,
            k,
        )?;
        let batch = Batch::all(&data);
        let p = spec.init_params(&mut r);
        let (loss, g) = models::loss_and_grad(&spec, &p, &data, &batch)?;
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..p.dim() {
            let shifted = |s: f64| -> cadam::Result<f64> {
                let mut q: Vector = p.clone();
                q.as_mut_slice()[i] += s;
                Ok(models::loss_and_grad(&spec, &q, &data, &batch)?.0)
            };
            let fd = (shifted(h)? - shifted(-h)?) / (2.0 * h);
            worst = worst.max((g[i] - fd).abs() / g[i].abs().max(1.0));
        }
        println!("{spec:?}\n  {} params, loss {loss:.5}, worst scaled error {worst:.2e}", p.dim());
    }
    Ok(())
}
