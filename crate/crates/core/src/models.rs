//! Classifiers with hand-written gradients. Every loss is the mean
//! cross-entropy over a batch plus `(l2/2)·‖weights‖²`; biases are never
//! regularized.
//!
//! Flat parameter layouts (row-major blocks, in this order):
//!
//! | model      | blocks                                               |
//! |------------|------------------------------------------------------|
//! | `Softmax`  | `weight` K×D, `bias` K                               |
//! | `Linear2D` | `weight` 1×2, `bias` 1; logit of class 1 is `w·x+b` |
//! | `Mlp`      | `w1` H×D, `b1` H, `w2` K×H, `b2` K                   |

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{Batch, Dataset};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::vecmath::Vector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ModelSpec {
    Softmax { classes: usize, features: usize, l2: f64 },
    Linear2D { l2: f64 },
    Mlp { features: usize, hidden: usize, classes: usize, l2: f64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamShape {
    pub name: &'static str,
    pub rows: usize,
    pub cols: usize,
    /// Whether the L2 penalty applies to this block.
    pub regularized: bool,
}

impl ParamShape {
    fn weight(name: &'static str, rows: usize, cols: usize) -> Self {
        ParamShape { name, rows, cols, regularized: true }
    }

    fn bias(name: &'static str, rows: usize) -> Self {
        ParamShape { name, rows, cols: 1, regularized: false }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        let (dims_ok, l2) = match *self {
            ModelSpec::Softmax { classes, features, l2 } => (classes >= 2 && features >= 1, l2),
            ModelSpec::Linear2D { l2 } => (true, l2),
            ModelSpec::Mlp { features, hidden, classes, l2 } => {
                (features >= 1 && hidden >= 1 && classes >= 2, l2)
            }
        };
        if !dims_ok {
            return Err(Error::InvalidModel("model needs ≥1 feature, ≥1 hidden unit and ≥2 classes".into()));
        }
        if !(l2.is_finite() && l2 >= 0.0) {
            return Err(Error::InvalidModel(format!("l2 must be finite and non-negative, got {l2}")));
        }
        Ok(())
    }

    pub fn features(&self) -> usize {
        match *self {
            ModelSpec::Softmax { features, .. } | ModelSpec::Mlp { features, .. } => features,
            ModelSpec::Linear2D { .. } => 2,
        }
    }

    pub fn classes(&self) -> usize {
        match *self {
            ModelSpec::Softmax { classes, .. } | ModelSpec::Mlp { classes, .. } => classes,
            ModelSpec::Linear2D { .. } => 2,
        }
    }

    pub fn l2(&self) -> f64 {
        match *self {
            ModelSpec::Softmax { l2, .. } | ModelSpec::Linear2D { l2 } | ModelSpec::Mlp { l2, .. } => l2,
        }
    }

    pub fn shapes(&self) -> Vec<ParamShape> {
        match *self {
            ModelSpec::Softmax { classes, features, .. } => vec![
                ParamShape::weight("weight", classes, features),
                ParamShape::bias("bias", classes),
            ],
            ModelSpec::Linear2D { .. } => {
                vec![ParamShape::weight("weight", 1, 2), ParamShape::bias("bias", 1)]
            }
            ModelSpec::Mlp { features, hidden, classes, .. } => vec![
                ParamShape::weight("w1", hidden, features),
                ParamShape::bias("b1", hidden),
                ParamShape::weight("w2", classes, hidden),
                ParamShape::bias("b2", classes),
            ],
        }
    }

    pub fn num_params(&self) -> usize {
        self.shapes().iter().map(ParamShape::len).sum()
    }

    /// Weights uniform in `±1/√fan_in`, biases zero.
    pub fn init_params(&self, rng: &mut Rng) -> Vector {
        let mut flat = Vec::with_capacity(self.num_params());
        for s in self.shapes() {
            if s.regularized {
                let bound = 1.0 / (s.cols as f64).sqrt();
                flat.extend((0..s.len()).map(|_| rng.gen_range(-bound..=bound)));
            } else {
                flat.extend(std::iter::repeat_n(0.0, s.len()));
            }
        }
        Vector::new(flat).expect("models have parameters")
    }

    fn check_params(&self, params: &Vector) -> Result<()> {
        if params.dim() != self.num_params() {
            return Err(Error::DimMismatch {
                expected: self.num_params(),
                actual: params.dim(),
            });
        }
        Ok(())
    }

    fn check_data(&self, data: &Dataset) -> Result<()> {
        if data.d() != self.features() {
            return Err(Error::DimMismatch {
                expected: self.features(),
                actual: data.d(),
            });
        }
        Ok(())
    }
}

/// Flat parameters together with their block layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub flat: Vector,
    pub shape_spec: Vec<ParamShape>,
}

impl ParamVector {
    pub fn new(spec: &ModelSpec, flat: Vector) -> Result<Self> {
        spec.check_params(&flat)?;
        Ok(ParamVector { flat, shape_spec: spec.shapes() })
    }

    /// Reassembles from named blocks in layout order.
    pub fn from_blocks(spec: &ModelSpec, blocks: &[Vec<f64>]) -> Result<Self> {
        let flat: Vec<f64> = blocks.iter().flatten().copied().collect();
        Self::new(spec, Vector::new(flat)?)
    }

    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(self.shape_spec.len());
        let mut offset = 0;
        for s in &self.shape_spec {
            out.push(&self.flat.as_slice()[offset..offset + s.len()]);
            offset += s.len();
        }
        out
    }

    pub fn block(&self, name: &str) -> Option<&[f64]> {
        self.shape_spec
            .iter()
            .position(|s| s.name == name)
            .map(|i| self.blocks()[i])
    }
}

/// Softmax probabilities written into `probs`; returns `log Σ exp(z)`.
fn softmax_into(logits: &[f64], probs: &mut [f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (p, &z) in probs.iter_mut().zip(logits) {
        *p = (z - max).exp();
        sum += *p;
    }
    for p in probs.iter_mut() {
        *p /= sum;
    }
    max + sum.ln()
}

/// `y = W x + b` for a row-major `rows × cols` matrix.
fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        let mut acc = b[r];
        for (wi, xi) in row.iter().zip(x) {
            acc += wi * xi;
        }
        *o = acc;
    }
}

/// Accumulates `scale · delta xᵀ` into a row-major gradient block, skipping
/// zero inputs.
fn outer_acc(grad_w: &mut [f64], delta: &[f64], x: &[f64], scale: f64) {
    let cols = x.len();
    for (r, &dr) in delta.iter().enumerate() {
        if dr == 0.0 {
            continue;
        }
        let row = &mut grad_w[r * cols..(r + 1) * cols];
        let s = scale * dr;
        for (g, &xi) in row.iter_mut().zip(x) {
            if xi != 0.0 {
                *g += s * xi;
            }
        }
    }
}

/// Logits for one example.
pub fn logits(spec: &ModelSpec, params: &Vector, x: &[f64]) -> Result<Vec<f64>> {
    spec.check_params(params)?;
    if x.len() != spec.features() {
        return Err(Error::DimMismatch {
            expected: spec.features(),
            actual: x.len(),
        });
    }
    let p = params.as_slice();
    Ok(match *spec {
        ModelSpec::Softmax { classes, features, .. } => {
            let (w, b) = p.split_at(classes * features);
            let mut z = vec![0.0; classes];
            affine(w, b, x, &mut z);
            z
        }
        ModelSpec::Linear2D { .. } => vec![0.0, p[0] * x[0] + p[1] * x[1] + p[2]],
        ModelSpec::Mlp { features, hidden, classes, .. } => {
            let (w1, rest) = p.split_at(hidden * features);
            let (b1, rest) = rest.split_at(hidden);
            let (w2, b2) = rest.split_at(classes * hidden);
            let mut h = vec![0.0; hidden];
            affine(w1, b1, x, &mut h);
            for v in h.iter_mut() {
                *v = v.max(0.0);
            }
            let mut z = vec![0.0; classes];
            affine(w2, b2, &h, &mut z);
            z
        }
    })
}

/// Mean cross-entropy over `batch` plus the L2 penalty, and its gradient.
pub fn loss_and_grad(spec: &ModelSpec, params: &Vector, data: &Dataset, batch: &Batch) -> Result<(f64, Vector)> {
    spec.check_params(params)?;
    spec.check_data(data)?;
    if batch.is_empty() {
        return Err(Error::InvalidModel("empty batch".into()));
    }
    let k = spec.classes();
    let p = params.as_slice();
    let mut grad = vec![0.0; p.len()];
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    let mut probs = vec![0.0; k];

    for &row in batch.indices() {
        let x = data.row(row);
        let y = data.label(row);
        if y >= k {
            return Err(Error::LabelOutOfRange { label: y, classes: k });
        }
        match *spec {
            ModelSpec::Softmax { classes, features, .. } => {
                let (w, b) = p.split_at(classes * features);
                let mut z = vec![0.0; classes];
                affine(w, b, x, &mut z);
                total += softmax_into(&z, &mut probs) - z[y];
                probs[y] -= 1.0;
                let (gw, gb) = grad.split_at_mut(classes * features);
                outer_acc(gw, &probs, x, scale);
                for (g, d) in gb.iter_mut().zip(&probs) {
                    *g += scale * d;
                }
            }
            ModelSpec::Linear2D { .. } => {
                let z = [0.0, p[0] * x[0] + p[1] * x[1] + p[2]];
                total += softmax_into(&z, &mut probs) - z[y];
                let d = probs[1] - if y == 1 { 1.0 } else { 0.0 };
                grad[0] += scale * d * x[0];
                grad[1] += scale * d * x[1];
                grad[2] += scale * d;
            }
            ModelSpec::Mlp { features, hidden, classes, .. } => {
                let (w1, rest) = p.split_at(hidden * features);
                let (b1, rest) = rest.split_at(hidden);
                let (w2, b2) = rest.split_at(classes * hidden);
                let mut pre = vec![0.0; hidden];
                affine(w1, b1, x, &mut pre);
                let act: Vec<f64> = pre.iter().map(|v| v.max(0.0)).collect();
                let mut z = vec![0.0; classes];
                affine(w2, b2, &act, &mut z);
                total += softmax_into(&z, &mut probs) - z[y];
                probs[y] -= 1.0;

                // ReLU'(0) = 0
                let mut dpre = vec![0.0; hidden];
                for (j, dp) in dpre.iter_mut().enumerate() {
                    if pre[j] > 0.0 {
                        let mut acc = 0.0;
                        for c in 0..classes {
                            acc += w2[c * hidden + j] * probs[c];
                        }
                        *dp = acc;
                    }
                }
                let (gw1, rest) = grad.split_at_mut(hidden * features);
                let (gb1, rest) = rest.split_at_mut(hidden);
                let (gw2, gb2) = rest.split_at_mut(classes * hidden);
                outer_acc(gw1, &dpre, x, scale);
                for (g, d) in gb1.iter_mut().zip(&dpre) {
                    *g += scale * d;
                }
                outer_acc(gw2, &probs, &act, scale);
                for (g, d) in gb2.iter_mut().zip(&probs) {
                    *g += scale * d;
                }
            }
        }
    }

    let mut loss = total * scale;
    let l2 = spec.l2();
    if l2 > 0.0 {
        let mut offset = 0;
        let mut sq = 0.0;
        for s in spec.shapes() {
            if s.regularized {
                for i in offset..offset + s.len() {
                    sq += p[i] * p[i];
                    grad[i] += l2 * p[i];
                }
            }
            offset += s.len();
        }
        loss += 0.5 * l2 * sq;
    }
    Ok((loss, Vector::new(grad)?))
}

/// Loss over the whole dataset (single batch of every row, in order).
pub fn dataset_loss(spec: &ModelSpec, params: &Vector, data: &Dataset) -> Result<f64> {
    let batch = Batch::new((0..data.n()).collect());
    loss_and_grad(spec, params, data, &batch).map(|(l, _)| l)
}

/// Argmax of the logits; ties go to the lowest class index.
pub fn predict(spec: &ModelSpec, params: &Vector, x: &[f64]) -> Result<usize> {
    let z = logits(spec, params, x)?;
    let mut best = 0;
    for (c, &v) in z.iter().enumerate().skip(1) {
        if v > z[best] {
            best = c;
        }
    }
    Ok(best)
}

pub fn accuracy(spec: &ModelSpec, params: &Vector, data: &Dataset) -> Result<f64> {
    spec.check_data(data)?;
    let mut correct = 0usize;
    for i in 0..data.n() {
        if predict(spec, params, data.row(i))? == data.label(i) {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.n() as f64)
}

/// The line `w1·x + w2·y + b = 0` separating the two classes of a
/// [`ModelSpec::Linear2D`] model.
pub fn decision_boundary(spec: &ModelSpec, params: &Vector) -> Result<(f64, f64, f64)> {
    if !matches!(spec, ModelSpec::Linear2D { .. }) {
        return Err(Error::InvalidModel("decision boundary needs a Linear2D model".into()));
    }
    spec.check_params(params)?;
    let (w1, w2, b) = (params[0], params[1], params[2]);
    if w1 == 0.0 && w2 == 0.0 {
        return Err(Error::DegenerateBoundary);
    }
    Ok((w1, w2, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn ds(features: Vec<Vec<f64>>, labels: Vec<usize>, k: usize) -> Dataset {
        let d = features[0].len();
        Dataset::new(features.concat(), labels, d, k).unwrap()
    }

    #[test]
    fn zero_params_give_uniform_loss() {
        let spec = ModelSpec::Softmax { classes: 2, features: 1, l2: 0.0 };
        let data = ds(vec![vec![3.0], vec![-1.0]], vec![0, 1], 2);
        let (l, _) = loss_and_grad(&spec, &Vector::zeros(spec.num_params()), &data, &Batch::all(&data)).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);

        let spec = ModelSpec::Mlp { features: 3, hidden: 4, classes: 5, l2: 0.1 };
        let data = ds(vec![vec![1.0, 2.0, 3.0]], vec![4], 5);
        let (l, _) = loss_and_grad(&spec, &Vector::zeros(spec.num_params()), &data, &Batch::all(&data)).unwrap();
        assert!((l - 5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn predict_tie_breaks_low() {
        let spec = ModelSpec::Softmax { classes: 3, features: 2, l2: 0.0 };
        assert_eq!(predict(&spec, &Vector::zeros(spec.num_params()), &[0.0, 0.0]).unwrap(), 0);
        let lin = ModelSpec::Linear2D { l2: 0.0 };
        assert_eq!(predict(&lin, &Vector::new(vec![1.0, 0.0, 0.0]).unwrap(), &[0.0, 5.0]).unwrap(), 0);
    }

    #[test]
    fn separable_pair_is_classified() {
        let spec = ModelSpec::Linear2D { l2: 0.0 };
        let data = ds(vec![vec![-1.0, 0.0], vec![1.0, 0.0]], vec![0, 1], 2);
        let params = Vector::new(vec![2.0, 0.0, 0.0]).unwrap();
        assert_eq!(accuracy(&spec, &params, &data).unwrap(), 1.0);
    }

    #[test]
    fn boundary_examples() {
        let spec = ModelSpec::Linear2D { l2: 0.0 };
        let v = |d: &[f64]| Vector::new(d.to_vec()).unwrap();
        assert_eq!(decision_boundary(&spec, &v(&[1.0, 0.0, 0.0])).unwrap(), (1.0, 0.0, 0.0));
        let (w1, w2, b) = decision_boundary(&spec, &v(&[0.0, 1.0, -0.5])).unwrap();
        assert_eq!((w1, -b / w2), (0.0, 0.5));
        assert!(matches!(
            decision_boundary(&spec, &v(&[0.0, 0.0, 1.0])),
            Err(Error::DegenerateBoundary)
        ));
    }

    #[test]
    fn scaling_keeps_partition() {
        let spec = ModelSpec::Linear2D { l2: 0.0 };
        let mut r = rng::stream(11, 0);
        let p = spec.init_params(&mut r);
        let scaled = p.map(|x| 7.5 * x);
        for _ in 0..500 {
            let x = [r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)];
            assert_eq!(predict(&spec, &p, &x).unwrap(), predict(&spec, &scaled, &x).unwrap());
        }
    }

    #[test]
    fn random_labels_give_chance_accuracy() {
        let (k, n, d) = (4, 10_000, 3);
        let spec = ModelSpec::Softmax { classes: k, features: d, l2: 0.0 };
        let mut r = rng::stream(5, 0);
        let features: Vec<f64> = (0..n * d).map(|_| r.gen_range(-1.0..1.0)).collect();
        let labels: Vec<usize> = (0..n).map(|_| r.gen_range(0..k)).collect();
        let data = Dataset::new(features, labels, d, k).unwrap();
        let acc = accuracy(&spec, &spec.init_params(&mut r), &data).unwrap();
        assert!((acc - 0.25).abs() <= 0.05, "{acc}");
    }

    #[test]
    fn l2_skips_biases() {
        let spec = ModelSpec::Softmax { classes: 2, features: 1, l2: 2.0 };
        let data = ds(vec![vec![0.0]], vec![0], 2);
        // weights zero, biases large: penalty must stay zero
        let p = Vector::new(vec![0.0, 0.0, 5.0, 5.0]).unwrap();
        let (l, g) = loss_and_grad(&spec, &p, &data, &Batch::all(&data)).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-12);
        assert_eq!(g[0], 0.0);
        let p = Vector::new(vec![1.0, -1.0, 0.0, 0.0]).unwrap();
        let (l, g) = loss_and_grad(&spec, &p, &data, &Batch::all(&data)).unwrap();
        assert!((l - (2f64.ln() + 2.0)).abs() < 1e-12);
        assert_eq!((g[0], g[1]), (2.0, -2.0));
    }

    #[test]
    fn param_blocks_roundtrip() {
        let spec = ModelSpec::Mlp { features: 3, hidden: 2, classes: 2, l2: 0.0 };
        let mut r = rng::stream(1, 0);
        let flat = spec.init_params(&mut r);
        let pv = ParamVector::new(&spec, flat.clone()).unwrap();
        assert_eq!(pv.block("w1").unwrap().len(), 6);
        assert!(pv.block("b1").unwrap().iter().all(|&b| b == 0.0));
        let blocks: Vec<Vec<f64>> = pv.blocks().into_iter().map(<[f64]>::to_vec).collect();
        assert_eq!(ParamVector::from_blocks(&spec, &blocks).unwrap().flat, flat);
        assert!(ParamVector::new(&spec, Vector::zeros(3)).is_err());
    }

    /// Central differences, step 1e-5, written independently of the
    /// analytic path.
    fn fd_grad(spec: &ModelSpec, p: &Vector, data: &Dataset, batch: &Batch) -> Vec<f64> {
        let h = 1e-5;
        (0..p.dim())
            .map(|i| {
                let mut up = p.clone();
                let mut dn = p.clone();
                up.as_mut_slice()[i] += h;
                dn.as_mut_slice()[i] -= h;
                let (lu, _) = loss_and_grad(spec, &up, data, batch).unwrap();
                let (ld, _) = loss_and_grad(spec, &dn, data, batch).unwrap();
                (lu - ld) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn small_softmax_gradient_matches_finite_differences() {
        let spec = ModelSpec::Softmax { classes: 3, features: 3, l2: 0.1 };
        let mut r = rng::stream(42, 0);
        let features: Vec<f64> = (0..12).map(|_| r.gen_range(-1.0..1.0)).collect();
        let labels: Vec<usize> = (0..4).map(|_| r.gen_range(0..3)).collect();
        let data = Dataset::new(features, labels, 3, 3).unwrap();
        let p = Vector::new((0..12).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap();
        let batch = Batch::all(&data);
        let (_, g) = loss_and_grad(&spec, &p, &data, &batch).unwrap();
        let fd = fd_grad(&spec, &p, &data, &batch);
        for i in 0..g.dim() {
            let rel = (g[i] - fd[i]).abs() / g[i].abs().max(1e-8);
            assert!(rel <= 1e-5 || (g[i] - fd[i]).abs() <= 1e-9, "{i}: {} vs {}", g[i], fd[i]);
        }
    }

    #[test]
    fn batch_order_does_not_matter() {
        let spec = ModelSpec::Mlp { features: 4, hidden: 5, classes: 3, l2: 0.01 };
        let mut r = rng::stream(8, 0);
        let features: Vec<f64> = (0..40).map(|_| r.gen_range(-1.0..1.0)).collect();
        let labels: Vec<usize> = (0..10).map(|_| r.gen_range(0..3)).collect();
        let data = Dataset::new(features, labels, 4, 3).unwrap();
        let p = spec.init_params(&mut r);
        let fwd: Vec<usize> = (0..10).collect();
        let rev: Vec<usize> = (0..10).rev().collect();
        let (la, ga) = loss_and_grad(&spec, &p, &data, &Batch::new(fwd)).unwrap();
        let (lb, gb) = loss_and_grad(&spec, &p, &data, &Batch::new(rev)).unwrap();
        assert!((la - lb).abs() <= 1e-12);
        for i in 0..ga.dim() {
            assert!((ga[i] - gb[i]).abs() <= 1e-12);
        }
    }

    #[test]
    fn errors() {
        let spec = ModelSpec::Softmax { classes: 2, features: 2, l2: 0.0 };
        let data = ds(vec![vec![1.0, 1.0]], vec![1], 2);
        let bad = ds(vec![vec![1.0]], vec![0], 2);
        let p = Vector::zeros(spec.num_params());
        assert!(matches!(loss_and_grad(&spec, &p, &bad, &Batch::all(&bad)), Err(Error::DimMismatch { .. })));
        assert!(loss_and_grad(&spec, &p, &data, &Batch::new(vec![])).is_err());
        let three = Dataset::new(vec![1.0, 1.0], vec![2], 2, 3).unwrap();
        assert!(matches!(
            loss_and_grad(&spec, &p, &three, &Batch::all(&three)),
            Err(Error::LabelOutOfRange { label: 2, classes: 2 })
        ));
    }
}
