//! Weighted projection onto box-shaped feasible sets.
//!
//! For a diagonal weight matrix `A` the objective `‖A^{1/2}(x - y)‖²` is a sum
//! of independent one-dimensional terms, so the argmin over a box is the
//! coordinatewise clamp regardless of the (positive) weights. Zero weights
//! make the minimizer non-unique on that coordinate; the clamp is returned
//! anyway.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vecmath::Vector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeasibleBox {
    Bounded { lower: Vector, upper: Vector },
    Unbounded { dim: usize },
}

impl FeasibleBox {
    pub fn new(lower: Vector, upper: Vector) -> Result<Self> {
        lower.ensure_same_dim(&upper)?;
        for i in 0..lower.dim() {
            let (lo, hi) = (lower[i], upper[i]);
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidBox {
                    index: i,
                    lower: lo,
                    upper: hi,
                });
            }
        }
        Ok(FeasibleBox::Bounded { lower, upper })
    }

    /// `[lo, hi]^dim`.
    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::EmptyVector);
        }
        Self::new(Vector::filled(dim, lo), Vector::filled(dim, hi))
    }

    pub fn unbounded(dim: usize) -> Self {
        FeasibleBox::Unbounded { dim }
    }

    pub fn dim(&self) -> usize {
        match self {
            FeasibleBox::Bounded { lower, .. } => lower.dim(),
            FeasibleBox::Unbounded { dim } => *dim,
        }
    }

    pub fn is_bounded(&self) -> bool {
        matches!(self, FeasibleBox::Bounded { .. })
    }

    pub fn ensure_dim(&self, dim: usize) -> Result<()> {
        if self.dim() != dim {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                actual: dim,
            });
        }
        Ok(())
    }

    /// `Ω∞ = max_i (upper_i - lower_i)`; infinite for an unbounded set.
    pub fn diameter_inf(&self) -> f64 {
        match self {
            FeasibleBox::Bounded { lower, upper } => lower
                .iter()
                .zip(upper)
                .fold(0.0, |acc: f64, (lo, hi)| acc.max(hi - lo)),
            FeasibleBox::Unbounded { .. } => f64::INFINITY,
        }
    }

    pub fn contains(&self, x: &Vector) -> bool {
        match self {
            FeasibleBox::Bounded { lower, upper } => {
                x.dim() == lower.dim()
                    && (0..x.dim()).all(|i| lower[i] <= x[i] && x[i] <= upper[i])
            }
            FeasibleBox::Unbounded { dim } => x.dim() == *dim,
        }
    }
}

/// `Π_{Ω,A}(y) = argmin_{x∈Ω} ‖A^{1/2}(x - y)‖` with `A = diag(weights)`.
pub fn project(y: &Vector, weights: &Vector, domain: &FeasibleBox) -> Result<Vector> {
    y.ensure_same_dim(weights)?;
    domain.ensure_dim(y.dim())?;
    if let Some((index, &value)) = weights.iter().enumerate().find(|(_, w)| !(**w >= 0.0)) {
        return Err(Error::NegativeWeight { index, value });
    }
    match domain {
        FeasibleBox::Unbounded { .. } => Ok(y.clone()),
        FeasibleBox::Bounded { lower, upper } => {
            let mut out = y.clone();
            for (i, x) in out.as_mut_slice().iter_mut().enumerate() {
                *x = x.clamp(lower[i], upper[i]);
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(data: &[f64]) -> Vector {
        Vector::new(data.to_vec()).unwrap()
    }

    /// Exhaustive grid search for the weighted argmin, independent of clamping.
    fn grid_argmin(y: &[f64], w: &[f64], lo: f64, hi: f64, step: f64) -> Vec<f64> {
        let n = ((hi - lo) / step).round() as usize;
        let grid: Vec<f64> = (0..=n).map(|k| lo + k as f64 * step).collect();
        let d = y.len();
        let mut best = vec![0.0; d];
        let mut best_val = f64::INFINITY;
        let mut idx = vec![0usize; d];
        loop {
            let x: Vec<f64> = idx.iter().map(|&k| grid[k]).collect();
            let val: f64 = (0..d).map(|i| w[i] * (x[i] - y[i]).powi(2)).sum();
            if val < best_val {
                best_val = val;
                best = x;
            }
            let mut carry = 0;
            while carry < d {
                idx[carry] += 1;
                if idx[carry] <= n {
                    break;
                }
                idx[carry] = 0;
                carry += 1;
            }
            if carry == d {
                return best;
            }
        }
    }

    #[test]
    fn clamps_to_bounds() {
        let b = FeasibleBox::uniform(1, -1.0, 1.0).unwrap();
        assert_eq!(project(&v(&[1.7]), &v(&[0.3]), &b).unwrap(), v(&[1.0]));
        assert_eq!(project(&v(&[0.2]), &v(&[5.0]), &b).unwrap(), v(&[0.2]));
    }

    #[test]
    fn three_dim_example_matches_grid_oracle() {
        let b = FeasibleBox::uniform(3, -1.0, 1.0).unwrap();
        let y = [-3.0, 0.5, 2.0];
        let w = [1.0, 2.0, 3.0];
        let p = project(&v(&y), &v(&w), &b).unwrap();
        assert_eq!(p, v(&[-1.0, 0.5, 1.0]));
        // coarse per-axis grid keeps the 3-D enumeration small; 0.5 lies on it.
        let oracle = grid_argmin(&y, &w, -1.0, 1.0, 1e-2);
        for i in 0..3 {
            assert!((oracle[i] - p[i]).abs() <= 1e-2);
        }
    }

    #[test]
    fn unbounded_is_identity() {
        let b = FeasibleBox::unbounded(2);
        assert_eq!(project(&v(&[1e9, -3.0]), &v(&[1.0, 1.0]), &b).unwrap(), v(&[1e9, -3.0]));
        assert!(b.diameter_inf().is_infinite());
    }

    #[test]
    fn zero_weight_still_clamps() {
        let b = FeasibleBox::uniform(2, 0.0, 1.0).unwrap();
        assert_eq!(project(&v(&[2.0, -1.0]), &v(&[0.0, 0.0]), &b).unwrap(), v(&[1.0, 0.0]));
    }

    #[test]
    fn errors() {
        let b = FeasibleBox::uniform(2, -1.0, 1.0).unwrap();
        assert!(matches!(
            project(&v(&[0.0, 0.0]), &v(&[1.0, -1.0]), &b),
            Err(Error::NegativeWeight { index: 1, .. })
        ));
        assert!(matches!(
            project(&v(&[0.0]), &v(&[1.0]), &b),
            Err(Error::DimMismatch { .. })
        ));
        assert!(FeasibleBox::new(v(&[1.0]), v(&[0.0])).is_err());
        assert!(FeasibleBox::new(v(&[f64::NEG_INFINITY]), v(&[0.0])).is_err());
    }

    #[test]
    fn diameter() {
        let b = FeasibleBox::new(v(&[-1.0, 0.0]), v(&[1.0, 0.5])).unwrap();
        assert_eq!(b.diameter_inf(), 2.0);
    }

    proptest! {
        #[test]
        fn idempotent_contained_and_weight_free(
            y in prop::collection::vec(-10.0f64..10.0, 1..6),
            w_seed in prop::collection::vec(0.01f64..100.0, 6),
            lo in -2.0f64..0.0,
            width in 0.0f64..3.0,
        ) {
            let d = y.len();
            let b = FeasibleBox::uniform(d, lo, lo + width).unwrap();
            let y = v(&y);
            let w = v(&w_seed[..d]);
            let p = project(&y, &w, &b).unwrap();
            prop_assert!(b.contains(&p));
            prop_assert_eq!(&project(&p, &w, &b).unwrap(), &p);
            prop_assert_eq!(&project(&y, &Vector::filled(d, 1.0), &b).unwrap(), &p);
        }

        #[test]
        fn agrees_with_grid_oracle(
            y in prop::collection::vec(-2.0f64..2.0, 1..=2),
            w in prop::collection::vec(0.1f64..10.0, 2),
        ) {
            let d = y.len();
            let step = 1e-2;
            let b = FeasibleBox::uniform(d, -1.0, 1.0).unwrap();
            let p = project(&v(&y), &v(&w[..d]), &b).unwrap();
            let oracle = grid_argmin(&y, &w[..d], -1.0, 1.0, step);
            for i in 0..d {
                prop_assert!((oracle[i] - p[i]).abs() <= step);
            }
        }
    }
}
