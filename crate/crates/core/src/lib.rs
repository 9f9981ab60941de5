//! Adaptive first-order optimizers (Adam, AMSGrad, C-Adam, C-Adam_V2) with
//! runtime checks of their convergence invariants, plus the models, data
//! and harness needed to run small reproducible experiments.

// `!(x < y)` is how this crate rejects NaN alongside out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod models;
pub mod oco;
pub mod optim;
pub mod projection;
pub mod rng;
pub mod vecmath;

pub use error::{Error, Result};
pub use optim::{Hyperparams, Optimizer, OptimizerState, Variant};
pub use projection::{project, FeasibleBox};
pub use vecmath::Vector;
