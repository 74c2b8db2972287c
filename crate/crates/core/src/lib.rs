//! Estimate how a classifier's accuracy changes between a labeled source
//! sample and an unlabeled target sample, and name the few features whose
//! joint distribution with the label moved.
//!
//! The target accuracy is `E_Q[1{f = y}] = E_P[w(x, y) 1{f = y}]` for the
//! importance weight `w = q / p`. Without target labels `w` is not
//! identifiable in general, but it is when the shift is *sparse*: only the
//! label and at most `s` features change jointly while the remaining
//! features keep their conditional distribution given those. Then `w`
//! depends on `(x_I, y)` alone for a small index set `I`, and it can be
//! fit by matching low-dimensional target marginals.
//!
//! Two estimators exploit this:
//!
//! * [`sees_d`] searches index sets of size `s` over discrete features and
//!   fits a weight table per set by bounded least squares;
//! * [`sees_c`] fits nonnegative basis-expansion weights by penalized
//!   likelihood, with a group penalty that switches whole features off.
//!
//! [`baselines`] holds the usual label-shift and covariate-shift
//! estimators for comparison, [`synth`] generates shifts with known
//! weights, and [`estimator`] turns weights into an accuracy change.

// `!(x > 0.0)` style checks are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod basis;
pub mod bench;
pub mod boxqp;
pub mod cli;
pub mod data;
pub mod discretize;
pub mod error;
pub mod estimator;
pub mod io;
pub mod optim;
pub mod pipeline;
pub mod predictor;
pub mod report;
pub mod sees_c;
pub mod sees_d;
pub mod synth;
pub mod tabulate;
pub mod weights;

pub use data::{Column, ColumnKind, FeatureSchema, TabularDataset};
pub use error::{Error, Result};
pub use estimator::{estimate_gap, select_features, GroundTruth, Loss};
pub use report::{Method, ShiftReport};
pub use tabulate::{Axis, EmpiricalPmf, MarginalSource};
pub use weights::{TableWeights, WeightFunction};
