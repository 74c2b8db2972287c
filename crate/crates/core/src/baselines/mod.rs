//! Reference estimators: confusion-matrix inversion for label shift,
//! kernel density-ratio fitting and a source-versus-target classifier for
//! covariate shift.

pub mod bbse;
pub mod dlu;
pub mod kliep;

pub use bbse::{run_bbse, BbseFit};
pub use dlu::{run_dlu, DiscriminativeWeights, DluFit};
pub use kliep::{run_kliep, KernelWeights, KliepConfig, KliepFit};
