//! The guide's chapters as doc modules, so `cargo test` runs every listing.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/accuracy-under-shift.md")]
pub mod accuracy_under_shift {}
#[doc = include_str!("../../../book/src/sparse-joint-shift.md")]
pub mod sparse_joint_shift {}
#[doc = include_str!("../../../book/src/subset-search.md")]
pub mod subset_search {}
#[doc = include_str!("../../../book/src/basis-weights.md")]
pub mod basis_weights {}
#[doc = include_str!("../../../book/src/baselines.md")]
pub mod baselines {}
#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}
#[doc = include_str!("../../../book/src/command-line.md")]
pub mod command_line {}
#[doc = include_str!("../../../README.md")]
pub mod readme {}
