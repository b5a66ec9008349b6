//! The guide's chapters, compiled so that `cargo test --doc` runs every
//! snippet against the current library.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/corruption.md")]
pub mod corruption {}
#[doc = include_str!("../../../book/src/mtf.md")]
pub mod mtf {}
#[doc = include_str!("../../../book/src/estimation.md")]
pub mod estimation {}
#[doc = include_str!("../../../book/src/metrics.md")]
pub mod metrics {}
#[doc = include_str!("../../../book/src/division.md")]
pub mod division {}
#[doc = include_str!("../../../book/src/performance-curves.md")]
pub mod performance_curves {}
#[doc = include_str!("../../../book/src/control.md")]
pub mod control {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
#[doc = include_str!("../../../README.md")]
pub mod readme {}
