//! Viscosity finite volume solver for the two-dimensional isentropic Euler
//! system on periodic boxes, with a Monte Carlo harness for statistical and
//! Cesàro-averaged convergence studies.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod config;
pub mod fields;
pub mod grid;
pub mod io;
pub mod linsolve;
pub mod montecarlo;
pub mod scheme;

pub use config::RunConfig;
pub use fields::{FieldSet, GasParams, KhDataSpec};
pub use grid::Grid;
pub use montecarlo::{SamplePlan, Study};
pub use scheme::{SchemeParams, TimeStep};
