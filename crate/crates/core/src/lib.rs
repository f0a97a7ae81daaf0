//! Shrinking-target sets on iterated function systems.
//!
//! The crate covers exact similarity systems and conformal systems given by
//! derivative bounds: pressure and Hausdorff dimension, the zero/full measure
//! dichotomy for shrinking targets, the mass-distribution construction behind
//! the divergence case, explicit counterexamples for inhomogeneous ratios, and
//! the continued-fraction system of badly approximable numbers.

pub mod cf_bad;
pub mod construction;
pub mod counterexample;
pub mod dichotomy;
pub mod ifs;
pub mod interval;
pub mod psi;
pub mod rational;
pub mod report;
pub mod symbolic;
pub mod thermo;

pub use ifs::{IfsSpec, Symbol};
pub use interval::Interval;
pub use psi::ApproxFn;
pub use symbolic::{RhoTable, SymbolStream};
