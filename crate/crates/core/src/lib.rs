//! Elliptic curves over Q, prime partitions, Selmer-structure bookkeeping,
//! L-value certificates and quadratic tower certificates.

pub mod analytic;
mod decstr;
pub mod extbuilder;
pub mod linalg;
pub mod selmerlat;
pub mod ellcurve;
pub mod membership;
pub mod nt;
pub mod polyfp;
pub mod primeclass;
pub mod towers;

pub use ellcurve::{CurveError, CurveOverQ, CurveRecord};
