//! Numerical laboratory for GCD sums and dilated function series.
//!
//! The squared L² norm of Σ c_k f_α(n_k x) equals ζ(2α)/2 times the GCD quadratic
//! form Σ c_k c_l gcd(n_k, n_l)^{2α} / (n_k n_l)^α. This crate evaluates both sides
//! independently, studies the spectra of the underlying matrices, builds the block
//! constructions that make such sums large, and simulates the pointwise behavior.

pub mod dilated_series;
pub mod error;
pub mod extremal;
pub mod gcd_spectra;
pub mod numtheory;
pub mod quadrature;
pub mod simulate;
pub mod special_functions;
pub mod summation;
mod types;

pub use error::{Error, Result};
pub use types::{Alpha, CoefficientSequence, DilationSequence, NormEnclosure, NormMethod};
