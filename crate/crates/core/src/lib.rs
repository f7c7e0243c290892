//! Numerical laboratory for noncommutative dyadic harmonic analysis.
//!
//! Matrix-valued fields live on a dyadic grid of `[0,1)^d` (`d = 1, 2`). The
//! crate provides the Hermitian functional calculus ([`spectral`]), dyadic
//! conditional expectations and ball averages ([`dyadic`]), the averaging
//! transforms `T` and `D` ([`transforms`]), Cuculescu projections with the
//! Calderon-Zygmund decomposition ([`czd`]), and a measurement harness for
//! the associated inequalities ([`verify`]).

pub mod czd;
pub mod dyadic;
pub mod error;
pub mod spectral;
pub mod transforms;
pub mod verify;

pub use error::{Error, Result};
