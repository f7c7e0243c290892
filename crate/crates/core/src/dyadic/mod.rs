//! Matrix-valued fields on dyadic grids of the unit cube or torus.

mod averages;
mod field;
mod grid;
pub mod io;
mod norms;
pub mod stencil;

pub use averages::{
    annulus_offsets, ball_average, ball_count, cond_expectation, martingale_difference,
    tilde_average, truncated_average,
};
pub use field::MatrixField;
pub use grid::{Boundary, DyadicCube, DyadicGrid, MAX_LEVEL};
pub use norms::{field_distribution, field_lp_norm, field_weak_l1, inner, l2_norm, tensor_trace};
