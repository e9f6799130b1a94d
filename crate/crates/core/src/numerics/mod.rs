//! Dense linear algebra, seeded randomness and the finite-difference checker.

mod gradcheck;
mod matrix;
mod rng;

pub use gradcheck::{finite_diff_grad, relative_error};
pub use matrix::{dot, row_l2_normalize, row_l2_normalize_backward, Matrix, NORM_EPS};
pub use rng::Rng;
