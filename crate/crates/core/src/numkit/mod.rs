//! Numerical kernels: dense matrices, seedable sampling, least squares,
//! rank correlation and a finite-difference gradient oracle.

pub mod gradcheck;
pub mod lstsq;
pub mod matrix;
pub mod rng;
pub mod stats;

pub use gradcheck::{finite_diff_gradient, max_relative_error};
pub use lstsq::{
    solve_least_squares, solve_least_squares_with, HouseholderQr, LinearModel, RidgeOptions,
    DEFAULT_RIDGE_LAMBDA,
};
pub use matrix::{mat_mul, Matrix};
pub use rng::{derive_seed, random_gaussian, random_orthonormal, random_uniform, RngStream};
pub use stats::{mid_ranks, pearson, spearman};
