//! Dense real linear algebra: vectors, matrices, SPD solves, symmetric
//! eigenvalues and matrix-free conjugate gradient.

mod cg;
mod linalg;
mod matrix;
mod scalar;
mod vector;

pub use cg::{conjugate_gradient, BREAKDOWN_RATIO};
pub use linalg::{spd_solve, spd_solve_vec, spectral_norm, sym_eigenvalues, sym_spectral_norm, Cholesky};
pub use matrix::DMatrix;
pub use scalar::Real;
pub use vector::DVector;
