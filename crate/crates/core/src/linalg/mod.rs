//! Complex dense linear algebra, seeded randomness, and the SVD oracle.

pub mod matrix;
pub mod random;
pub mod svd;

pub use matrix::{inner, matmul, vec_norm, ComplexMatrix};
pub use random::{complex_gaussian, ginibre, haar_unitary, SeededRng};
pub use svd::{svd_oracle, svd_oracle_capped, SvdResult, DEFAULT_MAX_SWEEPS, DEFAULT_RANK_EPSILON};
