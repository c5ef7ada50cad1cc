//! Dense linear-algebra kernels: the matrix type, column-pivoted QR,
//! triangular solves, and a Jacobi eigensolver used for norms.

mod dense;
mod eig;
mod qr;

pub use dense::DenseMatrix;
pub use eig::{norms, singular_values, spectral_norm, sym_eig_max, sym_eigenvalues, Norms};
pub use qr::{
    mgsqr, mgsqr_with, solve_upper_triangular, OnCollapse, QrFactorization, RankRule,
    COLLAPSE_RATIO, ZERO_COLUMN_NORM,
};
