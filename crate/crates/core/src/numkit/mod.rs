//! Dense linear algebra and distribution utilities.
//!
//! All operations are pure functions of immutable inputs; nothing here keeps
//! internal mutable state, so values can be shared freely across threads.

pub mod dist;
pub mod eigen;
pub mod matrix;
pub mod qr;
pub mod tsls;

pub use dist::{
    chi_square_cdf, chi_square_quantile, normal_cdf, normal_pdf, normal_quantile, student_t_cdf,
    student_t_two_sided_p,
};
pub use eigen::{cholesky, cholesky_solve, inv_sqrt_psd, sym_eigen};
pub use matrix::{check_finite, dot, max_abs, mean, norm2, Matrix};
pub use qr::{ols, ols_detail, OlsDetail, QrPivot, RANK_TOL};
pub use tsls::{tsls, TslsFit};

/// Vectors are plain `Vec<f64>`; invariants (finite entries) are checked at
/// module boundaries via [`check_finite`].
pub type Vector = Vec<f64>;
