//! Orthogonalization constructors for likelihood and GMM moment systems,
//! plus a finite-difference verifier for the orthogonality property.
//!
//! Given the Jacobian of a stacked score in a target block and a nuisance
//! block, these build the projection coefficient that makes the corrected
//! score insensitive (to first order) to nuisance perturbations.

use crate::error::{Error, Result};
use crate::numkit::matrix::Matrix;
use crate::numkit::{cholesky, cholesky_solve, QrPivot};

/// Block decomposition of a (d + p0) square Jacobian.
#[derive(Debug, Clone)]
pub struct PartitionedJacobian {
    pub j_aa: Matrix,
    pub j_ab: Matrix,
    pub j_ba: Matrix,
    pub j_bb: Matrix,
}

impl PartitionedJacobian {
    pub fn new(j_aa: Matrix, j_ab: Matrix, j_ba: Matrix, j_bb: Matrix) -> Result<Self> {
        let d = j_aa.rows();
        let p0 = j_bb.rows();
        if j_aa.cols() != d
            || j_bb.cols() != p0
            || j_ab.rows() != d
            || j_ab.cols() != p0
            || j_ba.rows() != p0
            || j_ba.cols() != d
        {
            return Err(Error::Dimension("partitioned Jacobian block shapes".into()));
        }
        Ok(PartitionedJacobian {
            j_aa,
            j_ab,
            j_ba,
            j_bb,
        })
    }

    /// Builds the outer-product (information-style) partition from score
    /// observations: rows of `s_alpha` (n x d) and `s_beta` (n x p0).
    pub fn from_scores(s_alpha: &Matrix, s_beta: &Matrix) -> Result<Self> {
        if s_alpha.rows() != s_beta.rows() {
            return Err(Error::Dimension("score row counts".into()));
        }
        let n = s_alpha.rows() as f64;
        let cross = |a: &Matrix, b: &Matrix| {
            let mut m = a.transpose().matmul(b);
            for i in 0..m.rows() {
                for j in 0..m.cols() {
                    m.set(i, j, m.get(i, j) / n);
                }
            }
            m
        };
        PartitionedJacobian::new(
            cross(s_alpha, s_alpha),
            cross(s_alpha, s_beta),
            cross(s_beta, s_alpha),
            cross(s_beta, s_beta),
        )
    }
}

/// Solves `mu J_bb = J_ab` for the d x p0 orthogonalization matrix.
fn solve_right(j_ab: &Matrix, j_bb: &Matrix, context: &str) -> Result<Matrix> {
    let d = j_ab.rows();
    let p0 = j_bb.rows();
    if p0 == 0 {
        return Ok(Matrix::zeros(d, 0));
    }
    // mu J_bb = J_ab  <=>  J_bb' mu' = J_ab'.
    let qr = QrPivot::factor(&j_bb.transpose());
    let mut mu = Matrix::zeros(d, p0);
    for r in 0..d {
        let rhs = j_ab.row(r).to_vec();
        let row = qr
            .least_squares(&rhs, context)
            .map_err(|e| Error::Singular(format!("{context}: {e}")))?;
        for c in 0..p0 {
            mu.set(r, c, row[c]);
        }
    }
    Ok(mu)
}

/// Orthogonalization matrix `mu0 = J_ab J_bb^{-1}` for likelihood scores.
pub fn likelihood_mu0(j: &PartitionedJacobian) -> Result<Matrix> {
    solve_right(&j.j_ab, &j.j_bb, "likelihood nuisance block")
}

/// Projection coefficient `mu0* = J0_ab (J0_bb)^{-1}` computed from an
/// outer-product (information-matrix) partition; the residual score
/// `s_alpha - mu0* s_beta` is then empirically uncorrelated with `s_beta`.
pub fn projection_mu0star(j0: &PartitionedJacobian) -> Result<Matrix> {
    solve_right(&j0.j_ab, &j0.j_bb, "projection nuisance block")
}

/// Moment geometry for GMM orthogonalization: Jacobian blocks for the target
/// and nuisance directions and the moment variance.
#[derive(Debug, Clone)]
pub struct GmmGeometry {
    pub g_alpha: Matrix,
    pub g_beta: Matrix,
    pub omega_m: Matrix,
}

impl GmmGeometry {
    pub fn new(g_alpha: Matrix, g_beta: Matrix, omega_m: Matrix) -> Result<Self> {
        let k = g_alpha.rows();
        let d = g_alpha.cols();
        let p0 = g_beta.cols();
        if g_beta.rows() != k || omega_m.rows() != k || omega_m.cols() != k {
            return Err(Error::Dimension("gmm geometry shapes".into()));
        }
        if k < d + p0 {
            return Err(Error::Dimension(format!(
                "gmm geometry needs k >= d + p0, got k={k}, d={d}, p0={p0}"
            )));
        }
        Ok(GmmGeometry {
            g_alpha,
            g_beta,
            omega_m,
        })
    }
}

/// Optimal GMM orthogonalization matrix
/// `mu0 = G_a' W - G_a' W G_b (G_b' W G_b)^{-1} G_b' W` with `W = Omega^{-1}`;
/// by construction `mu0 G_b = 0`.
pub fn gmm_mu0(g: &GmmGeometry) -> Result<Matrix> {
    let k = g.g_alpha.rows();
    let d = g.g_alpha.cols();
    let p0 = g.g_beta.cols();
    let chol = cholesky(&g.omega_m)
        .map_err(|e| Error::Singular(format!("gmm moment variance: {e}")))?;

    // A = Omega^{-1} G_alpha, B = Omega^{-1} G_beta.
    let solve_cols = |m: &Matrix| -> Matrix {
        let cols: Vec<Vec<f64>> = (0..m.cols())
            .map(|j| cholesky_solve(&chol, &m.col(j)))
            .collect();
        if cols.is_empty() {
            Matrix::zeros(k, 0)
        } else {
            Matrix::from_columns(&cols).expect("consistent solve")
        }
    };
    let a = solve_cols(&g.g_alpha);
    let at = a.transpose(); // d x k = G_a' Omega^{-1}
    if p0 == 0 {
        return Ok(at);
    }
    let b = solve_cols(&g.g_beta);
    let inner = g.g_beta.transpose().matmul(&b); // G_b' Omega^{-1} G_b, p0 x p0
    let at_gb = at.matmul(&g.g_beta); // d x p0

    // Solve (inner) X = B' row-system: mu0 = A' - (A'G_b) inner^{-1} B'.
    // Prefer Cholesky on the symmetric PD inner block; fall back to pivoted
    // QR when it is numerically indefinite.
    let bt = b.transpose(); // p0 x k
    let correction = match cholesky(&inner) {
        Ok(l) => {
            let rows: Vec<Vec<f64>> = (0..d)
                .map(|r| {
                    let w = cholesky_solve(&l, at_gb.row(r));
                    bt.t_matvec(&w)
                })
                .collect();
            Matrix::from_rows(&rows)?
        }
        Err(_) => {
            let qr = QrPivot::factor(&inner.transpose());
            let rows: Vec<Vec<f64>> = (0..d)
                .map(|r| {
                    qr.least_squares(at_gb.row(r), "gmm inner block (cholesky fallback)")
                        .map(|w| bt.t_matvec(&w))
                })
                .collect::<Result<_>>()?;
            Matrix::from_rows(&rows)?
        }
    };
    let mut mu = Matrix::zeros(d, k);
    for i in 0..d {
        for j in 0..k {
            mu.set(i, j, at.get(i, j) - correction.get(i, j));
        }
    }
    Ok(mu)
}

/// Max-norm of the central finite-difference derivative of `moment_fn` in
/// every nuisance coordinate at `(alpha0, eta0)`. The step in coordinate j is
/// `h * max(1, |eta0_j|)`.
pub fn orthogonality_check(
    moment_fn: &dyn Fn(&[f64], &[f64]) -> Vec<f64>,
    alpha0: &[f64],
    eta0: &[f64],
    h: f64,
) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::Config(format!("finite-difference step {h} not positive")));
    }
    let mut max_deriv = 0.0_f64;
    let mut eta = eta0.to_vec();
    for j in 0..eta0.len() {
        let hj = h * eta0[j].abs().max(1.0);
        eta[j] = eta0[j] + hj;
        let plus = moment_fn(alpha0, &eta);
        eta[j] = eta0[j] - hj;
        let minus = moment_fn(alpha0, &eta);
        eta[j] = eta0[j];
        if plus.len() != minus.len() {
            return Err(Error::Dimension("moment_fn output length changed".into()));
        }
        for (p, m) in plus.iter().zip(&minus) {
            let d = (p - m) / (2.0 * hj);
            if !d.is_finite() {
                return Err(Error::NonFinite(format!(
                    "finite difference in nuisance coordinate {j}"
                )));
            }
            max_deriv = max_deriv.max(d.abs());
        }
    }
    Ok(max_deriv)
}
