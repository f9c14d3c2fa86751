//! Householder QR with column pivoting, least squares, and projections.
//!
//! Pivoting keeps solves stable for nearly collinear post-selection designs.
//! A pivot smaller than `RANK_TOL` times the largest pivot declares rank
//! deficiency; the cutoff is deterministic and scale-relative.

use crate::error::{Error, Result};
use crate::numkit::matrix::{check_finite, Matrix};

/// Relative pivot threshold below which a column is treated as dependent.
pub const RANK_TOL: f64 = 1e-10;

/// Column-pivoted Householder QR factorization of an n x p matrix.
pub struct QrPivot {
    n: usize,
    p: usize,
    rank: usize,
    /// Column j holds R entries in rows `0..j` and the (unnormalized)
    /// Householder vector in rows `j..n`.
    cols: Vec<Vec<f64>>,
    rdiag: Vec<f64>,
    beta: Vec<f64>,
    /// `perm[k]` = original index of the column in pivot position k.
    perm: Vec<usize>,
}

impl QrPivot {
    pub fn factor(a: &Matrix) -> QrPivot {
        let n = a.rows();
        let p = a.cols();
        let mut cols = a.to_columns();
        let mut perm: Vec<usize> = (0..p).collect();
        let mut rdiag = vec![0.0; p];
        let mut beta = vec![0.0; p];
        let mut rank = 0;
        let mut first_pivot = 0.0_f64;

        let kmax = n.min(p);
        for k in 0..kmax {
            // Pivot: bring the column with the largest remaining tail forward.
            let mut best = k;
            let mut best_norm2 = tail_norm2(&cols[k], k);
            for j in (k + 1)..p {
                let nj = tail_norm2(&cols[j], k);
                if nj > best_norm2 {
                    best_norm2 = nj;
                    best = j;
                }
            }
            if best != k {
                cols.swap(k, best);
                perm.swap(k, best);
            }
            let pivot = best_norm2.sqrt();
            if k == 0 {
                first_pivot = pivot;
            }
            if pivot <= RANK_TOL * first_pivot {
                break;
            }

            // Householder vector for rows k..n of column k.
            let alpha = if cols[k][k] >= 0.0 { -pivot } else { pivot };
            cols[k][k] -= alpha;
            let vnorm2 = tail_norm2(&cols[k], k);
            beta[k] = if vnorm2 > 0.0 { 2.0 / vnorm2 } else { 0.0 };
            rdiag[k] = alpha;

            // Reflect the remaining columns.
            for j in (k + 1)..p {
                let mut s = 0.0;
                for i in k..n {
                    s += cols[k][i] * cols[j][i];
                }
                s *= beta[k];
                for i in k..n {
                    cols[j][i] -= s * cols[k][i];
                }
            }
            rank = k + 1;
        }

        QrPivot {
            n,
            p,
            rank,
            cols,
            rdiag,
            beta,
            perm,
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Applies Q' to a copy of `y`.
    pub fn apply_qt(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.n);
        let mut w = y.to_vec();
        for k in 0..self.rank {
            let mut s = 0.0;
            for i in k..self.n {
                s += self.cols[k][i] * w[i];
            }
            s *= self.beta[k];
            for i in k..self.n {
                w[i] -= s * self.cols[k][i];
            }
        }
        w
    }

    /// Applies Q to a copy of `w`.
    pub fn apply_q(&self, w: &[f64]) -> Vec<f64> {
        assert_eq!(w.len(), self.n);
        let mut y = w.to_vec();
        for k in (0..self.rank).rev() {
            let mut s = 0.0;
            for i in k..self.n {
                s += self.cols[k][i] * y[i];
            }
            s *= self.beta[k];
            for i in k..self.n {
                y[i] -= s * self.cols[k][i];
            }
        }
        y
    }

    /// Least-squares coefficients; errors when the design is rank deficient.
    pub fn least_squares(&self, y: &[f64], context: &str) -> Result<Vec<f64>> {
        if self.rank < self.p {
            return Err(Error::RankDeficient {
                context: context.to_string(),
                size: self.p,
                rank: self.rank,
            });
        }
        let w = self.apply_qt(y);
        let mut coef_perm = vec![0.0; self.p];
        for k in (0..self.p).rev() {
            let mut s = w[k];
            for j in (k + 1)..self.p {
                s -= self.cols[j][k] * coef_perm[j];
            }
            coef_perm[k] = s / self.rdiag[k];
        }
        let mut coef = vec![0.0; self.p];
        for k in 0..self.p {
            coef[self.perm[k]] = coef_perm[k];
        }
        Ok(coef)
    }

    /// Residual of `y` after projecting onto the column space (uses the
    /// numerical rank, so it is defined even for dependent columns).
    pub fn residualize(&self, y: &[f64]) -> Vec<f64> {
        let mut w = self.apply_qt(y);
        for wi in w.iter_mut().take(self.rank) {
            *wi = 0.0;
        }
        self.apply_q(&w)
    }

    /// `(X'X)^{-1}` from the R factor; requires full column rank.
    pub fn xtx_inverse(&self, context: &str) -> Result<Matrix> {
        if self.rank < self.p {
            return Err(Error::RankDeficient {
                context: context.to_string(),
                size: self.p,
                rank: self.rank,
            });
        }
        let p = self.p;
        // U = R^{-1}, column by column.
        let mut u = Matrix::zeros(p, p);
        for j in 0..p {
            let mut col = vec![0.0; p];
            col[j] = 1.0;
            for k in (0..=j).rev() {
                let mut s = col[k];
                for l in (k + 1)..=j {
                    s -= self.cols[l][k] * u.get(l, j);
                }
                u.set(k, j, s / self.rdiag[k]);
            }
        }
        // (X'X)^{-1} = P U U' P'.
        let mut inv = Matrix::zeros(p, p);
        for i in 0..p {
            for j in 0..p {
                let mut s = 0.0;
                for k in j.max(i)..p {
                    s += u.get(i, k) * u.get(j, k);
                }
                inv.set(self.perm[i], self.perm[j], s);
            }
        }
        Ok(inv)
    }
}

#[inline]
fn tail_norm2(col: &[f64], from: usize) -> f64 {
    col[from..].iter().map(|v| v * v).sum()
}

/// Ordinary least squares, optionally restricted to a column subset.
///
/// Entries off the support are exactly zero in the returned vector.
pub fn ols(x: &Matrix, y: &[f64], support: Option<&[usize]>) -> Result<Vec<f64>> {
    if y.len() != x.rows() {
        return Err(Error::Dimension(format!(
            "ols: y has {} entries, X has {} rows",
            y.len(),
            x.rows()
        )));
    }
    check_finite("y", y)?;
    match support {
        None => {
            let qr = QrPivot::factor(x);
            qr.least_squares(y, "ols design")
        }
        Some(idx) => {
            if idx.iter().any(|&j| j >= x.cols()) {
                return Err(Error::Dimension("ols: support index out of range".into()));
            }
            if idx.len() > x.rows() {
                return Err(Error::RankDeficient {
                    context: "ols support larger than sample".into(),
                    size: idx.len(),
                    rank: x.rows(),
                });
            }
            let sub = x.select_cols(idx);
            let qr = QrPivot::factor(&sub);
            let coef_sub = qr.least_squares(y, &format!("ols support of {} columns", idx.len()))?;
            let mut coef = vec![0.0; x.cols()];
            for (&j, &c) in idx.iter().zip(&coef_sub) {
                coef[j] = c;
            }
            Ok(coef)
        }
    }
}

/// OLS fit summary used by stepwise selection: coefficients, residual sum of
/// squares and the unscaled coefficient covariance `(X'X)^{-1}`.
pub struct OlsDetail {
    pub coef: Vec<f64>,
    pub rss: f64,
    pub xtx_inv: Matrix,
}

pub fn ols_detail(x: &Matrix, y: &[f64], context: &str) -> Result<OlsDetail> {
    let qr = QrPivot::factor(x);
    let coef = qr.least_squares(y, context)?;
    let fitted = x.matvec(&coef);
    let rss = y
        .iter()
        .zip(&fitted)
        .map(|(yi, fi)| (yi - fi) * (yi - fi))
        .sum();
    let xtx_inv = qr.xtx_inverse(context)?;
    Ok(OlsDetail { coef, rss, xtx_inv })
}
