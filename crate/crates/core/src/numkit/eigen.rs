//! Symmetric eigendecomposition (cyclic Jacobi) and Cholesky factorization.
//!
//! Jacobi is deterministic and accurate for the small symmetric matrices used
//! here (moment variance blocks, weighting matrices).

use crate::error::{Error, Result};
use crate::numkit::matrix::Matrix;

/// Eigenvalues (ascending) and matching eigenvector columns of a symmetric
/// matrix. Only the lower triangle is read.
pub fn sym_eigen(a: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    if a.rows() != a.cols() {
        return Err(Error::Dimension("sym_eigen: matrix not square".into()));
    }
    let n = a.rows();
    let mut m = a.clone();
    m.symmetrize();
    let mut v = Matrix::identity(n);

    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m.get(i, j) * m.get(i, j);
            }
        }
        if off.sqrt() <= 1e-15 * (1.0 + m.max_abs()) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| m.get(i, i)).collect();
    order.sort_by(|&i, &j| diag[i].partial_cmp(&diag[j]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let vectors = v.select_cols(&order);
    Ok((values, vectors))
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    if a.rows() != a.cols() {
        return Err(Error::Dimension("cholesky: matrix not square".into()));
    }
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if s <= 0.0 {
                    return Err(Error::Singular(format!(
                        "cholesky pivot {s:.3e} at index {i}"
                    )));
                }
                l.set(i, j, s.sqrt());
            } else {
                l.set(i, j, s / l.get(j, j));
            }
        }
    }
    Ok(l)
}

/// Solves `A x = b` for symmetric positive definite `A` via Cholesky.
pub fn cholesky_solve(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    assert_eq!(b.len(), n);
    let mut y = b.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l.get(i, k) * y[k];
        }
        y[i] = s / l.get(i, i);
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l.get(k, i) * y[k];
        }
        y[i] = s / l.get(i, i);
    }
    y
}

/// Inverse square root of a symmetric PSD matrix via eigendecomposition.
///
/// Eigenvalues are floored at `1e-12 * trace` so mildly indefinite rounding
/// noise does not break the square root; a matrix with non-positive trace is
/// reported singular.
pub fn inv_sqrt_psd(a: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    let trace: f64 = (0..n).map(|i| a.get(i, i)).sum();
    if !(trace > 0.0) {
        return Err(Error::Singular(format!(
            "inverse square root: trace {trace:.3e} not positive"
        )));
    }
    let floor = 1e-12 * trace;
    let (values, vectors) = sym_eigen(a)?;
    let mut out = Matrix::zeros(n, n);
    for k in 0..n {
        let lam = values[k].max(floor);
        let w = 1.0 / lam.sqrt();
        for i in 0..n {
            for j in 0..n {
                out.set(
                    i,
                    j,
                    out.get(i, j) + w * vectors.get(i, k) * vectors.get(j, k),
                );
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_recovers_spectrum() {
        // A = Q diag(1,4,9) Q' for a known rotation.
        let a = Matrix::new(
            3,
            3,
            vec![6.0, -2.0, 1.0, -2.0, 5.0, 0.5, 1.0, 0.5, 3.0],
        )
        .unwrap();
        let (values, vectors) = sym_eigen(&a).unwrap();
        // A v = lambda v for each column.
        for k in 0..3 {
            let v = vectors.col(k);
            let av = a.matvec(&v);
            for i in 0..3 {
                assert!((av[i] - values[k] * v[i]).abs() < 1e-10);
            }
        }
        let trace: f64 = values.iter().sum();
        assert!((trace - 14.0).abs() < 1e-10);
    }

    #[test]
    fn cholesky_roundtrip() {
        let a = Matrix::new(2, 2, vec![4.0, 2.0, 2.0, 3.0]).unwrap();
        let l = cholesky(&a).unwrap();
        let recon = l.matmul(&l.transpose());
        assert!((recon.get(0, 0) - 4.0).abs() < 1e-12);
        assert!((recon.get(1, 0) - 2.0).abs() < 1e-12);
        let x = cholesky_solve(&l, &[2.0, 1.0]);
        // A x = b check
        let b = a.matvec(&x);
        assert!((b[0] - 2.0).abs() < 1e-12 && (b[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = Matrix::new(2, 2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(cholesky(&a).is_err());
    }

    #[test]
    fn inv_sqrt_scalar() {
        let a = Matrix::new(1, 1, vec![4.0]).unwrap();
        let r = inv_sqrt_psd(&a).unwrap();
        assert!((r.get(0, 0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn inv_sqrt_squares_to_inverse() {
        let a = Matrix::new(2, 2, vec![5.0, 1.5, 1.5, 2.0]).unwrap();
        let r = inv_sqrt_psd(&a).unwrap();
        let prod = r.matmul(&a).matmul(&r);
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((prod.get(i, j) - want).abs() < 1e-10);
            }
        }
    }
}
