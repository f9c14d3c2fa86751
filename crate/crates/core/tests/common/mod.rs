#![allow(dead_code)]

//! Shared test oracles, independent of the library's solver paths.

use orthoiv::numkit::Matrix;

/// Exact Lasso objective `(1/n)||y - Xb||^2 + (lambda/n) sum_j psi_j |b_j|`
/// with the penalty restricted to penalized columns.
pub fn lasso_objective(
    x: &Matrix,
    y: &[f64],
    lambda: f64,
    psi: &[f64],
    unpenalized: &[usize],
    b: &[f64],
) -> f64 {
    let n = x.rows() as f64;
    let fitted = x.matvec(b);
    let rss: f64 = y
        .iter()
        .zip(&fitted)
        .map(|(a, f)| (a - f) * (a - f))
        .sum();
    let pen: f64 = (0..x.cols())
        .filter(|j| !unpenalized.contains(j))
        .map(|j| psi[j] * b[j].abs())
        .sum();
    rss / n + lambda * pen / n
}

/// Independent proximal-gradient solver for the same objective, run with
/// step `1/(2L)` where `L` is the largest eigenvalue of `(2/n) X'X`
/// (estimated by power iteration, which approaches `L` from below; the step
/// keeps a factor-two stability margin). Iterates until the coefficient
/// vector stops changing bitwise or the iteration budget is exhausted.
pub fn prox_gradient_lasso(
    x: &Matrix,
    y: &[f64],
    lambda: f64,
    psi: &[f64],
    unpenalized: &[usize],
    max_iters: usize,
) -> Vec<f64> {
    let n = x.rows();
    let p = x.cols();
    let nf = n as f64;

    // Power iteration on (2/n) X'X.
    let mut v = vec![1.0 / (p as f64).sqrt(); p];
    let mut lmax = 0.0;
    for _ in 0..500 {
        let xv = x.matvec(&v);
        let mut w = x.t_matvec(&xv);
        for wi in w.iter_mut() {
            *wi *= 2.0 / nf;
        }
        let norm = w.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        lmax = norm;
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / norm;
        }
    }
    let step = 1.0 / (2.0 * lmax);

    let soft = |z: f64, t: f64| -> f64 {
        if z > t {
            z - t
        } else if z < -t {
            z + t
        } else {
            0.0
        }
    };

    let mut b = vec![0.0; p];
    for _ in 0..max_iters {
        let fitted = x.matvec(&b);
        let resid: Vec<f64> = y.iter().zip(&fitted).map(|(a, f)| a - f).collect();
        let mut grad = x.t_matvec(&resid);
        for g in grad.iter_mut() {
            *g *= -2.0 / nf;
        }
        let mut b_new = vec![0.0; p];
        let mut changed = false;
        for j in 0..p {
            let v = b[j] - step * grad[j];
            b_new[j] = if unpenalized.contains(&j) {
                v
            } else {
                soft(v, step * lambda * psi[j] / nf)
            };
            changed |= b_new[j].to_bits() != b[j].to_bits();
        }
        b = b_new;
        if !changed {
            break;
        }
    }
    b
}

/// Linear-interpolated empirical percentile of a sorted slice.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let idx = p * (sorted.len() - 1) as f64;
    let lo = idx.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let w = idx - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

/// Median of an unsorted slice (averages the middle pair for even lengths).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
