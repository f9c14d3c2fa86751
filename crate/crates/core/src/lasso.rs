//! Penalized regression: Lasso by cyclic coordinate descent with
//! covariate-specific penalty loadings, the data-dependent penalty level,
//! iterative loading refinement, and Post-Lasso OLS refitting.
//!
//! The objective minimized is
//!
//! ```text
//! (1/n) sum_i (y_i - x_i'b)^2  +  (lambda/n) sum_{j penalized} psi_j |b_j|
//! ```
//!
//! Columns are never standardized internally; the loadings carry the scale,
//! which keeps coefficient estimates equivariant to column rescaling.

use crate::error::{Error, Result};
use crate::numkit::matrix::{check_finite, dot, mean, Matrix};
use crate::numkit::{normal_quantile, ols};

/// Tuning for the penalized regressions.
#[derive(Debug, Clone)]
pub struct LassoConfig {
    /// Slack constant in the penalty rule; must exceed 1.
    pub penalty_constant: f64,
    /// Tail probability of the penalty rule.
    pub tail_prob: f64,
    /// Sweep budget for coordinate descent.
    pub max_sweeps: usize,
    /// Termination threshold on the KKT residual.
    pub kkt_tol: f64,
    /// Rounds of penalty-loading refinement (initial loadings plus
    /// `loading_iterations` updates are recorded in the history).
    pub loading_iterations: usize,
    /// Columns exempt from the penalty (e.g. the intercept); these are also
    /// forced into every Post-Lasso refit.
    pub unpenalized: Vec<usize>,
}

impl Default for LassoConfig {
    fn default() -> Self {
        LassoConfig {
            penalty_constant: 1.1,
            tail_prob: 0.1,
            max_sweeps: 10_000,
            kkt_tol: 1e-7,
            loading_iterations: 2,
            unpenalized: Vec::new(),
        }
    }
}

impl LassoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.penalty_constant > 1.0) {
            return Err(Error::Config(format!(
                "penalty constant must exceed 1, got {}",
                self.penalty_constant
            )));
        }
        if !(self.tail_prob > 0.0 && self.tail_prob < 1.0) {
            return Err(Error::Config(format!(
                "tail probability must lie in (0,1), got {}",
                self.tail_prob
            )));
        }
        if !(self.kkt_tol > 0.0) {
            return Err(Error::Config("kkt_tol must be positive".into()));
        }
        if self.loading_iterations == 0 {
            return Err(Error::Config("loading_iterations must be at least 1".into()));
        }
        Ok(())
    }

    pub fn with_unpenalized(mut self, cols: &[usize]) -> Self {
        self.unpenalized = cols.to_vec();
        self.unpenalized.sort_unstable();
        self.unpenalized.dedup();
        self
    }
}

/// One penalized fit.
#[derive(Debug, Clone)]
pub struct LassoFit {
    pub coefficients: Vec<f64>,
    /// Indices with nonzero coefficients.
    pub support: Vec<usize>,
    pub lambda: f64,
    pub loadings: Vec<f64>,
    pub sweeps_used: usize,
    pub objective: f64,
    /// False when the sweep budget ran out before the KKT residual dropped
    /// below tolerance.
    pub converged: bool,
}

impl LassoFit {
    /// Support restricted to penalized columns.
    pub fn penalized_support(&self, cfg: &LassoConfig) -> Vec<usize> {
        self.support
            .iter()
            .copied()
            .filter(|j| !cfg.unpenalized.contains(j))
            .collect()
    }
}

/// OLS refit on a Lasso support (plus forced columns).
#[derive(Debug, Clone)]
pub struct PostLassoFit {
    pub coefficients: Vec<f64>,
    pub support: Vec<usize>,
}

/// Result of the feasible (data-driven) pipeline.
#[derive(Debug, Clone)]
pub struct FeasibleLasso {
    pub fit: LassoFit,
    pub refit: PostLassoFit,
    /// Initial loadings followed by one refinement per round.
    pub loadings_history: Vec<Vec<f64>>,
}

/// Data-dependent penalty level `2 c sqrt(n) Phi^{-1}(1 - gamma/(2 p ln n))`.
///
/// `p` counts the penalized candidate columns.
pub fn penalty_level(n: usize, p: usize, cfg: &LassoConfig) -> Result<f64> {
    cfg.validate()?;
    if n < 2 || p < 1 {
        return Err(Error::Config(format!(
            "penalty level requires n >= 2 and p >= 1, got n={n}, p={p}"
        )));
    }
    let arg = 1.0 - cfg.tail_prob / (2.0 * p as f64 * (n as f64).ln());
    if !(arg > 0.0 && arg < 1.0) {
        return Err(Error::Config(format!(
            "penalty rule quantile argument {arg} outside (0,1)"
        )));
    }
    Ok(2.0 * cfg.penalty_constant * (n as f64).sqrt() * normal_quantile(arg)?)
}

/// `sign(z) * max(|z| - t, 0)`.
#[inline]
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Lasso fit at a fixed penalty level and fixed loadings.
pub fn lasso_fit(
    x: &Matrix,
    y: &[f64],
    lambda: f64,
    loadings: &[f64],
    cfg: &LassoConfig,
) -> Result<LassoFit> {
    lasso_fit_traced(x, y, lambda, loadings, cfg).map(|(fit, _)| fit)
}

/// Same as [`lasso_fit`] but also returns the exact objective after each
/// sweep (the objective is non-increasing across sweeps).
pub fn lasso_fit_traced(
    x: &Matrix,
    y: &[f64],
    lambda: f64,
    loadings: &[f64],
    cfg: &LassoConfig,
) -> Result<(LassoFit, Vec<f64>)> {
    let n = x.rows();
    let p = x.cols();
    if y.len() != n {
        return Err(Error::Dimension(format!(
            "lasso: y has {} entries, X has {n} rows",
            y.len()
        )));
    }
    if loadings.len() != p {
        return Err(Error::Dimension(format!(
            "lasso: {} loadings for {p} columns",
            loadings.len()
        )));
    }
    if !(lambda >= 0.0) {
        return Err(Error::Config(format!("negative penalty level {lambda}")));
    }
    check_finite("y", y)?;
    check_finite("loadings", loadings)?;

    let mut penalized = vec![true; p];
    for &j in &cfg.unpenalized {
        if j >= p {
            return Err(Error::Config(format!(
                "unpenalized column {j} out of range for p={p}"
            )));
        }
        penalized[j] = false;
    }
    for j in 0..p {
        if penalized[j] && !(loadings[j] > 0.0) {
            return Err(Error::Config(format!(
                "penalized column {j} has non-positive loading {}",
                loadings[j]
            )));
        }
    }

    let cols = x.to_columns();
    let colsq: Vec<f64> = cols.iter().map(|c| dot(c, c)).collect();
    let nf = n as f64;
    // Soft-threshold levels on the partial-residual correlation scale.
    let thresh: Vec<f64> = (0..p)
        .map(|j| if penalized[j] { 0.5 * lambda * loadings[j] } else { 0.0 })
        .collect();

    let mut coef = vec![0.0; p];
    let mut resid = y.to_vec();
    let mut sweeps_used = 0;
    let mut converged = false;
    let mut trace = Vec::new();

    let objective = |resid: &[f64], coef: &[f64]| -> f64 {
        let rss = dot(resid, resid) / nf;
        let pen: f64 = (0..p)
            .filter(|&j| penalized[j])
            .map(|j| loadings[j] * coef[j].abs())
            .sum();
        rss + lambda * pen / nf
    };

    for sweep in 1..=cfg.max_sweeps {
        sweeps_used = sweep;
        for j in 0..p {
            if colsq[j] == 0.0 {
                // Zero column: coefficient stays at zero.
                continue;
            }
            let old = coef[j];
            let rho = dot(&cols[j], &resid) + colsq[j] * old;
            let new = if penalized[j] {
                soft_threshold(rho, thresh[j]) / colsq[j]
            } else {
                rho / colsq[j]
            };
            if new != old {
                let delta = new - old;
                for (r, c) in resid.iter_mut().zip(&cols[j]) {
                    *r -= delta * c;
                }
                coef[j] = new;
            }
        }

        // Refresh the residual exactly from the current support, then test
        // the KKT conditions on the refreshed value.
        resid = y.to_vec();
        for j in 0..p {
            if coef[j] != 0.0 {
                let cj = coef[j];
                for (r, c) in resid.iter_mut().zip(&cols[j]) {
                    *r -= cj * c;
                }
            }
        }
        trace.push(objective(&resid, &coef));

        let mut kkt = 0.0_f64;
        for j in 0..p {
            let g = 2.0 * dot(&cols[j], &resid) / nf;
            let pen_j = if penalized[j] { lambda * loadings[j] / nf } else { 0.0 };
            let r = if !penalized[j] {
                if colsq[j] == 0.0 {
                    0.0
                } else {
                    g.abs()
                }
            } else if coef[j] == 0.0 {
                (g.abs() - pen_j).max(0.0)
            } else {
                (g - pen_j * coef[j].signum()).abs()
            };
            kkt = kkt.max(r);
        }
        if kkt <= cfg.kkt_tol {
            converged = true;
            break;
        }
    }

    let support: Vec<usize> = (0..p).filter(|&j| coef[j] != 0.0).collect();
    let obj = objective(&resid, &coef);
    Ok((
        LassoFit {
            coefficients: coef,
            support,
            lambda,
            loadings: loadings.to_vec(),
            sweeps_used,
            objective: obj,
            converged,
        },
        trace,
    ))
}

/// OLS restricted to the Lasso support plus `forced` columns; zero elsewhere.
pub fn post_lasso(x: &Matrix, y: &[f64], fit: &LassoFit, forced: &[usize]) -> Result<PostLassoFit> {
    let mut support: Vec<usize> = fit.support.iter().chain(forced).copied().collect();
    support.sort_unstable();
    support.dedup();
    let coefficients = ols(x, y, Some(&support)).map_err(|e| match e {
        Error::RankDeficient { size, rank, .. } => Error::RankDeficient {
            context: format!("post-lasso refit on support {support:?}"),
            size,
            rank,
        },
        other => other,
    })?;
    Ok(PostLassoFit {
        coefficients,
        support,
    })
}

/// Score-scale loadings `psi_j = sqrt(mean(x_ij^2 e_i^2))`.
///
/// Degenerate zero loadings on penalized columns are floored at the largest
/// loading (or at one if every loading vanishes) so that exactly-fit
/// responses still yield a well-posed program.
fn score_loadings(cols: &[Vec<f64>], e: &[f64], penalized: &[bool]) -> Vec<f64> {
    let mut psi: Vec<f64> = cols
        .iter()
        .map(|c| {
            mean(
                &c.iter()
                    .zip(e)
                    .map(|(x, r)| x * x * r * r)
                    .collect::<Vec<f64>>(),
            )
            .sqrt()
        })
        .collect();
    let max_pen = psi
        .iter()
        .zip(penalized)
        .filter(|(_, &p)| p)
        .map(|(v, _)| *v)
        .fold(0.0_f64, f64::max);
    let floor = if max_pen > 0.0 { max_pen } else { 1.0 };
    for (v, &p) in psi.iter_mut().zip(penalized) {
        if p && *v == 0.0 {
            *v = floor;
        }
    }
    psi
}

/// Feasible Lasso: data-driven penalty level, iterated penalty loadings
/// estimated from Post-Lasso residuals, and the final fit/refit pair.
pub fn feasible_lasso(x: &Matrix, y: &[f64], cfg: &LassoConfig) -> Result<FeasibleLasso> {
    cfg.validate()?;
    let n = x.rows();
    let p = x.cols();
    if n < 5 {
        return Err(Error::Config(format!("feasible lasso requires n >= 5, got {n}")));
    }
    if y.len() != n {
        return Err(Error::Dimension("feasible lasso: y length".into()));
    }
    check_finite("y", y)?;

    let mut penalized = vec![true; p];
    for &j in &cfg.unpenalized {
        if j >= p {
            return Err(Error::Config(format!(
                "unpenalized column {j} out of range for p={p}"
            )));
        }
        penalized[j] = false;
    }
    let n_penalized = penalized.iter().filter(|&&b| b).count();
    if n_penalized == 0 {
        return Err(Error::Config("feasible lasso: no penalized columns".into()));
    }
    let lambda = penalty_level(n, n_penalized, cfg)?;

    let cols = x.to_columns();
    let ybar = mean(y);
    let centered: Vec<f64> = y.iter().map(|v| v - ybar).collect();
    let resp_rms = mean(&y.iter().map(|v| v * v).collect::<Vec<f64>>()).sqrt();
    let mut psi = score_loadings(&cols, &centered, &penalized);
    let mut history = vec![psi.clone()];

    let mut last: Option<(LassoFit, PostLassoFit)> = None;
    for _round in 0..cfg.loading_iterations {
        let fit = lasso_fit(x, y, lambda, &psi, cfg)?;
        let refit = post_lasso(x, y, &fit, &cfg.unpenalized)?;
        let fitted = x.matvec(&refit.coefficients);
        let e: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
        let e_rms = mean(&e.iter().map(|v| v * v).collect::<Vec<f64>>()).sqrt();
        // Residuals that are rounding noise relative to the response carry
        // no usable scale information; keep the loadings that produced the
        // exact fit instead of collapsing the penalty.
        if e_rms > 1e-10 * resp_rms {
            psi = score_loadings(&cols, &e, &penalized);
        }
        history.push(psi.clone());
        last = Some((fit, refit));
    }
    let (fit, refit) = last.expect("loading_iterations >= 1");
    Ok(FeasibleLasso {
        fit,
        refit,
        loadings_history: history,
    })
}
