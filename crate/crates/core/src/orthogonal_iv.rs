//! Orthogonal-moment inference for the linear IV model with many controls
//! and many instruments.
//!
//! The target coefficient vector on the endogenous block is estimated from
//! the moment functions
//!
//! ```text
//! psi_k(w, a, eta) = (y - x'theta - sum_k (d_k - x'vartheta_k) a_k)
//!                    * (x'gamma_k + z'delta_k - x'vartheta_k)
//! ```
//!
//! whose derivative in the nuisance direction vanishes at the truth, so small
//! selection and shrinkage errors in the nuisance fits do not move the
//! estimating equations to first order. The system is affine in `a`:
//! `M(a) = Gamma1 a + Gamma2`, which gives a closed-form minimizer, a
//! score statistic, and a chi-square test statistic.

use crate::error::{Error, Result};
use crate::lasso::{feasible_lasso, LassoConfig};
use crate::numkit::matrix::{check_finite, dot, Matrix};
use crate::numkit::{
    chi_square_quantile, inv_sqrt_psd, normal_quantile, tsls, QrPivot,
};

/// Observed sample consumed by every estimator.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub y: Vec<f64>,
    /// Endogenous block, n x p_d.
    pub d: Matrix,
    /// Controls including the intercept column, n x p_x.
    pub x: Matrix,
    /// Instruments, n x p_z (p_z may be zero).
    pub z: Matrix,
    /// Index of the intercept column inside `x`.
    pub intercept: usize,
}

impl Dataset {
    pub fn new(y: Vec<f64>, d: Matrix, x: Matrix, z: Matrix, intercept: usize) -> Result<Self> {
        let n = y.len();
        check_finite("y", &y)?;
        if d.rows() != n || x.rows() != n || z.rows() != n {
            return Err(Error::Dimension(
                "dataset: inconsistent row counts across y, D, X, Z".into(),
            ));
        }
        if d.cols() == 0 {
            return Err(Error::Dimension("dataset: at least one endogenous column".into()));
        }
        if intercept >= x.cols() {
            return Err(Error::Dimension(format!(
                "dataset: intercept column {intercept} out of range"
            )));
        }
        let first = x.get(0, intercept);
        if first == 0.0 || (0..n).any(|i| x.get(i, intercept) != first) {
            return Err(Error::Data(
                "dataset: designated intercept column is not a nonzero constant".into(),
            ));
        }
        Ok(Dataset { y, d, x, z, intercept })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p_d(&self) -> usize {
        self.d.cols()
    }

    pub fn p_x(&self) -> usize {
        self.x.cols()
    }

    pub fn p_z(&self) -> usize {
        self.z.cols()
    }
}

/// Whether nuisance regressions return shrunk Lasso coefficients or the
/// Post-Lasso OLS refit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Lasso,
    PostLasso,
}

/// Nuisance coefficients from the three-step selection procedure.
#[derive(Debug, Clone)]
pub struct NuisanceEstimate {
    /// Outcome-equation coefficients on the controls (length p_x).
    pub theta: Vec<f64>,
    /// Reduced-form coefficients of each endogenous column on the controls.
    pub vartheta: Vec<Vec<f64>>,
    /// First-stage control coefficients per endogenous column.
    pub gamma: Vec<Vec<f64>>,
    /// First-stage instrument coefficients per endogenous column.
    pub delta: Vec<Vec<f64>>,
    /// Selected support of the outcome equation (indices into X).
    pub support_y: Vec<usize>,
    /// Selected support per first-stage equation (indices into [X Z]).
    pub support_d: Vec<Vec<usize>>,
    /// Selected support per reduced-form equation (indices into X).
    pub support_dhat: Vec<Vec<usize>>,
    /// Per-equation solver convergence, ordered first-stage equations, then
    /// the outcome equation, then the reduced-form equations.
    pub equation_converged: Vec<bool>,
}

impl NuisanceEstimate {
    pub fn all_converged(&self) -> bool {
        self.equation_converged.iter().all(|&b| b)
    }

    fn check(&self, data: &Dataset) -> Result<()> {
        let p_d = data.p_d();
        let p_x = data.p_x();
        let p_z = data.p_z();
        if self.theta.len() != p_x
            || self.vartheta.len() != p_d
            || self.gamma.len() != p_d
            || self.delta.len() != p_d
            || self.vartheta.iter().any(|v| v.len() != p_x)
            || self.gamma.iter().any(|v| v.len() != p_x)
            || self.delta.iter().any(|v| v.len() != p_z)
        {
            return Err(Error::Dimension(
                "nuisance estimate inconsistent with dataset".into(),
            ));
        }
        Ok(())
    }

    /// Instrument-side component `x'gamma_k + z'delta_k - x'vartheta_k` for
    /// every k, as columns of an n x p_d matrix.
    fn rho_hat(&self, data: &Dataset) -> Matrix {
        let cols: Vec<Vec<f64>> = (0..data.p_d())
            .map(|k| {
                let xg = data.x.matvec(&self.gamma[k]);
                let zd = data.z.matvec(&self.delta[k]);
                let xv = data.x.matvec(&self.vartheta[k]);
                xg.iter()
                    .zip(&zd)
                    .zip(&xv)
                    .map(|((a, b), c)| a + b - c)
                    .collect()
            })
            .collect();
        Matrix::from_columns(&cols).expect("consistent rows")
    }

    /// Point estimation needs a nonzero instrument component. A component
    /// that cancels to rounding noise relative to its parts (for example an
    /// intercept-only first stage, where the reduced form reproduces it
    /// exactly) leaves the target unidentified.
    fn check_identification(&self, data: &Dataset) -> Result<()> {
        for k in 0..data.p_d() {
            let xg = data.x.matvec(&self.gamma[k]);
            let zd = data.z.matvec(&self.delta[k]);
            let xv = data.x.matvec(&self.vartheta[k]);
            let dhat: Vec<f64> = xg.iter().zip(&zd).map(|(a, b)| a + b).collect();
            let col: Vec<f64> = dhat.iter().zip(&xv).map(|(a, b)| a - b).collect();
            let scale = crate::numkit::norm2(&dhat) + crate::numkit::norm2(&xv);
            if crate::numkit::norm2(&col) <= 1e-10 * scale.max(f64::MIN_POSITIVE) {
                return Err(Error::WeakIdentification(format!(
                    "instrument component for endogenous column {k} is numerically zero"
                )));
            }
        }
        Ok(())
    }

    /// Residualized endogenous block `d_k - x'vartheta_k`.
    fn d_tilde(&self, data: &Dataset) -> Matrix {
        let cols: Vec<Vec<f64>> = (0..data.p_d())
            .map(|k| {
                let xv = data.x.matvec(&self.vartheta[k]);
                data.d.col(k).iter().zip(&xv).map(|(a, b)| a - b).collect()
            })
            .collect();
        Matrix::from_columns(&cols).expect("consistent rows")
    }

    /// Residualized outcome `y - x'theta`.
    fn y_tilde(&self, data: &Dataset) -> Vec<f64> {
        let xt = data.x.matvec(&self.theta);
        data.y.iter().zip(&xt).map(|(a, b)| a - b).collect()
    }
}

/// Point estimate with variance estimates, standard errors, and confidence
/// intervals for the endogenous coefficients.
#[derive(Debug, Clone)]
pub struct InferenceResult {
    pub alpha_hat: Vec<f64>,
    /// Jacobian of the moment system in the target direction.
    pub gamma1: Matrix,
    /// Outer-product variance of the moments at `alpha_hat`.
    pub omega: Matrix,
    /// Sandwich `(Gamma1')^{-1} Omega Gamma1^{-1}`.
    pub vn: Matrix,
    /// `sqrt(diag(vn)/n)`.
    pub se_robust: Vec<f64>,
    /// Conventional homoscedastic IV standard errors from the final IV step.
    pub se_homoscedastic_iv: Vec<f64>,
    /// Per-component Wald interval at `level`, from the robust SE.
    pub wald_ci: Vec<(f64, f64)>,
    pub level: f64,
    /// C(alpha) statistic evaluated at a caller-supplied null value.
    pub c_alpha_at_alpha0: Option<f64>,
}

/// First two steps of the nuisance procedure: penalized regressions of each
/// endogenous column on `[X Z]` and of the outcome on `X`, intercept
/// unpenalized throughout.
pub fn first_stage_fits(
    data: &Dataset,
    cfg: &LassoConfig,
) -> Result<(Vec<crate::lasso::FeasibleLasso>, crate::lasso::FeasibleLasso)> {
    let fx = data.x.hcat(&data.z)?;
    let cfg_sel = cfg.clone().with_unpenalized(&[data.intercept]);
    let fits_d = (0..data.p_d())
        .map(|k| {
            feasible_lasso(&fx, &data.d.col(k), &cfg_sel)
                .map_err(|e| Error::Data(format!("step (1), endogenous column {k}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let fit_y = feasible_lasso(&data.x, &data.y, &cfg_sel)
        .map_err(|e| Error::Data(format!("step (2), outcome equation: {e}")))?;
    Ok((fits_d, fit_y))
}

/// Completes the nuisance estimate from already-computed first-stage and
/// outcome fits: computes the fitted first stages and regresses them on the
/// controls (step three), then assembles the coefficient blocks.
pub fn nuisance_from_first_stages(
    data: &Dataset,
    cfg: &LassoConfig,
    mode: Mode,
    fits_d: &[crate::lasso::FeasibleLasso],
    fit_y: &crate::lasso::FeasibleLasso,
) -> Result<NuisanceEstimate> {
    let p_d = data.p_d();
    let p_x = data.p_x();
    if fits_d.len() != p_d {
        return Err(Error::Dimension("one first-stage fit per endogenous column".into()));
    }
    let cfg_sel = cfg.clone().with_unpenalized(&[data.intercept]);
    let pick = |fit: &crate::lasso::FeasibleLasso| -> Vec<f64> {
        match mode {
            Mode::Lasso => fit.fit.coefficients.clone(),
            Mode::PostLasso => fit.refit.coefficients.clone(),
        }
    };

    let mut gamma = Vec::with_capacity(p_d);
    let mut delta = Vec::with_capacity(p_d);
    let mut support_d = Vec::with_capacity(p_d);
    let mut equation_converged = Vec::new();
    for fl in fits_d {
        let coef = pick(fl);
        if coef.len() != p_x + data.p_z() {
            return Err(Error::Dimension("first-stage fit width".into()));
        }
        gamma.push(coef[..p_x].to_vec());
        delta.push(coef[p_x..].to_vec());
        support_d.push(fl.fit.support.clone());
        equation_converged.push(fl.fit.converged);
    }

    let theta = pick(fit_y);
    let support_y = fit_y.fit.support.clone();
    equation_converged.push(fit_y.fit.converged);

    let mut vartheta = Vec::with_capacity(p_d);
    let mut support_dhat = Vec::with_capacity(p_d);
    for k in 0..p_d {
        let xg = data.x.matvec(&gamma[k]);
        let zd = data.z.matvec(&delta[k]);
        let dhat: Vec<f64> = xg.iter().zip(&zd).map(|(a, b)| a + b).collect();
        let fl = feasible_lasso(&data.x, &dhat, &cfg_sel).map_err(|e| {
            Error::Data(format!("step (3), endogenous column {k}: {e}"))
        })?;
        vartheta.push(pick(&fl));
        support_dhat.push(fl.fit.support.clone());
        equation_converged.push(fl.fit.converged);
    }

    Ok(NuisanceEstimate {
        theta,
        vartheta,
        gamma,
        delta,
        support_y,
        support_d,
        support_dhat,
        equation_converged,
    })
}

/// Three-step nuisance estimation: first-stage regressions of each
/// endogenous column on controls and instruments, the outcome regression on
/// controls, and reduced-form regressions of the fitted first stages on
/// controls. Every step runs the feasible Lasso with the intercept
/// unpenalized and forced into the refits.
pub fn estimate_nuisance(data: &Dataset, cfg: &LassoConfig, mode: Mode) -> Result<NuisanceEstimate> {
    let (fits_d, fit_y) = first_stage_fits(data, cfg)?;
    nuisance_from_first_stages(data, cfg, mode, &fits_d, &fit_y)
}

/// Per-observation moment values, n x p_d.
pub fn moment_psi(data: &Dataset, alpha: &[f64], eta: &NuisanceEstimate) -> Result<Matrix> {
    eta.check(data)?;
    if alpha.len() != data.p_d() {
        return Err(Error::Dimension("alpha length".into()));
    }
    let n = data.n();
    let p_d = data.p_d();
    let rho = eta.rho_hat(data);
    let d_t = eta.d_tilde(data);
    let y_t = eta.y_tilde(data);

    let mut out = Matrix::zeros(n, p_d);
    for i in 0..n {
        let mut a = y_t[i];
        for (kk, &al) in alpha.iter().enumerate() {
            a -= d_t.get(i, kk) * al;
        }
        for k in 0..p_d {
            out.set(i, k, a * rho.get(i, k));
        }
    }
    Ok(out)
}

/// Jacobian and intercept of the affine moment system `M(a) = G1 a + G2`.
pub fn gamma_matrices(data: &Dataset, eta: &NuisanceEstimate) -> Result<(Matrix, Vec<f64>)> {
    eta.check(data)?;
    let n = data.n();
    let p_d = data.p_d();
    let rho = eta.rho_hat(data);
    let d_t = eta.d_tilde(data);
    let y_t = eta.y_tilde(data);
    let nf = n as f64;

    let mut g1 = Matrix::zeros(p_d, p_d);
    let mut g2 = vec![0.0; p_d];
    for k in 0..p_d {
        let rho_k = rho.col(k);
        for kk in 0..p_d {
            let s: f64 = (0..n).map(|i| d_t.get(i, kk) * rho_k[i]).sum();
            g1.set(k, kk, -s / nf);
        }
        g2[k] = dot(&y_t, &rho_k) / nf;
    }
    Ok((g1, g2))
}

/// Average moment `M(a) = mean_i psi_i(a)`.
pub fn moment_mean(data: &Dataset, alpha: &[f64], eta: &NuisanceEstimate) -> Result<Vec<f64>> {
    let psi = moment_psi(data, alpha, eta)?;
    let n = data.n() as f64;
    Ok((0..psi.cols()).map(|k| psi.col(k).iter().sum::<f64>() / n).collect())
}

/// Outer-product variance estimate of the moments at `(alpha, eta)`.
pub fn omega_hat(data: &Dataset, alpha: &[f64], eta: &NuisanceEstimate) -> Result<Matrix> {
    let psi = moment_psi(data, alpha, eta)?;
    let n = data.n();
    let p_d = data.p_d();
    let nf = n as f64;
    let mut omega = Matrix::zeros(p_d, p_d);
    for i in 0..n {
        for a in 0..p_d {
            let pa = psi.get(i, a);
            for b in a..p_d {
                omega.set(a, b, omega.get(a, b) + pa * psi.get(i, b));
            }
        }
    }
    for a in 0..p_d {
        for b in a..p_d {
            let v = omega.get(a, b) / nf;
            omega.set(a, b, v);
            omega.set(b, a, v);
        }
    }
    Ok(omega)
}

/// Normalized score `S(a) = Omega^{-1/2} sqrt(n) M(a)`.
pub fn score_statistic(data: &Dataset, alpha: &[f64], eta: &NuisanceEstimate) -> Result<Vec<f64>> {
    let m = moment_mean(data, alpha, eta)?;
    let omega = omega_hat(data, alpha, eta)?;
    let root = inv_sqrt_psd(&omega)
        .map_err(|e| Error::Singular(format!("moment variance at alpha: {e}")))?;
    let sqrt_n = (data.n() as f64).sqrt();
    let scaled: Vec<f64> = m.iter().map(|v| v * sqrt_n).collect();
    Ok(root.matvec(&scaled))
}

/// Quadratic form of the normalized score; chi-square with p_d degrees of
/// freedom at the true value.
pub fn c_alpha_statistic(data: &Dataset, alpha: &[f64], eta: &NuisanceEstimate) -> Result<f64> {
    let s = score_statistic(data, alpha, eta)?;
    Ok(dot(&s, &s))
}

fn solve_small(g: &Matrix, rhs: &[f64], context: &str) -> Result<Vec<f64>> {
    let qr = QrPivot::factor(g);
    qr.least_squares(rhs, context)
        .map_err(|e| Error::WeakIdentification(format!("{context}: {e}")))
}

/// Closed-form minimizer of the affine system: `-(G1'G1)^{-1} G1' G2`.
pub fn estimate_alpha(data: &Dataset, eta: &NuisanceEstimate) -> Result<Vec<f64>> {
    eta.check(data)?;
    eta.check_identification(data)?;
    let (g1, g2) = gamma_matrices(data, eta)?;
    let gtg = g1.transpose().matmul(&g1);
    let mut rhs = g1.t_matvec(&g2);
    for v in rhs.iter_mut() {
        *v = -*v;
    }
    solve_small(&gtg, &rhs, "target-coefficient normal equations")
}

/// One Newton step on the moment system from `alpha_tilde`; exact on affine
/// systems, hence equal to [`estimate_alpha`] up to rounding.
pub fn one_step_estimate(
    data: &Dataset,
    alpha_tilde: &[f64],
    eta: &NuisanceEstimate,
) -> Result<Vec<f64>> {
    eta.check(data)?;
    eta.check_identification(data)?;
    let (g1, _) = gamma_matrices(data, eta)?;
    let m = moment_mean(data, alpha_tilde, eta)?;
    let gtg = g1.transpose().matmul(&g1);
    let rhs = g1.t_matvec(&m);
    let step = solve_small(&gtg, &rhs, "one-step update")?;
    Ok(alpha_tilde
        .iter()
        .zip(&step)
        .map(|(a, s)| a - s)
        .collect())
}

#[derive(Debug, Clone)]
pub struct VarianceEstimate {
    pub vn: Matrix,
    pub se: Vec<f64>,
}

/// Sandwich variance `(G1')^{-1} Omega(alpha) G1^{-1}` and standard errors
/// `sqrt(diag/n)`.
pub fn variance_estimate(
    data: &Dataset,
    alpha: &[f64],
    eta: &NuisanceEstimate,
) -> Result<VarianceEstimate> {
    eta.check(data)?;
    eta.check_identification(data)?;
    let (g1, _) = gamma_matrices(data, eta)?;
    let omega = omega_hat(data, alpha, eta)?;
    let p_d = data.p_d();

    // Columns of G1^{-1}.
    let qr = QrPivot::factor(&g1);
    let mut g1_inv = Matrix::zeros(p_d, p_d);
    for j in 0..p_d {
        let mut e = vec![0.0; p_d];
        e[j] = 1.0;
        let col = qr
            .least_squares(&e, "moment Jacobian")
            .map_err(|e| Error::Singular(format!("moment Jacobian: {e}")))?;
        for i in 0..p_d {
            g1_inv.set(i, j, col[i]);
        }
    }
    let mut vn = g1_inv.transpose().matmul(&omega).matmul(&g1_inv);
    vn.symmetrize();
    let nf = data.n() as f64;
    let se = (0..p_d).map(|j| (vn.get(j, j) / nf).sqrt()).collect();
    Ok(VarianceEstimate { vn, se })
}

#[derive(Debug, Clone)]
pub struct ConfidenceSets {
    /// Per-component Wald intervals at the requested level.
    pub wald: Vec<(f64, f64)>,
    /// Grid points whose C(alpha) statistic clears the chi-square threshold.
    pub inversion: Vec<Vec<f64>>,
}

/// Wald intervals plus a test-inversion confidence set over `grid`.
pub fn confidence_sets(
    data: &Dataset,
    eta: &NuisanceEstimate,
    level: f64,
    grid: &[Vec<f64>],
) -> Result<ConfidenceSets> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("confidence level {level} outside (0,1)")));
    }
    if grid.is_empty() {
        return Err(Error::Config("inversion grid is empty".into()));
    }
    let alpha = estimate_alpha(data, eta)?;
    let var = variance_estimate(data, &alpha, eta)?;
    let z = normal_quantile(1.0 - (1.0 - level) / 2.0)?;
    let wald = alpha
        .iter()
        .zip(&var.se)
        .map(|(a, s)| (a - z * s, a + z * s))
        .collect();

    let threshold = chi_square_quantile(level, data.p_d())?;
    let mut inversion = Vec::new();
    for point in grid {
        if point.len() != data.p_d() {
            return Err(Error::Dimension("grid point dimension".into()));
        }
        if c_alpha_statistic(data, point, eta)? <= threshold {
            inversion.push(point.clone());
        }
    }
    Ok(ConfidenceSets { wald, inversion })
}

/// Default inversion grid for a scalar target: 401 equally spaced points
/// covering `alpha_hat +/- 6 se`.
pub fn default_inversion_grid(alpha_hat: f64, se: f64) -> Vec<Vec<f64>> {
    let lo = alpha_hat - 6.0 * se;
    let step = 12.0 * se / 400.0;
    (0..=400).map(|i| vec![lo + step * i as f64]).collect()
}

/// Full pipeline: nuisance estimation, point estimate, both variance
/// estimates, and Wald intervals. The homoscedastic IV standard error comes
/// from the final IV step: two-stage least squares of `y - x'theta` on
/// `d - x'vartheta` using `x'gamma + z'delta - x'vartheta` as instruments.
pub fn infer(
    data: &Dataset,
    cfg: &LassoConfig,
    mode: Mode,
    level: f64,
    alpha0: Option<&[f64]>,
) -> Result<InferenceResult> {
    let eta = estimate_nuisance(data, cfg, mode)?;
    infer_with_nuisance(data, &eta, level, alpha0)
}

/// Inference given an already-estimated nuisance.
pub fn infer_with_nuisance(
    data: &Dataset,
    eta: &NuisanceEstimate,
    level: f64,
    alpha0: Option<&[f64]>,
) -> Result<InferenceResult> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("confidence level {level} outside (0,1)")));
    }
    let alpha_hat = estimate_alpha(data, eta)?;
    let (gamma1, _) = gamma_matrices(data, eta)?;
    let omega = omega_hat(data, &alpha_hat, eta)?;
    let var = variance_estimate(data, &alpha_hat, eta)?;

    let y_t = eta.y_tilde(data);
    let d_t = eta.d_tilde(data);
    let rho = eta.rho_hat(data);
    let iv = tsls(&y_t, &d_t, &rho, None)
        .map_err(|e| Error::WeakIdentification(format!("final IV step: {e}")))?;

    let z = normal_quantile(1.0 - (1.0 - level) / 2.0)?;
    let wald_ci = alpha_hat
        .iter()
        .zip(&var.se)
        .map(|(a, s)| (a - z * s, a + z * s))
        .collect();

    let c_alpha_at_alpha0 = match alpha0 {
        Some(a0) => Some(c_alpha_statistic(data, a0, eta)?),
        None => None,
    };

    Ok(InferenceResult {
        alpha_hat,
        gamma1,
        omega,
        vn: var.vn,
        se_robust: var.se,
        se_homoscedastic_iv: iv.se_homoscedastic,
        wald_ci,
        level,
        c_alpha_at_alpha0,
    })
}
