//! Monte Carlo data-generating process for the simulation study, including
//! the latent side information consumed by the infeasible oracle estimator.
//!
//! One draw produces
//!
//! ```text
//! y = alpha0 d + x'beta + noise_scale_y * eps
//! d = x'gamma + z'delta + u
//! z = Pi x + zeta_scale * zeta
//! ```
//!
//! with `x ~ N(0, Sigma)` for the Toeplitz matrix `Sigma_kj = rho^{|j-k|}`,
//! `(eps, u)` bivariate standard normal with correlation `err_corr`,
//! `zeta ~ N(0, I)`, and `Pi = [I 0]`.
//!
//! Randomness comes from a counter-based ChaCha12 generator seeded per draw,
//! with normal variates from the ziggurat sampler; results are reproducible
//! independent of thread scheduling.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::baselines::OracleSideInfo;
use crate::error::{Error, Result};
use crate::numkit::matrix::{dot, Matrix};
use crate::numkit::{cholesky, Vector};
use crate::orthogonal_iv::Dataset;

/// Simulation design parameters.
///
/// `beta` and `gamma` coincide in this design; `sigma_rho` is the base of the
/// Toeplitz control covariance. The instrument loading matrix is `[I 0]`
/// structurally and is never materialized in hot paths.
#[derive(Debug, Clone)]
pub struct DgpParams {
    pub n: usize,
    pub p_x: usize,
    pub p_z: usize,
    pub alpha0: f64,
    pub beta: Vector,
    pub gamma: Vector,
    pub delta: Vector,
    pub err_corr: f64,
    pub noise_scale_y: f64,
    pub zeta_scale: f64,
    pub sigma_rho: f64,
}

impl DgpParams {
    /// Toeplitz control covariance `Sigma_kj = rho^{|j-k|}`.
    pub fn sigma(&self) -> Matrix {
        let mut m = Matrix::zeros(self.p_x, self.p_x);
        for k in 0..self.p_x {
            for j in 0..self.p_x {
                m.set(k, j, self.sigma_rho.powi((k as i32 - j as i32).abs()));
            }
        }
        m
    }

    /// Instrument loading matrix `Pi = [I 0]` (p_z x p_x).
    pub fn pi(&self) -> Matrix {
        let mut m = Matrix::zeros(self.p_z, self.p_x);
        for j in 0..self.p_z {
            m.set(j, j, 1.0);
        }
        m
    }

    /// Reduced-form control coefficients of the endogenous variable:
    /// `vartheta0 = gamma + Pi'delta`.
    pub fn vartheta0(&self) -> Vector {
        let mut v = self.gamma.clone();
        for j in 0..self.p_z {
            v[j] += self.delta[j];
        }
        v
    }

    /// Outcome-equation control coefficients: `theta0 = beta + alpha0 vartheta0`.
    pub fn theta0(&self) -> Vector {
        self.beta
            .iter()
            .zip(self.vartheta0())
            .map(|(b, v)| b + self.alpha0 * v)
            .collect()
    }
}

/// Design defaults: `nu = 4/9 + sum_{j=5}^{p_x} 1/j^2` by direct summation,
/// `beta_j = gamma_j = 1/(9 nu)` for `j <= 4` and `1/(j^2 nu)` beyond,
/// `delta_j = 3/j^2`, `alpha0 = 0`.
pub fn make_params(n: usize, p_x: usize, p_z: usize) -> Result<DgpParams> {
    if p_z < 1 || p_z > p_x {
        return Err(Error::Config(format!(
            "instrument loading [I 0] requires 1 <= p_z <= p_x, got p_z={p_z}, p_x={p_x}"
        )));
    }
    let mut nu = 0.0;
    for j in 1..=p_x {
        nu += if j <= 4 {
            1.0 / 9.0
        } else {
            1.0 / (j * j) as f64
        };
    }
    let beta: Vector = (1..=p_x)
        .map(|j| {
            if j <= 4 {
                1.0 / (9.0 * nu)
            } else {
                1.0 / ((j * j) as f64 * nu)
            }
        })
        .collect();
    let delta: Vector = (1..=p_z).map(|j| 3.0 / (j * j) as f64).collect();
    Ok(DgpParams {
        n,
        p_x,
        p_z,
        alpha0: 0.0,
        gamma: beta.clone(),
        beta,
        delta,
        err_corr: 0.6,
        noise_scale_y: 2.0,
        zeta_scale: 0.125,
        sigma_rho: 0.5,
    })
}

/// Latent disturbances kept alongside a draw for diagnostics.
#[derive(Debug, Clone)]
pub struct DrawLatents {
    pub eps: Vector,
    pub u: Vector,
}

/// One simulated sample: the observable dataset, the oracle side
/// information, and the latent disturbances.
#[derive(Debug, Clone)]
pub struct DrawnSample {
    pub data: Dataset,
    pub side: OracleSideInfo,
    pub alpha0: f64,
    pub latents: DrawLatents,
}

/// Reusable sampler holding the Cholesky factor of the control covariance.
pub struct Sampler<'a> {
    params: &'a DgpParams,
    chol: Matrix,
}

impl<'a> Sampler<'a> {
    pub fn new(params: &'a DgpParams) -> Result<Self> {
        if params.beta.len() != params.p_x
            || params.gamma.len() != params.p_x
            || params.delta.len() != params.p_z
        {
            return Err(Error::Dimension("dgp parameter vector lengths".into()));
        }
        if !(params.err_corr > -1.0 && params.err_corr < 1.0) {
            return Err(Error::Config(format!(
                "error correlation {} outside (-1,1)",
                params.err_corr
            )));
        }
        let chol = cholesky(&params.sigma())
            .map_err(|e| Error::Config(format!("control covariance not positive definite: {e}")))?;
        Ok(Sampler { params, chol })
    }

    /// Draws a full sample; deterministic in `seed`.
    pub fn draw(&self, seed: u64) -> DrawnSample {
        let p = self.params;
        let n = p.n;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let corr_c = (1.0 - p.err_corr * p.err_corr).sqrt();

        let mut x_rows: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut z_rows: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        let mut d = Vec::with_capacity(n);
        let mut eps_v = Vec::with_capacity(n);
        let mut u_v = Vec::with_capacity(n);
        let mut e_y = Vec::with_capacity(n);
        let mut e_d = Vec::with_capacity(n);
        let mut zeta_delta = Vec::with_capacity(n);

        let mut xi = vec![0.0; p.p_x];
        for _ in 0..n {
            for v in xi.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            // x = L xi, exploiting lower-triangular structure.
            let mut x = vec![0.0; p.p_x];
            for (j, xj) in x.iter_mut().enumerate() {
                let mut s = 0.0;
                for k in 0..=j {
                    s += self.chol.get(j, k) * xi[k];
                }
                *xj = s;
            }

            let e1: f64 = rng.sample(StandardNormal);
            let e2: f64 = rng.sample(StandardNormal);
            let eps = e1;
            let u = p.err_corr * e1 + corr_c * e2;

            let mut z = vec![0.0; p.p_z];
            let mut zd = 0.0;
            for (j, zj) in z.iter_mut().enumerate() {
                let zeta: f64 = rng.sample(StandardNormal);
                *zj = x[j] + p.zeta_scale * zeta;
                zd += zeta * p.delta[j];
            }

            let xgamma = dot(&x, &p.gamma);
            let zdelta = dot(&z, &p.delta);
            let di = xgamma + zdelta + u;
            let ed = xgamma + dot(&x[..p.p_z], &p.delta);
            let ey = p.alpha0 * ed + dot(&x, &p.beta);

            y.push(p.alpha0 * di + dot(&x, &p.beta) + p.noise_scale_y * eps);
            d.push(di);
            e_d.push(ed);
            e_y.push(ey);
            zeta_delta.push(zd);
            eps_v.push(eps);
            u_v.push(u);
            x_rows.push(x);
            z_rows.push(z);
        }

        // Estimators force an intercept; prepend a constant column.
        let x_mat = {
            let mut cols: Vec<Vec<f64>> = Vec::with_capacity(p.p_x + 1);
            cols.push(vec![1.0; n]);
            for j in 0..p.p_x {
                cols.push(x_rows.iter().map(|r| r[j]).collect());
            }
            Matrix::from_columns(&cols).expect("consistent draw")
        };
        let z_mat = {
            let cols: Vec<Vec<f64>> = (0..p.p_z)
                .map(|j| z_rows.iter().map(|r| r[j]).collect())
                .collect();
            if cols.is_empty() {
                Matrix::zeros(n, 0)
            } else {
                Matrix::from_columns(&cols).expect("consistent draw")
            }
        };
        let data = Dataset::new(
            y,
            Matrix::column(&d).expect("finite draw"),
            x_mat,
            z_mat,
            0,
        )
        .expect("draw produces a valid dataset");

        DrawnSample {
            data,
            side: OracleSideInfo {
                e_y_given_x: e_y,
                e_d_given_x: e_d,
                zeta_delta,
            },
            alpha0: p.alpha0,
            latents: DrawLatents { eps: eps_v, u: u_v },
        }
    }
}

/// Convenience wrapper building a fresh sampler per call.
pub fn draw(params: &DgpParams, seed: u64) -> Result<DrawnSample> {
    Ok(Sampler::new(params)?.draw(seed))
}

/// Population moment of the orthogonal IV system evaluated from the exact
/// second moments of this design (scalar endogenous case).
///
/// With `A = (alpha0-alpha) d + x'(beta - theta + alpha vartheta) + ...` and
/// `B = x'(gamma - vartheta) + z'delta`, the expectation `E[A B]` reduces to
/// quadratic forms in the covariance blocks of `(x, z)`; the disturbance
/// terms drop because `B` is a function of `(x, z)` only.
pub fn population_moment(
    params: &DgpParams,
    alpha: f64,
    theta: &[f64],
    vartheta: &[f64],
    gamma: &[f64],
    delta: &[f64],
) -> f64 {
    let p_x = params.p_x;
    let p_z = params.p_z;
    assert!(theta.len() == p_x && vartheta.len() == p_x && gamma.len() == p_x);
    assert!(delta.len() == p_z);

    let da = params.alpha0 - alpha;
    // A-side coefficients on x and z.
    let a_x: Vec<f64> = (0..p_x)
        .map(|j| da * params.gamma[j] + params.beta[j] - theta[j] + alpha * vartheta[j])
        .collect();
    let a_z: Vec<f64> = (0..p_z).map(|j| da * params.delta[j]).collect();
    // B-side coefficients.
    let b_x: Vec<f64> = (0..p_x).map(|j| gamma[j] - vartheta[j]).collect();
    let b_z = delta;

    let sigma = params.sigma();
    // Sigma_xz = Sigma Pi', i.e. the first p_z columns of Sigma.
    // Sigma_zz = Pi Sigma Pi' + zeta_scale^2 I.
    let s_bx = sigma.matvec(&b_x);
    let mut total = dot(&a_x, &s_bx);
    // a_x' Sigma_xz b_z = a_x' Sigma[:, :p_z] b_z
    for j in 0..p_z {
        let col_dot: f64 = (0..p_x).map(|i| a_x[i] * sigma.get(i, j)).sum();
        total += col_dot * b_z[j];
    }
    // a_z' Sigma_zx b_x = a_z' (first p_z rows of Sigma) b_x
    for i in 0..p_z {
        let row_dot: f64 = (0..p_x).map(|j| sigma.get(i, j) * b_x[j]).sum();
        total += a_z[i] * row_dot;
    }
    // a_z' Sigma_zz b_z
    for i in 0..p_z {
        let mut row = 0.0;
        for j in 0..p_z {
            let mut s = sigma.get(i, j);
            if i == j {
                s += params.zeta_scale * params.zeta_scale;
            }
            row += s * b_z[j];
        }
        total += a_z[i] * row;
    }
    total
}
