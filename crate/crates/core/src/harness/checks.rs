//! Property check suites exposed through the command line: solver KKT
//! certificates, orthogonality of the moment system, and null calibration of
//! the chi-square test.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::dgp::{make_params, population_moment};
use crate::error::Result;
use crate::harness::{run_simulation, Method, SimOptions};
use crate::lasso::{lasso_fit_traced, penalty_level, LassoConfig};
use crate::numkit::matrix::Matrix;
use crate::numkit::chi_square_quantile;
use crate::orthogonalize::{gmm_mu0, orthogonality_check, GmmGeometry};

/// One named pass/fail line.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl CheckReport {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        CheckReport {
            name: name.to_string(),
            pass,
            detail,
        }
    }
}

fn rand_matrix(rng: &mut ChaCha12Rng, r: usize, c: usize) -> Matrix {
    Matrix::new(r, c, (0..r * c).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
}

/// KKT certificates and monotone descent on random penalized fits.
pub fn kkt_suite(seed: u64, instances: usize) -> Vec<CheckReport> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let cfg = LassoConfig::default().with_unpenalized(&[0]);
    let mut worst_kkt = 0.0_f64;
    let mut descent_ok = true;
    let mut all_converged = true;
    for t in 0..instances {
        let n = 40 + (t % 4) * 20;
        let p = 12 + (t % 5) * 8;
        let mut cols = vec![vec![1.0; n]];
        for _ in 1..p {
            cols.push((0..n).map(|_| rng.sample(StandardNormal)).collect());
        }
        let x = Matrix::from_columns(&cols).unwrap();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                1.5 * x.get(i, 1.min(p - 1)) - 0.7 * x.get(i, 2.min(p - 1))
                    + rng.sample::<f64, _>(StandardNormal)
            })
            .collect();
        let lambda = penalty_level(n, p - 1, &cfg).unwrap();
        let psi = vec![1.0; p];
        let (fit, trace) = lasso_fit_traced(&x, &y, lambda, &psi, &cfg).unwrap();
        all_converged &= fit.converged;
        descent_ok &= trace.windows(2).all(|w| w[1] <= w[0] + 1e-12);

        // Recompute the KKT residual from scratch.
        let fitted = x.matvec(&fit.coefficients);
        let resid: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
        let nf = n as f64;
        for j in 0..p {
            let g: f64 = 2.0 * (0..n).map(|i| x.get(i, j) * resid[i]).sum::<f64>() / nf;
            let r = if j == 0 {
                g.abs()
            } else if fit.coefficients[j] == 0.0 {
                (g.abs() - lambda * psi[j] / nf).max(0.0)
            } else {
                (g - (lambda * psi[j] / nf) * fit.coefficients[j].signum()).abs()
            };
            worst_kkt = worst_kkt.max(r);
        }
    }
    vec![
        CheckReport::new(
            "kkt-certificate",
            worst_kkt <= 1e-7 && all_converged,
            format!("max KKT residual {worst_kkt:.2e} over {instances} instances"),
        ),
        CheckReport::new(
            "monotone-descent",
            descent_ok,
            "objective non-increasing across sweeps".to_string(),
        ),
    ]
}

/// Orthogonality of the moment system: finite differences of the analytic
/// population moment at the truth, and the GMM annihilation property on
/// random geometries.
pub fn ortho_suite(seed: u64) -> Vec<CheckReport> {
    let params = make_params(200, 200, 150).expect("default design");
    let p_x = params.p_x;
    let p_z = params.p_z;
    let theta0 = params.theta0();
    let vt0 = params.vartheta0();
    let mut eta0 = Vec::new();
    eta0.extend_from_slice(&theta0);
    eta0.extend_from_slice(&vt0);
    eta0.extend_from_slice(&params.gamma);
    eta0.extend_from_slice(&params.delta);
    let f = |alpha: &[f64], eta: &[f64]| {
        vec![population_moment(
            &params,
            alpha[0],
            &eta[..p_x],
            &eta[p_x..2 * p_x],
            &eta[2 * p_x..3 * p_x],
            &eta[3 * p_x..3 * p_x + p_z],
        )]
    };
    let max_d = orthogonality_check(&f, &[params.alpha0], &eta0, 1e-5)
        .expect("population moment is smooth");
    let mut reports = vec![CheckReport::new(
        "population-orthogonality",
        max_d <= 1e-6,
        format!("max |dM/d eta| = {max_d:.2e} (threshold 1e-6)"),
    )];

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let k = 4 + (rng.gen::<u64>() % 5) as usize;
        let d = 1 + (rng.gen::<u64>() % 2) as usize;
        let p0 = (k - d).min(1 + (rng.gen::<u64>() % 3) as usize);
        let g_alpha = rand_matrix(&mut rng, k, d);
        let g_beta = rand_matrix(&mut rng, k, p0);
        let a = rand_matrix(&mut rng, k, k);
        let mut omega = a.matmul(&a.transpose());
        for i in 0..k {
            omega.set(i, i, omega.get(i, i) + k as f64);
        }
        let geom = GmmGeometry::new(g_alpha, g_beta.clone(), omega).expect("valid geometry");
        let mu = gmm_mu0(&geom).expect("well-conditioned");
        worst = worst.max(mu.matmul(&g_beta).max_abs());
    }
    reports.push(CheckReport::new(
        "gmm-annihilation",
        worst <= 1e-10,
        format!("max |mu0 G_beta| = {worst:.2e} over 100 geometries (threshold 1e-10)"),
    ));
    reports
}

/// Null calibration: rejection rate of the chi-square test at the true value
/// over simulation replications, expected within [0.03, 0.08].
pub fn null_suite(reps: usize, seed: u64) -> Result<Vec<CheckReport>> {
    let params = make_params(200, 200, 150)?;
    let cfg = LassoConfig::default();
    let opts = SimOptions {
        methods: vec![Method::DoubleSelection],
        ..SimOptions::default()
    };
    let (results, _) = run_simulation(&params, &cfg, &opts, reps, seed)?;
    let threshold = chi_square_quantile(0.95, 1)?;
    let mut total = 0usize;
    let mut rejected = 0usize;
    for r in &results {
        if let Some(c) = r.c_alpha_at_alpha0 {
            total += 1;
            if c > threshold {
                rejected += 1;
            }
        }
    }
    let rate = rejected as f64 / total.max(1) as f64;
    Ok(vec![CheckReport::new(
        "c-alpha-null-calibration",
        (0.03..=0.08).contains(&rate) && total > 0,
        format!("rejection rate {rate:.4} over {total} replications (target [0.03, 0.08])"),
    )])
}
