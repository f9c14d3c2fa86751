//! Acceptance suite: one test per criterion, each printing a pass/fail line
//! with the measured values before asserting. Criteria 1-4 share a single
//! 1000-replication run at the default configuration (n=200, p_x=200,
//! p_z=150, seed 20140501). Run with `--nocapture` to see the lines.

mod common;

use std::sync::OnceLock;

use common::{lasso_objective, median, percentile, prox_gradient_lasso};
use orthoiv::dgp::{make_params, population_moment, Sampler};
use orthoiv::harness::config::RunConfig;
use orthoiv::harness::{run_simulation, Method, ReplicationResult, SimulationSummary};
use orthoiv::lasso::{lasso_fit, LassoConfig};
use orthoiv::numkit::{chi_square_quantile, Matrix};
use orthoiv::orthogonal_iv::{
    estimate_alpha, estimate_nuisance, moment_mean, one_step_estimate, Mode,
};
use orthoiv::orthogonalize::{gmm_mu0, orthogonality_check, GmmGeometry};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

static SIM: OnceLock<(Vec<ReplicationResult>, SimulationSummary)> = OnceLock::new();

fn shared_run() -> &'static (Vec<ReplicationResult>, SimulationSummary) {
    SIM.get_or_init(|| {
        let rc = RunConfig::default();
        let params = rc.dgp_params().expect("default design");
        run_simulation(&params, &rc.lasso_config(), &rc.sim_options(), rc.reps, rc.seed)
            .expect("simulation run")
    })
}

struct Gate {
    criterion: &'static str,
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Gate {
    fn new(criterion: &'static str) -> Self {
        Gate {
            criterion,
            failures: Vec::new(),
            notes: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, detail: String) {
        if ok {
            self.notes.push(detail);
        } else {
            self.failures.push(detail);
        }
    }

    fn finish(self) {
        let status = if self.failures.is_empty() { "PASS" } else { "FAIL" };
        println!(
            "criterion {} [{status}]: {}{}",
            self.criterion,
            self.notes.join("; "),
            if self.failures.is_empty() {
                String::new()
            } else {
                format!(" | failed: {}", self.failures.join("; "))
            }
        );
        assert!(
            self.failures.is_empty(),
            "criterion {} failed: {}",
            self.criterion,
            self.failures.join("; ")
        );
    }
}

#[test]
fn criterion_1_table1_replication() {
    let (_, summary) = shared_run();
    let mut gate = Gate::new("1 (simulation study replication at the default design)");
    let ds = summary.for_method(Method::DoubleSelection).expect("ds row");
    let oracle = summary.for_method(Method::Oracle).expect("oracle row");

    gate.check(
        (ds.median_bias - 0.069).abs() <= 0.04,
        format!("double-selection bias {:.4} (target 0.069 +/- 0.04)", ds.median_bias),
    );
    gate.check(
        (ds.mad - 0.243).abs() <= 0.04,
        format!("double-selection MAD {:.4} (target 0.243 +/- 0.04)", ds.mad),
    );
    gate.check(
        (ds.size - 0.053).abs() <= 0.02,
        format!("double-selection size {:.4} (target 0.053 +/- 0.02)", ds.size),
    );
    gate.check(
        (oracle.size - 0.043).abs() <= 0.02,
        format!("oracle size {:.4} (target 0.043 +/- 0.02)", oracle.size),
    );
    gate.check(
        (oracle.mad - 0.247).abs() <= 0.04,
        format!("oracle MAD {:.4} (target 0.247 +/- 0.04)", oracle.mad),
    );
    gate.finish();
}

#[test]
fn criterion_2_naive_failure_reproduction() {
    let (_, summary) = shared_run();
    let mut gate = Gate::new("2 (qualitative naive-method failure)");
    let sw = summary.for_method(Method::Stepwise).expect("stepwise row");
    let no = summary.for_method(Method::NonOrthogonal).expect("non-orthogonal row");
    gate.check(
        sw.size > 0.15,
        format!("stepwise size {:.4} (> 0.15 required; reference value 0.261)", sw.size),
    );
    gate.check(
        no.size > 0.10,
        format!("non-orthogonal size {:.4} (> 0.10 required; reference value 0.189)", no.size),
    );
    gate.finish();
}

#[test]
fn criterion_3_null_calibration() {
    let (results, _) = shared_run();
    let mut gate = Gate::new("3 (chi-square null calibration)");
    let threshold = chi_square_quantile(0.95, 1).unwrap();
    let stats: Vec<f64> = results
        .iter()
        .filter_map(|r| r.c_alpha_at_alpha0)
        .collect();
    let rate = stats.iter().filter(|&&c| c > threshold).count() as f64 / stats.len() as f64;
    gate.check(
        (0.03..=0.08).contains(&rate) && stats.len() == 1000,
        format!(
            "rejection rate of the test statistic at the truth {:.4} over {} replications (target [0.03, 0.08])",
            rate,
            stats.len()
        ),
    );
    gate.finish();
}

#[test]
fn criterion_4_figure1_shape() {
    let (results, _) = shared_run();
    let mut gate = Gate::new("4 (standardized-estimate shape)");
    let mut ds_t: Vec<f64> = results
        .iter()
        .filter(|r| r.method == Method::DoubleSelection && r.converged)
        .map(|r| r.t_stat)
        .collect();
    ds_t.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let p05 = percentile(&ds_t, 0.05);
    let p95 = percentile(&ds_t, 0.95);
    let sw_t: Vec<f64> = results
        .iter()
        .filter(|r| r.method == Method::Stepwise && r.converged)
        .map(|r| r.t_stat)
        .collect();
    let sw_median = median(&sw_t);

    // Known red sub-check: the design's intrinsic right skew plus the
    // double-selection median bias seen in the summary-table check puts the
    // 5th percentile near -1.2 for every reconstruction tried (the
    // infeasible oracle's own 5th percentile sits at the -1.3 band edge).
    gate.check(
        (-2.1..=-1.3).contains(&p05),
        format!("double-selection 5th percentile {p05:.3} (required in [-2.1, -1.3])"),
    );
    gate.check(
        (1.3..=2.1).contains(&p95),
        format!("double-selection 95th percentile {p95:.3} (required in [1.3, 2.1])"),
    );
    gate.check(
        sw_median.abs() > 0.5,
        format!("stepwise |median| {:.3} (> 0.5 required)", sw_median.abs()),
    );
    gate.finish();
}

#[test]
fn criterion_5_lasso_oracle_equivalence() {
    let mut gate = Gate::new("5 (coordinate descent vs proximal-gradient oracle)");
    let mut rng = ChaCha12Rng::seed_from_u64(2024);
    let cfg = LassoConfig::default();
    let mut worst_gap = 0.0_f64;
    let mut worst_kkt = 0.0_f64;
    for trial in 0..50 {
        let n = 30 + (trial % 4) * 5;
        let p = 3 + trial % 6; // p <= 8
        let x = Matrix::new(n, p, (0..n * p).map(|_| rng.sample(StandardNormal)).collect()).unwrap();
        let truth: Vec<f64> = (0..p).map(|j| if j % 2 == 0 { 1.0 } else { 0.0 }).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let mut s = 0.0;
                for j in 0..p {
                    s += x.get(i, j) * truth[j];
                }
                s + 0.4 * rng.sample::<f64, _>(StandardNormal)
            })
            .collect();
        let psi: Vec<f64> = (0..p).map(|j| 0.7 + 0.1 * j as f64).collect();
        let lambda = 1.0 + 2.0 * (trial % 7) as f64;

        let fit = lasso_fit(&x, &y, lambda, &psi, &cfg).unwrap();
        let oracle = prox_gradient_lasso(&x, &y, lambda, &psi, &[], 1_000_000);
        let gap = (lasso_objective(&x, &y, lambda, &psi, &[], &fit.coefficients)
            - lasso_objective(&x, &y, lambda, &psi, &[], &oracle))
        .abs();
        worst_gap = worst_gap.max(gap);

        // KKT residual recomputed from scratch.
        let fitted = x.matvec(&fit.coefficients);
        let resid: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
        let nf = n as f64;
        for j in 0..p {
            let g: f64 = 2.0 * (0..n).map(|i| x.get(i, j) * resid[i]).sum::<f64>() / nf;
            let pen = lambda * psi[j] / nf;
            let r = if fit.coefficients[j] == 0.0 {
                (g.abs() - pen).max(0.0)
            } else {
                (g - pen * fit.coefficients[j].signum()).abs()
            };
            worst_kkt = worst_kkt.max(r);
        }
    }
    gate.check(
        worst_gap <= 1e-8,
        format!("max objective gap {worst_gap:.2e} over 50 instances (<= 1e-8)"),
    );
    gate.check(
        worst_kkt <= 1e-7,
        format!("max KKT residual {worst_kkt:.2e} (<= 1e-7)"),
    );
    gate.finish();
}

#[test]
fn criterion_6_orthogonality() {
    let mut gate = Gate::new("6 (moment orthogonality)");

    // Finite differences of the analytic population moment at the truth,
    // full default design.
    let params = make_params(200, 200, 150).unwrap();
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
    let max_d = orthogonality_check(&f, &[params.alpha0], &eta0, 1e-5).unwrap();
    gate.check(
        max_d <= 1e-6,
        format!("population finite-difference max-norm {max_d:.2e} (<= 1e-6)"),
    );

    // Annihilation property on 100 random geometries.
    let mut rng = ChaCha12Rng::seed_from_u64(606);
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let k = 4 + (rng.gen::<u64>() % 5) as usize;
        let d = 1 + (rng.gen::<u64>() % 2) as usize;
        let p0 = (k - d).min(1 + (rng.gen::<u64>() % 3) as usize);
        let g_alpha =
            Matrix::new(k, d, (0..k * d).map(|_| rng.sample(StandardNormal)).collect()).unwrap();
        let g_beta =
            Matrix::new(k, p0, (0..k * p0).map(|_| rng.sample(StandardNormal)).collect()).unwrap();
        let a = Matrix::new(k, k, (0..k * k).map(|_| rng.sample(StandardNormal)).collect()).unwrap();
        let mut omega = a.matmul(&a.transpose());
        for i in 0..k {
            omega.set(i, i, omega.get(i, i) + k as f64);
        }
        let mu = gmm_mu0(&GmmGeometry::new(g_alpha, g_beta.clone(), omega).unwrap()).unwrap();
        worst = worst.max(mu.matmul(&g_beta).max_abs());
    }
    gate.check(
        worst <= 1e-10,
        format!("max annihilation residual {worst:.2e} over 100 geometries (<= 1e-10)"),
    );
    gate.finish();
}

#[test]
fn criterion_7_estimator_algebra() {
    let mut gate = Gate::new("7 (estimator algebra on simulation draws)");
    let params = make_params(200, 200, 150).unwrap();
    let sampler = Sampler::new(&params).unwrap();
    let cfg = LassoConfig::default();
    let mut rng = ChaCha12Rng::seed_from_u64(707);
    let mut worst_onestep = 0.0_f64;
    let mut search_ok = true;
    for seed in [3u64, 17, 29] {
        let drawn = sampler.draw(seed);
        let data = &drawn.data;
        let eta = estimate_nuisance(data, &cfg, Mode::PostLasso).unwrap();
        let alpha = estimate_alpha(data, &eta).unwrap();
        for start in [-2.0, 0.0, 0.7, 4.0] {
            let one = one_step_estimate(data, &[start], &eta).unwrap();
            worst_onestep = worst_onestep.max((one[0] - alpha[0]).abs());
        }
        let m_hat = moment_mean(data, &alpha, &eta).unwrap()[0].abs();
        for _ in 0..100 {
            let cand = alpha[0] + 3.0 * rng.sample::<f64, _>(StandardNormal);
            let m = moment_mean(data, &[cand], &eta).unwrap()[0].abs();
            search_ok &= m + 1e-12 >= m_hat;
        }
    }
    gate.check(
        worst_onestep <= 1e-10,
        format!("max |one-step - closed form| {worst_onestep:.2e} (<= 1e-10)"),
    );
    gate.check(
        search_ok,
        "closed form minimizes the moment norm against 100-point random search on every draw"
            .to_string(),
    );
    gate.finish();
}

#[test]
fn criterion_8_rescaling_equivariance() {
    let mut gate = Gate::new("8 (rescaling equivariance)");
    let mut rng = ChaCha12Rng::seed_from_u64(808);
    let cfg = LassoConfig {
        kkt_tol: 1e-11,
        ..LassoConfig::default()
    };
    let mut worst = 0.0_f64;
    let mut supports_match = true;
    for trial in 0..20 {
        let n = 35;
        let p = 8;
        let x = Matrix::new(n, p, (0..n * p).map(|_| rng.sample(StandardNormal)).collect()).unwrap();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                x.get(i, 0) - 0.8 * x.get(i, 3) + 0.3 * rng.sample::<f64, _>(StandardNormal)
            })
            .collect();
        let psi: Vec<f64> = (0..p).map(|j| 0.9 + 0.05 * j as f64).collect();
        let lambda = 0.25 * n as f64;
        let fit = lasso_fit(&x, &y, lambda, &psi, &cfg).unwrap();

        let j = trial % p;
        let s = 1.0 + (trial as f64) * 0.37;
        let mut cols = x.to_columns();
        for v in cols[j].iter_mut() {
            *v *= s;
        }
        let xs = Matrix::from_columns(&cols).unwrap();
        let mut psi_s = psi.clone();
        psi_s[j] *= s;
        let fit_s = lasso_fit(&xs, &y, lambda, &psi_s, &cfg).unwrap();

        supports_match &= fit.support == fit_s.support;
        let f1 = x.matvec(&fit.coefficients);
        let f2 = xs.matvec(&fit_s.coefficients);
        for (a, b) in f1.iter().zip(&f2) {
            worst = worst.max((a - b).abs());
        }
        worst = worst.max((fit.coefficients[j] / s - fit_s.coefficients[j]).abs());
    }
    gate.check(
        supports_match && worst <= 1e-8,
        format!("max fitted-value/coefficient deviation {worst:.2e} over 20 instances (<= 1e-8), supports identical: {supports_match}"),
    );
    gate.finish();
}
