//! Monte Carlo orchestration: per-replication method runs, aggregation into
//! summary tables and histograms, file outputs, CSV ingestion, and property
//! check suites.

pub mod checks;
pub mod config;
pub mod csv_io;
pub mod outputs;

use rayon::prelude::*;

use crate::baselines::{
    non_orthogonal_from_supports, oracle_estimate, screening_supports, stepwise_2sls,
};
use crate::dgp::{DgpParams, DrawnSample, Sampler};
use crate::error::{Error, Result};
use crate::lasso::{FeasibleLasso, LassoConfig};
use crate::numkit::normal_quantile;
use crate::orthogonal_iv::{
    first_stage_fits, infer_with_nuisance, nuisance_from_first_stages, Dataset, Mode,
};

/// Estimation strategies compared in the simulation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Oracle,
    Stepwise,
    NonOrthogonal,
    DoubleSelection,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Oracle,
        Method::Stepwise,
        Method::NonOrthogonal,
        Method::DoubleSelection,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Oracle => "oracle",
            Method::Stepwise => "stepwise",
            Method::NonOrthogonal => "non-orthogonal",
            Method::DoubleSelection => "double-selection",
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        match s.trim() {
            "oracle" => Ok(Method::Oracle),
            "stepwise" => Ok(Method::Stepwise),
            "non-orthogonal" => Ok(Method::NonOrthogonal),
            "double-selection" => Ok(Method::DoubleSelection),
            other => Err(Error::Config(format!(
                "unknown method '{other}' (expected oracle, stepwise, non-orthogonal, double-selection)"
            ))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-replication options shared across methods.
#[derive(Debug, Clone)]
pub struct SimOptions {
    pub methods: Vec<Method>,
    /// Use the sandwich standard error for the 5% test instead of the
    /// conventional homoscedastic IV one.
    pub robust_se: bool,
    pub stepwise_p_enter: f64,
    pub stepwise_p_remove: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            methods: Method::ALL.to_vec(),
            robust_se: false,
            stepwise_p_enter: 0.05,
            stepwise_p_remove: 0.10,
        }
    }
}

/// Outcome of one method on one draw. Failed replications keep NaN numeric
/// fields and `converged = false`; they are never dropped silently.
#[derive(Debug, Clone)]
pub struct ReplicationResult {
    pub method: Method,
    pub seed: u64,
    pub converged: bool,
    pub alpha_hat: f64,
    pub se_homoscedastic: f64,
    pub se_robust: f64,
    /// The standard error the 5% test was based on.
    pub se_used: f64,
    pub t_stat: f64,
    pub reject_05: bool,
    /// C(alpha) statistic at the true value (double-selection only).
    pub c_alpha_at_alpha0: Option<f64>,
    /// Checksum of the draw consumed, identical across methods within a
    /// replication.
    pub draw_checksum: u64,
}

impl ReplicationResult {
    fn failed(method: Method, seed: u64, checksum: u64) -> Self {
        ReplicationResult {
            method,
            seed,
            converged: false,
            alpha_hat: f64::NAN,
            se_homoscedastic: f64::NAN,
            se_robust: f64::NAN,
            se_used: f64::NAN,
            t_stat: f64::NAN,
            reject_05: false,
            c_alpha_at_alpha0: None,
            draw_checksum: checksum,
        }
    }
}

fn fnv1a(h: &mut u64, bytes: &[u8]) {
    for &b in bytes {
        *h ^= b as u64;
        *h = h.wrapping_mul(0x100_0000_01b3);
    }
}

/// FNV-1a checksum over the observable part of a draw.
pub fn draw_checksum(data: &Dataset) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325_u64;
    for v in &data.y {
        fnv1a(&mut h, &v.to_le_bytes());
    }
    for m in [&data.d, &data.x, &data.z] {
        for v in m.data() {
            fnv1a(&mut h, &v.to_le_bytes());
        }
    }
    h
}

fn finish(
    method: Method,
    seed: u64,
    checksum: u64,
    alpha0: f64,
    robust: bool,
    z_crit: f64,
    res: crate::orthogonal_iv::InferenceResult,
) -> ReplicationResult {
    let alpha_hat = res.alpha_hat[0];
    let se_hom = res.se_homoscedastic_iv[0];
    let se_rob = res.se_robust[0];
    let se_used = if robust { se_rob } else { se_hom };
    let t_stat = (alpha_hat - alpha0) / se_used;
    ReplicationResult {
        method,
        seed,
        converged: t_stat.is_finite(),
        alpha_hat,
        se_homoscedastic: se_hom,
        se_robust: se_rob,
        se_used,
        t_stat,
        reject_05: t_stat.is_finite() && t_stat.abs() > z_crit,
        c_alpha_at_alpha0: res.c_alpha_at_alpha0,
        draw_checksum: checksum,
    }
}

/// Runs every requested method on one draw. All methods consume the identical
/// draw; shared screening regressions are computed once. Method failures are
/// recorded as non-converged results, never as batch errors.
pub fn run_replication_on(
    drawn: &DrawnSample,
    cfg: &LassoConfig,
    opts: &SimOptions,
    seed: u64,
) -> Vec<ReplicationResult> {
    let data = &drawn.data;
    let checksum = draw_checksum(data);
    let alpha0 = drawn.alpha0;
    let z_crit = normal_quantile(0.975).expect("fixed quantile");

    let needs_lasso = opts
        .methods
        .iter()
        .any(|m| matches!(m, Method::DoubleSelection | Method::NonOrthogonal));
    let shared: Option<Result<(Vec<FeasibleLasso>, FeasibleLasso)>> =
        needs_lasso.then(|| first_stage_fits(data, cfg));

    let mut out = Vec::with_capacity(opts.methods.len());
    for &method in &opts.methods {
        let result = match method {
            Method::Oracle => oracle_estimate(data, &drawn.side)
                .map(|r| finish(method, seed, checksum, alpha0, opts.robust_se, z_crit, r)),
            Method::Stepwise => stepwise_2sls(data, opts.stepwise_p_enter, opts.stepwise_p_remove)
                .map(|r| finish(method, seed, checksum, alpha0, opts.robust_se, z_crit, r)),
            Method::NonOrthogonal => match shared.as_ref().expect("shared fits requested") {
                Ok((fits_d, fit_y)) => {
                    let supports = screening_supports(data, fits_d, fit_y);
                    non_orthogonal_from_supports(data, &supports)
                        .map(|r| finish(method, seed, checksum, alpha0, opts.robust_se, z_crit, r))
                }
                Err(_) => Err(Error::Data("shared screening failed".into())),
            },
            Method::DoubleSelection => match shared.as_ref().expect("shared fits requested") {
                Ok((fits_d, fit_y)) => {
                    nuisance_from_first_stages(data, cfg, Mode::PostLasso, fits_d, fit_y)
                        .and_then(|eta| {
                            infer_with_nuisance(data, &eta, 0.95, Some(&[alpha0]))
                        })
                        .map(|r| finish(method, seed, checksum, alpha0, opts.robust_se, z_crit, r))
                }
                Err(_) => Err(Error::Data("shared screening failed".into())),
            },
        };
        out.push(result.unwrap_or_else(|_| ReplicationResult::failed(method, seed, checksum)));
    }
    out
}

/// Single-draw convenience wrapper: draw with `seed`, then run the methods.
pub fn run_replication(
    params: &DgpParams,
    cfg: &LassoConfig,
    opts: &SimOptions,
    seed: u64,
) -> Result<Vec<ReplicationResult>> {
    let sampler = Sampler::new(params)?;
    Ok(run_replication_on(&sampler.draw(seed), cfg, opts, seed))
}

/// Runs `reps` replications with seeds `base_seed + index`, in parallel, and
/// aggregates. The per-replication seeding makes the result independent of
/// the execution order and the degree of parallelism.
pub fn run_simulation(
    params: &DgpParams,
    cfg: &LassoConfig,
    opts: &SimOptions,
    reps: usize,
    base_seed: u64,
) -> Result<(Vec<ReplicationResult>, SimulationSummary)> {
    if reps == 0 {
        return Err(Error::Config("reps must be positive".into()));
    }
    let sampler = Sampler::new(params)?;
    let nested: Vec<Vec<ReplicationResult>> = (0..reps)
        .into_par_iter()
        .map(|i| {
            let seed = base_seed + i as u64;
            run_replication_on(&sampler.draw(seed), cfg, opts, seed)
        })
        .collect();
    let results: Vec<ReplicationResult> = nested.into_iter().flatten().collect();
    let summary = aggregate(&results, params.alpha0);
    Ok((results, summary))
}

/// Histogram of standardized estimates over [-6, 6] in 48 bins, with the
/// spillover counted in two tail bins.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    pub lower_tail: u64,
    pub counts: Vec<u64>,
    pub upper_tail: u64,
}

pub const HIST_BINS: usize = 48;
pub const HIST_LO: f64 = -6.0;
pub const HIST_HI: f64 = 6.0;

impl Histogram {
    fn from_values(values: &[f64]) -> Histogram {
        let width = (HIST_HI - HIST_LO) / HIST_BINS as f64;
        let mut counts = vec![0u64; HIST_BINS];
        let mut lower = 0;
        let mut upper = 0;
        for &v in values {
            if v < HIST_LO {
                lower += 1;
            } else {
                let idx = ((v - HIST_LO) / width).floor() as usize;
                if idx >= HIST_BINS {
                    upper += 1;
                } else {
                    counts[idx] += 1;
                }
            }
        }
        Histogram {
            lower_tail: lower,
            counts,
            upper_tail: upper,
        }
    }

    pub fn total(&self) -> u64 {
        self.lower_tail + self.upper_tail + self.counts.iter().sum::<u64>()
    }
}

/// Summary statistics for one method.
#[derive(Debug, Clone)]
pub struct MethodSummary {
    pub method: Method,
    pub n_total: usize,
    pub n_converged: usize,
    /// Median of `alpha_hat - alpha0` among converged replications.
    pub median_bias: f64,
    /// Median of `|alpha_hat - alpha0|`.
    pub mad: f64,
    /// Rejection frequency of the 5% test among converged replications.
    pub size: f64,
    pub histogram: Histogram,
}

#[derive(Debug, Clone)]
pub struct SimulationSummary {
    pub alpha0: f64,
    pub methods: Vec<MethodSummary>,
}

impl SimulationSummary {
    pub fn for_method(&self, method: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == method)
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Aggregates replication results per method. A method whose replications all
/// failed is reported with `n_converged = 0` and NaN statistics (missing,
/// not zero).
pub fn aggregate(results: &[ReplicationResult], alpha0: f64) -> SimulationSummary {
    let mut methods = Vec::new();
    for method in Method::ALL {
        let rows: Vec<&ReplicationResult> =
            results.iter().filter(|r| r.method == method).collect();
        if rows.is_empty() {
            continue;
        }
        let converged: Vec<&&ReplicationResult> = rows.iter().filter(|r| r.converged).collect();
        let n_converged = converged.len();
        let (median_bias, mad, size, histogram) = if n_converged == 0 {
            (f64::NAN, f64::NAN, f64::NAN, Histogram::from_values(&[]))
        } else {
            let mut dev: Vec<f64> = converged.iter().map(|r| r.alpha_hat - alpha0).collect();
            dev.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let bias = median(&dev);
            let mut abs_dev: Vec<f64> = dev.iter().map(|d| d.abs()).collect();
            abs_dev.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mad = median(&abs_dev);
            let rejections = converged.iter().filter(|r| r.reject_05).count();
            let size = rejections as f64 / n_converged as f64;
            let t_values: Vec<f64> = converged.iter().map(|r| r.t_stat).collect();
            (bias, mad, size, Histogram::from_values(&t_values))
        };
        methods.push(MethodSummary {
            method,
            n_total: rows.len(),
            n_converged,
            median_bias,
            mad,
            size,
            histogram,
        });
    }
    SimulationSummary { alpha0, methods }
}
