//! Flat `key = value` run configuration, merged from defaults, an optional
//! config file, and command-line overrides; echoed verbatim into the run
//! manifest so outputs are reproducible from the manifest alone.

use crate::dgp::{make_params, DgpParams};
use crate::error::{Error, Result};
use crate::harness::{Method, SimOptions};
use crate::lasso::LassoConfig;

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub n: usize,
    pub p_x: usize,
    pub p_z: usize,
    pub reps: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub penalty_constant: f64,
    pub tail_prob: f64,
    pub kkt_tol: f64,
    pub max_sweeps: usize,
    pub loading_iterations: usize,
    pub stepwise_p_enter: f64,
    pub stepwise_p_remove: f64,
    pub robust_se: bool,
    pub dump_raw: bool,
    pub level: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n: 200,
            p_x: 200,
            p_z: 150,
            reps: 1000,
            seed: 20_140_501,
            methods: Method::ALL.to_vec(),
            penalty_constant: 1.1,
            tail_prob: 0.1,
            kkt_tol: 1e-7,
            max_sweeps: 10_000,
            loading_iterations: 2,
            stepwise_p_enter: 0.05,
            stepwise_p_remove: 0.10,
            robust_se: false,
            dump_raw: false,
            level: 0.95,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for key '{key}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(Error::Config(format!("invalid boolean '{other}' for key '{key}'"))),
    }
}

pub fn parse_methods(value: &str) -> Result<Vec<Method>> {
    let mut methods = Vec::new();
    for part in value.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        if part == "all" {
            return Ok(Method::ALL.to_vec());
        }
        let m = Method::parse(part)?;
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    if methods.is_empty() {
        return Err(Error::Config("empty method list".into()));
    }
    Ok(methods)
}

impl RunConfig {
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "n" => self.n = parse(key, value)?,
            "p_x" => self.p_x = parse(key, value)?,
            "p_z" => self.p_z = parse(key, value)?,
            "reps" => self.reps = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "methods" => self.methods = parse_methods(value)?,
            "penalty_constant" => self.penalty_constant = parse(key, value)?,
            "tail_prob" => self.tail_prob = parse(key, value)?,
            "kkt_tol" => self.kkt_tol = parse(key, value)?,
            "max_sweeps" => self.max_sweeps = parse(key, value)?,
            "loading_iterations" => self.loading_iterations = parse(key, value)?,
            "stepwise_p_enter" => self.stepwise_p_enter = parse(key, value)?,
            "stepwise_p_remove" => self.stepwise_p_remove = parse(key, value)?,
            "robust_se" => self.robust_se = parse_bool(key, value)?,
            "dump_raw" => self.dump_raw = parse_bool(key, value)?,
            "level" => self.level = parse(key, value)?,
            other => {
                return Err(Error::Config(format!("unknown configuration key '{other}'")));
            }
        }
        Ok(())
    }

    /// Applies a flat `key = value` file: one pair per line, `#` comments and
    /// blank lines allowed.
    pub fn apply_file(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "config line {}: expected 'key = value', got '{line}'",
                    lineno + 1
                )));
            };
            self.apply_kv(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn lasso_config(&self) -> LassoConfig {
        LassoConfig {
            penalty_constant: self.penalty_constant,
            tail_prob: self.tail_prob,
            max_sweeps: self.max_sweeps,
            kkt_tol: self.kkt_tol,
            loading_iterations: self.loading_iterations,
            unpenalized: Vec::new(),
        }
    }

    pub fn dgp_params(&self) -> Result<DgpParams> {
        let mut p = make_params(self.n, self.p_x, self.p_z)?;
        p.n = self.n;
        Ok(p)
    }

    pub fn sim_options(&self) -> SimOptions {
        SimOptions {
            methods: self.methods.clone(),
            robust_se: self.robust_se,
            stepwise_p_enter: self.stepwise_p_enter,
            stepwise_p_remove: self.stepwise_p_remove,
        }
    }

    fn methods_string(&self) -> String {
        self.methods
            .iter()
            .map(|m| m.name())
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Full `key = value` echo of the resolved configuration, plus the seed
    /// range and code version. Deterministic: no timestamps or paths.
    pub fn manifest(&self, version: &str) -> String {
        let mut s = String::new();
        s.push_str("# run manifest\n");
        s.push_str(&format!("version = {version}\n"));
        s.push_str(&format!("n = {}\n", self.n));
        s.push_str(&format!("p_x = {}\n", self.p_x));
        s.push_str(&format!("p_z = {}\n", self.p_z));
        s.push_str(&format!("reps = {}\n", self.reps));
        s.push_str(&format!("seed = {}\n", self.seed));
        s.push_str(&format!(
            "seed_range = {}..{}\n",
            self.seed,
            self.seed + self.reps.saturating_sub(1) as u64
        ));
        s.push_str(&format!("methods = {}\n", self.methods_string()));
        s.push_str(&format!("penalty_constant = {}\n", self.penalty_constant));
        s.push_str(&format!("tail_prob = {}\n", self.tail_prob));
        s.push_str(&format!("kkt_tol = {}\n", self.kkt_tol));
        s.push_str(&format!("max_sweeps = {}\n", self.max_sweeps));
        s.push_str(&format!("loading_iterations = {}\n", self.loading_iterations));
        s.push_str(&format!("stepwise_p_enter = {}\n", self.stepwise_p_enter));
        s.push_str(&format!("stepwise_p_remove = {}\n", self.stepwise_p_remove));
        s.push_str(&format!("robust_se = {}\n", self.robust_se));
        s.push_str(&format!("dump_raw = {}\n", self.dump_raw));
        s.push_str(&format!("level = {}\n", self.level));
        s
    }
}
