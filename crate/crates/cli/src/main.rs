//! Command-line harness: `simulate` runs the Monte Carlo study, `analyze`
//! runs the full inference pipeline on a CSV dataset, `check` runs property
//! suites. Exit codes: 0 success, 1 configuration error, 2 data error.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use orthoiv::error::Error;
use orthoiv::harness::checks::{kkt_suite, null_suite, ortho_suite, CheckReport};
use orthoiv::harness::config::{parse_methods, RunConfig};
use orthoiv::harness::csv_io::run_csv;
use orthoiv::harness::outputs::{emit_outputs, write_raw_dump};
use orthoiv::harness::run_simulation;

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(
    name = "orthoiv",
    version,
    about = "Post-selection inference in linear IV models with many controls and instruments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the Monte Carlo study and write summary/histogram files.
    Simulate {
        /// Flat `key = value` configuration file; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Number of replications.
        #[arg(long)]
        reps: Option<usize>,
        /// Base seed; replication i uses seed + i.
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated subset of: oracle, stepwise, non-orthogonal,
        /// double-selection (or "all").
        #[arg(long)]
        methods: Option<String>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Also write the raw per-replication dump (replications.tsv).
        #[arg(long)]
        dump_raw: bool,
        /// Base the 5% test on the sandwich standard error instead of the
        /// conventional homoscedastic IV one.
        #[arg(long)]
        robust_se: bool,
        /// Sample size per replication.
        #[arg(long)]
        n: Option<usize>,
        /// Number of control variables.
        #[arg(long)]
        p_x: Option<usize>,
        /// Number of instruments.
        #[arg(long)]
        p_z: Option<usize>,
    },
    /// Analyze a CSV dataset with the selection-based IV pipeline.
    Analyze {
        /// CSV file with a header row.
        #[arg(long)]
        csv: PathBuf,
        /// Role map file: one `column = role` line per column.
        #[arg(long)]
        roles: PathBuf,
        /// Confidence level.
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        /// Optional output directory for analysis.tsv.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Optional configuration file for solver settings.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run a property suite: kkt, ortho, or null.
    Check {
        #[arg(long)]
        suite: String,
        /// Replications for the null suite.
        #[arg(long, default_value_t = 1000)]
        reps: usize,
        #[arg(long, default_value_t = 20_140_501)]
        seed: u64,
    },
}

fn load_config(path: Option<&PathBuf>) -> Result<RunConfig, Error> {
    let mut rc = RunConfig::default();
    if let Some(p) = path {
        let text = fs::read_to_string(p)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?;
        rc.apply_file(&text)?;
    }
    Ok(rc)
}

fn print_reports(reports: &[CheckReport]) -> bool {
    let mut all_pass = true;
    for r in reports {
        let status = if r.pass { "PASS" } else { "FAIL" };
        println!("[{status}] {}: {}", r.name, r.detail);
        all_pass &= r.pass;
    }
    all_pass
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate {
            config,
            reps,
            seed,
            methods,
            out,
            dump_raw,
            robust_se,
            n,
            p_x,
            p_z,
        } => {
            let mut rc = load_config(config.as_ref())?;
            if let Some(v) = reps {
                rc.reps = v;
            }
            if let Some(v) = seed {
                rc.seed = v;
            }
            if let Some(v) = methods.as_deref() {
                rc.methods = parse_methods(v)?;
            }
            if let Some(v) = n {
                rc.n = v;
            }
            if let Some(v) = p_x {
                rc.p_x = v;
            }
            if let Some(v) = p_z {
                rc.p_z = v;
            }
            rc.dump_raw |= dump_raw;
            rc.robust_se |= robust_se;

            let params = rc.dgp_params()?;
            let lasso_cfg = rc.lasso_config();
            let opts = rc.sim_options();
            let (results, summary) = run_simulation(&params, &lasso_cfg, &opts, rc.reps, rc.seed)?;
            let written = emit_outputs(&summary, &out, &rc.manifest(VERSION))?;
            if rc.dump_raw {
                write_raw_dump(&results, &out.join("replications.tsv"))?;
            }

            println!("method            bias      mad       size    converged");
            for m in &summary.methods {
                println!(
                    "{:<17} {:>8.4} {:>8.4} {:>8.4}   {}/{}",
                    m.method.name(),
                    m.median_bias,
                    m.mad,
                    m.size,
                    m.n_converged,
                    m.n_total
                );
            }
            println!(
                "wrote {} files to {}",
                written.len() + usize::from(rc.dump_raw),
                out.display()
            );
            Ok(())
        }
        Command::Analyze {
            csv,
            roles,
            level,
            out,
            config,
        } => {
            let rc = load_config(config.as_ref())?;
            let analysis = run_csv(&csv, &roles, &rc.lasso_config(), level)?;
            let r = &analysis.result;
            let mut lines = String::new();
            for k in 0..r.alpha_hat.len() {
                lines.push_str(&format!(
                    "alpha[{k}] = {:.6}\n  se (homoscedastic IV) = {:.6}\n  se (robust sandwich)  = {:.6}\n  {:.0}% Wald CI          = [{:.6}, {:.6}]\n",
                    r.alpha_hat[k],
                    r.se_homoscedastic_iv[k],
                    r.se_robust[k],
                    level * 100.0,
                    r.wald_ci[k].0,
                    r.wald_ci[k].1
                ));
            }
            match analysis.inversion_interval {
                Some((lo, hi)) => {
                    let note = if analysis.inversion_contiguous {
                        ""
                    } else {
                        " (disconnected set; hull shown)"
                    };
                    lines.push_str(&format!(
                        "  {:.0}% inversion CI     = [{:.6}, {:.6}] from {} grid points{note}\n",
                        level * 100.0,
                        lo,
                        hi,
                        analysis.inversion_points
                    ));
                }
                None => lines.push_str("  inversion CI: empty on the searched grid\n"),
            }
            print!("{lines}");
            if let Some(dir) = out {
                fs::create_dir_all(&dir)
                    .map_err(|e| Error::Data(format!("cannot create {}: {e}", dir.display())))?;
                let mut tsv = String::from(
                    "component\talpha_hat\tse_homoscedastic_iv\tse_robust\twald_lo\twald_hi\n",
                );
                for k in 0..r.alpha_hat.len() {
                    tsv.push_str(&format!(
                        "{k}\t{}\t{}\t{}\t{}\t{}\n",
                        r.alpha_hat[k],
                        r.se_homoscedastic_iv[k],
                        r.se_robust[k],
                        r.wald_ci[k].0,
                        r.wald_ci[k].1
                    ));
                }
                fs::write(dir.join("analysis.tsv"), tsv)
                    .map_err(|e| Error::Data(format!("write analysis.tsv: {e}")))?;
            }
            Ok(())
        }
        Command::Check { suite, reps, seed } => {
            let reports = match suite.as_str() {
                "kkt" => kkt_suite(seed, 25),
                "ortho" => ortho_suite(seed),
                "null" => null_suite(reps, seed)?,
                other => {
                    return Err(Error::Config(format!(
                        "unknown suite '{other}' (expected kkt, ortho, null)"
                    )))
                }
            };
            if print_reports(&reports) {
                Ok(())
            } else {
                Err(Error::Data("one or more checks failed".into()))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e)
            if matches!(
                e.kind(),
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion
            ) =>
        {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
