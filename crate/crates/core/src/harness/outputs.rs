//! File emission: summary table, per-method histograms, run manifest, and
//! the raw per-replication dump. All writers are deterministic so re-running
//! with the same configuration reproduces byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::{
    Histogram, Method, ReplicationResult, SimulationSummary, HIST_BINS, HIST_HI, HIST_LO,
};

fn fmt_stat(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.6}")
    }
}

/// Writes `summary.tsv`, one `histogram_<method>.csv` per method, and
/// `run_manifest.txt`; returns the paths written.
pub fn emit_outputs(
    summary: &SimulationSummary,
    out_dir: &Path,
    manifest: &str,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)
        .map_err(|e| Error::Data(format!("cannot create {}: {e}", out_dir.display())))?;
    let mut written = Vec::new();

    let mut tsv = String::from("method\tbias\tmad\tsize\tn_converged\tn_total\n");
    for m in &summary.methods {
        tsv.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            m.method.name(),
            fmt_stat(m.median_bias),
            fmt_stat(m.mad),
            fmt_stat(m.size),
            m.n_converged,
            m.n_total
        ));
    }
    let summary_path = out_dir.join("summary.tsv");
    write_file(&summary_path, &tsv)?;
    written.push(summary_path);

    for m in &summary.methods {
        let path = out_dir.join(format!("histogram_{}.csv", m.method.name()));
        write_file(&path, &histogram_csv(&m.histogram))?;
        written.push(path);
    }

    let manifest_path = out_dir.join("run_manifest.txt");
    write_file(&manifest_path, manifest)?;
    written.push(manifest_path);
    Ok(written)
}

fn histogram_csv(h: &Histogram) -> String {
    let width = (HIST_HI - HIST_LO) / HIST_BINS as f64;
    let mut s = String::from("bin_left,bin_right,count\n");
    s.push_str(&format!("-inf,{HIST_LO:.2},{}\n", h.lower_tail));
    for (i, c) in h.counts.iter().enumerate() {
        let left = HIST_LO + width * i as f64;
        let right = left + width;
        s.push_str(&format!("{left:.2},{right:.2},{c}\n"));
    }
    s.push_str(&format!("{HIST_HI:.2},inf,{}\n", h.upper_tail));
    s
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::Data(format!("write {}: {e}", path.display())))
}

const RAW_HEADER: &str =
    "method\tseed\tconverged\talpha_hat\tse_homoscedastic\tse_robust\tse_used\tt_stat\treject_05\tc_alpha_at_alpha0\tdraw_checksum\n";

/// Raw per-replication dump; floats use the shortest round-trip
/// representation, so aggregation over a parsed dump reproduces the summary
/// exactly.
pub fn write_raw_dump(results: &[ReplicationResult], path: &Path) -> Result<()> {
    let mut s = String::from(RAW_HEADER);
    for r in results {
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:016x}\n",
            r.method.name(),
            r.seed,
            r.converged,
            r.alpha_hat,
            r.se_homoscedastic,
            r.se_robust,
            r.se_used,
            r.t_stat,
            r.reject_05,
            r.c_alpha_at_alpha0
                .map_or_else(|| "-".to_string(), |v| v.to_string()),
            r.draw_checksum
        ));
    }
    write_file(path, &s)
}

/// Parses a raw dump back into replication results.
pub fn read_raw_dump(text: &str) -> Result<Vec<ReplicationResult>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if format!("{h}\n") == RAW_HEADER => {}
        _ => return Err(Error::Data("raw dump: bad header".into())),
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 11 {
            return Err(Error::Data(format!("raw dump line {}: expected 11 fields", i + 2)));
        }
        let parse_f = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::Data(format!("raw dump line {}: bad float '{s}'", i + 2)))
        };
        out.push(ReplicationResult {
            method: Method::parse(f[0])?,
            seed: f[1]
                .parse()
                .map_err(|_| Error::Data(format!("raw dump line {}: bad seed", i + 2)))?,
            converged: f[2] == "true",
            alpha_hat: parse_f(f[3])?,
            se_homoscedastic: parse_f(f[4])?,
            se_robust: parse_f(f[5])?,
            se_used: parse_f(f[6])?,
            t_stat: parse_f(f[7])?,
            reject_05: f[8] == "true",
            c_alpha_at_alpha0: if f[9] == "-" { None } else { Some(parse_f(f[9])?) },
            draw_checksum: u64::from_str_radix(f[10], 16)
                .map_err(|_| Error::Data(format!("raw dump line {}: bad checksum", i + 2)))?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::aggregate;

    #[test]
    fn empty_summary_writes_header_only() {
        let dir = std::env::temp_dir().join("orthoiv_test_outputs_empty");
        let _ = fs::remove_dir_all(&dir);
        let summary = SimulationSummary {
            alpha0: 0.0,
            methods: vec![],
        };
        emit_outputs(&summary, &dir, "# manifest\n").unwrap();
        let tsv = fs::read_to_string(dir.join("summary.tsv")).unwrap();
        assert_eq!(tsv, "method\tbias\tmad\tsize\tn_converged\tn_total\n");
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn raw_dump_roundtrip_preserves_aggregation() {
        let results = vec![
            ReplicationResult {
                method: Method::Oracle,
                seed: 3,
                converged: true,
                alpha_hat: 0.123456789123456789,
                se_homoscedastic: 0.4,
                se_robust: 0.41,
                se_used: 0.4,
                t_stat: 0.308,
                reject_05: false,
                c_alpha_at_alpha0: None,
                draw_checksum: 0xdeadbeef,
            },
            ReplicationResult {
                method: Method::DoubleSelection,
                seed: 3,
                converged: false,
                alpha_hat: f64::NAN,
                se_homoscedastic: f64::NAN,
                se_robust: f64::NAN,
                se_used: f64::NAN,
                t_stat: f64::NAN,
                reject_05: false,
                c_alpha_at_alpha0: Some(2.5),
                draw_checksum: 1,
            },
        ];
        let path = std::env::temp_dir().join("orthoiv_test_rawdump.tsv");
        write_raw_dump(&results, &path).unwrap();
        let parsed = read_raw_dump(&fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(parsed.len(), 2);
        // Bit-exact float round trip.
        assert_eq!(parsed[0].alpha_hat.to_bits(), results[0].alpha_hat.to_bits());
        assert!(parsed[1].alpha_hat.is_nan());
        assert_eq!(parsed[1].c_alpha_at_alpha0, Some(2.5));

        let a1 = aggregate(&results, 0.0);
        let a2 = aggregate(&parsed, 0.0);
        for (m1, m2) in a1.methods.iter().zip(&a2.methods) {
            assert_eq!(m1.method, m2.method);
            assert_eq!(m1.n_converged, m2.n_converged);
            assert!(
                (m1.median_bias == m2.median_bias)
                    || (m1.median_bias.is_nan() && m2.median_bias.is_nan())
            );
        }
        let _ = fs::remove_file(&path);
    }

    #[test]
    fn rewrites_are_byte_identical() {
        let dir = std::env::temp_dir().join("orthoiv_test_outputs_stable");
        let _ = fs::remove_dir_all(&dir);
        let results = vec![ReplicationResult {
            method: Method::Oracle,
            seed: 0,
            converged: true,
            alpha_hat: 0.25,
            se_homoscedastic: 0.5,
            se_robust: 0.5,
            se_used: 0.5,
            t_stat: 0.5,
            reject_05: false,
            c_alpha_at_alpha0: None,
            draw_checksum: 42,
        }];
        let summary = aggregate(&results, 0.0);
        emit_outputs(&summary, &dir, "# manifest\nseed = 0\n").unwrap();
        let first = fs::read_to_string(dir.join("summary.tsv")).unwrap();
        let first_hist = fs::read_to_string(dir.join("histogram_oracle.csv")).unwrap();
        emit_outputs(&summary, &dir, "# manifest\nseed = 0\n").unwrap();
        assert_eq!(fs::read_to_string(dir.join("summary.tsv")).unwrap(), first);
        assert_eq!(
            fs::read_to_string(dir.join("histogram_oracle.csv")).unwrap(),
            first_hist
        );
        // 48 interior bins plus two tails plus header.
        assert_eq!(first_hist.lines().count(), 51);
        let _ = fs::remove_dir_all(&dir);
    }
}
