//! CSV ingestion for user-supplied datasets: column-role maps, dataset
//! loading with row-level error reporting, the full analysis pipeline, and a
//! dataset exporter used for round-trip checks.

use std::fmt;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::lasso::LassoConfig;
use crate::numkit::{chi_square_quantile, Matrix};
use crate::orthogonal_iv::{
    c_alpha_statistic, default_inversion_grid, estimate_nuisance, infer_with_nuisance, Dataset,
    InferenceResult, Mode,
};

/// Role of a CSV column in the analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Outcome,
    Endogenous,
    Control,
    Instrument,
    Ignore,
}

impl Role {
    fn parse(s: &str) -> Result<Role> {
        match s {
            "outcome" => Ok(Role::Outcome),
            "endogenous" => Ok(Role::Endogenous),
            "control" => Ok(Role::Control),
            "instrument" => Ok(Role::Instrument),
            "ignore" => Ok(Role::Ignore),
            other => Err(Error::Config(format!(
                "unknown role '{other}' (expected outcome, endogenous, control, instrument, ignore)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Role::Outcome => "outcome",
            Role::Endogenous => "endogenous",
            Role::Control => "control",
            Role::Instrument => "instrument",
            Role::Ignore => "ignore",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Parses a role map: one `column = role` pair per line, `#` comments
/// allowed. Assigning a column twice is a configuration error.
pub fn parse_roles(text: &str) -> Result<Vec<(String, Role)>> {
    let mut roles: Vec<(String, Role)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((name, role)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "roles line {}: expected 'column = role', got '{line}'",
                lineno + 1
            )));
        };
        let name = name.trim().to_string();
        if roles.iter().any(|(n, _)| *n == name) {
            return Err(Error::Config(format!(
                "roles line {}: column '{name}' assigned more than one role",
                lineno + 1
            )));
        }
        roles.push((name, Role::parse(role.trim())?));
    }
    if roles.is_empty() {
        return Err(Error::Config("roles file assigns no columns".into()));
    }
    Ok(roles)
}

/// Loads a header-carrying CSV into a dataset, given the role of every
/// column. An intercept column of ones is prepended to the controls.
pub fn load_dataset_csv(path: &Path, roles: &[(String, Role)]) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Data(format!("cannot read header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();

    // Every CSV column must carry exactly one role, and every role entry
    // must refer to an existing column.
    for (name, _) in roles {
        if !headers.iter().any(|h| h == name) {
            return Err(Error::Config(format!(
                "roles file names column '{name}' which is not in the CSV header"
            )));
        }
    }
    let col_roles: Vec<Role> = headers
        .iter()
        .map(|h| {
            roles
                .iter()
                .find(|(n, _)| n == h)
                .map(|(_, r)| *r)
                .ok_or_else(|| {
                    Error::Config(format!(
                        "column '{h}' has no assigned role (use 'ignore' to skip it)"
                    ))
                })
        })
        .collect::<Result<_>>()?;

    let n_outcome = col_roles.iter().filter(|r| **r == Role::Outcome).count();
    if n_outcome != 1 {
        return Err(Error::Config(format!(
            "exactly one outcome column required, found {n_outcome}"
        )));
    }
    if !col_roles.iter().any(|r| *r == Role::Endogenous) {
        return Err(Error::Config("no endogenous column assigned".into()));
    }

    let mut y = Vec::new();
    let mut d_cols: Vec<Vec<f64>> = vec![];
    let mut x_cols: Vec<Vec<f64>> = vec![];
    let mut z_cols: Vec<Vec<f64>> = vec![];
    for r in &col_roles {
        match r {
            Role::Endogenous => d_cols.push(Vec::new()),
            Role::Control => x_cols.push(Vec::new()),
            Role::Instrument => z_cols.push(Vec::new()),
            _ => {}
        }
    }

    // Header is line 1; the first record is line 2.
    for (rec_idx, record) in reader.records().enumerate() {
        let line = rec_idx + 2;
        let record = record.map_err(|e| Error::Data(format!("line {line}: {e}")))?;
        if record.len() != headers.len() {
            return Err(Error::Data(format!(
                "line {line}: {} cells for {} columns",
                record.len(),
                headers.len()
            )));
        }
        let (mut di, mut xi, mut zi) = (0usize, 0usize, 0usize);
        for (c, cell) in record.iter().enumerate() {
            let role = col_roles[c];
            if role == Role::Ignore {
                continue;
            }
            let value: f64 = cell.trim().parse().map_err(|_| {
                Error::Data(format!(
                    "line {line}: column '{}' has non-numeric cell '{cell}'",
                    headers[c]
                ))
            })?;
            if !value.is_finite() {
                return Err(Error::Data(format!(
                    "line {line}: column '{}' has non-finite value",
                    headers[c]
                )));
            }
            match role {
                Role::Outcome => y.push(value),
                Role::Endogenous => {
                    d_cols[di].push(value);
                    di += 1;
                }
                Role::Control => {
                    x_cols[xi].push(value);
                    xi += 1;
                }
                Role::Instrument => {
                    z_cols[zi].push(value);
                    zi += 1;
                }
                Role::Ignore => unreachable!(),
            }
        }
    }

    let n = y.len();
    if n == 0 {
        return Err(Error::Data("no data rows".into()));
    }
    let mut controls = vec![vec![1.0; n]];
    controls.extend(x_cols);
    let x = Matrix::from_columns(&controls)?;
    let d = Matrix::from_columns(&d_cols)?;
    let z = if z_cols.is_empty() {
        Matrix::zeros(n, 0)
    } else {
        Matrix::from_columns(&z_cols)?
    };
    Dataset::new(y, d, x, z, 0)
}

/// Full analysis of a loaded dataset: the three-step nuisance estimation,
/// point estimate, both standard errors, Wald interval, and (for a scalar
/// target) the test-inversion interval over the default grid.
#[derive(Debug, Clone)]
pub struct CsvAnalysis {
    pub result: InferenceResult,
    /// Hull of the accepted inversion grid points (scalar targets only).
    pub inversion_interval: Option<(f64, f64)>,
    pub inversion_points: usize,
    /// Whether the accepted grid points form one contiguous run.
    pub inversion_contiguous: bool,
}

pub fn analyze_dataset(data: &Dataset, cfg: &LassoConfig, level: f64) -> Result<CsvAnalysis> {
    let eta = estimate_nuisance(data, cfg, Mode::PostLasso)?;
    let result = infer_with_nuisance(data, &eta, level, None)?;

    let mut inversion_interval = None;
    let mut inversion_points = 0;
    let mut inversion_contiguous = true;
    if data.p_d() == 1 {
        let grid = default_inversion_grid(result.alpha_hat[0], result.se_robust[0]);
        let threshold = chi_square_quantile(level, 1)?;
        let mut accepted: Vec<(usize, f64)> = Vec::new();
        for (i, point) in grid.iter().enumerate() {
            if c_alpha_statistic(data, point, &eta)? <= threshold {
                accepted.push((i, point[0]));
            }
        }
        inversion_points = accepted.len();
        if let (Some(first), Some(last)) = (accepted.first(), accepted.last()) {
            inversion_interval = Some((first.1, last.1));
            inversion_contiguous = last.0 - first.0 + 1 == accepted.len();
        }
    }
    Ok(CsvAnalysis {
        result,
        inversion_interval,
        inversion_points,
        inversion_contiguous,
    })
}

/// Reads the CSV and the roles file, then analyzes.
pub fn run_csv(csv_path: &Path, roles_path: &Path, cfg: &LassoConfig, level: f64) -> Result<CsvAnalysis> {
    let roles_text = fs::read_to_string(roles_path)
        .map_err(|e| Error::Config(format!("cannot read roles file {}: {e}", roles_path.display())))?;
    let roles = parse_roles(&roles_text)?;
    let data = load_dataset_csv(csv_path, &roles)?;
    analyze_dataset(&data, cfg, level)
}

/// Exports a dataset as CSV (shortest round-trip float formatting) together
/// with a matching roles map. The intercept column is not exported; loading
/// prepends a fresh one.
pub fn write_dataset_csv(data: &Dataset, csv_path: &Path) -> Result<String> {
    let mut writer = csv::Writer::from_path(csv_path)
        .map_err(|e| Error::Data(format!("cannot create {}: {e}", csv_path.display())))?;
    let mut header = vec!["y".to_string()];
    let mut roles = String::from("y = outcome\n");
    for k in 0..data.p_d() {
        header.push(format!("d{}", k + 1));
        roles.push_str(&format!("d{} = endogenous\n", k + 1));
    }
    let mut raw_controls = Vec::new();
    for j in 0..data.p_x() {
        if j == data.intercept {
            continue;
        }
        raw_controls.push(j);
        header.push(format!("x{}", raw_controls.len()));
        roles.push_str(&format!("x{} = control\n", raw_controls.len()));
    }
    for j in 0..data.p_z() {
        header.push(format!("z{}", j + 1));
        roles.push_str(&format!("z{} = instrument\n", j + 1));
    }
    writer
        .write_record(&header)
        .map_err(|e| Error::Data(format!("csv write: {e}")))?;
    for i in 0..data.n() {
        let mut row = vec![data.y[i].to_string()];
        for k in 0..data.p_d() {
            row.push(data.d.get(i, k).to_string());
        }
        for &j in &raw_controls {
            row.push(data.x.get(i, j).to_string());
        }
        for j in 0..data.p_z() {
            row.push(data.z.get(i, j).to_string());
        }
        writer
            .write_record(&row)
            .map_err(|e| Error::Data(format!("csv write: {e}")))?;
    }
    writer
        .flush()
        .map_err(|e| Error::Data(format!("csv flush: {e}")))?;
    Ok(roles)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roles_parsing() {
        let roles = parse_roles("y = outcome\nd = endogenous\n# c\nx1 = control\n").unwrap();
        assert_eq!(roles.len(), 3);
        assert!(parse_roles("y = outcome\ny = control\n").is_err());
        assert!(parse_roles("y : outcome\n").is_err());
        assert!(parse_roles("y = wat\n").is_err());
    }

    #[test]
    fn header_only_file_is_a_data_error() {
        let dir = std::env::temp_dir();
        let path = dir.join("orthoiv_test_header_only.csv");
        fs::write(&path, "y,d,x1\n").unwrap();
        let roles = parse_roles("y = outcome\nd = endogenous\nx1 = control\n").unwrap();
        let err = load_dataset_csv(&path, &roles).unwrap_err();
        assert!(matches!(err, Error::Data(msg) if msg.contains("no data rows")));
        let _ = fs::remove_file(&path);
    }

    #[test]
    fn non_numeric_cell_reports_line() {
        let dir = std::env::temp_dir();
        let path = dir.join("orthoiv_test_bad_cell.csv");
        fs::write(&path, "y,d\n1.0,2.0\n3.0,oops\n").unwrap();
        let roles = parse_roles("y = outcome\nd = endogenous\n").unwrap();
        let err = load_dataset_csv(&path, &roles).unwrap_err();
        match err {
            Error::Data(msg) => assert!(msg.contains("line 3") && msg.contains("'oops'"), "{msg}"),
            other => panic!("expected data error, got {other}"),
        }
        let _ = fs::remove_file(&path);
    }

    #[test]
    fn missing_roles_are_config_errors() {
        let dir = std::env::temp_dir();
        let path = dir.join("orthoiv_test_missing_role.csv");
        fs::write(&path, "y,d,x1\n1.0,2.0,3.0\n").unwrap();
        let roles = parse_roles("y = outcome\nd = endogenous\n").unwrap();
        assert!(matches!(
            load_dataset_csv(&path, &roles),
            Err(Error::Config(_))
        ));
        // No outcome.
        let roles2 = parse_roles("y = ignore\nd = endogenous\nx1 = control\n").unwrap();
        assert!(matches!(
            load_dataset_csv(&path, &roles2),
            Err(Error::Config(_))
        ));
        let _ = fs::remove_file(&path);
    }
}
