//! CSV datasets and JSON reports.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::Dataset;
use crate::linalg::matrix_to_rows;
use crate::pmc::{FitResult, IterationDiagnostics};

/// Parse comma-separated numeric text. A first row with no numeric cells is
/// taken as a header. Rows and columns in errors are
/// 1-based positions in the file.
pub fn parse_csv(text: &str) -> Result<(Option<Vec<String>>, Dataset)> {
    let mut header = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (idx, line) in text.lines().enumerate() {
        let row_no = idx + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if header.is_none() && rows.is_empty() && cells.iter().all(|c| !c.is_empty() && c.parse::<f64>().is_err()) {
            width = Some(cells.len());
            header = Some(cells.iter().map(|c| c.trim_matches('"').to_string()).collect());
            continue;
        }
        let expected = *width.get_or_insert(cells.len());
        if cells.len() != expected {
            return Err(Error::Parse {
                row: row_no,
                column: cells.len().min(expected) + 1,
                message: format!("expected {expected} columns, found {}", cells.len()),
            });
        }
        let mut row = Vec::with_capacity(expected);
        for (c, cell) in cells.iter().enumerate() {
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => row.push(v),
                _ => {
                    let message = if cell.is_empty() {
                        "missing value".to_string()
                    } else {
                        format!("'{cell}' is not a finite number")
                    };
                    return Err(Error::Parse { row: row_no, column: c + 1, message });
                }
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse { row: 1, column: 1, message: "no data rows".into() });
    }
    Ok((header, Dataset::from_rows(&rows)?))
}

/// Load a dataset from a CSV file.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    load_csv_columns(path, None)
}

/// Load a dataset, optionally keeping only the named header columns in the
/// given order.
pub fn load_csv_columns(path: impl AsRef<Path>, columns: Option<&[String]>) -> Result<Dataset> {
    let text = fs::read_to_string(path.as_ref())?;
    let (header, data) = parse_csv(&text)?;
    let Some(columns) = columns else {
        return Ok(data);
    };
    let header = header.ok_or_else(|| Error::Config("column selection needs a header row".into()))?;
    let idx = columns
        .iter()
        .map(|name| {
            header
                .iter()
                .position(|h| h.eq_ignore_ascii_case(name))
                .ok_or_else(|| Error::Config(format!("column '{name}' not found in header {header:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<Vec<f64>> = data.rows().map(|r| idx.iter().map(|&j| r[j]).collect()).collect();
    Dataset::from_rows(&rows)
}

/// Write a dataset as CSV with a y1..yp header.
pub fn write_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    let header: Vec<String> = (1..=data.p()).map(|j| format!("y{j}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for r in data.rows() {
        let cells: Vec<String> = r.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Everything reported for one fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: String,
    pub n: usize,
    pub p: usize,
    pub particles: usize,
    pub iterations: usize,
    pub seed: u64,
    pub log_marginal_likelihood: f64,
    pub xi: Vec<f64>,
    pub alpha: Vec<f64>,
    pub delta: Vec<f64>,
    pub psi: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
    pub g: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub nu_mean: Option<f64>,
    pub nu_grid: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub nu_pmf: Option<Vec<f64>>,
    pub diagnostics: Vec<IterationDiagnostics>,
    /// Only recorded on request, so that repeated runs stay byte-identical.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_time_secs: Option<f64>,
}

impl FitReport {
    pub fn from_fit(fit: &FitResult, n: usize, particles: usize, iterations: usize, seed: u64) -> Self {
        Self {
            model: fit.model.name().to_string(),
            n,
            p: fit.xi.len(),
            particles,
            iterations,
            seed,
            log_marginal_likelihood: fit.log_marginal_likelihood,
            xi: fit.xi.iter().copied().collect(),
            alpha: fit.alpha.iter().copied().collect(),
            delta: fit.delta.iter().copied().collect(),
            psi: fit.psi.iter().copied().collect(),
            sigma: fit.sigma.to_rows(),
            g: matrix_to_rows(fit.g.matrix()),
            nu_mean: fit.nu_mean,
            nu_grid: fit.nu_grid.clone(),
            nu_pmf: fit.nu_pmf.clone(),
            diagnostics: fit.diagnostics.clone(),
            wall_time_secs: None,
        }
    }
}

/// Serialize any report as pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(report: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

pub fn write_report<T: Serialize>(report: &T, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_json(report)?)?;
    Ok(())
}

pub fn read_report<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}
