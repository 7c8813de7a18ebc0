//! CSV ingestion and export for multivariate time-series data.
//!
//! Files are plain comma-separated text: one header row naming the columns,
//! then one row per time point with decimal-point numerics. The first column
//! may hold timestamps (any non-numeric text); it is carried along verbatim
//! and ignored by the math. Quoting is not supported, so names and
//! timestamps must not contain commas.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::CliError;

/// An ingested dataset: named numeric columns in file order, plus the
/// optional timestamp column. Column order defines the pivot order of every
/// model fitted on the data.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Names of the numeric columns.
    pub names: Vec<String>,
    /// Timestamp column, when the file has one: its header and values.
    pub timestamps: Option<(String, Vec<String>)>,
    /// Numeric values, one inner vector per column (series-major).
    pub columns: Vec<Vec<f64>>,
}

impl Dataset {
    /// Number of series.
    pub fn m(&self) -> usize {
        self.columns.len()
    }

    /// Number of time points.
    pub fn t_len(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    /// Renders the dataset as CSV. Floats print in shortest round-trip
    /// form, so ingesting the output reproduces the values exactly.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if let Some((name, _)) = &self.timestamps {
            out.push_str(name);
            out.push(',');
        }
        out.push_str(&self.names.join(","));
        out.push('\n');
        for t in 0..self.t_len() {
            if let Some((_, stamps)) = &self.timestamps {
                out.push_str(&stamps[t]);
                out.push(',');
            }
            for (j, col) in self.columns.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{}", col[t]);
            }
            out.push('\n');
        }
        out
    }
}

/// Reads a CSV file into a [`Dataset`].
///
/// The header row is required. A first column whose initial data cell does
/// not parse as a number is treated as the timestamp column; every other
/// cell must be numeric and present. Row numbers in error messages are
/// 1-based file lines (the header is row 1), columns are 1-based.
pub fn ingest_csv(path: &Path) -> Result<Dataset, CliError> {
    let text = fs::read_to_string(path).map_err(|e| {
        CliError::Runtime(format!("cannot read {}: {e}", path.display()))
    })?;
    parse_csv(&text)
}

/// Parses CSV text; see [`ingest_csv`]. Lines starting with `#` are
/// comments — the commands themselves write such provenance lines ahead of
/// their tables, so every emitted table can be ingested back.
pub fn parse_csv(text: &str) -> Result<Dataset, CliError> {
    let mut lines = text
        .lines()
        .map(|l| l.trim_end_matches('\r'))
        .enumerate()
        .filter(|(_, l)| {
            let l = l.trim();
            !l.is_empty() && !l.starts_with('#')
        });
    let (_, header) = lines
        .next()
        .ok_or_else(|| CliError::Runtime("empty file: no header row".into()))?;
    let header: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let n_cols = header.len();

    let rows: Vec<(usize, Vec<&str>)> = lines
        .map(|(idx, line)| (idx + 1, line.split(',').map(str::trim).collect()))
        .collect();
    if rows.is_empty() {
        return Err(CliError::Runtime("no data rows after the header".into()));
    }
    for (row, cells) in &rows {
        if cells.len() != n_cols {
            return Err(CliError::Runtime(format!(
                "row {row} has {} fields, expected {n_cols}",
                cells.len()
            )));
        }
    }

    // The first column is a timestamp column when its first cell is
    // non-numeric text; an empty first cell is a missing value like any
    // other.
    let first_cell = rows[0].1[0];
    let has_timestamps = !first_cell.is_empty() && first_cell.parse::<f64>().is_err();
    let first_numeric = usize::from(has_timestamps);
    if n_cols - first_numeric < 2 {
        return Err(CliError::Runtime(format!(
            "need at least two numeric columns, found {}",
            n_cols - first_numeric
        )));
    }

    let mut timestamps = has_timestamps.then(|| (header[0].clone(), Vec::new()));
    let names: Vec<String> = header[first_numeric..].to_vec();
    let mut columns = vec![Vec::with_capacity(rows.len()); names.len()];
    for (row, cells) in &rows {
        for (c, cell) in cells.iter().enumerate() {
            if cell.is_empty() {
                return Err(CliError::Runtime(format!(
                    "missing value at row {row}, column {}",
                    c + 1
                )));
            }
            if c == 0 {
                if let Some((_, stamps)) = timestamps.as_mut() {
                    stamps.push(cell.to_string());
                    continue;
                }
            }
            let value: f64 = cell.parse().map_err(|_| {
                CliError::Runtime(format!(
                    "non-numeric value {cell:?} at row {row}, column {}",
                    c + 1
                ))
            })?;
            if !value.is_finite() {
                return Err(CliError::Runtime(format!(
                    "non-finite value at row {row}, column {}",
                    c + 1
                )));
            }
            columns[c - first_numeric].push(value);
        }
    }
    Ok(Dataset {
        names,
        timestamps,
        columns,
    })
}
