//! Comma-separated numeric tables with a header row.

use std::io::Write;
use std::path::Path;

use hkcopula::DataMatrix;

use crate::error::{CliError, Result};

/// A numeric table with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub data: DataMatrix,
}

impl Table {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

/// Reads a CSV file; every body cell must parse as a finite number.
pub fn read_table(path: &Path) -> Result<Table> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    parse_table(file, path)
}

pub fn parse_table<R: std::io::Read>(input: R, path: &Path) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let data_err = |line: usize, message: String| CliError::Data {
        path: path.to_path_buf(),
        line,
        message,
    };
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| data_err(1, e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(data_err(1, "missing header row".into()));
    }
    let mut values = Vec::new();
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            data_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != header.len() {
            return Err(data_err(
                line,
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        for (j, cell) in rec.iter().enumerate() {
            if cell.is_empty() {
                return Err(data_err(
                    line,
                    format!("missing value in column `{}`", header[j]),
                ));
            }
            let v: f64 = cell.parse().map_err(|_| {
                data_err(
                    line,
                    format!("`{cell}` in column `{}` is not a number", header[j]),
                )
            })?;
            if !v.is_finite() {
                return Err(data_err(
                    line,
                    format!("non-finite value in column `{}`", header[j]),
                ));
            }
            values.push(v);
        }
        rows += 1;
    }
    let data = DataMatrix::from_vec(rows, header.len(), values)?;
    Ok(Table { header, data })
}

/// Writes `contents` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(path, e))?;
    tmp.write_all(contents).map_err(|e| CliError::io(path, e))?;
    tmp.as_file()
        .sync_all()
        .map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn format_table(header: &[String], data: &DataMatrix) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in data.rows() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn write_table(path: &Path, header: &[String], data: &DataMatrix) -> Result<()> {
    write_atomic(path, format_table(header, data).as_bytes())
}
