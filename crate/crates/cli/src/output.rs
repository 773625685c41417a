//! CSV and JSON files. Every file is written to a temporary sibling and then
//! renamed into place.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use stealthcurve::{FrequencyGrid, SpectrumSamples};
use tempfile::NamedTempFile;

use crate::error::CliError;

/// Absolute tolerance on the `omega` column of a tabulated spectrum.
const OMEGA_TOL: f64 = 1e-9;

/// 17 significant digits.
pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let io = |source| CliError::Io { path: path.to_path_buf(), source };
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Csv { text: format!("{}\n", header.join(",")) }
    }

    pub fn row(&mut self, cells: impl IntoIterator<Item = String>) {
        let line: Vec<String> = cells.into_iter().collect();
        self.text.push_str(&line.join(","));
        self.text.push('\n');
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        write_atomic(path, self.text.as_bytes())
    }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Reads a spectrum column from a CSV whose first column is `omega`.
///
/// Without `column`, the second column is used, so both `spectrum_<i>.csv`
/// (yielding `S_y`) and `attack_spectrum.csv` load directly.
pub fn load_tabulated(path: &Path, column: Option<&str>, grid: FrequencyGrid) -> Result<SpectrumSamples, CliError> {
    let field = "input_spectrum.path";
    let bad = |msg: String| CliError::validation(field, format!("{}: {msg}", path.display()));
    let text = std::fs::read_to_string(path).map_err(|e| bad(format!("cannot read: {e}")))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().ok_or_else(|| bad("empty file".into()))?.split(',').map(str::trim).collect();
    if header.first() != Some(&"omega") || header.len() < 2 {
        return Err(bad("expected a header starting with omega and at least one value column".into()));
    }
    let idx = match column {
        Some(name) => header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| CliError::validation("input_spectrum.column", format!("no column {name:?} in {}", path.display())))?,
        None => 1,
    };
    let mut values = Vec::with_capacity(grid.len());
    for (row, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != header.len() {
            return Err(bad(format!("row {} has {} cells, header has {}", row + 1, cells.len(), header.len())));
        }
        let parse = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("row {}: not a number: {s:?}", row + 1)));
        let omega = parse(cells[0])?;
        if row < grid.len() && (omega - grid.omega(row)).abs() > OMEGA_TOL {
            return Err(bad(format!("row {} has omega {omega}, grid expects {}", row + 1, grid.omega(row))));
        }
        values.push(parse(cells[idx])?);
    }
    if values.len() != grid.len() {
        return Err(bad(format!("has {} rows, grid_n is {}", values.len(), grid.len())));
    }
    SpectrumSamples::new(grid, values).map_err(|e| CliError::from_core("input_spectrum", e))
}
