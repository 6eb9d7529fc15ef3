//! CSV ingestion with explicit column roles.

use std::collections::HashMap;
use std::path::Path;

use ndarray::{Array1, Array2};
use smoothmd::Dataset;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone)]
pub struct Roles {
    pub y: String,
    pub x: Vec<String>,
    pub x_disc: Vec<String>,
    pub z: Vec<String>,
}

impl Roles {
    /// Names of the slope coefficients, continuous columns first.
    pub fn covariates(&self) -> Vec<String> {
        self.x.iter().chain(&self.x_disc).cloned().collect()
    }

    fn check_disjoint(&self) -> CliResult<()> {
        let mut seen = HashMap::new();
        let all = std::iter::once(("y", &self.y))
            .chain(self.x.iter().map(|c| ("x", c)))
            .chain(self.x_disc.iter().map(|c| ("x-disc", c)))
            .chain(self.z.iter().map(|c| ("z", c)));
        for (role, col) in all {
            if let Some(prev) = seen.insert(col.clone(), role) {
                return Err(CliError::Data(format!("column '{col}' assigned to both --{prev} and --{role}")));
            }
        }
        if self.x.is_empty() && self.x_disc.is_empty() {
            return Err(CliError::Data("at least one --x or --x-disc column is required".into()));
        }
        if self.z.is_empty() {
            return Err(CliError::Data("at least one --z column is required".into()));
        }
        Ok(())
    }
}

/// Discrete columns enter the linear index, so their values must be
/// integers. Two spellings of one integer ("1", "01") would compare unequal as
/// strings but equal as numbers, and are rejected.
fn encode_discrete(values: &[String], column: &str) -> CliResult<Vec<i64>> {
    let mut spelling: HashMap<i64, &str> = HashMap::new();
    values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let code = v
                .parse::<i64>()
                .map_err(|_| CliError::Data(format!("row {}, discrete column '{column}': '{v}' is not an integer", i + 2)))?;
            let first = *spelling.entry(code).or_insert(v.as_str());
            if first != v {
                return Err(CliError::Data(format!("discrete column '{column}' spells {code} as both '{first}' and '{v}'")));
            }
            Ok(code)
        })
        .collect()
}

pub fn load(path: &Path, roles: &Roles) -> CliResult<Dataset<f64>> {
    roles.check_disjoint()?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => CliError::Data(format!("cannot open {}: {e}", path.display())),
            _ => CliError::from(e),
        })?;
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let index = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Data(format!("column '{name}' not found in {}", path.display())))
    };
    let iy = index(&roles.y)?;
    let ix: Vec<usize> = roles.x.iter().map(|c| index(c)).collect::<CliResult<_>>()?;
    let id: Vec<usize> = roles.x_disc.iter().map(|c| index(c)).collect::<CliResult<_>>()?;
    let iz: Vec<usize> = roles.z.iter().map(|c| index(c)).collect::<CliResult<_>>()?;

    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        rows.push(record.iter().map(|f| f.trim().to_string()).collect::<Vec<_>>());
        if rows[line].len() != header.len() {
            return Err(CliError::Data(format!("row {} has {} fields, header has {}", line + 2, rows[line].len(), header.len())));
        }
    }
    let n = rows.len();
    let number = |row: usize, col: usize| -> CliResult<f64> {
        let raw = &rows[row][col];
        raw.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| CliError::Data(format!("row {}, column '{}': '{raw}' is not a finite number", row + 2, header[col])))
    };
    let y = (0..n).map(|i| number(i, iy)).collect::<CliResult<Vec<_>>>()?;
    let mut x = Array2::zeros((n, ix.len()));
    for (k, &c) in ix.iter().enumerate() {
        for i in 0..n {
            x[[i, k]] = number(i, c)?;
        }
    }
    let mut z = Array2::zeros((n, iz.len()));
    for (k, &c) in iz.iter().enumerate() {
        for i in 0..n {
            z[[i, k]] = number(i, c)?;
        }
    }
    let mut d = Array2::zeros((n, id.len()));
    for (k, &c) in id.iter().enumerate() {
        let values: Vec<String> = rows.iter().map(|r| r[c].clone()).collect();
        for (i, code) in encode_discrete(&values, &header[c])?.into_iter().enumerate() {
            d[[i, k]] = code;
        }
    }
    Ok(Dataset::new(Array1::from(y), x, d, z)?)
}
