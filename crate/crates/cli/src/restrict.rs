//! Restriction language: `;`-separated equations such as `lambda=0`, `b1=1`
//! or `b1+0.5*b2-x3=1`. Slopes are named `b<k>` (1-based) or by column name.

use ndarray::{Array1, Array2};
use smoothmd::estimator::Restriction;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedRestriction {
    pub lambda: Option<f64>,
    pub rows: Vec<(Vec<f64>, f64)>,
}

impl ParsedRestriction {
    pub fn beta(&self, p: usize) -> CliResult<Option<Restriction<f64>>> {
        if self.rows.is_empty() {
            return Ok(None);
        }
        let r = Array2::from_shape_fn((self.rows.len(), p), |(i, j)| self.rows[i].0[j]);
        let c = Array1::from_iter(self.rows.iter().map(|r| r.1));
        Ok(Some(Restriction::new(r, c)?))
    }
}

fn bad(spec: &str, why: &str) -> CliError {
    CliError::Data(format!("cannot parse restriction '{spec}': {why}"))
}

fn number(s: &str, spec: &str) -> CliResult<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| bad(spec, &format!("'{}' is not a number", s.trim())))
}

fn slope_index(name: &str, covariates: &[String], spec: &str) -> CliResult<usize> {
    if let Some(k) = name.strip_prefix('b').and_then(|d| d.parse::<usize>().ok()) {
        if k == 0 || k > covariates.len() {
            return Err(bad(spec, &format!("b{k} out of range 1..={}", covariates.len())));
        }
        return Ok(k - 1);
    }
    covariates.iter().position(|c| c == name).ok_or_else(|| bad(spec, &format!("unknown coefficient '{name}'")))
}

/// Splits `a+2*b-c` into signed terms.
fn terms(lhs: &str) -> Vec<(f64, String)> {
    let mut out = Vec::new();
    let mut sign = 1.0;
    let mut current = String::new();
    for ch in lhs.chars().filter(|c| !c.is_whitespace()) {
        if (ch == '+' || ch == '-') && !current.is_empty() && !current.ends_with(['e', 'E', '*']) {
            out.push((sign, std::mem::take(&mut current)));
            sign = if ch == '-' { -1.0 } else { 1.0 };
        } else if (ch == '+' || ch == '-') && current.is_empty() {
            if ch == '-' {
                sign = -sign;
            }
        } else {
            current.push(ch);
        }
    }
    out.push((sign, current));
    out
}

pub fn parse(spec: &str, covariates: &[String]) -> CliResult<ParsedRestriction> {
    let p = covariates.len();
    let mut parsed = ParsedRestriction { lambda: None, rows: Vec::new() };
    let statements: Vec<&str> = spec.split(';').map(str::trim).filter(|s| !s.is_empty()).collect();
    if statements.is_empty() {
        return Err(bad(spec, "empty"));
    }
    for stmt in statements {
        let (lhs, rhs) = stmt.split_once('=').ok_or_else(|| bad(spec, &format!("'{stmt}' has no '='")))?;
        let value = number(rhs, spec)?;
        if lhs.trim() == "lambda" {
            if parsed.lambda.replace(value).is_some() {
                return Err(bad(spec, "lambda restricted twice"));
            }
            continue;
        }
        let mut row = vec![0.0; p];
        for (sign, term) in terms(lhs) {
            if term.is_empty() {
                return Err(bad(spec, &format!("empty term in '{lhs}'")));
            }
            let (coef, name) = match term.split_once('*') {
                Some((c, n)) => (number(c, spec)?, n),
                None => (1.0, term.as_str()),
            };
            row[slope_index(name, covariates, spec)?] += sign * coef;
        }
        if row.iter().all(|&v| v == 0.0) {
            return Err(bad(spec, &format!("'{stmt}' restricts no coefficient")));
        }
        parsed.rows.push((row, value));
    }
    Ok(parsed)
}
