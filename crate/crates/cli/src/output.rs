//! Machine-readable artifacts. JSON floats use serde_json's shortest
//! round-trip formatting, so every value re-parses to the same bits.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use smoothmd::inference::{Hypothesis, TestResult, WeightedChiSquare};
use smoothmd::{Fit64, McReport, VarianceEstimate};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub input: PathBuf,
    pub y: String,
    pub x: Vec<String>,
    pub x_disc: Vec<String>,
    pub z: Vec<String>,
    pub n: usize,
    pub bandwidth: f64,
    pub grid: [f64; 3],
    pub scale: String,
    pub use_gamma: bool,
    pub variance: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub lambda: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardErrors {
    pub lambda: f64,
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOutput {
    pub lambda_hat: f64,
    pub beta_hat: Vec<f64>,
    pub gamma_hat: f64,
    pub covariates: Vec<String>,
    pub se: StandardErrors,
    /// Asymptotic covariance of `√n (λ̂, β̂)`.
    pub vcov: Vec<Vec<f64>>,
    pub s_used: f64,
    pub boundary_hit: bool,
    pub objective_trace: Vec<TracePoint>,
    pub config: ConfigEcho,
    pub warnings: Vec<String>,
}

impl FitOutput {
    pub fn new(fit: &Fit64, var: &VarianceEstimate<f64>, covariates: Vec<String>, config: ConfigEcho) -> Self {
        Self {
            lambda_hat: fit.lambda_hat,
            beta_hat: fit.beta_hat.to_vec(),
            // Without the intercept the estimate is structurally zero.
            gamma_hat: if fit.use_gamma { fit.gamma_hat } else { 0.0 },
            covariates,
            se: StandardErrors { lambda: var.se[0], beta: var.se.iter().skip(1).copied().collect() },
            vcov: var.vcov.rows().into_iter().map(|r| r.to_vec()).collect(),
            s_used: fit.s_used,
            boundary_hit: fit.boundary_hit,
            objective_trace: fit.objective_trace.iter().map(|&(lambda, objective)| TracePoint { lambda, objective }).collect(),
            config,
            warnings: fit.warnings(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelDecision {
    pub level: f64,
    pub critical_value: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutput {
    pub restriction: String,
    pub hypothesis: Hypothesis,
    pub statistic: f64,
    pub weights: Vec<f64>,
    pub dfs: Vec<u32>,
    pub p_value: f64,
    pub decisions: Vec<LevelDecision>,
    pub lambda_hat: f64,
    pub beta_hat: Vec<f64>,
    pub lambda_restricted: Option<f64>,
    pub draws: usize,
    pub seed: u64,
    pub config: ConfigEcho,
    pub warnings: Vec<String>,
}

impl TestOutput {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        restriction: String,
        test: TestResult,
        levels: &[f64],
        draws: usize,
        seed: u64,
        fit: &Fit64,
        config: ConfigEcho,
    ) -> CliResult<Self> {
        // Same weights, draws and seed as the test itself, so the law is identical.
        let law = WeightedChiSquare::new(&test.eigen_weights, &test.dfs, draws, seed)?;
        let decisions = levels
            .iter()
            .map(|&level| {
                let critical_value = law.critical_value(level);
                LevelDecision { level, critical_value, reject: test.statistic > critical_value }
            })
            .collect();
        Ok(Self {
            restriction,
            hypothesis: test.hypothesis,
            statistic: test.statistic,
            weights: test.eigen_weights,
            dfs: test.dfs,
            p_value: test.p_value,
            decisions,
            lambda_hat: fit.lambda_hat,
            beta_hat: fit.beta_hat.to_vec(),
            lambda_restricted: test.lambda_restricted,
            draws,
            seed,
            config,
            warnings: fit.warnings(),
        })
    }
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.display().to_string(), source })?;
    }
    File::create(path).map(BufWriter::new).map_err(|source| CliError::Io { path: path.display().to_string(), source })
}

/// Writes pretty JSON to `path`, or to stdout when `path` is `None`.
pub fn write_json<S: Serialize>(value: &S, path: Option<&Path>) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(format!("json: {e}")))?;
    match path {
        Some(p) => {
            let mut w = create(p)?;
            writeln!(w, "{text}").and_then(|_| w.flush()).map_err(|source| CliError::Io { path: p.display().to_string(), source })
        }
        None => match writeln!(std::io::stdout().lock(), "{text}") {
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Io { path: "stdout".into(), source: e }),
            _ => Ok(()),
        },
    }
}

pub fn csv_writer(path: &Path) -> CliResult<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

#[derive(Serialize)]
struct BiasSdRecord<'a> {
    model: u8,
    n: usize,
    estimator: &'a str,
    param: &'a str,
    truth: f64,
    bias: f64,
    sd: f64,
    mc_se: f64,
    sd_mc_se: f64,
    reps: usize,
    seed: u64,
}

#[derive(Serialize)]
struct LevelRecord<'a> {
    model: u8,
    n: usize,
    estimator: &'a str,
    test: &'a str,
    param: &'a str,
    level: f64,
    rate: f64,
    mc_se: f64,
    reps: usize,
    seed: u64,
}

#[derive(Serialize)]
struct PowerRecord<'a> {
    model: u8,
    n: usize,
    estimator: &'a str,
    test: &'a str,
    hypothesis: f64,
    level: f64,
    power: f64,
    mc_se: f64,
    reps: usize,
    seed: u64,
}

#[derive(Serialize)]
struct MCurveRecord {
    model: u8,
    n: usize,
    z: f64,
    truth: f64,
    mean: f64,
    sd: f64,
    count: usize,
    reps: usize,
    seed: u64,
}

fn table<R: Serialize>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = R>) -> CliResult<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(create(path)?);
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|source| CliError::Io { path: path.display().to_string(), source })
}

pub const BIAS_SD_HEADER: [&str; 11] =
    ["model", "n", "estimator", "param", "truth", "bias", "sd", "mc_se", "sd_mc_se", "reps", "seed"];
pub const LEVELS_HEADER: [&str; 10] = ["model", "n", "estimator", "test", "param", "level", "rate", "mc_se", "reps", "seed"];
pub const POWER_HEADER: [&str; 10] =
    ["model", "n", "estimator", "test", "hypothesis", "level", "power", "mc_se", "reps", "seed"];
pub const M_CURVE_HEADER: [&str; 9] = ["model", "n", "z", "truth", "mean", "sd", "count", "reps", "seed"];

/// `bias_sd.csv`, `levels.csv`, `power.csv`, `m_curve.csv` and `report.json` under `dir`.
/// Files whose section is empty hold only a header.
pub fn write_report(report: &McReport, dir: &Path) -> CliResult<Vec<PathBuf>> {
    let (model, n, reps, seed) = (report.model, report.n, report.reps, report.seed);
    let paths: Vec<PathBuf> =
        ["bias_sd.csv", "levels.csv", "power.csv", "m_curve.csv", "report.json"].iter().map(|f| dir.join(f)).collect();

    table(
        &paths[0],
        &BIAS_SD_HEADER,
        report.estimates.iter().map(|e| BiasSdRecord {
            model,
            n,
            estimator: &e.estimator,
            param: &e.param,
            truth: e.truth,
            bias: e.bias,
            sd: e.sd,
            mc_se: e.bias_mc_se,
            sd_mc_se: e.sd_mc_se,
            reps,
            seed,
        }),
    )?;
    table(
        &paths[1],
        &LEVELS_HEADER,
        report.rates.iter().map(|r| LevelRecord {
            model,
            n,
            estimator: &r.estimator,
            test: &r.test,
            param: &r.param,
            level: r.level,
            rate: r.rate,
            mc_se: r.mc_se,
            reps,
            seed,
        }),
    )?;
    table(
        &paths[2],
        &POWER_HEADER,
        report.power.iter().map(|p| PowerRecord {
            model,
            n,
            estimator: "smoothmd",
            test: &p.test,
            hypothesis: p.hypothesis,
            level: p.level,
            power: p.power,
            mc_se: p.mc_se,
            reps,
            seed,
        }),
    )?;
    table(
        &paths[3],
        &M_CURVE_HEADER,
        report.m_curve.iter().map(|m| MCurveRecord {
            model,
            n,
            z: m.z,
            truth: m.truth,
            mean: m.mean,
            sd: m.sd,
            count: m.count,
            reps,
            seed,
        }),
    )?;
    write_json(report, Some(&paths[4]))?;
    Ok(paths)
}
