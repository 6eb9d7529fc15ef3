//! `smoothmd`: fit, test, simulate and smooth from the command line.
//!
//! Exit status is 0 on success, 2 for unusable input or configuration and 3
//! when the numerics break down (singular systems, degenerate covariates).

mod data;
mod error;
mod output;
mod restrict;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;
use smoothmd::simulation::EstimatorKind;
use smoothmd::{
    dm_beta_test, dm_joint_test, dm_lambda_test, estimate_vcov, fit, generate, run_monte_carlo, Bandwidth, Dataset64,
    DgpSpec, EstimatorConfig, Fit64, KernelOptions, LambdaGrid, McConfig, ModelId, Problem, ScaleChoice, SigmaMode,
    TestOptions, VarianceEstimate, VarianceMode,
};

use crate::data::Roles;
use crate::error::{CliError, CliResult};
use crate::output::{ConfigEcho, FitOutput, TestOutput};

#[derive(Parser)]
#[command(name = "smoothmd", version, about = "Smooth minimum distance estimation of Box-Cox partially linear models")]
struct Cli {
    /// Cap on worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate (λ, β, γ) with sandwich standard errors.
    Fit(FitCmd),
    /// Distance-metric test of a restriction on λ and/or β.
    Test(TestCmd),
    /// Monte Carlo study on one of the built-in designs.
    Simulate(SimulateCmd),
    /// Kernel estimate of the nonparametric component m(z).
    SmoothM(SmoothCmd),
    /// Draw one sample from a built-in design as CSV.
    Generate(GenerateCmd),
}

#[derive(Args, Clone)]
struct ModelArgs {
    #[arg(long)]
    input: PathBuf,
    /// Response column (strictly positive).
    #[arg(long)]
    y: String,
    /// Continuous linear covariates.
    #[arg(long, value_delimiter = ',')]
    x: Vec<String>,
    /// Integer-coded discrete linear covariates.
    #[arg(long = "x-disc", value_delimiter = ',')]
    x_disc: Vec<String>,
    /// Smoothing covariates.
    #[arg(long, value_delimiter = ',')]
    z: Vec<String>,
    /// Bandwidth rate: h = c · n^(−1/exp) on standardized z.
    #[arg(long, default_value_t = 3.5)]
    bandwidth_exp: f64,
    #[arg(long, default_value_t = 1.0)]
    bandwidth_const: f64,
    /// Fixed bandwidth on standardized z, overriding the rate.
    #[arg(long)]
    bandwidth: Option<f64>,
    /// λ grid as lo:hi:step.
    #[arg(long, default_value = "-1:2:0.001", allow_hyphen_values = true)]
    grid: String,
    /// gmean, none, or a positive number dividing y.
    #[arg(long, default_value = "gmean")]
    scale: String,
    /// Drop the intercept γ from the criterion.
    #[arg(long)]
    no_gamma: bool,
    /// smoothmd (nuisance-corrected) or star.
    #[arg(long, default_value = "smoothmd")]
    variance: String,
}

#[derive(Args)]
struct FitCmd {
    #[command(flatten)]
    model: ModelArgs,
    /// JSON destination (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TestCmd {
    #[command(flatten)]
    model: ModelArgs,
    /// e.g. "lambda=0", "b1=1" or "b1+0*b2=1;lambda=0.5".
    #[arg(long)]
    restrict: String,
    /// Levels reported in the decisions, besides 5% and 10%.
    #[arg(long, value_delimiter = ',')]
    level: Vec<f64>,
    /// Draws from the weighted chi-square reference law.
    #[arg(long, default_value_t = 200_000)]
    draws: usize,
    #[arg(long, default_value_t = 0x5eed_d157)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateCmd {
    #[arg(long, value_parser = parse_model)]
    model: ModelId,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 500)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Any of smoothmd, smoothmd_nogamma, nl2sls.
    #[arg(long, value_delimiter = ',', default_value = "smoothmd")]
    estimators: Vec<String>,
    /// Any of smoothmd, star.
    #[arg(long, value_delimiter = ',', default_value = "smoothmd")]
    variance: Vec<String>,
    /// Distance-metric tests at the truth: any of lambda, beta, joint.
    #[arg(long, value_delimiter = ',')]
    dm: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.1")]
    levels: Vec<f64>,
    /// λ grid as lo:hi:step (defaults to λ₀ ± 0.8 by 0.001).
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    #[arg(long, default_value_t = 3.5)]
    bandwidth_exp: f64,
    #[arg(long, default_value_t = 1.0)]
    bandwidth_const: f64,
    /// Number of Bernoulli dummies (Model 4).
    #[arg(long)]
    dummies: Option<usize>,
    /// Hypothesized λ values for a power curve.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    power_lambda: Vec<f64>,
    /// Hypothesized first-slope values for a power curve.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    power_beta: Vec<f64>,
    /// Record m̂ on lo:hi:step of the first smoothing covariate.
    #[arg(long, allow_hyphen_values = true)]
    m_eval: Option<String>,
    #[arg(long, default_value_t = 100_000)]
    draws: usize,
}

#[derive(Args)]
struct SmoothCmd {
    #[command(flatten)]
    model: ModelArgs,
    /// Evaluate on lo:hi:step of the first smoothing covariate, others held
    /// at their means. Defaults to the sample points.
    #[arg(long, allow_hyphen_values = true)]
    at: Option<String>,
    /// Bandwidth on standardized z (defaults to the estimation bandwidth).
    #[arg(long)]
    m_bandwidth: Option<f64>,
    /// CSV destination (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateCmd {
    #[arg(long, value_parser = parse_model)]
    model: ModelId,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    dummies: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_model(s: &str) -> Result<ModelId, String> {
    s.parse::<ModelId>().map_err(|e| e.to_string())
}

fn parse_range(s: &str, what: &str) -> CliResult<LambdaGrid> {
    let parts: Vec<&str> = s.split(':').collect();
    let nums: Option<Vec<f64>> = parts.iter().map(|p| p.trim().parse::<f64>().ok()).collect();
    match nums.as_deref() {
        Some(&[lo, hi, step]) => Ok(LambdaGrid::new(lo, hi, step)?),
        _ => Err(CliError::Data(format!("--{what} expects lo:hi:step, got '{s}'"))),
    }
}

fn parse_scale(s: &str) -> CliResult<ScaleChoice> {
    match s {
        "gmean" => Ok(ScaleChoice::GeometricMean),
        "none" => Ok(ScaleChoice::None),
        v => match v.parse::<f64>() {
            Ok(x) if x > 0.0 && x.is_finite() => Ok(ScaleChoice::Fixed(x)),
            _ => Err(CliError::Data(format!("--scale expects gmean, none or a positive number, got '{v}'"))),
        },
    }
}

fn parse_variance(s: &str) -> CliResult<VarianceMode> {
    match s {
        "smoothmd" => Ok(VarianceMode::SmoothMd),
        "star" => Ok(VarianceMode::Star),
        v => Err(CliError::Data(format!("--variance expects smoothmd or star, got '{v}'"))),
    }
}

fn bandwidth_rule(exp: f64, constant: f64) -> CliResult<Bandwidth> {
    if !(exp > 0.0 && exp.is_finite()) {
        return Err(CliError::Data(format!("--bandwidth-exp must be positive, got {exp}")));
    }
    Ok(Bandwidth::Rule { exponent: 1.0 / exp, constant })
}

/// Data, fit and sandwich variance shared by `fit`, `test` and `smooth-m`.
struct Fitted {
    data: Dataset64,
    problem: Problem<f64>,
    fit: Fit64,
    var: VarianceEstimate<f64>,
    covariates: Vec<String>,
    echo: ConfigEcho,
}

impl ModelArgs {
    fn roles(&self) -> Roles {
        Roles { y: self.y.clone(), x: self.x.clone(), x_disc: self.x_disc.clone(), z: self.z.clone() }
    }

    fn run(&self) -> CliResult<Fitted> {
        let grid = parse_range(&self.grid, "grid")?;
        let scale = parse_scale(&self.scale)?;
        let mode = parse_variance(&self.variance)?;
        let bandwidth = match self.bandwidth {
            Some(h) => Bandwidth::Fixed(h),
            None => bandwidth_rule(self.bandwidth_exp, self.bandwidth_const)?,
        };
        let roles = self.roles();
        let data = data::load(&self.input, &roles)?;
        let config = EstimatorConfig {
            grid,
            scale,
            use_gamma: !self.no_gamma,
            kernel: KernelOptions { bandwidth, ..Default::default() },
            ..Default::default()
        };
        let (problem, fit) = fit(&data, &config)?;
        let var = estimate_vcov(&problem, &fit, mode, SigmaMode::EikerWhite)?;
        let echo = ConfigEcho {
            input: self.input.clone(),
            y: self.y.clone(),
            x: self.x.clone(),
            x_disc: self.x_disc.clone(),
            z: self.z.clone(),
            n: data.n(),
            bandwidth: problem.plan().bandwidth(),
            grid: [grid.lo, grid.hi, grid.step],
            scale: self.scale.clone(),
            use_gamma: !self.no_gamma,
            variance: self.variance.clone(),
        };
        Ok(Fitted { data, problem, fit, var, covariates: roles.covariates(), echo })
    }
}

fn cmd_fit(cmd: &FitCmd) -> CliResult<()> {
    let f = cmd.model.run()?;
    output::write_json(&FitOutput::new(&f.fit, &f.var, f.covariates, f.echo), cmd.out.as_deref())
}

fn cmd_test(cmd: &TestCmd) -> CliResult<()> {
    let mut levels = vec![0.05, 0.10];
    for &l in &cmd.level {
        if !(l > 0.0 && l < 1.0) {
            return Err(CliError::Data(format!("--level must lie in (0, 1), got {l}")));
        }
        if !levels.contains(&l) {
            levels.push(l);
        }
    }
    // Parse before fitting so a malformed restriction fails fast.
    let restriction = restrict::parse(&cmd.restrict, &cmd.model.roles().covariates())?;
    let f = cmd.model.run()?;
    let opts = TestOptions { level: 0.05, draws: cmd.draws, seed: cmd.seed };
    let beta = restriction.beta(f.problem.p())?;
    let result = match (restriction.lambda, &beta) {
        (Some(l), None) => dm_lambda_test(&f.problem, &f.fit, &f.var, l, &opts)?,
        (None, Some(r)) => dm_beta_test(&f.problem, &f.fit, &f.var, r, &opts)?,
        (Some(l), Some(r)) => dm_joint_test(&f.problem, &f.fit, &f.var, r, l, &opts)?,
        (None, None) => return Err(CliError::Data("restriction constrains nothing".into())),
    };
    let out = TestOutput::new(cmd.restrict.clone(), result, &levels, cmd.draws, cmd.seed, &f.fit, f.echo)?;
    output::write_json(&out, cmd.out.as_deref())
}

fn estimator_kind(s: &str) -> CliResult<EstimatorKind> {
    [EstimatorKind::SmoothMd, EstimatorKind::SmoothMdNoGamma, EstimatorKind::Nl2sls]
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| CliError::Data(format!("unknown estimator '{s}', expected smoothmd, smoothmd_nogamma or nl2sls")))
}

fn cmd_simulate(cmd: &SimulateCmd) -> CliResult<()> {
    let mut cfg = McConfig::new(cmd.model, cmd.n, cmd.reps, cmd.seed);
    cfg.dummy_count = cmd.dummies;
    cfg.grid = cmd.grid.as_deref().map(|g| parse_range(g, "grid")).transpose()?;
    cfg.bandwidth = bandwidth_rule(cmd.bandwidth_exp, cmd.bandwidth_const)?;
    cfg.estimators = cmd.estimators.iter().map(|s| estimator_kind(s)).collect::<CliResult<_>>()?;
    cfg.variance_modes = cmd.variance.iter().map(|s| parse_variance(s)).collect::<CliResult<_>>()?;
    cfg.levels = cmd.levels.clone();
    for t in &cmd.dm {
        match t.as_str() {
            "lambda" => cfg.dm_lambda = true,
            "beta" => cfg.dm_beta = true,
            "joint" => cfg.dm_joint = true,
            other => return Err(CliError::Data(format!("unknown --dm test '{other}', expected lambda, beta or joint"))),
        }
    }
    cfg.test_draws = cmd.draws;
    cfg.power_lambda = cmd.power_lambda.clone();
    cfg.power_beta = cmd.power_beta.clone();
    if let Some(r) = &cmd.m_eval {
        cfg.m_eval = parse_range(r, "m-eval")?.points()?;
    }
    let (report, meta) = run_monte_carlo(&cfg)?;
    let paths = output::write_report(&report, &cmd.out)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    eprintln!(
        "{} replications in {:.1}s on {} threads, {} failed; wrote {}",
        report.reps,
        meta.elapsed_seconds,
        meta.threads,
        report.failures,
        paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", ")
    );
    Ok(())
}

fn cmd_smooth_m(cmd: &SmoothCmd) -> CliResult<()> {
    let f = cmd.model.run()?;
    let q = f.data.q();
    let z = f.data.z();
    let points: Array2<f64> = match &cmd.at {
        Some(r) => {
            let grid: Vec<f64> = parse_range(r, "at")?.points()?;
            let means: Vec<f64> = z.columns().into_iter().map(|c| c.mean().unwrap_or(0.0)).collect();
            Array2::from_shape_fn((grid.len(), q), |(i, k)| if k == 0 { grid[i] } else { means[k] })
        }
        None => z.to_owned(),
    };
    let h = cmd.m_bandwidth.unwrap_or_else(|| f.problem.plan().bandwidth());
    let t = f.data.transformed(f.fit.lambda_hat, 0);
    let resid = &t - &f.data.x().dot(&f.fit.beta_hat);
    let m_hat = f.problem.plan().nw_regress(resid.view(), points.view(), h)?;

    let mut header = cmd.model.z.clone();
    header.push("m_hat".into());
    let mut rows = Vec::with_capacity(points.nrows());
    for (pt, m) in points.rows().into_iter().zip(&m_hat) {
        let mut rec: Vec<String> = pt.iter().map(|v| v.to_string()).collect();
        rec.push(m.map(|v| v.to_string()).unwrap_or_default());
        rows.push(rec);
    }
    write_csv(cmd.out.as_deref(), &header, rows)
}

fn write_csv(path: Option<&Path>, header: &[String], rows: Vec<Vec<String>>) -> CliResult<()> {
    fn emit<W: std::io::Write>(mut w: csv::Writer<W>, header: &[String], rows: Vec<Vec<String>>) -> CliResult<()> {
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        w.flush().map_err(|e| CliError::Data(format!("csv: {e}")))
    }
    match path {
        Some(p) => emit(output::csv_writer(p)?, header, rows),
        None => emit(csv::Writer::from_writer(std::io::stdout().lock()), header, rows),
    }
}

fn cmd_generate(cmd: &GenerateCmd) -> CliResult<()> {
    let spec = DgpSpec { dummy_count: cmd.dummies, ..DgpSpec::new(cmd.model, cmd.n, cmd.seed) };
    let draw = generate(&spec)?;
    let d = &draw.data;
    let mut header = vec!["y".to_string()];
    header.extend((1..=d.x_cont().ncols()).map(|k| if k == 1 { "x".to_string() } else { format!("x{k}") }));
    header.extend((1..=d.x_disc().ncols()).map(|k| format!("d{k}")));
    header.extend((1..=d.q()).map(|k| format!("z{k}")));
    header.push("m".into());
    let rows = (0..d.n())
        .map(|i| {
            let mut r = vec![d.y()[i].to_string()];
            r.extend(d.x_cont().row(i).iter().map(|v| v.to_string()));
            r.extend(d.x_disc().row(i).iter().map(|v| v.to_string()));
            r.extend(d.z().row(i).iter().map(|v| v.to_string()));
            r.push(draw.m[i].to_string());
            r
        })
        .collect();
    write_csv(Some(&cmd.out), &header, rows)
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Data(format!("--threads: {e}")))?;
    }
    match &cli.command {
        Command::Fit(c) => cmd_fit(c),
        Command::Test(c) => cmd_test(c),
        Command::Simulate(c) => cmd_simulate(c),
        Command::SmoothM(c) => cmd_smooth_m(c),
        Command::Generate(c) => cmd_generate(c),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
