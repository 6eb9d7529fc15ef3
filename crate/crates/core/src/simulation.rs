//! Data-generating processes for the four simulation models and a seeded,
//! replication-parallel Monte Carlo harness.
//!
//! Replication `r` draws from the ChaCha stream `r` of the master seed, so any
//! single replication can be reproduced in isolation and the report does not
//! depend on how replications are scheduled.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Bernoulli, Distribution, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StatNormal};

use crate::competitors::{nl2sls_fit, Nl2slsConfig};
use crate::error::{Error, Result};
use crate::estimator::{fit_problem, EstimatorConfig, LambdaGrid, Problem, Restriction, ScaleChoice};
use crate::inference::{dm_beta_test, dm_joint_test, dm_lambda_curve, estimate_vcov, SigmaMode, TestOptions, VarianceMode};
use crate::kernel::{Bandwidth, Dataset, KernelOptions};
use crate::scalar::CompensatedSum;
use crate::transform::inverse_box_cox;
use crate::weights::WeightConfig;

const MAX_RESAMPLES: usize = 100;
const MODEL4_COEFFICIENT_SEED: u64 = 0x4d4f_4445_4c34;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelId {
    Model1,
    Model2,
    Model3,
    Model4,
}

impl ModelId {
    pub fn number(self) -> u8 {
        match self {
            ModelId::Model1 => 1,
            ModelId::Model2 => 2,
            ModelId::Model3 => 3,
            ModelId::Model4 => 4,
        }
    }

    pub fn lambda0(self) -> f64 {
        match self {
            ModelId::Model1 | ModelId::Model4 => 0.0,
            ModelId::Model2 => 0.5,
            ModelId::Model3 => -1.0,
        }
    }

    /// `m(z)` at one row of smoothing covariates.
    pub fn m(self, z: &[f64]) -> f64 {
        let logistic = |v: f64| 1.0 / (1.0 + (-v).exp());
        match self {
            ModelId::Model1 => logistic(z[0]) + 1.0 / 3.0,
            ModelId::Model2 => logistic(z[0]) + 3.0,
            ModelId::Model3 => logistic(z[0]) - 1.0,
            ModelId::Model4 => 1.0 / 3.0 + z[0] + z[1] + z[0] * z[1],
        }
    }

    /// Interquartile range of the first smoothing covariate's law.
    pub fn central_z_range(self) -> (f64, f64) {
        match self {
            ModelId::Model1 | ModelId::Model2 => (1.0 - 0.674_489_750_196_081_7, 1.0 + 0.674_489_750_196_081_7),
            ModelId::Model3 => (-2.5, -1.5),
            ModelId::Model4 => (-0.674_489_750_196_081_7, 0.674_489_750_196_081_7),
        }
    }

    /// `[λ₀ − 0.8, λ₀ + 0.8]` by 0.001.
    pub fn default_grid(self) -> LambdaGrid {
        let l = self.lambda0();
        LambdaGrid { lo: l - 0.8, hi: l + 0.8, step: 0.001 }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

impl FromStr for ModelId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().trim_start_matches("model").trim() {
            "1" => Ok(ModelId::Model1),
            "2" => Ok(ModelId::Model2),
            "3" => Ok(ModelId::Model3),
            "4" => Ok(ModelId::Model4),
            other => Err(Error::InvalidConfig(format!("unknown model id '{other}', expected 1-4"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub model: ModelId,
    pub n: usize,
    pub seed: u64,
    /// ChaCha stream of `seed` used for the draw.
    pub stream: u64,
    pub lambda0: Option<f64>,
    pub beta0: Option<Vec<f64>>,
    /// Number of Bernoulli dummies in Model 4 (10 unless overridden).
    pub dummy_count: Option<usize>,
}

impl DgpSpec {
    pub fn new(model: ModelId, n: usize, seed: u64) -> Self {
        Self { model, n, seed, stream: 0, lambda0: None, beta0: None, dummy_count: None }
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda0.unwrap_or_else(|| self.model.lambda0())
    }

    pub fn dummy_count(&self) -> usize {
        match self.model {
            ModelId::Model4 => self.dummy_count.unwrap_or(10),
            _ => 0,
        }
    }

    /// Slopes on `(X_c, X_d)`; Model 4 dummy coefficients are fixed `U(−1, 1)` draws.
    pub fn beta0(&self) -> Vec<f64> {
        if let Some(b) = &self.beta0 {
            return b.clone();
        }
        let mut b = vec![1.0];
        if self.model == ModelId::Model4 {
            let mut rng = ChaCha20Rng::seed_from_u64(MODEL4_COEFFICIENT_SEED);
            let u = Uniform::new(-1.0, 1.0);
            b.extend((0..self.dummy_count()).map(|_| u.sample(&mut rng)));
        }
        b
    }
}

/// One simulated sample with its true regression function values.
#[derive(Debug, Clone)]
pub struct SimDraw {
    pub data: Dataset<f64>,
    pub m: Array1<f64>,
    pub lambda0: f64,
    pub beta0: Vec<f64>,
}

struct Row {
    x: f64,
    z: [f64; 2],
    eps: f64,
}

fn draw_row(model: ModelId, rng: &mut ChaCha20Rng) -> Row {
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    match model {
        ModelId::Model1 | ModelId::Model2 => {
            let z = 1.0 + std_normal.sample(rng);
            let x: f64 = -2.0 / 3.0 * z + std_normal.sample(rng);
            let eps = if model == ModelId::Model1 {
                ((1.0 + x * x) / 2.0).sqrt() * std_normal.sample(rng) / 13f64.sqrt()
            } else {
                std_normal.sample(rng) / 3.0
            };
            Row { x, z: [z, 0.0], eps }
        }
        ModelId::Model3 => {
            // Error law U(−1/3, 1/3) has variance 1/27.
            let z = rng.gen_range(-3.0..-1.0);
            let x = 2.0 / 3.0 * z + rng.gen_range(-1.0..1.0);
            let eps = rng.gen_range(-1.0 / 3.0..1.0 / 3.0);
            Row { x, z: [z, 0.0], eps }
        }
        ModelId::Model4 => {
            let z1 = std_normal.sample(rng);
            let z2 = std_normal.sample(rng);
            let x = -(z1 + z2) / 3.0 + std_normal.sample(rng);
            Row { x, z: [z1, z2], eps: std_normal.sample(rng) / 3.0 }
        }
    }
}

/// Dummy patterns in which every combination is shared by at least four rows.
fn dummy_patterns(n: usize, count: usize, rng: &mut ChaCha20Rng) -> Array2<i64> {
    let ber = Bernoulli::new(0.2).expect("valid probability");
    let groups = (n / 4).max(1);
    let patterns: Vec<Vec<i64>> =
        (0..groups).map(|_| (0..count).map(|_| i64::from(ber.sample(rng))).collect()).collect();
    let mut assignment: Vec<usize> = (0..n).map(|i| (i / 4).min(groups - 1)).collect();
    assignment.shuffle(rng);
    Array2::from_shape_fn((n, count), |(i, l)| patterns[assignment[i]][l])
}

pub fn generate(spec: &DgpSpec) -> Result<SimDraw> {
    let n = spec.n;
    if n < 4 {
        return Err(Error::InvalidConfig(format!("sample size {n} too small")));
    }
    let model = spec.model;
    let lambda0 = spec.lambda0();
    let beta0 = spec.beta0();
    let dummies = spec.dummy_count();
    if beta0.len() != 1 + dummies {
        return Err(Error::DimensionMismatch { expected: 1 + dummies, found: beta0.len() });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    rng.set_stream(spec.stream);
    let x_disc = if dummies > 0 { dummy_patterns(n, dummies, &mut rng) } else { Array2::zeros((n, 0)) };
    let q = if model == ModelId::Model4 { 2 } else { 1 };
    let mut y = Array1::zeros(n);
    let mut x = Array2::zeros((n, 1));
    let mut z = Array2::zeros((n, q));
    let mut m = Array1::zeros(n);
    for i in 0..n {
        let shift: f64 = x_disc.row(i).iter().zip(&beta0[1..]).map(|(&d, b)| d as f64 * b).sum();
        let mut attempt = 0;
        let (row, yi) = loop {
            let row = draw_row(model, &mut rng);
            let u = row.x * beta0[0] + shift + model.m(&row.z) + row.eps;
            if let Some(v) = inverse_box_cox(u, lambda0) {
                break (row, v);
            }
            attempt += 1;
            if attempt >= MAX_RESAMPLES {
                return Err(Error::Generation(format!(
                    "model {model}: λu + 1 ≤ 0 for observation {i} after {MAX_RESAMPLES} resamples (λ = {lambda0}, last u = {u})"
                )));
            }
        };
        y[i] = yi;
        x[[i, 0]] = row.x;
        for k in 0..q {
            z[[i, k]] = row.z[k];
        }
        m[i] = model.m(&row.z);
    }
    Ok(SimDraw { data: Dataset::new(y, x, x_disc, z)?, m, lambda0, beta0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstimatorKind {
    SmoothMd,
    SmoothMdNoGamma,
    Nl2sls,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::SmoothMd => "smoothmd",
            EstimatorKind::SmoothMdNoGamma => "smoothmd_nogamma",
            EstimatorKind::Nl2sls => "nl2sls",
        }
    }
}

#[derive(Debug, Clone)]
pub struct McConfig {
    pub model: ModelId,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub dummy_count: Option<usize>,
    /// Defaults to the model's `[λ₀ − 0.8, λ₀ + 0.8]` grid.
    pub grid: Option<LambdaGrid>,
    pub bandwidth: Bandwidth,
    pub weights: WeightConfig<f64>,
    pub estimators: Vec<EstimatorKind>,
    /// Variance estimators used for Z-tests of the SmoothMD fits.
    pub variance_modes: Vec<VarianceMode>,
    pub levels: Vec<f64>,
    pub dm_lambda: bool,
    pub dm_beta: bool,
    pub dm_joint: bool,
    pub test_draws: usize,
    /// Hypothesized λ values for the distance-metric power curve.
    pub power_lambda: Vec<f64>,
    /// Hypothesized values of the first slope for the β power curve.
    pub power_beta: Vec<f64>,
    /// Points (first smoothing covariate) at which `m̂` is recorded.
    pub m_eval: Vec<f64>,
}

impl McConfig {
    pub fn new(model: ModelId, n: usize, reps: usize, seed: u64) -> Self {
        Self {
            model,
            n,
            reps,
            seed,
            dummy_count: None,
            grid: None,
            bandwidth: Bandwidth::default(),
            weights: WeightConfig::default(),
            estimators: vec![EstimatorKind::SmoothMd],
            variance_modes: vec![VarianceMode::SmoothMd],
            levels: vec![0.05, 0.10],
            dm_lambda: false,
            dm_beta: false,
            dm_joint: false,
            test_draws: 100_000,
            power_lambda: Vec::new(),
            power_beta: Vec::new(),
            m_eval: Vec::new(),
        }
    }

    fn spec(&self, rep: usize) -> DgpSpec {
        DgpSpec { stream: rep as u64, dummy_count: self.dummy_count, ..DgpSpec::new(self.model, self.n, self.seed) }
    }

    fn grid(&self) -> LambdaGrid {
        self.grid.unwrap_or_else(|| self.model.default_grid())
    }

    fn needs_tests(&self) -> bool {
        self.dm_lambda || self.dm_beta || self.dm_joint || !self.power_lambda.is_empty() || !self.power_beta.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub estimator: String,
    pub param: String,
    pub truth: f64,
    pub mean: f64,
    pub bias: f64,
    pub sd: f64,
    pub bias_mc_se: f64,
    pub sd_mc_se: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub estimator: String,
    /// `z:<variance>` for Wald tests or the distance-metric test name.
    pub test: String,
    pub param: String,
    pub level: f64,
    pub rate: f64,
    pub mc_se: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub test: String,
    pub hypothesis: f64,
    pub level: f64,
    pub power: f64,
    pub mc_se: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCurveRow {
    pub z: f64,
    pub truth: f64,
    pub mean: f64,
    pub sd: f64,
    pub count: usize,
}

/// Aggregated Monte Carlo results; contains nothing time-dependent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub model: u8,
    pub n: usize,
    pub seed: u64,
    pub reps: usize,
    pub failures: usize,
    pub failure_messages: Vec<String>,
    pub warnings: Vec<String>,
    pub estimates: Vec<EstimateRow>,
    pub rates: Vec<RateRow>,
    pub power: Vec<PowerRow>,
    pub m_curve: Vec<MCurveRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub elapsed_seconds: f64,
    pub threads: usize,
}

/// Everything measured on one replication, keyed by fixed positions.
#[derive(Debug, Clone, Default)]
struct Outcome {
    /// `(estimator, param, truth, value)`.
    estimates: Vec<(String, String, f64, f64)>,
    /// `(estimator, test, param, level, reject)`.
    rejections: Vec<(String, String, String, f64, bool)>,
    /// `(test, hypothesis, level, reject)`.
    power: Vec<(String, f64, f64, bool)>,
    m_hat: Vec<Option<f64>>,
}

fn param_names(p: usize) -> Vec<String> {
    std::iter::once("lambda".to_string()).chain((1..=p).map(|k| format!("beta{k}"))).collect()
}

fn replication(cfg: &McConfig, rep: usize) -> Result<Outcome> {
    let draw = generate(&cfg.spec(rep))?;
    let p = draw.data.p();
    let names = param_names(p);
    let truth: Vec<f64> = std::iter::once(draw.lambda0).chain(draw.beta0.iter().copied()).collect();
    let z_crit: Vec<(f64, f64)> = cfg
        .levels
        .iter()
        .map(|&a| (a, StatNormal::new(0.0, 1.0).expect("standard normal").inverse_cdf(1.0 - a / 2.0)))
        .collect();
    let mut out = Outcome::default();
    let test_seed = cfg.seed.rotate_left(17) ^ (rep as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    let opts = TestOptions { level: cfg.levels.iter().cloned().fold(0.0, f64::max), draws: cfg.test_draws, seed: test_seed };

    let mut tested = false;
    for &kind in &cfg.estimators {
        let name = kind.name().to_string();
        match kind {
            EstimatorKind::SmoothMd | EstimatorKind::SmoothMdNoGamma => {
                let use_gamma = kind == EstimatorKind::SmoothMd;
                let config = EstimatorConfig {
                    grid: cfg.grid(),
                    scale: ScaleChoice::GeometricMean,
                    use_gamma,
                    kernel: KernelOptions { bandwidth: cfg.bandwidth, ..Default::default() },
                    weights: cfg.weights.clone(),
                    ..Default::default()
                };
                let problem = Problem::new(draw.data.clone(), &config.kernel, &config.weights, use_gamma)?;
                let fit = fit_problem(&problem, &config)?;
                let est: Vec<f64> = std::iter::once(fit.lambda_hat).chain(fit.beta_hat.iter().copied()).collect();
                for k in 0..=p {
                    out.estimates.push((name.clone(), names[k].clone(), truth[k], est[k]));
                }
                let mut primary_var = None;
                for &mode in &cfg.variance_modes {
                    let var = estimate_vcov(&problem, &fit, mode, SigmaMode::EikerWhite)?;
                    let label = match mode {
                        VarianceMode::SmoothMd => "z:smoothmd",
                        VarianceMode::Star => "z:smoothmd_star",
                    };
                    for k in 0..=p {
                        let zstat = (est[k] - truth[k]) / var.se[k];
                        for &(a, c) in &z_crit {
                            out.rejections.push((name.clone(), label.into(), names[k].clone(), a, zstat.abs() > c));
                        }
                    }
                    primary_var.get_or_insert(var);
                }
                if !tested && cfg.needs_tests() {
                    tested = true;
                    let var = match primary_var {
                        Some(v) => v,
                        None => estimate_vcov(&problem, &fit, VarianceMode::SmoothMd, SigmaMode::EikerWhite)?,
                    };
                    let mut first = Array2::zeros((1, p));
                    first[[0, 0]] = 1.0;
                    let push = |test: &str, param: &str, pv: f64, out: &mut Outcome| {
                        for &a in &cfg.levels {
                            out.rejections.push((name.clone(), test.into(), param.into(), a, pv <= a));
                        }
                    };
                    if cfg.dm_lambda || !cfg.power_lambda.is_empty() {
                        let mut lams = cfg.power_lambda.clone();
                        if cfg.dm_lambda {
                            lams.insert(0, draw.lambda0);
                        }
                        let curve = dm_lambda_curve(&problem, &fit, &var, &lams, &opts)?;
                        let mut iter = curve.iter();
                        if cfg.dm_lambda {
                            push("dm_lambda", "lambda", iter.next().expect("size point").p_value, &mut out);
                        }
                        for t in iter {
                            for &a in &cfg.levels {
                                out.power.push(("dm_lambda".into(), t.hypothesis_value(), a, t.p_value <= a));
                            }
                        }
                    }
                    if cfg.dm_beta {
                        let r = Restriction::new(first.clone(), Array1::from_elem(1, draw.beta0[0]))?;
                        let t = dm_beta_test(&problem, &fit, &var, &r, &opts)?;
                        push("dm_beta", "beta1", t.p_value, &mut out);
                    }
                    for &c in &cfg.power_beta {
                        let r = Restriction::new(first.clone(), Array1::from_elem(1, c))?;
                        let t = dm_beta_test(&problem, &fit, &var, &r, &opts)?;
                        for &a in &cfg.levels {
                            out.power.push(("dm_beta".into(), c, a, t.p_value <= a));
                        }
                    }
                    if cfg.dm_joint {
                        let r = Restriction::new(first.clone(), Array1::from_elem(1, draw.beta0[0]))?;
                        let t = dm_joint_test(&problem, &fit, &var, &r, draw.lambda0, &opts)?;
                        push("dm_joint", "lambda,beta1", t.p_value, &mut out);
                    }
                }
                if !cfg.m_eval.is_empty() && out.m_hat.is_empty() {
                    let t = draw.data.transformed(fit.lambda_hat, 0);
                    let resid = &t - &draw.data.x().dot(&fit.beta_hat);
                    let q = draw.data.q();
                    let mut pts = Array2::zeros((cfg.m_eval.len(), q));
                    for (i, &zv) in cfg.m_eval.iter().enumerate() {
                        pts[[i, 0]] = zv;
                    }
                    out.m_hat = problem.plan().nw_regress(resid.view(), pts.view(), problem.plan().bandwidth())?;
                }
            }
            EstimatorKind::Nl2sls => {
                let config = Nl2slsConfig { grid: cfg.grid(), ..Default::default() };
                let fit = nl2sls_fit(&draw.data, draw.m.view(), &config)?;
                let est: Vec<f64> = std::iter::once(fit.lambda_hat).chain(fit.beta_hat.iter().copied()).collect();
                // se layout is (λ, α, β, δ).
                let se: Vec<f64> = std::iter::once(fit.se[0]).chain(fit.se.iter().skip(2).take(p).copied()).collect();
                for k in 0..=p {
                    out.estimates.push((name.clone(), names[k].clone(), truth[k], est[k]));
                    let zstat = (est[k] - truth[k]) / se[k];
                    for &(a, c) in &z_crit {
                        out.rejections.push((name.clone(), "z:eiker_white".into(), names[k].clone(), a, zstat.abs() > c));
                    }
                }
            }
        }
    }
    Ok(out)
}

#[derive(Default)]
struct Moments {
    count: usize,
    sum: CompensatedSum,
    sum_sq: CompensatedSum,
}

impl Moments {
    fn add(&mut self, v: f64) {
        self.count += 1;
        self.sum.add(v);
        self.sum_sq.add(v * v);
    }

    fn mean(&self) -> f64 {
        self.sum.value() / self.count as f64
    }

    /// Sample standard deviation with `n − 1` denominator (0 for one value).
    fn sd(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let c = self.count as f64;
        let m = self.mean();
        ((self.sum_sq.value() - c * m * m).max(0.0) / (c - 1.0)).sqrt()
    }
}

/// Ordered map keyed by first appearance, so report rows follow replication order.
struct Keyed<K, V> {
    keys: Vec<K>,
    values: Vec<V>,
}

impl<K: PartialEq + Clone, V: Default> Keyed<K, V> {
    fn new() -> Self {
        Self { keys: Vec::new(), values: Vec::new() }
    }

    fn entry(&mut self, key: &K) -> &mut V {
        let idx = match self.keys.iter().position(|k| k == key) {
            Some(i) => i,
            None => {
                self.keys.push(key.clone());
                self.values.push(V::default());
                self.keys.len() - 1
            }
        };
        &mut self.values[idx]
    }
}

fn rate_se(p: f64, count: usize) -> f64 {
    (p * (1.0 - p) / count.max(1) as f64).sqrt()
}

fn aggregate(cfg: &McConfig, outcomes: Vec<Result<Outcome>>) -> McReport {
    let mut estimates: Keyed<(String, String), (f64, Moments)> = Keyed::new();
    let mut rates: Keyed<(String, String, String, u64), Moments> = Keyed::new();
    let mut power: Keyed<(String, u64, u64), Moments> = Keyed::new();
    let mut m_curve: Vec<Moments> = cfg.m_eval.iter().map(|_| Moments::default()).collect();
    let mut failures = 0;
    let mut failure_messages = Vec::new();
    for (rep, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(o) => {
                for (est, param, truth, v) in o.estimates {
                    let e = estimates.entry(&(est, param));
                    e.0 = truth;
                    e.1.add(v);
                }
                for (est, test, param, level, rej) in o.rejections {
                    rates.entry(&(est, test, param, level.to_bits())).add(f64::from(u8::from(rej)));
                }
                for (test, hyp, level, rej) in o.power {
                    power.entry(&(test, hyp.to_bits(), level.to_bits())).add(f64::from(u8::from(rej)));
                }
                for (acc, v) in m_curve.iter_mut().zip(o.m_hat) {
                    if let Some(v) = v {
                        acc.add(v);
                    }
                }
            }
            Err(e) => {
                failures += 1;
                failure_messages.push(format!("replication {rep}: {e}"));
            }
        }
    }
    let mut warnings = Vec::new();
    if failures * 100 > cfg.reps {
        warnings.push(format!("{failures} of {} replications failed", cfg.reps));
    }
    let estimates = estimates
        .keys
        .into_iter()
        .zip(estimates.values)
        .map(|((estimator, param), (truth, m))| {
            let sd = m.sd();
            let c = m.count as f64;
            EstimateRow {
                estimator,
                param,
                truth,
                mean: m.mean(),
                bias: m.mean() - truth,
                sd,
                bias_mc_se: sd / c.sqrt(),
                sd_mc_se: if m.count > 1 { sd / (2.0 * (c - 1.0)).sqrt() } else { 0.0 },
                count: m.count,
            }
        })
        .collect();
    let rates = rates
        .keys
        .into_iter()
        .zip(rates.values)
        .map(|((estimator, test, param, level), m)| RateRow {
            estimator,
            test,
            param,
            level: f64::from_bits(level),
            rate: m.mean(),
            mc_se: rate_se(m.mean(), m.count),
            count: m.count,
        })
        .collect();
    let power = power
        .keys
        .into_iter()
        .zip(power.values)
        .map(|((test, hyp, level), m)| PowerRow {
            test,
            hypothesis: f64::from_bits(hyp),
            level: f64::from_bits(level),
            power: m.mean(),
            mc_se: rate_se(m.mean(), m.count),
            count: m.count,
        })
        .collect();
    let truth_z = |z: f64| match cfg.model {
        ModelId::Model4 => cfg.model.m(&[z, 0.0]),
        other => other.m(&[z]),
    };
    let m_curve = cfg
        .m_eval
        .iter()
        .zip(m_curve)
        .map(|(&z, m)| MCurveRow { z, truth: truth_z(z), mean: if m.count > 0 { m.mean() } else { f64::NAN }, sd: m.sd(), count: m.count })
        .collect();
    McReport {
        model: cfg.model.number(),
        n: cfg.n,
        seed: cfg.seed,
        reps: cfg.reps,
        failures,
        failure_messages,
        warnings,
        estimates,
        rates,
        power,
        m_curve,
    }
}

pub fn run_monte_carlo(cfg: &McConfig) -> Result<(McReport, RunMetadata)> {
    if cfg.reps == 0 {
        return Err(Error::InvalidConfig("at least one replication is required".into()));
    }
    if cfg.estimators.is_empty() {
        return Err(Error::InvalidConfig("no estimators requested".into()));
    }
    if cfg.levels.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
        return Err(Error::InvalidConfig("test levels must lie in (0, 1)".into()));
    }
    cfg.grid().points::<f64>()?;
    let start = Instant::now();
    let outcomes: Vec<Result<Outcome>> = (0..cfg.reps).into_par_iter().map(|rep| replication(cfg, rep)).collect();
    let report = aggregate(cfg, outcomes);
    Ok((report, RunMetadata { elapsed_seconds: start.elapsed().as_secs_f64(), threads: rayon::current_num_threads() }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PowerAxis {
    Lambda,
    Beta,
}

/// Empirical rejection rate of the distance-metric test at each hypothesized value.
pub fn run_power_curve(
    model: ModelId,
    axis: PowerAxis,
    values: &[f64],
    n: usize,
    reps: usize,
    level: f64,
    seed: u64,
) -> Result<Vec<PowerRow>> {
    let mut cfg = McConfig::new(model, n, reps, seed);
    cfg.variance_modes = vec![VarianceMode::SmoothMd];
    cfg.levels = vec![level];
    match axis {
        PowerAxis::Lambda => cfg.power_lambda = values.to_vec(),
        PowerAxis::Beta => cfg.power_beta = values.to_vec(),
    }
    let (report, _) = run_monte_carlo(&cfg)?;
    Ok(report.power)
}
