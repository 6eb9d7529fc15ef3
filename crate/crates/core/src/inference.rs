//! Sandwich covariance of `(λ̂, β̂)` and distance-metric tests.
//!
//! All matrices here live on the `√n` scale: `V̂ = n⁻² TᵀMT` and
//! `Δ̂ = n⁻³ WᵀΣ̂W` with `T = (∂Ŷ(λ̂), −X̂)`, so `V̂⁻¹Δ̂V̂⁻¹` is the asymptotic
//! covariance of `√n (θ̂ − θ₀)`.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{argmin, scale_factor, FitResult, Problem, ProfilePath, Restriction};
use crate::linalg::{psd_factor, sym_eigen, symmetrize, SpdSolver};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum VarianceMode {
    /// Nuisance-corrected `Φ̂` weighting.
    #[default]
    SmoothMd,
    /// `Ω` in place of `Φ̂`.
    Star,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum SigmaMode {
    /// Squared density-weighted residuals.
    #[default]
    EikerWhite,
    /// Leave-one-out `Ω`-weighted average of squared residuals.
    LeaveOneOut,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceEstimate<T> {
    pub v_hat: Array2<T>,
    pub delta_hat: Array2<T>,
    pub vcov: Array2<T>,
    /// `sqrt(diag(vcov)/n)` for `(λ, β)`.
    pub se: Array1<T>,
    pub mode: VarianceMode,
    pub use_gamma: bool,
}

impl<T: Scalar> VarianceEstimate<T> {
    /// `∂Ŷᵀ B̂ ∂Ŷ / n²`, the curvature of the profile in λ.
    pub fn lambda_curvature(&self) -> Result<T> {
        let p = self.v_hat.nrows() - 1;
        let hs = self.v_hat.slice(s![1.., 1..]);
        let cs = self.v_hat.slice(s![1.., 0]).mapv(|v| -v);
        let solver = SpdSolver::new(hs, "partialled covariate block")?;
        debug_assert_eq!(cs.len(), p);
        let x = solver.solve_vec(cs.view());
        Ok(self.v_hat[[0, 0]] - cs.view().dot(&x.view()))
    }
}

/// Density-weighted residuals `Ŷ(λ̂) − X̂β̂`.
fn weighted_residuals<T: Scalar>(problem: &Problem<T>, fit: &FitResult<T>) -> Array1<T> {
    let y = problem.yhat(&[fit.lambda_hat], 0).remove_axis(Axis(1));
    y - problem.plan().xhat().dot(&fit.beta_hat)
}

/// `σ̂²_i = (ε̂_i f̂_z(Z_i))²`.
pub fn eiker_white_sigma<T: Scalar>(problem: &Problem<T>, fit: &FitResult<T>) -> Array1<T> {
    weighted_residuals(problem, fit).mapv(|e| e * e)
}

fn leave_one_out_sigma<T: Scalar>(problem: &Problem<T>, fit: &FitResult<T>) -> Array1<T> {
    let e2 = eiker_white_sigma(problem, fit);
    let w = problem.weights();
    let num = w.apply(e2.view().insert_axis(Axis(1))).remove_axis(Axis(1));
    // Ω_ii = 1, so removing the diagonal subtracts e²_i and 1.
    Zip::from(&num).and(w.omega_one()).and(&e2).map_collect(|&a, &d, &own| {
        let den = d - T::one();
        if den > T::lit(1e-12) { (a - own) / den } else { own }
    })
}

pub fn estimate_vcov<T: Scalar>(
    problem: &Problem<T>,
    fit: &FitResult<T>,
    mode: VarianceMode,
    sigma: SigmaMode,
) -> Result<VarianceEstimate<T>> {
    let n = problem.n();
    let p = problem.p();
    let nt = T::from_count(n);
    let use_gamma = problem.use_gamma();
    let mut tm = Array2::zeros((n, p + 1));
    tm.column_mut(0).assign(&problem.yhat(&[fit.lambda_hat], 1).column(0));
    tm.slice_mut(s![.., 1..]).assign(&problem.plan().xhat().mapv(|v| -v));

    let mut v_hat = tm.t().dot(&problem.weights().apply_centered(tm.view(), use_gamma)?) / (nt * nt);
    symmetrize(&mut v_hat);

    let mut dinf_t = tm.clone();
    if use_gamma {
        let w = problem.weights();
        let shift = w.omega_one().dot(&tm) / w.one_omega_one();
        for mut row in dinf_t.rows_mut() {
            row -= &shift;
        }
    }
    let w = match mode {
        VarianceMode::SmoothMd => problem.weights().apply_phi_t(dinf_t.view()),
        VarianceMode::Star => problem.weights().apply(dinf_t.view()),
    };
    let sig = match sigma {
        SigmaMode::EikerWhite => eiker_white_sigma(problem, fit),
        SigmaMode::LeaveOneOut => leave_one_out_sigma(problem, fit),
    };
    let mut sw = w.clone();
    Zip::from(sw.rows_mut()).and(&sig).for_each(|mut r, &s2| r *= s2);
    let mut delta_hat = w.t().dot(&sw) / (nt * nt * nt);
    symmetrize(&mut delta_hat);

    let solver = SpdSolver::new(v_hat.view(), "variance matrix V")?;
    let vinv = solver.inverse();
    let mut vcov = vinv.dot(&delta_hat).dot(&vinv);
    symmetrize(&mut vcov);
    let se = vcov.diag().mapv(|v| (v.max(T::zero()) / nt).sqrt());
    Ok(VarianceEstimate { v_hat, delta_hat, vcov, se, mode, use_gamma })
}

/// `β̂_R(λ) = β̂(λ) − H⁻¹Rᵀ(RH⁻¹Rᵀ)⁻¹(Rβ̂(λ) − c)`.
pub fn restricted_beta<T: Scalar>(problem: &Problem<T>, restriction: &Restriction<T>, lambda: T) -> Result<Array1<T>> {
    let path = problem.profile(&[lambda], 1);
    Ok(path.restricted(0, restriction)?.1)
}

/// Monte Carlo law of `Σ_k w_k χ²(df_k)`.
#[derive(Debug, Clone)]
pub struct WeightedChiSquare {
    weights: Vec<f64>,
    dfs: Vec<u32>,
    sorted: Vec<f64>,
}

const DRAW_BLOCK: usize = 8192;

impl WeightedChiSquare {
    pub fn new(weights: &[f64], dfs: &[u32], draws: usize, seed: u64) -> Result<Self> {
        if weights.len() != dfs.len() {
            return Err(Error::DimensionMismatch { expected: weights.len(), found: dfs.len() });
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidConfig("chi-square weights must be finite and nonnegative".into()));
        }
        if dfs.contains(&0) {
            return Err(Error::InvalidConfig("degrees of freedom must be positive".into()));
        }
        if draws == 0 {
            return Err(Error::InvalidConfig("at least one draw is required".into()));
        }
        let active: Vec<(f64, ChiSquared<f64>)> = weights
            .iter()
            .zip(dfs)
            .filter(|(w, _)| **w > 0.0)
            .map(|(&w, &d)| (w, ChiSquared::new(d as f64).expect("positive df")))
            .collect();
        let mut sorted = if active.is_empty() {
            vec![0.0; draws]
        } else {
            let blocks = draws.div_ceil(DRAW_BLOCK);
            (0..blocks)
                .into_par_iter()
                .flat_map_iter(|b| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(b as u64);
                    let len = DRAW_BLOCK.min(draws - b * DRAW_BLOCK);
                    let active = &active;
                    (0..len)
                        .map(move |_| active.iter().map(|(w, chi)| w * chi.sample(&mut rng)).sum::<f64>())
                        .collect::<Vec<_>>()
                })
                .collect()
        };
        sorted.sort_unstable_by(f64::total_cmp);
        Ok(Self { weights: weights.to_vec(), dfs: dfs.to_vec(), sorted })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dfs(&self) -> &[u32] {
        &self.dfs
    }

    /// Upper-tail critical value: the `(1 − level)` quantile.
    pub fn critical_value(&self, level: f64) -> f64 {
        self.quantile(1.0 - level)
    }

    /// Empirical quantile of order `prob`.
    pub fn quantile(&self, prob: f64) -> f64 {
        let m = self.sorted.len();
        let idx = ((prob * m as f64).ceil() as usize).clamp(1, m) - 1;
        self.sorted[idx]
    }

    /// `P(X ≥ x)`.
    pub fn p_value(&self, x: f64) -> f64 {
        if self.weights.iter().all(|&w| w == 0.0) {
            return if x > 0.0 { 0.0 } else { 1.0 };
        }
        let below = self.sorted.partition_point(|&v| v < x);
        (self.sorted.len() - below) as f64 / self.sorted.len() as f64
    }
}

/// Quantile of order `level` of `Σ_k w_k χ²(df_k)`, by `draws` seeded samples.
pub fn weighted_chisq_quantile(weights: &[f64], dfs: &[u32], level: f64, draws: usize, seed: u64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfig(format!("level must lie in (0, 1), got {level}")));
    }
    Ok(WeightedChiSquare::new(weights, dfs, draws, seed)?.quantile(level))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Hypothesis {
    Lambda { lambda_r: f64 },
    Beta { r: Vec<Vec<f64>>, c: Vec<f64> },
    Joint { r: Vec<Vec<f64>>, c: Vec<f64>, lambda_r: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub hypothesis: Hypothesis,
    pub statistic: f64,
    pub eigen_weights: Vec<f64>,
    pub dfs: Vec<u32>,
    pub level: f64,
    pub critical_value: f64,
    pub p_value: f64,
    pub reject: bool,
    /// Re-minimized λ under a slope restriction.
    pub lambda_restricted: Option<f64>,
}

impl TestResult {
    /// Hypothesized λ, or the single restricted slope value.
    pub fn hypothesis_value(&self) -> f64 {
        match &self.hypothesis {
            Hypothesis::Lambda { lambda_r } => *lambda_r,
            Hypothesis::Beta { c, .. } => c.first().copied().unwrap_or(f64::NAN),
            Hypothesis::Joint { lambda_r, .. } => *lambda_r,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestOptions {
    pub level: f64,
    pub draws: usize,
    pub seed: u64,
}

impl Default for TestOptions {
    fn default() -> Self {
        Self { level: 0.1, draws: 200_000, seed: 0x5eed_d157 }
    }
}

impl TestOptions {
    fn validate(&self) -> Result<()> {
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidConfig(format!("level must lie in (0, 1), got {}", self.level)));
        }
        if self.draws < 100_000 {
            return Err(Error::InvalidConfig(format!("at least 1e5 reference draws required, got {}", self.draws)));
        }
        Ok(())
    }
}

fn restriction_rows<T: Scalar>(r: &Restriction<T>) -> (Vec<Vec<f64>>, Vec<f64>) {
    (
        r.r.rows().into_iter().map(|row| row.iter().map(|v| v.as_f64()).collect()).collect(),
        r.c.iter().map(|v| v.as_f64()).collect(),
    )
}

/// Positive eigenvalues of `G Δ̂`, via the symmetric form `Lᵀ G L` with `Δ̂ = L Lᵀ`.
pub fn mixture_weights<T: Scalar>(g: ArrayView2<T>, delta: ArrayView2<T>) -> Vec<f64> {
    let l = psd_factor(delta);
    let m = l.t().dot(&g).dot(&l);
    let (vals, _) = sym_eigen(m.view());
    let vals: Vec<f64> = vals.iter().map(|v| v.as_f64()).collect();
    let top = vals.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let mut w: Vec<f64> = vals.into_iter().filter(|&v| v > 1e-10 * top).collect();
    w.reverse();
    w
}

/// Blocks of `V̂`: `(d_s, c_s, H_s)` with `V̂ = [[d_s, −c_sᵀ], [−c_s, H_s]]`.
fn v_blocks<T: Scalar>(v: &Array2<T>) -> (T, Array1<T>, Array2<T>) {
    (v[[0, 0]], v.slice(s![1.., 0]).mapv(|x| -x), v.slice(s![1.., 1..]).to_owned())
}

/// `V̂⁻¹ e₀ e₀ᵀ V̂⁻¹ · b` where `b = d_s − c_sᵀ H_s⁻¹ c_s`.
fn lambda_term<T: Scalar>(v: &Array2<T>) -> Result<Array2<T>> {
    let (ds, cs, hs) = v_blocks(v);
    let hsolve = SpdSolver::new(hs.view(), "partialled covariate block")?;
    let hc = hsolve.solve_vec(cs.view());
    let b = ds - cs.dot(&hc);
    if !(b > T::zero()) {
        return Err(Error::Singular { what: "profile curvature in lambda".into(), condition: f64::INFINITY });
    }
    let mut e = Array1::zeros(v.nrows());
    e[0] = T::one();
    e.slice_mut(s![1..]).assign(&hc);
    // V⁻¹e₀ = (1, H_s⁻¹c_s)/b.
    Ok(outer(e.view(), e.view()) / b)
}

fn outer<T: Scalar>(a: ArrayView1<T>, b: ArrayView1<T>) -> Array2<T> {
    a.insert_axis(Axis(1)).dot(&b.insert_axis(Axis(0)))
}

/// `(H_s⁻¹Rᵀ(RH_s⁻¹Rᵀ)⁻¹RH_s⁻¹, B⁺)` for the scaled slope block.
fn restriction_blocks<T: Scalar>(hs: &Array2<T>, r: &Restriction<T>) -> Result<(Array2<T>, Array2<T>)> {
    let p = hs.nrows();
    let hinv = SpdSolver::new(hs.view(), "partialled covariate block")?.inverse();
    if r.rank() == 0 {
        return Ok((Array2::zeros((p, p)), hinv));
    }
    let hr = hinv.dot(&r.r.t());
    let m = r.r.dot(&hr);
    let msolve = SpdSolver::new(m.view(), "rank-deficient restriction matrix")?;
    let a = hr.dot(&msolve.solve_mat(hr.t()));
    let bplus = &hinv - &a;
    Ok((a, bplus))
}

fn embed<T: Scalar>(block: &Array2<T>) -> Array2<T> {
    let p = block.nrows();
    let mut out = Array2::zeros((p + 1, p + 1));
    out.slice_mut(s![1.., 1..]).assign(block);
    out
}

/// Plug-in weight matrix for the slope restriction with λ re-minimized.
pub fn beta_weight_matrix<T: Scalar>(v: &Array2<T>, r: &Restriction<T>) -> Result<Array2<T>> {
    let (ds, cs, hs) = v_blocks(v);
    let (a, bplus) = restriction_blocks(&hs, r)?;
    let br = ds - cs.dot(&bplus.dot(&cs));
    if !(br > T::zero()) {
        return Err(Error::Singular { what: "restricted profile curvature".into(), condition: f64::INFINITY });
    }
    let mut w = Array1::zeros(v.nrows());
    w[0] = T::one();
    w.slice_mut(s![1..]).assign(&bplus.dot(&cs));
    let mut g = embed(&a) - outer(w.view(), w.view()) / br + lambda_term(v)?;
    symmetrize(&mut g);
    Ok(g)
}

/// Plug-in weight matrix for the joint restriction with λ fixed.
pub fn joint_weight_matrix<T: Scalar>(v: &Array2<T>, r: &Restriction<T>) -> Result<Array2<T>> {
    let (_, _, hs) = v_blocks(v);
    let (a, _) = restriction_blocks(&hs, r)?;
    let mut g = embed(&a) + lambda_term(v)?;
    symmetrize(&mut g);
    Ok(g)
}

/// Quadratic form `Ŷ(λ)ᵀB̂Ŷ(λ)`, reusing the fitted path when λ is on the grid.
fn quad_at<T: Scalar>(problem: &Problem<T>, fit: &FitResult<T>, lambda: T) -> (ProfilePath<T>, usize) {
    match fit.path.lambdas().iter().position(|&l| l == lambda) {
        Some(k) => (fit.path.clone(), k),
        None => (problem.profile(&[lambda], 1), 0),
    }
}

fn finish(hypothesis: Hypothesis, statistic: f64, weights: Vec<f64>, opts: &TestOptions, lambda_restricted: Option<f64>) -> Result<TestResult> {
    let dfs = vec![1u32; weights.len()];
    let law = WeightedChiSquare::new(&weights, &dfs, opts.draws, opts.seed)?;
    let critical_value = law.critical_value(opts.level);
    let p_value = law.p_value(statistic);
    Ok(TestResult {
        hypothesis,
        statistic,
        eigen_weights: weights,
        dfs,
        level: opts.level,
        critical_value,
        p_value,
        reject: statistic > critical_value,
        lambda_restricted,
    })
}

fn check_fit<T: Scalar>(problem: &Problem<T>, fit: &FitResult<T>, var: &VarianceEstimate<T>) -> Result<()> {
    if fit.use_gamma != problem.use_gamma() || var.use_gamma != problem.use_gamma() {
        return Err(Error::InvalidConfig("fit, variance and problem disagree on the intercept".into()));
    }
    if var.v_hat.nrows() != problem.p() + 1 {
        return Err(Error::DimensionMismatch { expected: problem.p() + 1, found: var.v_hat.nrows() });
    }
    Ok(())
}

/// `DM_λ = n⁻¹Ŷ(λ_R)ᵀB̂Ŷ(λ_R) − n⁻¹Ŷ(λ̂)ᵀB̂Ŷ(λ̂)`.
pub fn dm_lambda_test<T: Scalar>(
    problem: &Problem<T>,
    fit: &FitResult<T>,
    var: &VarianceEstimate<T>,
    lambda_r: T,
    opts: &TestOptions,
) -> Result<TestResult> {
    opts.validate()?;
    check_fit(problem, fit, var)?;
    let n = T::from_count(problem.n());
    let (path, k) = quad_at(problem, fit, lambda_r);
    let stat = (path.quad(k) - fit.path.quad(fit.argmin)) / n;
    let weight = var.lambda_curvature()? * var.vcov[[0, 0]];
    finish(Hypothesis::Lambda { lambda_r: lambda_r.as_f64() }, stat.as_f64(), vec![weight.as_f64().max(0.0)], opts, None)
}

/// The λ test on many hypothesized values sharing one weight and reference law.
pub fn dm_lambda_curve<T: Scalar>(
    problem: &Problem<T>,
    fit: &FitResult<T>,
    var: &VarianceEstimate<T>,
    lambdas: &[T],
    opts: &TestOptions,
) -> Result<Vec<TestResult>> {
    opts.validate()?;
    check_fit(problem, fit, var)?;
    let n = T::from_count(problem.n());
    let weight = (var.lambda_curvature()? * var.vcov[[0, 0]]).as_f64().max(0.0);
    let law = WeightedChiSquare::new(&[weight], &[1], opts.draws, opts.seed)?;
    let crit = law.critical_value(opts.level);
    let path = problem.profile(lambdas, 64);
    let base = fit.path.quad(fit.argmin);
    Ok((0..lambdas.len())
        .map(|k| {
            let stat = ((path.quad(k) - base) / n).as_f64();
            TestResult {
                hypothesis: Hypothesis::Lambda { lambda_r: lambdas[k].as_f64() },
                statistic: stat,
                eigen_weights: vec![weight],
                dfs: vec![1],
                level: opts.level,
                critical_value: crit,
                p_value: law.p_value(stat),
                reject: stat > crit,
                lambda_restricted: None,
            }
        })
        .collect())
}

/// Slope restriction `Rβ = c` with λ re-minimized on the fitted grid.
pub fn dm_beta_test<T: Scalar>(
    problem: &Problem<T>,
    fit: &FitResult<T>,
    var: &VarianceEstimate<T>,
    restriction: &Restriction<T>,
    opts: &TestOptions,
) -> Result<TestResult> {
    opts.validate()?;
    check_fit(problem, fit, var)?;
    let n = T::from_count(problem.n());
    let path = &fit.path;
    let restricted: Vec<T> = (0..path.len())
        .map(|k| path.restricted(k, restriction).map(|(q, _)| q))
        .collect::<Result<_>>()?;
    let kr = argmin(restricted.iter().zip(path.lambdas()).map(|(&q, &l)| scale_factor(fit.s_used, l) * q))
        .ok_or_else(|| Error::Singular { what: "restricted profile is nowhere finite".into(), condition: f64::INFINITY })?;
    let stat = (restricted[kr] - path.quad(fit.argmin)) / n;
    let weights = if restriction.rank() == 0 {
        Vec::new()
    } else {
        mixture_weights(beta_weight_matrix(&var.v_hat, restriction)?.view(), var.delta_hat.view())
    };
    let (r, c) = restriction_rows(restriction);
    finish(Hypothesis::Beta { r, c }, stat.as_f64(), weights, opts, Some(path.lambda(kr).as_f64()))
}

/// Joint restriction `λ = λ_R, Rβ = c`.
pub fn dm_joint_test<T: Scalar>(
    problem: &Problem<T>,
    fit: &FitResult<T>,
    var: &VarianceEstimate<T>,
    restriction: &Restriction<T>,
    lambda_r: T,
    opts: &TestOptions,
) -> Result<TestResult> {
    opts.validate()?;
    check_fit(problem, fit, var)?;
    let n = T::from_count(problem.n());
    let (path, k) = quad_at(problem, fit, lambda_r);
    let (q, _) = path.restricted(k, restriction)?;
    let stat = (q - fit.path.quad(fit.argmin)) / n;
    let weights = mixture_weights(joint_weight_matrix(&var.v_hat, restriction)?.view(), var.delta_hat.view());
    let (r, c) = restriction_rows(restriction);
    finish(Hypothesis::Joint { r, c, lambda_r: lambda_r.as_f64() }, stat.as_f64(), weights, opts, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn chi_square_quantile() {
        let q = weighted_chisq_quantile(&[1.0], &[1], 0.95, 1_000_000, 7).unwrap();
        assert!((q - 3.841).abs() < 0.03, "{q}");
        let q2 = weighted_chisq_quantile(&[2.0], &[1], 0.95, 1_000_000, 7).unwrap();
        assert!((q2 - 2.0 * q).abs() < 1e-9, "same seed gives exactly twice the draws");
        assert_eq!(weighted_chisq_quantile(&[0.0], &[1], 0.95, 100_000, 1).unwrap(), 0.0);
        assert!(weighted_chisq_quantile(&[1.0], &[1], 1.5, 100_000, 1).is_err());
    }

    #[test]
    fn p_value_is_monotone_and_bounded() {
        let law = WeightedChiSquare::new(&[0.5, 1.5], &[1, 2], 100_000, 3).unwrap();
        let mut last = 1.0;
        for x in [0.0, 0.5, 1.0, 3.0, 10.0, 100.0] {
            let p = law.p_value(x);
            assert!((0.0..=1.0).contains(&p) && p <= last);
            last = p;
        }
        assert_eq!(law.p_value(-1.0), 1.0);
        let cv = law.critical_value(0.1);
        assert!((law.p_value(cv) - 0.1).abs() < 0.005);
    }

    #[test]
    fn reference_draws_are_seed_deterministic() {
        let a = WeightedChiSquare::new(&[1.0, 0.3], &[1, 1], 100_000, 11).unwrap();
        let b = WeightedChiSquare::new(&[1.0, 0.3], &[1, 1], 100_000, 11).unwrap();
        assert_eq!(a.quantile(0.9), b.quantile(0.9));
    }

    /// `V⁻¹ − C(CᵀVC)⁻¹Cᵀ` with `C` spanning the restricted tangent space.
    fn null_space_oracle(v: &Array2<f64>, c: &Array2<f64>) -> Array2<f64> {
        let vinv = SpdSolver::new(v.view(), "v").unwrap().inverse();
        let ctvc = c.t().dot(v).dot(c);
        let inner = SpdSolver::new(ctvc.view(), "c").unwrap().inverse();
        vinv - c.dot(&inner).dot(&c.t())
    }

    fn sample_v() -> Array2<f64> {
        array![[2.0, -0.3, 0.4], [-0.3, 1.5, 0.2], [0.4, 0.2, 1.1]]
    }

    #[test]
    fn beta_weight_matrix_matches_null_space_form() {
        let v = sample_v();
        let r = Restriction::new(array![[1.0, -2.0]], array![0.0]).unwrap();
        // Directions with Rδβ = 0, λ free: (1,0,0) and (0,2,1).
        let c = array![[1.0, 0.0], [0.0, 2.0], [0.0, 1.0]];
        let g = beta_weight_matrix(&v, &r).unwrap();
        let o = null_space_oracle(&v, &c);
        for (a, b) in g.iter().zip(o.iter()) {
            assert!((a - b).abs() < 1e-12, "{g:?} vs {o:?}");
        }
        let (vals, _) = sym_eigen(g.view());
        assert!(vals.iter().all(|&x| x > -1e-12));
        assert_eq!(vals.iter().filter(|&&x| x > 1e-10).count(), 1);
    }

    #[test]
    fn joint_weight_matrix_matches_null_space_form() {
        let v = sample_v();
        let r = Restriction::new(array![[1.0, -2.0]], array![0.0]).unwrap();
        let c = array![[0.0], [2.0], [1.0]];
        let g = joint_weight_matrix(&v, &r).unwrap();
        let o = null_space_oracle(&v, &c);
        for (a, b) in g.iter().zip(o.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        let empty = Restriction::new(Array2::zeros((0, 2)), Array1::zeros(0)).unwrap();
        let g0 = joint_weight_matrix(&v, &empty).unwrap();
        let vinv = SpdSolver::new(v.view(), "v").unwrap().inverse();
        let b = 1.0 / vinv[[0, 0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((g0[[i, j]] - vinv[[i, 0]] * vinv[[0, j]] * b).abs() < 1e-12);
            }
        }
        assert!(beta_weight_matrix(&v, &empty).unwrap().iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn mixture_weights_are_positive_eigenvalues() {
        let g = array![[1.0, 0.0], [0.0, 0.0]];
        let d = array![[2.0, 0.5], [0.5, 1.0]];
        assert_eq!(mixture_weights(g.view(), d.view()).len(), 1);
        assert!((mixture_weights(g.view(), d.view())[0] - 2.0).abs() < 1e-12);
    }
}
