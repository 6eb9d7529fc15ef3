//! Profiled SmoothMD estimation over a λ grid.
//!
//! For fixed λ the criterion is quadratic in `(γ, β)`, so the whole profile is
//! determined by three sufficient statistics of `Ŷ(λ)`:
//! `a = ŶᵀDŶ`, `b = X̂ᵀDŶ` and `u = 1ᵀΩŶ`, with `D` replaced by `Ω` when the
//! intercept is dropped. They are produced for many λ at once by two GEMMs
//! per chunk, after which every objective, restricted or not, costs `O(p²)`.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{Dataset, KernelOptions, KernelPlan};
use crate::linalg::SpdSolver;
use crate::scalar::Scalar;
use crate::weights::{WeightConfig, WeightOperator};

/// Closed, inclusive grid `lo, lo + step, …, hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl LambdaGrid {
    pub fn new(lo: f64, hi: f64, step: f64) -> Result<Self> {
        let g = Self { lo, hi, step };
        g.points::<f64>()?;
        Ok(g)
    }

    pub fn points<T: Scalar>(&self) -> Result<Vec<T>> {
        let Self { lo, hi, step } = *self;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidConfig(format!("grid requires lo < hi, got [{lo}, {hi}]")));
        }
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidConfig(format!("grid step must be positive, got {step}")));
        }
        let k = ((hi - lo) / step + 1e-9).floor() as usize;
        let mut pts: Vec<f64> = (0..=k).map(|i| lo + i as f64 * step).collect();
        if hi - pts[k] > 1e-9 * step {
            pts.push(hi);
        } else {
            pts[k] = hi;
        }
        Ok(pts.into_iter().map(T::lit).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ScaleChoice {
    GeometricMean,
    Fixed(f64),
    None,
}

#[derive(Debug, Clone)]
pub struct EstimatorConfig<T> {
    pub grid: LambdaGrid,
    pub scale: ScaleChoice,
    pub use_gamma: bool,
    pub kernel: KernelOptions<T>,
    pub weights: WeightConfig<T>,
    /// Golden-section search between the grid neighbours of the minimum.
    pub refine: bool,
    /// Number of λ values pushed through one matrix product.
    pub chunk: usize,
}

impl<T: Scalar> Default for EstimatorConfig<T> {
    fn default() -> Self {
        Self {
            grid: LambdaGrid { lo: -1.0, hi: 2.0, step: 0.001 },
            scale: ScaleChoice::GeometricMean,
            use_gamma: true,
            kernel: KernelOptions::default(),
            weights: WeightConfig::default(),
            refine: false,
            chunk: 128,
        }
    }
}

/// `exp(mean(log y))`.
pub fn geometric_mean<T: Scalar>(y: ArrayView1<T>) -> Result<T> {
    if y.is_empty() {
        return Err(Error::InvalidData("geometric mean of an empty sample".into()));
    }
    let mut acc = T::zero();
    for &v in y {
        if !(v > T::zero() && v.is_finite()) {
            return Err(Error::InvalidData(format!("response must be strictly positive, got {v}")));
        }
        acc += v.ln();
    }
    Ok((acc / T::from_count(y.len())).exp())
}

pub fn resolve_scale<T: Scalar>(choice: ScaleChoice, y: ArrayView1<T>) -> Result<T> {
    let s = match choice {
        ScaleChoice::GeometricMean => geometric_mean(y)?,
        ScaleChoice::Fixed(v) => T::lit(v),
        ScaleChoice::None => T::one(),
    };
    if s > T::zero() && s.is_finite() {
        Ok(s)
    } else {
        Err(Error::InvalidConfig(format!("response scale must be positive, got {s}")))
    }
}

/// `s^{−2λ}`.
pub fn scale_factor<T: Scalar>(s: T, lambda: T) -> T {
    (-(lambda + lambda) * s.ln()).exp()
}

/// Data, kernel plan and weight operator shared by estimation and inference.
#[derive(Debug, Clone)]
pub struct Problem<T> {
    data: Dataset<T>,
    plan: KernelPlan<T>,
    weights: WeightOperator<T>,
    use_gamma: bool,
    omega_xhat: Array2<T>,
    xo1: Array1<T>,
    h: Array2<T>,
    solver: SpdSolver<T>,
}

impl<T: Scalar> Problem<T> {
    pub fn new(
        data: Dataset<T>,
        kernel: &KernelOptions<T>,
        weights: &WeightConfig<T>,
        use_gamma: bool,
    ) -> Result<Self> {
        let plan = KernelPlan::build(&data, kernel)?;
        let weights = WeightOperator::build(&data, weights)?;
        Self::from_parts(data, plan, weights, use_gamma)
    }

    pub fn from_parts(data: Dataset<T>, plan: KernelPlan<T>, weights: WeightOperator<T>, use_gamma: bool) -> Result<Self> {
        let n = data.n();
        if plan.n() != n || weights.n() != n {
            return Err(Error::DimensionMismatch { expected: n, found: plan.n().min(weights.n()) });
        }
        let xhat = plan.xhat();
        let omega_xhat = weights.apply(xhat);
        let xo1 = xhat.t().dot(&weights.omega_one());
        let mut h = xhat.t().dot(&omega_xhat);
        if use_gamma {
            let s1 = weights.one_omega_one();
            for i in 0..h.nrows() {
                for j in 0..h.ncols() {
                    h[[i, j]] -= xo1[i] * xo1[j] / s1;
                }
            }
        }
        crate::linalg::symmetrize(&mut h);
        let solver = SpdSolver::new(h.view(), "collinear partialled covariates")?;
        Ok(Self { data, plan, weights, use_gamma, omega_xhat, xo1, h, solver })
    }

    pub fn data(&self) -> &Dataset<T> {
        &self.data
    }

    pub fn plan(&self) -> &KernelPlan<T> {
        &self.plan
    }

    pub fn weights(&self) -> &WeightOperator<T> {
        &self.weights
    }

    pub fn use_gamma(&self) -> bool {
        self.use_gamma
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    pub fn p(&self) -> usize {
        self.data.p()
    }

    /// `H = X̂ᵀDX̂` (or `X̂ᵀΩX̂` without the intercept).
    pub fn h(&self) -> ArrayView2<'_, T> {
        self.h.view()
    }

    pub fn h_solver(&self) -> &SpdSolver<T> {
        &self.solver
    }

    /// `X̂ᵀΩ1`.
    pub fn xhat_omega_one(&self) -> ArrayView1<'_, T> {
        self.xo1.view()
    }

    /// `Ŷ` (or a λ-derivative) for every λ in `lambdas`, one column each.
    pub fn yhat(&self, lambdas: &[T], order: u8) -> Array2<T> {
        self.plan.yhat_matrix(&self.data, lambdas, order)
    }

    /// Sufficient statistics for each λ, evaluated in chunks of `chunk`.
    pub fn profile(&self, lambdas: &[T], chunk: usize) -> ProfilePath<T> {
        let p = self.p();
        let chunk = chunk.max(1);
        let parts: Vec<(Vec<T>, Array2<T>, Vec<T>)> = lambdas
            .par_chunks(chunk)
            .map(|lams| {
                let y = self.yhat(lams, 0);
                let oy = self.weights.apply(y.view());
                let a: Vec<T> = Zip::from(y.columns()).and(oy.columns()).map_collect(|c, d| c.dot(&d)).to_vec();
                let g = y.t().dot(&self.omega_xhat);
                let u = y.t().dot(&self.weights.omega_one()).to_vec();
                (a, g, u)
            })
            .collect();
        let mut a = Vec::with_capacity(lambdas.len());
        let mut b = Array2::zeros((lambdas.len(), p));
        let mut u = Vec::with_capacity(lambdas.len());
        let mut row = 0;
        for (pa, pg, pu) in parts {
            b.slice_mut(s![row..row + pg.nrows(), ..]).assign(&pg);
            row += pg.nrows();
            a.extend(pa);
            u.extend(pu);
        }
        let s1 = self.weights.one_omega_one();
        if self.use_gamma {
            for (k, (ak, &uk)) in a.iter_mut().zip(&u).enumerate() {
                *ak -= uk * uk / s1;
                b.row_mut(k).scaled_add(-uk / s1, &self.xo1);
            }
        }
        ProfilePath {
            lambdas: lambdas.to_vec(),
            a,
            b,
            u,
            hinv: self.solver.inverse(),
            xo1: self.xo1.clone(),
            s1,
            n: self.n(),
            use_gamma: self.use_gamma,
        }
    }

    /// `(γ̂(λ), β̂(λ))`.
    pub fn profile_gls(&self, lambda: T) -> (T, Array1<T>) {
        let path = self.profile(&[lambda], 1);
        (path.gamma(0), path.beta(0))
    }

    /// `n⁻² s^{−2λ} Ŷ(λ)ᵀ B̂ Ŷ(λ)`.
    pub fn profile_objective(&self, lambda: T, s: T) -> T {
        self.profile(&[lambda], 1).objective(0, s)
    }
}

/// Profile sufficient statistics along a set of λ values.
#[derive(Debug, Clone)]
pub struct ProfilePath<T> {
    lambdas: Vec<T>,
    a: Vec<T>,
    b: Array2<T>,
    u: Vec<T>,
    hinv: Array2<T>,
    xo1: Array1<T>,
    s1: T,
    n: usize,
    use_gamma: bool,
}

impl<T: Scalar> ProfilePath<T> {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn lambdas(&self) -> &[T] {
        &self.lambdas
    }

    pub fn lambda(&self, k: usize) -> T {
        self.lambdas[k]
    }

    /// `H⁻¹`.
    pub fn hinv(&self) -> ArrayView2<'_, T> {
        self.hinv.view()
    }

    /// `X̂ᵀDŶ(λ_k)`.
    pub fn b(&self, k: usize) -> ArrayView1<'_, T> {
        self.b.row(k)
    }

    pub fn beta(&self, k: usize) -> Array1<T> {
        self.hinv.dot(&self.b.row(k))
    }

    pub fn gamma(&self, k: usize) -> T {
        self.gamma_at(k, self.beta(k).view())
    }

    /// `γ̂` evaluated at an arbitrary slope vector.
    pub fn gamma_at(&self, k: usize, beta: ArrayView1<T>) -> T {
        if self.use_gamma {
            (self.u[k] - self.xo1.dot(&beta)) / self.s1
        } else {
            T::zero()
        }
    }

    /// `Ŷ(λ_k)ᵀ B̂ Ŷ(λ_k)`, unnormalized and unscaled.
    pub fn quad(&self, k: usize) -> T {
        let b = self.b.row(k);
        self.a[k] - b.dot(&self.hinv.dot(&b))
    }

    /// Minimum of `(Ŷ − X̂β)ᵀD(Ŷ − X̂β)` subject to `Rβ = c`, with its minimizer.
    pub fn restricted(&self, k: usize, r: &Restriction<T>) -> Result<(T, Array1<T>)> {
        let beta = self.beta(k);
        let (excess, beta_r) = r.project(self.hinv.view(), beta.view())?;
        Ok((self.quad(k) + excess, beta_r))
    }

    pub fn objective(&self, k: usize, s: T) -> T {
        let n = T::from_count(self.n);
        scale_factor(s, self.lambdas[k]) * self.quad(k) / (n * n)
    }
}

/// Linear restriction `Rβ = c` on the slopes.
#[derive(Debug, Clone, PartialEq)]
pub struct Restriction<T> {
    pub r: Array2<T>,
    pub c: Array1<T>,
}

impl<T: Scalar> Restriction<T> {
    pub fn new(r: Array2<T>, c: Array1<T>) -> Result<Self> {
        if r.nrows() != c.len() {
            return Err(Error::DimensionMismatch { expected: r.nrows(), found: c.len() });
        }
        Ok(Self { r, c })
    }

    pub fn rank(&self) -> usize {
        self.r.nrows()
    }

    /// `(Rβ − c)ᵀ(RH⁻¹Rᵀ)⁻¹(Rβ − c)` and `β − H⁻¹Rᵀ(RH⁻¹Rᵀ)⁻¹(Rβ − c)`.
    pub fn project(&self, hinv: ArrayView2<T>, beta: ArrayView1<T>) -> Result<(T, Array1<T>)> {
        if self.r.ncols() != beta.len() {
            return Err(Error::DimensionMismatch { expected: beta.len(), found: self.r.ncols() });
        }
        if self.rank() == 0 {
            return Ok((T::zero(), beta.to_owned()));
        }
        let hr = hinv.dot(&self.r.t());
        let m = self.r.dot(&hr);
        let solver = SpdSolver::new(m.view(), "rank-deficient restriction matrix")?;
        let resid = self.r.dot(&beta) - &self.c;
        let w = solver.solve_vec(resid.view());
        Ok((resid.dot(&w), &beta - &hr.dot(&w)))
    }
}

/// Estimated model at the profile minimizer.
#[derive(Debug, Clone)]
pub struct FitResult<T> {
    pub lambda_hat: T,
    pub beta_hat: Array1<T>,
    pub gamma_hat: T,
    /// `(λ, n⁻² s^{−2λ} Ŷᵀ B̂ Ŷ)` over the grid.
    pub objective_trace: Vec<(T, T)>,
    /// `ε̂_i = T(Y_i, λ̂) − Ê[T|Z_i] − (X_i − Ê[X|Z_i])ᵀβ̂`.
    pub residuals: Array1<T>,
    /// Asymptotic covariance of `√n (λ̂, β̂)`, filled by inference.
    pub vcov: Option<Array2<T>>,
    pub s_used: T,
    pub use_gamma: bool,
    pub boundary_hit: bool,
    pub path: ProfilePath<T>,
    /// Index of the grid minimum in `path`.
    pub argmin: usize,
}

impl<T: Scalar> FitResult<T> {
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.boundary_hit {
            w.push("grid boundary hit".to_string());
        }
        w
    }
}

/// Index of the smallest finite value; ties go to the first.
pub(crate) fn argmin<T: Scalar>(values: impl IntoIterator<Item = T>) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (k, v) in values.into_iter().enumerate() {
        if !v.is_finite() {
            continue;
        }
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((k, v));
        }
    }
    best.map(|(k, _)| k)
}

fn golden_section<T: Scalar>(mut lo: T, mut hi: T, f: impl Fn(T) -> T) -> T {
    let ratio = T::lit(0.5 * (5f64.sqrt() - 1.0));
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..60 {
        if (hi - lo).abs() <= T::lit(1e-10) {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 { x1 } else { x2 }
}

/// Fits the model on an already assembled problem.
pub fn fit_problem<T: Scalar>(problem: &Problem<T>, config: &EstimatorConfig<T>) -> Result<FitResult<T>> {
    if problem.use_gamma() != config.use_gamma {
        return Err(Error::InvalidConfig("problem and configuration disagree on the intercept".into()));
    }
    let grid: Vec<T> = config.grid.points()?;
    let s = resolve_scale(config.scale, problem.data().y())?;
    let path = problem.profile(&grid, config.chunk);
    let trace: Vec<(T, T)> = (0..path.len()).map(|k| (path.lambda(k), path.objective(k, s))).collect();
    let k = argmin(trace.iter().map(|t| t.1))
        .ok_or_else(|| Error::Singular { what: "profile objective is nowhere finite".into(), condition: f64::INFINITY })?;
    let boundary_hit = k == 0 || k + 1 == path.len();
    let (lambda_hat, beta_hat, gamma_hat) = if config.refine && !boundary_hit {
        let lam = golden_section(path.lambda(k - 1), path.lambda(k + 1), |l| problem.profile_objective(l, s));
        let (g, b) = problem.profile_gls(lam);
        if problem.profile_objective(lam, s) < trace[k].1 {
            (lam, b, g)
        } else {
            (path.lambda(k), path.beta(k), path.gamma(k))
        }
    } else {
        (path.lambda(k), path.beta(k), path.gamma(k))
    };
    let yhat = problem.yhat(&[lambda_hat], 0).remove_axis(Axis(1));
    let weighted = &yhat - &problem.plan().xhat().dot(&beta_hat);
    let residuals = Zip::from(&weighted).and(problem.plan().fz_hat()).map_collect(|&e, &f| e / f);
    Ok(FitResult {
        lambda_hat,
        beta_hat,
        gamma_hat,
        objective_trace: trace,
        residuals,
        vcov: None,
        s_used: s,
        use_gamma: config.use_gamma,
        boundary_hit,
        path,
        argmin: k,
    })
}

/// Builds the kernel plan and weight operator and fits the model.
pub fn fit<T: Scalar>(data: &Dataset<T>, config: &EstimatorConfig<T>) -> Result<(Problem<T>, FitResult<T>)> {
    let problem = Problem::new(data.clone(), &config.kernel, &config.weights, config.use_gamma)?;
    let result = fit_problem(&problem, config)?;
    Ok((problem, result))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn geometric_mean_examples() {
        assert!((geometric_mean(array![1.0f64, 4.0].view()).unwrap() - 2.0).abs() < 1e-15);
        assert!((geometric_mean(array![3.5f64, 3.5, 3.5].view()).unwrap() - 3.5).abs() < 1e-15);
        let e = std::f64::consts::E;
        assert!((geometric_mean(array![1.0, e, e * e].view()).unwrap() - e).abs() < 1e-15);
        assert!(geometric_mean(array![1.0, 0.0].view()).is_err());
    }

    #[test]
    fn grid_is_closed() {
        let g = LambdaGrid::new(-0.3, 1.3, 0.001).unwrap().points::<f64>().unwrap();
        assert_eq!(g.len(), 1601);
        assert_eq!(g[0], -0.3);
        assert_eq!(*g.last().unwrap(), 1.3);
        let odd = LambdaGrid::new(0.0, 1.0, 0.3).unwrap().points::<f64>().unwrap();
        assert_eq!(odd.len(), 5);
        assert_eq!(odd[4], 1.0);
        assert!(LambdaGrid::new(1.0, 0.0, 0.1).is_err());
        assert!(LambdaGrid::new(0.0, 1.0, 0.0).is_err());
        assert!(LambdaGrid::new(0.0, 1.0, 2.0).unwrap().points::<f64>().unwrap().len() == 2);
    }

    #[test]
    fn argmin_prefers_first_tie() {
        assert_eq!(argmin([3.0, 1.0, 1.0, 2.0]), Some(1));
        assert_eq!(argmin([f64::NAN, 2.0]), Some(1));
        assert_eq!(argmin::<f64>([]), None);
    }

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let x = golden_section(0.0, 1.0, |x: f64| (x - 0.3141).powi(2));
        assert!((x - 0.3141).abs() < 1e-8);
    }

    #[test]
    fn restriction_projection() {
        let hinv: Array2<f64> = array![[2.0, 0.5], [0.5, 1.0]];
        let beta = array![0.4, -1.0];
        let r = Restriction::new(array![[1.0, 1.0]], array![2.0]).unwrap();
        let (excess, br) = r.project(hinv.view(), beta.view()).unwrap();
        assert!((br[0] + br[1] - 2.0).abs() < 1e-14);
        assert!(excess > 0.0);
        let same = Restriction::new(array![[1.0, 1.0]], array![-0.6]).unwrap();
        let (e0, b0) = same.project(hinv.view(), beta.view()).unwrap();
        assert!(e0.abs() < 1e-15 && (&b0 - &beta).iter().all(|v| v.abs() < 1e-15));
        let pin = Restriction::new(Array2::eye(2), Array1::zeros(2)).unwrap();
        assert!(pin.project(hinv.view(), beta.view()).unwrap().1.iter().all(|v| v.abs() < 1e-14));
        let deficient = Restriction::new(array![[1.0, 1.0], [2.0, 2.0]], array![0.0, 0.0]).unwrap();
        assert!(deficient.project(hinv.view(), beta.view()).is_err());
    }
}
