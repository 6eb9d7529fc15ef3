//! Dense n×n reference implementations written straight from the estimator's
//! defining formulas, plus property checks shared by the proptest suite and the
//! acceptance runner.
#![allow(dead_code)]

use ndarray::{s, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use smoothmd::estimator::{fit_problem, EstimatorConfig, LambdaGrid, Problem, Restriction, ScaleChoice};
use smoothmd::inference::{
    dm_beta_test, dm_joint_test, dm_lambda_test, estimate_vcov, SigmaMode, TestOptions, VarianceMode,
};
use smoothmd::linalg::sym_eigen;
use smoothmd::simulation::{run_monte_carlo, EstimatorKind, McConfig, ModelId};
use smoothmd::{box_cox, box_cox_d1, box_cox_d2, box_cox_d3, Dataset, KernelOptions, WeightConfig, WeightOperator};

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

pub fn max_rel_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    let scale = a.iter().chain(b.iter()).fold(1.0f64, |m, v| m.max(v.abs()));
    a.iter().zip(b.iter()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

pub fn col(v: &Array1<f64>) -> Array2<f64> {
    v.clone().insert_axis(Axis(1))
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn invert(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    let mut inv = Array2::<f64>::eye(n);
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| m[[i, c]].abs().total_cmp(&m[[j, c]].abs())).unwrap();
        for k in 0..n {
            m.swap([c, k], [piv, k]);
            inv.swap([c, k], [piv, k]);
        }
        let d = m[[c, c]];
        assert!(d.abs() > 1e-300, "singular matrix in oracle");
        for k in 0..n {
            m[[c, k]] /= d;
            inv[[c, k]] /= d;
        }
        for r in 0..n {
            if r != c {
                let f = m[[r, c]];
                if f != 0.0 {
                    for k in 0..n {
                        m[[r, k]] -= f * m[[c, k]];
                        inv[[r, k]] -= f * inv[[c, k]];
                    }
                }
            }
        }
    }
    inv
}

fn bc(y: f64, lam: f64) -> f64 {
    if lam == 0.0 { y.ln() } else { (y.powf(lam) - 1.0) / lam }
}

fn bc_dlam(y: f64, lam: f64) -> f64 {
    let l = y.ln();
    if lam == 0.0 { l * l / 2.0 } else { y.powf(lam) * l / lam - (y.powf(lam) - 1.0) / (lam * lam) }
}

/// Everything the estimator builds, assembled as explicit matrices.
pub struct Dense {
    pub n: usize,
    pub y: Array1<f64>,
    pub x: Array2<f64>,
    pub kmat: Array2<f64>,
    pub fz: Array1<f64>,
    pub xhat: Array2<f64>,
    pub omega_x: Array2<f64>,
    pub omega_z: Array2<f64>,
    pub omega: Array2<f64>,
    /// `D_n` (or `Ω` without the intercept).
    pub dn: Array2<f64>,
    /// `D_{n,inf}` (or `I` without the intercept).
    pub dinf: Array2<f64>,
    pub phi: Array2<f64>,
    pub use_gamma: bool,
}

impl Dense {
    /// `bandwidth` is the one used on standardized Z; `d` lists the continuous-X then Z scales.
    pub fn new(data: &Dataset<f64>, bandwidth: f64, d: &[f64], use_gamma: bool) -> Self {
        let n = data.n();
        let z = data.z();
        let q = z.ncols();
        let mut zs = z.to_owned();
        for mut c in zs.axis_iter_mut(Axis(1)) {
            let m = c.sum() / n as f64;
            let sd = (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt();
            c.mapv_inplace(|v| (v - m) / sd);
        }
        let phi1 = |u: f64| (-u * u / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let kmat = Array2::from_shape_fn((n, n), |(i, j)| {
            (0..q).map(|k| phi1((zs[[i, k]] - zs[[j, k]]) / bandwidth)).product::<f64>() / bandwidth.powi(q as i32)
        });
        let fz = kmat.sum_axis(Axis(1)) / n as f64;
        let mut x = Array2::zeros((n, data.p()));
        for i in 0..n {
            for (k, v) in data.x_cont().row(i).iter().enumerate() {
                x[[i, k]] = *v;
            }
            for (k, v) in data.x_disc().row(i).iter().enumerate() {
                x[[i, data.x_cont().ncols() + k]] = *v as f64;
            }
        }
        let xhat = Array2::from_shape_fn(x.dim(), |(i, k)| {
            x[[i, k]] * fz[i] - (0..n).map(|j| x[[j, k]] * kmat[[i, j]]).sum::<f64>() / n as f64
        });
        let pc = data.x_cont().ncols();
        let xc = data.x_cont();
        let xd = data.x_disc();
        let omega_x = Array2::from_shape_fn((n, n), |(i, j)| {
            if xd.row(i) != xd.row(j) {
                return 0.0;
            }
            (-(0..pc).map(|k| d[k] * (xc[[i, k]] - xc[[j, k]]).powi(2)).sum::<f64>()).exp()
        });
        let omega_z = Array2::from_shape_fn((n, n), |(i, j)| {
            (-(0..q).map(|k| d[pc + k] * (z[[i, k]] - z[[j, k]]).powi(2)).sum::<f64>()).exp()
        });
        let omega = &omega_x * &omega_z;
        let o1 = omega.sum_axis(Axis(1));
        let s1 = o1.sum();
        let (dn, dinf) = if use_gamma {
            let outer = col(&o1).dot(&col(&o1).t());
            let dinf = Array2::from_shape_fn((n, n), |(i, j)| if i == j { 1.0 } else { 0.0 } - o1[i] / s1);
            (&omega - &(outer / s1), dinf)
        } else {
            (omega.clone(), Array2::eye(n))
        };
        let phi = Array2::from_shape_fn((n, n), |(i, j)| {
            (omega_x[[i, j]] - omega_x.row(i).sum() / n as f64) * omega_z[[i, j]]
        });
        Self { n, y: data.y().to_owned(), x, kmat, fz, xhat, omega_x, omega_z, omega, dn, dinf, phi, use_gamma }
    }

    pub fn yhat_with(&self, t: impl Fn(f64) -> f64) -> Array1<f64> {
        let tv = self.y.mapv(t);
        Array1::from_shape_fn(self.n, |i| {
            tv[i] * self.fz[i] - (0..self.n).map(|j| tv[j] * self.kmat[[i, j]]).sum::<f64>() / self.n as f64
        })
    }

    pub fn yhat(&self, lam: f64) -> Array1<f64> {
        self.yhat_with(|y| bc(y, lam))
    }

    pub fn dyhat(&self, lam: f64) -> Array1<f64> {
        self.yhat_with(|y| bc_dlam(y, lam))
    }

    pub fn h(&self) -> Array2<f64> {
        self.xhat.t().dot(&self.dn).dot(&self.xhat)
    }

    pub fn bn(&self) -> Array2<f64> {
        let dx = self.dn.dot(&self.xhat);
        &self.dn - &dx.dot(&invert(&self.h())).dot(&dx.t())
    }

    /// `(γ̂, β̂)` from the generalized least-squares formulas.
    pub fn gls(&self, lam: f64) -> (f64, Array1<f64>) {
        let yh = self.yhat(lam);
        let beta = invert(&self.h()).dot(&self.xhat.t().dot(&self.dn).dot(&yh));
        let gamma = if self.use_gamma {
            let r = &yh - &self.xhat.dot(&beta);
            self.omega.sum_axis(Axis(0)).dot(&r) / self.omega.sum()
        } else {
            0.0
        };
        (gamma, beta)
    }

    pub fn quad(&self, lam: f64) -> f64 {
        let yh = self.yhat(lam);
        yh.dot(&self.bn().dot(&yh))
    }

    pub fn objective(&self, lam: f64, s: f64) -> f64 {
        s.powf(-2.0 * lam) * self.quad(lam) / (self.n * self.n) as f64
    }

    /// Restricted minimum of `(Ŷ − X̂β)ᵀ D (Ŷ − X̂β)` subject to `Rβ = c`, by the KKT system.
    pub fn restricted_quad(&self, lam: f64, r: &Array2<f64>, c: &Array1<f64>) -> f64 {
        let yh = self.yhat(lam);
        let e = &yh - &self.xhat.dot(&self.restricted_beta(lam, r, c));
        e.dot(&self.dn.dot(&e))
    }

    pub fn restricted_beta(&self, lam: f64, r: &Array2<f64>, c: &Array1<f64>) -> Array1<f64> {
        let p = self.xhat.ncols();
        let m = r.nrows();
        let yh = self.yhat(lam);
        let h = self.h();
        let mut kkt = Array2::zeros((p + m, p + m));
        kkt.slice_mut(s![..p, ..p]).assign(&(&h * 2.0));
        kkt.slice_mut(s![..p, p..]).assign(&r.t());
        kkt.slice_mut(s![p.., ..p]).assign(r);
        let mut rhs = Array1::zeros(p + m);
        rhs.slice_mut(s![..p]).assign(&(self.xhat.t().dot(&self.dn).dot(&yh) * 2.0));
        rhs.slice_mut(s![p..]).assign(c);
        invert(&kkt).dot(&rhs).slice(s![..p]).to_owned()
    }

    pub fn v_hat(&self, lam: f64) -> Array2<f64> {
        let tm = self.tm(lam);
        tm.t().dot(&self.dn).dot(&tm) / (self.n * self.n) as f64
    }

    fn tm(&self, lam: f64) -> Array2<f64> {
        let p = self.xhat.ncols();
        let mut tm = Array2::zeros((self.n, p + 1));
        tm.column_mut(0).assign(&self.dyhat(lam));
        tm.slice_mut(s![.., 1..]).assign(&self.xhat.mapv(|v| -v));
        tm
    }

    pub fn sigma(&self, lam: f64, beta: &Array1<f64>, loo: bool) -> Array1<f64> {
        let e2 = (&self.yhat(lam) - &self.xhat.dot(beta)).mapv(|e| e * e);
        if !loo {
            return e2;
        }
        Array1::from_shape_fn(self.n, |i| {
            let (mut num, mut den) = (0.0, 0.0);
            for j in (0..self.n).filter(|&j| j != i) {
                num += self.omega[[i, j]] * e2[j];
                den += self.omega[[i, j]];
            }
            if den > 1e-12 { num / den } else { e2[i] }
        })
    }

    pub fn delta_hat(&self, lam: f64, beta: &Array1<f64>, star: bool, loo: bool) -> Array2<f64> {
        let tm = self.tm(lam);
        let w = if star { &self.omega } else { &self.phi };
        let sig = Array2::from_diag(&self.sigma(lam, beta, loo));
        let mid = self.dinf.dot(w).dot(&sig).dot(&w.t()).dot(&self.dinf.t());
        tm.t().dot(&mid).dot(&tm) / (self.n as f64).powi(3)
    }
}

/// Toy sample with one continuous and one binary covariate, balanced groups.
pub fn toy(n: usize, q: usize, seed: u64) -> Dataset<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = Array2::from_shape_fn((n, q), |_| rng.gen_range(-1.0..1.0));
    let xc = Array2::from_shape_fn((n, 1), |(i, _)| 0.5 * z[[i, 0]] + rng.gen_range(-1.0..1.0));
    let xd = Array2::from_shape_fn((n, 1), |(i, _)| (i % 2) as i64);
    let y = Array1::from_shape_fn(n, |i| {
        let u = 1.0 + xc[[i, 0]] * 0.7 - 0.4 * xd[[i, 0]] as f64 + z.row(i).sum().sin() + 0.3 * rng.gen_range(-1.0..1.0);
        u.exp()
    });
    Dataset::new(y, xc, xd, z).unwrap()
}

pub fn options(blocked: bool) -> (KernelOptions<f64>, WeightConfig<f64>) {
    let mut k = KernelOptions::default();
    let mut w = WeightConfig::default();
    if blocked {
        k.dense_threshold = 0;
        k.block_size = 3;
        w.dense_threshold = 0;
        w.block_size = 4;
    }
    (k, w)
}

pub fn estimator_config(grid: LambdaGrid, scale: ScaleChoice, use_gamma: bool, blocked: bool) -> EstimatorConfig<f64> {
    let (kernel, weights) = options(blocked);
    EstimatorConfig { grid, scale, use_gamma, kernel, weights, ..Default::default() }
}

pub type Check = std::result::Result<(), String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond { Ok(()) } else { Err(msg()) }
}

fn smallest_eigen(m: &Array2<f64>) -> (f64, f64) {
    let (vals, _) = sym_eigen(m.view());
    let top = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    (vals[0], top)
}

/// Ω, D and B̂ are positive semi-definite; D and B̂ annihilate 1 and B̂ annihilates X̂.
pub fn check_psd_annihilation(data: &Dataset<f64>, use_gamma: bool) -> Check {
    let (kernel, weights) = options(false);
    let problem = Problem::new(data.clone(), &kernel, &weights, use_gamma).map_err(|e| e.to_string())?;
    let n = data.n();
    let w = problem.weights();
    let eye = Array2::<f64>::eye(n);
    let omega = w.apply(eye.view());
    let dn = w.apply_centered(eye.view(), true).map_err(|e| e.to_string())?;
    let xhat = problem.plan().xhat().to_owned();
    let h = xhat.t().dot(&dn.dot(&xhat));
    let bn = &dn - &dn.dot(&xhat).dot(&invert(&h)).dot(&dn.dot(&xhat).t());
    for (name, m) in [("Omega", &omega), ("D", &dn), ("B", &bn)] {
        let (lo, top) = smallest_eigen(m);
        ensure(lo >= -1e-9 * top.max(1.0), || format!("{name} has eigenvalue {lo} (top {top})"))?;
    }
    let one = Array1::<f64>::ones(n);
    let scale = omega.sum().max(1.0);
    let d1 = dn.dot(&one).iter().fold(0.0f64, |a, v| a.max(v.abs()));
    ensure(d1 <= 1e-10 * scale, || format!("|D1| = {d1}"))?;
    let b1 = bn.dot(&one).iter().fold(0.0f64, |a, v| a.max(v.abs()));
    ensure(b1 <= 1e-9 * scale, || format!("|B1| = {b1}"))?;
    let bx = bn.dot(&xhat).iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let xs = xhat.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    ensure(bx <= 1e-9 * scale * xs, || format!("|B X| = {bx}"))?;
    // The matrix-free quadratic form agrees with the explicit B̂.
    let u = Array1::from_shape_fn(n, |i| (i as f64 * 0.37).cos());
    let v = Array1::from_shape_fn(n, |i| (i as f64 * 0.11).sin() + 0.2);
    let qf = w.quad_form_bn(xhat.view(), u.view(), v.view()).map_err(|e| e.to_string())?;
    let dense = u.dot(&bn.dot(&v));
    ensure(close(qf, dense, 1e-8), || format!("quad form {qf} vs dense {dense}"))
}

/// Every derivative order matches a Richardson-extrapolated central difference of the previous one.
pub fn check_transform_chain(y: f64, lam: f64) -> Check {
    let fs: [fn(f64, f64) -> smoothmd::Result<f64>; 4] = [box_cox, box_cox_d1, box_cox_d2, box_cox_d3];
    for k in 0..3 {
        let f = |l: f64| fs[k](y, l).unwrap();
        let cd = |h: f64| (f(lam + h) - f(lam - h)) / (2.0 * h);
        let h = 1e-3;
        let rich = (16.0 * cd(h / 2.0) - cd(h)) / 15.0;
        let exact = fs[k + 1](y, lam).map_err(|e| e.to_string())?;
        let scale = exact.abs().max(f(lam).abs()).max(1.0);
        ensure((rich - exact).abs() <= 1e-6 * scale, || {
            format!("order {} at y={y}, λ={lam}: fd {rich} vs {exact}", k + 1)
        })?;
    }
    Ok(())
}

/// `β̂(λ), γ̂(λ)` do not depend on the scale in the objective, and dividing `Y` by `s`
/// multiplies them by `s^{−λ}`.
pub fn check_scale_invariance(data: &Dataset<f64>, s: f64, use_gamma: bool) -> Check {
    let grid = LambdaGrid::new(-1.0, 1.0, 0.05).unwrap();
    let cfg = |scale| estimator_config(grid, scale, use_gamma, false);
    let problem = Problem::new(data.clone(), &cfg(ScaleChoice::None).kernel, &cfg(ScaleChoice::None).weights, use_gamma)
        .map_err(|e| e.to_string())?;
    let a = fit_problem(&problem, &cfg(ScaleChoice::None)).map_err(|e| e.to_string())?;
    let b = fit_problem(&problem, &cfg(ScaleChoice::Fixed(s))).map_err(|e| e.to_string())?;
    let scaled = Problem::new(data.rescaled(s).map_err(|e| e.to_string())?, &cfg(ScaleChoice::None).kernel, &cfg(ScaleChoice::None).weights, use_gamma)
        .map_err(|e| e.to_string())?;
    let lams = a.path.lambdas().to_vec();
    let c = scaled.profile(&lams, 16);
    for (k, &lam) in lams.iter().enumerate() {
        let (ba, bb) = (a.path.beta(k), b.path.beta(k));
        let (ga, gb) = (a.path.gamma(k), b.path.gamma(k));
        let factor = s.powf(lam);
        let bc = c.beta(k).mapv(|v| v * factor);
        let gc = c.gamma(k) * factor;
        for j in 0..ba.len() {
            ensure(close(ba[j], bb[j], 1e-10), || format!("β depends on s at λ={}", lam))?;
            ensure(close(ba[j], bc[j], 1e-10), || format!("rescaled β mismatch at λ={}: {} vs {}", lam, ba[j], bc[j]))?;
        }
        ensure(close(ga, gb, 1e-10), || format!("γ depends on s at λ={}", lam))?;
        let gscale = ba.iter().fold(ga.abs(), |m, v| m.max(v.abs()));
        ensure((ga - gc).abs() <= 1e-10 * gscale.max(1.0), || format!("rescaled γ mismatch at λ={}: {ga} vs {gc}", lam))?;
    }
    Ok(())
}

/// Distance-metric statistics are non-negative (up to rounding) when the objective is unscaled.
pub fn check_dm_nonnegative(data: &Dataset<f64>, lambda_r: f64, c: f64, seed: u64) -> Check {
    let grid = LambdaGrid::new(-1.0, 1.0, 0.01).unwrap();
    let cfg = estimator_config(grid, ScaleChoice::None, true, false);
    let problem = Problem::new(data.clone(), &cfg.kernel, &cfg.weights, true).map_err(|e| e.to_string())?;
    let fit = fit_problem(&problem, &cfg).map_err(|e| e.to_string())?;
    let var = estimate_vcov(&problem, &fit, VarianceMode::SmoothMd, SigmaMode::EikerWhite).map_err(|e| e.to_string())?;
    let opts = TestOptions { draws: 100_000, seed, ..Default::default() };
    let scale = (fit.path.quad(fit.argmin) / data.n() as f64).abs().max(1.0);
    let mut r = Array2::zeros((1, data.p()));
    r[[0, 0]] = 1.0;
    let restriction = Restriction::new(r, Array1::from_elem(1, c)).map_err(|e| e.to_string())?;
    let stats = [
        ("lambda", dm_lambda_test(&problem, &fit, &var, lambda_r, &opts).map_err(|e| e.to_string())?.statistic),
        ("beta", dm_beta_test(&problem, &fit, &var, &restriction, &opts).map_err(|e| e.to_string())?.statistic),
        ("joint", dm_joint_test(&problem, &fit, &var, &restriction, lambda_r, &opts).map_err(|e| e.to_string())?.statistic),
    ];
    for (name, v) in stats {
        ensure(v >= -1e-10 * scale, || format!("DM_{name} = {v}"))?;
    }
    Ok(())
}

/// Identical reports from identical seeds, regardless of the thread count.
pub fn check_mc_determinism(seed: u64) -> Check {
    let mut cfg = McConfig::new(ModelId::Model2, 60, 4, seed);
    cfg.grid = Some(LambdaGrid::new(0.0, 1.0, 0.01).unwrap());
    cfg.estimators = vec![EstimatorKind::SmoothMd, EstimatorKind::Nl2sls];
    cfg.variance_modes = vec![VarianceMode::SmoothMd, VarianceMode::Star];
    cfg.dm_lambda = true;
    cfg.dm_beta = true;
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_monte_carlo(&cfg).map(|r| r.0))
    };
    let a = run(1).map_err(|e| e.to_string())?;
    let b = run(1).map_err(|e| e.to_string())?;
    let c = run(3).map_err(|e| e.to_string())?;
    ensure(a == b, || "repeated run differs".into())?;
    ensure(a == c, || "thread count changes the report".into())?;
    let mut other = cfg.clone();
    other.seed = seed.wrapping_add(1);
    let d = run_monte_carlo(&other).map_err(|e| e.to_string())?.0;
    ensure(a.estimates != d.estimates, || "different seeds gave identical estimates".into())
}

/// Weight operator with the same configuration the estimator would use.
pub fn weight_operator(data: &Dataset<f64>) -> WeightOperator<f64> {
    WeightOperator::build(data, &WeightConfig::default()).unwrap()
}

/// Every matrix-free output matches the explicit n×n assembly within 1e-9 (relative).
pub fn check_dense_equivalence(data: &Dataset<f64>, use_gamma: bool, blocked: bool) -> Check {
    const TOL: f64 = 1e-9;
    let (k, w) = options(blocked);
    let problem = Problem::new(data.clone(), &k, &w, use_gamma).map_err(|e| e.to_string())?;
    let dense = Dense::new(data, problem.plan().bandwidth(), &problem.weights().scales(), use_gamma);
    let n = data.n() as f64;
    let mut worst = 0.0f64;
    let mut track = |name: &str, v: f64| -> Check {
        worst = worst.max(v);
        ensure(v <= TOL, || format!("{name}: relative deviation {v:e}"))
    };
    track("f_z", max_rel_diff(&col(&problem.plan().fz_hat().to_owned()), &col(&dense.fz)))?;
    track("X hat", max_rel_diff(&problem.plan().xhat().to_owned(), &dense.xhat))?;
    let probe = Array2::from_shape_fn((data.n(), 2), |(i, j)| ((i * 5 + j) as f64).cos());
    track("Omega", max_rel_diff(&problem.weights().apply(probe.view()), &dense.omega.dot(&probe)))?;
    track("Phi", max_rel_diff(&problem.weights().apply_phi_t(probe.view()), &dense.phi.t().dot(&probe)))?;
    let dv = problem.weights().apply_centered(probe.view(), use_gamma).map_err(|e| e.to_string())?;
    track("D", max_rel_diff(&dv, &dense.dn.dot(&probe)))?;
    for lam in [-0.6, 0.0, 0.45] {
        let (g, b) = problem.profile_gls(lam);
        let (go, bo) = dense.gls(lam);
        track("gamma", (g - go).abs() / go.abs().max(1.0))?;
        track("beta", max_rel_diff(&col(&b), &col(&bo)))?;
        let (o, oo) = (problem.profile_objective(lam, 1.3), dense.objective(lam, 1.3));
        track("objective", (o - oo).abs() / oo.abs().max(1.0))?;
    }
    let grid = LambdaGrid::new(-1.0, 1.0, 0.05).unwrap();
    let fit = fit_problem(&problem, &estimator_config(grid, ScaleChoice::None, use_gamma, blocked)).map_err(|e| e.to_string())?;
    for (mode, star) in [(VarianceMode::SmoothMd, false), (VarianceMode::Star, true)] {
        let var = estimate_vcov(&problem, &fit, mode, SigmaMode::EikerWhite).map_err(|e| e.to_string())?;
        track("V hat", max_rel_diff(&var.v_hat, &dense.v_hat(fit.lambda_hat)))?;
        track("Delta hat", max_rel_diff(&var.delta_hat, &dense.delta_hat(fit.lambda_hat, &fit.beta_hat, star, false)))?;
    }
    let var = estimate_vcov(&problem, &fit, VarianceMode::SmoothMd, SigmaMode::EikerWhite).map_err(|e| e.to_string())?;
    let opts = TestOptions { draws: 100_000, seed: 1, ..Default::default() };
    let base = dense.quad(fit.lambda_hat);
    let t = dm_lambda_test(&problem, &fit, &var, 0.25, &opts).map_err(|e| e.to_string())?;
    let oracle = (dense.quad(0.25) - base) / n;
    track("DM lambda", (t.statistic - oracle).abs() / oracle.abs().max(1.0))?;
    let r = Array2::from_shape_vec((1, data.p()), (0..data.p()).map(|j| if j == 0 { 1.0 } else { 0.0 }).collect()).unwrap();
    let c = Array1::from_elem(1, 0.5);
    let restriction = Restriction::new(r.clone(), c.clone()).map_err(|e| e.to_string())?;
    let tj = dm_joint_test(&problem, &fit, &var, &restriction, 0.25, &opts).map_err(|e| e.to_string())?;
    let oracle = (dense.restricted_quad(0.25, &r, &c) - base) / n;
    track("DM joint", (tj.statistic - oracle).abs() / oracle.abs().max(1.0))?;
    Ok(())
}
