//! Nonlinear two-stage least squares for the parametric Box-Cox model with a
//! known `m(·)`, used as the simulation benchmark.
//!
//! Given λ the model is linear in `θ = (α, β, δ)` with regressors
//! `(1, X, m(Z))`, so the 2SLS criterion is profiled exactly and grid searched
//! over λ like the SmoothMD estimator.

use std::fmt;
use std::sync::Arc;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};

use crate::error::{Error, Result};
use crate::estimator::{argmin, resolve_scale, scale_factor, LambdaGrid, ScaleChoice};
use crate::kernel::Dataset;
use crate::linalg::{symmetrize, SpdSolver};
use crate::scalar::Scalar;

pub type InstrumentBuilder<T> = Arc<dyn Fn(&Dataset<T>, ArrayView1<T>) -> Array2<T> + Send + Sync>;

#[derive(Clone)]
pub struct Nl2slsConfig<T> {
    pub grid: LambdaGrid,
    pub scale: ScaleChoice,
    pub instruments: InstrumentBuilder<T>,
    pub chunk: usize,
}

impl<T> fmt::Debug for Nl2slsConfig<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Nl2slsConfig").field("grid", &self.grid).field("scale", &self.scale).finish_non_exhaustive()
    }
}

impl<T: Scalar> Default for Nl2slsConfig<T> {
    fn default() -> Self {
        Self {
            grid: LambdaGrid { lo: -1.0, hi: 2.0, step: 0.001 },
            scale: ScaleChoice::GeometricMean,
            instruments: Arc::new(default_instruments),
            chunk: 256,
        }
    }
}

/// `(1, X_c, X_d, X_c², m, m²)`; squares of 0/1 dummies would duplicate them.
pub fn default_instruments<T: Scalar>(data: &Dataset<T>, m: ArrayView1<T>) -> Array2<T> {
    let n = data.n();
    let xc = data.x_cont();
    let pc = xc.ncols();
    let pd = data.x_disc().ncols();
    let mut v = Array2::zeros((n, 3 + 2 * pc + pd));
    v.column_mut(0).fill(T::one());
    v.slice_mut(s![.., 1..1 + pc]).assign(&xc);
    Zip::from(v.slice_mut(s![.., 1 + pc..1 + pc + pd]))
        .and(data.x_disc())
        .for_each(|o, &c| *o = T::lit(c as f64));
    v.slice_mut(s![.., 1 + pc + pd..1 + 2 * pc + pd]).assign(&xc.mapv(|x| x * x));
    v.column_mut(1 + 2 * pc + pd).assign(&m);
    v.column_mut(2 + 2 * pc + pd).assign(&m.mapv(|x| x * x));
    v
}

#[derive(Debug, Clone)]
pub struct Nl2slsResult<T> {
    pub lambda_hat: T,
    pub intercept: T,
    pub beta_hat: Array1<T>,
    /// Coefficient on `m(Z)`.
    pub delta_hat: T,
    /// Asymptotic covariance of `√n (λ, α, β, δ)`.
    pub vcov: Array2<T>,
    /// Standard errors of `(λ, α, β, δ)`.
    pub se: Array1<T>,
    pub objective_trace: Vec<(T, T)>,
    pub s_used: T,
    pub boundary_hit: bool,
}

/// Orthonormal basis of the column space by twice-iterated modified Gram-Schmidt.
pub(crate) fn orthonormal_basis<T: Scalar>(v: ArrayView2<T>, what: &str) -> Result<Array2<T>> {
    let mut q = v.to_owned();
    let k = q.ncols();
    for j in 0..k {
        let original = q.column(j).dot(&q.column(j)).sqrt();
        for _ in 0..2 {
            for i in 0..j {
                let proj = q.column(i).dot(&q.column(j));
                let qi = q.column(i).to_owned();
                q.column_mut(j).scaled_add(-proj, &qi);
            }
        }
        let norm = q.column(j).dot(&q.column(j)).sqrt();
        if !(norm > T::lit(1e-10) * original) {
            return Err(Error::Singular { what: what.to_string(), condition: f64::INFINITY });
        }
        q.column_mut(j).mapv_inplace(|x| x / norm);
    }
    Ok(q)
}

/// `(1, X, m)`.
fn regressors<T: Scalar>(data: &Dataset<T>, m: ArrayView1<T>) -> Array2<T> {
    let p = data.p();
    let mut r = Array2::zeros((data.n(), p + 2));
    r.column_mut(0).fill(T::one());
    r.slice_mut(s![.., 1..=p]).assign(&data.x());
    r.column_mut(p + 1).assign(&m);
    r
}

pub fn nl2sls_fit<T: Scalar>(data: &Dataset<T>, true_m: ArrayView1<T>, config: &Nl2slsConfig<T>) -> Result<Nl2slsResult<T>> {
    let n = data.n();
    if true_m.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: true_m.len() });
    }
    let p = data.p();
    let v = (config.instruments)(data, true_m);
    if v.nrows() != n {
        return Err(Error::DimensionMismatch { expected: n, found: v.nrows() });
    }
    if v.ncols() < p + 2 {
        return Err(Error::InvalidConfig(format!("{} instruments cannot identify {} coefficients", v.ncols(), p + 2)));
    }
    let q = orthonormal_basis(v.view(), "rank-deficient instrument matrix")?;
    let xr = regressors(data, true_m);
    let rt = q.t().dot(&xr);
    let inner = SpdSolver::new(rt.t().dot(&rt).view(), "projected regressors")?;

    let grid: Vec<T> = config.grid.points()?;
    let s = resolve_scale(config.scale, data.y())?;
    let mut trace = Vec::with_capacity(grid.len());
    for lams in grid.chunks(config.chunk.max(1)) {
        let tt = q.t().dot(&data.transformed_matrix(lams, 0));
        for (col, &lam) in tt.axis_iter(Axis(1)).zip(lams) {
            let theta = inner.solve_vec(rt.t().dot(&col).view());
            let resid = &col - &rt.dot(&theta);
            trace.push((lam, scale_factor(s, lam) * resid.dot(&resid)));
        }
    }
    let k = argmin(trace.iter().map(|t| t.1))
        .ok_or_else(|| Error::Singular { what: "NL2SLS criterion is nowhere finite".into(), condition: f64::INFINITY })?;
    let lambda_hat = trace[k].0;
    let t = data.transformed(lambda_hat, 0);
    let theta = inner.solve_vec(rt.t().dot(&q.t().dot(&t)).view());

    // GMM sandwich with moments V_i g_i(θ), g_i = T(Y_i, λ) − (1, X_i, m_i)θ.
    let nt = T::from_count(n);
    let g = &t - &xr.dot(&theta);
    let mut jac = Array2::zeros((n, p + 3));
    jac.column_mut(0).assign(&data.transformed(lambda_hat, 1));
    jac.slice_mut(s![.., 1..]).assign(&xr.mapv(|x| -x));
    let gj = v.t().dot(&jac) / nt;
    let vv = v.t().dot(&v) / nt;
    let w = SpdSolver::new(vv.view(), "rank-deficient instrument matrix")?;
    let wg = w.solve_mat(gj.view());
    let bread = SpdSolver::new(gj.t().dot(&wg).view(), "NL2SLS Jacobian")?;
    let mut vg = v.clone();
    Zip::from(vg.rows_mut()).and(&g).for_each(|mut r, &e| r *= e);
    let meat_s = vg.t().dot(&vg) / nt;
    let meat = wg.t().dot(&meat_s).dot(&wg);
    let binv = bread.inverse();
    let mut vcov = binv.dot(&meat).dot(&binv);
    symmetrize(&mut vcov);
    let se = vcov.diag().mapv(|x| (x.max(T::zero()) / nt).sqrt());

    Ok(Nl2slsResult {
        lambda_hat,
        intercept: theta[0],
        beta_hat: theta.slice(s![1..=p]).to_owned(),
        delta_hat: theta[p + 1],
        vcov,
        se,
        objective_trace: trace,
        s_used: s,
        boundary_hit: k == 0 || k + 1 == grid.len(),
    })
}
