//! Product-kernel Nadaraya-Watson smoothing of the nuisance functions.
//!
//! All smooths are density-weighted numerators `(1/n) Σ_j v_j K_h(Z_i − Z_j)`;
//! the residual-from-smooth vectors `v_i f̂(Z_i) − (1/n) Σ_j v_j K_ij` never
//! divide by the density estimate.

use std::fmt::Debug;
use std::ops::Range;
use std::sync::Arc;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::transform;

/// Observed sample.
///
/// Discrete covariates are integer codes; they enter the partialled design
/// numerically and the weight matrix through exact-match indicators.
#[derive(Debug, Clone)]
pub struct Dataset<T> {
    y: Array1<T>,
    log_y: Array1<T>,
    x_cont: Array2<T>,
    x_disc: Array2<i64>,
    z: Array2<T>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(y: Array1<T>, x_cont: Array2<T>, x_disc: Array2<i64>, z: Array2<T>) -> Result<Self> {
        let n = y.len();
        for (name, rows) in [("x_cont", x_cont.nrows()), ("x_disc", x_disc.nrows()), ("z", z.nrows())] {
            if rows != n {
                return Err(Error::InvalidData(format!("{name} has {rows} rows, response has {n}")));
            }
        }
        let p = x_cont.ncols() + x_disc.ncols();
        if p == 0 {
            return Err(Error::InvalidData("at least one linear covariate is required".into()));
        }
        if z.ncols() == 0 {
            return Err(Error::InvalidData("at least one smoothing covariate is required".into()));
        }
        if n < p + 2 {
            return Err(Error::InvalidData(format!("need at least {} observations, got {n}", p + 2)));
        }
        if x_cont.iter().chain(z.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("covariates contain non-finite values".into()));
        }
        let log_y = y
            .iter()
            .map(|&v| {
                if v > T::zero() && v.is_finite() {
                    Ok(v.ln())
                } else {
                    Err(Error::InvalidData(format!("response must be strictly positive, got {v}")))
                }
            })
            .collect::<Result<Array1<T>>>()?;
        Ok(Self { y, log_y, x_cont, x_disc, z })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Number of linear covariates, continuous and discrete.
    pub fn p(&self) -> usize {
        self.x_cont.ncols() + self.x_disc.ncols()
    }

    pub fn q(&self) -> usize {
        self.z.ncols()
    }

    pub fn y(&self) -> ArrayView1<'_, T> {
        self.y.view()
    }

    pub fn log_y(&self) -> ArrayView1<'_, T> {
        self.log_y.view()
    }

    pub fn x_cont(&self) -> ArrayView2<'_, T> {
        self.x_cont.view()
    }

    pub fn x_disc(&self) -> ArrayView2<'_, i64> {
        self.x_disc.view()
    }

    pub fn z(&self) -> ArrayView2<'_, T> {
        self.z.view()
    }

    /// `(X_c, X_d)` as one numeric `n×p` matrix.
    pub fn x(&self) -> Array2<T> {
        let n = self.n();
        let pc = self.x_cont.ncols();
        let mut x = Array2::zeros((n, self.p()));
        x.slice_mut(s![.., ..pc]).assign(&self.x_cont);
        Zip::from(x.slice_mut(s![.., pc..]))
            .and(&self.x_disc)
            .for_each(|o, &c| *o = T::lit(c as f64));
        x
    }

    /// Same covariates with the response divided by `c`.
    pub fn rescaled(&self, c: T) -> Result<Self> {
        Self::new(self.y.mapv(|v| v / c), self.x_cont.clone(), self.x_disc.clone(), self.z.clone())
    }

    /// Transform derivative of the given order at λ for every observation.
    pub fn transformed(&self, lambda: T, order: u8) -> Array1<T> {
        self.log_y.mapv(|l| transform::box_cox_log(l, lambda, order))
    }

    /// `n×len` matrix whose columns are the transformed responses at each λ.
    pub fn transformed_matrix(&self, lambdas: &[T], order: u8) -> Array2<T> {
        let mut out = Array2::zeros((self.n(), lambdas.len()));
        Zip::from(out.rows_mut()).and(&self.log_y).for_each(|mut row, &l| {
            for (o, &lam) in row.iter_mut().zip(lambdas) {
                *o = transform::box_cox_log(l, lam, order);
            }
        });
        out
    }
}

/// Symmetric univariate kernel with unit integral and finite second moment.
pub trait UnivariateKernel<T>: Send + Sync + Debug {
    fn eval(&self, u: T) -> T;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GaussianKernel;

impl<T: Scalar> UnivariateKernel<T> for GaussianKernel {
    fn eval(&self, u: T) -> T {
        (-u * u * T::lit(0.5)).exp() * T::lit(std::f64::consts::FRAC_1_SQRT_2 * 0.5 * std::f64::consts::FRAC_2_SQRT_PI)
    }
}

/// How the bandwidth is chosen on the standardized smoothing covariates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// `h = constant · n^{−exponent}`.
    Rule { exponent: f64, constant: f64 },
    Fixed(f64),
}

impl Default for Bandwidth {
    fn default() -> Self {
        Bandwidth::Rule { exponent: 1.0 / 3.5, constant: 1.0 }
    }
}

impl Bandwidth {
    pub fn resolve(&self, n: usize) -> Result<f64> {
        let h = match *self {
            Bandwidth::Rule { exponent, constant } => constant * (n as f64).powf(-exponent),
            Bandwidth::Fixed(h) => h,
        };
        if h > 0.0 && h.is_finite() {
            Ok(h)
        } else {
            Err(Error::InvalidConfig(format!("bandwidth must be positive, got {h}")))
        }
    }
}

#[derive(Debug, Clone)]
pub struct KernelOptions<T> {
    pub bandwidth: Bandwidth,
    pub kernel: Arc<dyn UnivariateKernel<T>>,
    /// Sample sizes above this regenerate kernel rows on demand.
    pub dense_threshold: usize,
    pub block_size: usize,
}

impl<T: Scalar> Default for KernelOptions<T> {
    fn default() -> Self {
        Self {
            bandwidth: Bandwidth::default(),
            kernel: Arc::new(GaussianKernel),
            dense_threshold: 4000,
            block_size: 512,
        }
    }
}

/// Mean and population standard deviation of each column.
pub(crate) fn column_moments<T: Scalar>(m: ArrayView2<T>) -> Vec<(T, T)> {
    let n = T::from_count(m.nrows().max(1));
    m.axis_iter(Axis(1))
        .map(|col| {
            let mean = col.sum() / n;
            let var = col.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            (mean, var.sqrt())
        })
        .collect()
}

/// Kernel weights and cached nuisance smooths for one dataset.
#[derive(Debug, Clone)]
pub struct KernelPlan<T> {
    h: T,
    norm: T,
    z_center: Vec<(T, T)>,
    z_std: Array2<T>,
    kernel: Arc<dyn UnivariateKernel<T>>,
    dense: Option<Array2<T>>,
    block_size: usize,
    fz: Array1<T>,
    xhat: Array2<T>,
}

impl<T: Scalar> KernelPlan<T> {
    pub fn build(data: &Dataset<T>, options: &KernelOptions<T>) -> Result<Self> {
        let n = data.n();
        let q = data.q();
        let h = T::lit(options.bandwidth.resolve(n)?);
        let z_center = column_moments(data.z());
        for (column, &(_, sd)) in z_center.iter().enumerate() {
            if !(sd > T::zero()) {
                return Err(Error::DegenerateCovariate { column });
            }
        }
        let mut z_std = data.z().to_owned();
        for (mut col, &(mean, sd)) in z_std.axis_iter_mut(Axis(1)).zip(&z_center) {
            col.mapv_inplace(|v| (v - mean) / sd);
        }
        if options.block_size == 0 {
            return Err(Error::InvalidConfig("block size must be positive".into()));
        }
        let mut plan = Self {
            h,
            norm: h.powi(q as i32).recip(),
            z_center,
            z_std,
            kernel: options.kernel.clone(),
            dense: None,
            block_size: options.block_size,
            fz: Array1::zeros(n),
            xhat: Array2::zeros((0, 0)),
        };
        if n <= options.dense_threshold {
            plan.dense = Some(plan.kernel_rows(0..n));
        }
        plan.fz = plan.smooth(Array2::from_elem((n, 1), T::one()).view()).column(0).to_owned();
        plan.xhat = plan.residual_smooth(data.x().view());
        Ok(plan)
    }

    pub fn n(&self) -> usize {
        self.z_std.nrows()
    }

    pub fn bandwidth(&self) -> T {
        self.h
    }

    pub fn z_standardized(&self) -> ArrayView2<'_, T> {
        self.z_std.view()
    }

    pub fn is_blocked(&self) -> bool {
        self.dense.is_none()
    }

    /// Materialized kernel matrix, if the plan is dense.
    pub fn kernel_matrix(&self) -> Option<ArrayView2<'_, T>> {
        self.dense.as_ref().map(|k| k.view())
    }

    /// `f̂_z(Z_i)`.
    pub fn fz_hat(&self) -> ArrayView1<'_, T> {
        self.fz.view()
    }

    /// `X̂`, the density-weighted deviations of `X` from its smooth.
    pub fn xhat(&self) -> ArrayView2<'_, T> {
        self.xhat.view()
    }

    #[inline]
    fn weight(&self, a: ArrayView1<T>, b: ArrayView1<T>) -> T {
        let mut w = self.norm;
        for (&u, &v) in a.iter().zip(b.iter()) {
            w *= self.kernel.eval((u - v).abs() / self.h);
        }
        w
    }

    /// Rows `rows` of the kernel matrix `K_{h,ij}`.
    pub fn kernel_rows(&self, rows: Range<usize>) -> Array2<T> {
        if let Some(k) = &self.dense {
            return k.slice(s![rows, ..]).to_owned();
        }
        let n = self.n();
        let mut out = Array2::zeros((rows.len(), n));
        Zip::indexed(out.rows_mut()).par_for_each(|k, mut row| {
            let zi = self.z_std.row(rows.start + k);
            for (j, o) in row.iter_mut().enumerate() {
                *o = self.weight(zi, self.z_std.row(j));
            }
        });
        out
    }

    /// `(1/n) K V` for an `n×c` matrix `V`.
    pub fn smooth(&self, v: ArrayView2<T>) -> Array2<T> {
        let inv_n = T::from_count(self.n()).recip();
        match &self.dense {
            Some(k) => k.dot(&v) * inv_n,
            None => {
                let n = self.n();
                let mut out = Array2::zeros((n, v.ncols()));
                let starts: Vec<usize> = (0..n).step_by(self.block_size).collect();
                let blocks: Vec<(usize, Array2<T>)> = starts
                    .into_par_iter()
                    .map(|start| {
                        let end = (start + self.block_size).min(n);
                        (start, self.kernel_rows(start..end).dot(&v))
                    })
                    .collect();
                for (start, b) in blocks {
                    out.slice_mut(s![start..start + b.nrows(), ..]).assign(&(b * inv_n));
                }
                out
            }
        }
    }

    /// `V_i f̂_z(Z_i) − (1/n) Σ_j V_j K_ij` column by column.
    pub fn residual_smooth(&self, v: ArrayView2<T>) -> Array2<T> {
        let mut out = self.smooth(v);
        Zip::from(out.rows_mut()).and(v.rows()).and(&self.fz).for_each(|mut o, vi, &f| {
            Zip::from(&mut o).and(&vi).for_each(|o, &x| *o = x * f - *o);
        });
        out
    }

    /// `(1/n) Σ_j ∂ᵒT(Y_j, λ) K_ij`.
    pub fn smooth_transform(&self, data: &Dataset<T>, lambda: T, order: u8) -> Array1<T> {
        let t = data.transformed(lambda, order).insert_axis(Axis(1));
        self.smooth(t.view()).remove_axis(Axis(1))
    }

    /// `Ŷ(λ)` or its λ-derivative of the given order.
    pub fn yhat_vector(&self, data: &Dataset<T>, lambda: T, order: u8) -> Array1<T> {
        let t = data.transformed(lambda, order).insert_axis(Axis(1));
        self.residual_smooth(t.view()).remove_axis(Axis(1))
    }

    /// `Ŷ` for several λ at once, one column per λ.
    pub fn yhat_matrix(&self, data: &Dataset<T>, lambdas: &[T], order: u8) -> Array2<T> {
        self.residual_smooth(data.transformed_matrix(lambdas, order).view())
    }

    /// Nadaraya-Watson regression of `residuals` on the smoothing covariates,
    /// evaluated at `eval_points` given in the original units of `Z`.
    ///
    /// `bandwidth` applies on the standardized scale. Points where the kernel
    /// mass falls below `1e-12` are outside the data support and yield `None`.
    pub fn nw_regress(
        &self,
        residuals: ArrayView1<T>,
        eval_points: ArrayView2<T>,
        bandwidth: T,
    ) -> Result<Vec<Option<T>>> {
        if residuals.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), found: residuals.len() });
        }
        if eval_points.ncols() != self.z_std.ncols() {
            return Err(Error::DimensionMismatch { expected: self.z_std.ncols(), found: eval_points.ncols() });
        }
        if !(bandwidth > T::zero()) {
            return Err(Error::InvalidConfig(format!("bandwidth must be positive, got {bandwidth}")));
        }
        let floor = T::lit(1e-12);
        let out = (0..eval_points.nrows())
            .into_par_iter()
            .map(|r| {
                let pt = eval_points.row(r);
                let zp: Array1<T> = pt
                    .iter()
                    .zip(&self.z_center)
                    .map(|(&v, &(mean, sd))| (v - mean) / sd)
                    .collect();
                let (mut num, mut den) = (T::zero(), T::zero());
                for (zj, &r) in self.z_std.axis_iter(Axis(0)).zip(residuals.iter()) {
                    let mut w = T::one();
                    for (&a, &b) in zp.iter().zip(zj.iter()) {
                        w *= self.kernel.eval((a - b).abs() / bandwidth);
                    }
                    num += w * r;
                    den += w;
                }
                (den > floor).then(|| num / den)
            })
            .collect();
        Ok(out)
    }
}
