//! The discrepancy weight matrix `Ω`, its intercept-centred form `D` and the
//! annihilator `B̂`, exposed through products rather than stored inverses.
//!
//! `Ω_ij = Ω^X_ij · Ω^Z_ij` where `Ω^X` carries the continuous linear
//! covariates and the exact-match indicators of the discrete ones, and `Ω^Z`
//! the smoothing covariates.

use std::ops::Range;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{column_moments, Dataset};
use crate::linalg::SpdSolver;
use crate::scalar::Scalar;

/// Automatic choice of the exponent scales `d_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AutoScale {
    /// `d_k = 1/(2 sd_k²)`, i.e. `exp(−½‖Δw/sd‖²)`.
    #[default]
    HalfInverseVariance,
    /// `d_k = sd_k`.
    StandardDeviation,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Scales<T> {
    Auto(AutoScale),
    /// One entry per column of `(X_c, Z)`.
    Explicit(Vec<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightConfig<T> {
    pub scales: Scales<T>,
    /// `[d_L, d_U]`; automatic scales are clamped into it, explicit ones must lie in it.
    pub bounds: (T, T),
    pub dense_threshold: usize,
    pub block_size: usize,
}

impl<T: Scalar> Default for WeightConfig<T> {
    fn default() -> Self {
        Self {
            scales: Scales::Auto(AutoScale::default()),
            bounds: (T::lit(1e-4), T::lit(1e4)),
            dense_threshold: 4000,
            block_size: 512,
        }
    }
}

impl<T: Scalar> WeightConfig<T> {
    /// Resolved `d` over the columns of `(X_c, Z)`.
    pub fn resolve(&self, data: &Dataset<T>) -> Result<Vec<T>> {
        let (lo, hi) = self.bounds;
        if !(lo > T::zero() && lo < hi && hi.is_finite()) {
            return Err(Error::InvalidConfig(format!("invalid d bounds [{lo}, {hi}]")));
        }
        let width = data.x_cont().ncols() + data.q();
        match &self.scales {
            Scales::Explicit(d) => {
                if d.len() != width {
                    return Err(Error::DimensionMismatch { expected: width, found: d.len() });
                }
                if let Some(bad) = d.iter().find(|&&v| !(v >= lo && v <= hi)) {
                    return Err(Error::InvalidConfig(format!("d entry {bad} outside [{lo}, {hi}]")));
                }
                Ok(d.clone())
            }
            Scales::Auto(rule) => {
                let mut sds: Vec<T> = column_moments(data.x_cont()).into_iter().map(|m| m.1).collect();
                sds.extend(column_moments(data.z()).into_iter().map(|m| m.1));
                Ok(sds
                    .into_iter()
                    .map(|sd| {
                        let d = match rule {
                            AutoScale::HalfInverseVariance => (T::lit(2.0) * sd * sd).recip(),
                            AutoScale::StandardDeviation => sd,
                        };
                        if d.is_nan() { hi } else { d.max(lo).min(hi) }
                    })
                    .collect())
            }
        }
    }
}

/// Matrix-free access to `Ω`, `Ω^Z` and the derived centring operators.
#[derive(Debug, Clone)]
pub struct WeightOperator<T> {
    n: usize,
    x_cont: Array2<T>,
    x_disc: Array2<i64>,
    z: Array2<T>,
    d_x: Vec<T>,
    d_z: Vec<T>,
    omega: Option<Array2<T>>,
    omega_z: Option<Array2<T>>,
    block_size: usize,
    omega_one: Array1<T>,
    one_omega_one: T,
    rho: Array1<T>,
}

fn gaussian_part<T: Scalar>(w: ArrayView2<T>, d: &[T], i: usize, j: usize) -> T {
    let mut e = T::zero();
    for (k, &dk) in d.iter().enumerate() {
        let diff = w[[i, k]] - w[[j, k]];
        e += dk * diff * diff;
    }
    (-e).exp()
}

impl<T: Scalar> WeightOperator<T> {
    pub fn build(data: &Dataset<T>, config: &WeightConfig<T>) -> Result<Self> {
        if data.x_cont().ncols() + data.x_disc().ncols() == 0 {
            return Err(Error::InvalidData("weight matrix needs at least one linear covariate".into()));
        }
        if config.block_size == 0 {
            return Err(Error::InvalidConfig("block size must be positive".into()));
        }
        let d = config.resolve(data)?;
        let pc = data.x_cont().ncols();
        let n = data.n();
        let mut op = Self {
            n,
            x_cont: data.x_cont().to_owned(),
            x_disc: data.x_disc().to_owned(),
            z: data.z().to_owned(),
            d_x: d[..pc].to_vec(),
            d_z: d[pc..].to_vec(),
            omega: None,
            omega_z: None,
            block_size: config.block_size,
            omega_one: Array1::zeros(n),
            one_omega_one: T::zero(),
            rho: Array1::zeros(n),
        };
        let inv_n = T::from_count(n).recip();
        if n <= config.dense_threshold {
            let ox = op.omega_x_rows(0..n);
            let oz = op.omega_z_rows(0..n);
            op.rho = ox.sum_axis(Axis(1)) * inv_n;
            op.omega = Some(ox * &oz);
            op.omega_z = Some(oz);
        } else {
            let mut rho = Array1::zeros(n);
            for start in (0..n).step_by(op.block_size) {
                let end = (start + op.block_size).min(n);
                rho.slice_mut(s![start..end]).assign(&(op.omega_x_rows(start..end).sum_axis(Axis(1)) * inv_n));
            }
            op.rho = rho;
        }
        op.omega_one = op.apply(Array2::from_elem((n, 1), T::one()).view()).remove_axis(Axis(1));
        op.one_omega_one = op.omega_one.sum();
        Ok(op)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_blocked(&self) -> bool {
        self.omega.is_none()
    }

    /// Exponent scales for `(X_c, Z)`.
    pub fn scales(&self) -> Vec<T> {
        self.d_x.iter().chain(&self.d_z).copied().collect()
    }

    pub fn omega_one(&self) -> ArrayView1<'_, T> {
        self.omega_one.view()
    }

    pub fn one_omega_one(&self) -> T {
        self.one_omega_one
    }

    /// `ρ_i = (1/n) Σ_k Ω^X_ik`.
    pub fn rho(&self) -> ArrayView1<'_, T> {
        self.rho.view()
    }

    pub fn omega_matrix(&self) -> Option<ArrayView2<'_, T>> {
        self.omega.as_ref().map(|m| m.view())
    }

    fn rows_with(&self, rows: Range<usize>, entry: impl Fn(usize, usize) -> T + Sync) -> Array2<T> {
        let mut out = Array2::zeros((rows.len(), self.n));
        Zip::indexed(out.rows_mut()).par_for_each(|k, mut row| {
            let i = rows.start + k;
            for (j, o) in row.iter_mut().enumerate() {
                *o = entry(i, j);
            }
        });
        out
    }

    pub fn omega_x_rows(&self, rows: Range<usize>) -> Array2<T> {
        self.rows_with(rows, |i, j| {
            let same = self.x_disc.row(i).iter().zip(self.x_disc.row(j).iter()).all(|(a, b)| a == b);
            if same { gaussian_part(self.x_cont.view(), &self.d_x, i, j) } else { T::zero() }
        })
    }

    pub fn omega_z_rows(&self, rows: Range<usize>) -> Array2<T> {
        if let Some(m) = &self.omega_z {
            return m.slice(s![rows, ..]).to_owned();
        }
        self.rows_with(rows, |i, j| gaussian_part(self.z.view(), &self.d_z, i, j))
    }

    pub fn omega_rows(&self, rows: Range<usize>) -> Array2<T> {
        if let Some(m) = &self.omega {
            return m.slice(s![rows, ..]).to_owned();
        }
        let oz = self.omega_z_rows(rows.clone());
        self.omega_x_rows(rows) * &oz
    }

    fn blocked_apply(&self, v: ArrayView2<T>, rows: impl Fn(Range<usize>) -> Array2<T> + Sync) -> Array2<T> {
        let n = self.n;
        let starts: Vec<usize> = (0..n).step_by(self.block_size).collect();
        let blocks: Vec<(usize, Array2<T>)> = starts
            .into_par_iter()
            .map(|start| {
                let end = (start + self.block_size).min(n);
                (start, rows(start..end).dot(&v))
            })
            .collect();
        let mut out = Array2::zeros((n, v.ncols()));
        for (start, b) in blocks {
            out.slice_mut(s![start..start + b.nrows(), ..]).assign(&b);
        }
        out
    }

    fn check_rows(&self, rows: usize) -> Result<()> {
        if rows == self.n {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: self.n, found: rows })
        }
    }

    /// `Ω V` for an `n×c` matrix.
    pub fn apply(&self, v: ArrayView2<T>) -> Array2<T> {
        match &self.omega {
            Some(m) => m.dot(&v),
            None => self.blocked_apply(v, |r| self.omega_rows(r)),
        }
    }

    /// `Ω^Z V`.
    pub fn apply_z(&self, v: ArrayView2<T>) -> Array2<T> {
        match &self.omega_z {
            Some(m) => m.dot(&v),
            None => self.blocked_apply(v, |r| self.omega_z_rows(r)),
        }
    }

    /// `Φ̂ᵀ M` with `Φ̂_ij = (Ω^X_ij − ρ_i) Ω^Z_ij`, i.e. `Ω M − Ω^Z (ρ ∘ M)`.
    pub fn apply_phi_t(&self, m: ArrayView2<T>) -> Array2<T> {
        let mut scaled = m.to_owned();
        Zip::from(scaled.rows_mut()).and(&self.rho).for_each(|mut r, &rho| r *= rho);
        self.apply(m) - self.apply_z(scaled.view())
    }

    /// `D V` when centring on the intercept, `Ω V` otherwise.
    pub fn apply_centered(&self, v: ArrayView2<T>, use_gamma: bool) -> Result<Array2<T>> {
        self.check_rows(v.nrows())?;
        let mut out = self.apply(v);
        if use_gamma {
            let u = self.omega_one.dot(&v) / self.one_omega_one;
            for (mut col, &uc) in out.axis_iter_mut(Axis(1)).zip(u.iter()) {
                col.scaled_add(-uc, &self.omega_one);
            }
        }
        Ok(out)
    }

    /// `D v = Ω v − Ω1 (1ᵀΩ v)/(1ᵀΩ1)`.
    pub fn apply_dn(&self, v: ArrayView1<T>) -> Result<Array1<T>> {
        let col = v.insert_axis(Axis(1));
        Ok(self.apply_centered(col, true)?.remove_axis(Axis(1)))
    }

    /// `uᵀ B̂ v` with `B̂ = D − D X̂ (X̂ᵀD X̂)⁻¹ X̂ᵀ D`.
    pub fn quad_form_bn(&self, xhat: ArrayView2<T>, u: ArrayView1<T>, v: ArrayView1<T>) -> Result<T> {
        self.quad_form(xhat, u, v, true)
    }

    /// As [`quad_form_bn`](Self::quad_form_bn), with `Ω` in place of `D` when `use_gamma` is off.
    pub fn quad_form(&self, xhat: ArrayView2<T>, u: ArrayView1<T>, v: ArrayView1<T>, use_gamma: bool) -> Result<T> {
        self.check_rows(xhat.nrows())?;
        self.check_rows(u.len())?;
        self.check_rows(v.len())?;
        let p = xhat.ncols();
        let mut stacked = Array2::zeros((self.n, p + 1));
        stacked.slice_mut(s![.., ..p]).assign(&xhat);
        stacked.column_mut(p).assign(&v);
        let dz = self.apply_centered(stacked.view(), use_gamma)?;
        let dx = dz.slice(s![.., ..p]);
        let h = xhat.t().dot(&dx);
        let solver = SpdSolver::new(h.view(), "collinear partialled covariates")?;
        let xdv = dx.t().dot(&u);
        let xdu_v = xhat.t().dot(&dz.column(p));
        Ok(u.dot(&dz.column(p)) - xdv.dot(&solver.solve_vec(xdu_v.view())))
    }
}
