//! Forced linear model on eigen time-delay coordinates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::EigenCoordinates;
use crate::linalg;
use crate::timeseries_io::Timestamp;

#[derive(Debug, Error)]
pub enum HavokError {
    #[error("need at least {needed} time points for the derivative stencil, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("regression is rank-deficient: rank {rank} of {needed}")]
    SingularRegression { rank: usize, needed: usize },
    #[error("state left finite range at step {step}")]
    NonFiniteState { step: usize },
    #[error("forcing has {got} samples, {needed} steps requested")]
    ForcingTooShort { needed: usize, got: usize },
    #[error("expected a state of dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// Time derivatives of eigen coordinates with `trim` rows dropped at each end.
#[derive(Clone, Debug)]
pub struct Derivatives {
    pub values: DMatrix<f64>,
    /// Row `i` of `values` corresponds to row `i + trim` of the coordinates.
    pub trim: usize,
}

/// Fourth-order central difference down the rows of `m`, using a stencil of
/// `spacing` rows: `(−x[i+2h] + 8x[i+h] − 8x[i−h] + x[i−2h]) / (12·h·dt)`.
pub fn central_difference(m: &DMatrix<f64>, dt: f64, spacing: usize) -> Result<Derivatives, HavokError> {
    let h = spacing.max(1);
    let needed = 4 * h + 1;
    if m.nrows() < needed {
        return Err(HavokError::TooFewPoints { needed, got: m.nrows() });
    }
    let trim = 2 * h;
    let n = m.nrows() - 2 * trim;
    let denom = 12.0 * h as f64 * dt;
    let mut out = DMatrix::zeros(n, m.ncols());
    for c in 0..m.ncols() {
        let col = m.column(c);
        for i in 0..n {
            let k = i + trim;
            out[(i, c)] = (-col[k + 2 * h] + 8.0 * col[k + h] - 8.0 * col[k - h] + col[k - 2 * h]) / denom;
        }
    }
    Ok(Derivatives { values: out, trim })
}

pub fn estimate_derivatives(v: &EigenCoordinates) -> Result<Derivatives, HavokError> {
    central_difference(v.matrix(), v.dt(), 1)
}

/// `dv/dt = A·v + B·v_r` on the first `r−1` coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct HavokModel {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub dt: f64,
    pub residual: f64,
}

impl HavokModel {
    pub fn rank(&self) -> usize {
        self.a.nrows() + 1
    }

    pub fn report(&self) -> HavokReport {
        HavokReport {
            r: self.rank(),
            dt: self.dt,
            residual: self.residual,
            a: self.a.row_iter().map(|r| r.iter().copied().collect()).collect(),
            b: self.b.iter().copied().collect(),
        }
    }

    pub fn from_report(rep: &HavokReport) -> Result<Self, HavokError> {
        let n = rep.r.saturating_sub(1);
        if rep.a.len() != n || rep.a.iter().any(|row| row.len() != n) || rep.b.len() != n {
            return Err(HavokError::DimensionMismatch {
                expected: n,
                got: rep.a.len(),
            });
        }
        Ok(Self {
            a: DMatrix::from_fn(n, n, |i, j| rep.a[i][j]),
            b: DVector::from_vec(rep.b.clone()),
            dt: rep.dt,
            residual: rep.residual,
        })
    }
}

/// Human-readable form of a [`HavokModel`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HavokReport {
    pub r: usize,
    pub dt: f64,
    pub residual: f64,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HavokOptions {
    /// Entries of A with magnitude below this are zeroed after the fit; 0 disables.
    #[serde(default)]
    pub sparsify: f64,
}

pub fn fit_forced_linear(v: &EigenCoordinates, dv: &Derivatives) -> Result<HavokModel, HavokError> {
    fit_forced_linear_with(v, dv, &HavokOptions::default())
}

/// Least-squares fit of `[A B]` over interior samples. A forcing column that
/// is numerically zero yields `B = 0`; only a rank-deficient linear block is
/// reported as singular.
pub fn fit_forced_linear_with(
    v: &EigenCoordinates,
    dv: &Derivatives,
    opts: &HavokOptions,
) -> Result<HavokModel, HavokError> {
    let r = v.rank();
    let n = dv.values.nrows();
    if n + 2 * dv.trim != v.len() || dv.values.ncols() != r {
        return Err(HavokError::LengthMismatch {
            left: v.len(),
            right: n + 2 * dv.trim,
        });
    }
    let x = v.matrix().rows(dv.trim, n).into_owned();
    let y = dv.values.columns(0, r - 1).into_owned();
    let forcing_norm = x.column(r - 1).norm();
    let null_forcing = forcing_norm <= 1e-12 * x.norm() || forcing_norm == 0.0;

    let (a, b) = if null_forcing {
        let lin = x.columns(0, r - 1).into_owned();
        let sol = linalg::lstsq(&lin, &y, 0.0).ok_or_else(|| HavokError::Numerical("least squares".into()))?;
        if sol.rank < r - 1 {
            return Err(HavokError::SingularRegression {
                rank: sol.rank,
                needed: r - 1,
            });
        }
        (sol.coef.transpose(), DVector::zeros(r - 1))
    } else {
        let sol = linalg::lstsq(&x, &y, 0.0).ok_or_else(|| HavokError::Numerical("least squares".into()))?;
        if sol.rank < r {
            return Err(HavokError::SingularRegression {
                rank: sol.rank,
                needed: r,
            });
        }
        let w = sol.coef.transpose();
        (w.columns(0, r - 1).into_owned(), w.column(r - 1).into_owned())
    };

    let mut a = a;
    if opts.sparsify > 0.0 {
        a.iter_mut().filter(|e| e.abs() < opts.sparsify).for_each(|e| *e = 0.0);
    }
    let mut w = DMatrix::zeros(r - 1, r);
    w.columns_mut(0, r - 1).copy_from(&a);
    w.column_mut(r - 1).copy_from(&b);
    let resid = (&y - &x * w.transpose()).norm();
    let denom = y.norm();
    let residual = if resid == 0.0 { 0.0 } else { resid / denom };
    Ok(HavokModel {
        a,
        b,
        dt: v.dt(),
        residual,
    })
}

/// `𝔸 = V′·V⁺`; singular values below `1e-12·σ_max` are dropped in `V⁺`.
pub fn fit_discrete_propagator(block: &DMatrix<f64>, advanced: &DMatrix<f64>) -> Result<DMatrix<f64>, HavokError> {
    if block.shape() != advanced.shape() {
        return Err(HavokError::LengthMismatch {
            left: block.ncols(),
            right: advanced.ncols(),
        });
    }
    let p = linalg::pinv(block, 1e-12).ok_or_else(|| HavokError::Numerical("pseudoinverse".into()))?;
    Ok(advanced * p)
}

/// One-step propagator over all `r` coordinates of `v`.
pub fn discrete_propagator(v: &EigenCoordinates) -> Result<DMatrix<f64>, HavokError> {
    let m = v.matrix();
    if m.nrows() < 2 {
        return Err(HavokError::TooFewPoints {
            needed: 2,
            got: m.nrows(),
        });
    }
    let vt = m.transpose();
    let n = vt.ncols() - 1;
    fit_discrete_propagator(&vt.columns(0, n).into_owned(), &vt.columns(1, n).into_owned())
}

/// The r-th eigen coordinate with its statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct ForcingSignal {
    values: Vec<f64>,
    timestamps: Vec<Timestamp>,
    mean: f64,
    std: f64,
}

impl ForcingSignal {
    pub fn new(values: Vec<f64>, timestamps: Vec<Timestamp>) -> Result<Self, HavokError> {
        if values.len() != timestamps.len() {
            return Err(HavokError::LengthMismatch {
                left: values.len(),
                right: timestamps.len(),
            });
        }
        let (mean, std) = linalg::mean_std(&values);
        Ok(Self {
            values,
            timestamps,
            mean,
            std,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn timestamps(&self) -> &[Timestamp] {
        &self.timestamps
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn std(&self) -> f64 {
        self.std
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Fourth standardized moment minus 3; 0 when σ = 0.
    pub fn excess_kurtosis(&self) -> f64 {
        if self.std == 0.0 {
            return 0.0;
        }
        let n = self.values.len() as f64;
        let m4 = self
            .values
            .iter()
            .map(|v| ((v - self.mean) / self.std).powi(4))
            .sum::<f64>()
            / n;
        m4 - 3.0
    }
}

pub fn forcing_signal(v: &EigenCoordinates) -> ForcingSignal {
    ForcingSignal::new(v.column(v.rank() - 1), v.timestamps()).expect("coordinates and timestamps share length")
}

/// Integrates the forced system with classical RK4, holding `forcing[k]`
/// constant over step k. Row k of the result is the state after k+1 steps.
pub fn simulate_linear(model: &HavokModel, v0: &[f64], forcing: &[f64], n: usize) -> Result<DMatrix<f64>, HavokError> {
    let dim = model.a.nrows();
    if v0.len() != dim {
        return Err(HavokError::DimensionMismatch {
            expected: dim,
            got: v0.len(),
        });
    }
    if forcing.len() < n {
        return Err(HavokError::ForcingTooShort {
            needed: n,
            got: forcing.len(),
        });
    }
    let dt = model.dt;
    let f = |x: &DVector<f64>, u: f64| &model.a * x + &model.b * u;
    let mut x = DVector::from_column_slice(v0);
    let mut out = DMatrix::zeros(n, dim);
    for (step, &u) in forcing.iter().take(n).enumerate() {
        let k1 = f(&x, u);
        let k2 = f(&(&x + &k1 * (dt / 2.0)), u);
        let k3 = f(&(&x + &k2 * (dt / 2.0)), u);
        let k4 = f(&(&x + &k3 * dt), u);
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(HavokError::NonFiniteState { step: step + 1 });
        }
        out.row_mut(step).copy_from(&x.transpose());
    }
    Ok(out)
}
