//! Sparse identification of nonlinear dynamics over a candidate library.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::havok::central_difference;
use crate::linalg;

pub use crate::pipeline::{predict_and_detect, PredictionOutcome};

#[derive(Debug, Error)]
pub enum SindyError {
    #[error("library generates no features")]
    EmptyLibrary,
    #[error("state matrix must have at least one state and one sample")]
    EmptyStates,
    #[error("row count mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("NoActiveTerms: thresholding removed every feature for state {state}")]
    NoActiveTerms { state: String },
    #[error("invalid hyperparameter: {0}")]
    InvalidParameter(String),
    #[error("Diverged: state left finite range after {steps_completed} steps")]
    Diverged {
        steps_completed: usize,
        partial: Vec<Vec<f64>>,
    },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LibrarySpec {
    pub polynomial_degree: usize,
    pub include_trig: bool,
    pub trig_frequencies: Vec<f64>,
    pub pairwise_trig_differences: bool,
    pub include_constant: bool,
}

impl Default for LibrarySpec {
    fn default() -> Self {
        Self {
            polynomial_degree: 3,
            include_trig: false,
            trig_frequencies: vec![1.0],
            pairwise_trig_differences: true,
            include_constant: true,
        }
    }
}

impl LibrarySpec {
    pub fn polynomial(degree: usize, include_constant: bool) -> Self {
        Self {
            polynomial_degree: degree,
            include_trig: false,
            trig_frequencies: Vec::new(),
            pairwise_trig_differences: false,
            include_constant,
        }
    }

    /// Features in canonical order for `n_states` states.
    pub fn features(&self, n_states: usize) -> Vec<Feature> {
        let mut out = Vec::new();
        if self.include_constant {
            out.push(Feature::Constant);
        }
        for d in 1..=self.polynomial_degree {
            let mut combo = vec![0usize; d];
            push_combinations(n_states, &mut combo, 0, 0, &mut out);
        }
        if self.include_trig {
            for &f in &self.trig_frequencies {
                for s in 0..n_states {
                    out.push(Feature::Sin { state: s, freq: f });
                    out.push(Feature::Cos { state: s, freq: f });
                }
            }
        }
        if self.pairwise_trig_differences {
            for i in 0..n_states {
                for j in i + 1..n_states {
                    out.push(Feature::SinDiff(i, j));
                    out.push(Feature::CosDiff(i, j));
                }
            }
        }
        out
    }

    pub fn feature_names(&self, state_names: &[String]) -> Vec<String> {
        self.features(state_names.len())
            .iter()
            .map(|f| f.name(state_names))
            .collect()
    }

    /// True when every feature is an odd function of the state.
    pub fn is_odd(&self) -> bool {
        !self.include_constant
            && self.polynomial_degree <= 1
            && !self.pairwise_trig_differences
            && !(self.include_trig && !self.trig_frequencies.is_empty())
    }
}

fn push_combinations(n: usize, combo: &mut Vec<usize>, pos: usize, from: usize, out: &mut Vec<Feature>) {
    if pos == combo.len() {
        let mut powers = vec![0u32; n];
        for &i in combo.iter() {
            powers[i] += 1;
        }
        out.push(Feature::Monomial(powers));
        return;
    }
    for i in from..n {
        combo[pos] = i;
        push_combinations(n, combo, pos + 1, i, out);
    }
}

/// One candidate function of the state.
#[derive(Clone, Debug, PartialEq)]
pub enum Feature {
    Constant,
    /// Power of each state.
    Monomial(Vec<u32>),
    Sin {
        state: usize,
        freq: f64,
    },
    Cos {
        state: usize,
        freq: f64,
    },
    SinDiff(usize, usize),
    CosDiff(usize, usize),
}

impl Feature {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Self::Constant => 1.0,
            Self::Monomial(p) => p
                .iter()
                .zip(x)
                .filter(|(&e, _)| e > 0)
                .map(|(&e, &v)| v.powi(e as i32))
                .product(),
            Self::Sin { state, freq } => (freq * x[*state]).sin(),
            Self::Cos { state, freq } => (freq * x[*state]).cos(),
            Self::SinDiff(i, j) => (x[*i] - x[*j]).sin(),
            Self::CosDiff(i, j) => (x[*i] - x[*j]).cos(),
        }
    }

    pub fn name(&self, names: &[String]) -> String {
        let scaled = |freq: f64, s: usize| {
            if freq == 1.0 {
                names[s].clone()
            } else {
                format!("{freq}*{}", names[s])
            }
        };
        match self {
            Self::Constant => "1".into(),
            Self::Monomial(p) => p
                .iter()
                .enumerate()
                .filter(|(_, &e)| e > 0)
                .map(|(i, &e)| {
                    if e == 1 {
                        names[i].clone()
                    } else {
                        format!("{}^{e}", names[i])
                    }
                })
                .collect::<Vec<_>>()
                .join("*"),
            Self::Sin { state, freq } => format!("sin({})", scaled(*freq, *state)),
            Self::Cos { state, freq } => format!("cos({})", scaled(*freq, *state)),
            Self::SinDiff(i, j) => format!("sin({}-{})", names[*i], names[*j]),
            Self::CosDiff(i, j) => format!("cos({}-{})", names[*i], names[*j]),
        }
    }
}

pub fn default_state_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("x{i}")).collect()
}

/// Θ(X) with one row per sample, plus feature names `x0`, `x1`, ...
pub fn build_library(x: &DMatrix<f64>, spec: &LibrarySpec) -> Result<(DMatrix<f64>, Vec<String>), SindyError> {
    if x.ncols() == 0 || x.nrows() == 0 {
        return Err(SindyError::EmptyStates);
    }
    let feats = spec.features(x.ncols());
    if feats.is_empty() {
        return Err(SindyError::EmptyLibrary);
    }
    let names = default_state_names(x.ncols());
    let mut theta = DMatrix::zeros(x.nrows(), feats.len());
    let mut row = vec![0.0; x.ncols()];
    for i in 0..x.nrows() {
        for (j, r) in row.iter_mut().enumerate() {
            *r = x[(i, j)];
        }
        for (f, feat) in feats.iter().enumerate() {
            theta[(i, f)] = feat.eval(&row);
        }
    }
    Ok((theta, feats.iter().map(|f| f.name(&names)).collect()))
}

/// Sequentially thresholded least squares with ridge weight `alpha`.
pub fn stlsq(
    theta: &DMatrix<f64>,
    dx: &DMatrix<f64>,
    lambda: f64,
    alpha: f64,
    max_iter: usize,
) -> Result<DMatrix<f64>, SindyError> {
    stlsq_from_support(theta, dx, lambda, alpha, max_iter, None)
}

/// [`stlsq`] starting from a given support (`support[f][k]`: feature f active for state k).
pub fn stlsq_from_support(
    theta: &DMatrix<f64>,
    dx: &DMatrix<f64>,
    lambda: f64,
    alpha: f64,
    max_iter: usize,
    support: Option<&[Vec<bool>]>,
) -> Result<DMatrix<f64>, SindyError> {
    if theta.nrows() != dx.nrows() {
        return Err(SindyError::LengthMismatch {
            left: theta.nrows(),
            right: dx.nrows(),
        });
    }
    if !(lambda >= 0.0) || !(alpha >= 0.0) {
        return Err(SindyError::InvalidParameter(format!(
            "threshold and ridge must be non-negative (got {lambda}, {alpha})"
        )));
    }
    let nf = theta.ncols();
    let mut zeta = DMatrix::zeros(nf, dx.ncols());
    for k in 0..dx.ncols() {
        let y = dx.column(k).into_owned();
        let mut active: Vec<usize> = match support {
            Some(s) => (0..nf).filter(|&f| s[f][k]).collect(),
            None => (0..nf).collect(),
        };
        let mut coef = vec![0.0; nf];
        let mut converged = false;
        for _ in 0..max_iter.max(1) {
            if active.is_empty() {
                break;
            }
            coef = solve_support(theta, &y, &active, alpha)?;
            let keep: Vec<usize> = active.iter().copied().filter(|&f| coef[f].abs() >= lambda).collect();
            if keep.len() == active.len() {
                converged = true;
                break;
            }
            active = keep;
        }
        if !converged {
            for c in coef.iter_mut() {
                if c.abs() < lambda {
                    *c = 0.0;
                }
            }
        }
        if active.is_empty() || coef.iter().all(|&c| c == 0.0) {
            return Err(SindyError::NoActiveTerms { state: format!("x{k}") });
        }
        for f in 0..nf {
            zeta[(f, k)] = coef[f];
        }
    }
    Ok(zeta)
}

fn solve_support(theta: &DMatrix<f64>, y: &DVector<f64>, active: &[usize], alpha: f64) -> Result<Vec<f64>, SindyError> {
    let sub = theta.select_columns(active);
    let rhs = DMatrix::from_column_slice(y.len(), 1, y.as_slice());
    let sol = linalg::lstsq(&sub, &rhs, alpha).ok_or_else(|| SindyError::Numerical("least squares".into()))?;
    let mut out = vec![0.0; theta.ncols()];
    for (i, &f) in active.iter().enumerate() {
        out[f] = sol.coef[(i, 0)];
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SindyOptions {
    /// λ, applied to normalized coefficients when `standardize` is on.
    pub threshold: f64,
    /// α, the ridge weight.
    pub ridge: f64,
    pub max_iter: usize,
    /// Z-score states and normalize library columns and targets before regression.
    pub standardize: bool,
    /// Derivative stencil spacing in samples.
    pub derivative_spacing: usize,
}

impl Default for SindyOptions {
    fn default() -> Self {
        Self {
            threshold: 0.1,
            ridge: 0.05,
            max_iter: 25,
            standardize: true,
            derivative_spacing: 1,
        }
    }
}

impl SindyOptions {
    pub fn validate(&self) -> Result<(), SindyError> {
        if !(self.threshold >= 0.0 && self.threshold.is_finite()) {
            return Err(SindyError::InvalidParameter(format!("threshold {}", self.threshold)));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(SindyError::InvalidParameter(format!("ridge {}", self.ridge)));
        }
        if self.derivative_spacing == 0 {
            return Err(SindyError::InvalidParameter("derivative_spacing must be >= 1".into()));
        }
        Ok(())
    }
}

/// Affine maps between physical states and the regression's normalized space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub state_mean: Vec<f64>,
    pub state_scale: Vec<f64>,
    pub feature_scale: Vec<f64>,
    pub target_scale: Vec<f64>,
}

impl Scaling {
    fn identity(n_states: usize, n_features: usize) -> Self {
        Self {
            state_mean: vec![0.0; n_states],
            state_scale: vec![1.0; n_states],
            feature_scale: vec![1.0; n_features],
            target_scale: vec![1.0; n_states],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SindyModel {
    pub library: LibrarySpec,
    pub state_names: Vec<String>,
    pub feature_names: Vec<String>,
    /// `coefficients[feature][state]`.
    pub coefficients: Vec<Vec<f64>>,
    pub dt: f64,
    pub threshold: f64,
    pub ridge: f64,
    pub max_iter: usize,
    pub derivative_spacing: usize,
    pub scaling: Scaling,
}

impl SindyModel {
    pub fn n_states(&self) -> usize {
        self.state_names.len()
    }

    pub fn nonzero_terms(&self) -> usize {
        self.coefficients.iter().flatten().filter(|&&c| c != 0.0).count()
    }

    /// Coefficient of `feature` in the equation for `state`, by name.
    pub fn coefficient(&self, feature: &str, state: &str) -> Option<f64> {
        let f = self.feature_names.iter().position(|n| n == feature)?;
        let s = self.state_names.iter().position(|n| n == state)?;
        Some(self.coefficients[f][s])
    }

    /// Right-hand side in physical units.
    pub fn rhs(&self, x: &[f64]) -> Vec<f64> {
        let feats = self.library.features(self.n_states());
        let sc = &self.scaling;
        let z: Vec<f64> = (0..x.len())
            .map(|i| (x[i] - sc.state_mean[i]) / sc.state_scale[i])
            .collect();
        let theta: Vec<f64> = feats
            .iter()
            .zip(&sc.feature_scale)
            .map(|(f, s)| f.eval(&z) / s)
            .collect();
        (0..self.n_states())
            .map(|k| {
                let dz: f64 = theta.iter().zip(&self.coefficients).map(|(t, c)| t * c[k]).sum();
                dz * sc.target_scale[k] * sc.state_scale[k]
            })
            .collect()
    }

    /// Human-readable equations, one per state.
    pub fn equations(&self) -> Vec<String> {
        (0..self.n_states())
            .map(|k| {
                let terms: Vec<String> = self
                    .coefficients
                    .iter()
                    .zip(&self.feature_names)
                    .filter(|(c, _)| c[k] != 0.0)
                    .map(|(c, n)| format!("{:+.6} {n}", c[k]))
                    .collect();
                format!("d{}/dt = {}", self.state_names[k], terms.join(" "))
            })
            .collect()
    }
}

/// Estimates derivatives, builds the library and runs STLSQ. `states` has one
/// row per sample.
pub fn fit(
    states: &DMatrix<f64>,
    state_names: &[String],
    dt: f64,
    spec: &LibrarySpec,
    opts: &SindyOptions,
) -> Result<SindyModel, SindyError> {
    opts.validate()?;
    if states.ncols() == 0 || states.nrows() == 0 {
        return Err(SindyError::EmptyStates);
    }
    if state_names.len() != states.ncols() {
        return Err(SindyError::LengthMismatch {
            left: states.ncols(),
            right: state_names.len(),
        });
    }
    if !(dt > 0.0) {
        return Err(SindyError::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let h = opts.derivative_spacing;
    let needed = 4 * h + 1;
    if states.nrows() < needed {
        return Err(SindyError::TooFewSamples {
            needed,
            got: states.nrows(),
        });
    }
    let ns = states.ncols();
    let nf = spec.features(ns).len();
    if nf == 0 {
        return Err(SindyError::EmptyLibrary);
    }
    let mut scaling = Scaling::identity(ns, nf);
    let mut z = states.clone();
    if opts.standardize {
        for k in 0..ns {
            let col: Vec<f64> = states.column(k).iter().copied().collect();
            let (m, s) = linalg::mean_std(&col);
            scaling.state_mean[k] = m;
            scaling.state_scale[k] = if s > 0.0 { s } else { 1.0 };
            z.column_mut(k)
                .iter_mut()
                .for_each(|v| *v = (*v - m) / scaling.state_scale[k]);
        }
    }
    let d = central_difference(&z, dt, h).map_err(|e| SindyError::Numerical(e.to_string()))?;
    let interior = z.rows(d.trim, d.values.nrows()).into_owned();
    let (mut theta, _) = build_library(&interior, spec)?;
    let mut dx = d.values;
    if opts.standardize {
        let feats = spec.features(ns);
        for (f, feat) in feats.iter().enumerate() {
            if matches!(feat, Feature::Constant) {
                continue;
            }
            let col: Vec<f64> = theta.column(f).iter().copied().collect();
            let (_, s) = linalg::mean_std(&col);
            if s > 0.0 {
                scaling.feature_scale[f] = s;
                theta.column_mut(f).iter_mut().for_each(|v| *v /= s);
            }
        }
        for k in 0..ns {
            let col: Vec<f64> = dx.column(k).iter().copied().collect();
            let (_, s) = linalg::mean_std(&col);
            if s > 0.0 {
                scaling.target_scale[k] = s;
                dx.column_mut(k).iter_mut().for_each(|v| *v /= s);
            }
        }
    }
    let zeta = stlsq(&theta, &dx, opts.threshold, opts.ridge, opts.max_iter).map_err(|e| match e {
        SindyError::NoActiveTerms { state } => {
            let idx: usize = state.trim_start_matches('x').parse().unwrap_or(0);
            SindyError::NoActiveTerms {
                state: state_names.get(idx).cloned().unwrap_or(state),
            }
        }
        other => other,
    })?;
    Ok(SindyModel {
        library: spec.clone(),
        state_names: state_names.to_vec(),
        feature_names: spec.feature_names(state_names),
        coefficients: (0..nf).map(|f| (0..ns).map(|k| zeta[(f, k)]).collect()).collect(),
        dt,
        threshold: opts.threshold,
        ridge: opts.ridge,
        max_iter: opts.max_iter,
        derivative_spacing: h,
        scaling,
    })
}

const DIVERGENCE_BOUND: f64 = 1e12;

/// RK4 at step `model.dt`. Row k of the result is the state after k+1 steps.
pub fn simulate(model: &SindyModel, x0: &[f64], n: usize) -> Result<DMatrix<f64>, SindyError> {
    let ns = model.n_states();
    if x0.len() != ns {
        return Err(SindyError::LengthMismatch {
            left: ns,
            right: x0.len(),
        });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(SindyError::InvalidParameter("initial state must be finite".into()));
    }
    let dt = model.dt;
    let sc = &model.scaling;
    let mut out = DMatrix::zeros(n, ns);
    let mut x = x0.to_vec();
    let axpy = |x: &[f64], k: &[f64], h: f64| -> Vec<f64> { x.iter().zip(k).map(|(a, b)| a + h * b).collect() };
    for step in 0..n {
        let k1 = model.rhs(&x);
        let k2 = model.rhs(&axpy(&x, &k1, dt / 2.0));
        let k3 = model.rhs(&axpy(&x, &k2, dt / 2.0));
        let k4 = model.rhs(&axpy(&x, &k3, dt));
        for i in 0..ns {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let escaped = x
            .iter()
            .enumerate()
            .any(|(i, v)| !v.is_finite() || ((v - sc.state_mean[i]) / sc.state_scale[i]).abs() > DIVERGENCE_BOUND);
        if escaped {
            return Err(SindyError::Diverged {
                steps_completed: step,
                partial: (0..step).map(|r| out.row(r).iter().copied().collect()).collect(),
            });
        }
        out.row_mut(step).copy_from_slice(&x);
    }
    Ok(out)
}
