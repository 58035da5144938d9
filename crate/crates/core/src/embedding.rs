//! Delay-coordinate Hankel matrices and their eigen time-delay coordinates.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;
use crate::timeseries_io::Timestamp;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("SeriesTooShort: need at least {min} samples for the embedding, got {len}")]
    SeriesTooShort { min: usize, len: usize },
    #[error("invalid embedding parameter: {0}")]
    InvalidParameter(String),
    #[error("series contains non-finite values")]
    NonFinite,
    #[error("SVD did not converge: {0}")]
    NumericalFailure(String),
    #[error("RankTooLarge: requested {requested}, only {available} columns available")]
    RankTooLarge { requested: usize, available: usize },
}

/// Time of sample 0 and the sampling interval in seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleClock {
    pub start: Timestamp,
    pub dt: f64,
}

impl SampleClock {
    pub fn new(start: Timestamp, dt: f64) -> Self {
        Self { start, dt }
    }

    pub fn at(&self, index: usize) -> Timestamp {
        self.start.add_secs(index as f64 * self.dt)
    }
}

impl Default for SampleClock {
    fn default() -> Self {
        Self {
            start: Timestamp::from_nanos(0),
            dt: 1.0,
        }
    }
}

/// `q × p` matrix with `data[i][j] = series[i·τ + j]`.
#[derive(Clone, Debug)]
pub struct HankelMatrix {
    data: DMatrix<f64>,
    delay: usize,
    clock: SampleClock,
}

impl HankelMatrix {
    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// Delay depth q.
    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    /// Window count p.
    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn delay(&self) -> usize {
        self.delay
    }

    pub fn dt(&self) -> f64 {
        self.clock.dt
    }

    pub fn clock(&self) -> SampleClock {
        self.clock
    }

    /// Samples spanned between a column's head and its tail.
    pub fn lookback(&self) -> usize {
        (self.rows() - 1) * self.delay
    }

    pub fn with_clock(mut self, clock: SampleClock) -> Self {
        self.clock = clock;
        self
    }

    /// Instants of the first sample in each column.
    pub fn origin_timestamps(&self) -> Vec<Timestamp> {
        (0..self.cols()).map(|j| self.clock.at(j)).collect()
    }

    /// Instants of the last sample in each column.
    pub fn tail_timestamps(&self) -> Vec<Timestamp> {
        let lb = self.lookback();
        (0..self.cols()).map(|j| self.clock.at(j + lb)).collect()
    }
}

/// Smallest series length accepted for `rows` and `delay`.
pub fn min_series_len(rows: usize, delay: usize) -> usize {
    rows * delay + 1
}

pub fn build_hankel(series: &[f64], rows: usize, delay: usize) -> Result<HankelMatrix, EmbeddingError> {
    if rows < 2 {
        return Err(EmbeddingError::InvalidParameter(format!(
            "rows must be >= 2, got {rows}"
        )));
    }
    if delay < 1 {
        return Err(EmbeddingError::InvalidParameter("delay must be >= 1".into()));
    }
    let min = min_series_len(rows, delay);
    if series.len() < min {
        return Err(EmbeddingError::SeriesTooShort { min, len: series.len() });
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(EmbeddingError::NonFinite);
    }
    let p = series.len() - (rows - 1) * delay;
    let data = DMatrix::from_fn(rows, p, |i, j| series[i * delay + j]);
    Ok(HankelMatrix {
        data,
        delay,
        clock: SampleClock::default(),
    })
}

/// Economy SVD of a Hankel matrix with the sign convention applied.
#[derive(Clone, Debug)]
pub struct SvdFactors {
    /// `q × k` left singular vectors.
    pub u: DMatrix<f64>,
    /// `k` singular values, descending.
    pub s: Vec<f64>,
    /// `p × k` right singular vectors.
    pub v: DMatrix<f64>,
    /// All `min(q, p)` singular values.
    pub full_spectrum: Vec<f64>,
    pub delay: usize,
    pub clock: SampleClock,
}

impl SvdFactors {
    pub fn rows(&self) -> usize {
        self.u.nrows()
    }

    pub fn cols(&self) -> usize {
        self.v.nrows()
    }

    /// Aspect ratio `min(q,p) / max(q,p)`.
    pub fn aspect_ratio(&self) -> f64 {
        let (q, p) = (self.rows() as f64, self.cols() as f64);
        q.min(p) / q.max(p)
    }

    pub fn choose_rank(&self, policy: &RankPolicy) -> usize {
        choose_rank(&self.full_spectrum, policy, self.aspect_ratio())
    }

    /// `U[:, :r] · diag(S[:r]) · V[:, :r]ᵀ`.
    pub fn reconstruct(&self, r: usize) -> DMatrix<f64> {
        let r = r.min(self.s.len());
        let mut us = self.u.columns(0, r).into_owned();
        for (k, mut col) in us.column_iter_mut().enumerate() {
            col *= self.s[k];
        }
        us * self.v.columns(0, r).transpose()
    }
}

/// Economy SVD. Flips each singular pair so that the largest-magnitude entry
/// of the U column is positive (first such entry on ties).
pub fn svd_hankel(h: &HankelMatrix) -> Result<SvdFactors, EmbeddingError> {
    let t = linalg::thin_svd(h.data())
        .ok_or_else(|| EmbeddingError::NumericalFailure(format!("{}x{} Hankel matrix", h.rows(), h.cols())))?;
    let (mut u, s, mut v) = (t.u, t.s, t.v);
    for k in 0..u.ncols() {
        let mut best = 0;
        for i in 1..u.nrows() {
            if u[(i, k)].abs() > u[(best, k)].abs() {
                best = i;
            }
        }
        if u[(best, k)] < 0.0 {
            u.column_mut(k).neg_mut();
            v.column_mut(k).neg_mut();
        }
    }
    Ok(SvdFactors {
        full_spectrum: s.clone(),
        u,
        s,
        v,
        delay: h.delay,
        clock: h.clock,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum RankPolicy {
    Fixed {
        rank: usize,
    },
    Energy {
        fraction: f64,
    },
    #[default]
    HardThreshold,
}

impl RankPolicy {
    pub fn validate(&self) -> Result<(), String> {
        match self {
            Self::Fixed { rank } if *rank < 2 => Err(format!("fixed rank must be >= 2, got {rank}")),
            Self::Energy { fraction } if !(*fraction > 0.0 && *fraction <= 1.0) => {
                Err(format!("energy fraction must lie in (0, 1], got {fraction}"))
            }
            _ => Ok(()),
        }
    }
}

/// ω(β) for the unknown-noise optimal hard threshold.
pub fn hard_threshold_coefficient(beta: f64) -> f64 {
    0.56 * beta.powi(3) - 0.95 * beta.powi(2) + 1.82 * beta + 1.43
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Truncation rank for a descending spectrum, clamped to at least 2.
/// `aspect_ratio` (min/max matrix dimension) is used only by the hard threshold.
pub fn choose_rank(spectrum: &[f64], policy: &RankPolicy, aspect_ratio: f64) -> usize {
    let len = spectrum.len();
    let upper = len.max(2);
    let raw = match policy {
        RankPolicy::Fixed { rank } => *rank,
        RankPolicy::Energy { fraction } => {
            let total: f64 = spectrum.iter().map(|s| s * s).sum();
            let mut acc = 0.0;
            let mut r = len;
            for (k, s) in spectrum.iter().enumerate() {
                acc += s * s;
                if total == 0.0 || acc / total >= *fraction {
                    r = k + 1;
                    break;
                }
            }
            r
        }
        RankPolicy::HardThreshold => {
            if len == 0 {
                0
            } else {
                let beta = aspect_ratio.clamp(0.0, 1.0);
                let tau = hard_threshold_coefficient(beta) * median(spectrum);
                spectrum.iter().filter(|&&s| s > tau).count()
            }
        }
    };
    raw.clamp(2, upper)
}

/// First `r` columns of V as eigen time-delay coordinates.
#[derive(Clone, Debug)]
pub struct EigenCoordinates {
    v: DMatrix<f64>,
    dt: f64,
    first_tail: Timestamp,
}

impl EigenCoordinates {
    /// Wraps a `p × r` matrix with `r ≥ 2`. `first_tail` stamps row 0.
    pub fn new(v: DMatrix<f64>, dt: f64, first_tail: Timestamp) -> Result<Self, EmbeddingError> {
        if v.ncols() < 2 {
            return Err(EmbeddingError::InvalidParameter(format!(
                "eigen coordinates need r >= 2, got {}",
                v.ncols()
            )));
        }
        if !(dt > 0.0) {
            return Err(EmbeddingError::InvalidParameter(format!(
                "dt must be positive, got {dt}"
            )));
        }
        Ok(Self { v, dt, first_tail })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn rank(&self) -> usize {
        self.v.ncols()
    }

    pub fn len(&self) -> usize {
        self.v.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.v.nrows() == 0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.v.column(k).iter().copied().collect()
    }

    /// Row `i` is stamped at the newest sample of Hankel column `i`.
    pub fn timestamps(&self) -> Vec<Timestamp> {
        (0..self.len())
            .map(|i| self.first_tail.add_secs(i as f64 * self.dt))
            .collect()
    }
}

pub fn delay_coordinates(f: &SvdFactors, r: usize) -> Result<EigenCoordinates, EmbeddingError> {
    let available = f.v.ncols();
    if r > available {
        return Err(EmbeddingError::RankTooLarge {
            requested: r,
            available,
        });
    }
    let lookback = (f.rows() - 1) * f.delay;
    EigenCoordinates::new(f.v.columns(0, r).into_owned(), f.clock.dt, f.clock.at(lookback))
}
