//! Three-sigma flagging of the forcing signal and event merging.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::havok::ForcingSignal;
use crate::linalg;
use crate::timeseries_io::Timestamp;

#[derive(Debug, Error)]
pub enum AnomalyError {
    #[error("invalid detection config: {0}")]
    InvalidConfig(String),
    #[error("rolling window {window} exceeds series length {len}")]
    WindowTooLarge { window: usize, len: usize },
    #[error("need at least 2 forcing samples, got {0}")]
    TooShort(usize),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatsMode {
    Global,
    /// Trailing window of this many samples, current sample excluded.
    Rolling(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionConfig {
    pub sigma_multiplier: f64,
    pub stats: StatsMode,
    pub merge_gap: usize,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            sigma_multiplier: 3.0,
            stats: StatsMode::Global,
            merge_gap: 5,
        }
    }
}

impl DetectionConfig {
    pub fn new(sigma_multiplier: f64, stats: StatsMode, merge_gap: usize) -> Result<Self, AnomalyError> {
        let cfg = Self {
            sigma_multiplier,
            stats,
            merge_gap,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), AnomalyError> {
        if !(self.sigma_multiplier > 0.0 && self.sigma_multiplier.is_finite()) {
            return Err(AnomalyError::InvalidConfig(format!(
                "sigma_multiplier must be positive, got {}",
                self.sigma_multiplier
            )));
        }
        if let StatsMode::Rolling(w) = self.stats {
            if w < 2 {
                return Err(AnomalyError::InvalidConfig(format!(
                    "rolling window must be >= 2, got {w}"
                )));
            }
        }
        Ok(())
    }
}

/// Mean and population standard deviation over a trailing window.
#[derive(Clone, Debug, PartialEq)]
pub struct RollingStats {
    window: usize,
    buf: VecDeque<f64>,
    mean: f64,
    m2: f64,
    removals: usize,
}

impl RollingStats {
    pub fn new(window: usize) -> Self {
        Self {
            window,
            buf: VecDeque::with_capacity(window + 1),
            mean: 0.0,
            m2: 0.0,
            removals: 0,
        }
    }

    pub fn count(&self) -> usize {
        self.buf.len()
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn std(&self) -> f64 {
        if self.buf.is_empty() {
            0.0
        } else {
            (self.m2 / self.buf.len() as f64).max(0.0).sqrt()
        }
    }

    pub fn push(&mut self, x: f64) {
        self.buf.push_back(x);
        let n = self.buf.len() as f64;
        let d = x - self.mean;
        self.mean += d / n;
        self.m2 += d * (x - self.mean);
        if self.buf.len() > self.window {
            let old = self.buf.pop_front().expect("non-empty");
            let n = self.buf.len() as f64;
            let d = old - self.mean;
            self.mean -= d / n;
            self.m2 -= d * (old - self.mean);
            self.removals += 1;
            if self.removals >= self.window {
                self.recompute();
            }
        }
    }

    /// Clears accumulated rounding drift by recomputing from the buffer.
    fn recompute(&mut self) {
        self.removals = 0;
        let vals: Vec<f64> = self.buf.iter().copied().collect();
        let (mean, std) = linalg::mean_std(&vals);
        self.mean = mean;
        self.m2 = std * std * vals.len() as f64;
    }

    /// Decision for `x` against the current window, which is then updated.
    pub fn flag_and_push(&mut self, x: f64, k: f64) -> bool {
        let flagged = self.count() >= 2 && {
            let s = self.std();
            s > 0.0 && (x - self.mean).abs() > k * s
        };
        self.push(x);
        flagged
    }
}

/// `|v − μ| > k·σ`; no flags when σ = 0.
pub fn global_flags(values: &[f64], k: f64) -> Vec<bool> {
    let (mean, std) = linalg::mean_std(values);
    if std == 0.0 {
        return vec![false; values.len()];
    }
    values.iter().map(|v| (v - mean).abs() > k * std).collect()
}

pub fn three_sigma_flags(f: &ForcingSignal, cfg: &DetectionConfig) -> Result<Vec<bool>, AnomalyError> {
    cfg.validate()?;
    if f.len() < 2 {
        return Err(AnomalyError::TooShort(f.len()));
    }
    match cfg.stats {
        StatsMode::Global => {
            if f.std() == 0.0 {
                return Ok(vec![false; f.len()]);
            }
            let (mu, thr) = (f.mean(), cfg.sigma_multiplier * f.std());
            Ok(f.values().iter().map(|v| (v - mu).abs() > thr).collect())
        }
        StatsMode::Rolling(w) => {
            if w > f.len() {
                return Err(AnomalyError::WindowTooLarge {
                    window: w,
                    len: f.len(),
                });
            }
            let mut rs = RollingStats::new(w);
            Ok(f.values()
                .iter()
                .map(|&v| rs.flag_and_push(v, cfg.sigma_multiplier))
                .collect())
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnomalyEvent {
    pub channel: String,
    pub start: Timestamp,
    pub end: Timestamp,
    pub peak_forcing: f64,
    pub peak_index: usize,
    pub start_index: usize,
    pub end_index: usize,
}

/// Inclusive index ranges of flagged runs, coalescing runs separated by at
/// most `merge_gap` unflagged samples.
pub fn flagged_runs(flags: &[bool], merge_gap: usize) -> Vec<(usize, usize)> {
    let mut runs: Vec<(usize, usize)> = Vec::new();
    for (i, &f) in flags.iter().enumerate() {
        if !f {
            continue;
        }
        match runs.last_mut() {
            Some((_, end)) if i - *end - 1 <= merge_gap => *end = i,
            _ => runs.push((i, i)),
        }
    }
    runs
}

/// Events from flagged runs; the peak is the flagged sample with the largest
/// `|value − μ|` (earliest on ties).
pub fn merge_events(
    flags: &[bool],
    forcing: &ForcingSignal,
    cfg: &DetectionConfig,
    channel: &str,
) -> Result<Vec<AnomalyEvent>, AnomalyError> {
    if flags.len() != forcing.len() {
        return Err(AnomalyError::LengthMismatch {
            left: flags.len(),
            right: forcing.len(),
        });
    }
    let (values, ts, mu) = (forcing.values(), forcing.timestamps(), forcing.mean());
    Ok(flagged_runs(flags, cfg.merge_gap)
        .into_iter()
        .map(|(a, b)| {
            let mut peak = a;
            for i in a..=b {
                if flags[i] && (values[i] - mu).abs() > (values[peak] - mu).abs() {
                    peak = i;
                }
            }
            AnomalyEvent {
                channel: channel.to_string(),
                start: ts[a],
                end: ts[b],
                peak_forcing: values[peak],
                peak_index: peak,
                start_index: a,
                end_index: b,
            }
        })
        .collect())
}

/// `|v − μ| / max |v − μ|`, all zeros when every value equals μ.
pub fn anomaly_score(f: &ForcingSignal) -> Vec<f64> {
    let mu = f.mean();
    let dev: Vec<f64> = f.values().iter().map(|v| (v - mu).abs()).collect();
    let max = dev.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return vec![0.0; dev.len()];
    }
    dev.iter().map(|d| d / max).collect()
}
