//! Sample-by-sample detection with a projection fitted offline.
//!
//! Fed the same samples, a [`StreamingDetector`] yields the same forcing and
//! flags as the batch detector regardless of how input is chunked.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anomaly::{DetectionConfig, RollingStats, StatsMode};
use crate::pipeline::{ChannelDetection, FlagState, Projector};
use crate::timeseries_io::Timestamp;

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("non-finite sample at position {0}")]
    NonFinite(u64),
    #[error("detector state: {0}")]
    State(String),
}

/// One completed window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StreamOutput {
    /// Timestamp of the newest sample in the window.
    pub timestamp: Timestamp,
    /// Zero-based index of that sample since the stream began.
    pub index: u64,
    pub forcing: f64,
    pub flag: bool,
}

/// Serializable detector parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorSpec {
    pub projector: Projector,
    pub detection: DetectionConfig,
    /// Forcing mean and std from fitting, used in global mode.
    pub fitted_mean: f64,
    pub fitted_std: f64,
}

impl DetectorSpec {
    pub fn from_detection(det: &ChannelDetection, detection: &DetectionConfig) -> Self {
        Self {
            projector: det.projector.clone(),
            detection: *detection,
            fitted_mean: det.forcing.mean(),
            fitted_std: det.forcing.std(),
        }
    }
}

const COMPACT_AFTER: usize = 4096;

#[derive(Clone, Debug)]
pub struct StreamingDetector {
    spec: DetectorSpec,
    state: FlagState,
    buffer: Vec<f64>,
    seen: u64,
}

impl StreamingDetector {
    pub fn new(spec: DetectorSpec) -> Result<Self, StreamError> {
        spec.detection
            .validate()
            .map_err(|e| StreamError::State(e.to_string()))?;
        let p = &spec.projector;
        if p.weights.len() != p.rows || p.rows < 2 || p.delay < 1 || !(p.scale > 0.0) {
            return Err(StreamError::State("inconsistent projector".into()));
        }
        let k = spec.detection.sigma_multiplier;
        let state = match spec.detection.stats {
            StatsMode::Global => FlagState::Fixed {
                mean: spec.fitted_mean,
                std: spec.fitted_std,
                k,
            },
            StatsMode::Rolling(w) => FlagState::Rolling {
                stats: RollingStats::new(w),
                k,
            },
        };
        Ok(Self {
            spec,
            state,
            buffer: Vec::new(),
            seen: 0,
        })
    }

    pub fn spec(&self) -> &DetectorSpec {
        &self.spec
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.spec).expect("detector spec serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, StreamError> {
        let spec: DetectorSpec = serde_json::from_str(text).map_err(|e| StreamError::State(e.to_string()))?;
        Self::new(spec)
    }

    /// Samples consumed so far.
    pub fn samples_seen(&self) -> u64 {
        self.seen
    }

    /// Samples needed before the first output.
    pub fn warmup(&self) -> usize {
        self.spec.projector.lookback() + 1
    }

    pub fn push(&mut self, timestamp: Timestamp, value: f64) -> Result<Option<StreamOutput>, StreamError> {
        if !value.is_finite() {
            return Err(StreamError::NonFinite(self.seen));
        }
        let index = self.seen;
        self.seen += 1;
        let window = self.warmup();
        self.buffer.push(self.spec.projector.standardize(value));
        if self.buffer.len() > window + COMPACT_AFTER {
            self.buffer.drain(..self.buffer.len() - window);
        }
        if self.buffer.len() < window {
            return Ok(None);
        }
        let forcing = self.spec.projector.project(&self.buffer[self.buffer.len() - window..]);
        let flag = self.state.step(forcing);
        Ok(Some(StreamOutput {
            timestamp,
            index,
            forcing,
            flag,
        }))
    }

    pub fn push_chunk(&mut self, timestamps: &[Timestamp], values: &[f64]) -> Result<Vec<StreamOutput>, StreamError> {
        if timestamps.len() != values.len() {
            return Err(StreamError::State(format!(
                "{} timestamps for {} values",
                timestamps.len(),
                values.len()
            )));
        }
        let mut out = Vec::with_capacity(values.len());
        for (&t, &v) in timestamps.iter().zip(values) {
            out.extend(self.push(t, v)?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::RankPolicy;
    use crate::havok::HavokOptions;
    use crate::pipeline::{detect_channel, EmbeddingConfig};

    fn series(n: usize) -> (Vec<f64>, Vec<Timestamp>) {
        let x = (0..n)
            .map(|k| {
                let t = k as f64;
                (t * 0.07).sin() + 0.2 * (t * 0.31).cos() + if (900..930).contains(&k) { 0.8 } else { 0.0 }
            })
            .collect();
        let ts = (0..n as i64)
            .map(|k| Timestamp::from_nanos(k * 1_000_000_000))
            .collect();
        (x, ts)
    }

    fn check(stats: StatsMode) {
        let (x, ts) = series(2_000);
        let emb = EmbeddingConfig {
            rank: RankPolicy::Fixed { rank: 5 },
            ..EmbeddingConfig::default()
        };
        let cfg = DetectionConfig {
            stats,
            ..DetectionConfig::default()
        };
        let det = detect_channel("x", &x, &ts, 1.0, &emb, &HavokOptions::default(), &cfg).unwrap();
        let spec = DetectorSpec::from_detection(&det, &cfg);
        for chunk in [1, 7, 500, 2_000] {
            let mut s = StreamingDetector::from_json(&StreamingDetector::new(spec.clone()).unwrap().to_json()).unwrap();
            let mut outs = Vec::new();
            for (tc, xc) in ts.chunks(chunk).zip(x.chunks(chunk)) {
                outs.extend(s.push_chunk(tc, xc).unwrap());
            }
            assert_eq!(outs.len(), det.forcing.len());
            for (o, (f, (&fl, &t))) in outs.iter().zip(
                det.forcing
                    .values()
                    .iter()
                    .zip(det.forcing_flags.iter().zip(det.forcing.timestamps())),
            ) {
                assert_eq!(o.forcing.to_bits(), f.to_bits());
                assert_eq!(o.flag, fl);
                assert_eq!(o.timestamp, t);
            }
        }
    }

    #[test]
    fn stream_matches_batch_rolling() {
        check(StatsMode::Rolling(300));
    }

    #[test]
    fn stream_matches_batch_global() {
        check(StatsMode::Global);
    }

    #[test]
    fn rejects_nan() {
        let (x, ts) = series(400);
        let det = detect_channel(
            "x",
            &x,
            &ts,
            1.0,
            &EmbeddingConfig::default(),
            &HavokOptions::default(),
            &DetectionConfig::default(),
        )
        .unwrap();
        let mut s = StreamingDetector::new(DetectorSpec::from_detection(&det, &DetectionConfig::default())).unwrap();
        assert!(matches!(s.push(ts[0], f64::NAN), Err(StreamError::NonFinite(0))));
    }
}
