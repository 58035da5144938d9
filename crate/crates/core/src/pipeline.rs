//! End-to-end detection and forecasting over measurement frames.

use std::path::PathBuf;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anomaly::{self, AnomalyEvent, DetectionConfig, RollingStats, StatsMode};
use crate::embedding::{self, RankPolicy, SampleClock};
use crate::error::{Error, Result};
use crate::havok::{self, ForcingSignal, HavokModel, HavokOptions};
use crate::linalg;
use crate::sindy::{self, LibrarySpec, SindyError, SindyModel, SindyOptions};
use crate::timeseries_io::{
    interpolate_missing, select_channel, Channel, ChannelKind, ChannelSpec, MeasurementFrame, Timestamp,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    /// Delay depth q.
    pub rows: usize,
    /// Delay τ in samples.
    pub delay: usize,
    pub rank: RankPolicy,
    /// Z-score the channel before embedding.
    pub standardize: bool,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            rows: 30,
            delay: 1,
            rank: RankPolicy::HardThreshold,
            standardize: true,
        }
    }
}

impl EmbeddingConfig {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.rows < 2 {
            return Err(format!("embedding rows must be >= 2, got {}", self.rows));
        }
        if self.delay < 1 {
            return Err("embedding delay must be >= 1".into());
        }
        self.rank.validate()
    }

    /// Samples between a window's oldest and newest entry.
    pub fn lookback(&self) -> usize {
        (self.rows - 1) * self.delay
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoConfig {
    /// Channel schema file; relative paths resolve against the config file.
    pub schema: Option<PathBuf>,
    /// Resample interval in seconds; no resampling when absent.
    pub resample_interval: Option<f64>,
    pub fill_limit: usize,
    pub power_factor: Option<PowerFactorConfig>,
}

impl Default for IoConfig {
    fn default() -> Self {
        Self {
            schema: None,
            resample_interval: None,
            fill_limit: 5,
            power_factor: None,
        }
    }
}

/// Derives a power-factor channel from two angle channels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerFactorConfig {
    pub name: String,
    pub voltage_angle: String,
    pub current_angle: String,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SindyMode {
    /// One model per channel on its leading delay coordinates.
    #[default]
    Delay,
    /// One model over the raw channels jointly.
    Joint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SindyConfig {
    pub mode: SindyMode,
    /// Embedding for delay mode.
    pub embedding: EmbeddingConfig,
    /// Candidate library; defaults to degree 1 with constant in delay mode and
    /// degree 3 with pairwise trig differences in joint mode.
    pub library: Option<LibrarySpec>,
    /// STLSQ threshold on standardized coefficients; defaults to 0.02 in delay
    /// mode and 0.1 in joint mode.
    pub threshold: Option<f64>,
    pub ridge: f64,
    pub max_iter: usize,
    pub derivative_spacing: usize,
    pub standardize: bool,
    /// Interpolate over samples flagged by the detector before fitting.
    pub clean_training: bool,
    /// Forecast length in samples; the predict command defaults it to the test span.
    pub horizon: Option<usize>,
}

impl Default for SindyConfig {
    fn default() -> Self {
        Self {
            mode: SindyMode::Delay,
            embedding: EmbeddingConfig {
                rows: 100,
                delay: 40,
                rank: RankPolicy::HardThreshold,
                standardize: true,
            },
            library: None,
            threshold: None,
            ridge: 0.05,
            max_iter: 25,
            derivative_spacing: 10,
            standardize: true,
            clean_training: true,
            horizon: None,
        }
    }
}

impl SindyConfig {
    pub fn library(&self) -> LibrarySpec {
        self.library.clone().unwrap_or_else(|| match self.mode {
            SindyMode::Delay => LibrarySpec::polynomial(1, true),
            SindyMode::Joint => LibrarySpec::default(),
        })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold.unwrap_or(match self.mode {
            SindyMode::Delay => 0.02,
            SindyMode::Joint => 0.1,
        })
    }

    pub fn options(&self) -> SindyOptions {
        SindyOptions {
            threshold: self.threshold(),
            ridge: self.ridge,
            max_iter: self.max_iter,
            standardize: self.standardize,
            derivative_spacing: self.derivative_spacing,
        }
    }
}

/// Full pipeline configuration, loadable from TOML.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Channels to process; empty selects every magnitude and power-factor channel.
    pub channels: Vec<String>,
    pub io: IoConfig,
    pub embedding: EmbeddingConfig,
    pub havok: HavokOptions,
    pub detection: DetectionConfig,
    pub sindy: SindyConfig,
}

impl PipelineConfig {
    pub fn validate(&self) -> std::result::Result<(), String> {
        self.embedding.validate()?;
        self.sindy.embedding.validate()?;
        self.detection.validate().map_err(|e| e.to_string())?;
        self.sindy.options().validate().map_err(|e| e.to_string())?;
        if let Some(i) = self.io.resample_interval {
            if !(i > 0.0 && i.is_finite()) {
                return Err(format!("resample_interval must be positive, got {i}"));
            }
        }
        if !(self.havok.sparsify >= 0.0) {
            return Err(format!("havok.sparsify must be >= 0, got {}", self.havok.sparsify));
        }
        Ok(())
    }

    /// Configured channels, or the magnitude and power-factor channels of `frame`.
    pub fn resolve_channels(&self, frame: &MeasurementFrame) -> Vec<String> {
        if !self.channels.is_empty() {
            return self.channels.clone();
        }
        frame
            .channels()
            .iter()
            .filter(|c| {
                matches!(
                    c.spec.kind,
                    ChannelKind::VoltageMagnitude | ChannelKind::CurrentMagnitude | ChannelKind::PowerFactor
                )
            })
            .map(|c| c.spec.name.clone())
            .collect()
    }
}

/// Maps a window of standardized samples to the forcing coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Projector {
    pub channel: String,
    pub rows: usize,
    pub delay: usize,
    pub rank: usize,
    /// Channel standardization.
    pub center: f64,
    pub scale: f64,
    /// `u_r / σ_r`.
    pub weights: Vec<f64>,
}

impl Projector {
    pub fn lookback(&self) -> usize {
        (self.rows - 1) * self.delay
    }

    pub fn standardize(&self, x: f64) -> f64 {
        (x - self.center) / self.scale
    }

    /// `window` holds `lookback + 1` standardized samples, oldest first.
    pub fn project(&self, window: &[f64]) -> f64 {
        debug_assert_eq!(window.len(), self.lookback() + 1);
        let mut acc = 0.0;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w * window[i * self.delay];
        }
        acc
    }

    pub fn project_all(&self, z: &[f64]) -> Vec<f64> {
        let lb = self.lookback();
        if z.len() <= lb {
            return Vec::new();
        }
        (0..z.len() - lb).map(|j| self.project(&z[j..=j + lb])).collect()
    }
}

/// Flag decisions shared by the batch and streaming paths.
#[derive(Clone, Debug)]
pub enum FlagState {
    Fixed { mean: f64, std: f64, k: f64 },
    Rolling { stats: RollingStats, k: f64 },
}

impl FlagState {
    pub fn new(cfg: &DetectionConfig, forcing: &ForcingSignal) -> Self {
        match cfg.stats {
            StatsMode::Global => Self::Fixed {
                mean: forcing.mean(),
                std: forcing.std(),
                k: cfg.sigma_multiplier,
            },
            StatsMode::Rolling(w) => Self::Rolling {
                stats: RollingStats::new(w),
                k: cfg.sigma_multiplier,
            },
        }
    }

    pub fn step(&mut self, f: f64) -> bool {
        match self {
            Self::Fixed { mean, std, k } => *std > 0.0 && (f - *mean).abs() > *k * *std,
            Self::Rolling { stats, k } => stats.flag_and_push(f, *k),
        }
    }
}

/// Detection result for one channel.
#[derive(Clone, Debug)]
pub struct ChannelDetection {
    pub channel: String,
    pub rank: usize,
    pub spectrum: Vec<f64>,
    pub model: HavokModel,
    pub projector: Projector,
    /// Forcing per Hankel column, stamped at column tails.
    pub forcing: ForcingSignal,
    /// Flags per Hankel column.
    pub forcing_flags: Vec<bool>,
    /// Flags aligned to input samples.
    pub sample_flags: Vec<bool>,
    /// Anomaly score aligned to input samples (0 before the first full window).
    pub sample_scores: Vec<f64>,
    /// Events in input-sample coordinates.
    pub events: Vec<AnomalyEvent>,
}

impl ChannelDetection {
    pub fn lookback(&self) -> usize {
        self.projector.lookback()
    }

    /// Forcing aligned to input samples (NaN before the first full window).
    pub fn sample_forcing(&self) -> Vec<f64> {
        let lb = self.lookback();
        let mut out = vec![f64::NAN; lb];
        out.extend_from_slice(self.forcing.values());
        out
    }
}

/// Maps column runs (tail-indexed) to input-sample ranges `[a, max(a, b − lookback)]`.
pub fn column_runs_to_samples(runs: &[(usize, usize)], lookback: usize) -> Vec<(usize, usize)> {
    runs.iter()
        .map(|&(a, b)| {
            let (sa, sb) = (a + lookback, b + lookback);
            (sa, sa.max(sb.saturating_sub(lookback)))
        })
        .collect()
}

fn standardization(values: &[f64], on: bool) -> (f64, f64) {
    if !on {
        return (0.0, 1.0);
    }
    let (m, s) = linalg::mean_std(values);
    (m, if s > 0.0 { s } else { 1.0 })
}

/// Runs embedding, forced-linear fit and flagging on one channel.
pub fn detect_channel(
    name: &str,
    values: &[f64],
    timestamps: &[Timestamp],
    dt: f64,
    embedding_cfg: &EmbeddingConfig,
    havok_opts: &HavokOptions,
    detection: &DetectionConfig,
) -> Result<ChannelDetection> {
    detection.validate()?;
    embedding_cfg.validate().map_err(Error::Config)?;
    if values.len() != timestamps.len() {
        return Err(Error::Data(format!(
            "channel `{name}`: {} values for {} timestamps",
            values.len(),
            timestamps.len()
        )));
    }
    let (center, scale) = standardization(values, embedding_cfg.standardize);
    let z: Vec<f64> = values.iter().map(|x| (x - center) / scale).collect();
    let h = embedding::build_hankel(&z, embedding_cfg.rows, embedding_cfg.delay)?
        .with_clock(SampleClock::new(timestamps[0], dt));
    let factors = embedding::svd_hankel(&h)?;
    drop(h);
    let rank = factors.choose_rank(&embedding_cfg.rank).min(factors.s.len());
    let coords = embedding::delay_coordinates(&factors, rank)?;
    let dv = havok::estimate_derivatives(&coords)?;
    let model = havok::fit_forced_linear_with(&coords, &dv, havok_opts)?;

    let sr = factors.s[rank - 1];
    let weights: Vec<f64> = if sr > 0.0 {
        factors.u.column(rank - 1).iter().map(|u| u / sr).collect()
    } else {
        vec![0.0; factors.rows()]
    };
    let projector = Projector {
        channel: name.to_string(),
        rows: embedding_cfg.rows,
        delay: embedding_cfg.delay,
        rank,
        center,
        scale,
        weights,
    };
    let lb = projector.lookback();
    let forcing = ForcingSignal::new(projector.project_all(&z), timestamps[lb..].to_vec())?;
    if forcing.len() < 2 {
        return Err(Error::Data(format!("channel `{name}`: fewer than 2 forcing samples")));
    }
    if let StatsMode::Rolling(w) = detection.stats {
        if w > forcing.len() {
            return Err(anomaly::AnomalyError::WindowTooLarge {
                window: w,
                len: forcing.len(),
            }
            .into());
        }
    }
    let mut state = FlagState::new(detection, &forcing);
    let forcing_flags: Vec<bool> = forcing.values().iter().map(|&f| state.step(f)).collect();

    let n = values.len();
    let runs = anomaly::flagged_runs(&forcing_flags, detection.merge_gap);
    let mut sample_flags = vec![false; n];
    let mut events = Vec::new();
    let fv = forcing.values();
    for ((ca, cb), (sa, sb)) in runs.iter().zip(column_runs_to_samples(&runs, lb)) {
        sample_flags[sa..=sb].fill(true);
        let mut peak = *ca;
        for c in *ca..=*cb {
            if forcing_flags[c] && (fv[c] - forcing.mean()).abs() > (fv[peak] - forcing.mean()).abs() {
                peak = c;
            }
        }
        events.push(AnomalyEvent {
            channel: name.to_string(),
            start: timestamps[sa],
            end: timestamps[sb],
            peak_forcing: fv[peak],
            peak_index: peak + lb,
            start_index: sa,
            end_index: sb,
        });
    }
    let mut sample_scores = vec![0.0; lb];
    sample_scores.extend(anomaly::anomaly_score(&forcing));

    Ok(ChannelDetection {
        channel: name.to_string(),
        rank,
        spectrum: factors.full_spectrum.clone(),
        model,
        projector,
        forcing,
        forcing_flags,
        sample_flags,
        sample_scores,
        events,
    })
}

/// Detection over several channels plus their union.
#[derive(Clone, Debug)]
pub struct FrameDetection {
    pub timestamps: Vec<Timestamp>,
    pub channels: Vec<ChannelDetection>,
    pub flags: Vec<bool>,
    pub scores: Vec<f64>,
    pub events: Vec<AnomalyEvent>,
}

/// Applies resampling and derived channels from the io config.
pub fn prepare_frame(frame: MeasurementFrame, io: &IoConfig) -> Result<MeasurementFrame> {
    let mut frame = match io.resample_interval {
        Some(i) => crate::timeseries_io::resample(&frame, i, io.fill_limit)?,
        None => frame,
    };
    if let Some(pf) = &io.power_factor {
        if frame.channel(&pf.name).is_none() {
            let v = select_channel(&frame, &pf.voltage_angle)?;
            let i = select_channel(&frame, &pf.current_angle)?;
            let values = crate::timeseries_io::compute_power_factor(&v.values, &i.values)?;
            frame.push_channel(
                ChannelSpec::new(pf.name.clone(), ChannelKind::PowerFactor, Default::default(), ""),
                values,
            )?;
        }
    }
    Ok(frame)
}

fn frame_dt(frame: &MeasurementFrame) -> f64 {
    frame.nominal_interval().filter(|d| *d > 0.0).unwrap_or(1.0)
}

pub fn detect_frame(frame: &MeasurementFrame, channels: &[String], cfg: &PipelineConfig) -> Result<FrameDetection> {
    if channels.is_empty() {
        return Err(Error::Data("no channels selected".into()));
    }
    let dt = frame_dt(frame);
    let series = channels
        .iter()
        .map(|c| select_channel(frame, c))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let results: Vec<ChannelDetection> = series
        .par_iter()
        .map(|s| {
            detect_channel(
                &s.name,
                &s.values,
                &s.timestamps,
                dt,
                &cfg.embedding,
                &cfg.havok,
                &cfg.detection,
            )
        })
        .collect::<Result<_>>()?;

    let n = frame.len();
    let mut flags = vec![false; n];
    let mut scores = vec![0.0f64; n];
    for r in &results {
        for i in 0..n {
            flags[i] |= r.sample_flags[i];
            scores[i] = scores[i].max(r.sample_scores[i]);
        }
    }
    let ts = frame.timestamps();
    let events = anomaly::flagged_runs(&flags, cfg.detection.merge_gap)
        .into_iter()
        .map(|(a, b)| {
            let names: Vec<&str> = results
                .iter()
                .filter(|r| r.sample_flags[a..=b].iter().any(|&f| f))
                .map(|r| r.channel.as_str())
                .collect();
            let peak = (a..=b).fold(a, |p, i| if scores[i] > scores[p] { i } else { p });
            let peak_forcing = results
                .iter()
                .filter(|r| r.sample_flags[a..=b].iter().any(|&f| f))
                .max_by(|x, y| x.sample_scores[peak].total_cmp(&y.sample_scores[peak]))
                .map_or(f64::NAN, |r| r.sample_forcing()[peak]);
            AnomalyEvent {
                channel: names.join("+"),
                start: ts[a],
                end: ts[b],
                peak_forcing,
                peak_index: peak,
                start_index: a,
                end_index: b,
            }
        })
        .collect();
    Ok(FrameDetection {
        timestamps: ts.to_vec(),
        channels: results,
        flags,
        scores,
        events,
    })
}

/// Forecast of one channel and the model behind it.
#[derive(Clone, Debug)]
pub struct ChannelForecast {
    pub channel: String,
    pub predicted: Vec<f64>,
    pub model: SindyModel,
    /// Delay-coordinate rank used (delay mode only).
    pub rank: Option<usize>,
    /// Training samples replaced by interpolation before fitting.
    pub cleaned_samples: usize,
}

fn clean_series(values: &[f64], ts: &[Timestamp], dt: f64, cfg: &PipelineConfig) -> (Vec<f64>, usize) {
    let (_, s) = linalg::mean_std(values);
    if s == 0.0 {
        return (values.to_vec(), 0);
    }
    match detect_channel("train", values, ts, dt, &cfg.embedding, &cfg.havok, &cfg.detection) {
        Ok(det) => {
            let masked: Vec<f64> = values
                .iter()
                .zip(&det.sample_flags)
                .map(|(&v, &f)| if f { f64::NAN } else { v })
                .collect();
            let count = det.sample_flags.iter().filter(|&&f| f).count();
            match interpolate_missing(&masked, ts) {
                Some(v) => (v, count),
                None => (values.to_vec(), 0),
            }
        }
        Err(e) => {
            log::warn!("training-span detection skipped: {e}");
            (values.to_vec(), 0)
        }
    }
}

/// Fits a delay-coordinate model on `values` and forecasts `horizon` samples.
pub fn forecast_delay(
    name: &str,
    values: &[f64],
    dt: f64,
    horizon: usize,
    sc: &SindyConfig,
) -> Result<(Vec<f64>, SindyModel, usize)> {
    let emb = &sc.embedding;
    let (center, scale) = standardization(values, emb.standardize);
    let z: Vec<f64> = values.iter().map(|x| (x - center) / scale).collect();
    let h = embedding::build_hankel(&z, emb.rows, emb.delay)?;
    let f = embedding::svd_hankel(&h)?;
    drop(h);
    let mut r = f.choose_rank(&emb.rank).min(f.s.len());
    let p = f.v.nrows();
    // A coordinate whose dynamics threshold away entirely is treated as noise:
    // the rank is cut just below it and the fit repeated.
    let (y, model) = loop {
        let y = DMatrix::from_fn(p, r, |i, k| f.v[(i, k)] * f.s[k]);
        let names: Vec<String> = (0..r).map(|k| format!("{name}_y{k}")).collect();
        match sindy::fit(&y, &names, dt, &sc.library(), &sc.options()) {
            Ok(m) => break (y, m),
            Err(SindyError::NoActiveTerms { state }) => {
                let k = names.iter().position(|n| *n == state).unwrap_or(0);
                if k == 0 {
                    return Err(SindyError::NoActiveTerms { state }.into());
                }
                log::debug!("{name}: delay coordinate {k} has no active terms; rank {r} -> {k}");
                r = k;
            }
            Err(e) => return Err(e.into()),
        }
    };
    let y0: Vec<f64> = y.row(p - 1).iter().copied().collect();
    let traj = sindy::simulate(&model, &y0, horizon)?;
    let readout: Vec<f64> = (0..r).map(|k| f.u[(emb.rows - 1, k)]).collect();
    let predicted = (0..horizon)
        .map(|t| {
            let zt: f64 = (0..r).map(|k| readout[k] * traj[(t, k)]).sum();
            center + scale * zt
        })
        .collect();
    Ok((predicted, model, r))
}

/// Predicted frame, per-channel models and detector output on the forecast.
#[derive(Clone, Debug)]
pub struct PredictionOutcome {
    pub predicted: MeasurementFrame,
    pub forecasts: Vec<ChannelForecast>,
    pub events: Vec<AnomalyEvent>,
    pub detection: Option<FrameDetection>,
}

/// Fits SINDy on the training frame, simulates `horizon` steps past its end
/// and runs the detector on the forecast.
pub fn predict_and_detect(train: &MeasurementFrame, horizon: usize, cfg: &PipelineConfig) -> Result<PredictionOutcome> {
    let channels = cfg.resolve_channels(train);
    if channels.is_empty() {
        return Err(Error::Data("no channels selected".into()));
    }
    if train.is_empty() {
        return Err(Error::Data("empty training frame".into()));
    }
    let dt = frame_dt(train);
    let last = *train.timestamps().last().expect("non-empty");
    let step = (dt * 1e9).round() as i64;
    let ts: Vec<Timestamp> = (1..=horizon as i64).map(|k| last.add_nanos(k * step)).collect();
    let series = channels
        .iter()
        .map(|c| select_channel(train, c))
        .collect::<std::result::Result<Vec<_>, _>>()?;

    let forecasts: Vec<ChannelForecast> = match cfg.sindy.mode {
        SindyMode::Delay => series
            .par_iter()
            .map(|s| {
                let (values, cleaned) = if cfg.sindy.clean_training {
                    clean_series(&s.values, &s.timestamps, dt, cfg)
                } else {
                    (s.values.clone(), 0)
                };
                let (predicted, model, r) = forecast_delay(&s.name, &values, dt, horizon, &cfg.sindy)?;
                Ok(ChannelForecast {
                    channel: s.name.clone(),
                    predicted,
                    model,
                    rank: Some(r),
                    cleaned_samples: cleaned,
                })
            })
            .collect::<Result<_>>()?,
        SindyMode::Joint => {
            let n = train.len();
            let cleaned: Vec<(Vec<f64>, usize)> = series
                .iter()
                .map(|s| {
                    if cfg.sindy.clean_training {
                        clean_series(&s.values, &s.timestamps, dt, cfg)
                    } else {
                        (s.values.clone(), 0)
                    }
                })
                .collect();
            let states = DMatrix::from_fn(n, series.len(), |i, k| cleaned[k].0[i]);
            let model = sindy::fit(&states, &channels, dt, &cfg.sindy.library(), &cfg.sindy.options())?;
            let x0: Vec<f64> = states.row(n - 1).iter().copied().collect();
            let traj = sindy::simulate(&model, &x0, horizon)?;
            series
                .iter()
                .enumerate()
                .map(|(k, s)| ChannelForecast {
                    channel: s.name.clone(),
                    predicted: traj.column(k).iter().copied().collect(),
                    model: model.clone(),
                    rank: None,
                    cleaned_samples: cleaned[k].1,
                })
                .collect()
        }
    };

    let frame_channels = forecasts
        .iter()
        .map(|f| Channel {
            spec: train
                .channel(&f.channel)
                .map(|c| c.spec.clone())
                .unwrap_or_else(|| ChannelSpec::derived(f.channel.clone())),
            values: f.predicted.clone(),
        })
        .collect();
    let predicted = MeasurementFrame::new(ts, frame_channels)?;

    let min_len = embedding::min_series_len(cfg.embedding.rows, cfg.embedding.delay);
    let detection = if horizon >= min_len.max(cfg.embedding.lookback() + 2) {
        Some(detect_frame(&predicted, &channels, cfg)?)
    } else {
        if horizon > 0 {
            log::warn!("horizon {horizon} shorter than the detection window; no predicted events");
        }
        None
    };
    let events = detection.as_ref().map(|d| d.events.clone()).unwrap_or_default();
    Ok(PredictionOutcome {
        predicted,
        forecasts,
        events,
        detection,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{self, SynthSpec};

    #[test]
    fn run_mapping() {
        assert_eq!(column_runs_to_samples(&[(10, 40)], 29), vec![(39, 40)]);
        assert_eq!(column_runs_to_samples(&[(10, 12)], 29), vec![(39, 39)]);
    }

    #[test]
    fn projector_matches_svd_coordinate() {
        let x: Vec<f64> = (0..600)
            .map(|k| (k as f64 * 0.05).sin() + 0.3 * (k as f64 * 0.21).cos())
            .collect();
        let ts: Vec<Timestamp> = (0..600).map(|k| Timestamp::from_nanos(k * 1_000_000_000)).collect();
        let cfg = EmbeddingConfig {
            rank: RankPolicy::Fixed { rank: 4 },
            ..EmbeddingConfig::default()
        };
        let det = detect_channel(
            "x",
            &x,
            &ts,
            1.0,
            &cfg,
            &HavokOptions::default(),
            &DetectionConfig::default(),
        )
        .unwrap();
        let (m, s) = linalg::mean_std(&x);
        let z: Vec<f64> = x.iter().map(|v| (v - m) / s).collect();
        let f = embedding::svd_hankel(&embedding::build_hankel(&z, 30, 1).unwrap()).unwrap();
        for j in [0, 100, 570] {
            assert!((det.forcing.values()[j] - f.v[(j, 3)]).abs() < 1e-9);
        }
        assert_eq!(det.forcing.timestamps()[0], ts[29]);
    }

    #[test]
    fn detects_injected_events() {
        let spec = SynthSpec {
            n: 20_000,
            events: synth::default_events(20_000, 3, 30),
            ..SynthSpec::default()
        };
        let out = synth::synth_pmu(&spec).unwrap();
        let cfg = PipelineConfig::default();
        let channels = cfg.resolve_channels(&out.frame);
        assert_eq!(channels, vec!["VA_mag", "IA_mag", "PF"]);
        let det = detect_frame(&out.frame, &channels, &cfg).unwrap();
        for e in &spec.events {
            assert!(
                det.events.iter().any(|d| d.start_index.abs_diff(e.onset) <= 2),
                "missed onset {}: {:?}",
                e.onset,
                det.events
            );
        }
    }

    #[test]
    fn horizon_zero_is_empty() {
        let spec = SynthSpec {
            n: 6_000,
            events: vec![],
            ..SynthSpec::default()
        };
        let out = synth::synth_pmu(&spec).unwrap();
        let cfg = PipelineConfig {
            channels: vec!["IA_mag".into()],
            ..PipelineConfig::default()
        };
        let res = predict_and_detect(&out.frame, 0, &cfg).unwrap();
        assert!(res.predicted.is_empty());
        assert!(res.events.is_empty());
    }

    #[test]
    fn zero_variance_channel_has_no_terms() {
        let frame = MeasurementFrame::uniform(
            Timestamp::from_nanos(0),
            1.0,
            vec![Channel {
                spec: ChannelSpec::new("flat", ChannelKind::VoltageMagnitude, Default::default(), "pu"),
                values: vec![1.0; 6_000],
            }],
        )
        .unwrap();
        let err = predict_and_detect(&frame, 100, &PipelineConfig::default()).unwrap_err();
        assert!(
            matches!(err, Error::Sindy(sindy::SindyError::NoActiveTerms { .. })),
            "{err}"
        );
    }
}
