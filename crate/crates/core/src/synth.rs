//! Seeded synthetic systems with labeled events.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::timeseries_io::{
    compute_power_factor, normalize_angle, Channel, ChannelKind, ChannelSpec, FrameError, MeasurementFrame, Phase,
    Timestamp,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("OverlappingEvents: events {first} and {second} intersect")]
    OverlappingEvents { first: usize, second: usize },
    #[error("event {index} is invalid: {reason}")]
    InvalidEvent { index: usize, reason: String },
    #[error("invalid synth parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

/// Integrates the Lorenz system with classical RK4; returns `n` states
/// starting with `x0`.
pub fn lorenz(sigma: f64, rho: f64, beta: f64, x0: [f64; 3], dt: f64, n: usize) -> Result<Vec<[f64; 3]>, SynthError> {
    if !(dt > 0.0 && dt <= 0.05) {
        return Err(SynthError::InvalidParameter(format!(
            "dt must lie in (0, 0.05], got {dt}"
        )));
    }
    if n == 0 {
        return Err(SynthError::InvalidParameter("n must be >= 1".into()));
    }
    let f = |s: [f64; 3]| {
        [
            sigma * (s[1] - s[0]),
            s[0] * (rho - s[2]) - s[1],
            s[0] * s[1] - beta * s[2],
        ]
    };
    let add = |a: [f64; 3], b: [f64; 3], h: f64| [a[0] + h * b[0], a[1] + h * b[1], a[2] + h * b[2]];
    let mut out = Vec::with_capacity(n);
    let mut x = x0;
    out.push(x);
    for _ in 1..n {
        let k1 = f(x);
        let k2 = f(add(x, k1, dt / 2.0));
        let k3 = f(add(x, k2, dt / 2.0));
        let k4 = f(add(x, k3, dt));
        for i in 0..3 {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out.push(x);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    VoltageSag,
    CurrentInrush,
    CapacitorStep,
    TapStep,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthEventSpec {
    pub kind: EventKind,
    pub onset: usize,
    pub duration: usize,
    /// Relative per-unit change of the primary affected quantity.
    pub magnitude: f64,
}

/// One sinusoidal component: amplitude, period (seconds) and phase (radians).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub amplitude: f64,
    pub period: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Profile {
    pub mean: f64,
    #[serde(default)]
    pub harmonics: Vec<Harmonic>,
}

impl Profile {
    pub fn at(&self, t: f64) -> f64 {
        self.mean
            + self
                .harmonics
                .iter()
                .map(|h| h.amplitude * (2.0 * PI * t / h.period + h.phase).sin())
                .sum::<f64>()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaseProfiles {
    /// Voltage magnitude, pu.
    pub voltage: Profile,
    /// Current magnitude, pu.
    pub current: Profile,
    pub power_factor: Profile,
    /// Voltage angle at t = 0, degrees.
    pub voltage_angle_start: f64,
    /// Voltage angle drift, degrees per second.
    pub voltage_angle_drift: f64,
}

impl Default for BaseProfiles {
    fn default() -> Self {
        Self {
            voltage: Profile {
                mean: 1.0,
                harmonics: vec![
                    Harmonic {
                        amplitude: 0.02,
                        period: 14_400.0,
                        phase: 0.3,
                    },
                    Harmonic {
                        amplitude: 0.01,
                        period: 3_600.0,
                        phase: 1.1,
                    },
                    Harmonic {
                        amplitude: 0.005,
                        period: 900.0,
                        phase: 2.0,
                    },
                ],
            },
            current: Profile {
                mean: 0.6,
                harmonics: vec![
                    Harmonic {
                        amplitude: 0.25,
                        period: 3_600.0,
                        phase: 0.0,
                    },
                    Harmonic {
                        amplitude: 0.12,
                        period: 1_200.0,
                        phase: 0.7,
                    },
                    Harmonic {
                        amplitude: 0.06,
                        period: 500.0,
                        phase: 1.9,
                    },
                ],
            },
            power_factor: Profile {
                mean: 0.92,
                harmonics: vec![
                    Harmonic {
                        amplitude: 0.03,
                        period: 7_200.0,
                        phase: 0.4,
                    },
                    Harmonic {
                        amplitude: 0.01,
                        period: 1_800.0,
                        phase: 2.2,
                    },
                ],
            },
            voltage_angle_start: 10.0,
            voltage_angle_drift: 0.05,
        }
    }
}

/// Full generator input, loadable from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n: usize,
    /// Sampling interval, seconds.
    pub interval: f64,
    pub start: Timestamp,
    pub noise_std: f64,
    pub seed: u64,
    pub profiles: BaseProfiles,
    pub events: Vec<SynthEventSpec>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        let n = 100_000;
        Self {
            n,
            interval: 1.0,
            start: Timestamp::parse("2024-01-01T00:00:00Z").expect("literal"),
            noise_std: 0.01,
            seed: 42,
            profiles: BaseProfiles::default(),
            events: default_events(n, 10, 30),
        }
    }
}

impl SynthSpec {
    pub fn from_toml_str(text: &str) -> Result<Self, SynthError> {
        toml::from_str(text).map_err(|e| SynthError::InvalidParameter(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("spec serializes")
    }
}

/// `count` events evenly spread over `n` samples, cycling through inrush,
/// capacitor and tap signatures.
pub fn default_events(n: usize, count: usize, duration: usize) -> Vec<SynthEventSpec> {
    let kinds = [
        (EventKind::CurrentInrush, 1.0),
        (EventKind::CapacitorStep, 0.08),
        (EventKind::TapStep, -0.08),
    ];
    let spacing = n / (count + 1);
    (0..count)
        .map(|k| {
            let (kind, magnitude) = kinds[k % kinds.len()];
            SynthEventSpec {
                kind,
                onset: spacing * (k + 1) + (k * 37) % (spacing / 4).max(1),
                duration,
                magnitude,
            }
        })
        .collect()
}

/// Multiplicative effect of an event on (V, I) and additive effect on pf.
fn signature(kind: EventKind, m: f64) -> (f64, f64, f64) {
    match kind {
        EventKind::VoltageSag => (1.0 - m.abs(), 1.0, 0.0),
        EventKind::CurrentInrush => (1.0 - 0.1 * m, 1.0 + m, -0.2 * m),
        EventKind::CapacitorStep => (1.0 + m, 1.0 + 5.0 * m, 2.0 * m),
        EventKind::TapStep => (1.0 + m, 1.0, 0.0),
    }
}

pub fn validate_events(events: &[SynthEventSpec], n: usize) -> Result<(), SynthError> {
    for (i, e) in events.iter().enumerate() {
        let reason = if e.duration == 0 {
            Some("duration must be >= 1".to_string())
        } else if e.onset.checked_add(e.duration).is_none_or(|end| end > n) {
            Some(format!(
                "onset {} + duration {} exceeds length {n}",
                e.onset, e.duration
            ))
        } else if e.magnitude == 0.0 || !e.magnitude.is_finite() {
            Some("magnitude must be finite and non-zero".to_string())
        } else {
            None
        };
        if let Some(reason) = reason {
            return Err(SynthError::InvalidEvent { index: i, reason });
        }
    }
    let mut order: Vec<usize> = (0..events.len()).collect();
    order.sort_by_key(|&i| events[i].onset);
    for w in order.windows(2) {
        let (a, b) = (&events[w[0]], &events[w[1]]);
        if a.onset + a.duration > b.onset {
            return Err(SynthError::OverlappingEvents {
                first: w[0].min(w[1]),
                second: w[0].max(w[1]),
            });
        }
    }
    Ok(())
}

/// Generated frame with its truth labels.
#[derive(Clone, Debug)]
pub struct SynthOutput {
    pub frame: MeasurementFrame,
    pub truth: Vec<bool>,
}

impl SynthOutput {
    pub fn truth_column(&self) -> Vec<f64> {
        self.truth.iter().map(|&t| if t { 1.0 } else { 0.0 }).collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), FrameError> {
        let truth = self.truth_column();
        self.frame.write_csv_with(out, &[("truth", &truth)])
    }
}

/// Channel names produced by [`synth_pmu`].
pub const V_MAG: &str = "VA_mag";
pub const I_MAG: &str = "IA_mag";
pub const V_ANG: &str = "VA_ang";
pub const I_ANG: &str = "IA_ang";
pub const PF: &str = "PF";

/// Quasi-periodic V/I/pf channels with events superimposed. The current
/// angle is derived from the voltage angle and the power factor, so the PF
/// column equals `compute_power_factor(VA_ang, IA_ang)`.
pub fn synth_pmu(spec: &SynthSpec) -> Result<SynthOutput, SynthError> {
    if spec.n == 0 {
        return Err(SynthError::InvalidParameter("n must be >= 1".into()));
    }
    if !(spec.interval > 0.0) {
        return Err(SynthError::InvalidParameter(format!(
            "interval must be positive, got {}",
            spec.interval
        )));
    }
    if !(spec.noise_std >= 0.0) {
        return Err(SynthError::InvalidParameter(format!(
            "noise_std must be >= 0, got {}",
            spec.noise_std
        )));
    }
    validate_events(&spec.events, spec.n)?;
    let n = spec.n;
    let p = &spec.profiles;
    let mut v = Vec::with_capacity(n);
    let mut i = Vec::with_capacity(n);
    let mut pf = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 * spec.interval;
        v.push(p.voltage.at(t));
        i.push(p.current.at(t));
        pf.push(p.power_factor.at(t));
    }
    let mut truth = vec![false; n];
    for e in &spec.events {
        let (fv, fi, dpf) = signature(e.kind, e.magnitude);
        for k in e.onset..e.onset + e.duration {
            v[k] *= fv;
            i[k] *= fi;
            pf[k] += dpf;
            truth[k] = true;
        }
    }
    if spec.noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let noise = Normal::new(0.0, spec.noise_std).map_err(|e| SynthError::InvalidParameter(e.to_string()))?;
        for k in 0..n {
            v[k] += noise.sample(&mut rng);
            i[k] += noise.sample(&mut rng);
            pf[k] += noise.sample(&mut rng);
        }
    }
    let va: Vec<f64> = (0..n)
        .map(|k| normalize_angle(p.voltage_angle_start + p.voltage_angle_drift * k as f64 * spec.interval))
        .collect();
    let ia: Vec<f64> = (0..n)
        .map(|k| normalize_angle(va[k] - pf[k].clamp(-1.0, 1.0).acos().to_degrees()))
        .collect();
    let pf = compute_power_factor(&va, &ia)?;
    let ch = |name: &str, kind, units: &str, values| Channel {
        spec: ChannelSpec::new(name, kind, Phase::A, units),
        values,
    };
    let frame = MeasurementFrame::uniform(
        spec.start,
        spec.interval,
        vec![
            ch(V_MAG, ChannelKind::VoltageMagnitude, "pu", v),
            ch(I_MAG, ChannelKind::CurrentMagnitude, "pu", i),
            ch(V_ANG, ChannelKind::VoltageAngle, "deg", va),
            ch(I_ANG, ChannelKind::CurrentAngle, "deg", ia),
            Channel {
                spec: ChannelSpec::new(PF, ChannelKind::PowerFactor, Phase::A, ""),
                values: pf,
            },
        ],
    )?;
    Ok(SynthOutput { frame, truth })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries_io::{parse_pmu_csv, ChannelSchema};

    #[test]
    fn lorenz_chaotic_regime_is_bounded() {
        let tr = lorenz(10.0, 28.0, 8.0 / 3.0, [-8.0, 8.0, 27.0], 0.001, 30_000).unwrap();
        for s in &tr[5_000..] {
            assert!(s[0].abs() < 25.0);
            assert!((s[2] - 25.0).abs() < 25.0);
        }
        // absorbing ball x² + y² + (z − σ − ρ)² ≤ R² for the canonical parameters
        for s in &tr {
            assert!(s[0].powi(2) + s[1].powi(2) + (s[2] - 38.0).powi(2) < 60.0f64.powi(2));
        }
    }

    #[test]
    fn lorenz_subcritical_decays() {
        let tr = lorenz(10.0, 0.5, 8.0 / 3.0, [1.0, 1.0, 1.0], 0.01, 5_001).unwrap();
        let s = tr.last().unwrap();
        assert!((s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).sqrt() < 1e-3);
        assert!(lorenz(10.0, 28.0, 8.0 / 3.0, [1.0, 1.0, 1.0], 0.0, 10).is_err());
    }

    fn clean(events: Vec<SynthEventSpec>) -> SynthSpec {
        SynthSpec {
            n: 2_000,
            noise_std: 0.0,
            events,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn clean_baseline_matches_profiles() {
        let spec = clean(vec![]);
        let out = synth_pmu(&spec).unwrap();
        assert!(out.truth.iter().all(|t| !t));
        let v = &out.frame.channel(V_MAG).unwrap().values;
        let i = &out.frame.channel(I_MAG).unwrap().values;
        let pf = &out.frame.channel(PF).unwrap().values;
        for k in 0..spec.n {
            let t = k as f64;
            assert_eq!(v[k], spec.profiles.voltage.at(t));
            assert_eq!(i[k], spec.profiles.current.at(t));
            assert!((pf[k] - spec.profiles.power_factor.at(t)).abs() < 1e-9);
        }
    }

    #[test]
    fn tap_step_shifts_voltage_only() {
        let ev = SynthEventSpec {
            kind: EventKind::TapStep,
            onset: 500,
            duration: 60,
            magnitude: -0.02,
        };
        let base = synth_pmu(&SynthSpec {
            noise_std: 0.001,
            ..clean(vec![])
        })
        .unwrap();
        let out = synth_pmu(&SynthSpec {
            noise_std: 0.001,
            ..clean(vec![ev])
        })
        .unwrap();
        let mean = |f: &MeasurementFrame, c: &str| f.channel(c).unwrap().values[500..560].iter().sum::<f64>() / 60.0;
        let ratio = mean(&out.frame, V_MAG) / mean(&base.frame, V_MAG);
        assert!((ratio - 0.98).abs() < 1e-3, "ratio {ratio}");
        assert!((mean(&out.frame, I_MAG) - mean(&base.frame, I_MAG)).abs() < 1e-3);
        assert_eq!(out.truth.iter().filter(|&&t| t).count(), 60);
        assert!(out.truth[500] && out.truth[559] && !out.truth[560] && !out.truth[499]);
    }

    #[test]
    fn deterministic_under_seed() {
        let spec = SynthSpec {
            n: 5_000,
            events: default_events(5_000, 3, 30),
            ..SynthSpec::default()
        };
        let mut a = Vec::new();
        let mut b = Vec::new();
        synth_pmu(&spec).unwrap().write_csv(&mut a).unwrap();
        synth_pmu(&spec).unwrap().write_csv(&mut b).unwrap();
        assert_eq!(a, b);
        let other = SynthSpec {
            seed: 7,
            ..spec.clone()
        };
        let mut c = Vec::new();
        synth_pmu(&other).unwrap().write_csv(&mut c).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn overlapping_and_out_of_bounds_rejected() {
        let e = |onset, duration| SynthEventSpec {
            kind: EventKind::CapacitorStep,
            onset,
            duration,
            magnitude: 0.05,
        };
        assert!(matches!(
            synth_pmu(&clean(vec![e(100, 50), e(120, 10)])),
            Err(SynthError::OverlappingEvents { .. })
        ));
        assert!(matches!(
            synth_pmu(&clean(vec![e(1990, 50)])),
            Err(SynthError::InvalidEvent { .. })
        ));
        let mut zero = e(10, 5);
        zero.magnitude = 0.0;
        assert!(matches!(
            synth_pmu(&clean(vec![zero])),
            Err(SynthError::InvalidEvent { .. })
        ));
    }

    #[test]
    fn truth_matches_injected_windows() {
        let spec = SynthSpec {
            n: 20_000,
            events: default_events(20_000, 6, 25),
            ..SynthSpec::default()
        };
        let out = synth_pmu(&spec).unwrap();
        let mut expected = vec![false; spec.n];
        for e in &spec.events {
            expected[e.onset..e.onset + e.duration].fill(true);
        }
        assert_eq!(out.truth, expected);
    }

    #[test]
    fn csv_round_trip() {
        let spec = SynthSpec {
            n: 3_000,
            events: default_events(3_000, 2, 30),
            ..SynthSpec::default()
        };
        let out = synth_pmu(&spec).unwrap();
        let mut buf = Vec::new();
        out.write_csv(&mut buf).unwrap();
        let parsed = parse_pmu_csv(buf.as_slice(), &ChannelSchema::from_frame(&out.frame)).unwrap();
        assert!(parsed.bitwise_eq(&out.frame));
    }

    #[test]
    fn spec_toml_round_trip() {
        let spec = SynthSpec::default();
        assert_eq!(SynthSpec::from_toml_str(&spec.to_toml_string()).unwrap(), spec);
    }
}
