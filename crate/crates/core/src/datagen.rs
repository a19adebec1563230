//! Seeded synthetic streams.
//!
//! Every generator is a pure function of its parameters; all randomness comes
//! from [`SeededRng`] (see `rng` for the fixed algorithm).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::types::RawRecord;

/// Linear trend plus two sinusoids plus unit Gaussian noise, with a random
/// subset of records lifted by a uniform offset and labelled anomalous.
#[derive(Debug, Clone, PartialEq)]
pub struct SynParams {
    pub samples: usize,
    pub slope: f64,
    /// Periods as fractions of `samples`.
    pub period_fractions: [f64; 2],
    pub amplitudes: [f64; 2],
    pub noise_std: f64,
    pub anomaly_fraction: f64,
    pub anomaly_offset: [f64; 2],
    pub seed: u64,
}

impl Default for SynParams {
    fn default() -> Self {
        Self {
            samples: 10_000,
            slope: 2e-3,
            period_fractions: [0.2, 0.3],
            amplitudes: [8.0, 4.0],
            noise_std: 1.0,
            anomaly_fraction: 0.10,
            anomaly_offset: [3.0, 6.0],
            seed: 0,
        }
    }
}

impl SynParams {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::config("samples must be positive"));
        }
        if !(self.anomaly_fraction > 0.0 && self.anomaly_fraction < 1.0) {
            return Err(Error::config(format!(
                "anomaly fraction must be in (0, 1), got {}",
                self.anomaly_fraction
            )));
        }
        if self.period_fractions.iter().any(|p| !(*p > 0.0)) {
            return Err(Error::config("periods must be positive"));
        }
        if self.amplitudes.iter().any(|a| !(*a >= 0.0)) {
            return Err(Error::config("amplitudes must be non-negative"));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::config("noise std must be non-negative"));
        }
        let [lo, hi] = self.anomaly_offset;
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::config("anomaly offset interval must satisfy lo <= hi"));
        }
        if !self.slope.is_finite() {
            return Err(Error::config("slope must be finite"));
        }
        Ok(())
    }

    pub fn anomaly_count(&self) -> usize {
        (self.anomaly_fraction * self.samples as f64).round() as usize
    }

    /// Noise-free signal at step `t`.
    pub fn signal(&self, t: usize) -> f64 {
        let t = t as f64;
        let n = self.samples as f64;
        let mut v = self.slope * t;
        for (&frac, &amp) in self.period_fractions.iter().zip(&self.amplitudes) {
            v += amp * (std::f64::consts::TAU * t / (frac * n)).sin();
        }
        v
    }
}

pub fn generate_syn(params: &SynParams) -> Result<Vec<RawRecord>> {
    params.validate()?;
    let mut rng = SeededRng::new(params.seed);
    let mut values: Vec<f64> = (0..params.samples)
        .map(|t| params.signal(t) + params.noise_std * rng.normal())
        .collect();
    let mut labels = vec![false; params.samples];
    for i in rng.sample_indices(params.samples, params.anomaly_count()) {
        values[i] += rng.uniform_in(params.anomaly_offset[0], params.anomaly_offset[1]);
        labels[i] = true;
    }
    Ok(values
        .into_iter()
        .zip(labels)
        .enumerate()
        .map(|(t, (v, l))| RawRecord { index: t, values: vec![v], label: Some(l) })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    Constant,
    Sine,
    FrequencyChange,
    MeanShift,
    ContinuousDrift,
}

/// One piece of the drift scenario over `[start, end)`.
///
/// Noise-free value:
///
/// ```text
/// level + (level_end - level) * (t - start) / (end - start) + amplitude * sin(2 pi t / period)
/// ```
///
/// The sine uses the global step `t`, so consecutive sine segments join
/// without a phase jump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub kind: SegmentKind,
    pub start: usize,
    pub end: usize,
    #[serde(default)]
    pub level: f64,
    /// Level reached at `end`; defaults to `level`.
    #[serde(default)]
    pub level_end: Option<f64>,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default = "default_period")]
    pub period: f64,
    /// Label the first `onset_label_width` records when this segment changes the signal.
    #[serde(default)]
    pub label_onset: bool,
}

fn default_period() -> f64 {
    1000.0
}

impl Segment {
    fn end_level(&self) -> f64 {
        self.level_end.unwrap_or(self.level)
    }

    pub fn signal(&self, t: usize) -> f64 {
        let span = (self.end - self.start) as f64;
        let frac = (t - self.start) as f64 / span;
        let mut v = self.level + (self.end_level() - self.level) * frac;
        if self.amplitude != 0.0 {
            v += self.amplitude * (std::f64::consts::TAU * t as f64 / self.period).sin();
        }
        v
    }

    /// Size of the break this segment introduces relative to `prev`.
    fn change_from(&self, prev: &Segment) -> f64 {
        let mut c = (self.level - prev.end_level()).abs() + (self.amplitude - prev.amplitude).abs();
        if self.amplitude != 0.0 && self.period != prev.period {
            c += self.amplitude.abs();
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointAnomaly {
    pub at: usize,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftScenarioParams {
    pub version: u32,
    pub length: usize,
    pub noise_std: f64,
    pub onset_label_width: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(rename = "segment")]
    pub segments: Vec<Segment>,
    #[serde(default, rename = "point_anomaly")]
    pub point_anomalies: Vec<PointAnomaly>,
}

impl Default for DriftScenarioParams {
    /// Identical to `scenarios/default_drift.toml`.
    fn default() -> Self {
        let seg = |kind, start, end, level: f64, amplitude, period, label_onset| Segment {
            kind,
            start,
            end,
            level,
            level_end: None,
            amplitude,
            period,
            label_onset,
        };
        use SegmentKind::*;
        Self {
            version: 1,
            length: 20_000,
            noise_std: 0.1,
            onset_label_width: 10,
            seed: 0,
            segments: vec![
                seg(Constant, 0, 1000, 0.0, 0.0, 1000.0, false),
                seg(Sine, 1000, 5000, 0.0, 1.0, 1000.0, true),
                seg(FrequencyChange, 5000, 10_000, 0.0, 1.0, 250.0, true),
                seg(Sine, 10_000, 12_500, 0.0, 1.0, 1000.0, true),
                seg(MeanShift, 12_500, 15_000, 3.0, 0.0, 1000.0, true),
                Segment { level_end: Some(0.0), ..seg(ContinuousDrift, 15_000, 17_500, 3.0, 0.0, 1000.0, false) },
                seg(Constant, 17_500, 20_000, 0.0, 0.0, 1000.0, false),
            ],
            point_anomalies: vec![PointAnomaly { at: 19_000, magnitude: 5.0 }],
        }
    }
}

impl DriftScenarioParams {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let params: Self = toml::from_str(text).map_err(|e| Error::Parse { row: None, message: format!("scenario spec: {e}") })?;
        params.validate()?;
        Ok(params)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario parameters serialize")
    }

    /// Segments must tile `[0, length)` in order.
    pub fn validate(&self) -> Result<()> {
        if self.version != 1 {
            return Err(Error::config(format!("unsupported scenario version {}", self.version)));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(Error::config("noise_std must be non-negative"));
        }
        let mut cursor = 0;
        for (i, s) in self.segments.iter().enumerate() {
            if s.start != cursor {
                return Err(Error::config(format!(
                    "segment {i} starts at {}, expected {cursor}",
                    s.start
                )));
            }
            if s.end <= s.start {
                return Err(Error::config(format!("segment {i} is empty")));
            }
            if s.amplitude != 0.0 && !(s.period > 0.0) {
                return Err(Error::config(format!("segment {i} needs a positive period")));
            }
            let finite = [s.level, s.end_level(), s.amplitude, s.period];
            if finite.iter().any(|v| !v.is_finite()) {
                return Err(Error::config(format!("segment {i} has non-finite parameters")));
            }
            cursor = s.end;
        }
        if cursor != self.length {
            return Err(Error::config(format!(
                "segments cover [0, {cursor}) but length is {}",
                self.length
            )));
        }
        if let Some(p) = self.point_anomalies.iter().find(|p| p.at >= self.length) {
            return Err(Error::config(format!("point anomaly at {} is past the end", p.at)));
        }
        Ok(())
    }

    /// Same shape stretched to `length`, boundaries and periods scaled.
    pub fn scaled(&self, length: usize) -> Self {
        let f = length as f64 / self.length as f64;
        let at = |t: usize| ((t as f64 * f).round() as usize).min(length);
        let mut out = self.clone();
        out.length = length;
        for s in &mut out.segments {
            s.start = at(s.start);
            s.end = at(s.end);
            s.period *= f;
        }
        if let Some(last) = out.segments.last_mut() {
            last.end = length;
        }
        for p in &mut out.point_anomalies {
            p.at = at(p.at).min(length.saturating_sub(1));
        }
        out
    }
}

pub fn generate_drift_scenario(params: &DriftScenarioParams) -> Result<Vec<RawRecord>> {
    params.validate()?;
    let mut rng = SeededRng::new(params.seed);
    let mut values = Vec::with_capacity(params.length);
    let mut labels = vec![false; params.length];
    for (i, seg) in params.segments.iter().enumerate() {
        for t in seg.start..seg.end {
            values.push(seg.signal(t) + params.noise_std * rng.normal());
        }
        if seg.label_onset && i > 0 && seg.change_from(&params.segments[i - 1]) > 0.0 {
            let stop = (seg.start + params.onset_label_width).min(seg.end);
            labels[seg.start..stop].fill(true);
        }
    }
    for p in &params.point_anomalies {
        if p.magnitude != 0.0 {
            values[p.at] += p.magnitude;
            labels[p.at] = true;
        }
    }
    Ok(values
        .into_iter()
        .zip(labels)
        .enumerate()
        .map(|(t, (v, l))| RawRecord { index: t, values: vec![v], label: Some(l) })
        .collect())
}

/// Records injected from an earlier point of the drift, labelled anomalous.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaleAnomalies {
    pub fraction: f64,
    /// Anomaly at `t` is drawn around `mu_{t - lag}`.
    pub lag: usize,
}

/// `x_t ~ N(t alpha e_1, sigma^2 I)` in `R^dim`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianDriftParams {
    pub dim: usize,
    pub sigma: f64,
    pub alpha: f64,
    pub samples: usize,
    pub seed: u64,
    pub stale: Option<StaleAnomalies>,
}

impl GaussianDriftParams {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::config("dimension must be positive"));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::config(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if let Some(s) = self.stale {
            if !(s.fraction > 0.0 && s.fraction < 1.0) {
                return Err(Error::config("stale anomaly fraction must be in (0, 1)"));
            }
            if s.lag == 0 {
                return Err(Error::config("stale anomaly lag must be positive"));
            }
        }
        Ok(())
    }

    pub fn mean_at(&self, t: usize) -> Vec<f64> {
        let mut mu = vec![0.0; self.dim];
        mu[0] = t as f64 * self.alpha;
        mu
    }
}

/// Without `stale`, every record is labelled normal. With it, a seeded subset
/// of steps `t >= lag` (excluding the first `lag`) is replaced by draws around
/// `mu_{t - lag}` and labelled anomalous.
pub fn generate_drifting_gaussian(params: &GaussianDriftParams) -> Result<Vec<RawRecord>> {
    params.validate()?;
    let mut rng = SeededRng::new(params.seed);
    let mut stale_at = vec![false; params.samples];
    if let Some(s) = params.stale {
        let eligible = params.samples.saturating_sub(s.lag);
        let count = (s.fraction * eligible as f64).round() as usize;
        for i in rng.sample_indices(eligible, count) {
            stale_at[i + s.lag] = true;
        }
    }
    let lag = params.stale.map_or(0, |s| s.lag);
    Ok((0..params.samples)
        .map(|t| {
            let centre = if stale_at[t] { t - lag } else { t };
            let mut x: Vec<f64> = (0..params.dim).map(|_| params.sigma * rng.normal()).collect();
            x[0] += centre as f64 * params.alpha;
            RawRecord {
                index: t,
                values: x,
                label: Some(stale_at[t]),
            }
        })
        .collect())
}

/// Piecewise-constant mean in `R^dim` that jumps by `shift` along a fresh random
/// unit direction every `segment_len` steps, with Gaussian noise and a random
/// subset of point anomalies offset by `anomaly_offset` along a random direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanShiftParams {
    pub dim: usize,
    pub samples: usize,
    pub segment_len: usize,
    pub shift: f64,
    pub noise_std: f64,
    pub anomaly_fraction: f64,
    pub anomaly_offset: f64,
    pub seed: u64,
}

impl Default for MeanShiftParams {
    fn default() -> Self {
        Self {
            dim: 4,
            samples: 5000,
            segment_len: 500,
            shift: 3.0,
            noise_std: 1.0,
            anomaly_fraction: 0.05,
            anomaly_offset: 6.0,
            seed: 0,
        }
    }
}

pub fn generate_mean_shift(params: &MeanShiftParams) -> Result<Vec<RawRecord>> {
    if params.dim == 0 || params.samples == 0 || params.segment_len == 0 {
        return Err(Error::config("dim, samples and segment length must be positive"));
    }
    if !(params.anomaly_fraction > 0.0 && params.anomaly_fraction < 1.0) {
        return Err(Error::config("anomaly fraction must be in (0, 1)"));
    }
    if !(params.noise_std > 0.0) {
        return Err(Error::config("noise std must be positive"));
    }
    let mut rng = SeededRng::new(params.seed);
    let direction = |rng: &mut SeededRng| {
        let mut v: Vec<f64> = (0..params.dim).map(|_| rng.normal()).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        v.iter_mut().for_each(|x| *x /= n);
        v
    };
    let count = (params.anomaly_fraction * params.samples as f64).round() as usize;
    let mut anomalous = vec![false; params.samples];
    for i in rng.sample_indices(params.samples, count) {
        anomalous[i] = true;
    }
    let mut mean = vec![0.0; params.dim];
    let mut out = Vec::with_capacity(params.samples);
    for (t, &is_anomaly) in anomalous.iter().enumerate() {
        if t > 0 && t % params.segment_len == 0 {
            let u = direction(&mut rng);
            mean.iter_mut().zip(&u).for_each(|(m, u)| *m += params.shift * u);
        }
        let mut x: Vec<f64> = mean.iter().map(|m| m + params.noise_std * rng.normal()).collect();
        if is_anomaly {
            let u = direction(&mut rng);
            x.iter_mut().zip(&u).for_each(|(x, u)| *x += params.anomaly_offset * u);
        }
        out.push(RawRecord { index: t, values: x, label: Some(is_anomaly) });
    }
    Ok(out)
}
