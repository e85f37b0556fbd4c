//! Field waveform synthesis and correlation estimation.
//!
//! Produces every field used by the experiment: deterministic trapezoidal
//! pulse pairs, sinusoids, and the two stochastic AWG recipes (exponentially
//! correlated noise from a filtered Gaussian table, and 20-point-averaged
//! white noise), plus sample-autocorrelation estimation and a tabulated
//! transmission-line response filter.  Fields are in mV/m, times in seconds.

use std::f64::consts::TAU;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::rng::table_rng;

/// AWG clock period: 100 MS/s.
pub const SAMPLE_PERIOD_S: f64 = 10e-9;
/// Small-field bound: |f| must stay far below the static bias field.
pub const MAX_FIELD_MV_M: f64 = 1000.0;

/// Trapezoidal pulse geometry: 100 ns linear edges, 1 us between edge
/// midpoints, second pulse 8.5 us after the first.
pub const PULSE_EDGE_S: f64 = 100e-9;
pub const PULSE_TOP_S: f64 = 900e-9;
pub const PULSE_SEPARATION_S: f64 = 8.5e-6;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("field amplitude {0:.1} mV/m exceeds the ±{MAX_FIELD_MV_M:.0} mV/m synthesis bound")]
    AmplitudeOutOfRange(f64),
    #[error("degenerate exponential filter: need n_samples >= 2*j0 and j0 >= 1 (n={n}, j0={j0})")]
    DegenerateFilter { n: usize, j0: usize },
    #[error("white generator needs n_samples >= 40 (got {0})")]
    TooFewSamples(usize),
    #[error("waveform table is empty or identically zero")]
    DegenerateTable,
    #[error("max_lag must be positive and below half the table duration")]
    LagOutOfRange,
    #[error("line-response grid must cover 0 Hz to the Nyquist frequency {0:.3e} Hz")]
    TransferRange(f64),
    #[error("waveform file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A stored AWG sample table.  `samples` are dimensionless in [-1, 1];
/// `scale` converts one unit sample to mV/m at playback.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveformTable {
    pub samples: Vec<f64>,
    pub sample_period: f64,
    pub scale: f64,
    pub loop_playback: bool,
}

impl WaveformTable {
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 * self.sample_period
    }

    /// Copy with a new playback scale (mV/m per unit sample).
    pub fn with_scale(&self, scale: f64) -> Self {
        WaveformTable { scale, ..self.clone() }
    }

    /// Population standard deviation of the stored samples.
    pub fn sigma_s(&self) -> f64 {
        let n = self.samples.len() as f64;
        let mean = self.samples.iter().sum::<f64>() / n;
        (self.samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n).sqrt()
    }

    /// Two-column text export: header lines, then `time_ns value` rows using
    /// shortest round-trip decimal form (reload is bit-exact).
    pub fn save(&self, path: &Path) -> Result<(), FieldError> {
        let mut out = BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "# sample_period_ns={}", self.sample_period * 1e9)?;
        writeln!(out, "# scale_mV_per_m={}", self.scale)?;
        writeln!(out, "# loop={}", self.loop_playback)?;
        for (i, s) in self.samples.iter().enumerate() {
            writeln!(out, "{} {}", i as f64 * self.sample_period * 1e9, s)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, FieldError> {
        let file = std::fs::File::open(path)?;
        let mut sample_period = None;
        let mut scale = None;
        let mut loop_playback = None;
        let mut samples = Vec::new();
        for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let bad = |what: &str| FieldError::Format(format!("line {}: {what}", lineno + 1));
            if let Some(rest) = line.strip_prefix('#') {
                let (key, value) = rest
                    .trim()
                    .split_once('=')
                    .ok_or_else(|| bad("malformed header"))?;
                let value = value.trim();
                match key.trim() {
                    "sample_period_ns" => {
                        let ns: f64 = value.parse().map_err(|_| bad("bad sample period"))?;
                        sample_period = Some(ns * 1e-9);
                    }
                    "scale_mV_per_m" => {
                        scale = Some(value.parse().map_err(|_| bad("bad scale"))?)
                    }
                    "loop" => {
                        loop_playback = Some(value.parse().map_err(|_| bad("bad loop flag"))?)
                    }
                    _ => return Err(bad("unknown header key")),
                }
                continue;
            }
            let (_, v) = line
                .split_once(char::is_whitespace)
                .ok_or_else(|| bad("expected two columns"))?;
            let v: f64 = v.trim().parse().map_err(|_| bad("bad sample value"))?;
            if v.abs() > 1.0 + 1e-12 {
                return Err(bad("sample outside [-1, 1]"));
            }
            samples.push(v);
        }
        if samples.is_empty() {
            return Err(FieldError::DegenerateTable);
        }
        Ok(WaveformTable {
            samples,
            sample_period: sample_period
                .ok_or_else(|| FieldError::Format("missing sample_period_ns header".into()))?,
            scale: scale.ok_or_else(|| FieldError::Format("missing scale_mV_per_m header".into()))?,
            loop_playback: loop_playback
                .ok_or_else(|| FieldError::Format("missing loop header".into()))?,
        })
    }
}

/// Normalized sample autocorrelation of a table, plus its variance.
#[derive(Clone, Debug)]
pub struct CorrelationEstimate {
    pub lags: Vec<f64>,
    pub g1: Vec<f64>,
    pub sigma_s2: f64,
}

fn normalize_max(mut samples: Vec<f64>) -> Result<Vec<f64>, FieldError> {
    let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak == 0.0 || !peak.is_finite() {
        return Err(FieldError::DegenerateTable);
    }
    for s in &mut samples {
        *s /= peak;
    }
    Ok(samples)
}

fn gaussian_table(n: usize, seed: u64, generator_index: u32) -> Vec<f64> {
    let mut rng = table_rng(seed, generator_index);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Circular convolution of `input` with the one-sided kernel e^{-j/j0},
/// j = 0..n-1, evaluated by FFT.  Exposed for oracle tests against the
/// closed-form geometric sum.
pub fn exp_filter_circular(input: &[f64], j0: f64) -> Vec<f64> {
    let n = input.len();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    let ifft = planner.plan_fft_inverse(n);

    let mut x: Vec<Complex64> = input.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut k: Vec<Complex64> = (0..n)
        .map(|j| Complex64::new((-(j as f64) / j0).exp(), 0.0))
        .collect();
    fft.process(&mut x);
    fft.process(&mut k);
    for (xi, ki) in x.iter_mut().zip(&k) {
        *xi *= ki;
    }
    ifft.process(&mut x);
    let norm = 1.0 / n as f64;
    x.iter().map(|v| v.re * norm).collect()
}

/// Circular trailing moving average over `width` samples.  Exposed for the
/// constant-input identity test.
pub fn sliding_mean_circular(input: &[f64], width: usize) -> Vec<f64> {
    let n = input.len();
    assert!(width >= 1 && width <= n);
    (0..n)
        .map(|i| {
            let sum: f64 = (0..width).map(|j| input[(i + n - j) % n]).sum();
            sum / width as f64
        })
        .collect()
}

/// Exponentially correlated table: unit Gaussians filtered by e^{-j/j0}
/// with circular indexing, peak-normalized.  Correlation time is j0 samples.
pub fn gen_exp_correlated(n_samples: usize, j0: usize, seed: u64) -> Result<WaveformTable, FieldError> {
    if j0 < 1 || n_samples < 2 * j0 {
        return Err(FieldError::DegenerateFilter { n: n_samples, j0 });
    }
    let white = gaussian_table(n_samples, seed, 0);
    let samples = normalize_max(exp_filter_circular(&white, j0 as f64))?;
    Ok(WaveformTable {
        samples,
        sample_period: SAMPLE_PERIOD_S,
        scale: 1.0,
        loop_playback: true,
    })
}

/// White table with a 200 ns correlation floor: unit Gaussians smoothed by a
/// 20-point circular moving average, peak-normalized.
pub fn gen_white_20pt(n_samples: usize, seed: u64) -> Result<WaveformTable, FieldError> {
    if n_samples < 40 {
        return Err(FieldError::TooFewSamples(n_samples));
    }
    let white = gaussian_table(n_samples, seed, 1);
    let samples = normalize_max(sliding_mean_circular(&white, 20))?;
    Ok(WaveformTable {
        samples,
        sample_period: SAMPLE_PERIOD_S,
        scale: 1.0,
        loop_playback: true,
    })
}

/// A field f(t) in mV/m.  Closed-form variants are defined on all of t;
/// `Sampled` plays a table with zero-order hold, wrapping when the table
/// loops and reading 0 outside it otherwise.
#[derive(Clone, Debug)]
pub enum FieldTrace {
    Zero,
    Constant { value: f64 },
    Step { before: f64, after: f64, at: f64 },
    PulsePair { amplitude: f64, start: f64 },
    Sine { amplitude: f64, freq: f64, phase: f64 },
    Sampled { table: Arc<WaveformTable>, offset: f64 },
}

fn check_amplitude(a: f64) -> Result<(), FieldError> {
    if a.abs() > MAX_FIELD_MV_M || !a.is_finite() {
        return Err(FieldError::AmplitudeOutOfRange(a));
    }
    Ok(())
}

fn trapezoid(u: f64, amplitude: f64) -> f64 {
    let fall_start = PULSE_EDGE_S + PULSE_TOP_S;
    if u <= 0.0 || u >= fall_start + PULSE_EDGE_S {
        0.0
    } else if u < PULSE_EDGE_S {
        amplitude * u / PULSE_EDGE_S
    } else if u <= fall_start {
        amplitude
    } else {
        amplitude * (fall_start + PULSE_EDGE_S - u) / PULSE_EDGE_S
    }
}

impl FieldTrace {
    pub fn constant(value: f64) -> Result<Self, FieldError> {
        check_amplitude(value)?;
        Ok(FieldTrace::Constant { value })
    }

    pub fn step(before: f64, after: f64, at: f64) -> Result<Self, FieldError> {
        check_amplitude(before)?;
        check_amplitude(after)?;
        Ok(FieldTrace::Step { before, after, at })
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            FieldTrace::Zero => 0.0,
            FieldTrace::Constant { value } => *value,
            FieldTrace::Step { before, after, at } => {
                if t < *at {
                    *before
                } else {
                    *after
                }
            }
            FieldTrace::PulsePair { amplitude, start } => {
                trapezoid(t - start, *amplitude)
                    + trapezoid(t - start - PULSE_SEPARATION_S, *amplitude)
            }
            FieldTrace::Sine { amplitude, freq, phase } => {
                amplitude * (TAU * freq * t + phase).sin()
            }
            FieldTrace::Sampled { table, offset } => {
                let pos = (t + offset) / table.sample_period;
                let n = table.samples.len() as f64;
                let idx = if table.loop_playback {
                    pos.floor().rem_euclid(n)
                } else if pos < 0.0 || pos >= n {
                    return 0.0;
                } else {
                    pos.floor()
                };
                table.scale * table.samples[idx as usize]
            }
        }
    }

    /// If the trace is constant on [a, b], its value there.
    pub fn constant_over(&self, a: f64, b: f64) -> Option<f64> {
        match self {
            FieldTrace::Zero => Some(0.0),
            FieldTrace::Constant { value } => Some(*value),
            FieldTrace::Step { before, after, at } => {
                if b <= *at {
                    Some(*before)
                } else if a >= *at {
                    Some(*after)
                } else {
                    None
                }
            }
            FieldTrace::Sine { amplitude, .. } => (*amplitude == 0.0).then_some(0.0),
            FieldTrace::PulsePair { amplitude, start } => {
                // Constant regions: before, between plateau edges, the
                // inter-pulse floor, and after.
                let fall_end = PULSE_EDGE_S + PULSE_TOP_S + PULSE_EDGE_S;
                let regions = [
                    (f64::NEG_INFINITY, *start, 0.0),
                    (start + PULSE_EDGE_S, start + PULSE_EDGE_S + PULSE_TOP_S, *amplitude),
                    (start + fall_end, start + PULSE_SEPARATION_S, 0.0),
                    (
                        start + PULSE_SEPARATION_S + PULSE_EDGE_S,
                        start + PULSE_SEPARATION_S + PULSE_EDGE_S + PULSE_TOP_S,
                        *amplitude,
                    ),
                    (start + PULSE_SEPARATION_S + fall_end, f64::INFINITY, 0.0),
                ];
                regions
                    .iter()
                    .find(|(lo, hi, _)| a >= *lo && b <= *hi)
                    .map(|&(_, _, v)| v)
            }
            FieldTrace::Sampled { table, offset } => {
                if !table.loop_playback {
                    let (lo, hi) = (-offset, table.duration() - offset);
                    if b <= lo || a >= hi {
                        return Some(0.0);
                    }
                    if a < lo || b > hi {
                        return None;
                    }
                }
                let dt = table.sample_period;
                let ia = ((a + offset) / dt).floor();
                // Half-open on the right: a boundary endpoint belongs to the
                // preceding sample.
                let rb = (b + offset) / dt;
                let ib = if rb == rb.floor() { rb - 1.0 } else { rb.floor() };
                if ia == ib {
                    let n = table.samples.len() as f64;
                    Some(table.scale * table.samples[ia.rem_euclid(n) as usize])
                } else {
                    None
                }
            }
        }
    }

    /// Whether the trace is defined over all of [a, b].  Only a non-looping
    /// sample table has a finite domain.
    pub fn covers(&self, a: f64, b: f64) -> bool {
        match self {
            FieldTrace::Sampled { table, offset } if !table.loop_playback => {
                a + offset >= 0.0 && b + offset <= table.duration()
            }
            _ => true,
        }
    }

    /// Times strictly inside (a, b) where the trace has a kink or jump,
    /// ascending.  Between consecutive breakpoints the trace is smooth.
    pub fn breakpoints(&self, a: f64, b: f64) -> Vec<f64> {
        let mut pts = match self {
            FieldTrace::Zero | FieldTrace::Constant { .. } | FieldTrace::Sine { .. } => vec![],
            FieldTrace::Step { at, .. } => vec![*at],
            FieldTrace::PulsePair { start, .. } => {
                let fall_start = PULSE_EDGE_S + PULSE_TOP_S;
                let mut v = Vec::with_capacity(8);
                for pulse in [*start, start + PULSE_SEPARATION_S] {
                    v.extend([
                        pulse,
                        pulse + PULSE_EDGE_S,
                        pulse + fall_start,
                        pulse + fall_start + PULSE_EDGE_S,
                    ]);
                }
                v
            }
            FieldTrace::Sampled { table, offset } => {
                let dt = table.sample_period;
                let mut v = Vec::new();
                let mut k = ((a + offset) / dt).floor() + 1.0;
                while k * dt - offset < b {
                    v.push(k * dt - offset);
                    k += 1.0;
                }
                v
            }
        };
        pts.retain(|t| *t > a && *t < b);
        pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
        pts
    }
}

/// Two trapezoidal pulses of height `f0` starting at `t_start` and
/// `t_start` + 8.5 us.
pub fn pulse_pair(f0: f64, t_start: f64) -> Result<FieldTrace, FieldError> {
    check_amplitude(f0)?;
    Ok(FieldTrace::PulsePair { amplitude: f0, start: t_start })
}

/// f(t) = A sin(2πνt + φ).
pub fn sine(amplitude: f64, nu: f64, phase: f64) -> Result<FieldTrace, FieldError> {
    check_amplitude(amplitude)?;
    Ok(FieldTrace::Sine { amplitude, freq: nu, phase })
}

/// Sine with a phase drawn uniformly from [0, 2π): the asynchronous-source
/// model where each shot sees an independent phase.
pub fn sine_random_phase(
    amplitude: f64,
    nu: f64,
    rng: &mut impl Rng,
) -> Result<FieldTrace, FieldError> {
    sine(amplitude, nu, rng.gen_range(0.0..TAU))
}

/// Play a table from `trigger_offset` into it at t = 0.
pub fn sample_trace(table: &Arc<WaveformTable>, trigger_offset: f64) -> Result<FieldTrace, FieldError> {
    let peak = table.samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    check_amplitude(table.scale * peak)?;
    Ok(FieldTrace::Sampled { table: Arc::clone(table), offset: trigger_offset })
}

/// Circular sample autocorrelation, mean-subtracted and normalized so that
/// g1[0] = 1 exactly.  Mean subtraction makes this the covariance-based
/// estimator of G¹; the generators are zero-mean by construction.
pub fn autocorrelation(w: &WaveformTable, max_lag: f64) -> Result<CorrelationEstimate, FieldError> {
    let n = w.samples.len();
    let max_k = (max_lag / w.sample_period).floor() as usize;
    if max_lag <= 0.0 || max_lag >= w.duration() / 2.0 {
        return Err(FieldError::LagOutOfRange);
    }
    let mean = w.samples.iter().sum::<f64>() / n as f64;
    let d: Vec<f64> = w.samples.iter().map(|s| s - mean).collect();
    let cov = |k: usize| -> f64 {
        (0..n).map(|i| d[i] * d[(i + k) % n]).sum::<f64>() / n as f64
    };
    let c0 = cov(0);
    if c0 == 0.0 {
        return Err(FieldError::DegenerateTable);
    }
    let mut lags = Vec::with_capacity(max_k + 1);
    let mut g1 = Vec::with_capacity(max_k + 1);
    for k in 0..=max_k {
        lags.push(k as f64 * w.sample_period);
        g1.push(cov(k) / c0);
    }
    Ok(CorrelationEstimate { lags, g1, sigma_s2: c0 })
}

/// Tabulated complex line response λ(ν)/λ(0), linearly interpolated on its
/// frequency grid; negative frequencies use the conjugate (real impulse
/// response).
#[derive(Clone, Debug)]
pub struct LineResponse {
    freqs: Vec<f64>,
    gains: Vec<Complex64>,
}

impl LineResponse {
    pub fn new(mut points: Vec<(f64, Complex64)>) -> Result<Self, FieldError> {
        if points.is_empty() {
            return Err(FieldError::Format("empty transfer table".into()));
        }
        points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        if points.windows(2).any(|w| w[0].0 == w[1].0) || points[0].0 < 0.0 {
            return Err(FieldError::Format(
                "transfer grid must be strictly ascending and non-negative".into(),
            ));
        }
        let (freqs, gains) = points.into_iter().unzip();
        Ok(LineResponse { freqs, gains })
    }

    pub fn identity(nyquist: f64) -> Self {
        LineResponse {
            freqs: vec![0.0, nyquist],
            gains: vec![Complex64::new(1.0, 0.0); 2],
        }
    }

    pub fn max_freq(&self) -> f64 {
        *self.freqs.last().unwrap()
    }

    pub fn gain_at(&self, nu: f64) -> Complex64 {
        if nu < 0.0 {
            return self.gain_at(-nu).conj();
        }
        match self.freqs.binary_search_by(|f| f.partial_cmp(&nu).unwrap()) {
            Ok(i) => self.gains[i],
            Err(0) => self.gains[0],
            Err(i) if i == self.freqs.len() => *self.gains.last().unwrap(),
            Err(i) => {
                let (f0, f1) = (self.freqs[i - 1], self.freqs[i]);
                let w = (nu - f0) / (f1 - f0);
                self.gains[i - 1] * (1.0 - w) + self.gains[i] * w
            }
        }
    }
}

/// Filter a table through the line response in the frequency domain
/// (circular convolution).  Scale is preserved; no renormalization.
pub fn apply_line_response(w: &WaveformTable, transfer: &LineResponse) -> Result<WaveformTable, FieldError> {
    let n = w.samples.len();
    if n == 0 {
        return Err(FieldError::DegenerateTable);
    }
    let nyquist = 0.5 / w.sample_period;
    if transfer.max_freq() < nyquist {
        return Err(FieldError::TransferRange(nyquist));
    }
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    let ifft = planner.plan_fft_inverse(n);
    let mut x: Vec<Complex64> = w.samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft.process(&mut x);
    let df = 1.0 / (n as f64 * w.sample_period);
    for (k, xk) in x.iter_mut().enumerate() {
        let nu = if 2 * k <= n {
            k as f64 * df
        } else {
            (k as f64 - n as f64) * df
        };
        *xk *= transfer.gain_at(nu);
    }
    ifft.process(&mut x);
    let norm = 1.0 / n as f64;
    Ok(WaveformTable {
        samples: x.iter().map(|v| v.re * norm).collect(),
        ..w.clone()
    })
}
