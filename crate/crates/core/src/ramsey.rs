//! The differential Ramsey measurement: experiment configuration, per-shot
//! phase accumulation (three model tiers), stochastic field noise, fringe
//! fitting, and the scan operations behind each figure.

use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fieldgen::{pulse_pair, FieldError, FieldTrace, WaveformTable};
use crate::rng::shot_rng;
use crate::sequence::{default_sequence, PulseSpec, SequenceError, Timeline};
use crate::spin_ladder::{
    coherent_state, DipoleModel, LadderError, LadderEvolver, Polarization, RfDrive,
};
use crate::window::DipoleWindow;

/// Field step used by the gain calibration protocol, mV/m.
pub const CALIBRATION_DELTA_F: f64 = 75.2;

/// Pair delay used for probe-pulse scans, seconds.
pub const PULSE_SCAN_TAU: f64 = 9.0e-6;

#[derive(Debug, Error)]
pub enum RamseyError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error(transparent)]
    Ladder(#[from] LadderError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("timeline: {0}")]
    Timeline(String),
    #[error("perturbation trace does not cover the sequence window")]
    TraceWindow,
}

/// Which physics tier generates the differential phase.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimPath {
    /// Closed-form phase from the field trace (instant samples or
    /// dipole-window averages, per `instant_sampling`).
    Analytic,
    /// Schrödinger evolution of the driven spin ladders.
    FullDynamics,
}

/// Experiment parameters. Times are seconds, angles radians, fields mV/m
/// unless a field says otherwise. A config file is a TOML table with exactly
/// these field names.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Principal quantum number of the upper circular state.
    pub n: u32,
    /// Static bias field, V/cm.
    pub f0: f64,
    /// rf drive frequency, Hz.
    pub f_rf: f64,
    /// Calibrated differential phase gain, rad per mV/m.
    pub alpha: f64,
    /// Bare fringe contrast.
    pub c0: f64,
    /// Fringe center probability.
    pub p0: f64,
    /// σ⁺ out-pulse polar excursion angle, rad.
    pub theta1: f64,
    /// σ⁻ out-pulse polar excursion angle, rad.
    pub theta2: f64,
    /// Single σ⁺ rf pulse length, s.
    pub t_rf_plus: f64,
    /// Single σ⁻ rf pulse length, s.
    pub t_rf_minus: f64,
    /// Gap between the two σ⁺ pulses, s.
    pub delta_t_plus: f64,
    /// Gap between the two σ⁻ pulses, s.
    pub delta_t_minus: f64,
    /// Center of the σ⁺ pair, s.
    pub t_plus: f64,
    /// First microwave π/2 pulse start, s.
    pub mw1_start: f64,
    /// Microwave π/2 pulse length, s.
    pub mw_duration: f64,
    /// Second microwave π/2 pulse start, s.
    pub mw2_start: f64,
    /// Total dipole-on time entering the quantum-limit comparison, s.
    pub dipole_on_time: f64,
    /// Ladder Stark slope ∂ω/∂F, rad/s per V/m.
    pub domega_df: f64,
    /// Static detuning of the σ⁺ drive from ladder resonance, rad/s.
    pub detuning_plus: f64,
    /// Static detuning of the σ⁻ drive from ladder resonance, rad/s.
    pub detuning_minus: f64,
    /// Base seed for all stochastic sampling.
    pub seed: u64,
    pub path: SimPath,
    /// Analytic path only: read the field at the pair centers instead of
    /// averaging it over the dipole windows.
    pub instant_sampling: bool,
    /// Full dynamics only: include the off-resonant transient of the lower
    /// (n−2) reference ladder in the accumulated phase.
    pub reference_transient: bool,
    /// Integrator step bound for full dynamics, s (at most 1 ns).
    pub dt: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n: 51,
            f0: 2.345,
            f_rf: 230e6,
            alpha: 0.0193,
            c0: 0.63,
            p0: 0.43,
            theta1: 144f64.to_radians(),
            theta2: 137f64.to_radians(),
            t_rf_plus: 102e-9,
            t_rf_minus: 97e-9,
            delta_t_plus: 0.0,
            delta_t_minus: 12e-9,
            t_plus: 9.8e-6,
            mw1_start: 9.0e-6,
            mw_duration: 0.5e-6,
            mw2_start: 35.0e-6,
            dipole_on_time: 206e-9,
            // 98 MHz per V/cm, expressed per V/m.
            domega_df: std::f64::consts::TAU * 980e3,
            detuning_plus: 0.0,
            detuning_minus: 0.0,
            seed: 2026,
            path: SimPath::Analytic,
            instant_sampling: false,
            reference_transient: false,
            dt: 1e-9,
        }
    }
}

impl ExperimentConfig {
    // Negated comparisons so that NaN fails every check.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), RamseyError> {
        let err = |msg: String| Err(RamseyError::Config(msg));
        if self.n < 3 {
            return err(format!("n: need at least 3 ladder levels, got {}", self.n));
        }
        if !(self.f0 > 0.0) {
            return err(format!("f0: bias field must be positive, got {}", self.f0));
        }
        if !(self.f_rf > 0.0) {
            return err(format!("f_rf: must be positive, got {}", self.f_rf));
        }
        if !(self.alpha > 0.0) {
            return err(format!("alpha: must be positive, got {}", self.alpha));
        }
        if !(self.c0 > 0.0 && self.c0 <= 1.0) {
            return err(format!("c0: must lie in (0, 1], got {}", self.c0));
        }
        if !(0.0..=1.0).contains(&self.p0)
            || self.p0 + 0.5 * self.c0 > 1.0
            || self.p0 - 0.5 * self.c0 < 0.0
        {
            return err(format!(
                "p0: fringe p0 ± c0/2 must stay inside [0, 1], got p0 = {}, c0 = {}",
                self.p0, self.c0
            ));
        }
        for (name, theta) in [("theta1", self.theta1), ("theta2", self.theta2)] {
            if !(theta > 0.0 && theta < std::f64::consts::PI) {
                return err(format!("{name}: excursion angle must lie in (0, π), got {theta}"));
            }
        }
        for (name, t) in [
            ("t_rf_plus", self.t_rf_plus),
            ("t_rf_minus", self.t_rf_minus),
            ("mw_duration", self.mw_duration),
            ("dipole_on_time", self.dipole_on_time),
        ] {
            if !(t > 0.0) {
                return err(format!("{name}: must be positive, got {t}"));
            }
        }
        for (name, t) in [
            ("delta_t_plus", self.delta_t_plus),
            ("delta_t_minus", self.delta_t_minus),
            ("mw1_start", self.mw1_start),
        ] {
            if !(t >= 0.0) {
                return err(format!("{name}: must be non-negative, got {t}"));
            }
        }
        if !(self.mw2_start > self.mw1_start + self.mw_duration) {
            return err(format!(
                "mw2_start: second π/2 pulse must follow the first, got {} vs {} + {}",
                self.mw2_start, self.mw1_start, self.mw_duration
            ));
        }
        if !(self.domega_df > 0.0) {
            return err(format!("domega_df: must be positive, got {}", self.domega_df));
        }
        if !(self.dt > 0.0 && self.dt <= 1e-9) {
            return err(format!("dt: integrator step must lie in (0, 1e-9], got {}", self.dt));
        }
        if self.reference_transient && self.n < 5 {
            return err(format!(
                "reference_transient: needs n ≥ 5 for an n−2 reference ladder, got n = {}",
                self.n
            ));
        }
        Ok(())
    }
}

/// Shot-to-shot stochastic field models.
#[derive(Clone, Debug)]
pub enum NoiseModel {
    /// No perturbing field.
    None,
    /// Fresh Gaussian field values for the σ⁺ and σ⁻ windows each shot:
    /// standard deviation `sigma_f` (mV/m), correlation coefficient `g1`.
    PairGaussian { sigma_f: f64, g1: f64 },
    /// Loop playback of a synthesized waveform with a uniformly random
    /// trigger offset per shot, rescaled so the field standard deviation is
    /// `sigma_f` (mV/m).
    Table {
        table: Arc<WaveformTable>,
        sigma_f: f64,
    },
    /// Sinusoid of amplitude mV/m; `phase: None` draws a fresh uniform
    /// phase each shot.
    Sine {
        amplitude: f64,
        freq: f64,
        phase: Option<f64>,
    },
}

enum PreparedNoise {
    None,
    PairGaussian { sigma_f: f64, g1: f64 },
    Table { table: Arc<WaveformTable> },
    Sine {
        amplitude: f64,
        freq: f64,
        phase: Option<f64>,
    },
}

impl PreparedNoise {
    // Negated comparisons so that NaN fails every check.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    fn new(noise: &NoiseModel) -> Result<Self, RamseyError> {
        match noise {
            NoiseModel::None => Ok(PreparedNoise::None),
            NoiseModel::PairGaussian { sigma_f, g1 } => {
                if !(*sigma_f >= 0.0 && sigma_f.is_finite()) {
                    return Err(RamseyError::Config(format!(
                        "noise sigma_f: must be non-negative, got {sigma_f}"
                    )));
                }
                if !(-1.0..=1.0).contains(g1) {
                    return Err(RamseyError::Config(format!(
                        "noise g1: correlation must lie in [−1, 1], got {g1}"
                    )));
                }
                Ok(PreparedNoise::PairGaussian {
                    sigma_f: *sigma_f,
                    g1: *g1,
                })
            }
            NoiseModel::Table { table, sigma_f } => {
                if !table.loop_playback {
                    return Err(RamseyError::Config(
                        "noise table: loop playback is required for random triggers".into(),
                    ));
                }
                let sigma_s = table.sigma_s();
                if !(sigma_s > 0.0) {
                    return Err(RamseyError::Config(
                        "noise table: sample standard deviation is zero".into(),
                    ));
                }
                let scale = sigma_f / sigma_s;
                let peak = table.samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
                if peak * scale.abs() > crate::fieldgen::MAX_FIELD_MV_M {
                    return Err(RamseyError::Config(format!(
                        "noise table: rescaled peak {:.1} mV/m exceeds the synthesis bound",
                        peak * scale.abs()
                    )));
                }
                Ok(PreparedNoise::Table {
                    table: Arc::new(table.with_scale(scale)),
                })
            }
            NoiseModel::Sine {
                amplitude,
                freq,
                phase,
            } => {
                if amplitude.abs() > crate::fieldgen::MAX_FIELD_MV_M || !amplitude.is_finite() {
                    return Err(RamseyError::Config(format!(
                        "noise amplitude: {amplitude} mV/m exceeds the synthesis bound"
                    )));
                }
                Ok(PreparedNoise::Sine {
                    amplitude: *amplitude,
                    freq: *freq,
                    phase: *phase,
                })
            }
        }
    }

    fn is_none(&self) -> bool {
        matches!(self, PreparedNoise::None)
    }

    fn realize(&self, split: f64, rng: &mut ChaCha8Rng) -> FieldTrace {
        match self {
            PreparedNoise::None => FieldTrace::Zero,
            PreparedNoise::PairGaussian { sigma_f, g1 } => {
                let z1: f64 = rng.sample(StandardNormal);
                let z2: f64 = rng.sample(StandardNormal);
                let f_plus = sigma_f * z1;
                let f_minus = sigma_f * (g1 * z1 + (1.0 - g1 * g1).sqrt() * z2);
                FieldTrace::Step {
                    before: f_plus,
                    after: f_minus,
                    at: split,
                }
            }
            PreparedNoise::Table { table } => FieldTrace::Sampled {
                table: Arc::clone(table),
                offset: rng.gen_range(0.0..table.duration()),
            },
            PreparedNoise::Sine {
                amplitude,
                freq,
                phase,
            } => FieldTrace::Sine {
                amplitude: *amplitude,
                freq: *freq,
                phase: phase
                    .unwrap_or_else(|| rng.gen_range(0.0..std::f64::consts::TAU)),
            },
        }
    }
}

/// ∫ w(t) f(t) dt, exact for piecewise-constant traces and sinusoids,
/// composite Simpson (≤ 1 ns panels) between kinks otherwise.
fn window_field_integral(w: &DipoleWindow, trace: &FieldTrace) -> f64 {
    let (a, b) = w.span();
    if let Some(c) = trace.constant_over(a, b) {
        return c * w.total_mass();
    }
    if let FieldTrace::Sine {
        amplitude,
        freq,
        phase,
    } = trace
    {
        // ∫ w(t) A sin(2πνt + φ) dt = A · Im[e^{iφ} W(ν)]
        let wt = w.transform(*freq);
        return *amplitude * (Complex64::from_polar(1.0, *phase) * wt).im;
    }
    let mut knots = vec![a, b];
    knots.extend(w.knots());
    knots.extend(trace.breakpoints(a, b));
    knots.retain(|t| *t >= a && *t <= b);
    knots.sort_by(f64::total_cmp);
    knots.dedup_by(|x, y| (*x - *y).abs() < 1e-15);
    let mut total = 0.0;
    for piece in knots.windows(2) {
        let (lo, hi) = (piece[0], piece[1]);
        if hi - lo < 1e-15 {
            continue;
        }
        total += if let Some(c) = trace.constant_over(lo, hi) {
            c * w.mass_between(lo, hi)
        } else {
            simpson(|t| w.value(t) * trace.value(t), lo, hi)
        };
    }
    total
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let mut m = (((b - a) / 1e-9).ceil() as usize).clamp(4, 4096);
    m += m % 2;
    let h = (b - a) / m as f64;
    let mut s = f(a) + f(b);
    for i in 1..m {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum KernelMode {
    /// Φ = α (f(t⁺) − f(t⁻)).
    Instant,
    /// Φ = α (⟨f⟩₊ − ⟨f⟩₋), window-averaged field per pair.
    Window,
    /// Φ = Σ ± (J d/ħ) ∫ w f dt: the physical gain of the dipole-window
    /// model, without normalizing to the configured α (calibration only).
    RawWindow,
    /// Schrödinger evolution of the driven ladders.
    Full,
}

struct PairKernel {
    pol: Polarization,
    sign: f64,
    center: f64,
    window: DipoleWindow,
    mass: f64,
    /// J·(d/ħ)·10⁻³·mass: phase in rad per mV/m of static field.
    raw_gain: f64,
    spec: PulseSpec,
    model: DipoleModel,
    detuning: f64,
}

impl PairKernel {
    fn new(spec: &PulseSpec, cfg: &ExperimentConfig) -> Result<Self, RamseyError> {
        let pol = spec.polarization.drive().ok_or_else(|| {
            RamseyError::Timeline("rf pair without a σ± polarization".into())
        })?;
        let model = DipoleModel::for_polarization(cfg.n, pol);
        let window = spec.dipole_window();
        let mass = window.total_mass();
        let j = (cfg.n - 1) as f64 / 2.0;
        let detuning = match pol {
            Polarization::SigmaPlus => cfg.detuning_plus,
            Polarization::SigmaMinus => cfg.detuning_minus,
        };
        Ok(PairKernel {
            pol,
            sign: model.sign,
            center: spec.center(),
            raw_gain: j * model.stark_rate_per_mv_m() * mass,
            window,
            mass,
            spec: *spec,
            model,
            detuning,
        })
    }
}

/// Precomputed phase machinery for one (config, timeline) pair.
pub struct PhaseKernel {
    mode: KernelMode,
    alpha: f64,
    p0: f64,
    c0: f64,
    two_j: u32,
    dt: f64,
    plus: Option<PairKernel>,
    minus: Option<PairKernel>,
    /// Boundary between the σ⁺ and σ⁻ field samples for pairwise noise.
    split: f64,
    span: (f64, f64),
    reference: Option<ReferenceLadder>,
}

struct ReferenceLadder {
    n: u32,
    detuning_shift: f64,
}

impl PhaseKernel {
    /// Kernel in the configured simulation mode.
    pub fn new(cfg: &ExperimentConfig, timeline: &Timeline) -> Result<Self, RamseyError> {
        let mode = match (cfg.path, cfg.instant_sampling) {
            (SimPath::Analytic, true) => KernelMode::Instant,
            (SimPath::Analytic, false) => KernelMode::Window,
            (SimPath::FullDynamics, _) => KernelMode::Full,
        };
        Self::with_mode(cfg, timeline, mode)
    }

    /// Kernel for gain calibration: the analytic window tier reports the
    /// model's physical (unnormalized) gain so the calibration measures the
    /// dipole trajectory itself rather than echoing the configured α.
    pub fn for_calibration(cfg: &ExperimentConfig, timeline: &Timeline) -> Result<Self, RamseyError> {
        let mode = match (cfg.path, cfg.instant_sampling) {
            (SimPath::Analytic, true) => KernelMode::Instant,
            (SimPath::Analytic, false) => KernelMode::RawWindow,
            (SimPath::FullDynamics, _) => KernelMode::Full,
        };
        Self::with_mode(cfg, timeline, mode)
    }

    fn with_mode(
        cfg: &ExperimentConfig,
        timeline: &Timeline,
        mode: KernelMode,
    ) -> Result<Self, RamseyError> {
        cfg.validate()?;
        let mw = timeline.mw_pulses();
        if mw.len() != 2 {
            return Err(RamseyError::Timeline(format!(
                "expected exactly 2 mw_pi_half events, found {}",
                mw.len()
            )));
        }
        let (free_lo, free_hi) = (mw[0].end_ns(), mw[1].start_ns);
        let mut plus = None;
        let mut minus = None;
        for ev in timeline.events() {
            if ev.kind != crate::sequence::PulseKind::RfPair {
                continue;
            }
            if ev.start_ns <= free_lo || ev.end_ns() >= free_hi {
                return Err(RamseyError::Timeline(format!(
                    "rf pair at [{:.1}, {:.1}] ns lies outside the free-evolution window",
                    ev.start_ns,
                    ev.end_ns()
                )));
            }
            let pk = PairKernel::new(ev, cfg)?;
            let slot = match pk.pol {
                Polarization::SigmaPlus => &mut plus,
                Polarization::SigmaMinus => &mut minus,
            };
            if slot.is_some() {
                return Err(RamseyError::Timeline(
                    "more than one rf pair with the same polarization".into(),
                ));
            }
            *slot = Some(pk);
        }
        let split = match (&plus, &minus) {
            (Some(p), Some(m)) => 0.5 * (p.center + m.center),
            (Some(p), None) => p.window.span().1 + 1e-9,
            (None, Some(m)) => m.window.span().0 - 1e-9,
            (None, None) => 0.0,
        };
        let reference = cfg.reference_transient.then(|| {
            // The Stark splitting scales with n, so the n−2 ladder sits a
            // fraction 2/n below the driven ladder's resonance.
            let omega_n = cfg.domega_df * cfg.f0 * 100.0;
            ReferenceLadder {
                n: cfg.n - 2,
                detuning_shift: -2.0 * omega_n / cfg.n as f64,
            }
        });
        Ok(PhaseKernel {
            mode,
            alpha: cfg.alpha,
            p0: cfg.p0,
            c0: cfg.c0,
            two_j: cfg.n - 1,
            dt: cfg.dt,
            plus,
            minus,
            split,
            span: (0.0, timeline.total_duration()),
            reference,
        })
    }

    pub fn span(&self) -> (f64, f64) {
        self.span
    }

    /// σ⁺ pair center, if the timeline has one.
    pub fn plus_center(&self) -> Option<f64> {
        self.plus.as_ref().map(|p| p.center)
    }

    pub fn minus_center(&self) -> Option<f64> {
        self.minus.as_ref().map(|p| p.center)
    }

    /// Physical window gain of each pair (rad per mV/m of static field).
    pub fn raw_gains(&self) -> (Option<f64>, Option<f64>) {
        (
            self.plus.as_ref().map(|p| p.raw_gain),
            self.minus.as_ref().map(|p| p.raw_gain),
        )
    }

    /// Differential phase accumulated from `trace` in a single shot.
    ///
    /// The trace must be defined over the whole sequence window (checked by
    /// [`run_shot`]; noise-model traces always are).
    pub fn phi_tot(&self, trace: &FieldTrace) -> f64 {
        match self.mode {
            KernelMode::Instant => {
                let f = |p: &Option<PairKernel>| {
                    p.as_ref().map_or(0.0, |k| trace.value(k.center))
                };
                self.alpha * (f(&self.plus) - f(&self.minus))
            }
            KernelMode::Window => {
                let avg = |p: &Option<PairKernel>| {
                    p.as_ref()
                        .map_or(0.0, |k| window_field_integral(&k.window, trace) / k.mass)
                };
                self.alpha * (avg(&self.plus) - avg(&self.minus))
            }
            KernelMode::RawWindow => {
                let j = self.two_j as f64 / 2.0;
                [&self.plus, &self.minus]
                    .iter()
                    .filter_map(|p| p.as_ref())
                    .map(|k| {
                        k.sign
                            * j
                            * k.model.stark_rate_per_mv_m()
                            * window_field_integral(&k.window, trace)
                    })
                    .sum()
            }
            KernelMode::Full => {
                let mut phi = 0.0;
                for pair in [&self.plus, &self.minus].into_iter().flatten() {
                    phi += self.full_pair_phase(pair, trace, self.two_j, pair.detuning, &pair.model);
                }
                if let Some(r) = &self.reference {
                    for pair in [&self.plus, &self.minus].into_iter().flatten() {
                        let model = DipoleModel::for_polarization(r.n, pair.pol);
                        phi -= self.full_pair_phase(
                            pair,
                            trace,
                            r.n - 1,
                            pair.detuning + r.detuning_shift,
                            &model,
                        );
                    }
                }
                phi
            }
        }
    }

    fn full_pair_phase(
        &self,
        pair: &PairKernel,
        trace: &FieldTrace,
        two_j: u32,
        detuning: f64,
        model: &DipoleModel,
    ) -> f64 {
        let psi0 = coherent_state(two_j, 0.0, 0.0).expect("two_j validated");
        let mut ev = LadderEvolver::new(psi0);
        let t_rf = pair.spec.duration();
        let rabi = pair.spec.rotation() / t_rf;
        let gap = pair.spec.gap();
        let mut t = pair.spec.start();
        let mut segments = vec![(rabi, 0.0, t_rf)];
        if gap > 0.0 {
            segments.push((0.0, 0.0, gap));
        }
        segments.push((rabi, pair.spec.return_phase_rad, t_rf));
        for (rabi, phase, duration) in segments {
            let drive = RfDrive {
                rabi,
                detuning,
                phase,
                polarization: pair.pol,
                duration,
            };
            ev.advance(&drive, trace, model, t, self.dt)
                .expect("validated step and coverage");
            t += duration;
        }
        ev.phase()
    }

    /// Detection probability for the upper fringe state.
    pub fn p_of(&self, phi_tot: f64, phi_mw: f64) -> f64 {
        (self.p0 + 0.5 * self.c0 * (phi_tot - phi_mw).cos()).clamp(0.0, 1.0)
    }

    /// Detection probability for a given trace and analysis phase.
    pub fn expected_p(&self, trace: &FieldTrace, phi_mw: f64) -> f64 {
        self.p_of(self.phi_tot(trace), phi_mw)
    }
}

/// Result of a single measurement cycle.
#[derive(Clone, Copy, Debug)]
pub struct ShotOutcome {
    /// Atom detected in the lower circular state (the fringe observable).
    pub detected_lower: bool,
    /// Differential phase accumulated this shot, rad.
    pub phi_tot: f64,
    /// Field at the σ⁺ pair center, mV/m (NaN if the timeline has no σ⁺ pair).
    pub f_plus: f64,
    /// Field at the σ⁻ pair center, mV/m (NaN if absent).
    pub f_minus: f64,
}

/// Run one shot against an explicit field trace.
pub fn run_shot(
    cfg: &ExperimentConfig,
    timeline: &Timeline,
    trace: &FieldTrace,
    phi_mw: f64,
    rng: &mut ChaCha8Rng,
) -> Result<ShotOutcome, RamseyError> {
    let kernel = PhaseKernel::new(cfg, timeline)?;
    let (a, b) = kernel.span();
    if !trace.covers(a, b) {
        return Err(RamseyError::TraceWindow);
    }
    let phi_tot = kernel.phi_tot(trace);
    let p = kernel.p_of(phi_tot, phi_mw);
    Ok(ShotOutcome {
        detected_lower: rng.gen::<f64>() < p,
        phi_tot,
        f_plus: kernel
            .plus_center()
            .map_or(f64::NAN, |t| trace.value(t)),
        f_minus: kernel
            .minus_center()
            .map_or(f64::NAN, |t| trace.value(t)),
    })
}

/// Detection tally at one scan setting.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SettingStat {
    pub setting: f64,
    pub shots: u64,
    pub successes: u64,
    pub p_hat: f64,
    /// Binomial standard error (with a half-count shrink so it never
    /// vanishes at p̂ ∈ {0, 1}).
    pub p_err: f64,
}

impl SettingStat {
    pub fn new(setting: f64, shots: u64, successes: u64) -> Self {
        let n = shots as f64;
        let p_hat = successes as f64 / n;
        let shrunk = (successes as f64 + 0.5) / (n + 1.0);
        SettingStat {
            setting,
            shots,
            successes,
            p_hat,
            p_err: (shrunk * (1.0 - shrunk) / n).sqrt(),
        }
    }
}

/// Least-squares fringe fit `p(φ) = a + b cos φ + c sin φ` reported as
/// offset, contrast `2√(b²+c²)`, and phase `atan2(c, b)`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FringeFit {
    pub p0: f64,
    pub contrast: f64,
    pub phase: f64,
    pub p0_err: f64,
    pub contrast_err: f64,
    pub phase_err: f64,
    /// True when the fit was underdetermined (fewer than three distinct
    /// settings or a singular design); contrast is 0 in that case.
    pub degenerate: bool,
}

impl FringeFit {
    fn degenerate() -> Self {
        FringeFit {
            p0: 0.0,
            contrast: 0.0,
            phase: 0.0,
            p0_err: f64::INFINITY,
            contrast_err: f64::INFINITY,
            phase_err: f64::INFINITY,
            degenerate: true,
        }
    }
}

/// Fit a fringe through measured probabilities with per-point variances
/// (sandwich covariance for the heteroscedastic binomial errors).
pub fn fit_fringe_values(settings: &[f64], p: &[f64], var: &[f64]) -> FringeFit {
    assert_eq!(settings.len(), p.len());
    assert_eq!(settings.len(), var.len());
    let mut sorted: Vec<f64> = settings.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    if sorted.len() < 3 {
        return FringeFit::degenerate();
    }
    let mut xtx = Matrix3::<f64>::zeros();
    let mut xty = Vector3::<f64>::zeros();
    let mut mid = Matrix3::<f64>::zeros();
    for ((&s, &pi), &vi) in settings.iter().zip(p).zip(var) {
        let x = Vector3::new(1.0, s.cos(), s.sin());
        xtx += x * x.transpose();
        xty += x * pi;
        mid += x * x.transpose() * vi;
    }
    let Some(inv) = xtx.try_inverse() else {
        return FringeFit::degenerate();
    };
    let beta = inv * xty;
    let cov = inv * mid * inv;
    let (a, b, c) = (beta[0], beta[1], beta[2]);
    let r2 = b * b + c * c;
    let r = r2.sqrt();
    let (contrast_err, phase_err) = if r > 1e-300 {
        (
            2.0 * ((b * b * cov[(1, 1)] + c * c * cov[(2, 2)] + 2.0 * b * c * cov[(1, 2)]) / r2)
                .max(0.0)
                .sqrt(),
            ((c * c * cov[(1, 1)] + b * b * cov[(2, 2)] - 2.0 * b * c * cov[(1, 2)]) / (r2 * r2))
                .max(0.0)
                .sqrt(),
        )
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    FringeFit {
        p0: a,
        contrast: 2.0 * r,
        phase: c.atan2(b),
        p0_err: cov[(0, 0)].max(0.0).sqrt(),
        contrast_err,
        phase_err,
        degenerate: false,
    }
}

pub fn fit_fringe(points: &[SettingStat]) -> FringeFit {
    let settings: Vec<f64> = points.iter().map(|s| s.setting).collect();
    let p: Vec<f64> = points.iter().map(|s| s.p_hat).collect();
    let var: Vec<f64> = points.iter().map(|s| s.p_err * s.p_err).collect();
    fit_fringe_values(&settings, &p, &var)
}

/// Scan result: per-setting tallies plus a fringe fit where one applies.
#[derive(Clone, Debug, Serialize)]
pub struct RamseyResult {
    pub points: Vec<SettingStat>,
    pub fit: Option<FringeFit>,
}

fn check_shots(shots: u64) -> Result<(), RamseyError> {
    if shots == 0 || shots > u32::MAX as u64 {
        return Err(RamseyError::Config(format!(
            "shots: must lie in [1, 2^32), got {shots}"
        )));
    }
    Ok(())
}

/// Monte-Carlo tally of one setting: every shot re-seeds from
/// (seed, setting, shot), so the result is independent of worker count and
/// partition order.
fn mc_setting(
    kernel: &PhaseKernel,
    noise: &PreparedNoise,
    seed: u64,
    setting_index: u32,
    phi_mw: f64,
    shots: u64,
) -> u64 {
    (0..shots as u32)
        .into_par_iter()
        .map(|shot| {
            let mut rng = shot_rng(seed, setting_index, shot);
            let trace = noise.realize(kernel.split, &mut rng);
            let p = kernel.expected_p(&trace, phi_mw);
            u64::from(rng.gen::<f64>() < p)
        })
        .sum()
}

/// Deterministic-probability tally: a single binomial draw per setting.
fn binomial_setting(seed: u64, setting_index: u32, p: f64, shots: u64) -> u64 {
    let mut rng = shot_rng(seed, setting_index, 0);
    Binomial::new(shots, p.clamp(0.0, 1.0))
        .expect("p clamped to [0, 1]")
        .sample(&mut rng)
}

/// Scan the analysis phase of the closing π/2 pulse across `phi_grid`.
pub fn scan_mw_phase(
    cfg: &ExperimentConfig,
    timeline: &Timeline,
    noise: &NoiseModel,
    phi_grid: &[f64],
    shots: u64,
) -> Result<RamseyResult, RamseyError> {
    check_shots(shots)?;
    let noise = PreparedNoise::new(noise)?;
    let kernel = PhaseKernel::new(cfg, timeline)?;
    let points = scan_settings(&kernel, &noise, cfg.seed, 0, phi_grid, shots, |&phi| phi)?;
    let fit = fit_fringe(&points);
    Ok(RamseyResult {
        points,
        fit: Some(fit),
    })
}

/// Tally a list of settings, mapping each to its analysis phase. Noise-free
/// scans collapse to one binomial draw per setting.
fn scan_settings<S>(
    kernel: &PhaseKernel,
    noise: &PreparedNoise,
    seed: u64,
    base_index: u32,
    settings: &[S],
    shots: u64,
    phi_mw_of: impl Fn(&S) -> f64,
) -> Result<Vec<SettingStat>, RamseyError>
where
    S: Copy + Into<f64>,
{
    let mut points = Vec::with_capacity(settings.len());
    for (i, s) in settings.iter().enumerate() {
        let idx = base_index + i as u32;
        let phi_mw = phi_mw_of(s);
        let successes = if noise.is_none() {
            let p = kernel.expected_p(&FieldTrace::Zero, phi_mw);
            binomial_setting(seed, idx, p, shots)
        } else {
            mc_setting(kernel, noise, seed, idx, phi_mw, shots)
        };
        points.push(SettingStat::new((*s).into(), shots, successes));
    }
    Ok(points)
}

/// Sweep the start time of a deterministic two-pulse probe field across the
/// pair windows (τ fixed at [`PULSE_SCAN_TAU`]). `offsets` are the probe
/// start times relative to the σ⁺ pair center; the probability at each
/// offset is deterministic, so each setting is a single binomial draw.
pub fn scan_pulse_start(
    cfg: &ExperimentConfig,
    f0: f64,
    offsets: &[f64],
    shots: u64,
    phi_mw: f64,
) -> Result<RamseyResult, RamseyError> {
    check_shots(shots)?;
    let timeline = default_sequence(cfg, PULSE_SCAN_TAU)?;
    let kernel = PhaseKernel::new(cfg, &timeline)?;
    let t_plus = kernel
        .plus_center()
        .ok_or_else(|| RamseyError::Timeline("no σ⁺ pair".into()))?;
    let mut points = Vec::with_capacity(offsets.len());
    for (i, &off) in offsets.iter().enumerate() {
        let trace = pulse_pair(f0, t_plus + off)?;
        let p = kernel.expected_p(&trace, phi_mw);
        let successes = binomial_setting(cfg.seed, i as u32, p, shots);
        points.push(SettingStat::new(off, shots, successes));
    }
    Ok(RamseyResult { points, fit: None })
}

/// One delay point of a contrast-vs-delay scan.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DelayPoint {
    pub tau: f64,
    pub contrast: f64,
    pub contrast_err: f64,
    pub phase: f64,
    pub phase_err: f64,
    pub degenerate: bool,
}

/// Fringe-fit the contrast at each pair delay `tau` under the given noise.
/// Each (τ, φ) cell runs `shots` shots over `phi_points` analysis phases.
pub fn scan_delay(
    cfg: &ExperimentConfig,
    noise: &NoiseModel,
    taus: &[f64],
    phi_points: usize,
    shots: u64,
) -> Result<Vec<DelayPoint>, RamseyError> {
    check_shots(shots)?;
    if phi_points < 3 {
        return Err(RamseyError::Config(format!(
            "phi_points: need at least 3 fringe settings, got {phi_points}"
        )));
    }
    if taus.len().saturating_mul(phi_points) > u32::MAX as usize {
        return Err(RamseyError::Config("tau grid too large".into()));
    }
    let noise = PreparedNoise::new(noise)?;
    let phi_grid: Vec<f64> = (0..phi_points)
        .map(|i| i as f64 * std::f64::consts::TAU / phi_points as f64)
        .collect();
    let mut out = Vec::with_capacity(taus.len());
    for (ti, &tau) in taus.iter().enumerate() {
        let timeline = default_sequence(cfg, tau)?;
        let kernel = PhaseKernel::new(cfg, &timeline)?;
        let base = (ti * phi_points) as u32;
        let points = scan_settings(&kernel, &noise, cfg.seed, base, &phi_grid, shots, |&phi| phi)?;
        let fit = fit_fringe(&points);
        out.push(DelayPoint {
            tau,
            contrast: fit.contrast,
            contrast_err: fit.contrast_err,
            phase: fit.phase,
            phase_err: fit.phase_err,
            degenerate: fit.degenerate,
        });
    }
    Ok(out)
}

/// Measured differential gains of the two rf pairs.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Calibration {
    /// Phase per unit field with only the σ⁺ pair active, rad/(mV/m).
    pub alpha_plus: f64,
    /// Same for the σ⁻ pair (negative).
    pub alpha_minus: f64,
    /// Field step used, mV/m.
    pub delta_f: f64,
}

/// Gain calibration: fringe phases are fitted for three sequence variants
/// (no rf, σ⁺ only, σ⁻ only) at bias offsets ±δf/2, and the per-pair gains
/// are the background-subtracted phase differences over δf.
///
/// Probabilities are evaluated in the large-shot limit (no detection
/// sampling), so the result isolates the model gain itself. On the
/// instant-sampling tier this recovers the configured α exactly; on the
/// dipole-window and full-dynamics tiers it measures the physical gain of
/// the modeled dipole trajectory.
pub fn calibrate_alpha(cfg: &ExperimentConfig) -> Result<Calibration, RamseyError> {
    let delta_f = CALIBRATION_DELTA_F;
    let timeline = default_sequence(cfg, PULSE_SCAN_TAU)?;
    let variants = [
        timeline.retain_rf_pairs(|_| false),
        timeline.retain_rf_pairs(|e| e.polarization == crate::sequence::EventPolarization::SigmaPlus),
        timeline.retain_rf_pairs(|e| e.polarization == crate::sequence::EventPolarization::SigmaMinus),
    ];
    let n_phi = 16;
    let phi_grid: Vec<f64> = (0..n_phi)
        .map(|i| i as f64 * std::f64::consts::TAU / n_phi as f64)
        .collect();
    let mut deltas = [0.0f64; 3];
    for (vi, variant) in variants.iter().enumerate() {
        let kernel = PhaseKernel::for_calibration(cfg, variant)?;
        let mut phases = [0.0f64; 2];
        for (fi, sign) in [1.0f64, -1.0].iter().enumerate() {
            let trace = FieldTrace::Constant {
                value: sign * delta_f / 2.0,
            };
            let p: Vec<f64> = phi_grid
                .iter()
                .map(|&phi| kernel.expected_p(&trace, phi))
                .collect();
            let vars = vec![0.0; n_phi];
            let fit = fit_fringe_values(&phi_grid, &p, &vars);
            if fit.degenerate {
                return Err(RamseyError::Config(
                    "calibration fringe fit is degenerate".into(),
                ));
            }
            phases[fi] = fit.phase;
        }
        deltas[vi] = phases[0] - phases[1];
    }
    Ok(Calibration {
        alpha_plus: (deltas[1] - deltas[0]) / delta_f,
        alpha_minus: (deltas[2] - deltas[0]) / delta_f,
        delta_f,
    })
}
