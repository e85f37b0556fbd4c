//! Pulse timelines: two microwave π/2 pulses bracketing one or two rf pulse
//! pairs, with text-file round-tripping and the gap-balancing solver.
//!
//! Events store file-native units (nanoseconds, degrees) so that a parsed
//! file serializes back bit-for-bit; physics accessors convert to SI.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ramsey::ExperimentConfig;
use crate::spin_ladder::Polarization;
use crate::window::DipoleWindow;

/// Current sequence-file schema version.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SequenceError {
    #[error("sequence file parse error: {0}")]
    Parse(String),
    #[error("unsupported sequence file version {0} (expected {SCHEMA_VERSION})")]
    Version(u32),
    #[error("event {index} ({kind}): duration must be positive, got {duration_ns} ns")]
    BadDuration {
        index: usize,
        kind: &'static str,
        duration_ns: f64,
    },
    #[error("event {index}: intra-pair gap must be non-negative, got {gap_ns} ns")]
    BadGap { index: usize, gap_ns: f64 },
    #[error("event {index}: start must be non-negative, got {start_ns} ns")]
    BadStart { index: usize, start_ns: f64 },
    #[error("event {index}: rotation angle must lie in (0, 360) degrees, got {deg}")]
    BadRotation { index: usize, deg: f64 },
    #[error("event {index}: rf pair needs polarization sigma+ or sigma-")]
    MissingPolarization { index: usize },
    #[error("event {index}: field `{field}` is only valid for {expected} events")]
    FieldKindMismatch {
        index: usize,
        field: &'static str,
        expected: &'static str,
    },
    #[error(
        "events {first} ({first_kind}) and {second} ({second_kind}) overlap in time \
         ([{a0:.1}, {a1:.1}] ns vs [{b0:.1}, {b1:.1}] ns)"
    )]
    Overlap {
        first: usize,
        first_kind: &'static str,
        second: usize,
        second_kind: &'static str,
        a0: f64,
        a1: f64,
        b0: f64,
        b1: f64,
    },
    #[error("rf pair at [{start_ns:.1}, {end_ns:.1}] ns falls outside the free-evolution window ({lo_ns:.1}..{hi_ns:.1} ns)")]
    OutsideRamseyWindow {
        start_ns: f64,
        end_ns: f64,
        lo_ns: f64,
        hi_ns: f64,
    },
    #[error("gap balance: no sign change over delta_t_minus in [0, {max_ns} ns]")]
    BalanceBracket { max_ns: f64 },
}

/// Event kinds understood by the engine.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PulseKind {
    #[serde(rename = "mw_pi_half")]
    MwPiHalf,
    #[serde(rename = "rf_pair")]
    RfPair,
}

impl PulseKind {
    pub fn name(self) -> &'static str {
        match self {
            PulseKind::MwPiHalf => "mw_pi_half",
            PulseKind::RfPair => "rf_pair",
        }
    }
}

/// Polarization tag carried by timeline events (`none` for microwave pulses).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventPolarization {
    #[serde(rename = "sigma+")]
    SigmaPlus,
    #[serde(rename = "sigma-")]
    SigmaMinus,
    #[serde(rename = "none")]
    None,
}

impl EventPolarization {
    pub fn drive(self) -> Option<Polarization> {
        match self {
            EventPolarization::SigmaPlus => Some(Polarization::SigmaPlus),
            EventPolarization::SigmaMinus => Some(Polarization::SigmaMinus),
            EventPolarization::None => None,
        }
    }
}

/// One timeline event.
///
/// For `MwPiHalf`, `duration_ns` is the pulse length and `mw_phase_rad` its
/// drive phase; `gap_ns` and `return_phase_rad` are unused (kept at defaults).
/// For `RfPair`, `duration_ns` is the length of *each* of the two rf pulses,
/// `gap_ns` the wait between them, `rotation_deg` the polar excursion angle of
/// the out pulse, and `return_phase_rad` the rf phase jump of the back pulse
/// (π by default, i.e. an exact reversal on resonance). The pair occupies
/// `[start_ns, start_ns + 2*duration_ns + gap_ns]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    pub kind: PulseKind,
    pub start_ns: f64,
    pub duration_ns: f64,
    pub polarization: EventPolarization,
    pub rotation_deg: f64,
    pub gap_ns: f64,
    pub mw_phase_rad: f64,
    pub return_phase_rad: f64,
}

impl PulseSpec {
    pub fn mw(start_ns: f64, duration_ns: f64, mw_phase_rad: f64) -> Self {
        PulseSpec {
            kind: PulseKind::MwPiHalf,
            start_ns,
            duration_ns,
            polarization: EventPolarization::None,
            rotation_deg: 90.0,
            gap_ns: 0.0,
            mw_phase_rad,
            return_phase_rad: 0.0,
        }
    }

    pub fn rf_pair(
        start_ns: f64,
        duration_ns: f64,
        gap_ns: f64,
        polarization: EventPolarization,
        rotation_deg: f64,
    ) -> Self {
        PulseSpec {
            kind: PulseKind::RfPair,
            start_ns,
            duration_ns,
            polarization,
            rotation_deg,
            gap_ns,
            mw_phase_rad: 0.0,
            return_phase_rad: std::f64::consts::PI,
        }
    }

    /// Start time in seconds.
    pub fn start(&self) -> f64 {
        self.start_ns * 1e-9
    }

    /// Single-pulse duration in seconds.
    pub fn duration(&self) -> f64 {
        self.duration_ns * 1e-9
    }

    /// Intra-pair gap in seconds.
    pub fn gap(&self) -> f64 {
        self.gap_ns * 1e-9
    }

    /// Rotation angle in radians.
    pub fn rotation(&self) -> f64 {
        self.rotation_deg.to_radians()
    }

    /// Total occupied extent in nanoseconds.
    pub fn extent_ns(&self) -> f64 {
        match self.kind {
            PulseKind::MwPiHalf => self.duration_ns,
            PulseKind::RfPair => 2.0 * self.duration_ns + self.gap_ns,
        }
    }

    pub fn end_ns(&self) -> f64 {
        self.start_ns + self.extent_ns()
    }

    /// Midpoint of the occupied extent, in seconds.
    pub fn center(&self) -> f64 {
        (self.start_ns + 0.5 * self.extent_ns()) * 1e-9
    }

    /// Dipole window traced out by an rf pair, in SI units.
    pub fn dipole_window(&self) -> DipoleWindow {
        DipoleWindow::pair(self.start(), self.duration(), self.gap(), self.rotation())
    }
}

/// A validated, time-sorted list of pulse events.
///
/// Structural invariants enforced at construction: non-negative starts,
/// positive durations, non-negative gaps, rotation angles in (0, 360)°, rf
/// pairs carry a polarization, and no two events overlap — except that rf
/// pairs of *opposite* polarization may abut or interleave, since they drive
/// the two disjoint spin ladders and can be applied simultaneously.
#[derive(Clone, Debug, PartialEq)]
pub struct Timeline {
    events: Vec<PulseSpec>,
}

#[derive(Serialize, Deserialize)]
struct FileTimeline {
    version: u32,
    #[serde(default, rename = "event")]
    events: Vec<FileEvent>,
}

#[derive(Serialize, Deserialize)]
struct FileEvent {
    kind: PulseKind,
    start_ns: f64,
    duration_ns: f64,
    polarization: EventPolarization,
    rotation_deg: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    gap_ns: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mw_phase_rad: Option<f64>,
    // Extension field: omitted whenever the back pulse uses the standard π
    // phase jump, so default files contain only schema fields.
    #[serde(skip_serializing_if = "Option::is_none")]
    return_phase_rad: Option<f64>,
}

impl Timeline {
    // Negated comparisons so that NaN fails every check.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn new(mut events: Vec<PulseSpec>) -> Result<Timeline, SequenceError> {
        events.sort_by(|a, b| a.start_ns.total_cmp(&b.start_ns));
        for (index, ev) in events.iter().enumerate() {
            if !(ev.start_ns >= 0.0) {
                return Err(SequenceError::BadStart {
                    index,
                    start_ns: ev.start_ns,
                });
            }
            if !(ev.duration_ns > 0.0) {
                return Err(SequenceError::BadDuration {
                    index,
                    kind: ev.kind.name(),
                    duration_ns: ev.duration_ns,
                });
            }
            if !(ev.gap_ns >= 0.0) {
                return Err(SequenceError::BadGap {
                    index,
                    gap_ns: ev.gap_ns,
                });
            }
            if !(ev.rotation_deg > 0.0 && ev.rotation_deg < 360.0) {
                return Err(SequenceError::BadRotation {
                    index,
                    deg: ev.rotation_deg,
                });
            }
            if ev.kind == PulseKind::RfPair && ev.polarization == EventPolarization::None {
                return Err(SequenceError::MissingPolarization { index });
            }
        }
        for i in 0..events.len() {
            for j in (i + 1)..events.len() {
                let (a, b) = (&events[i], &events[j]);
                let independent_ladders = a.kind == PulseKind::RfPair
                    && b.kind == PulseKind::RfPair
                    && a.polarization != b.polarization;
                if independent_ladders {
                    continue;
                }
                if a.start_ns < b.end_ns() && b.start_ns < a.end_ns() {
                    return Err(SequenceError::Overlap {
                        first: i,
                        first_kind: a.kind.name(),
                        second: j,
                        second_kind: b.kind.name(),
                        a0: a.start_ns,
                        a1: a.end_ns(),
                        b0: b.start_ns,
                        b1: b.end_ns(),
                    });
                }
            }
        }
        Ok(Timeline { events })
    }

    pub fn events(&self) -> &[PulseSpec] {
        &self.events
    }

    /// End of the last event, in seconds.
    pub fn total_duration(&self) -> f64 {
        self.events
            .iter()
            .map(|e| e.end_ns())
            .fold(0.0, f64::max)
            * 1e-9
    }

    pub fn mw_pulses(&self) -> Vec<&PulseSpec> {
        self.events
            .iter()
            .filter(|e| e.kind == PulseKind::MwPiHalf)
            .collect()
    }

    pub fn rf_pair(&self, pol: Polarization) -> Option<&PulseSpec> {
        let tag = match pol {
            Polarization::SigmaPlus => EventPolarization::SigmaPlus,
            Polarization::SigmaMinus => EventPolarization::SigmaMinus,
        };
        self.events
            .iter()
            .find(|e| e.kind == PulseKind::RfPair && e.polarization == tag)
    }

    /// Copy of this timeline with rf pairs filtered by `keep`.
    pub fn retain_rf_pairs(&self, keep: impl Fn(&PulseSpec) -> bool) -> Timeline {
        let events = self
            .events
            .iter()
            .filter(|e| e.kind != PulseKind::RfPair || keep(e))
            .copied()
            .collect();
        Timeline { events }
    }
}

/// Parse a timeline from its text form.
pub fn parse_sequence(text: &str) -> Result<Timeline, SequenceError> {
    let file: FileTimeline =
        toml::from_str(text).map_err(|e| SequenceError::Parse(e.to_string()))?;
    if file.version != SCHEMA_VERSION {
        return Err(SequenceError::Version(file.version));
    }
    let mut events = Vec::with_capacity(file.events.len());
    for (index, ev) in file.events.into_iter().enumerate() {
        match ev.kind {
            PulseKind::MwPiHalf => {
                if ev.gap_ns.is_some() {
                    return Err(SequenceError::FieldKindMismatch {
                        index,
                        field: "gap_ns",
                        expected: "rf_pair",
                    });
                }
                if ev.return_phase_rad.is_some() {
                    return Err(SequenceError::FieldKindMismatch {
                        index,
                        field: "return_phase_rad",
                        expected: "rf_pair",
                    });
                }
            }
            PulseKind::RfPair => {
                if ev.mw_phase_rad.is_some() {
                    return Err(SequenceError::FieldKindMismatch {
                        index,
                        field: "mw_phase_rad",
                        expected: "mw_pi_half",
                    });
                }
            }
        }
        events.push(PulseSpec {
            kind: ev.kind,
            start_ns: ev.start_ns,
            duration_ns: ev.duration_ns,
            polarization: ev.polarization,
            rotation_deg: ev.rotation_deg,
            gap_ns: ev.gap_ns.unwrap_or(0.0),
            mw_phase_rad: ev.mw_phase_rad.unwrap_or(0.0),
            return_phase_rad: match ev.kind {
                PulseKind::RfPair => ev.return_phase_rad.unwrap_or(std::f64::consts::PI),
                PulseKind::MwPiHalf => 0.0,
            },
        });
    }
    Timeline::new(events)
}

/// Serialize a timeline to its text form. `parse_sequence` recovers the
/// timeline bit-for-bit (floats are printed shortest-round-trip).
pub fn serialize_sequence(timeline: &Timeline) -> String {
    let events = timeline
        .events
        .iter()
        .map(|e| FileEvent {
            kind: e.kind,
            start_ns: e.start_ns,
            duration_ns: e.duration_ns,
            polarization: e.polarization,
            rotation_deg: e.rotation_deg,
            gap_ns: (e.kind == PulseKind::RfPair).then_some(e.gap_ns),
            mw_phase_rad: (e.kind == PulseKind::MwPiHalf).then_some(e.mw_phase_rad),
            return_phase_rad: (e.kind == PulseKind::RfPair
                && e.return_phase_rad != std::f64::consts::PI)
                .then_some(e.return_phase_rad),
        })
        .collect();
    let file = FileTimeline {
        version: SCHEMA_VERSION,
        events,
    };
    toml::to_string(&file).expect("timeline serialization cannot fail")
}

fn rf_pair_centered(
    center_s: f64,
    t_rf_s: f64,
    gap_s: f64,
    polarization: EventPolarization,
    theta_rad: f64,
) -> PulseSpec {
    let extent_ns = (2.0 * t_rf_s + gap_s) * 1e9;
    PulseSpec::rf_pair(
        center_s * 1e9 - 0.5 * extent_ns,
        t_rf_s * 1e9,
        gap_s * 1e9,
        polarization,
        theta_rad.to_degrees(),
    )
}

/// Standard differential sequence: π/2 microwave pulse, a σ⁺ rf pair centered
/// at the configured probe time, a σ⁻ rf pair centered `tau` later, and the
/// closing π/2 pulse. Fails if a pair does not fit strictly inside the free
/// evolution window between the microwave pulses.
pub fn default_sequence(
    cfg: &ExperimentConfig,
    tau: f64,
) -> Result<Timeline, SequenceError> {
    let mw1 = PulseSpec::mw(cfg.mw1_start * 1e9, cfg.mw_duration * 1e9, 0.0);
    let mw2 = PulseSpec::mw(cfg.mw2_start * 1e9, cfg.mw_duration * 1e9, 0.0);
    let plus = rf_pair_centered(
        cfg.t_plus,
        cfg.t_rf_plus,
        cfg.delta_t_plus,
        EventPolarization::SigmaPlus,
        cfg.theta1,
    );
    let minus = rf_pair_centered(
        cfg.t_plus + tau,
        cfg.t_rf_minus,
        cfg.delta_t_minus,
        EventPolarization::SigmaMinus,
        cfg.theta2,
    );
    let lo_ns = mw1.end_ns();
    let hi_ns = mw2.start_ns;
    for pair in [&plus, &minus] {
        if pair.start_ns <= lo_ns || pair.end_ns() >= hi_ns {
            return Err(SequenceError::OutsideRamseyWindow {
                start_ns: pair.start_ns,
                end_ns: pair.end_ns(),
                lo_ns,
                hi_ns,
            });
        }
    }
    Timeline::new(vec![mw1, plus, minus, mw2])
}

/// Unsigned dipole-window mass of an rf pair, per unit drive amplitude:
/// `2 t_rf (θ − sin θ)/θ + gap (1 − cos θ)` (the time integral of
/// `1 − cos θ(t)` over the pair).
fn pair_mass(t_rf: f64, gap: f64, theta: f64) -> f64 {
    2.0 * t_rf * (theta - theta.sin()) / theta + gap * (1.0 - theta.cos())
}

/// Solve for the σ⁻ intra-pair gap that balances the two dipole-window masses
/// (equal and opposite phase pickup from a static field), searching
/// `delta_t_minus ∈ [0, max_ns]` nanoseconds by bisection to 0.01 ns.
pub fn balance_delta_t_minus_within(
    cfg: &ExperimentConfig,
    max_ns: f64,
) -> Result<f64, SequenceError> {
    let target = pair_mass(cfg.t_rf_plus, cfg.delta_t_plus, cfg.theta1);
    let excess = |gap_ns: f64| pair_mass(cfg.t_rf_minus, gap_ns * 1e-9, cfg.theta2) - target;
    let (mut lo, mut hi) = (0.0, max_ns);
    let (f_lo, f_hi) = (excess(lo), excess(hi));
    if f_lo == 0.0 {
        return Ok(0.0);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(SequenceError::BalanceBracket { max_ns });
    }
    while hi - lo > 0.01 {
        let mid = 0.5 * (lo + hi);
        if excess(mid).signum() == f_lo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi) * 1e-9)
}

/// `balance_delta_t_minus_within` over the standard 0–100 ns gap range.
pub fn balance_delta_t_minus(cfg: &ExperimentConfig) -> Result<f64, SequenceError> {
    balance_delta_t_minus_within(cfg, 100.0)
}
