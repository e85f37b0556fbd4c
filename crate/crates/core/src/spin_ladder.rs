//! Spin-J ladder states and their driven dynamics.
//!
//! The lowest diagonal of a hydrogenic Stark manifold behaves as a large
//! angular momentum J = (n-1)/2 whose 2J+1 levels are harmonically spaced and
//! coupled by a polarized rf field.  States live in the |J, m⟩ basis with
//! index i ↔ m = i - J, so index 2J is the ladder top (the circular state).
//!
//! Driven evolution runs in the frame rotating at the rf frequency.  For a
//! drive at rf phase φ the generator is
//!
//! ```text
//! G = e^{-iφJz} (-Δ(t)·N + Ω·Jx) e^{+iφJz},      N = J - Jz,
//! ```
//!
//! where Δ(t) = Δ0 ± (∂ω/∂F)·f(t) is the instantaneous detuning including
//! the linear Stark shift of the perturbing field f (sign set by the drive
//! polarization: a σ⁻ drive addresses the negative-dipole diagonal).  The
//! inner matrix is real symmetric tridiagonal, so each step is evaluated as
//! an exact unitary through its eigendecomposition; the rf phase enters as a
//! diagonal gauge applied once per drive.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::constants::{ladder_step_dipole, HBAR};
use crate::fieldgen::FieldTrace;

pub const MAX_STEP_S: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum LadderError {
    #[error("J must be a half-integer >= 1/2 (got 2J = {0})")]
    InvalidJ(u32),
    #[error("theta must lie in [0, pi] (got {0})")]
    ThetaOutOfRange(f64),
    #[error("integration step must be positive and at most 1 ns (got {0:.3e} s)")]
    StepOutOfRange(f64),
    #[error("perturbation trace does not cover the drive window [{0:.4e}, {1:.4e}] s")]
    TraceWindow(f64, f64),
}

/// rf drive polarization: σ⁺ couples down the positive-dipole ladder from
/// the circular state, σ⁻ down the negative-dipole one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Polarization {
    #[serde(rename = "sigma+")]
    SigmaPlus,
    #[serde(rename = "sigma-")]
    SigmaMinus,
}

impl Polarization {
    /// Sign of the ladder dipole (and of the Stark detuning shift).
    pub fn sign(self) -> f64 {
        match self {
            Polarization::SigmaPlus => 1.0,
            Polarization::SigmaMinus => -1.0,
        }
    }
}

/// One rf drive segment at fixed amplitude, detuning and phase.  A segment
/// with `rabi` = 0 models a hold (rf off) during which Stark phases still
/// accumulate.
#[derive(Clone, Debug)]
pub struct RfDrive {
    /// Rabi angular frequency Ω (rad/s).
    pub rabi: f64,
    /// Static detuning Δ0 of the ladder from the rf (rad/s).
    pub detuning: f64,
    /// rf phase φ (rad): equatorial rotation-axis azimuth.
    pub phase: f64,
    pub polarization: Polarization,
    /// Segment length (s).
    pub duration: f64,
}

/// Ladder dipole parameters: each step down from the circular state adds
/// `step_dipole` = (3/2)·n·e·a0 of electric dipole, with `sign` selecting
/// the positive (σ⁺) or negative (σ⁻) diagonal.
#[derive(Clone, Debug)]
pub struct DipoleModel {
    pub n: u32,
    pub step_dipole: f64,
    pub sign: f64,
}

impl DipoleModel {
    pub fn new(n: u32, sign: f64) -> Self {
        DipoleModel { n, step_dipole: ladder_step_dipole(n), sign }
    }

    pub fn for_polarization(n: u32, pol: Polarization) -> Self {
        Self::new(n, pol.sign())
    }

    /// Detuning shift per unit perturbing field, (∂ω/∂F) in rad/s per mV/m.
    pub fn stark_rate_per_mv_m(&self) -> f64 {
        self.step_dipole / HBAR * 1e-3
    }

    /// Full-ladder dipole 2J·d.
    pub fn d_max(&self, two_j: u32) -> f64 {
        two_j as f64 * self.step_dipole
    }
}

#[derive(Clone, Debug)]
pub struct SpinState {
    two_j: u32,
    amps: Vec<Complex64>,
}

/// ⟨i+1|Jx|i⟩ = (1/2)√((i+1)(2J−i)).
fn jx_offdiag(two_j: u32) -> Vec<f64> {
    (0..two_j)
        .map(|i| 0.5 * ((i + 1) as f64 * (two_j - i) as f64).sqrt())
        .collect()
}

impl SpinState {
    pub fn two_j(&self) -> u32 {
        self.two_j
    }

    pub fn j(&self) -> f64 {
        self.two_j as f64 / 2.0
    }

    pub fn dim(&self) -> usize {
        self.two_j as usize + 1
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    /// m value of basis index i.
    pub fn m(&self, i: usize) -> f64 {
        i as f64 - self.j()
    }

    pub fn norm_sq(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn overlap(&self, other: &SpinState) -> Complex64 {
        assert_eq!(self.two_j, other.two_j, "overlap of different ladders");
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn fidelity(&self, other: &SpinState) -> f64 {
        self.overlap(other).norm_sqr()
    }

    pub fn expect_jz(&self) -> f64 {
        self.amps
            .iter()
            .enumerate()
            .map(|(i, a)| self.m(i) * a.norm_sqr())
            .sum()
    }

    fn apply_jx(&self) -> Vec<Complex64> {
        let x = jx_offdiag(self.two_j);
        let n = self.dim();
        (0..n)
            .map(|i| {
                let mut v = Complex64::new(0.0, 0.0);
                if i > 0 {
                    v += x[i - 1] * self.amps[i - 1];
                }
                if i + 1 < n {
                    v += x[i] * self.amps[i + 1];
                }
                v
            })
            .collect()
    }

    fn apply_jy(&self) -> Vec<Complex64> {
        let x = jx_offdiag(self.two_j);
        let n = self.dim();
        let i_unit = Complex64::new(0.0, 1.0);
        (0..n)
            .map(|i| {
                let mut v = Complex64::new(0.0, 0.0);
                if i > 0 {
                    v += -i_unit * x[i - 1] * self.amps[i - 1];
                }
                if i + 1 < n {
                    v += i_unit * x[i] * self.amps[i + 1];
                }
                v
            })
            .collect()
    }

    pub fn expect_jx(&self) -> f64 {
        self.amps
            .iter()
            .zip(self.apply_jx())
            .map(|(a, v)| (a.conj() * v).re)
            .sum()
    }

    pub fn expect_jy(&self) -> f64 {
        self.amps
            .iter()
            .zip(self.apply_jy())
            .map(|(a, v)| (a.conj() * v).re)
            .sum()
    }

    pub fn expect_jx_sq(&self) -> f64 {
        self.apply_jx().iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn expect_jy_sq(&self) -> f64 {
        self.apply_jy().iter().map(|v| v.norm_sqr()).sum()
    }
}

/// Spin coherent state at polar angle `theta`, azimuth `phi`:
/// c_m = √C(2J, J+m) cos^{J+m}(θ/2) sin^{J−m}(θ/2) e^{i(J−m)φ},
/// evaluated in log space so the binomial tails stay finite at large J.
pub fn coherent_state(two_j: u32, theta: f64, phi: f64) -> Result<SpinState, LadderError> {
    if two_j == 0 {
        return Err(LadderError::InvalidJ(two_j));
    }
    if !(0.0..=std::f64::consts::PI).contains(&theta) {
        return Err(LadderError::ThetaOutOfRange(theta));
    }
    let n = two_j as usize + 1;
    // cos(π/2) is ~6e-17 in f64, not 0; force the exact pole so θ = π lands on
    // a basis state just like θ = 0 does.
    let cos_half = if theta == std::f64::consts::PI {
        0.0
    } else {
        (theta / 2.0).cos()
    };
    let lc = cos_half.ln();
    let ls = (theta / 2.0).sin().ln();
    // 0·(−∞) must read as exponent 0, i.e. factor 1, at the poles.
    let pow = |k: u32, lv: f64| if k == 0 { 0.0 } else { k as f64 * lv };
    let mut ln_binom = 0.0;
    let mut amps = Vec::with_capacity(n);
    for i in 0..n {
        let iu = i as u32;
        if i > 0 {
            ln_binom += ((two_j - iu + 1) as f64 / i as f64).ln();
        }
        let w = 0.5 * ln_binom + pow(iu, lc) + pow(two_j - iu, ls);
        amps.push(Complex64::from_polar(w.exp(), (two_j - iu) as f64 * phi));
    }
    // The log-binomial recursion leaves ~1e-15 relative drift; renormalizing
    // keeps the poles exact basis states.
    let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    for a in &mut amps {
        *a /= norm;
    }
    Ok(SpinState { two_j, amps })
}

/// |ψ⟩ → e^{+iφJz}|ψ⟩ (diagonal gauge).
fn phase_gauge(amps: &mut [Complex64], two_j: u32, phi: f64) {
    let j = two_j as f64 / 2.0;
    for (i, a) in amps.iter_mut().enumerate() {
        *a *= Complex64::from_polar(1.0, phi * (i as f64 - j));
    }
}

/// e^{-i t M} ψ for real symmetric M given by its eigendecomposition.
fn exp_apply(
    evecs: &DMatrix<f64>,
    evals: &DVector<f64>,
    t: f64,
    psi: &[Complex64],
) -> Vec<Complex64> {
    let n = psi.len();
    let re = DVector::from_iterator(n, psi.iter().map(|c| c.re));
    let im = DVector::from_iterator(n, psi.iter().map(|c| c.im));
    let mut vre = evecs.tr_mul(&re);
    let mut vim = evecs.tr_mul(&im);
    for k in 0..n {
        let (s, c) = (-t * evals[k]).sin_cos();
        let (r, i) = (vre[k], vim[k]);
        vre[k] = c * r - s * i;
        vim[k] = s * r + c * i;
    }
    let ore = evecs * vre;
    let oim = evecs * vim;
    (0..n).map(|i| Complex64::new(ore[i], oim[i])).collect()
}

fn symmetric_tridiag_eigen(diag: &[f64], off: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
    let n = diag.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = diag[i];
        if i + 1 < n {
            m[(i, i + 1)] = off[i];
            m[(i + 1, i)] = off[i];
        }
    }
    let eig = m.symmetric_eigen();
    (eig.eigenvectors, eig.eigenvalues)
}

/// Unitary rotation by `angle` about the equatorial axis at azimuth
/// `axis_phase`: exp(-i·angle·(Jx cos φ + Jy sin φ)).
pub fn rotate(state: &SpinState, axis_phase: f64, angle: f64) -> SpinState {
    let two_j = state.two_j;
    let mut psi = state.amps.clone();
    phase_gauge(&mut psi, two_j, axis_phase);
    let diag = vec![0.0; state.dim()];
    let (q, lam) = symmetric_tridiag_eigen(&diag, &jx_offdiag(two_j));
    let mut out = exp_apply(&q, &lam, angle, &psi);
    phase_gauge(&mut out, two_j, -axis_phase);
    SpinState { two_j, amps: out }
}

/// sign·d·(J − ⟨Jz⟩): the ladder dipole of the state, 0 at the circular
/// state and sign·D_max at the far pole.
pub fn dipole_expectation(state: &SpinState, model: &DipoleModel) -> f64 {
    model.sign * model.step_dipole * (state.j() - state.expect_jz())
}

/// Signal and reference branches of one interferometric arm.  The reference
/// co-evolves under the same drives with f ≡ 0, so `phase()` isolates the
/// perturbation-induced quantum phase.
#[derive(Clone, Debug)]
pub struct LadderEvolver {
    pub psi: SpinState,
    pub psi_ref: SpinState,
}

impl LadderEvolver {
    pub fn new(initial: SpinState) -> Self {
        LadderEvolver { psi_ref: initial.clone(), psi: initial }
    }

    /// Propagate both branches through one drive segment starting at `t0`,
    /// reading the perturbing field from `trace` (midpoint-sampled with step
    /// `dt` wherever it is not piecewise constant).
    pub fn advance(
        &mut self,
        drive: &RfDrive,
        trace: &FieldTrace,
        model: &DipoleModel,
        t0: f64,
        dt: f64,
    ) -> Result<(), LadderError> {
        if !(dt > 0.0 && dt <= MAX_STEP_S + 1e-18) {
            return Err(LadderError::StepOutOfRange(dt));
        }
        let t1 = t0 + drive.duration;
        if !trace.covers(t0, t1) {
            return Err(LadderError::TraceWindow(t0, t1));
        }
        let two_j = self.psi.two_j;
        let sign = drive.polarization.sign();
        let rate = model.stark_rate_per_mv_m();
        let off: Vec<f64> = jx_offdiag(two_j).iter().map(|x| x * drive.rabi).collect();
        // N_i = 2J - i: steps below the ladder top.
        let steps_from_top: Vec<f64> = (0..=two_j).map(|i| (two_j - i) as f64).collect();
        let step = |psi: &mut Vec<Complex64>, delta: f64, span: f64| {
            let diag: Vec<f64> = steps_from_top.iter().map(|n| -delta * n).collect();
            let (q, lam) = symmetric_tridiag_eigen(&diag, &off);
            *psi = exp_apply(&q, &lam, span, psi);
        };

        phase_gauge(&mut self.psi.amps, two_j, drive.phase);
        phase_gauge(&mut self.psi_ref.amps, two_j, drive.phase);

        // Reference branch: f ≡ 0 makes the generator time-independent, so
        // one exact exponential covers the whole segment.
        step(&mut self.psi_ref.amps, drive.detuning, drive.duration);

        let mut edges = vec![t0];
        edges.extend(trace.breakpoints(t0, t1));
        edges.push(t1);
        for w in edges.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b <= a {
                continue;
            }
            if let Some(f) = trace.constant_over(a, b) {
                step(&mut self.psi.amps, drive.detuning + sign * rate * f, b - a);
            } else {
                let n_sub = ((b - a) / dt).ceil() as usize;
                let h = (b - a) / n_sub as f64;
                for k in 0..n_sub {
                    let f = trace.value(a + (k as f64 + 0.5) * h);
                    step(&mut self.psi.amps, drive.detuning + sign * rate * f, h);
                }
            }
        }

        phase_gauge(&mut self.psi.amps, two_j, -drive.phase);
        phase_gauge(&mut self.psi_ref.amps, two_j, -drive.phase);
        Ok(())
    }

    /// Interferometric phase arg⟨ψ_ref|ψ⟩ of the signal branch relative to
    /// the unperturbed reference.
    pub fn phase(&self) -> f64 {
        self.psi_ref.overlap(&self.psi).arg()
    }
}

/// One-segment evolution: returns the evolved state and the accumulated
/// perturbation phase relative to the unperturbed reference.
pub fn evolve(
    state: &SpinState,
    drive: &RfDrive,
    perturbation: &FieldTrace,
    model: &DipoleModel,
    t0: f64,
    dt: f64,
) -> Result<(SpinState, f64), LadderError> {
    let mut ev = LadderEvolver::new(state.clone());
    ev.advance(drive, perturbation, model, t0, dt)?;
    let phase = ev.phase();
    Ok((ev.psi, phase))
}
