//! Physical constants (SI, CODATA 2018) and unit conversions.
//!
//! Internal unit conventions used across the crate:
//! - time in seconds at physics interfaces, nanoseconds in timelines and files;
//! - electric field in mV/m;
//! - angular frequencies in rad/s.

/// Elementary charge, C.
pub const E_CHARGE: f64 = 1.602_176_634e-19;

/// Bohr radius, m.
pub const BOHR_RADIUS: f64 = 5.291_772_109_03e-11;

/// Reduced Planck constant, J s.
pub const HBAR: f64 = 1.054_571_817e-34;

/// mV/m per V/cm.
pub const MV_PER_M_PER_V_PER_CM: f64 = 1.0e5;

/// Per-step dipole of the near-circular Stark ladder, C m.
///
/// Adjacent ladder states differ in static dipole by (3/2) n e a0; this is
/// also hbar times the Stark rate d(omega)/dF.
pub fn ladder_step_dipole(n: u32) -> f64 {
    1.5 * n as f64 * E_CHARGE * BOHR_RADIUS
}

/// Stark rate of the ladder splitting, rad/s per mV/m.
pub fn stark_rate_per_mv_m(n: u32) -> f64 {
    ladder_step_dipole(n) / HBAR * 1.0e-3
}
