//! Piecewise dipole windows.
//!
//! During an rf pulse pair the ladder dipole follows the spin-coherent-state
//! trajectory D(t) ∝ 1 − cos θ(t), with θ ramping linearly at the Rabi rate
//! and holding at the turning angle during the intra-pair gap.  This module
//! represents such windows piecewise and evaluates their time and Fourier
//! integrals in closed form, so callers get machine-precision masses and
//! spectra without quadrature.  All times are in seconds.

use num_complex::Complex64;

#[derive(Clone, Copy, Debug)]
enum Shape {
    /// D(t) = 1 − cos(theta0 + rate·(t − t0)).
    Ramp { theta0: f64, rate: f64 },
    /// D(t) = level.
    Flat { level: f64 },
}

#[derive(Clone, Copy, Debug)]
struct Segment {
    t0: f64,
    t1: f64,
    shape: Shape,
}

/// ∫₀^len e^{iωu} du, stable for ω → 0.
fn int_exp(omega: f64, len: f64) -> Complex64 {
    if omega == 0.0 {
        return Complex64::new(len, 0.0);
    }
    let half = 0.5 * omega * len;
    // (e^{iωlen} − 1)/(iω) = e^{iωlen/2} · 2 sin(ωlen/2)/ω
    Complex64::from_polar(2.0 * half.sin() / omega, half)
}

/// ∫₀^len cos(a0 + r·u) e^{iωu} du.
fn int_cos_exp(a0: f64, r: f64, omega: f64, len: f64) -> Complex64 {
    // cos x = (e^{ix} + e^{−ix})/2 splits the product into two plain exponentials.
    let plus = Complex64::from_polar(1.0, a0) * int_exp(omega + r, len);
    let minus = Complex64::from_polar(1.0, -a0) * int_exp(omega - r, len);
    0.5 * (plus + minus)
}

impl Segment {
    fn value(&self, t: f64) -> f64 {
        match self.shape {
            Shape::Ramp { theta0, rate } => 1.0 - (theta0 + rate * (t - self.t0)).cos(),
            Shape::Flat { level } => level,
        }
    }

    /// ∫ D(t) e^{iωt} dt over the overlap of this segment with [a, b].
    fn transform_between(&self, omega: f64, a: f64, b: f64) -> Complex64 {
        let lo = a.max(self.t0);
        let hi = b.min(self.t1);
        if hi <= lo {
            return Complex64::new(0.0, 0.0);
        }
        let len = hi - lo;
        let front = Complex64::from_polar(1.0, omega * lo);
        match self.shape {
            Shape::Flat { level } => front * level * int_exp(omega, len),
            Shape::Ramp { theta0, rate } => {
                let th_lo = theta0 + rate * (lo - self.t0);
                front * (int_exp(omega, len) - int_cos_exp(th_lo, rate, omega, len))
            }
        }
    }
}

/// Dimensionless dipole window: value(t) is in units of the half maximal
/// dipole D_max/2 = J·d, i.e. value = 1 − cos θ(t) ∈ [0, 2].
#[derive(Clone, Debug)]
pub struct DipoleWindow {
    segments: Vec<Segment>,
}

impl DipoleWindow {
    /// Window of an rf pulse pair starting at `start`: linear ramp of the
    /// polar angle 0 → `theta` over `t_rf`, hold for `gap`, ramp back.
    pub fn pair(start: f64, t_rf: f64, gap: f64, theta: f64) -> Self {
        let rate = theta / t_rf;
        let mut segments = vec![Segment {
            t0: start,
            t1: start + t_rf,
            shape: Shape::Ramp { theta0: 0.0, rate },
        }];
        let mut back_start = start + t_rf;
        if gap > 0.0 {
            segments.push(Segment {
                t0: back_start,
                t1: back_start + gap,
                shape: Shape::Flat { level: 1.0 - theta.cos() },
            });
            back_start += gap;
        }
        segments.push(Segment {
            t0: back_start,
            t1: back_start + t_rf,
            shape: Shape::Ramp { theta0: theta, rate: -rate },
        });
        DipoleWindow { segments }
    }

    /// Rectangular test window of unit height on [t0, t1].
    pub fn rect(t0: f64, t1: f64) -> Self {
        DipoleWindow {
            segments: vec![Segment { t0, t1, shape: Shape::Flat { level: 1.0 } }],
        }
    }

    pub fn span(&self) -> (f64, f64) {
        (
            self.segments.first().map_or(0.0, |s| s.t0),
            self.segments.last().map_or(0.0, |s| s.t1),
        )
    }

    /// Interior segment boundaries (kinks of the window), ascending.
    pub fn knots(&self) -> Vec<f64> {
        self.segments.iter().skip(1).map(|s| s.t0).collect()
    }

    pub fn value(&self, t: f64) -> f64 {
        self.segments
            .iter()
            .find(|s| t >= s.t0 && t <= s.t1)
            .map_or(0.0, |s| s.value(t))
    }

    /// ∫ D(t) e^{i 2πν t} dt over the overlap with [a, b].
    pub fn transform_between(&self, nu: f64, a: f64, b: f64) -> Complex64 {
        let omega = 2.0 * std::f64::consts::PI * nu;
        self.segments
            .iter()
            .map(|s| s.transform_between(omega, a, b))
            .sum()
    }

    /// ∫ D(t) e^{i 2πν t} dt over the whole window.
    pub fn transform(&self, nu: f64) -> Complex64 {
        let (a, b) = self.span();
        self.transform_between(nu, a, b)
    }

    /// ∫ D(t) dt over the overlap with [a, b].
    pub fn mass_between(&self, a: f64, b: f64) -> f64 {
        self.segments
            .iter()
            .map(|s| s.transform_between(0.0, a, b).re)
            .sum()
    }

    /// ∫ D(t) dt over the whole window.
    pub fn total_mass(&self) -> f64 {
        let (a, b) = self.span();
        self.mass_between(a, b)
    }
}
