//! Randomized invariant checks that cut across modules: state geometry,
//! timeline round-trips, contrast bounds, fit recovery, and seed determinism.

use proptest::prelude::*;
use rydsense_core::analysis::{bessel_j0, contrast_gaussian, contrast_small_signal};
use rydsense_core::fieldgen::{gen_exp_correlated, gen_white_20pt};
use rydsense_core::ramsey::{fit_fringe_values, scan_mw_phase, ExperimentConfig, NoiseModel};
use rydsense_core::sequence::{
    balance_delta_t_minus_within, default_sequence, parse_sequence, serialize_sequence,
    EventPolarization, PulseSpec, SequenceError, Timeline,
};
use rydsense_core::spin_ladder::{coherent_state, rotate};
use std::f64::consts::PI;

fn wrap_angle(x: f64) -> f64 {
    x.sin().atan2(x.cos())
}

proptest! {
    #[test]
    fn scs_norm_and_mean_direction(theta in 0.0..=PI, phi in -10.0..10.0f64) {
        let s = coherent_state(50, theta, phi).unwrap();
        prop_assert!((s.norm_sq() - 1.0).abs() < 1e-10);
        prop_assert!((s.expect_jz() - 25.0 * theta.cos()).abs() < 1e-9);
    }

    #[test]
    fn rotations_are_unitary_and_compose(
        theta0 in 0.05..3.0f64,
        axis in -PI..PI,
        a in -6.0..6.0f64,
        b in -6.0..6.0f64,
    ) {
        let start = coherent_state(50, theta0, 0.37).unwrap();
        let two_step = rotate(&rotate(&start, axis, a), axis, b);
        let one_step = rotate(&start, axis, a + b);
        prop_assert!((two_step.norm_sq() - 1.0).abs() < 1e-10);
        prop_assert!(two_step.fidelity(&one_step) >= 1.0 - 1e-10);
    }

    #[test]
    fn contrast_bounds_and_taylor_gap(
        alpha in 0.0..0.05f64,
        sigma_f in 0.0..50.0f64,
        g1 in -1.0..=1.0f64,
    ) {
        let z = (alpha * sigma_f).powi(2) * (1.0 - g1);
        let linear = contrast_small_signal(alpha, sigma_f, g1);
        let exp = contrast_gaussian(alpha, sigma_f, g1);
        prop_assert!(exp >= linear);
        prop_assert!(exp <= 1.0 + 1e-12);
        prop_assert!(exp - linear <= 0.5 * z * z + 1e-12);
    }

    #[test]
    fn bessel_j0_is_even_and_bounded(x in -40.0..40.0f64) {
        prop_assert_eq!(bessel_j0(x), bessel_j0(-x));
        prop_assert!(bessel_j0(x).abs() <= 1.0 + 1e-12);
    }

    #[test]
    fn default_sequence_fits_free_window(tau_us in 0.2..=25.0f64) {
        let cfg = ExperimentConfig::default();
        prop_assert!(default_sequence(&cfg, tau_us * 1e-6).is_ok());
    }

    #[test]
    fn fringe_fit_recovers_exact_model(
        p0 in 0.15..0.85f64,
        half_c in 0.02..0.4f64,
        phi0 in -PI..PI,
    ) {
        // Keep every probability strictly inside (0, 1).
        let half_c = half_c.min(0.95 * p0.min(1.0 - p0));
        let phis: Vec<f64> = (0..12).map(|k| k as f64 * PI / 6.0).collect();
        let p: Vec<f64> = phis.iter().map(|&x| p0 + half_c * (x - phi0).cos()).collect();
        let var = vec![0.0; phis.len()];
        let fit = fit_fringe_values(&phis, &p, &var);
        prop_assert!(!fit.degenerate);
        prop_assert!((fit.p0 - p0).abs() < 1e-9);
        prop_assert!((fit.contrast - 2.0 * half_c).abs() < 1e-9);
        prop_assert!(wrap_angle(fit.phase - phi0).abs() < 1e-9);
    }

    #[test]
    fn balanced_gap_equalizes_window_masses(
        t_rf_plus_ns in 80.0..120.0f64,
        t_rf_minus_ns in 60.0..120.0f64,
        theta1_deg in 110.0..170.0f64,
        theta2_deg in 100.0..165.0f64,
    ) {
        let cfg = ExperimentConfig {
            t_rf_plus: t_rf_plus_ns * 1e-9,
            t_rf_minus: t_rf_minus_ns * 1e-9,
            delta_t_plus: 0.0,
            theta1: theta1_deg.to_radians(),
            theta2: theta2_deg.to_radians(),
            ..ExperimentConfig::default()
        };
        match balance_delta_t_minus_within(&cfg, 400.0) {
            // The σ⁻ pair can be too heavy at zero gap; nothing to balance.
            Err(SequenceError::BalanceBracket { .. }) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
            Ok(gap) => {
                let plus = PulseSpec::rf_pair(
                    0.0,
                    t_rf_plus_ns,
                    0.0,
                    EventPolarization::SigmaPlus,
                    theta1_deg,
                );
                let minus = PulseSpec::rf_pair(
                    0.0,
                    t_rf_minus_ns,
                    gap * 1e9,
                    EventPolarization::SigmaMinus,
                    theta2_deg,
                );
                let ratio = minus.dipole_window().total_mass()
                    / plus.dipole_window().total_mass();
                prop_assert!((ratio - 1.0).abs() <= 1e-3, "mass ratio {ratio}");
            }
        }
    }
}

// --- timeline round-trip ------------------------------------------------------

#[derive(Clone, Debug)]
enum GenEvent {
    Mw { duration_ns: f64, phase: f64 },
    Rf { duration_ns: f64, gap_ns: f64, plus: bool, rotation_deg: f64, return_phase: f64 },
}

fn event_strategy() -> impl Strategy<Value = GenEvent> {
    prop_oneof![
        (10.0..900.0f64, -10.0..10.0f64)
            .prop_map(|(duration_ns, phase)| GenEvent::Mw { duration_ns, phase }),
        (
            10.0..300.0f64,
            0.0..50.0f64,
            any::<bool>(),
            1.0..179.0f64,
            prop_oneof![Just(PI), (0.0..6.2f64)],
        )
            .prop_map(|(duration_ns, gap_ns, plus, rotation_deg, return_phase)| GenEvent::Rf {
                duration_ns,
                gap_ns,
                plus,
                rotation_deg,
                return_phase,
            }),
    ]
}

fn timeline_strategy() -> impl Strategy<Value = Timeline> {
    (
        0.0..2000.0f64,
        prop::collection::vec((event_strategy(), 0.01..800.0f64), 1..6),
    )
        .prop_map(|(start0, items)| {
            let mut cursor = start0;
            let mut events = Vec::new();
            for (ev, margin) in items {
                let spec = match ev {
                    GenEvent::Mw { duration_ns, phase } => {
                        PulseSpec::mw(cursor, duration_ns, phase)
                    }
                    GenEvent::Rf { duration_ns, gap_ns, plus, rotation_deg, return_phase } => {
                        let pol = if plus {
                            EventPolarization::SigmaPlus
                        } else {
                            EventPolarization::SigmaMinus
                        };
                        let mut spec =
                            PulseSpec::rf_pair(cursor, duration_ns, gap_ns, pol, rotation_deg);
                        spec.return_phase_rad = return_phase;
                        spec
                    }
                };
                cursor = spec.end_ns() + margin;
                events.push(spec);
            }
            Timeline::new(events).expect("generated events are disjoint")
        })
}

proptest! {
    #[test]
    fn serialize_parse_round_trips(timeline in timeline_strategy()) {
        let text = serialize_sequence(&timeline);
        let back = parse_sequence(&text).unwrap();
        prop_assert_eq!(back, timeline);
    }
}

// --- generator determinism ----------------------------------------------------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn stochastic_tables_are_seed_deterministic(seed in any::<u64>(), n in 300usize..2048) {
        let a = gen_exp_correlated(n, 150, seed).unwrap();
        let b = gen_exp_correlated(n, 150, seed).unwrap();
        prop_assert_eq!(&a.samples, &b.samples);
        let peak = a.samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        prop_assert_eq!(peak, 1.0);

        let w = gen_white_20pt(n, seed).unwrap();
        let w2 = gen_white_20pt(n, seed).unwrap();
        prop_assert_eq!(&w.samples, &w2.samples);
        let peak = w.samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        prop_assert_eq!(peak, 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]
    #[test]
    fn monte_carlo_scan_is_seed_deterministic(seed in any::<u64>()) {
        let cfg = ExperimentConfig {
            seed,
            ..ExperimentConfig::default()
        };
        let timeline = default_sequence(&cfg, 9.0e-6).unwrap();
        let noise = NoiseModel::PairGaussian { sigma_f: 8.0, g1: 0.4 };
        let grid: Vec<f64> = (0..5).map(|k| k as f64 * 1.3).collect();
        let a = scan_mw_phase(&cfg, &timeline, &noise, &grid, 64).unwrap();
        let b = scan_mw_phase(&cfg, &timeline, &noise, &grid, 64).unwrap();
        let hits = |r: &rydsense_core::ramsey::RamseyResult| -> Vec<u64> {
            r.points.iter().map(|s| s.successes).collect()
        };
        prop_assert_eq!(hits(&a), hits(&b));
    }
}
