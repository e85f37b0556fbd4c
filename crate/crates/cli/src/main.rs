//! Differential Rydberg electrometer simulator: figure-reproduction scans,
//! stochastic waveform tooling, and sensitivity reports over a common
//! experiment configuration.

mod output;

use std::fmt::Write as _;
use std::f64::consts::{FRAC_PI_2, TAU};
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use output::{CsvCurve, RunOutput};
use rydsense_core::analysis::{
    contrast_gaussian, contrast_sine, fit_exponential_correlation, frequency_response,
    sensitivity_report,
};
use rydsense_core::fieldgen::{
    autocorrelation, gen_exp_correlated, gen_white_20pt, pulse_pair, SAMPLE_PERIOD_S,
};
use rydsense_core::ramsey::{
    calibrate_alpha, scan_delay, scan_mw_phase, scan_pulse_start, ExperimentConfig, NoiseModel,
    PhaseKernel, SimPath, PULSE_SCAN_TAU,
};
use rydsense_core::sequence::{balance_delta_t_minus, default_sequence, EventPolarization,
    PulseSpec};

#[derive(Parser)]
#[command(name = "rydsense", version, about = "Rydberg differential electrometer simulator")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment configuration file (TOML mirroring the config field names);
    /// omitted fields keep the built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Monte-Carlo master seed (precedence: flag, RYDSENSE_SEED, config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Shots per scan setting (also the averaging count k for `sensitivity`).
    #[arg(long, global = true, default_value_t = 10_000)]
    shots: u64,
    /// Output directory for CSV/report/manifest artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads for Monte-Carlo scans; 0 keeps the library default.
    /// Results are independent of this value.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Simulation tier: `analytic` samples the field at the pair centers,
    /// `dipole` integrates it against the dipole windows (default), `full`
    /// runs the ladder dynamics.
    #[arg(long, global = true, value_enum)]
    path: Option<PathArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PathArg {
    Analytic,
    Dipole,
    Full,
}

#[derive(Subcommand)]
enum Command {
    /// Microwave-phase fringe scan with optional field noise.
    Fringes(FringesArgs),
    /// Transition probability vs probe pulse-pair timing offset.
    Fig2b(Fig2bArgs),
    /// Dipole-window frequency response and -3 dB bandwidth.
    Fig2c(Fig2cArgs),
    /// Contrast ratio vs stochastic field amplitude (uncorrelated pairs).
    Fig3(Fig3Args),
    /// Contrast vs pair delay under exponentially correlated noise.
    Fig4a(Fig4aArgs),
    /// Contrast vs pair delay under an asynchronous sine field.
    Fig4b(Fig4bArgs),
    /// Synthesize a stochastic waveform table and report its statistics.
    Noise(NoiseArgs),
    /// Field-resolution report against the standard quantum limit.
    Sensitivity,
    /// Measure the per-pair phase gains from calibration fringe fits.
    CalibrateAlpha,
    /// Solve the sigma- intra-pair gap that balances the pair responses.
    BalanceDt,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum NoiseKind {
    None,
    /// Fresh Gaussian pair samples with correlation --g1.
    Pair,
    /// Exponentially correlated table (--j0 samples of 10 ns).
    Exp,
    /// White table with a 200 ns moving-average floor.
    White,
    /// Sinusoid, random phase per shot unless --sine-phase is given.
    Sine,
}

#[derive(Args)]
struct NoiseOpts {
    #[arg(long, value_enum, default_value_t = NoiseKind::None)]
    noise: NoiseKind,
    /// Stochastic field amplitude sigma_f, mV/m (pair/exp/white).
    #[arg(long, default_value_t = 37.0)]
    sigma: f64,
    /// Pair-sample correlation coefficient (pair only).
    #[arg(long, default_value_t = 0.0)]
    g1: f64,
    /// Correlation length in 10 ns samples (exp only).
    #[arg(long, default_value_t = 150)]
    j0: usize,
    /// Table length in samples (exp/white).
    #[arg(long, default_value_t = 131_072)]
    n_samples: usize,
    /// Sine amplitude, mV/m.
    #[arg(long, default_value_t = 18.8)]
    amp: f64,
    /// Sine frequency, Hz.
    #[arg(long, default_value_t = 225e3)]
    freq: f64,
    /// Fix the sine phase (rad) instead of drawing it per shot.
    #[arg(long)]
    sine_phase: Option<f64>,
}

#[derive(Args)]
struct FringesArgs {
    #[command(flatten)]
    noise: NoiseOpts,
    /// Pair delay tau = t_minus - t_plus, seconds.
    #[arg(long, default_value_t = 9.0e-6)]
    tau: f64,
    /// Number of analysis phases on [0, 2pi).
    #[arg(long, default_value_t = 16)]
    phi_points: usize,
}

#[derive(Args)]
struct Fig2bArgs {
    /// Probe pulse-pair amplitude, mV/m.
    #[arg(long, default_value_t = 37.6)]
    f0: f64,
    /// Pulse-start offset sweep, microseconds.
    #[arg(long, default_value_t = -1.0)]
    offset_min_us: f64,
    #[arg(long, default_value_t = 1.0)]
    offset_max_us: f64,
    #[arg(long, default_value_t = 41)]
    points: usize,
    /// Analysis phase, rad; the quadrature point by default.
    #[arg(long, default_value_t = FRAC_PI_2)]
    phi_mw: f64,
}

#[derive(Args)]
struct Fig2cArgs {
    /// Frequency sweep, MHz.
    #[arg(long, default_value_t = 0.1)]
    nu_min_mhz: f64,
    #[arg(long, default_value_t = 12.0)]
    nu_max_mhz: f64,
    #[arg(long, default_value_t = 120)]
    points: usize,
}

#[derive(Args)]
struct Fig3Args {
    /// Field amplitudes sigma_f to scan, mV/m.
    #[arg(long, value_delimiter = ',', default_value = "10,20,37,60,100")]
    sigmas: Vec<f64>,
    /// Pair delay, seconds.
    #[arg(long, default_value_t = 9.0e-6)]
    tau: f64,
    #[arg(long, default_value_t = 12)]
    phi_points: usize,
}

#[derive(Args)]
struct Fig4aArgs {
    /// Pair delays to scan, microseconds.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0.2,0.5,0.8,1.2,1.7,2.3,3,4,5.5,7.5,10,12.5,15"
    )]
    taus_us: Vec<f64>,
    /// Field amplitude sigma_f, mV/m.
    #[arg(long, default_value_t = 37.0)]
    sigma: f64,
    /// Correlation length in 10 ns samples.
    #[arg(long, default_value_t = 150)]
    j0: usize,
    /// Table length in samples.
    #[arg(long, default_value_t = 131_072)]
    n_samples: usize,
    #[arg(long, default_value_t = 12)]
    phi_points: usize,
}

#[derive(Args)]
struct Fig4bArgs {
    /// Pair delays to scan, microseconds.
    #[arg(long, value_delimiter = ',')]
    taus_us: Option<Vec<f64>>,
    /// Sine amplitude, mV/m.
    #[arg(long, default_value_t = 18.8)]
    amp: f64,
    /// Sine frequency, Hz.
    #[arg(long, default_value_t = 225e3)]
    freq: f64,
    #[arg(long, default_value_t = 12)]
    phi_points: usize,
}

#[derive(Args)]
struct NoiseArgs {
    /// Generator recipe.
    #[arg(long, value_enum)]
    kind: TableKind,
    /// Correlation length in 10 ns samples (exp only).
    #[arg(long, default_value_t = 150)]
    j0: usize,
    #[arg(long, default_value_t = 131_072)]
    n_samples: usize,
    /// Autocorrelation estimation range, microseconds (default 5 for exp,
    /// 0.5 for white).
    #[arg(long)]
    max_lag_us: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TableKind {
    Exp,
    White,
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    if cli.global.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.global.workers)
            .build_global()
            .context("initializing worker pool")?;
    }
    let cfg = load_config(&cli.global)?;
    match &cli.command {
        Command::Fringes(a) => cmd_fringes(&cfg, &cli.global, a),
        Command::Fig2b(a) => cmd_fig2b(&cfg, &cli.global, a),
        Command::Fig2c(a) => cmd_fig2c(&cfg, &cli.global, a),
        Command::Fig3(a) => cmd_fig3(&cfg, &cli.global, a),
        Command::Fig4a(a) => cmd_fig4a(&cfg, &cli.global, a),
        Command::Fig4b(a) => cmd_fig4b(&cfg, &cli.global, a),
        Command::Noise(a) => cmd_noise(&cfg, &cli.global, a),
        Command::Sensitivity => cmd_sensitivity(&cfg, &cli.global),
        Command::CalibrateAlpha => cmd_calibrate(&cfg, &cli.global),
        Command::BalanceDt => cmd_balance(&cfg, &cli.global),
    }
}

fn load_config(global: &Global) -> Result<ExperimentConfig> {
    let mut cfg = match &global.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    } else if let Ok(env_seed) = std::env::var("RYDSENSE_SEED") {
        cfg.seed = env_seed
            .parse()
            .context("RYDSENSE_SEED must be an unsigned integer")?;
    }
    if let Some(path) = global.path {
        match path {
            PathArg::Analytic => {
                cfg.path = SimPath::Analytic;
                cfg.instant_sampling = true;
            }
            PathArg::Dipole => {
                cfg.path = SimPath::Analytic;
                cfg.instant_sampling = false;
            }
            PathArg::Full => {
                cfg.path = SimPath::FullDynamics;
                cfg.instant_sampling = false;
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Key=value report: printed to stdout and saved alongside the CSVs.
#[derive(Default)]
struct Report(String);

impl Report {
    fn kv(&mut self, key: &str, value: impl std::fmt::Display) {
        writeln!(self.0, "{key}={value}").unwrap();
    }
}

fn phase_grid(points: usize) -> Vec<f64> {
    (0..points).map(|i| i as f64 * TAU / points as f64).collect()
}

fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![lo];
    }
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect()
}

/// Build the shot-noise model plus the predicted contrast ratio at delay
/// `tau` from the matching closed-form predictor.
fn build_noise(cfg: &ExperimentConfig, opts: &NoiseOpts, tau: f64) -> Result<(NoiseModel, f64)> {
    Ok(match opts.noise {
        NoiseKind::None => (NoiseModel::None, 1.0),
        NoiseKind::Pair => (
            NoiseModel::PairGaussian {
                sigma_f: opts.sigma,
                g1: opts.g1,
            },
            contrast_gaussian(cfg.alpha, opts.sigma, opts.g1),
        ),
        NoiseKind::Exp => {
            let table = gen_exp_correlated(opts.n_samples, opts.j0, cfg.seed)?;
            let tau_c = opts.j0 as f64 * SAMPLE_PERIOD_S;
            let g1 = (-tau / tau_c).exp();
            (
                NoiseModel::Table {
                    table: Arc::new(table),
                    sigma_f: opts.sigma,
                },
                contrast_gaussian(cfg.alpha, opts.sigma, g1),
            )
        }
        NoiseKind::White => {
            let table = gen_white_20pt(opts.n_samples, cfg.seed)?;
            let g1 = (1.0 - tau / 200e-9).max(0.0);
            (
                NoiseModel::Table {
                    table: Arc::new(table),
                    sigma_f: opts.sigma,
                },
                contrast_gaussian(cfg.alpha, opts.sigma, g1),
            )
        }
        NoiseKind::Sine => {
            // A fixed phase only shifts the fringe; contrast loss needs the
            // shot-to-shot phase average.
            let ratio = if opts.sine_phase.is_some() {
                1.0
            } else {
                contrast_sine(cfg.alpha, opts.amp, opts.freq, tau)
            };
            (
                NoiseModel::Sine {
                    amplitude: opts.amp,
                    freq: opts.freq,
                    phase: opts.sine_phase,
                },
                ratio,
            )
        }
    })
}

fn cmd_fringes(cfg: &ExperimentConfig, g: &Global, a: &FringesArgs) -> Result<()> {
    let timeline = default_sequence(cfg, a.tau)?;
    let (noise, cr_theory) = build_noise(cfg, &a.noise, a.tau)?;
    let grid = phase_grid(a.phi_points);
    let result = scan_mw_phase(cfg, &timeline, &noise, &grid, g.shots)?;
    let fit = result.fit.as_ref().context("fringe fit is degenerate")?;

    let mut out = RunOutput::new("fringes", &g.out, cfg.seed, g.shots, g.workers);
    let rows = result
        .points
        .iter()
        .map(|p| {
            let theory = cfg.p0 + 0.5 * cfg.c0 * cr_theory * p.setting.cos();
            [p.setting, p.p_hat, p.p_err, theory]
        })
        .collect();
    out.push_curve(CsvCurve {
        name: "fringes",
        x_label: "analysis phase, rad",
        rows,
    });
    let mut rep = Report::default();
    rep.kv("p0", fit.p0);
    rep.kv("p0_err", fit.p0_err);
    rep.kv("contrast", fit.contrast);
    rep.kv("contrast_err", fit.contrast_err);
    rep.kv("phase_rad", fit.phase);
    rep.kv("phase_err_rad", fit.phase_err);
    rep.kv("contrast_ratio", fit.contrast / cfg.c0);
    rep.kv("contrast_ratio_theory", cr_theory);
    print!("{}", rep.0);
    out.push_text("fringes_fit.txt".into(), rep.0);
    out.write(cfg)
}

fn cmd_fig2b(cfg: &ExperimentConfig, g: &Global, a: &Fig2bArgs) -> Result<()> {
    let offsets: Vec<f64> = linspace(a.offset_min_us * 1e-6, a.offset_max_us * 1e-6, a.points);
    let result = scan_pulse_start(cfg, a.f0, &offsets, g.shots, a.phi_mw)?;
    // Deterministic prediction for each offset from the same kernel.
    let timeline = default_sequence(cfg, PULSE_SCAN_TAU)?;
    let kernel = PhaseKernel::new(cfg, &timeline)?;
    let t_plus = kernel.plus_center().context("sequence has no sigma+ pair")?;
    let theory =
        |off: f64| -> Result<f64> { Ok(kernel.expected_p(&pulse_pair(a.f0, t_plus + off)?, a.phi_mw)) };

    let mut out = RunOutput::new("fig2b", &g.out, cfg.seed, g.shots, g.workers);
    let mut rows = Vec::with_capacity(offsets.len());
    for p in &result.points {
        rows.push([p.setting, p.p_hat, p.p_err, theory(p.setting)?]);
    }
    out.push_curve(CsvCurve {
        name: "fig2b",
        x_label: "pulse-start offset from the sigma+ pair center, s",
        rows,
    });
    let mut rep = Report::default();
    rep.kv("f0_mv_per_m", a.f0);
    for (key, off) in [
        ("plateau_first_pulse", -0.75e-6),
        ("plateau_both_pulses", -0.25e-6),
        ("plateau_second_pulse", 0.25e-6),
    ] {
        rep.kv(key, theory(off)?);
    }
    print!("{}", rep.0);
    out.push_text("fig2b_plateaus.txt".into(), rep.0);
    out.write(cfg)
}

fn cmd_fig2c(cfg: &ExperimentConfig, g: &Global, a: &Fig2cArgs) -> Result<()> {
    let grid: Vec<f64> = linspace(a.nu_min_mhz * 1e6, a.nu_max_mhz * 1e6, a.points);
    let resp = frequency_response(cfg, &grid);
    let mut out = RunOutput::new("fig2c", &g.out, cfg.seed, g.shots, g.workers);
    let rows = resp
        .nu
        .iter()
        .zip(&resp.gain)
        .map(|(&nu, &gain)| [nu, gain, 0.0, gain])
        .collect();
    out.push_curve(CsvCurve {
        name: "fig2c",
        x_label: "field frequency, Hz",
        rows,
    });
    let mut rep = Report::default();
    rep.kv("cutoff_3db_mhz", resp.cutoff_3db / 1e6);
    print!("{}", rep.0);
    out.push_text("fig2c_bandwidth.txt".into(), rep.0);
    out.write(cfg)
}

fn cmd_fig3(cfg: &ExperimentConfig, g: &Global, a: &Fig3Args) -> Result<()> {
    let timeline = default_sequence(cfg, a.tau)?;
    let grid = phase_grid(a.phi_points);
    let mut out = RunOutput::new("fig3", &g.out, cfg.seed, g.shots, g.workers);
    let mut rows = Vec::with_capacity(a.sigmas.len());
    let mut rep = Report::default();
    for &sigma_f in &a.sigmas {
        let noise = NoiseModel::PairGaussian { sigma_f, g1: 0.0 };
        let result = scan_mw_phase(cfg, &timeline, &noise, &grid, g.shots)?;
        let fit = result.fit.as_ref().context("fringe fit is degenerate")?;
        let theory = contrast_gaussian(cfg.alpha, sigma_f, 0.0);
        rows.push([
            sigma_f,
            fit.contrast / cfg.c0,
            fit.contrast_err / cfg.c0,
            theory,
        ]);
        rep.kv(
            &format!("cr_at_{sigma_f}"),
            format!("{} (theory {theory})", fit.contrast / cfg.c0),
        );
    }
    out.push_curve(CsvCurve {
        name: "fig3",
        x_label: "stochastic field amplitude sigma_f, mV/m",
        rows,
    });
    print!("{}", rep.0);
    out.push_text("fig3_summary.txt".into(), rep.0);
    out.write(cfg)
}

fn delay_scan_to_curve(
    cfg: &ExperimentConfig,
    taus: &[f64],
    points: Vec<rydsense_core::ramsey::DelayPoint>,
    theory: impl Fn(f64) -> f64,
) -> Vec<[f64; 4]> {
    taus.iter()
        .zip(points)
        .map(|(&tau, p)| {
            [
                tau,
                p.contrast / cfg.c0,
                p.contrast_err / cfg.c0,
                theory(tau),
            ]
        })
        .collect()
}

fn cmd_fig4a(cfg: &ExperimentConfig, g: &Global, a: &Fig4aArgs) -> Result<()> {
    let taus: Vec<f64> = a.taus_us.iter().map(|t| t * 1e-6).collect();
    let table = gen_exp_correlated(a.n_samples, a.j0, cfg.seed)?;
    let noise = NoiseModel::Table {
        table: Arc::new(table),
        sigma_f: a.sigma,
    };
    let points = scan_delay(cfg, &noise, &taus, a.phi_points, g.shots)?;
    let tau_c = a.j0 as f64 * SAMPLE_PERIOD_S;
    let theory = |tau: f64| contrast_gaussian(cfg.alpha, a.sigma, (-tau / tau_c).exp());

    let mut out = RunOutput::new("fig4a", &g.out, cfg.seed, g.shots, g.workers);
    out.push_curve(CsvCurve {
        name: "fig4a",
        x_label: "pair delay tau, s",
        rows: delay_scan_to_curve(cfg, &taus, points, theory),
    });
    let mut rep = Report::default();
    rep.kv("tau_c_us", tau_c * 1e6);
    rep.kv("sigma_f_mv_per_m", a.sigma);
    print!("{}", rep.0);
    out.push_text("fig4a_params.txt".into(), rep.0);
    out.write(cfg)
}

fn cmd_fig4b(cfg: &ExperimentConfig, g: &Global, a: &Fig4bArgs) -> Result<()> {
    let taus: Vec<f64> = match &a.taus_us {
        Some(t) => t.iter().map(|t| t * 1e-6).collect(),
        // Two full periods of the contrast oscillation.
        None => linspace(0.2e-6, 0.2e-6 + 2.0 / a.freq, 25),
    };
    let noise = NoiseModel::Sine {
        amplitude: a.amp,
        freq: a.freq,
        phase: None,
    };
    let points = scan_delay(cfg, &noise, &taus, a.phi_points, g.shots)?;
    let theory = |tau: f64| contrast_sine(cfg.alpha, a.amp, a.freq, tau);

    let mut out = RunOutput::new("fig4b", &g.out, cfg.seed, g.shots, g.workers);
    out.push_curve(CsvCurve {
        name: "fig4b",
        x_label: "pair delay tau, s",
        rows: delay_scan_to_curve(cfg, &taus, points, theory),
    });
    let mut rep = Report::default();
    rep.kv("amplitude_mv_per_m", a.amp);
    rep.kv("freq_hz", a.freq);
    rep.kv("period_us", 1e6 / a.freq);
    print!("{}", rep.0);
    out.push_text("fig4b_params.txt".into(), rep.0);
    out.write(cfg)
}

fn cmd_noise(cfg: &ExperimentConfig, g: &Global, a: &NoiseArgs) -> Result<()> {
    let (name, table) = match a.kind {
        TableKind::Exp => ("noise_exp", gen_exp_correlated(a.n_samples, a.j0, cfg.seed)?),
        TableKind::White => ("noise_white", gen_white_20pt(a.n_samples, cfg.seed)?),
    };
    let max_lag = a
        .max_lag_us
        .unwrap_or(match a.kind {
            TableKind::Exp => 5.0,
            TableKind::White => 0.5,
        })
        * 1e-6;
    let est = autocorrelation(&table, max_lag)?;

    let mut rep = Report::default();
    rep.kv("n_samples", a.n_samples);
    rep.kv("sample_period_ns", table.sample_period * 1e9);
    rep.kv("sigma_s", table.sigma_s());
    let theory: Box<dyn Fn(f64) -> f64> = match a.kind {
        TableKind::Exp => {
            let tau_c = a.j0 as f64 * SAMPLE_PERIOD_S;
            let fit = fit_exponential_correlation(&est)?;
            rep.kv("tau_c_us", fit.tau_c * 1e6);
            rep.kv("tau_c_nominal_us", tau_c * 1e6);
            rep.kv("r_squared", fit.r_squared);
            Box::new(move |lag| (-lag / tau_c).exp())
        }
        TableKind::White => {
            // Moving average of 20 samples: triangular correlation with
            // support 200 ns; report the worst leakage beyond it.
            let n_eff = (a.n_samples / 20) as f64;
            let beyond = est
                .lags
                .iter()
                .zip(&est.g1)
                .filter(|&(&lag, _)| lag > 200e-9 + 1e-12)
                .fold(0.0f64, |m, (_, &g)| m.max(g.abs()));
            rep.kv("support_ns", 200.0);
            rep.kv("max_abs_g1_beyond_support", beyond);
            rep.kv("bound_3_over_sqrt_neff", 3.0 / n_eff.sqrt());
            Box::new(|lag| (1.0 - lag / 200e-9).max(0.0))
        }
    };

    let mut out = RunOutput::new("noise", &g.out, cfg.seed, g.shots, g.workers);
    let rows = est
        .lags
        .iter()
        .zip(&est.g1)
        .map(|(&lag, &g1)| [lag, g1, 0.0, theory(lag)])
        .collect();
    out.push_curve(CsvCurve {
        name: match a.kind {
            TableKind::Exp => "noise_exp_autocorr",
            TableKind::White => "noise_white_autocorr",
        },
        x_label: "lag, s",
        rows,
    });
    out.push_waveform(format!("{name}.txt"), table);
    print!("{}", rep.0);
    out.push_text(format!("{name}_report.txt"), rep.0);
    out.write(cfg)
}

fn cmd_sensitivity(cfg: &ExperimentConfig, g: &Global) -> Result<()> {
    let report = sensitivity_report(cfg, g.shots.max(1));
    let mut rep = Report::default();
    rep.kv("sigma_single_mv_per_m", report.sigma_single);
    rep.kv("k", report.k);
    rep.kv("sigma_k_mv_per_m", report.sigma_k);
    rep.kv("sigma_sql_mv_per_m", report.sigma_sql);
    rep.kv("sigma_sql_naive_mv_per_m", report.sigma_sql_naive);
    rep.kv("db_below_sql", report.db_below_sql);
    rep.kv("dipole_on_time_ns", report.t * 1e9);
    print!("{}", rep.0);
    let mut out = RunOutput::new("sensitivity", &g.out, cfg.seed, g.shots, g.workers);
    out.push_text("sensitivity.txt".into(), rep.0);
    out.write(cfg)
}

fn cmd_calibrate(cfg: &ExperimentConfig, g: &Global) -> Result<()> {
    let cal = calibrate_alpha(cfg)?;
    let mut rep = Report::default();
    rep.kv("alpha_plus_rad_per_mv_m", cal.alpha_plus);
    rep.kv("alpha_minus_rad_per_mv_m", cal.alpha_minus);
    rep.kv("delta_f_mv_per_m", cal.delta_f);
    rep.kv("alpha_configured_rad_per_mv_m", cfg.alpha);
    rep.kv("ratio_minus_over_plus", cal.alpha_minus / cal.alpha_plus);
    print!("{}", rep.0);
    let mut out = RunOutput::new("calibrate-alpha", &g.out, cfg.seed, g.shots, g.workers);
    out.push_text("calibration.txt".into(), rep.0);
    out.write(cfg)
}

fn cmd_balance(cfg: &ExperimentConfig, g: &Global) -> Result<()> {
    let gap = balance_delta_t_minus(cfg)?;
    let plus = PulseSpec::rf_pair(
        0.0,
        cfg.t_rf_plus * 1e9,
        cfg.delta_t_plus * 1e9,
        EventPolarization::SigmaPlus,
        cfg.theta1.to_degrees(),
    );
    let minus = PulseSpec::rf_pair(
        0.0,
        cfg.t_rf_minus * 1e9,
        gap * 1e9,
        EventPolarization::SigmaMinus,
        cfg.theta2.to_degrees(),
    );
    let ratio = minus.dipole_window().total_mass() / plus.dipole_window().total_mass();
    let mut rep = Report::default();
    rep.kv("delta_t_minus_ns", gap * 1e9);
    rep.kv("mass_ratio_minus_over_plus", ratio);
    rep.kv("configured_delta_t_minus_ns", cfg.delta_t_minus * 1e9);
    print!("{}", rep.0);
    let mut out = RunOutput::new("balance-dt", &g.out, cfg.seed, g.shots, g.workers);
    out.push_text("balance.txt".into(), rep.0);
    out.write(cfg)
}
