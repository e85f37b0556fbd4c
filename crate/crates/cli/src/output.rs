//! Result export: CSV curves plus a per-run manifest that records everything
//! needed to regenerate them (config snapshot, seed, argv, software version).

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use rydsense_core::fieldgen::WaveformTable;
use rydsense_core::ramsey::ExperimentConfig;
use serde::Serialize;

/// One curve in the common four-column layout. Values are written in
/// shortest-round-trip decimal form, so files are bit-reproducible.
pub struct CsvCurve {
    pub name: &'static str,
    /// Meaning of the x column, recorded in the manifest.
    pub x_label: &'static str,
    pub rows: Vec<[f64; 4]>,
}

impl CsvCurve {
    fn render(&self) -> String {
        let mut s = String::from("x,y,yerr,y_theory\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{},{}\n", r[0], r[1], r[2], r[3]));
        }
        s
    }
}

#[derive(Serialize)]
struct RunManifest<'a> {
    subcommand: &'a str,
    argv: Vec<String>,
    seed: u64,
    shots: u64,
    workers: usize,
    version: &'static str,
    unix_time_s: u64,
    wall_clock_s: f64,
    outputs: Vec<String>,
    columns: Vec<String>,
    config: &'a ExperimentConfig,
}

/// Collects artifacts in memory; nothing touches the filesystem until
/// `write`, so a failed run leaves no partial outputs behind.
pub struct RunOutput {
    subcommand: &'static str,
    dir: PathBuf,
    seed: u64,
    shots: u64,
    workers: usize,
    started: Instant,
    curves: Vec<CsvCurve>,
    /// (file name, contents) pairs for non-CSV artifacts.
    texts: Vec<(String, String)>,
    waveforms: Vec<(String, WaveformTable)>,
}

impl RunOutput {
    pub fn new(
        subcommand: &'static str,
        dir: &Path,
        seed: u64,
        shots: u64,
        workers: usize,
    ) -> Self {
        RunOutput {
            subcommand,
            dir: dir.to_path_buf(),
            seed,
            shots,
            workers,
            started: Instant::now(),
            curves: Vec::new(),
            texts: Vec::new(),
            waveforms: Vec::new(),
        }
    }

    pub fn push_curve(&mut self, curve: CsvCurve) {
        self.curves.push(curve);
    }

    pub fn push_text(&mut self, name: String, contents: String) {
        self.texts.push((name, contents));
    }

    pub fn push_waveform(&mut self, name: String, table: WaveformTable) {
        self.waveforms.push((name, table));
    }

    /// Write every artifact plus the manifest, and echo the report texts to
    /// stdout (key=value lines are the primary interface for report-style
    /// subcommands).
    pub fn write(self, cfg: &ExperimentConfig) -> Result<()> {
        fs::create_dir_all(&self.dir)
            .with_context(|| format!("creating output directory {}", self.dir.display()))?;
        let mut outputs = Vec::new();
        let mut columns = Vec::new();
        for curve in &self.curves {
            let name = format!("{}.csv", curve.name);
            let path = self.dir.join(&name);
            fs::write(&path, curve.render())
                .with_context(|| format!("writing {}", path.display()))?;
            columns.push(format!(
                "{name}: x={}, y,yerr as labeled by the subcommand, y_theory=model prediction",
                curve.x_label
            ));
            outputs.push(name);
        }
        for (name, contents) in &self.texts {
            let path = self.dir.join(name);
            fs::write(&path, contents)
                .with_context(|| format!("writing {}", path.display()))?;
            outputs.push(name.clone());
        }
        for (name, table) in &self.waveforms {
            let path = self.dir.join(name);
            table
                .save(&path)
                .with_context(|| format!("writing {}", path.display()))?;
            outputs.push(name.clone());
        }
        let manifest = RunManifest {
            subcommand: self.subcommand,
            argv: std::env::args().collect(),
            seed: self.seed,
            shots: self.shots,
            workers: self.workers,
            version: env!("CARGO_PKG_VERSION"),
            unix_time_s: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            wall_clock_s: self.started.elapsed().as_secs_f64(),
            outputs,
            columns,
            config: cfg,
        };
        let path = self.dir.join(format!("{}_manifest.toml", self.subcommand));
        let text = toml::to_string(&manifest).context("serializing manifest")?;
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}
