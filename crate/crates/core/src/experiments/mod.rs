//! Experiment drivers: parameter sweeps over the discretization, adaptivity
//! and partitioning, with CSV output.
//!
//! Every runner returns its rows in grid order. A grid point whose solve fails
//! still yields a row, with `nan` in the result columns.

mod config;
mod runs;

use std::fs::File;
use std::io::Write;
use std::path::Path;

pub use config::{
    AdaptStudyConfig, AnisoConfig, ConvergenceConfig, ExperimentConfig, Frame, GuideCase, PartitionStudyConfig, PollutionConfig, SlabConfig,
    StabilityConfig,
};
pub use runs::{
    guide_case, run_adapt_study, run_aniso_sweep, run_convergence, run_partition_study, run_pollution_sweep, run_stability, slab_case,
    AdaptRun, AdaptStudy, AnisoRow, ConvergenceRow, PartitionStudy, PollutionRow, StabilityRow,
};

use serde::Serialize;

use crate::Result;

/// A CSV row with a fixed header.
pub trait CsvRow {
    fn header() -> &'static [&'static str];
    fn values(&self) -> Vec<String>;
    /// Whether the grid point failed.
    fn failed(&self) -> bool {
        false
    }
}

/// Format a float, writing `nan` for missing or non-finite values.
pub fn fmt_f64(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x}"),
        Some(x) if x.is_infinite() => if x > 0.0 { "inf" } else { "-inf" }.to_string(),
        _ => "nan".to_string(),
    }
}

pub fn fmt_usize(v: Option<usize>) -> String {
    v.map_or("nan".to_string(), |x| x.to_string())
}

pub fn write_rows<R: CsvRow, W: Write>(rows: &[R], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(R::header())?;
    for r in rows {
        out.write_record(r.values())?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_rows_to<R: CsvRow>(rows: &[R], path: &Path) -> Result<()> {
    write_rows(rows, File::create(path)?)
}

/// Record of one experiment run, written as `manifest.json`.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub experiment: String,
    pub version: &'static str,
    pub seed: u64,
    pub threads: usize,
    pub config: ExperimentConfig,
    pub files: Vec<String>,
    pub rows: usize,
    pub failed_rows: usize,
    pub wall_time: f64,
}

impl Manifest {
    pub fn new(experiment: &str, config: &ExperimentConfig) -> Self {
        Self {
            experiment: experiment.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            seed: config.seed,
            threads: rayon::current_num_threads(),
            config: config.clone(),
            files: Vec::new(),
            rows: 0,
            failed_rows: 0,
            wall_time: 0.0,
        }
    }

    /// Record written files by name relative to the output directory.
    pub fn add_files(&mut self, files: &[std::path::PathBuf]) {
        for f in files {
            let name = f.file_name().map_or_else(|| f.display().to_string(), |n| n.to_string_lossy().into_owned());
            self.files.push(name);
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let f = File::create(dir.join("manifest.json"))?;
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }
}

/// The experiment families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Pollution,
    Aniso,
    Adapt,
    Partition,
    Convergence,
    Stability,
}

impl Experiment {
    pub const ALL: [Experiment; 6] =
        [Experiment::Pollution, Experiment::Aniso, Experiment::Adapt, Experiment::Partition, Experiment::Convergence, Experiment::Stability];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Pollution => "pollution",
            Experiment::Aniso => "aniso",
            Experiment::Adapt => "adapt",
            Experiment::Partition => "partition",
            Experiment::Convergence => "convergence",
            Experiment::Stability => "stability",
        }
    }
}

impl std::str::FromStr for Experiment {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL.into_iter().find(|e| e.name() == s).ok_or_else(|| crate::Error::Config(format!("unknown experiment {s:?}")))
    }
}

fn table<R: CsvRow>(rows: &[R], dir: &Path, name: &str, m: &mut Manifest) -> Result<()> {
    let path = dir.join(name);
    write_rows_to(rows, &path)?;
    m.add_files(&[path]);
    m.rows += rows.len();
    m.failed_rows += rows.iter().filter(|r| r.failed()).count();
    Ok(())
}

/// Run one experiment from its config section, write its tables and
/// `manifest.json` into `dir` (created if missing) and return the manifest.
///
/// Per-point solver failures are recorded in the tables and counted in
/// `failed_rows`; any other error aborts the run.
pub fn run_to_dir(experiment: Experiment, cfg: &ExperimentConfig, dir: &Path) -> Result<Manifest> {
    let start = std::time::Instant::now();
    std::fs::create_dir_all(dir)?;
    let mut m = Manifest::new(experiment.name(), cfg);
    match experiment {
        Experiment::Pollution => table(&run_pollution_sweep(&cfg.pollution)?, dir, "pollution.csv", &mut m)?,
        Experiment::Aniso => table(&run_aniso_sweep(&cfg.aniso)?, dir, "aniso.csv", &mut m)?,
        Experiment::Convergence => table(&run_convergence(&cfg.convergence)?, dir, "convergence.csv", &mut m)?,
        Experiment::Stability => table(&run_stability(&cfg.stability)?, dir, "stability.csv", &mut m)?,
        Experiment::Adapt => {
            let study = run_adapt_study(&cfg.adapt)?;
            m.add_files(&study.write(dir)?);
            m.rows = study.runs.len();
            m.failed_rows = study.failures();
        }
        Experiment::Partition => {
            let study = run_partition_study(&cfg.partition)?;
            m.add_files(&study.write(dir)?);
            m.rows = study.traces.iter().map(|t| t.records.len()).sum();
        }
    }
    m.wall_time = start.elapsed().as_secs_f64();
    m.write(dir)?;
    Ok(m)
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len()) as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests;
