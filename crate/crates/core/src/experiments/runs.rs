use std::f64::consts::PI;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::config::*;
use super::{fmt_f64, fmt_usize, CsvRow};
use crate::adapt::{adapt_loop, AdaptConfig, AdaptTrace};
use crate::dpg::{assemble_solve, estimate_infsup};
use crate::mesh::{LabelScheme, Mesh, MeshBuilder, RefineMode};
use crate::partition::{replay, BalancePolicy, PartitionTrace};
use crate::physics::{plane_mode, power_loss, rectangular_mode, relative_l2_error, IndexProfile, ModeSpec, SlabGuide};
use crate::spaces::Orders;
use crate::{Error, Result, TestNormConfig, WaveProblem, C64};

/// Mesh, excited mode and problem for one point of the uniform-guide family.
///
/// In the physical frame the guided wavelength and the guide width are 1; the
/// 2D frequency is chosen so that mode `m` has unit guided wavelength.
pub fn guide_case(c: &GuideCase) -> Result<(Mesh, ModeSpec, WaveProblem)> {
    let scale = match c.frame {
        Frame::Physical => 1.0,
        Frame::UnitLength => c.length as f64,
    };
    let lambda = 1.0 / scale;
    let (mode, layers) = match c.dim {
        1 => (plane_mode(2.0 * PI * scale, 1.0), 0),
        2 => {
            let m = c.mode as f64;
            let omega = scale * (4.0 * PI * PI + m * m * PI * PI).sqrt();
            (rectangular_mode(c.mode, omega, lambda), c.layers)
        }
        d => return Err(Error::Config(format!("dim must be 1 or 2, got {d}"))),
    };
    let mesh = MeshBuilder::new(c.length, c.epw, layers, c.p).width(lambda).wavelength(lambda).build()?;
    let problem = WaveProblem::mode_excitation(mode, C64::new(1.0, 0.0), IndexProfile::uniform(1.0))?
        .with_enrichment(c.enrichment)
        .with_test_norm(TestNormConfig { alpha: c.alpha })
        .with_z_order(c.pz);
    Ok((mesh, mode, problem))
}

/// Slab guide, its guided modes and the initial seven-layer mesh.
pub fn slab_case(c: &SlabConfig) -> Result<(SlabGuide, Vec<ModeSpec>, Mesh)> {
    c.validate()?;
    let guide = SlabGuide::with_v(c.v, c.n_core, c.n_clad, 2.0 * PI / c.wavelength, c.box_factor)?;
    let modes = guide.modes();
    let first = modes.first().ok_or_else(|| Error::Config(format!("slab with V = {} guides no mode", c.v)))?;
    let lambda = 2.0 * PI / first.kz.re;
    let mesh = MeshBuilder::new(c.length, c.epw, 7, c.p)
        .width(guide.a)
        .wavelength(lambda)
        .layer_boundaries(guide.layer_boundaries())
        .labels(LabelScheme::Explicit(guide.layer_labels()))
        .build()?;
    Ok((guide, modes, mesh))
}

fn slab_problem(guide: &SlabGuide, mode: ModeSpec, c: &SlabConfig) -> Result<WaveProblem> {
    Ok(WaveProblem::mode_excitation(mode, C64::new(1.0, 0.0), guide.index_profile())?
        .with_enrichment(c.enrichment)
        .with_test_norm(TestNormConfig { alpha: c.alpha }))
}

/// Solve one guide case: relative error and power loss (percent), DOFs.
fn solve_case(c: &GuideCase) -> Result<(f64, f64, usize)> {
    let (mesh, mode, problem) = guide_case(c)?;
    let sol = assemble_solve(&mesh, &problem)?;
    Ok((relative_l2_error(&sol, &mode)?, power_loss(&sol)?, sol.n_dofs()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PollutionRow {
    pub dim: usize,
    pub length: usize,
    pub p: usize,
    pub epw: usize,
    pub rel_error_pct: Option<f64>,
    pub power_loss_pct: Option<f64>,
    pub dofs: Option<usize>,
    pub wall_time: f64,
    #[serde(skip)]
    pub error: Option<String>,
}

impl CsvRow for PollutionRow {
    fn header() -> &'static [&'static str] {
        &["dim", "length", "p", "epw", "rel_error_pct", "power_loss_pct", "dofs", "wall_time"]
    }
    fn values(&self) -> Vec<String> {
        vec![
            self.dim.to_string(),
            self.length.to_string(),
            self.p.to_string(),
            self.epw.to_string(),
            fmt_f64(self.rel_error_pct),
            fmt_f64(self.power_loss_pct),
            fmt_usize(self.dofs),
            format!("{:.6}", self.wall_time),
        ]
    }
    fn failed(&self) -> bool {
        self.error.is_some()
    }
}

/// Error and power loss over `orders × lengths`, ordered by order then length.
pub fn run_pollution_sweep(cfg: &PollutionConfig) -> Result<Vec<PollutionRow>> {
    cfg.validate()?;
    let grid: Vec<(usize, usize)> = cfg.orders.iter().flat_map(|&p| cfg.lengths.iter().map(move |&l| (p, l))).collect();
    Ok(grid
        .par_iter()
        .map(|&(p, length)| {
            let case = GuideCase {
                dim: cfg.dim,
                length,
                p,
                pz: None,
                epw: cfg.epw,
                layers: cfg.layers,
                enrichment: cfg.enrichment,
                alpha: cfg.alpha,
                mode: cfg.mode,
                frame: cfg.frame,
            };
            let start = Instant::now();
            let out = solve_case(&case);
            let wall_time = start.elapsed().as_secs_f64();
            let mut row = PollutionRow {
                dim: cfg.dim,
                length,
                p,
                epw: cfg.epw,
                rel_error_pct: None,
                power_loss_pct: None,
                dofs: None,
                wall_time,
                error: None,
            };
            match out {
                Ok((e, l, n)) => (row.rel_error_pct, row.power_loss_pct, row.dofs) = (Some(e), Some(l), Some(n)),
                Err(e) => row.error = Some(e.to_string()),
            }
            row
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnisoRow {
    /// `pz`, `epw_z` or `iso`.
    pub series: String,
    pub length: usize,
    pub px: usize,
    pub pz: usize,
    pub epw_z: usize,
    pub layers: usize,
    pub rel_error_pct: Option<f64>,
    pub power_loss_pct: Option<f64>,
    pub dofs: Option<usize>,
    pub wall_time: f64,
    #[serde(skip)]
    pub error: Option<String>,
}

impl CsvRow for AnisoRow {
    fn header() -> &'static [&'static str] {
        &["series", "length", "px", "pz", "epw_z", "layers", "rel_error_pct", "power_loss_pct", "dofs", "wall_time"]
    }
    fn values(&self) -> Vec<String> {
        vec![
            self.series.clone(),
            self.length.to_string(),
            self.px.to_string(),
            self.pz.to_string(),
            self.epw_z.to_string(),
            self.layers.to_string(),
            fmt_f64(self.rel_error_pct),
            fmt_f64(self.power_loss_pct),
            fmt_usize(self.dofs),
            format!("{:.6}", self.wall_time),
        ]
    }
    fn failed(&self) -> bool {
        self.error.is_some()
    }
}

/// Three series on a 2D guide: order along the guide, elements per wavelength
/// along the guide, and isotropic refinement as control.
pub fn run_aniso_sweep(cfg: &AnisoConfig) -> Result<Vec<AnisoRow>> {
    cfg.validate()?;
    let mut grid = Vec::new();
    for &pz in &cfg.pz {
        grid.push(("pz", pz, cfg.epw, cfg.layers));
    }
    for &e in &cfg.epw_z {
        grid.push(("epw_z", cfg.p, e, cfg.layers));
    }
    for &e in &cfg.iso_epw {
        // layers grow with the axial resolution at the base aspect ratio
        let layers = (e * cfg.layers).div_ceil(cfg.epw).max(1);
        grid.push(("iso", cfg.p, e, layers));
    }
    Ok(grid
        .par_iter()
        .map(|&(series, pz, epw, layers)| {
            let case = GuideCase {
                dim: 2,
                length: cfg.length,
                p: cfg.p,
                pz: (pz != cfg.p).then_some(pz),
                epw,
                layers,
                enrichment: cfg.enrichment,
                alpha: cfg.alpha,
                mode: cfg.mode,
                frame: Frame::Physical,
            };
            let start = Instant::now();
            let out = solve_case(&case);
            let mut row = AnisoRow {
                series: series.to_string(),
                length: cfg.length,
                px: cfg.p,
                pz,
                epw_z: epw,
                layers,
                rel_error_pct: None,
                power_loss_pct: None,
                dofs: None,
                wall_time: start.elapsed().as_secs_f64(),
                error: None,
            };
            match out {
                Ok((e, l, n)) => (row.rel_error_pct, row.power_loss_pct, row.dofs) = (Some(e), Some(l), Some(n)),
                Err(e) => row.error = Some(e.to_string()),
            }
            row
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub dim: usize,
    pub length: usize,
    pub p: usize,
    pub epw: usize,
    pub layers: usize,
    /// Element size along the guide.
    pub h: f64,
    pub rel_error_pct: Option<f64>,
    pub dofs: Option<usize>,
    pub wall_time: f64,
    #[serde(skip)]
    pub error: Option<String>,
}

impl CsvRow for ConvergenceRow {
    fn header() -> &'static [&'static str] {
        &["dim", "length", "p", "epw", "layers", "h", "rel_error_pct", "dofs", "wall_time"]
    }
    fn values(&self) -> Vec<String> {
        vec![
            self.dim.to_string(),
            self.length.to_string(),
            self.p.to_string(),
            self.epw.to_string(),
            self.layers.to_string(),
            format!("{}", self.h),
            fmt_f64(self.rel_error_pct),
            fmt_usize(self.dofs),
            format!("{:.6}", self.wall_time),
        ]
    }
    fn failed(&self) -> bool {
        self.error.is_some()
    }
}

/// Uniform refinement at each order, ordered by order then resolution.
pub fn run_convergence(cfg: &ConvergenceConfig) -> Result<Vec<ConvergenceRow>> {
    cfg.validate()?;
    let grid: Vec<(usize, usize)> = cfg.orders.iter().flat_map(|&p| cfg.epw.iter().map(move |&e| (p, e))).collect();
    Ok(grid
        .par_iter()
        .map(|&(p, epw)| {
            let layers = if cfg.dim == 1 { 0 } else { ((epw as f64 * cfg.layers_per_epw).round() as usize).max(1) };
            let case = GuideCase {
                dim: cfg.dim,
                length: cfg.length,
                p,
                pz: None,
                epw,
                layers,
                enrichment: cfg.enrichment,
                alpha: cfg.alpha,
                mode: cfg.mode,
                frame: Frame::Physical,
            };
            let start = Instant::now();
            let out = solve_case(&case);
            let mut row = ConvergenceRow {
                dim: cfg.dim,
                length: cfg.length,
                p,
                epw,
                layers,
                h: 1.0 / epw as f64,
                rel_error_pct: None,
                dofs: None,
                wall_time: start.elapsed().as_secs_f64(),
                error: None,
            };
            match out {
                Ok((e, _, n)) => (row.rel_error_pct, row.dofs) = (Some(e), Some(n)),
                Err(e) => row.error = Some(e.to_string()),
            }
            row
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityRow {
    pub omega: f64,
    pub p: usize,
    pub elements: usize,
    pub gamma_h: Option<f64>,
    pub continuity: Option<f64>,
    pub dofs: Option<usize>,
    #[serde(skip)]
    pub error: Option<String>,
}

impl CsvRow for StabilityRow {
    fn header() -> &'static [&'static str] {
        &["omega", "p", "elements", "gamma_h", "continuity", "dofs"]
    }
    fn values(&self) -> Vec<String> {
        vec![
            format!("{}", self.omega),
            self.p.to_string(),
            self.elements.to_string(),
            fmt_f64(self.gamma_h),
            fmt_f64(self.continuity),
            fmt_usize(self.dofs),
        ]
    }
    fn failed(&self) -> bool {
        self.error.is_some()
    }
}

/// Discrete inf-sup constant of a 1D guide of `length` wavelengths at each
/// frequency, under uniform refinement.
pub fn run_stability(cfg: &StabilityConfig) -> Result<Vec<StabilityRow>> {
    cfg.validate()?;
    let grid: Vec<(f64, usize)> = cfg.omegas.iter().flat_map(|&w| cfg.epw.iter().map(move |&e| (w, e))).collect();
    Ok(grid
        .par_iter()
        .map(|&(omega, epw)| {
            let elements = cfg.length * epw;
            let mut row = StabilityRow { omega, p: cfg.p, elements, gamma_h: None, continuity: None, dofs: None, error: None };
            let out = (|| -> Result<_> {
                let mesh = MeshBuilder::new(cfg.length, epw, 0, cfg.p).wavelength(2.0 * PI / omega).build()?;
                let problem = WaveProblem::mode_excitation(plane_mode(omega, 1.0), C64::new(1.0, 0.0), IndexProfile::uniform(1.0))?
                    .with_enrichment(cfg.enrichment)
                    .with_test_norm(TestNormConfig { alpha: cfg.alpha });
                estimate_infsup(&mesh, &problem)
            })();
            match out {
                Ok(r) => (row.gamma_h, row.continuity, row.dofs) = (Some(r.gamma_h), Some(r.continuity), Some(r.n_field + r.n_trace)),
                Err(e) => row.error = Some(e.to_string()),
            }
            row
        })
        .collect())
}

/// Adaptive run for one `(mode, strategy)` pair.
#[derive(Debug, Clone)]
pub struct AdaptRun {
    pub mode: usize,
    pub strategy: RefineMode,
    pub result: std::result::Result<AdaptTrace, String>,
}

#[derive(Debug, Clone)]
pub struct AdaptStudy {
    pub guide: SlabGuide,
    pub runs: Vec<AdaptRun>,
}

impl AdaptStudy {
    pub fn run(&self, mode: usize, strategy: RefineMode) -> Option<&AdaptTrace> {
        self.runs.iter().find(|r| r.mode == mode && r.strategy == strategy).and_then(|r| r.result.as_ref().ok())
    }

    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.result.is_err()).count()
    }

    /// One trace CSV per run plus a combined histogram table. Returns the
    /// files written.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut files = Vec::new();
        for r in &self.runs {
            if let Ok(trace) = &r.result {
                let path = dir.join(format!("adapt_mode{}_{}.csv", r.mode, r.strategy.name()));
                trace.write_csv(File::create(&path)?)?;
                files.push(path);
            }
        }
        let path = dir.join("adapt_histogram.csv");
        let mut out = csv::Writer::from_path(&path)?;
        out.write_record(["mode", "strategy", "step", "domain", "count"])?;
        for r in &self.runs {
            let Ok(trace) = &r.result else { continue };
            for s in trace.steps.iter().filter(|s| !s.marked.is_empty()) {
                for (label, count) in &s.histogram.counts {
                    out.write_record([r.mode.to_string(), r.strategy.name().to_string(), s.step.to_string(), label.name().to_string(), count.to_string()])?;
                }
            }
        }
        out.flush()?;
        files.push(path);
        Ok(files)
    }
}

/// Dörfler-driven adaptivity on the slab for every requested mode and strategy.
pub fn run_adapt_study(cfg: &AdaptStudyConfig) -> Result<AdaptStudy> {
    cfg.validate()?;
    let (guide, modes, mesh) = slab_case(&cfg.slab)?;
    if let Some(&m) = cfg.modes.iter().find(|&&m| m >= modes.len()) {
        return Err(Error::Config(format!("mode {m} requested but the slab guides {} modes", modes.len())));
    }
    let grid: Vec<(usize, RefineMode)> = cfg.modes.iter().flat_map(|&m| cfg.strategies.iter().map(move |&s| (m, s))).collect();
    let runs = grid
        .par_iter()
        .map(|&(m, strategy)| {
            let acfg = AdaptConfig { kappa: cfg.kappa, strategy, max_steps: cfg.steps, tol: 0.0 };
            let result = slab_problem(&guide, modes[m], &cfg.slab).and_then(|p| adapt_loop(&mesh, &p, &acfg)).map_err(|e| e.to_string());
            AdaptRun { mode: m, strategy, result }
        })
        .collect();
    Ok(AdaptStudy { guide, runs })
}

#[derive(Debug, Clone)]
pub struct PartitionStudy {
    pub adapt: AdaptTrace,
    pub traces: Vec<PartitionTrace>,
}

#[derive(Serialize)]
struct SummaryRow {
    policy: &'static str,
    step: usize,
    imbalance: f64,
    max_workload: usize,
    total_dofs: usize,
    migration: f64,
    interface_total: usize,
    verified: String,
}

impl PartitionStudy {
    pub fn trace(&self, policy: BalancePolicy) -> Option<&PartitionTrace> {
        self.traces.iter().find(|t| t.policy == policy)
    }

    /// One per-rank CSV per policy, a per-step summary and the adaptive trace.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut files = Vec::new();
        for t in &self.traces {
            let path = dir.join(format!("partition_{}.csv", t.policy.name()));
            t.write_csv(File::create(&path)?)?;
            files.push(path);
        }
        let path = dir.join("partition_summary.csv");
        let mut out = csv::Writer::from_path(&path)?;
        for t in &self.traces {
            for (step, m) in t.metrics.iter().enumerate() {
                out.serialize(SummaryRow {
                    policy: t.policy.name(),
                    step,
                    imbalance: m.imbalance,
                    max_workload: m.max_workload,
                    total_dofs: t.total_dofs[step],
                    migration: m.migration,
                    interface_total: m.interface_total,
                    verified: match t.verified[step] {
                        Some(v) => v.to_string(),
                        None => String::new(),
                    },
                })?;
            }
        }
        out.flush()?;
        files.push(path);
        let path = dir.join("partition_adapt.csv");
        self.adapt.write_csv(File::create(&path)?)?;
        files.push(path);
        Ok(files)
    }
}

/// Adapt once on the slab, then replay the mesh sequence under each policy.
pub fn run_partition_study(cfg: &PartitionStudyConfig) -> Result<PartitionStudy> {
    cfg.validate()?;
    let (guide, modes, mesh) = slab_case(&cfg.slab)?;
    let mode = *modes.get(cfg.mode).ok_or_else(|| Error::Config(format!("mode {} requested but the slab guides {} modes", cfg.mode, modes.len())))?;
    let problem = slab_problem(&guide, mode, &cfg.slab)?;
    let acfg = AdaptConfig { kappa: cfg.kappa, strategy: cfg.strategy, max_steps: cfg.steps, tol: 0.0 };
    let adapt = adapt_loop(&mesh, &problem, &acfg)?;
    let orders = Orders::uniform(cfg.slab.p, cfg.slab.enrichment);
    let traces = cfg
        .policies
        .par_iter()
        .map(|&policy| replay(&adapt.meshes, orders, cfg.ranks, policy, cfg.verify))
        .collect::<Result<Vec<_>>>()?;
    Ok(PartitionStudy { adapt, traces })
}
