//! Dörfler marking and the adaptive solve–mark–refine loop.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dpg::assemble_solve;
use crate::mesh::{DomainLabel, MarkSet, Mesh, RefineMode};
use crate::physics::{relative_l2_error, WaveProblem};
use crate::{Error, Result};

/// Mark the shortest prefix of the residuals, sorted in descending order with
/// ties going to the smaller id, whose squared sum reaches `kappa` times the total.
pub fn dorfler_mark(residuals: &[(usize, f64)], kappa: f64) -> Result<Vec<usize>> {
    if residuals.is_empty() {
        return Err(Error::EmptyResiduals);
    }
    check_kappa(kappa)?;
    if let Some(&(id, eta)) = residuals.iter().find(|r| !(r.1 >= 0.0) || !r.1.is_finite()) {
        return Err(Error::Config(format!("element {id} has invalid residual {eta}")));
    }
    let mut sorted = residuals.to_vec();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let total: f64 = sorted.iter().map(|r| r.1 * r.1).sum();
    let threshold = kappa * total;
    let mut acc = 0.0;
    let mut marked = Vec::new();
    for &(id, eta) in &sorted {
        acc += eta * eta;
        marked.push(id);
        if acc >= threshold {
            break;
        }
    }
    Ok(marked)
}

fn check_kappa(kappa: f64) -> Result<()> {
    if kappa > 0.0 && kappa < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("marking parameter must lie in (0, 1), got {kappa}")))
    }
}

/// Marked-element counts per domain label.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainHistogram {
    pub counts: BTreeMap<DomainLabel, usize>,
}

impl DomainHistogram {
    pub fn count(&self, label: DomainLabel) -> usize {
        self.counts.get(&label).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    /// Fraction of marks in the core; zero when nothing is marked.
    pub fn core_fraction(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let core: usize = self.counts.iter().filter(|(l, _)| l.is_core()).map(|(_, c)| c).sum();
        core as f64 / total as f64
    }
}

/// Count marked elements per domain label. Every label of the mesh appears,
/// possibly with a zero count.
pub fn domain_histogram(marks: &MarkSet, mesh: &Mesh) -> DomainHistogram {
    let mut counts: BTreeMap<DomainLabel, usize> = mesh.active_elements().map(|e| (e.label, 0)).collect();
    for id in marks.ids() {
        if let Some(e) = mesh.elements.get(id) {
            *counts.entry(e.label).or_default() += 1;
        }
    }
    DomainHistogram { counts }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptConfig {
    pub kappa: f64,
    pub strategy: RefineMode,
    pub max_steps: usize,
    /// Stop once the total residual drops below this value.
    pub tol: f64,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self { kappa: 0.5, strategy: RefineMode::Iso, max_steps: 4, tol: 0.0 }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        check_kappa(self.kappa)?;
        if !(self.tol >= 0.0) {
            return Err(Error::Config(format!("tolerance must be non-negative, got {}", self.tol)));
        }
        Ok(())
    }
}

/// One solve of the adaptive loop and the marks derived from it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdaptStep {
    pub step: usize,
    pub total_residual: f64,
    pub n_dofs: usize,
    pub n_elements: usize,
    /// Elements marked after this solve; empty on the final step.
    pub marked: Vec<usize>,
    pub histogram: DomainHistogram,
    /// Extra splits the closure needed after refining this step's marks.
    pub closure_refinements: usize,
    pub rel_error: Option<f64>,
    pub wall_time: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdaptTrace {
    pub strategy: RefineMode,
    pub kappa: f64,
    pub steps: Vec<AdaptStep>,
    /// Mesh solved on at each step.
    #[serde(skip)]
    pub meshes: Vec<Mesh>,
}

impl AdaptTrace {
    pub fn residuals(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.total_residual).collect()
    }

    /// Steps that marked elements, paired with the mesh they were marked on.
    pub fn marked_steps(&self) -> impl Iterator<Item = (&AdaptStep, &Mesh)> + '_ {
        self.steps.iter().zip(&self.meshes).filter(|(s, _)| !s.marked.is_empty())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["step", "strategy", "kappa", "residual", "dofs", "elements", "marked", "closure", "rel_error", "wall_time"])?;
        for s in &self.steps {
            out.write_record([
                s.step.to_string(),
                self.strategy.name().to_string(),
                self.kappa.to_string(),
                s.total_residual.to_string(),
                s.n_dofs.to_string(),
                s.n_elements.to_string(),
                s.marked.len().to_string(),
                s.closure_refinements.to_string(),
                s.rel_error.map_or("nan".to_string(), |e| e.to_string()),
                s.wall_time.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// One row per `(step, domain)` for every step that marked elements.
    pub fn write_histogram_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["step", "domain", "count"])?;
        for s in self.steps.iter().filter(|s| !s.marked.is_empty()) {
            for (label, count) in &s.histogram.counts {
                out.write_record([s.step.to_string(), label.name().to_string(), count.to_string()])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Solve, mark with Dörfler's criterion, refine with the configured strategy
/// and close the mesh, up to `cfg.max_steps` refinements.
pub fn adapt_loop(mesh: &Mesh, problem: &WaveProblem, cfg: &AdaptConfig) -> Result<AdaptTrace> {
    cfg.validate()?;
    let mut mesh = mesh.clone();
    let mut trace = AdaptTrace { strategy: cfg.strategy, kappa: cfg.kappa, steps: Vec::new(), meshes: Vec::new() };
    for step in 0..=cfg.max_steps {
        let start = std::time::Instant::now();
        let sol = assemble_solve(&mesh, problem)?;
        let wall_time = start.elapsed().as_secs_f64();
        let rel_error = match &problem.exact {
            Some(exact) => Some(relative_l2_error(&sol, exact.as_ref())?),
            None => None,
        };
        let done = step == cfg.max_steps || sol.total_residual < cfg.tol;
        let marks = if done {
            MarkSet::default()
        } else {
            MarkSet::uniform(dorfler_mark(&sol.residuals, cfg.kappa)?, cfg.strategy)
        };
        let histogram = domain_histogram(&marks, &mesh);
        trace.meshes.push(mesh.clone());
        let closure_refinements = if marks.is_empty() {
            0
        } else {
            mesh.refine(&marks)?;
            mesh.closure_refinements
        };
        trace.steps.push(AdaptStep {
            step,
            total_residual: sol.total_residual,
            n_dofs: sol.n_dofs(),
            n_elements: trace.meshes[step].n_active(),
            marked: marks.ids().collect(),
            histogram,
            closure_refinements,
            rel_error,
            wall_time,
        });
        if done {
            break;
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_waveguide_mesh, LabelScheme, MeshBuilder};
    use crate::physics::{rectangular_mode, IndexProfile};
    use crate::C64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive oracle: among the smallest subsets reaching the threshold,
    /// the one whose `(-η, id)` list is lexicographically first.
    fn brute_force(res: &[(usize, f64)], kappa: f64) -> Vec<usize> {
        let mut all: Vec<(usize, f64)> = res.to_vec();
        all.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let total: f64 = all.iter().map(|r| r.1 * r.1).sum();
        let n = all.len();
        let mut best: Option<Vec<(f64, usize)>> = None;
        for mask in 1u32..(1 << n) {
            let picked: Vec<(usize, f64)> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| all[i]).collect();
            let sum: f64 = picked.iter().map(|r| r.1 * r.1).sum();
            if sum < kappa * total {
                continue;
            }
            let key: Vec<(f64, usize)> = picked.iter().map(|r| (-r.1, r.0)).collect();
            let better = match &best {
                None => true,
                Some(b) => key.len() < b.len() || (key.len() == b.len() && key.partial_cmp(b) == Some(std::cmp::Ordering::Less)),
            };
            if better {
                best = Some(key);
            }
        }
        best.expect("the full set reaches the threshold").into_iter().map(|k| k.1).collect()
    }

    #[test]
    fn marks_largest_element_only() {
        let res = [(0, 3.0), (1, 2.0), (2, 1.0)];
        assert_eq!(dorfler_mark(&res, 0.5).unwrap(), vec![0]);
    }

    #[test]
    fn equal_residuals_mark_half() {
        let res = [(7, 1.0), (3, 1.0), (5, 1.0), (1, 1.0)];
        assert_eq!(dorfler_mark(&res, 0.5).unwrap(), vec![1, 3]);
    }

    #[test]
    fn kappa_near_one_marks_everything() {
        let res = [(0, 0.1), (1, 2.0), (2, 1.0), (3, 0.5)];
        let mut m = dorfler_mark(&res, 1.0 - 1e-15).unwrap();
        m.sort();
        assert_eq!(m, vec![0, 1, 2, 3]);
    }

    #[test]
    fn tiny_kappa_marks_one() {
        let res = [(4, 0.3), (1, 2.0), (2, 1.0)];
        assert_eq!(dorfler_mark(&res, 0.01).unwrap(), vec![1]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(dorfler_mark(&[], 0.5), Err(Error::EmptyResiduals)));
        assert!(dorfler_mark(&[(0, 1.0)], 0.0).is_err());
        assert!(dorfler_mark(&[(0, 1.0)], 1.0).is_err());
        assert!(dorfler_mark(&[(0, -1.0)], 0.5).is_err());
        assert!(dorfler_mark(&[(0, f64::NAN)], 0.5).is_err());
    }

    #[test]
    fn matches_brute_force_on_random_lists() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..300 {
            let n = rng.random_range(1..=10);
            let res: Vec<(usize, f64)> = (0..n).map(|i| (i * 7 % 13, (rng.random_range(0..5) as f64) * 0.5)).collect();
            let kappa = rng.random_range(0.05..0.95);
            let marked = dorfler_mark(&res, kappa).unwrap();
            assert_eq!(marked, brute_force(&res, kappa), "{res:?} {kappa}");
        }
    }

    #[test]
    fn marked_prefix_is_minimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let n = rng.random_range(1..=20);
            let res: Vec<(usize, f64)> = (0..n).map(|i| (i, rng.random::<f64>())).collect();
            let kappa = rng.random_range(0.01..0.99);
            let marked = dorfler_mark(&res, kappa).unwrap();
            let total: f64 = res.iter().map(|r| r.1 * r.1).sum();
            let s: Vec<f64> = marked.iter().map(|&i| res[i].1 * res[i].1).collect();
            let sum: f64 = s.iter().sum();
            assert!(sum >= kappa * total * (1.0 - 1e-14));
            assert!(sum - s.last().unwrap() < kappa * total);
        }
    }

    #[test]
    fn histogram_counts_labels() {
        let labels = vec![DomainLabel::CladdingInner, DomainLabel::CoreInner, DomainLabel::CoreOuter, DomainLabel::CladdingOuter];
        let mesh = MeshBuilder::new(2, 2, 4, 1).labels(LabelScheme::Explicit(labels)).build().unwrap();
        let empty = domain_histogram(&MarkSet::default(), &mesh);
        assert_eq!(empty.total(), 0);
        assert!(empty.counts.values().all(|&c| c == 0));
        let inner: Vec<usize> = mesh.active_elements().filter(|e| e.label == DomainLabel::CoreInner).map(|e| e.id).collect();
        assert!(!inner.is_empty());
        let h = domain_histogram(&MarkSet::uniform(inner.clone(), RefineMode::Iso), &mesh);
        assert_eq!(h.count(DomainLabel::CoreInner), inner.len());
        assert_eq!(h.total(), inner.len());
        assert_eq!(h.core_fraction(), 1.0);
    }

    fn rect_problem() -> (Mesh, WaveProblem) {
        let omega = (4.0 * std::f64::consts::PI.powi(2) + std::f64::consts::PI.powi(2)).sqrt();
        let mode = rectangular_mode(1, omega, 1.0);
        let problem = WaveProblem::mode_excitation(mode, C64::new(1.0, 0.0), IndexProfile::uniform(1.0)).unwrap().with_enrichment(2);
        (build_waveguide_mesh(2, 2, 2, 2, None).unwrap(), problem)
    }

    #[test]
    fn loop_records_steps_and_grows_dofs() {
        let (mesh, problem) = rect_problem();
        let cfg = AdaptConfig { max_steps: 3, ..Default::default() };
        let trace = adapt_loop(&mesh, &problem, &cfg).unwrap();
        assert_eq!(trace.steps.len(), 4);
        assert_eq!(trace.meshes.len(), 4);
        for w in trace.steps.windows(2) {
            assert!(!w[0].marked.is_empty());
            assert!(w[1].n_dofs > w[0].n_dofs);
        }
        assert!(trace.steps.last().unwrap().marked.is_empty());
        assert!(trace.steps.iter().all(|s| s.rel_error.is_some()));
        let r = trace.residuals();
        assert!(r.last().unwrap() < &r[0]);
    }

    #[test]
    fn loop_stops_at_tolerance() {
        let (mesh, problem) = rect_problem();
        let cfg = AdaptConfig { max_steps: 5, tol: 1e300, ..Default::default() };
        let trace = adapt_loop(&mesh, &problem, &cfg).unwrap();
        assert_eq!(trace.steps.len(), 1);
        assert!(trace.steps[0].marked.is_empty());
    }

    #[test]
    fn tiny_kappa_refines_one_element_per_step() {
        let (mesh, problem) = rect_problem();
        let cfg = AdaptConfig { kappa: 0.01, max_steps: 2, ..Default::default() };
        let trace = adapt_loop(&mesh, &problem, &cfg).unwrap();
        for s in &trace.steps[..2] {
            assert_eq!(s.marked.len(), 1);
        }
    }

    #[test]
    fn csv_shapes() {
        let (mesh, problem) = rect_problem();
        let cfg = AdaptConfig { max_steps: 2, ..Default::default() };
        let trace = adapt_loop(&mesh, &problem, &cfg).unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 4);
        let mut buf = Vec::new();
        trace.write_histogram_csv(&mut buf).unwrap();
        let labels = trace.meshes[0].active_elements().map(|e| e.label).collect::<std::collections::BTreeSet<_>>().len();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 2 * labels);
    }

    #[test]
    fn rejects_invalid_config() {
        let (mesh, problem) = rect_problem();
        let cfg = AdaptConfig { kappa: 1.5, ..Default::default() };
        assert!(adapt_loop(&mesh, &problem, &cfg).is_err());
    }
}
