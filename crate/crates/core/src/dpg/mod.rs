//! Practical DPG: optimal test functions from element Gram matrices,
//! condensed normal equations and the residual error indicator.
//!
//! Element trial fields are eliminated locally (they are discontinuous), so
//! the global system couples only the free trace unknowns. Fixed (Dirichlet)
//! traces and impedance-dependent output fluxes are eliminated through an
//! affine map `local traces = T x + lift` per element.

mod kernel;
mod solver;
mod stability;

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::mesh::{BoundaryTag, Mesh};
use crate::physics::WaveProblem;
use crate::spaces::poly::{lobatto, shifted_legendre, GaussRule};
use crate::spaces::{build_dof_map, DofMap, Orders};
use crate::{Error, Result, C64};

pub use kernel::{condense, element_gram, element_load, element_stiffness, hermitian_cholesky, ElementKernel, ElementShape};
pub use solver::{reverse_cuthill_mckee, SkylineMatrix};
pub use stability::{estimate_infsup, StabilityReport, INFSUP_DOF_LIMIT};

/// Scaling of the L² term in the test norm `‖A*v‖² + α‖v‖²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestNormConfig {
    pub alpha: f64,
}

impl Default for TestNormConfig {
    fn default() -> Self {
        Self { alpha: 1.0 }
    }
}

/// How a global trace DOF enters the solve.
#[derive(Debug, Clone, PartialEq)]
pub enum DofStatus {
    Free(usize),
    Fixed(C64),
    /// `value = Σ coef · value(dof) + offset`.
    Dependent(Vec<(usize, C64)>, C64),
}

/// Per-element data of a discretization.
#[derive(Debug, Clone)]
pub struct ElementData {
    pub id: usize,
    pub kernel: Arc<ElementKernel>,
    /// Sorted free trace unknowns referenced by the element.
    pub free: Vec<usize>,
    /// Dense `n_local_trace × free.len()` map.
    pub t: DMatrix<C64>,
    pub lift: DVector<C64>,
    /// Test load, present when the problem has a source.
    pub load: Option<DVector<C64>>,
    /// `Bᴴ G⁻¹ l`.
    pub condensed_load: Option<DVector<C64>>,
}

impl ElementData {
    fn load_parts(&self) -> (DVector<C64>, DVector<C64>) {
        let nf = self.kernel.n_field();
        let nt = self.kernel.n_trace();
        match &self.condensed_load {
            Some(f) => (f.rows(0, nf).into_owned(), f.rows(nf, nt).into_owned()),
            None => (DVector::zeros(nf), DVector::zeros(nt)),
        }
    }
}

/// A mesh and problem prepared for solving.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub mesh: Arc<Mesh>,
    pub problem: WaveProblem,
    pub dofs: Arc<DofMap>,
    pub status: Vec<DofStatus>,
    pub n_free: usize,
    /// Indexed by element id.
    pub elements: Vec<Option<ElementData>>,
}

/// Discrete solution with residual indicators.
#[derive(Debug, Clone)]
pub struct Solution {
    pub mesh: Arc<Mesh>,
    pub dofs: Arc<DofMap>,
    pub omega: f64,
    /// Field coefficients in global field numbering.
    pub fields: Vec<C64>,
    /// Values of all trace DOFs, constrained ones included.
    pub traces: Vec<C64>,
    /// `(element id, η_K)` in element id order.
    pub residuals: Vec<(usize, f64)>,
    /// `‖ψ‖_V` from the global block Gram matrix.
    pub total_residual: f64,
    /// Riesz representers `ψ_K` in element id order.
    pub psi: Vec<DVector<C64>>,
    pub n_free: usize,
    /// `‖S x - f‖ / ‖f‖` of the global trace system.
    pub solver_residual: f64,
}

/// Residual indicators for a given set of coefficients.
#[derive(Debug, Clone)]
pub struct Residuals {
    pub per_element: Vec<(usize, f64)>,
    pub psi: Vec<DVector<C64>>,
    pub total: f64,
}

impl Discretization {
    pub fn new(mesh: &Mesh, problem: &WaveProblem) -> Result<Self> {
        problem.validate()?;
        let mut ps = mesh.active_elements().map(|e| e.p);
        let p = ps.next().ok_or_else(|| Error::InvalidMesh("mesh has no active elements".into()))?;
        if ps.any(|q| q != p) {
            return Err(Error::InvalidMesh("elements must share one polynomial order".into()));
        }
        let orders = Orders { px: p, pz: problem.z_order.unwrap_or(p), dp: problem.enrichment };
        if orders.px == 0 || orders.pz == 0 {
            return Err(Error::InvalidMesh("polynomial order must be at least 1".into()));
        }
        let dofs = build_dof_map(mesh, orders)?;
        let status = trace_status(mesh, problem, &dofs)?;
        let mut n_free = 0;
        for s in &status {
            if let DofStatus::Free(i) = s {
                n_free = n_free.max(i + 1);
            }
        }

        // one kernel per distinct element shape
        let shape_of = |id: usize| {
            let e = &mesh.elements[id];
            let n = problem.index.n(e.label);
            ElementShape {
                dim: mesh.dim,
                hx: if mesh.dim == 1 { 1.0 } else { e.hx() },
                hz: e.hz(),
                n2: n * n,
                omega: problem.omega,
                orders,
                alpha: problem.test_norm.alpha,
            }
        };
        let active = mesh.active_ids();
        let mut shapes = BTreeMap::new();
        for &id in &active {
            let s = shape_of(id);
            shapes.entry(s.key()).or_insert((s, id));
        }
        let shapes: Vec<_> = shapes.into_iter().collect();
        let built: Vec<_> = shapes
            .par_iter()
            .map(|(k, (s, id))| {
                ElementKernel::new(*s).map(|kern| (*k, Arc::new(kern))).map_err(|e| match e {
                    Error::SingularGram { .. } => Error::SingularGram { element: *id },
                    Error::SingularFieldBlock { .. } => Error::SingularFieldBlock { element: *id },
                    other => other,
                })
            })
            .collect();
        let mut kernels = HashMap::new();
        for b in built {
            let (k, v) = b?;
            kernels.insert(k, v);
        }

        let data = problem.data.clone();
        let has_source = data.has_source();
        let element_list: Vec<ElementData> = active
            .par_iter()
            .map(|&id| -> Result<ElementData> {
                let e = &mesh.elements[id];
                let kernel = kernels[&shape_of(id).key()].clone();
                let em = dofs.element(id)?;
                let nt = kernel.n_trace();
                let mut cols: BTreeMap<usize, usize> = BTreeMap::new();
                let mut entries = Vec::new();
                let mut lift = DVector::<C64>::zeros(nt);
                for (row, list) in em.rows.iter().enumerate() {
                    for &(d, c) in list {
                        expand_status(&status, d, C64::new(c, 0.0), &mut |free, coef| entries.push((row, free, coef)), &mut |v| {
                            lift[row] += v
                        });
                    }
                }
                for &(_, f, _) in &entries {
                    let next = cols.len();
                    cols.entry(f).or_insert(next);
                }
                let free: Vec<usize> = cols.keys().copied().collect();
                let pos: HashMap<usize, usize> = free.iter().enumerate().map(|(i, &f)| (f, i)).collect();
                let mut t = DMatrix::<C64>::zeros(nt, free.len());
                for (row, f, c) in entries {
                    t[(row, pos[&f])] += c;
                }
                let (load, condensed_load) = if has_source {
                    let l = element_load(&kernel.shape, e.x[0], e.z[0], &|x, z| data.source(x, z))?;
                    let f = kernel.condensed_load(&l);
                    (Some(l), Some(f))
                } else {
                    (None, None)
                };
                Ok(ElementData { id, kernel, free, t, lift, load, condensed_load })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut elements = vec![None; mesh.elements.len()];
        for d in element_list {
            let id = d.id;
            elements[id] = Some(d);
        }
        Ok(Self { mesh: Arc::new(mesh.clone()), problem: problem.clone(), dofs: Arc::new(dofs), status, n_free, elements })
    }

    pub fn orders(&self) -> Orders {
        self.dofs.orders
    }

    /// Total DOFs: field plus trace (constrained traces included).
    pub fn n_dofs(&self) -> usize {
        self.dofs.total()
    }

    pub fn active(&self) -> impl Iterator<Item = &ElementData> + '_ {
        self.elements.iter().flatten()
    }

    pub fn element(&self, id: usize) -> Result<&ElementData> {
        self.elements.get(id).and_then(|e| e.as_ref()).ok_or(Error::InactiveElement(id))
    }

    /// Condensed element contribution `(Tᴴ Σ T, Tᴴ (h - Σ lift))` to the global
    /// trace system.
    fn element_contribution(&self, d: &ElementData) -> (DMatrix<C64>, DVector<C64>) {
        let k = &d.kernel;
        let (ff, ft) = d.load_parts();
        let h = ft - k.w.adjoint() * ff;
        let rhs = h - &k.schur * &d.lift;
        let th = d.t.adjoint();
        (&th * &k.schur * &d.t, th * rhs)
    }

    /// Sparsity graph of the global trace system.
    pub fn pattern(&self) -> Vec<Vec<usize>> {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); self.n_free];
        for d in self.active() {
            for &a in &d.free {
                adj[a].extend(d.free.iter().copied().filter(|&b| b != a));
            }
        }
        for nb in &mut adj {
            nb.sort_unstable();
            nb.dedup();
        }
        adj
    }

    pub fn solve(&self) -> Result<Solution> {
        let contributions: Vec<(DMatrix<C64>, DVector<C64>)> =
            self.elements.par_iter().flatten().map(|d| self.element_contribution(d)).collect();
        let mut mat = SkylineMatrix::with_pattern(&self.pattern());
        let mut rhs = vec![C64::new(0.0, 0.0); self.n_free];
        for (d, (k, r)) in self.active().zip(&contributions) {
            for (a, &ga) in d.free.iter().enumerate() {
                rhs[ga] += r[a];
                for (b, &gb) in d.free.iter().enumerate() {
                    mat.add(ga, gb, k[(a, b)]);
                }
            }
        }
        mat.factor()?;
        let x = mat.solve(&rhs);

        // global residual of the trace system, matrix-free
        let mut ax = vec![C64::new(0.0, 0.0); self.n_free];
        for (d, (k, _)) in self.active().zip(&contributions) {
            let xl = DVector::from_iterator(d.free.len(), d.free.iter().map(|&g| x[g]));
            let y = k * xl;
            for (a, &g) in d.free.iter().enumerate() {
                ax[g] += y[a];
            }
        }
        let num: f64 = ax.iter().zip(&rhs).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        let den: f64 = rhs.iter().map(|b| b.norm_sqr()).sum::<f64>().sqrt();
        let solver_residual = if den > 0.0 { num / den } else { num };

        let traces = self.trace_values(&x);
        let mut fields = vec![C64::new(0.0, 0.0); self.dofs.n_field];
        for d in self.active() {
            let yt = self.local_traces(d, &traces);
            let (ff, _) = d.load_parts();
            let yf = d.kernel.recover_fields(&ff, &yt);
            let range = self.dofs.element(d.id)?.field.clone();
            for (k, i) in range.enumerate() {
                fields[i] = yf[k];
            }
        }
        let res = self.residual_of(&fields, &traces)?;
        Ok(Solution {
            mesh: self.mesh.clone(),
            dofs: self.dofs.clone(),
            omega: self.problem.omega,
            fields,
            traces,
            residuals: res.per_element,
            total_residual: res.total,
            psi: res.psi,
            n_free: self.n_free,
            solver_residual,
        })
    }

    /// Values of every trace DOF given the free unknowns.
    pub fn trace_values(&self, free: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.status.len()];
        for (d, slot) in out.iter_mut().enumerate() {
            let (mut a, mut b) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
            expand_status(&self.status, d, C64::new(1.0, 0.0), &mut |f, c| a += c * free[f], &mut |l| b += l);
            *slot = a + b;
        }
        out
    }

    /// Free unknowns extracted from a full trace vector.
    pub fn free_values(&self, traces: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.n_free];
        for (d, s) in self.status.iter().enumerate() {
            if let DofStatus::Free(i) = s {
                out[*i] = traces[d];
            }
        }
        out
    }

    /// Local trace coefficients of an element from global trace values.
    pub fn local_traces(&self, d: &ElementData, traces: &[C64]) -> DVector<C64> {
        let em = self.dofs.element(d.id).expect("active element");
        DVector::from_iterator(
            em.rows.len(),
            em.rows.iter().map(|row| row.iter().map(|&(g, c)| traces[g] * c).sum::<C64>()),
        )
    }

    /// Local trial vector `[fields; traces]` of an element.
    pub fn local_trial(&self, d: &ElementData, fields: &[C64], traces: &[C64]) -> DVector<C64> {
        let range = self.dofs.element(d.id).expect("active element").field.clone();
        let yt = self.local_traces(d, traces);
        let nf = range.len();
        let mut y = DVector::<C64>::zeros(nf + yt.len());
        for (k, i) in range.enumerate() {
            y[k] = fields[i];
        }
        y.rows_mut(nf, yt.len()).copy_from(&yt);
        y
    }

    /// Residual indicators `η_K` for arbitrary coefficients.
    pub fn residual_of(&self, fields: &[C64], traces: &[C64]) -> Result<Residuals> {
        let per: Vec<(usize, DVector<C64>, f64, f64)> = self
            .elements
            .par_iter()
            .flatten()
            .map(|d| {
                let y = self.local_trial(d, fields, traces);
                let (psi, eta2) = d.kernel.residual(d.load.as_ref(), &y);
                // ‖ψ‖² through the Gram matrix itself
                let g_norm = psi.dotc(&(&d.kernel.gram * &psi)).re;
                (d.id, psi, eta2, g_norm)
            })
            .collect();
        let total = per.iter().map(|p| p.3).sum::<f64>().max(0.0).sqrt();
        Ok(Residuals {
            per_element: per.iter().map(|p| (p.0, p.2.sqrt())).collect(),
            psi: per.into_iter().map(|p| p.1).collect(),
            total,
        })
    }
}

/// Expand a trace DOF through its status: free parts go to `free`, constant
/// parts to `constant`.
fn expand_status(
    status: &[DofStatus],
    d: usize,
    coef: C64,
    free: &mut dyn FnMut(usize, C64),
    constant: &mut dyn FnMut(C64),
) {
    match &status[d] {
        DofStatus::Free(i) => free(*i, coef),
        DofStatus::Fixed(v) => constant(coef * v),
        DofStatus::Dependent(list, offset) => {
            constant(coef * offset);
            for &(dd, c) in list {
                expand_status(status, dd, coef * c, free, constant);
            }
        }
    }
}

/// Point on carrier `c` at parameter `t`.
fn carrier_point(mesh: &Mesh, dofs: &DofMap, c: usize, t: f64) -> (f64, f64) {
    let car = &dofs.carriers[c];
    let s = car.span[0] as f64 + t * (car.span[1] - car.span[0]) as f64;
    let si = s.floor() as i64;
    let frac = s - si as f64;
    match car.normal {
        crate::mesh::Axis::Z => {
            let x = if mesh.dim == 1 {
                0.0
            } else {
                let a = mesh.coord_x(si);
                a + frac * (mesh.coord_x(si + 1) - a)
            };
            (x, mesh.coord_z(car.line))
        }
        crate::mesh::Axis::X => {
            let a = mesh.coord_z(si);
            (mesh.coord_x(car.line), a + frac * (mesh.coord_z(si + 1) - a))
        }
    }
}

/// Lobatto coefficients of `g` on a carrier: end values exact, bubbles by
/// L² projection of the remainder (`interpolate = true`), or a full L²
/// projection onto all `m + 1` functions.
fn carrier_coefficients(m: usize, g: &dyn Fn(f64) -> C64, interpolate: bool) -> Vec<C64> {
    let rule = GaussRule::new(m + 4);
    let vals: Vec<(f64, f64, Vec<f64>, C64)> = rule
        .points
        .iter()
        .zip(&rule.weights)
        .map(|(&t, &w)| (t, w, lobatto(m, t).0, g(t)))
        .collect();
    let (first, mut out) = if interpolate {
        (2, vec![g(0.0), g(1.0)])
    } else {
        (0, Vec::new())
    };
    let n = m + 1 - first;
    if n == 0 {
        return out;
    }
    let mut mass = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<C64>::zeros(n);
    for (_, w, l, gv) in &vals {
        let mut r = *gv;
        if interpolate {
            r -= out[0] * l[0] + out[1] * l[1];
        }
        for i in 0..n {
            rhs[i] += r * (w * l[first + i]);
            for j in 0..n {
                mass[(i, j)] += w * l[first + i] * l[first + j];
            }
        }
    }
    let chol = mass.cholesky().expect("Lobatto mass is SPD");
    let sol_re = chol.solve(&rhs.map(|c| c.re));
    let sol_im = chol.solve(&rhs.map(|c| c.im));
    out.extend((0..n).map(|i| C64::new(sol_re[i], sol_im[i])));
    out
}

fn trace_status(mesh: &Mesh, problem: &WaveProblem, dofs: &DofMap) -> Result<Vec<DofStatus>> {
    use crate::spaces::TraceDofKind;
    let data = &problem.data;
    let mut status: Vec<Option<DofStatus>> = vec![None; dofs.n_trace];
    let m = if dofs.dim == 1 { 0 } else { dofs.orders.trace() };
    // Dirichlet carriers
    for (c, car) in dofs.carriers.iter().enumerate() {
        match car.boundary {
            Some(BoundaryTag::Input) | Some(BoundaryTag::Wall) => {
                let g = |t: f64| {
                    let (x, z) = carrier_point(mesh, dofs, c, t);
                    data.dirichlet(x, z)
                };
                if dofs.dim == 1 {
                    let d = dofs.node_dof(car.nodes[0]).expect("boundary nodes are free");
                    status[d] = Some(DofStatus::Fixed(g(0.0)));
                    continue;
                }
                let coef = carrier_coefficients(m, &g, true);
                for (k, &n) in car.nodes.iter().enumerate() {
                    if let Some(d) = dofs.node_dof(n) {
                        status[d] = Some(DofStatus::Fixed(coef[k]));
                    }
                }
                for (k, &d) in car.bubbles.iter().enumerate() {
                    status[d] = Some(DofStatus::Fixed(coef[k + 2]));
                }
            }
            _ => {}
        }
    }
    // free unknowns: everything not fixed and not an output flux
    let mut n_free = 0;
    for d in 0..dofs.n_trace {
        if status[d].is_none() && !dofs.output_flux[d] {
            status[d] = Some(DofStatus::Free(n_free));
            n_free += 1;
        }
    }
    // output fluxes follow the impedance relation
    let inv_z = C64::new(1.0, 0.0) / problem.impedance;
    for (c, car) in dofs.carriers.iter().enumerate() {
        if car.boundary != Some(BoundaryTag::Output) {
            continue;
        }
        let g = |t: f64| {
            let (x, z) = carrier_point(mesh, dofs, c, t);
            data.impedance_offset(x, z)
        };
        let offsets = if dofs.dim == 1 { vec![g(0.0)] } else { carrier_coefficients(m, &g, false) };
        for (k, &d) in car.fluxes.iter().enumerate() {
            let p_dof = match k {
                0 | 1 if dofs.dim == 2 || k == 0 => dofs.node_dof(car.nodes[k]).expect("boundary nodes are free"),
                _ => car.bubbles[k - 2],
            };
            debug_assert!(!matches!(dofs.kinds[p_dof], TraceDofKind::Flux { .. }));
            status[d] = Some(DofStatus::Dependent(vec![(p_dof, inv_z)], offsets[k]));
        }
    }
    status
        .into_iter()
        .enumerate()
        .map(|(d, s)| s.ok_or(Error::MissingBoundaryTag { facet: d }))
        .collect()
}

impl Solution {
    /// Field coefficients of an element.
    pub fn element_coefficients(&self, id: usize) -> Result<&[C64]> {
        let em = self.dofs.element(id)?;
        Ok(&self.fields[em.field.clone()])
    }

    /// `[u_x, u_z, p]` at reference point `(tx, tz)` of element `id`.
    pub fn eval_reference(&self, id: usize, tx: f64, tz: f64) -> Result<[C64; 3]> {
        let c = self.element_coefficients(id)?;
        let o = self.dofs.orders;
        Ok(eval_fields(self.mesh.dim, o, c, tx, tz))
    }

    /// `[u_x, u_z, p]` at a physical point (first containing element).
    pub fn eval(&self, x: f64, z: f64) -> Result<[C64; 3]> {
        let e = self
            .mesh
            .active_elements()
            .find(|e| z >= e.z[0] && z <= e.z[1] && (self.mesh.dim == 1 || (x >= e.x[0] && x <= e.x[1])))
            .ok_or(Error::OutsideDomain(z))?;
        let tx = if self.mesh.dim == 1 { 0.0 } else { (x - e.x[0]) / e.hx() };
        self.eval_reference(e.id, tx, (z - e.z[0]) / e.hz())
    }

    pub fn n_dofs(&self) -> usize {
        self.dofs.total()
    }

    /// `Σ η_K²` from the element indicators.
    pub fn sum_eta_squared(&self) -> f64 {
        self.residuals.iter().map(|r| r.1 * r.1).sum()
    }
}

/// Evaluate trial fields from element coefficients.
pub fn eval_fields(dim: usize, o: Orders, c: &[C64], tx: f64, tz: f64) -> [C64; 3] {
    let pz = shifted_legendre(o.pz, tz);
    let px = if dim == 1 { vec![1.0] } else { shifted_legendre(o.px, tx) };
    let nx = px.len();
    let nb = nx * pz.len();
    let mut out = [C64::new(0.0, 0.0); 3];
    let comps: &[usize] = if dim == 1 { &[1, 2] } else { &[0, 1, 2] };
    for (k, &slot) in comps.iter().enumerate() {
        let mut acc = C64::new(0.0, 0.0);
        for (b, &vz) in pz.iter().enumerate() {
            for (a, &vx) in px.iter().enumerate() {
                acc += c[k * nb + a + nx * b] * (vx * vz);
            }
        }
        out[slot] = acc;
    }
    out
}

/// Assemble and solve in one call.
pub fn assemble_solve(mesh: &Mesh, problem: &WaveProblem) -> Result<Solution> {
    Discretization::new(mesh, problem)?.solve()
}

#[cfg(test)]
mod tests;
