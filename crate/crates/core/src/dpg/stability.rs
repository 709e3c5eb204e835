use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::Discretization;
use crate::mesh::Mesh;
use crate::physics::WaveProblem;
use crate::{Error, Result, C64};

/// Largest `n_field + n_free` accepted by the dense eigensolve.
pub const INFSUP_DOF_LIMIT: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// Smallest generalized singular value over the field space.
    pub gamma_h: f64,
    /// Largest generalized singular value.
    pub continuity: f64,
    pub n_field: usize,
    pub n_trace: usize,
}

/// Discrete inf-sup estimate: the normal-equation matrix over fields and free
/// traces is reduced to the fields by minimizing over traces, then compared
/// with the field L² mass in a dense Hermitian eigensolve.
pub fn estimate_infsup(mesh: &Mesh, problem: &WaveProblem) -> Result<StabilityReport> {
    let disc = Discretization::new(mesh, problem)?;
    let nf = disc.dofs.n_field;
    let nt = disc.n_free;
    if nf + nt > INFSUP_DOF_LIMIT {
        return Err(Error::TooLarge { dofs: nf + nt, limit: INFSUP_DOF_LIMIT });
    }
    let n = nf + nt;
    let mut s = DMatrix::<C64>::zeros(n, n);
    let mut mass = DVector::<f64>::zeros(nf);
    let o = disc.orders();
    for d in disc.active() {
        let k = &d.kernel;
        let range = disc.dofs.element(d.id)?.field.clone();
        let lf = range.len();
        let ltr = k.n_trace();
        // P maps global [fields; free traces] to local [fields; traces]
        let cols: Vec<usize> = range.clone().chain(d.free.iter().map(|&f| nf + f)).collect();
        let mut p = DMatrix::<C64>::zeros(lf + ltr, cols.len());
        for i in 0..lf {
            p[(i, i)] = C64::new(1.0, 0.0);
        }
        p.view_mut((lf, lf), (ltr, d.free.len())).copy_from(&d.t);
        let local = p.adjoint() * &k.s * &p;
        for (a, &ga) in cols.iter().enumerate() {
            for (b, &gb) in cols.iter().enumerate() {
                s[(ga, gb)] += local[(a, b)];
            }
        }
        let e = &mesh.elements[d.id];
        let (hx, hz) = if mesh.dim == 1 { (1.0, e.hz()) } else { (e.hx(), e.hz()) };
        let nx = if mesh.dim == 1 { 1 } else { o.px + 1 };
        let per = o.trial_scalar(mesh.dim);
        for (i, g) in range.enumerate() {
            let f = i % per;
            let (a, b) = (f % nx, f / nx);
            mass[g] = hx * hz / ((2 * a + 1) as f64 * (2 * b + 1) as f64);
        }
    }
    let sff = s.view((0, 0), (nf, nf)).into_owned();
    let schur = if nt > 0 {
        let sft = s.view((0, nf), (nf, nt)).into_owned();
        let stt = s.view((nf, nf), (nt, nt)).into_owned();
        let chol = super::hermitian_cholesky(stt).ok_or(Error::SingularSystem { pivot: 0, size: nt })?;
        sff - &sft * chol.solve(&sft.adjoint())
    } else {
        sff
    };
    let scale = mass.map(|m| 1.0 / m.sqrt());
    let mut h = DMatrix::<C64>::from_fn(nf, nf, |i, j| schur[(i, j)] * (scale[i] * scale[j]));
    h = super::kernel::hermitian_part(h);
    let eig = h.symmetric_eigenvalues();
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min).max(0.0);
    let max = eig.iter().copied().fold(0.0, f64::max);
    Ok(StabilityReport { gamma_h: min.sqrt(), continuity: max.sqrt(), n_field: nf, n_trace: nt })
}
