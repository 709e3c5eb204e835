use super::{FieldFunction, ModeSpec};
use crate::dpg::Solution;
use crate::spaces::poly::GaussRule;
use crate::{Error, Result, C64};

/// Elements cut by the cross-section `z`, with the reference coordinate of
/// the cut. Interior cuts use the element above; the outlet uses the last one.
fn cut_elements(sol: &Solution, z: f64) -> Result<Vec<(usize, f64)>> {
    let mesh = &sol.mesh;
    let len = mesh.length();
    let tol = 1e-12 * len.max(1.0);
    if !(z >= -tol && z <= len + tol) {
        return Err(Error::OutsideDomain(z));
    }
    let z = z.clamp(0.0, len);
    let at_end = z >= len - tol;
    let out: Vec<(usize, f64)> = mesh
        .active_elements()
        .filter(|e| if at_end { e.z[1] >= len - tol } else { e.z[0] <= z + tol && z < e.z[1] - tol })
        .map(|e| (e.id, ((z - e.z[0]) / e.hz()).clamp(0.0, 1.0)))
        .collect();
    if out.is_empty() {
        return Err(Error::OutsideDomain(z));
    }
    Ok(out)
}

/// Integrate `f(x, [u_x, u_z, p])` across the guide at `z`.
fn integrate_cut(sol: &Solution, z: f64, f: impl Fn(f64, [C64; 3]) -> C64) -> Result<C64> {
    let cut = cut_elements(sol, z)?;
    let mesh = &sol.mesh;
    if mesh.dim == 1 {
        let (id, tz) = cut[0];
        return Ok(f(0.0, sol.eval_reference(id, 0.0, tz)?));
    }
    let o = sol.dofs.orders;
    let rule = GaussRule::new(o.px.max(o.pz) + o.dp + 4);
    let mut acc = C64::new(0.0, 0.0);
    for (id, tz) in cut {
        let e = &mesh.elements[id];
        for (&t, &w) in rule.points.iter().zip(&rule.weights) {
            let x = e.x[0] + t * e.hx();
            acc += f(x, sol.eval_reference(id, t, tz)?) * (w * e.hx());
        }
    }
    Ok(acc)
}

/// Time-averaged power `Re ∫ p conj(u_z) dx / 2` through the cross-section `z`.
pub fn power_flux(sol: &Solution, z: f64) -> Result<f64> {
    Ok(integrate_cut(sol, z, |_, v| v[2] * v[1].conj())?.re / 2.0)
}

/// `100 (1 - flux(L) / flux(0))`.
pub fn power_loss(sol: &Solution) -> Result<f64> {
    let p0 = power_flux(sol, 0.0)?;
    if p0 == 0.0 {
        return Err(Error::ZeroInputFlux);
    }
    let p1 = power_flux(sol, sol.mesh.length())?;
    Ok(100.0 * (1.0 - p1 / p0))
}

/// `100 ‖u_h - u‖ / ‖u‖` over all field components.
pub fn relative_l2_error(sol: &Solution, exact: &dyn FieldFunction) -> Result<f64> {
    let o = sol.dofs.orders;
    relative_l2_error_with(sol, exact, o.px.max(o.pz) + o.dp + 2)
}

/// [`relative_l2_error`] with an explicit number of Gauss points per direction.
pub fn relative_l2_error_with(sol: &Solution, exact: &dyn FieldFunction, points: usize) -> Result<f64> {
    let mesh = &sol.mesh;
    let rule = GaussRule::new(points);
    let (mut num, mut den) = (0.0, 0.0);
    for e in mesh.active_elements() {
        let xs: Vec<(f64, f64)> = if mesh.dim == 1 {
            vec![(0.0, 1.0)]
        } else {
            rule.points.iter().zip(&rule.weights).map(|(&t, &w)| (t, w * e.hx())).collect()
        };
        for (&tz, &wz) in rule.points.iter().zip(&rule.weights) {
            let z = e.z[0] + tz * e.hz();
            for &(tx, wx) in &xs {
                let x = if mesh.dim == 1 { 0.0 } else { e.x[0] + tx * e.hx() };
                let h = sol.eval_reference(e.id, tx, tz)?;
                let u = exact.fields(x, z);
                let w = wz * e.hz() * wx;
                for c in 0..3 {
                    num += w * (h[c] - u[c]).norm_sqr();
                    den += w * u[c].norm_sqr();
                }
            }
        }
    }
    if den == 0.0 {
        return Ok(if num == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(100.0 * (num / den).sqrt())
}

/// Modal coefficient `∫ p(x, z) φ_m(x) dx` of the discrete solution.
pub fn mode_overlap(sol: &Solution, mode: &ModeSpec, z: f64) -> Result<C64> {
    integrate_cut(sol, z, |x, v| v[2] * mode.profile(x).0)
}

/// Forward and backward modal amplitudes at `z`, from `p` and `u_z` overlaps:
/// `p = F φ + B φ` and `u_z = (F - B) φ / Z`.
fn split_amplitudes(sol: &Solution, mode: &ModeSpec, z: f64) -> Result<(C64, C64)> {
    let c = integrate_cut(sol, z, |x, v| v[2] * mode.profile(x).0)?;
    let d = integrate_cut(sol, z, |x, v| v[1] * mode.profile(x).0)?;
    let zimp = mode.impedance();
    Ok(((c + zimp * d) / 2.0, (c - zimp * d) / 2.0))
}

/// Complex amplitude of the forward-travelling part of `mode` at `z`.
pub fn forward_amplitude(sol: &Solution, mode: &ModeSpec, z: f64) -> Result<C64> {
    Ok(split_amplitudes(sol, mode, z)?.0)
}

/// Complex amplitude of the backward-travelling (reflected) part at `z`.
pub fn backward_amplitude(sol: &Solution, mode: &ModeSpec, z: f64) -> Result<C64> {
    Ok(split_amplitudes(sol, mode, z)?.1)
}

/// Modal coefficient `∫ p(x, z) φ_m(x) dx` of a field function.
pub fn field_overlap(field: &dyn FieldFunction, mode: &ModeSpec, z: f64) -> C64 {
    let width = match mode.kind {
        super::ModeKind::Plane => return field.fields(0.0, z)[2],
        super::ModeKind::Rect { a, .. } | super::ModeKind::Slab { a, .. } => a,
    };
    let rule = GaussRule::new(12);
    let pieces = 256;
    let h = width / pieces as f64;
    let mut acc = C64::new(0.0, 0.0);
    for k in 0..pieces {
        let x0 = k as f64 * h;
        for (&t, &w) in rule.points.iter().zip(&rule.weights) {
            let x = x0 + t * h;
            acc += field.fields(x, z)[2] * (mode.profile(x).0 * w * h);
        }
    }
    acc
}
