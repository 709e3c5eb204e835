//! Polynomial bases on elements and the global trace numbering.
//!
//! Trial fields use tensor shifted Legendre polynomials (L², no continuity).
//! Test functions and traces use tensor Lobatto (integrated Legendre) factors.

mod dofmap;
pub mod poly;

use serde::{Deserialize, Serialize};

use crate::mesh::Element;
use crate::{Error, Result};

pub use dofmap::{build_dof_map, Carrier, DofMap, ElementTraceMap, TraceDofKind};
use poly::{lobatto, shifted_legendre_with_derivatives, GaussRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceTag {
    TrialField,
    TestScalar,
    TestFlux,
    TraceScalar,
    TraceFlux,
}

/// Per-element counts `(trial field, test, trace per facet)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DofCounts {
    pub trial_field: usize,
    pub test: usize,
    pub trace_per_facet: usize,
}

pub fn element_dof_counts(p: usize, dp: usize, dim: usize) -> DofCounts {
    let r = p + dp;
    if dim == 1 {
        DofCounts { trial_field: 2 * (p + 1), test: 2 * (r + 1), trace_per_facet: 2 }
    } else {
        DofCounts {
            trial_field: 3 * (p + 1) * (p + 1),
            test: 3 * (r + 1) * (r + 1),
            trace_per_facet: 2 * (p + 1),
        }
    }
}

/// Polynomial orders of one discretization. `px` applies across the guide
/// and `pz` along it; only the trial fields see the difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Orders {
    pub px: usize,
    pub pz: usize,
    pub dp: usize,
}

impl Orders {
    pub fn uniform(p: usize, dp: usize) -> Self {
        Self { px: p, pz: p, dp }
    }

    /// Order of skeleton traces.
    pub fn trace(&self) -> usize {
        self.px.max(self.pz)
    }

    /// Order of the enriched test space.
    pub fn test(&self) -> usize {
        self.trace() + self.dp
    }

    /// Gauss points per direction for element integrals.
    pub fn quad_points(&self) -> usize {
        self.test() + 2
    }

    /// Number of scalar trial functions per field component.
    pub fn trial_scalar(&self, dim: usize) -> usize {
        if dim == 1 {
            self.pz + 1
        } else {
            (self.px + 1) * (self.pz + 1)
        }
    }

    /// Number of scalar test functions per component.
    pub fn test_scalar(&self, dim: usize) -> usize {
        (self.test() + 1).pow(dim as u32)
    }
}

/// Tensor Gauss rule on an `hx × hz` box (a segment of length `hz` in 1D).
#[derive(Debug, Clone)]
pub struct ElementQuadrature {
    pub dim: usize,
    /// Reference coordinates `(t_x, t_z)` in the unit box.
    pub reference: Vec<[f64; 2]>,
    /// Physical weights.
    pub weights: Vec<f64>,
    pub hx: f64,
    pub hz: f64,
}

impl ElementQuadrature {
    pub fn new(dim: usize, hx: f64, hz: f64, points_per_dir: usize) -> Self {
        let rule = GaussRule::new(points_per_dir);
        let mut reference = Vec::new();
        let mut weights = Vec::new();
        if dim == 1 {
            for (&t, &w) in rule.points.iter().zip(&rule.weights) {
                reference.push([0.0, t]);
                weights.push(w * hz);
            }
        } else {
            for (&tz, &wz) in rule.points.iter().zip(&rule.weights) {
                for (&tx, &wx) in rule.points.iter().zip(&rule.weights) {
                    reference.push([tx, tz]);
                    weights.push(wx * wz * hx * hz);
                }
            }
        }
        Self { dim, reference, weights, hx, hz }
    }

    pub fn for_element(dim: usize, e: &Element, points_per_dir: usize) -> Self {
        Self::new(dim, e.hx(), e.hz(), points_per_dir)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Physical point for an element with lower corner `(x0, z0)`.
    pub fn point(&self, q: usize, x0: f64, z0: f64) -> [f64; 2] {
        let r = self.reference[q];
        [x0 + r[0] * self.hx, z0 + r[1] * self.hz]
    }
}

/// Scalar basis functions tabulated at quadrature points.
///
/// Function `f = a + (ox + 1) * b` is the tensor product of the `a`-th x-factor
/// and the `b`-th z-factor (`f = b` in 1D). Vector-valued spaces use one copy
/// of the table per component.
#[derive(Debug, Clone)]
pub struct BasisTable {
    pub element: Option<usize>,
    pub space: SpaceTag,
    pub order: [usize; 2],
    pub n_functions: usize,
    pub n_points: usize,
    /// `values[f * n_points + q]`.
    pub values: Vec<f64>,
    /// Physical gradients `[d/dx, d/dz]`, same layout as `values`.
    pub grads: Vec<[f64; 2]>,
}

impl BasisTable {
    pub fn value(&self, f: usize, q: usize) -> f64 {
        self.values[f * self.n_points + q]
    }

    pub fn grad(&self, f: usize, q: usize) -> [f64; 2] {
        self.grads[f * self.n_points + q]
    }
}

/// Tabulate a scalar family of `order = [ox, oz]` on the quadrature box.
pub fn tabulate_reference(space: SpaceTag, order: [usize; 2], quad: &ElementQuadrature) -> Result<BasisTable> {
    let family = |n: usize, t: f64| -> (Vec<f64>, Vec<f64>) {
        match space {
            SpaceTag::TrialField => shifted_legendre_with_derivatives(n, t),
            _ => lobatto(n, t),
        }
    };
    match space {
        SpaceTag::TraceScalar | SpaceTag::TraceFlux => return Err(Error::UnsupportedSpace(space)),
        SpaceTag::TestScalar | SpaceTag::TestFlux if order[1] == 0 || (quad.dim == 2 && order[0] == 0) => {
            return Err(Error::UnsupportedSpace(space))
        }
        _ => {}
    }
    let (ox, oz) = if quad.dim == 1 { (0, order[1]) } else { (order[0], order[1]) };
    let nx = ox + 1;
    let n_functions = nx * (oz + 1);
    let n_points = quad.len();
    let mut values = vec![0.0; n_functions * n_points];
    let mut grads = vec![[0.0; 2]; n_functions * n_points];
    for (q, r) in quad.reference.iter().enumerate() {
        let (vz, dz) = family(oz, r[1]);
        let (vx, dx) = if quad.dim == 1 { (vec![1.0], vec![0.0]) } else { family(ox, r[0]) };
        for b in 0..=oz {
            for a in 0..nx {
                let f = a + nx * b;
                values[f * n_points + q] = vx[a] * vz[b];
                let gx = if quad.dim == 1 { 0.0 } else { dx[a] * vz[b] / quad.hx };
                grads[f * n_points + q] = [gx, vx[a] * dz[b] / quad.hz];
            }
        }
    }
    Ok(BasisTable { element: None, space, order: [ox, oz], n_functions, n_points, values, grads })
}

/// Tabulate `space` of isotropic `order` on element `e`.
pub fn tabulate_basis(e: &Element, space: SpaceTag, order: usize, quad: &ElementQuadrature) -> Result<BasisTable> {
    let mut t = tabulate_reference(space, [order, order], quad)?;
    t.element = Some(e.id);
    Ok(t)
}
