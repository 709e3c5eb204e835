//! The first-order time-harmonic wave system and its boundary data.
//!
//! Time dependence is `exp(+iωt)` and forward-travelling modes behave like
//! `exp(-i k_z z)`. With flux `u` and scalar `p` the system reads
//!
//! ```text
//! A(u, p) = (iω u + ∇p,  iω n² p + div u) = f
//! ```
//!
//! so that `u = (i/ω) ∇p` and `p` solves `Δp + ω² n² p = 0` for `f = 0`. The
//! formal adjoint under `(a, b) = ∫ a · conj(b)` is
//! `A*(v, q) = (-iω v - ∇q, -iω n² q - div v)`. Input and wall boundaries carry
//! Dirichlet data on `p̂`; the output boundary uses `û·n = p̂ / Z + g`.

mod modes;
mod observables;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dpg::TestNormConfig;
use crate::mesh::DomainLabel;
use crate::{Error, Result, C64};

pub use modes::{
    confinement, plane_mode, rectangular_mode, rectangular_mode_in, slab_modes, v_number, ModeKind, ModeSpec, Parity, SlabGuide, SlabRoot,
};
pub use observables::{
    backward_amplitude, field_overlap, forward_amplitude, mode_overlap, power_flux, power_loss, relative_l2_error, relative_l2_error_with,
};

const I: C64 = C64::new(0.0, 1.0);

/// `A(u, p)` at a point from values and derivatives of the fields.
pub fn apply(omega: f64, n2: f64, u: [C64; 2], div_u: C64, p: C64, grad_p: [C64; 2]) -> ([C64; 2], C64) {
    let iw = I * omega;
    ([iw * u[0] + grad_p[0], iw * u[1] + grad_p[1]], iw * n2 * p + div_u)
}

/// `A*(v, q)` at a point from values and derivatives of the test functions.
pub fn adjoint_apply(omega: f64, n2: f64, v: [C64; 2], div_v: C64, q: C64, grad_q: [C64; 2]) -> ([C64; 2], C64) {
    let iw = I * omega;
    ([-iw * v[0] - grad_q[0], -iw * v[1] - grad_q[1]], -iw * n2 * q - div_v)
}

/// Fields `[u_x, u_z, p]` at a point (`u_x = 0` in 1D).
pub trait FieldFunction: Send + Sync {
    fn fields(&self, x: f64, z: f64) -> [C64; 3];
}

/// Boundary and volume data of a wave problem.
pub trait ProblemData: Send + Sync {
    /// `p̂` on input and wall facets.
    fn dirichlet(&self, x: f64, z: f64) -> C64;
    /// `g` in `û·n = p̂ / Z + g` on the output boundary.
    fn impedance_offset(&self, _x: f64, _z: f64) -> C64 {
        C64::new(0.0, 0.0)
    }
    /// Right-hand side `f = [f_ux, f_uz, f_p]`, or `None` for zero.
    fn source(&self, _x: f64, _z: f64) -> Option<[C64; 3]> {
        None
    }
    fn has_source(&self) -> bool {
        false
    }
}

/// Data manufactured from known fields: Dirichlet values, impedance offset and
/// source are chosen so that `exact` solves the problem.
pub struct ManufacturedData {
    pub exact: Arc<dyn FieldFunction>,
    /// `A(exact)`; `None` when the fields solve the homogeneous system.
    pub source: Option<Arc<dyn FieldFunction>>,
    pub impedance: C64,
}

impl ProblemData for ManufacturedData {
    fn dirichlet(&self, x: f64, z: f64) -> C64 {
        self.exact.fields(x, z)[2]
    }

    fn impedance_offset(&self, x: f64, z: f64) -> C64 {
        let f = self.exact.fields(x, z);
        f[1] - f[2] / self.impedance
    }

    fn source(&self, x: f64, z: f64) -> Option<[C64; 3]> {
        self.source.as_ref().map(|s| s.fields(x, z))
    }

    fn has_source(&self) -> bool {
        self.source.is_some()
    }
}

/// Homogeneous data: zero Dirichlet, zero offset, zero source.
pub struct ZeroData;

impl ProblemData for ZeroData {
    fn dirichlet(&self, _x: f64, _z: f64) -> C64 {
        C64::new(0.0, 0.0)
    }
}

/// Piecewise-constant refractive index over domain labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexProfile {
    pub bulk: f64,
    pub core_inner: f64,
    pub core_outer: f64,
    pub cladding_inner: f64,
    pub cladding_outer: f64,
}

impl IndexProfile {
    pub fn uniform(n: f64) -> Self {
        Self { bulk: n, core_inner: n, core_outer: n, cladding_inner: n, cladding_outer: n }
    }

    pub fn step(core: f64, cladding: f64) -> Self {
        Self { bulk: cladding, core_inner: core, core_outer: core, cladding_inner: cladding, cladding_outer: cladding }
    }

    pub fn n(&self, label: DomainLabel) -> f64 {
        match label {
            DomainLabel::Bulk => self.bulk,
            DomainLabel::CoreInner => self.core_inner,
            DomainLabel::CoreOuter => self.core_outer,
            DomainLabel::CladdingInner => self.cladding_inner,
            DomainLabel::CladdingOuter => self.cladding_outer,
        }
    }
}

/// A time-harmonic wave problem on a waveguide mesh.
#[derive(Clone)]
pub struct WaveProblem {
    pub omega: f64,
    pub index: IndexProfile,
    /// Test-space enrichment Δp.
    pub enrichment: usize,
    /// Trial order along the guide when it differs from the mesh order.
    pub z_order: Option<usize>,
    pub test_norm: TestNormConfig,
    /// Output impedance `Z` in `û·n = p̂ / Z + g`.
    pub impedance: C64,
    pub data: Arc<dyn ProblemData>,
    /// Exact solution, when known.
    pub exact: Option<Arc<dyn FieldFunction>>,
}

impl std::fmt::Debug for WaveProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WaveProblem")
            .field("omega", &self.omega)
            .field("index", &self.index)
            .field("enrichment", &self.enrichment)
            .field("z_order", &self.z_order)
            .field("test_norm", &self.test_norm)
            .field("impedance", &self.impedance)
            .finish_non_exhaustive()
    }
}

impl WaveProblem {
    /// Excite `mode` at the input, scaled by `amplitude`, with the output
    /// impedance matched to it. The scaled mode is the exact solution.
    pub fn mode_excitation(mode: ModeSpec, amplitude: C64, index: IndexProfile) -> Result<Self> {
        if !(mode.omega > 0.0) {
            return Err(Error::InvalidProblem("omega must be positive".into()));
        }
        let impedance = mode.impedance();
        let exact: Arc<dyn FieldFunction> = Arc::new(mode.scaled(amplitude));
        Ok(Self {
            omega: mode.omega,
            index,
            enrichment: 1,
            z_order: None,
            test_norm: TestNormConfig::default(),
            impedance,
            data: Arc::new(ManufacturedData { exact: exact.clone(), source: None, impedance }),
            exact: Some(exact),
        })
    }

    /// Problem whose solution is `exact`, with `source = A(exact)`.
    pub fn manufactured(
        omega: f64,
        index: IndexProfile,
        impedance: C64,
        exact: Arc<dyn FieldFunction>,
        source: Option<Arc<dyn FieldFunction>>,
    ) -> Self {
        Self {
            omega,
            index,
            enrichment: 1,
            z_order: None,
            test_norm: TestNormConfig::default(),
            impedance,
            data: Arc::new(ManufacturedData { exact: exact.clone(), source, impedance }),
            exact: Some(exact),
        }
    }

    pub fn with_enrichment(mut self, dp: usize) -> Self {
        self.enrichment = dp;
        self
    }

    pub fn with_z_order(mut self, pz: Option<usize>) -> Self {
        self.z_order = pz;
        self
    }

    pub fn with_test_norm(mut self, cfg: TestNormConfig) -> Self {
        self.test_norm = cfg;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega >= 0.0) || !self.omega.is_finite() {
            return Err(Error::InvalidProblem(format!("invalid omega {}", self.omega)));
        }
        if self.enrichment == 0 {
            return Err(Error::InvalidProblem("enrichment must be at least 1".into()));
        }
        if !(self.test_norm.alpha > 0.0) {
            return Err(Error::InvalidProblem("test norm scaling must be positive".into()));
        }
        if self.impedance.norm() == 0.0 || !self.impedance.is_finite() {
            return Err(Error::InvalidProblem("output impedance must be finite and nonzero".into()));
        }
        Ok(())
    }
}
