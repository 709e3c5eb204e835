//! Broken ultraweak discontinuous Petrov–Galerkin discretization of
//! time-harmonic guided waves on adaptive 1D/2D tensor meshes.
//!
//! The crate is organised bottom-up:
//!
//! * [`mesh`] – hierarchical interval/quadrilateral meshes with 1-irregular closure.
//! * [`spaces`] – quadrature, hierarchical bases and the global trace DOF map.
//! * [`physics`] – the first-order wave operator, boundary data and waveguide modes.
//! * [`dpg`] – element Gram/stiffness kernels, condensation, the global solve,
//!   residual indicators and a dense inf–sup probe.
//! * [`adapt`] – Dörfler marking and the adaptive loop.
//! * [`partition`] – simulated domain partitioning and dynamic load balancing.
//! * [`experiments`] – drivers that sweep the above and emit CSV tables.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adapt;
pub mod dpg;
mod error;
pub mod experiments;
pub mod mesh;
pub mod partition;
pub mod physics;
pub mod spaces;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;

pub use dpg::{Discretization, Solution, TestNormConfig};
pub use mesh::{BoundaryTag, DomainLabel, Element, MarkSet, Mesh, MeshBuilder, RefineMode};
pub use physics::{ModeSpec, WaveProblem};
