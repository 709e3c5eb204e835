use serde::{Deserialize, Serialize};

use super::{FieldFunction, IndexProfile, I};
use crate::mesh::DomainLabel;
use crate::spaces::poly::GaussRule;
use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parity {
    Even,
    Odd,
}

/// Transverse profile family of a mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ModeKind {
    /// 1D plane wave, `φ = 1`.
    Plane,
    /// Hard-wall guide of width `a`: `φ = sqrt(2/a) sin(mπx/a)`.
    Rect { m: usize, a: f64 },
    /// Symmetric step-index slab of half-width `d` centred in a hard-wall box
    /// of width `a`; `kappa` and `gamma` are the core and cladding transverse
    /// wavenumbers.
    Slab { parity: Parity, kappa: f64, gamma: f64, d: f64, a: f64, scale: f64 },
}

/// A guided (or evanescent) mode `p = A φ(x) exp(∓i k_z z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeSpec {
    pub kind: ModeKind,
    /// Mode number (1-based for hard-wall modes, 0-based for slab modes).
    pub index: usize,
    pub omega: f64,
    pub kz: C64,
    pub cutoff: bool,
    pub amplitude: C64,
    /// `+1` forward (`exp(-i k_z z)`), `-1` backward.
    pub direction: f64,
}

impl ModeSpec {
    /// `Z = ω / k_z`.
    pub fn impedance(&self) -> C64 {
        C64::new(self.omega, 0.0) / self.kz
    }

    pub fn scaled(&self, a: C64) -> ModeSpec {
        ModeSpec { amplitude: self.amplitude * a, ..*self }
    }

    pub fn backward(&self) -> ModeSpec {
        ModeSpec { direction: -self.direction, ..*self }
    }

    /// Transverse profile and its derivative.
    pub fn profile(&self, x: f64) -> (f64, f64) {
        match self.kind {
            ModeKind::Plane => (1.0, 0.0),
            ModeKind::Rect { m, a } => {
                let k = m as f64 * std::f64::consts::PI / a;
                let s = (2.0 / a).sqrt();
                (s * (k * x).sin(), s * k * (k * x).cos())
            }
            ModeKind::Slab { parity, kappa, gamma, d, a, scale } => {
                let s = x - 0.5 * a;
                let b = 0.5 * a - d;
                let (v, dv) = if s.abs() <= d {
                    match parity {
                        Parity::Even => ((kappa * s).cos(), -kappa * (kappa * s).sin()),
                        Parity::Odd => ((kappa * s).sin(), kappa * (kappa * s).cos()),
                    }
                } else {
                    let t = 0.5 * a - s.abs();
                    let (sh, ch) = sinh_cosh_ratio(gamma, t, b);
                    let sg = s.signum();
                    match parity {
                        Parity::Even => {
                            let c = (kappa * d).cos();
                            (c * sh, -sg * gamma * c * ch)
                        }
                        Parity::Odd => {
                            let c = (kappa * d).sin();
                            (sg * c * sh, -gamma * c * ch)
                        }
                    }
                };
                (scale * v, scale * dv)
            }
        }
    }

    /// `exp(∓i k_z z)` times the amplitude.
    pub fn longitudinal(&self, z: f64) -> C64 {
        self.amplitude * (-I * self.kz * self.direction * z).exp()
    }
}

/// `(sinh(γt)/sinh(γb), cosh(γt)/sinh(γb))` without overflow.
fn sinh_cosh_ratio(gamma: f64, t: f64, b: f64) -> (f64, f64) {
    if gamma * b < 1e-8 {
        return (t / b, 1.0 / (gamma * b).max(1e-300));
    }
    let e = (gamma * (t - b)).exp();
    let den = 1.0 - (-2.0 * gamma * b).exp();
    let et = (-2.0 * gamma * t).exp();
    (e * (1.0 - et) / den, e * (1.0 + et) / den)
}

impl FieldFunction for ModeSpec {
    fn fields(&self, x: f64, z: f64) -> [C64; 3] {
        let (phi, dphi) = self.profile(x);
        let e = self.longitudinal(z);
        let p = e * phi;
        let ux = I / self.omega * dphi * e;
        let uz = self.direction * self.kz / self.omega * p;
        [ux, uz, p]
    }
}

/// 1D plane wave in a medium of index `n`.
pub fn plane_mode(omega: f64, n: f64) -> ModeSpec {
    ModeSpec {
        kind: ModeKind::Plane,
        index: 0,
        omega,
        kz: C64::new(omega * n, 0.0),
        cutoff: false,
        amplitude: C64::new(1.0, 0.0),
        direction: 1.0,
    }
}

/// Hard-wall mode `m ≥ 1` of a guide of width `a` filled with index 1.
pub fn rectangular_mode(m: usize, omega: f64, a: f64) -> ModeSpec {
    rectangular_mode_in(m, omega, a, 1.0)
}

/// Hard-wall mode in a uniform medium of index `n`. Below cutoff `k_z` is
/// chosen on the branch that decays along `+z`.
pub fn rectangular_mode_in(m: usize, omega: f64, a: f64, n: f64) -> ModeSpec {
    let kt = m as f64 * std::f64::consts::PI / a;
    let k2 = omega * omega * n * n - kt * kt;
    let kz = if k2 >= 0.0 { C64::new(k2.sqrt(), 0.0) } else { C64::new(0.0, -(-k2).sqrt()) };
    ModeSpec {
        kind: ModeKind::Rect { m, a },
        index: m,
        omega,
        kz,
        cutoff: k2 <= 0.0,
        amplitude: C64::new(1.0, 0.0),
        direction: 1.0,
    }
}

/// `V = 2π r NA / λ`.
pub fn v_number(wavelength: f64, r_core: f64, na: f64) -> f64 {
    2.0 * std::f64::consts::PI * r_core * na / wavelength
}

/// Root of the open-slab dispersion relation in normalized variables
/// `u = κd`, `w = γd`, `u² + w² = V²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlabRoot {
    pub parity: Parity,
    /// Position in order of decreasing effective index.
    pub order: usize,
    pub u: f64,
    pub w: f64,
}

impl SlabRoot {
    /// Residual of `u tan u = w` (even) or `-u cot u = w` (odd).
    pub fn residual(&self) -> f64 {
        match self.parity {
            Parity::Even => self.u * self.u.tan() - self.w,
            Parity::Odd => -self.u / self.u.tan() - self.w,
        }
    }
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 * hi.max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Guided modes of the symmetric slab, `f(u)` being `lhs(u) - rhs(w)`.
fn slab_roots(v: f64, rhs: impl Fn(f64) -> f64) -> Vec<SlabRoot> {
    let half_pi = std::f64::consts::FRAC_PI_2;
    let mut out = Vec::new();
    let mut branch = 0usize;
    loop {
        let lo = branch as f64 * half_pi;
        if lo >= v {
            break;
        }
        let parity = if branch.is_multiple_of(2) { Parity::Even } else { Parity::Odd };
        let lhs = move |u: f64| match parity {
            Parity::Even => u * u.tan(),
            Parity::Odd => -u / u.tan(),
        };
        let w_of = |u: f64| (v * v - u * u).max(0.0).sqrt();
        let g = |u: f64| lhs(u) - rhs(w_of(u));
        // the left end is a zero of lhs; step off it
        let a = lo + 1e-15 * lo.max(1.0);
        let b = (lo + half_pi).min(v);
        let b = if b >= lo + half_pi { b - 1e-13 } else { b };
        if g(a) < 0.0 && g(b) > 0.0 {
            let u = bisect(a, b, g);
            out.push(SlabRoot { parity, order: 0, u, w: w_of(u) });
        }
        branch += 1;
    }
    for (i, r) in out.iter_mut().enumerate() {
        r.order = i;
    }
    out
}

/// Guided modes of the open symmetric slab with normalized frequency `V`,
/// ordered by decreasing effective index.
pub fn slab_modes(v: f64) -> Vec<SlabRoot> {
    if !(v > 0.0) {
        return Vec::new();
    }
    slab_roots(v, |w| w)
}

/// Symmetric step-index slab of half-width `d` centred in a hard-wall box of
/// width `a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlabGuide {
    pub n_core: f64,
    pub n_clad: f64,
    pub d: f64,
    pub a: f64,
    pub omega: f64,
}

impl SlabGuide {
    /// Guide with `V = ω d NA` and box width `a = box_factor · d`.
    pub fn with_v(v: f64, n_core: f64, n_clad: f64, omega: f64, box_factor: f64) -> Result<Self> {
        let na = (n_core * n_core - n_clad * n_clad).sqrt();
        if !(na > 0.0) || !(v > 0.0) || !(box_factor > 2.0) {
            return Err(Error::InvalidProblem("slab needs n_core > n_clad, V > 0 and a box wider than the core".into()));
        }
        let d = v / (omega * na);
        Ok(Self { n_core, n_clad, d, a: box_factor * d, omega })
    }

    pub fn numerical_aperture(&self) -> f64 {
        (self.n_core * self.n_core - self.n_clad * self.n_clad).sqrt()
    }

    pub fn v(&self) -> f64 {
        self.omega * self.d * self.numerical_aperture()
    }

    pub fn index_profile(&self) -> IndexProfile {
        IndexProfile::step(self.n_core, self.n_clad)
    }

    /// Interior layer lines: cladding inner/outer at `2d`, core outer at `d`,
    /// core inner at `d/2` from the centre.
    pub fn layer_boundaries(&self) -> Vec<f64> {
        let c = 0.5 * self.a;
        let d = self.d;
        vec![c - 2.0 * d, c - d, c - 0.5 * d, c + 0.5 * d, c + d, c + 2.0 * d]
    }

    pub fn layer_labels(&self) -> Vec<DomainLabel> {
        use DomainLabel::*;
        vec![CladdingOuter, CladdingInner, CoreOuter, CoreInner, CoreOuter, CladdingInner, CladdingOuter]
    }

    /// The core interval `[a/2 - d, a/2 + d]`.
    pub fn core(&self) -> (f64, f64) {
        (0.5 * self.a - self.d, 0.5 * self.a + self.d)
    }

    /// Guided modes of the boxed slab (profiles vanish on the walls), ordered
    /// by decreasing `k_z`.
    pub fn modes(&self) -> Vec<ModeSpec> {
        let v = self.v();
        let ratio = (0.5 * self.a - self.d) / self.d;
        let roots = slab_roots(v, |w| if w * ratio < 1e-8 { 1.0 / ratio } else { w / (w * ratio).tanh() });
        roots
            .iter()
            .map(|r| {
                let kappa = r.u / self.d;
                let gamma = r.w / self.d;
                let kz2 = self.omega * self.omega * self.n_core * self.n_core - kappa * kappa;
                let mut mode = ModeSpec {
                    kind: ModeKind::Slab { parity: r.parity, kappa, gamma, d: self.d, a: self.a, scale: 1.0 },
                    index: r.order,
                    omega: self.omega,
                    kz: C64::new(kz2.max(0.0).sqrt(), 0.0),
                    cutoff: false,
                    amplitude: C64::new(1.0, 0.0),
                    direction: 1.0,
                };
                let norm = profile_integral(&mode, 0.0, self.a).sqrt();
                if let ModeKind::Slab { ref mut scale, .. } = mode.kind {
                    *scale = 1.0 / norm;
                }
                mode
            })
            .collect()
    }
}

/// `∫ φ² dx` over `[x0, x1]` by composite Gauss quadrature split at the
/// profile's kinks.
pub(crate) fn profile_integral(mode: &ModeSpec, x0: f64, x1: f64) -> f64 {
    integrate_profile(mode, x0, x1, |phi| phi * phi)
}

pub(crate) fn integrate_profile(mode: &ModeSpec, x0: f64, x1: f64, f: impl Fn(f64) -> f64) -> f64 {
    let mut cuts = vec![x0, x1];
    if let ModeKind::Slab { d, a, .. } = mode.kind {
        for c in [0.5 * a - d, 0.5 * a + d] {
            if c > x0 && c < x1 {
                cuts.push(c);
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    let rule = GaussRule::new(10);
    let pieces = 200;
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let h = (w[1] - w[0]) / pieces as f64;
        for k in 0..pieces {
            let a = w[0] + k as f64 * h;
            total += rule.integrate(a, a + h, |x| f(mode.profile(x).0));
        }
    }
    total
}

/// Fraction of `∫ φ²` carried by `core`, relative to the mode's domain.
pub fn confinement(mode: &ModeSpec, core: (f64, f64)) -> f64 {
    let width = match mode.kind {
        ModeKind::Plane => return 1.0,
        ModeKind::Rect { a, .. } | ModeKind::Slab { a, .. } => a,
    };
    let total = profile_integral(mode, 0.0, width);
    if total == 0.0 {
        return 0.0;
    }
    let (c0, c1) = (core.0.max(0.0), core.1.min(width));
    if c1 <= c0 {
        return 0.0;
    }
    profile_integral(mode, c0, c1) / total
}
