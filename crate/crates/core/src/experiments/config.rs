use serde::{Deserialize, Serialize};

use crate::mesh::RefineMode;
use crate::partition::BalancePolicy;
use crate::{Error, Result};

/// How lengths are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    /// Guided wavelength 1 and guide width 1; the domain grows with the length.
    #[default]
    Physical,
    /// The domain has unit length; wavelength and width shrink as `1 / length`
    /// and the frequency grows accordingly.
    UnitLength,
}

/// One straight guide of the uniform-medium family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuideCase {
    pub dim: usize,
    /// Length in guided wavelengths.
    pub length: usize,
    pub p: usize,
    /// Trial order along the guide, when different from `p`.
    pub pz: Option<usize>,
    /// Elements per wavelength along the guide.
    pub epw: usize,
    /// Element layers across the guide (2D).
    pub layers: usize,
    pub enrichment: usize,
    pub alpha: f64,
    /// Transverse mode number (2D).
    pub mode: usize,
    pub frame: Frame,
}

/// Error and power loss of the excited mode over lengths and orders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PollutionConfig {
    pub dim: usize,
    pub lengths: Vec<usize>,
    pub orders: Vec<usize>,
    pub epw: usize,
    pub layers: usize,
    pub enrichment: usize,
    pub alpha: f64,
    pub mode: usize,
    pub frame: Frame,
}

impl Default for PollutionConfig {
    fn default() -> Self {
        Self {
            dim: 2,
            lengths: vec![1, 2, 4, 8, 16, 32, 64, 128, 256],
            orders: vec![2, 3, 4, 5],
            epw: 4,
            layers: 2,
            enrichment: 1,
            alpha: 1.0,
            mode: 1,
            frame: Frame::Physical,
        }
    }
}

/// Anisotropic enrichment along the guide at fixed transverse resolution,
/// with an isotropic control series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnisoConfig {
    pub length: usize,
    /// Transverse order, and the order of the h-series.
    pub p: usize,
    pub epw: usize,
    pub layers: usize,
    /// Orders along the guide for the p-series (mesh fixed at `epw`, `layers`).
    pub pz: Vec<usize>,
    /// Elements per wavelength for the h-series (`layers` fixed).
    pub epw_z: Vec<usize>,
    /// Elements per wavelength for the isotropic control; layers scale along.
    pub iso_epw: Vec<usize>,
    pub enrichment: usize,
    pub alpha: f64,
    pub mode: usize,
}

impl Default for AnisoConfig {
    fn default() -> Self {
        Self {
            length: 4,
            p: 2,
            epw: 4,
            layers: 2,
            pz: vec![2, 3, 4, 5, 6, 7],
            epw_z: vec![4, 8, 16, 32, 64],
            iso_epw: vec![4, 8, 16, 32],
            enrichment: 1,
            alpha: 1.0,
            mode: 1,
        }
    }
}

/// Symmetric step-index slab with a fixed number of guided modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlabConfig {
    pub v: f64,
    pub n_core: f64,
    pub n_clad: f64,
    /// Vacuum wavelength in the length unit (micrometres).
    pub wavelength: f64,
    /// Width of the computational box in core half-widths.
    pub box_factor: f64,
    /// Length in wavelengths of the fundamental mode.
    pub length: usize,
    pub epw: usize,
    pub p: usize,
    pub enrichment: usize,
    pub alpha: f64,
}

impl Default for SlabConfig {
    fn default() -> Self {
        Self { v: 4.9, n_core: 1.4512, n_clad: 1.45, wavelength: 1.064, box_factor: 8.0, length: 4, epw: 2, p: 3, enrichment: 3, alpha: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptStudyConfig {
    pub slab: SlabConfig,
    pub modes: Vec<usize>,
    pub strategies: Vec<RefineMode>,
    pub kappa: f64,
    pub steps: usize,
}

impl Default for AdaptStudyConfig {
    fn default() -> Self {
        Self {
            slab: SlabConfig::default(),
            modes: vec![0, 1, 2, 3],
            strategies: vec![RefineMode::Iso, RefineMode::AnisoX],
            kappa: 0.5,
            steps: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionStudyConfig {
    pub slab: SlabConfig,
    pub mode: usize,
    pub strategy: RefineMode,
    pub kappa: f64,
    pub steps: usize,
    pub ranks: usize,
    pub policies: Vec<BalancePolicy>,
    /// Check every orthogonal cut against exhaustive search.
    pub verify: bool,
}

impl Default for PartitionStudyConfig {
    fn default() -> Self {
        Self {
            slab: SlabConfig { length: 16, epw: 6, enrichment: 2, ..SlabConfig::default() },
            mode: 0,
            strategy: RefineMode::Iso,
            kappa: 0.5,
            steps: 4,
            ranks: 8,
            policies: BalancePolicy::ALL.to_vec(),
            verify: true,
        }
    }
}

/// Uniform h-refinement of a short 2D guide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub dim: usize,
    pub length: usize,
    pub orders: Vec<usize>,
    pub epw: Vec<usize>,
    /// Transverse layers per element per wavelength (2D).
    pub layers_per_epw: f64,
    pub enrichment: usize,
    pub alpha: f64,
    pub mode: usize,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self { dim: 2, length: 2, orders: vec![1, 2, 3], epw: vec![4, 8, 16, 32], layers_per_epw: 0.5, enrichment: 1, alpha: 1.0, mode: 1 }
    }
}

/// Discrete inf-sup constant under uniform refinement of a 1D guide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilityConfig {
    pub omegas: Vec<f64>,
    pub length: usize,
    pub epw: Vec<usize>,
    pub p: usize,
    pub enrichment: usize,
    pub alpha: f64,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self { omegas: vec![std::f64::consts::TAU], length: 1, epw: vec![2, 4, 8, 16], p: 2, enrichment: 1, alpha: 1.0 }
    }
}

/// Top-level configuration file: a seed and one optional section per experiment.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub pollution: PollutionConfig,
    pub aniso: AnisoConfig,
    pub adapt: AdaptStudyConfig,
    pub partition: PartitionStudyConfig,
    pub convergence: ConvergenceConfig,
    pub stability: StabilityConfig,
}

fn nonempty<T>(name: &str, v: &[T]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::Config(format!("{name} must not be empty")));
    }
    Ok(())
}

fn positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::Config(format!("{name} must be at least 1")));
    }
    Ok(())
}

fn alpha_ok(alpha: f64) -> Result<()> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::Config(format!("alpha must be positive, got {alpha}")));
    }
    Ok(())
}

fn dim_ok(dim: usize) -> Result<()> {
    if dim != 1 && dim != 2 {
        return Err(Error::Config(format!("dim must be 1 or 2, got {dim}")));
    }
    Ok(())
}

impl PollutionConfig {
    pub fn validate(&self) -> Result<()> {
        dim_ok(self.dim)?;
        // an empty grid is allowed and yields a header-only table
        for &l in &self.lengths {
            positive("length", l)?;
        }
        for &p in &self.orders {
            positive("order", p)?;
        }
        positive("epw", self.epw)?;
        positive("enrichment", self.enrichment)?;
        if self.dim == 2 {
            positive("layers", self.layers)?;
            positive("mode", self.mode)?;
        }
        alpha_ok(self.alpha)
    }
}

impl AnisoConfig {
    pub fn validate(&self) -> Result<()> {
        positive("length", self.length)?;
        positive("p", self.p)?;
        positive("epw", self.epw)?;
        positive("layers", self.layers)?;
        positive("mode", self.mode)?;
        positive("enrichment", self.enrichment)?;
        for v in self.pz.iter().chain(&self.epw_z).chain(&self.iso_epw) {
            positive("grid value", *v)?;
        }
        alpha_ok(self.alpha)
    }
}

impl SlabConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.n_core > self.n_clad && self.n_clad > 0.0) {
            return Err(Error::Config("need n_core > n_clad > 0".into()));
        }
        if !(self.v > 0.0 && self.wavelength > 0.0 && self.box_factor > 2.0) {
            return Err(Error::Config("v and wavelength must be positive and box_factor above 2".into()));
        }
        positive("length", self.length)?;
        positive("epw", self.epw)?;
        positive("p", self.p)?;
        positive("enrichment", self.enrichment)?;
        alpha_ok(self.alpha)
    }
}

impl AdaptStudyConfig {
    pub fn validate(&self) -> Result<()> {
        self.slab.validate()?;
        nonempty("modes", &self.modes)?;
        nonempty("strategies", &self.strategies)?;
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return Err(Error::Config(format!("kappa must lie in (0, 1), got {}", self.kappa)));
        }
        Ok(())
    }
}

impl PartitionStudyConfig {
    pub fn validate(&self) -> Result<()> {
        self.slab.validate()?;
        positive("ranks", self.ranks)?;
        nonempty("policies", &self.policies)?;
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return Err(Error::Config(format!("kappa must lie in (0, 1), got {}", self.kappa)));
        }
        Ok(())
    }
}

impl ConvergenceConfig {
    pub fn validate(&self) -> Result<()> {
        dim_ok(self.dim)?;
        positive("length", self.length)?;
        nonempty("orders", &self.orders)?;
        nonempty("epw", &self.epw)?;
        for &e in &self.epw {
            positive("epw", e)?;
        }
        if self.dim == 2 && !(self.layers_per_epw > 0.0) {
            return Err(Error::Config("layers_per_epw must be positive".into()));
        }
        positive("enrichment", self.enrichment)?;
        alpha_ok(self.alpha)
    }
}

impl StabilityConfig {
    pub fn validate(&self) -> Result<()> {
        nonempty("omegas", &self.omegas)?;
        nonempty("epw", &self.epw)?;
        if self.omegas.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Config("omegas must be positive".into()));
        }
        positive("length", self.length)?;
        positive("p", self.p)?;
        positive("enrichment", self.enrichment)?;
        alpha_ok(self.alpha)
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}
