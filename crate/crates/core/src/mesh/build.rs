use super::{DomainLabel, Element, Mesh, SUBDIV};
use crate::{Error, Result};

/// How transverse layers receive domain labels.
#[derive(Debug, Clone, Default)]
pub enum LabelScheme {
    /// `bulk` for meshes without layer boundaries; otherwise layer `i` gets the
    /// `i`-th fiber domain (core inner, core outer, cladding inner, cladding
    /// outer), later layers reuse the outermost label.
    #[default]
    Auto,
    /// One label per transverse layer.
    Explicit(Vec<DomainLabel>),
}

/// Structured tensor mesh of `(0, a) × (0, L)` (2D) or `(0, L)` (1D).
#[derive(Debug, Clone)]
pub struct MeshBuilder {
    pub length_wavelengths: usize,
    pub elems_per_wavelength: usize,
    /// Rows across the guide; zero selects a 1D mesh.
    pub transverse_layers: usize,
    pub p: usize,
    pub layer_boundaries: Option<Vec<f64>>,
    pub width: f64,
    pub wavelength: f64,
    pub labels: LabelScheme,
}

impl MeshBuilder {
    pub fn new(length_wavelengths: usize, elems_per_wavelength: usize, transverse_layers: usize, p: usize) -> Self {
        Self {
            length_wavelengths,
            elems_per_wavelength,
            transverse_layers,
            p,
            layer_boundaries: None,
            width: 1.0,
            wavelength: 1.0,
            labels: LabelScheme::Auto,
        }
    }

    pub fn layer_boundaries(mut self, b: Vec<f64>) -> Self {
        self.layer_boundaries = Some(b);
        self
    }

    pub fn width(mut self, a: f64) -> Self {
        self.width = a;
        self
    }

    pub fn wavelength(mut self, lambda: f64) -> Self {
        self.wavelength = lambda;
        self
    }

    pub fn labels(mut self, labels: LabelScheme) -> Self {
        self.labels = labels;
        self
    }

    pub fn build(&self) -> Result<Mesh> {
        if self.length_wavelengths == 0 {
            return Err(Error::InvalidMesh("length must be at least one wavelength".into()));
        }
        if self.elems_per_wavelength == 0 {
            return Err(Error::InvalidMesh("need at least one element per wavelength".into()));
        }
        if self.p == 0 {
            return Err(Error::InvalidMesh("polynomial order must be at least 1".into()));
        }
        if !(self.wavelength > 0.0) || !(self.width > 0.0) {
            return Err(Error::InvalidMesh("wavelength and width must be positive".into()));
        }
        let columns = self.length_wavelengths * self.elems_per_wavelength;
        let hz = self.wavelength / self.elems_per_wavelength as f64;
        let zs: Vec<f64> = (0..=columns).map(|i| i as f64 * hz).collect();

        let dim = if self.transverse_layers == 0 { 1 } else { 2 };
        let xs: Vec<f64> = if dim == 1 {
            vec![0.0, 1.0]
        } else {
            self.transverse_lines()?
        };
        let rows = xs.len() - 1;
        let labels = self.row_labels(rows)?;

        let mut elements = Vec::with_capacity(rows * columns);
        for c in 0..columns {
            for (r, &label) in labels.iter().enumerate() {
                let id = elements.len();
                let ix = [r as i64 * SUBDIV, (r as i64 + 1) * SUBDIV];
                let iz = [c as i64 * SUBDIV, (c as i64 + 1) * SUBDIV];
                let x = if dim == 1 { [0.0, 0.0] } else { [xs[r], xs[r + 1]] };
                elements.push(Element {
                    id,
                    ix,
                    iz,
                    x,
                    z: [zs[c], zs[c + 1]],
                    level: [0, 0],
                    active: true,
                    p: self.p,
                    label,
                    parent: None,
                    children: Vec::new(),
                    split: None,
                });
            }
        }
        Ok(Mesh::from_parts(dim, xs, zs, self.wavelength, elements))
    }

    fn transverse_lines(&self) -> Result<Vec<f64>> {
        let a = self.width;
        let n = self.transverse_layers;
        match &self.layer_boundaries {
            None => Ok((0..=n).map(|i| a * i as f64 / n as f64).collect()),
            Some(b) => {
                if b.len() + 1 != n {
                    return Err(Error::InvalidMesh(format!(
                        "{} layer boundaries given for {n} layers",
                        b.len()
                    )));
                }
                let mut lines = Vec::with_capacity(n + 1);
                lines.push(0.0);
                for &x in b {
                    if !(x > 0.0 && x < a) {
                        return Err(Error::InvalidMesh(format!("layer boundary {x} outside (0, {a})")));
                    }
                    if x <= *lines.last().unwrap() {
                        return Err(Error::InvalidMesh("layer boundaries must be strictly increasing".into()));
                    }
                    lines.push(x);
                }
                lines.push(a);
                Ok(lines)
            }
        }
    }

    fn row_labels(&self, rows: usize) -> Result<Vec<DomainLabel>> {
        match &self.labels {
            LabelScheme::Explicit(l) => {
                if l.len() != rows {
                    return Err(Error::InvalidMesh(format!("{} labels for {rows} layers", l.len())));
                }
                Ok(l.clone())
            }
            LabelScheme::Auto if self.layer_boundaries.is_none() || rows <= 1 => Ok(vec![DomainLabel::Bulk; rows]),
            LabelScheme::Auto => Ok((0..rows).map(|r| DomainLabel::FIBER[r.min(3)]).collect()),
        }
    }
}

/// Structured waveguide mesh with the given number of wavelengths, elements
/// per wavelength and transverse layers (zero layers gives a 1D mesh).
pub fn build_waveguide_mesh(
    length_wavelengths: usize,
    elems_per_wavelength: usize,
    transverse_layers: usize,
    p: usize,
    layer_boundaries: Option<Vec<f64>>,
) -> Result<Mesh> {
    let mut b = MeshBuilder::new(length_wavelengths, elems_per_wavelength, transverse_layers, p);
    b.layer_boundaries = layer_boundaries;
    b.build()
}
