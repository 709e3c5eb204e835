use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Axis, BoundaryTag, DomainLabel, Mesh};
use crate::Result;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ElementSnapshot {
    pub id: usize,
    /// `[x0, x1, z0, z1]`; x entries are zero in 1D.
    pub bbox: [f64; 4],
    pub level: [u32; 2],
    pub label: DomainLabel,
    pub p: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FacetSnapshot {
    pub id: usize,
    pub normal: Axis,
    /// End points `[[x0, z0], [x1, z1]]`.
    pub endpoints: [[f64; 2]; 2],
    pub elements: Vec<usize>,
    pub boundary: Option<BoundaryTag>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeshSnapshot {
    pub dim: usize,
    pub elements: Vec<ElementSnapshot>,
    pub facets: Vec<FacetSnapshot>,
}

impl Mesh {
    pub fn snapshot(&self) -> MeshSnapshot {
        let elements = self
            .active_elements()
            .map(|e| ElementSnapshot {
                id: e.id,
                bbox: [e.x[0], e.x[1], e.z[0], e.z[1]],
                level: e.level,
                label: e.label,
                p: e.p,
            })
            .collect();
        let facets = self
            .facets
            .iter()
            .map(|f| {
                let t0 = f.span[0];
                let t1 = f.span[1];
                let endpoints = match f.normal {
                    Axis::Z => {
                        let z = self.coord_z(f.line);
                        [[self.coord_x(t0), z], [self.coord_x(t1), z]]
                    }
                    Axis::X => {
                        let x = self.coord_x(f.line);
                        [[x, self.coord_z(t0)], [x, self.coord_z(t1)]]
                    }
                };
                FacetSnapshot {
                    id: f.id,
                    normal: f.normal,
                    endpoints,
                    elements: f.elements().collect(),
                    boundary: f.boundary,
                }
            })
            .collect();
        MeshSnapshot { dim: self.dim, elements, facets }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.snapshot())?)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_json()?.as_bytes())?;
        Ok(())
    }
}
