//! Hierarchical axis-aligned meshes of waveguide domains.
//!
//! Element boxes are stored in integer dyadic coordinates: every cell of the
//! initial tensor grid spans [`SUBDIV`] units in each direction and refinement
//! halves an integer interval. Topology (facets, hanging nodes, closure) is
//! therefore decided exactly, and floating point coordinates are derived from
//! the initial grid lines only when geometry is needed.

mod build;
mod export;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use build::{build_waveguide_mesh, LabelScheme, MeshBuilder};
pub use export::{ElementSnapshot, FacetSnapshot, MeshSnapshot};

/// Integer units per initial grid cell; bounds the refinement depth to 24.
pub const SUBDIV: i64 = 1 << 24;
const MAX_LEVEL: u32 = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainLabel {
    Bulk,
    CoreInner,
    CoreOuter,
    CladdingInner,
    CladdingOuter,
}

impl DomainLabel {
    pub const FIBER: [DomainLabel; 4] = [
        DomainLabel::CoreInner,
        DomainLabel::CoreOuter,
        DomainLabel::CladdingInner,
        DomainLabel::CladdingOuter,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DomainLabel::Bulk => "bulk",
            DomainLabel::CoreInner => "core_inner",
            DomainLabel::CoreOuter => "core_outer",
            DomainLabel::CladdingInner => "cladding_inner",
            DomainLabel::CladdingOuter => "cladding_outer",
        }
    }

    pub fn is_core(self) -> bool {
        matches!(self, DomainLabel::CoreInner | DomainLabel::CoreOuter)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryTag {
    Input,
    Output,
    Wall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Axis {
    X,
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefineMode {
    Iso,
    /// Split the z-interval: two children stacked along the guide axis.
    AnisoZ,
    /// Split the x-interval (radial refinement).
    AnisoX,
}

impl RefineMode {
    pub fn name(self) -> &'static str {
        match self {
            RefineMode::Iso => "iso",
            RefineMode::AnisoZ => "aniso_z",
            RefineMode::AnisoX => "aniso_x",
        }
    }

    fn from_axes(split_x: bool, split_z: bool) -> Option<Self> {
        match (split_x, split_z) {
            (true, true) => Some(RefineMode::Iso),
            (true, false) => Some(RefineMode::AnisoX),
            (false, true) => Some(RefineMode::AnisoZ),
            (false, false) => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Element {
    pub id: usize,
    /// Integer x-extent (unused in 1D).
    pub ix: [i64; 2],
    /// Integer z-extent.
    pub iz: [i64; 2],
    pub x: [f64; 2],
    pub z: [f64; 2],
    /// Refinement level along `[x, z]`.
    pub level: [u32; 2],
    pub active: bool,
    pub p: usize,
    pub label: DomainLabel,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub split: Option<RefineMode>,
}

impl Element {
    pub fn hx(&self) -> f64 {
        self.x[1] - self.x[0]
    }

    pub fn hz(&self) -> f64 {
        self.z[1] - self.z[0]
    }

    pub fn z_mid(&self) -> f64 {
        0.5 * (self.z[0] + self.z[1])
    }

    pub fn x_mid(&self) -> f64 {
        0.5 * (self.x[0] + self.x[1])
    }
}

/// Local side numbering: 0 = z-low, 1 = x-high, 2 = z-high, 3 = x-low.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Side {
    pub index: usize,
    pub normal: Axis,
    /// Outward normal sign relative to the positive axis.
    pub sign: f64,
}

impl Side {
    pub const ALL: [Side; 4] = [
        Side { index: 0, normal: Axis::Z, sign: -1.0 },
        Side { index: 1, normal: Axis::X, sign: 1.0 },
        Side { index: 2, normal: Axis::Z, sign: 1.0 },
        Side { index: 3, normal: Axis::X, sign: -1.0 },
    ];

    /// Sides present in a mesh of dimension `dim`.
    pub fn of_dim(dim: usize) -> &'static [Side] {
        static ONE_D: [Side; 2] = [Side::ALL[0], Side::ALL[2]];
        if dim == 1 {
            &ONE_D
        } else {
            &Side::ALL
        }
    }

    /// Integer line coordinate and tangential span of this side of `e`.
    pub fn locate(&self, e: &Element) -> (i64, [i64; 2]) {
        match self.index {
            0 => (e.iz[0], e.ix),
            1 => (e.ix[1], e.iz),
            2 => (e.iz[1], e.ix),
            _ => (e.ix[0], e.iz),
        }
    }
}

/// A skeleton segment shared by at most two element sides.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Facet {
    pub id: usize,
    pub normal: Axis,
    /// Integer coordinate along the normal axis.
    pub line: i64,
    /// Integer extent along the tangential axis (`[0, SUBDIV]` in 1D).
    pub span: [i64; 2],
    /// Element on the low-coordinate side.
    pub lo: Option<usize>,
    /// Element on the high-coordinate side.
    pub hi: Option<usize>,
    pub boundary: Option<BoundaryTag>,
}

impl Facet {
    pub fn elements(&self) -> impl Iterator<Item = usize> + '_ {
        self.lo.into_iter().chain(self.hi)
    }

    pub fn is_interior(&self) -> bool {
        self.lo.is_some() && self.hi.is_some()
    }
}

/// Element ids together with the refinement requested for each.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkSet {
    pub marks: Vec<(usize, RefineMode)>,
}

impl MarkSet {
    pub fn uniform(ids: impl IntoIterator<Item = usize>, mode: RefineMode) -> Self {
        Self { marks: ids.into_iter().map(|id| (id, mode)).collect() }
    }

    pub fn is_empty(&self) -> bool {
        self.marks.is_empty()
    }

    pub fn len(&self) -> usize {
        self.marks.len()
    }

    pub fn ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.marks.iter().map(|m| m.0)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mesh {
    pub dim: usize,
    /// Initial grid lines across the guide (2D only).
    pub xs: Vec<f64>,
    /// Initial grid lines along the guide.
    pub zs: Vec<f64>,
    /// z-length of one guided wavelength, as used to build the mesh.
    pub wavelength: f64,
    pub elements: Vec<Element>,
    pub facets: Vec<Facet>,
    /// For each element id, the facets on each local side.
    #[serde(skip)]
    side_facets: Vec<[Vec<usize>; 4]>,
    /// Number of elements force-refined by the last closure.
    pub closure_refinements: usize,
}

impl Mesh {
    pub(crate) fn from_parts(dim: usize, xs: Vec<f64>, zs: Vec<f64>, wavelength: f64, elements: Vec<Element>) -> Self {
        let mut mesh = Self {
            dim,
            xs,
            zs,
            wavelength,
            elements,
            facets: Vec::new(),
            side_facets: Vec::new(),
            closure_refinements: 0,
        };
        mesh.rebuild_skeleton();
        mesh
    }

    pub fn active_elements(&self) -> impl Iterator<Item = &Element> + '_ {
        self.elements.iter().filter(|e| e.active)
    }

    pub fn active_ids(&self) -> Vec<usize> {
        self.active_elements().map(|e| e.id).collect()
    }

    pub fn n_active(&self) -> usize {
        self.active_elements().count()
    }

    pub fn width(&self) -> f64 {
        if self.dim == 1 {
            0.0
        } else {
            *self.xs.last().unwrap()
        }
    }

    pub fn length(&self) -> f64 {
        *self.zs.last().unwrap()
    }

    pub fn x_max_int(&self) -> i64 {
        if self.dim == 1 {
            SUBDIV
        } else {
            (self.xs.len() as i64 - 1) * SUBDIV
        }
    }

    pub fn z_max_int(&self) -> i64 {
        (self.zs.len() as i64 - 1) * SUBDIV
    }

    pub fn coord_x(&self, i: i64) -> f64 {
        if self.dim == 1 {
            return 0.0;
        }
        grid_coord(&self.xs, i)
    }

    pub fn coord_z(&self, i: i64) -> f64 {
        grid_coord(&self.zs, i)
    }

    /// Physical measure of an element (length in 1D, area in 2D).
    pub fn measure(&self, e: &Element) -> f64 {
        if self.dim == 1 {
            e.hz()
        } else {
            e.hx() * e.hz()
        }
    }

    pub fn domain_measure(&self) -> f64 {
        if self.dim == 1 {
            self.length()
        } else {
            self.width() * self.length()
        }
    }

    /// Facets on local side `side` of element `id`.
    pub fn side_facets(&self, id: usize, side: usize) -> &[usize] {
        &self.side_facets[id][side]
    }

    /// Elements sharing a facet with `id`, with the facet ids joining them.
    pub fn neighbors(&self, id: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for side in Side::of_dim(self.dim) {
            for &f in &self.side_facets[id][side.index] {
                let facet = &self.facets[f];
                for other in facet.elements() {
                    if other != id {
                        out.push((other, f));
                    }
                }
            }
        }
        out
    }

    /// Number of z-columns of the initial grid.
    pub fn initial_columns(&self) -> usize {
        self.zs.len() - 1
    }

    /// Refine marked elements, then restore 1-irregularity.
    pub fn refine(&mut self, marks: &MarkSet) -> Result<()> {
        for &(id, _) in &marks.marks {
            match self.elements.get(id) {
                Some(e) if e.active => {}
                _ => return Err(Error::InactiveElement(id)),
            }
        }
        for &(id, mode) in &marks.marks {
            // an element marked twice is split once
            if self.elements[id].active {
                self.split(id, mode)?;
            }
        }
        self.rebuild_skeleton();
        self.close()?;
        Ok(())
    }

    /// Functional form of [`Mesh::refine`].
    pub fn refined(&self, marks: &MarkSet) -> Result<Mesh> {
        let mut m = self.clone();
        m.refine(marks)?;
        Ok(m)
    }

    /// Apply the minimal closure refinements so every facet joins sides whose
    /// lengths differ by at most a factor two. Returns the number of forced splits.
    pub fn close(&mut self) -> Result<usize> {
        let mut forced = 0;
        loop {
            let mut need: BTreeMap<usize, (bool, bool)> = BTreeMap::new();
            for (coarse, axis) in self.irregular_sides() {
                let entry = need.entry(coarse).or_default();
                match axis {
                    Axis::X => entry.0 = true,
                    Axis::Z => entry.1 = true,
                }
            }
            if need.is_empty() {
                break;
            }
            for (id, (sx, sz)) in need {
                let mode = RefineMode::from_axes(sx, sz).expect("non-empty request");
                self.split(id, mode)?;
                forced += 1;
            }
            self.rebuild_skeleton();
        }
        self.closure_refinements = forced;
        Ok(forced)
    }

    /// Split one element without closing; leaves the mesh possibly irregular.
    #[cfg(test)]
    pub(crate) fn refine_unclosed_for_tests(&mut self, id: usize) {
        self.split(id, RefineMode::Iso).unwrap();
        self.rebuild_skeleton();
    }

    /// Functional form of [`Mesh::close`].
    pub fn closed(&self) -> Result<Mesh> {
        let mut m = self.clone();
        m.close()?;
        Ok(m)
    }

    /// `(coarse element, axis it must be split along)` for every facet that
    /// violates 1-irregularity.
    fn irregular_sides(&self) -> Vec<(usize, Axis)> {
        let mut out = Vec::new();
        if self.dim == 1 {
            return out;
        }
        for facet in &self.facets {
            let (Some(lo), Some(hi)) = (facet.lo, facet.hi) else { continue };
            let len_of = |id: usize| {
                let e = &self.elements[id];
                match facet.normal {
                    Axis::X => e.iz[1] - e.iz[0],
                    Axis::Z => e.ix[1] - e.ix[0],
                }
            };
            let (a, b) = (len_of(lo), len_of(hi));
            let tangential = match facet.normal {
                Axis::X => Axis::Z,
                Axis::Z => Axis::X,
            };
            if a > 2 * b {
                out.push((lo, tangential));
            } else if b > 2 * a {
                out.push((hi, tangential));
            }
        }
        out
    }

    /// True when every interior facet joins sides of length ratio at most two.
    pub fn is_one_irregular(&self) -> bool {
        self.irregular_sides().is_empty()
    }

    /// First facet violating 1-irregularity, if any.
    pub fn first_irregular_facet(&self) -> Option<usize> {
        if self.dim == 1 {
            return None;
        }
        self.facets.iter().find_map(|f| {
            let (lo, hi) = (f.lo?, f.hi?);
            let len_of = |id: usize| {
                let e = &self.elements[id];
                match f.normal {
                    Axis::X => e.iz[1] - e.iz[0],
                    Axis::Z => e.ix[1] - e.ix[0],
                }
            };
            let (a, b) = (len_of(lo), len_of(hi));
            (a > 2 * b || b > 2 * a).then_some(f.id)
        })
    }

    fn split(&mut self, id: usize, mode: RefineMode) -> Result<()> {
        let parent = self.elements[id].clone();
        let mode = if self.dim == 1 { RefineMode::AnisoZ } else { mode };
        let (split_x, split_z) = match mode {
            RefineMode::Iso => (true, true),
            RefineMode::AnisoX => (true, false),
            RefineMode::AnisoZ => (false, true),
        };
        if (split_x && parent.level[0] >= MAX_LEVEL) || (split_z && parent.level[1] >= MAX_LEVEL) {
            return Err(Error::InvalidMesh(format!("element {id} exceeds the maximum refinement depth")));
        }
        let xr: Vec<[i64; 2]> = if split_x {
            let m = (parent.ix[0] + parent.ix[1]) / 2;
            vec![[parent.ix[0], m], [m, parent.ix[1]]]
        } else {
            vec![parent.ix]
        };
        let zr: Vec<[i64; 2]> = if split_z {
            let m = (parent.iz[0] + parent.iz[1]) / 2;
            vec![[parent.iz[0], m], [m, parent.iz[1]]]
        } else {
            vec![parent.iz]
        };
        let mut children = Vec::new();
        for iz in &zr {
            for ix in &xr {
                let child_id = self.elements.len();
                let child = Element {
                    id: child_id,
                    ix: *ix,
                    iz: *iz,
                    x: [self.coord_x(ix[0]), self.coord_x(ix[1])],
                    z: [self.coord_z(iz[0]), self.coord_z(iz[1])],
                    level: [
                        parent.level[0] + u32::from(split_x),
                        parent.level[1] + u32::from(split_z),
                    ],
                    active: true,
                    p: parent.p,
                    label: parent.label,
                    parent: Some(id),
                    children: Vec::new(),
                    split: None,
                };
                self.elements.push(child);
                children.push(child_id);
            }
        }
        let e = &mut self.elements[id];
        e.active = false;
        e.children = children;
        e.split = Some(mode);
        Ok(())
    }

    /// Recompute facets and side adjacency from the active elements.
    pub(crate) fn rebuild_skeleton(&mut self) {
        let mut facets = Vec::new();
        let mut side_facets: Vec<[Vec<usize>; 4]> = vec![Default::default(); self.elements.len()];
        let zmax = self.z_max_int();
        let xmax = self.x_max_int();
        let normals: &[Axis] = if self.dim == 1 { &[Axis::Z] } else { &[Axis::Z, Axis::X] };
        for &normal in normals {
            // line -> (sides whose element lies below the line, sides above)
            let mut lines: BTreeMap<i64, (Vec<([i64; 2], usize, usize)>, Vec<([i64; 2], usize, usize)>)> =
                BTreeMap::new();
            for e in self.elements.iter().filter(|e| e.active) {
                for side in Side::of_dim(self.dim).iter().filter(|s| s.normal == normal) {
                    let (line, span) = side.locate(e);
                    let entry = lines.entry(line).or_default();
                    if side.sign > 0.0 {
                        entry.0.push((span, e.id, side.index));
                    } else {
                        entry.1.push((span, e.id, side.index));
                    }
                }
            }
            let max_line = match normal {
                Axis::Z => zmax,
                Axis::X => xmax,
            };
            for (line, (mut below, mut above)) in lines {
                below.sort_unstable();
                above.sort_unstable();
                let tag = match normal {
                    Axis::Z if line == 0 => Some(BoundaryTag::Input),
                    Axis::Z if line == max_line => Some(BoundaryTag::Output),
                    Axis::X if line == 0 || line == max_line => Some(BoundaryTag::Wall),
                    _ => None,
                };
                let mut push = |span: [i64; 2], lo: Option<(usize, usize)>, hi: Option<(usize, usize)>| {
                    let id = facets.len();
                    let boundary = if lo.is_some() && hi.is_some() { None } else { tag };
                    facets.push(Facet { id, normal, line, span, lo: lo.map(|x| x.0), hi: hi.map(|x| x.0), boundary });
                    if let Some((e, s)) = lo {
                        side_facets[e][s].push(id);
                    }
                    if let Some((e, s)) = hi {
                        side_facets[e][s].push(id);
                    }
                };
                if below.is_empty() || above.is_empty() {
                    for (span, e, s) in below {
                        push(span, Some((e, s)), None);
                    }
                    for (span, e, s) in above {
                        push(span, None, Some((e, s)));
                    }
                    continue;
                }
                let (mut i, mut j) = (0, 0);
                while i < below.len() && j < above.len() {
                    let (a, ea, sa) = below[i];
                    let (b, eb, sb) = above[j];
                    let lo_end = a[1].min(b[1]);
                    let hi_start = a[0].max(b[0]);
                    if lo_end > hi_start {
                        push([hi_start, lo_end], Some((ea, sa)), Some((eb, sb)));
                    }
                    match a[1].cmp(&b[1]) {
                        std::cmp::Ordering::Less => i += 1,
                        std::cmp::Ordering::Greater => j += 1,
                        std::cmp::Ordering::Equal => {
                            i += 1;
                            j += 1;
                        }
                    }
                }
            }
        }
        self.facets = facets;
        self.side_facets = side_facets;
    }

    /// Check the tiling, adjacency and tree invariants; used by tests and
    /// debug assertions.
    pub fn check_invariants(&self) -> Result<()> {
        let total: f64 = self.active_elements().map(|e| self.measure(e)).sum();
        let dom = self.domain_measure();
        if ((total - dom) / dom).abs() > 1e-12 {
            return Err(Error::InvalidMesh(format!("active measure {total} != domain measure {dom}")));
        }
        for f in &self.facets {
            let n = f.elements().count();
            if n == 0 || (n == 1) != f.boundary.is_some() {
                return Err(Error::InvalidMesh(format!("facet {} has inconsistent adjacency", f.id)));
            }
            for e in f.elements() {
                if !self.elements[e].active {
                    return Err(Error::InvalidMesh(format!("facet {} references inactive element {e}", f.id)));
                }
            }
        }
        for e in &self.elements {
            if !e.active && e.children.len() < 2 {
                return Err(Error::InvalidMesh(format!("inactive element {} has < 2 children", e.id)));
            }
            if e.active && !e.children.is_empty() {
                return Err(Error::InvalidMesh(format!("active element {} has children", e.id)));
            }
            if e.hz() <= 0.0 || (self.dim == 2 && e.hx() <= 0.0) || e.p < 1 {
                return Err(Error::InvalidMesh(format!("degenerate element {}", e.id)));
            }
            if let Some(parent) = e.parent {
                if parent >= e.id {
                    return Err(Error::InvalidMesh("refinement tree is not topologically ordered".into()));
                }
            }
        }
        Ok(())
    }
}

fn grid_coord(lines: &[f64], i: i64) -> f64 {
    let n = lines.len() as i64 - 1;
    let cell = i.div_euclid(SUBDIV);
    if cell >= n {
        return lines[n as usize];
    }
    let frac = i.rem_euclid(SUBDIV) as f64 / SUBDIV as f64;
    let (a, b) = (lines[cell as usize], lines[cell as usize + 1]);
    a + (b - a) * frac
}

#[cfg(test)]
mod tests;
