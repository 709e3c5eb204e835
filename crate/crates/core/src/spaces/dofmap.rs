use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::poly::{lobatto, lobatto_restriction};
use super::Orders;
use crate::mesh::{Axis, BoundaryTag, Mesh, Side};
use crate::{Error, Result};

/// The coarse element side carrying one trace polynomial. It coincides with a
/// facet unless a neighbour is refined, in which case it spans two facets and
/// its midpoint is a hanging node.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Carrier {
    pub normal: Axis,
    pub line: i64,
    pub span: [i64; 2],
    pub boundary: Option<BoundaryTag>,
    /// End nodes in increasing tangential order (the same node twice in 1D).
    pub nodes: [usize; 2],
    /// Trace-local indices of the p̂ bubbles.
    pub bubbles: Vec<usize>,
    /// Trace-local indices of the û coefficients.
    pub fluxes: Vec<usize>,
    pub split: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
enum NodeKind {
    Free(usize),
    Hanging(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceDofKind {
    /// p̂ value at a mesh node.
    Vertex { node: usize },
    /// p̂ bubble `k ≥ 2` on a carrier.
    Bubble { carrier: usize, k: usize },
    /// Coefficient `k` of û on a carrier (normal along the positive axis).
    Flux { carrier: usize, k: usize },
}

/// Per-element field range and the sparse local-trace to global-trace map.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ElementTraceMap {
    pub field: Range<usize>,
    /// `rows[i]` expresses local trace coefficient `i` in trace DOFs.
    pub rows: Vec<Vec<(usize, f64)>>,
    /// Carrier and `[t0, t1]` sub-interval for each present side.
    pub sides: Vec<(usize, [f64; 2])>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DofMap {
    pub dim: usize,
    pub orders: Orders,
    pub n_field: usize,
    pub n_trace: usize,
    /// Indexed by element id; `None` for inactive elements.
    pub elements: Vec<Option<ElementTraceMap>>,
    pub carriers: Vec<Carrier>,
    /// Node positions `[x, z]` in integer mesh coordinates.
    pub node_points: Vec<[i64; 2]>,
    nodes: Vec<NodeKind>,
    pub kinds: Vec<TraceDofKind>,
    /// p̂ DOFs fixed by Dirichlet data (input and wall).
    pub dirichlet: Vec<bool>,
    /// p̂ DOFs on the input boundary.
    pub input: Vec<bool>,
    /// û DOFs on the output boundary.
    pub output_flux: Vec<bool>,
}

impl DofMap {
    /// Coefficients per side for each of p̂ and û.
    pub fn per_side(&self) -> usize {
        if self.dim == 1 {
            1
        } else {
            self.orders.trace() + 1
        }
    }

    pub fn n_sides(&self) -> usize {
        Side::of_dim(self.dim).len()
    }

    /// Local trace coefficients per element.
    pub fn n_local_trace(&self) -> usize {
        2 * self.n_sides() * self.per_side()
    }

    pub fn total(&self) -> usize {
        self.n_field + self.n_trace
    }

    pub fn element(&self, id: usize) -> Result<&ElementTraceMap> {
        self.elements
            .get(id)
            .and_then(|e| e.as_ref())
            .ok_or(Error::InactiveElement(id))
    }

    /// Local index of p̂ coefficient `j` on side slot `s`.
    pub fn local_p(&self, s: usize, j: usize) -> usize {
        s * self.per_side() + j
    }

    /// Local index of û coefficient `j` on side slot `s`.
    pub fn local_u(&self, s: usize, j: usize) -> usize {
        (self.n_sides() + s) * self.per_side() + j
    }

    pub fn is_hanging(&self, node: usize) -> bool {
        matches!(self.nodes[node], NodeKind::Hanging(_))
    }

    pub fn node_dof(&self, node: usize) -> Option<usize> {
        match self.nodes[node] {
            NodeKind::Free(d) => Some(d),
            NodeKind::Hanging(_) => None,
        }
    }

    /// Elements whose local traces reference each trace DOF.
    pub fn trace_dof_elements(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_trace];
        for (id, m) in self.elements.iter().enumerate() {
            let Some(m) = m else { continue };
            for row in &m.rows {
                for &(d, _) in row {
                    if out[d].last() != Some(&id) {
                        out[d].push(id);
                    }
                }
            }
        }
        for v in &mut out {
            v.sort_unstable();
            v.dedup();
        }
        out
    }
}

fn side_towards(normal: Axis, element_is_low: bool) -> usize {
    match (normal, element_is_low) {
        (Axis::Z, true) => 2,
        (Axis::Z, false) => 0,
        (Axis::X, true) => 1,
        (Axis::X, false) => 3,
    }
}

fn point_on(normal: Axis, line: i64, t: i64) -> [i64; 2] {
    match normal {
        Axis::Z => [t, line],
        Axis::X => [line, t],
    }
}

/// Number all field and trace DOFs of a closed mesh with uniform orders.
pub fn build_dof_map(mesh: &Mesh, orders: Orders) -> Result<DofMap> {
    if let Some(f) = mesh.first_irregular_facet() {
        return Err(Error::NotClosed { facet: f });
    }
    let dim = mesh.dim;
    let m = orders.trace();

    // carriers, keyed by their geometry
    let mut carrier_index: BTreeMap<(i64, i64, Axis, i64, i64), usize> = BTreeMap::new();
    let mut carrier_of_facet = vec![usize::MAX; mesh.facets.len()];
    let mut raw: Vec<(Axis, i64, [i64; 2], Option<BoundaryTag>, bool)> = Vec::new();
    for f in &mesh.facets {
        let mut span = f.span;
        for (e, low) in [(f.lo, true), (f.hi, false)] {
            let Some(e) = e else { continue };
            let side = Side::ALL[side_towards(f.normal, low)];
            let (_, s) = side.locate(&mesh.elements[e]);
            if s[1] - s[0] > span[1] - span[0] {
                span = s;
            }
        }
        if dim == 1 {
            span = f.span;
        }
        // order carriers along the guide first
        let key = match f.normal {
            Axis::Z => (f.line, span[0], f.normal, span[1], 0),
            Axis::X => (span[0], f.line, f.normal, span[1], 0),
        };
        let next = raw.len();
        let idx = *carrier_index.entry(key).or_insert(next);
        if idx == next {
            raw.push((f.normal, f.line, span, f.boundary, false));
        }
        if span != f.span {
            raw[idx].4 = true;
        }
        carrier_of_facet[f.id] = idx;
    }
    // renumber carriers in key order for locality
    let order: Vec<usize> = carrier_index.values().copied().collect();
    let mut remap = vec![0; raw.len()];
    for (new, &old) in order.iter().enumerate() {
        remap[old] = new;
    }
    for c in &mut carrier_of_facet {
        *c = remap[*c];
    }
    let raw: Vec<_> = order.iter().map(|&o| raw[o]).collect();

    // nodes
    let mut node_id: BTreeMap<[i64; 2], usize> = BTreeMap::new();
    let mut node_points = Vec::new();
    let mut hanging_at: BTreeMap<[i64; 2], usize> = BTreeMap::new();
    for (c, &(normal, line, span, _, split)) in raw.iter().enumerate() {
        if split && dim == 2 {
            hanging_at.insert(point_on(normal, line, (span[0] + span[1]) / 2), c);
        }
    }
    let mut carrier_nodes = Vec::with_capacity(raw.len());
    for &(normal, line, span, _, _) in &raw {
        let ends = if dim == 1 {
            [[0, line], [0, line]]
        } else {
            [point_on(normal, line, span[0]), point_on(normal, line, span[1])]
        };
        let mut ids = [0; 2];
        for (k, pt) in ends.iter().enumerate() {
            let n = node_points.len();
            ids[k] = *node_id.entry(*pt).or_insert(n);
            if ids[k] == n {
                node_points.push(*pt);
            }
        }
        carrier_nodes.push(ids);
    }

    // trace DOF numbering, carrier by carrier
    let mut kinds = Vec::new();
    let mut nodes = vec![NodeKind::Free(usize::MAX); node_points.len()];
    let mut carriers = Vec::with_capacity(raw.len());
    for (c, &(normal, line, span, boundary, split)) in raw.iter().enumerate() {
        let ids = carrier_nodes[c];
        for &n in &ids {
            if nodes[n] == NodeKind::Free(usize::MAX) {
                nodes[n] = match hanging_at.get(&node_points[n]) {
                    Some(&hc) => NodeKind::Hanging(hc),
                    None => {
                        kinds.push(TraceDofKind::Vertex { node: n });
                        NodeKind::Free(kinds.len() - 1)
                    }
                };
            }
        }
        let n_bubbles = if dim == 1 { 0 } else { m - 1 };
        let bubbles = (0..n_bubbles)
            .map(|k| {
                kinds.push(TraceDofKind::Bubble { carrier: c, k: k + 2 });
                kinds.len() - 1
            })
            .collect();
        let n_flux = if dim == 1 { 1 } else { m + 1 };
        let fluxes = (0..n_flux)
            .map(|k| {
                kinds.push(TraceDofKind::Flux { carrier: c, k });
                kinds.len() - 1
            })
            .collect();
        carriers.push(Carrier { normal, line, span, boundary, nodes: ids, bubbles, fluxes, split });
    }
    // hanging midpoints that are not carrier end points never occur, but a
    // hanging node must not have been given a DOF either
    for (pt, &c) in &hanging_at {
        if let Some(&n) = node_id.get(pt) {
            nodes[n] = NodeKind::Hanging(c);
        }
    }
    let n_trace = kinds.len();

    let mut dirichlet = vec![false; n_trace];
    let mut input = vec![false; n_trace];
    let mut output_flux = vec![false; n_trace];
    for c in &carriers {
        match c.boundary {
            Some(BoundaryTag::Input) | Some(BoundaryTag::Wall) => {
                let is_input = c.boundary == Some(BoundaryTag::Input);
                let node_dofs = c.nodes.iter().filter_map(|&n| match nodes[n] {
                    NodeKind::Free(d) => Some(d),
                    NodeKind::Hanging(_) => None,
                });
                for d in node_dofs.chain(c.bubbles.iter().copied()) {
                    dirichlet[d] = true;
                    input[d] |= is_input;
                }
            }
            Some(BoundaryTag::Output) => {
                for &d in &c.fluxes {
                    output_flux[d] = true;
                }
            }
            None => {}
        }
    }

    let mut map = DofMap {
        dim,
        orders,
        n_field: 0,
        n_trace,
        elements: vec![None; mesh.elements.len()],
        carriers,
        node_points,
        nodes,
        kinds,
        dirichlet,
        input,
        output_flux,
    };

    // element maps
    let components = if dim == 1 { 2 } else { 3 };
    let n_field_elem = components * orders.trial_scalar(dim);
    let mut expander = Expander::new(&map);
    let per_side = map.per_side();
    let sides = Side::of_dim(dim);
    let mut offset = 0;
    let mut element_maps = Vec::new();
    for e in mesh.active_elements() {
        let n_local = 2 * sides.len() * per_side;
        let mut rows = vec![Vec::new(); n_local];
        let mut side_info = Vec::with_capacity(sides.len());
        for (s, side) in sides.iter().enumerate() {
            let facets = mesh.side_facets(e.id, side.index);
            let &f0 = facets.first().ok_or_else(|| Error::InvalidMesh(format!("element {} has a bare side", e.id)))?;
            let c = carrier_of_facet[f0];
            let car = &map.carriers[c];
            let (_, span) = side.locate(e);
            let len = (car.span[1] - car.span[0]) as f64;
            let t = if dim == 1 {
                [0.0, 1.0]
            } else {
                [(span[0] - car.span[0]) as f64 / len, (span[1] - car.span[0]) as f64 / len]
            };
            side_info.push((c, t));
            if dim == 1 {
                rows[s] = expander.carrier_p(c, 0);
                rows[sides.len() + s] = vec![(car.fluxes[0], side.sign)];
                continue;
            }
            let restrict = if t == [0.0, 1.0] { None } else { Some(lobatto_restriction(m, t[0], t[1])) };
            for j in 0..=m {
                let mut prow: BTreeMap<usize, f64> = BTreeMap::new();
                let mut urow: BTreeMap<usize, f64> = BTreeMap::new();
                for k in 0..=m {
                    let w = match &restrict {
                        None => f64::from(j == k),
                        Some(r) => r[(j, k)],
                    };
                    if w.abs() < 1e-15 {
                        continue;
                    }
                    for (d, v) in expander.carrier_p(c, k) {
                        *prow.entry(d).or_default() += w * v;
                    }
                    *urow.entry(map.carriers[c].fluxes[k]).or_default() += side.sign * w;
                }
                let clean = |r: BTreeMap<usize, f64>| r.into_iter().filter(|(_, v)| v.abs() > 1e-15).collect();
                rows[s * per_side + j] = clean(prow);
                rows[(sides.len() + s) * per_side + j] = clean(urow);
            }
        }
        element_maps.push((e.id, ElementTraceMap { field: offset..offset + n_field_elem, rows, sides: side_info }));
        offset += n_field_elem;
    }
    for (id, em) in element_maps {
        map.elements[id] = Some(em);
    }
    map.n_field = offset;
    Ok(map)
}

/// Expands carrier p̂ coefficients in trace DOFs, resolving hanging nodes.
struct Expander {
    nodes: Vec<NodeKind>,
    carriers: Vec<([usize; 2], Vec<usize>)>,
    m: usize,
    mid: Vec<f64>,
    memo: BTreeMap<usize, Vec<(usize, f64)>>,
}

impl Expander {
    fn new(map: &DofMap) -> Self {
        let m = if map.dim == 1 { 1 } else { map.orders.trace() };
        Self {
            nodes: map.nodes.clone(),
            carriers: map.carriers.iter().map(|c| (c.nodes, c.bubbles.clone())).collect(),
            m,
            mid: lobatto(m, 0.5).0,
            memo: BTreeMap::new(),
        }
    }

    fn carrier_p(&mut self, c: usize, k: usize) -> Vec<(usize, f64)> {
        match k {
            0 | 1 => {
                let n = self.carriers[c].0[k];
                self.node(n, 0)
            }
            _ => vec![(self.carriers[c].1[k - 2], 1.0)],
        }
    }

    fn node(&mut self, n: usize, depth: usize) -> Vec<(usize, f64)> {
        if let Some(v) = self.memo.get(&n) {
            return v.clone();
        }
        assert!(depth < 64, "cyclic hanging-node constraints");
        let out = match self.nodes[n] {
            NodeKind::Free(d) => vec![(d, 1.0)],
            NodeKind::Hanging(c) => {
                let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
                for k in 0..=self.m {
                    let w = self.mid[k];
                    if w.abs() < 1e-15 {
                        continue;
                    }
                    let parts = match k {
                        0 | 1 => {
                            let nn = self.carriers[c].0[k];
                            self.node(nn, depth + 1)
                        }
                        _ => vec![(self.carriers[c].1[k - 2], 1.0)],
                    };
                    for (d, v) in parts {
                        *acc.entry(d).or_default() += w * v;
                    }
                }
                acc.into_iter().filter(|(_, v)| v.abs() > 1e-15).collect()
            }
        };
        self.memo.insert(n, out.clone());
        out
    }
}
