//! Simulated distribution of an adaptive mesh over ranks, and two load
//! balancers: contiguous cuts orthogonal to the guide axis, and an
//! element-level graph partition.
//!
//! The workload of a rank is the number of field DOFs of the elements it owns
//! plus the trace DOFs referenced only by those elements. Trace DOFs shared
//! between ranks are interface DOFs and count towards no workload.

use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::mesh::{Mesh, SUBDIV};
use crate::spaces::{build_dof_map, Orders};
use crate::{Error, Result};

/// Largest slab count accepted by [`exhaustive_orthogonal`].
pub const EXHAUSTIVE_SLAB_LIMIT: usize = 512;

/// Imbalance the graph partitioner aims for before it trades balance for a
/// smaller edge cut.
pub const GRAPH_TARGET_IMBALANCE: f64 = 1.1;

/// DOF structure of one mesh as seen by the partitioner.
#[derive(Debug, Clone)]
pub struct WorkModel {
    /// Field DOFs per element id (zero for inactive elements).
    pub field: Vec<usize>,
    /// Elements referencing each trace DOF.
    pub trace_elements: Vec<Vec<usize>>,
    /// Trace DOFs referenced by each element id.
    pub element_traces: Vec<Vec<usize>>,
    pub active: Vec<usize>,
    /// z-intervals between admissible cut lines, in integer mesh coordinates.
    /// A line is admissible when no active element straddles it.
    pub slabs: Vec<[i64; 2]>,
    /// Slab of each element id (`usize::MAX` for inactive elements).
    pub slab_of: Vec<usize>,
    /// Active elements ordered along the guide, then across it.
    pub order: Vec<usize>,
    /// Element adjacency weighted by the number of shared trace DOFs.
    pub graph: WeightedGraph,
    /// Position of each element id in `graph` (`usize::MAX` for inactive).
    pub vertex_of: Vec<usize>,
}

impl WorkModel {
    pub fn new(mesh: &Mesh, orders: Orders) -> Result<Self> {
        let dofs = build_dof_map(mesh, orders)?;
        let n = mesh.elements.len();
        let active = mesh.active_ids();
        let mut field = vec![0; n];
        for &id in &active {
            field[id] = dofs.element(id)?.field.len();
        }
        let trace_elements = dofs.trace_dof_elements();
        let mut element_traces = vec![Vec::new(); n];
        for (d, els) in trace_elements.iter().enumerate() {
            for &e in els {
                element_traces[e].push(d);
            }
        }

        let mut cuts: Vec<i64> = active.iter().flat_map(|&id| mesh.elements[id].iz).collect();
        cuts.sort_unstable();
        cuts.dedup();
        let mut admissible = vec![true; cuts.len()];
        for &id in &active {
            let [a, b] = mesh.elements[id].iz;
            let lo = cuts.partition_point(|&c| c <= a);
            let hi = cuts.partition_point(|&c| c < b);
            for flag in &mut admissible[lo..hi] {
                *flag = false;
            }
        }
        let lines: Vec<i64> = cuts.iter().zip(&admissible).filter(|(_, &ok)| ok).map(|(&c, _)| c).collect();
        let slabs: Vec<[i64; 2]> = lines.windows(2).map(|w| [w[0], w[1]]).collect();
        let mut slab_of = vec![usize::MAX; n];
        for &id in &active {
            let z0 = mesh.elements[id].iz[0];
            slab_of[id] = slabs.partition_point(|s| s[1] <= z0);
        }

        let mut order = active.clone();
        order.sort_by_key(|&id| (mesh.elements[id].iz[0], mesh.elements[id].ix[0]));
        let mut vertex_of = vec![usize::MAX; n];
        for (v, &id) in active.iter().enumerate() {
            vertex_of[id] = v;
        }
        let mut edges = vec![std::collections::BTreeMap::<usize, usize>::new(); active.len()];
        for els in &trace_elements {
            for (i, &a) in els.iter().enumerate() {
                for &b in &els[i + 1..] {
                    *edges[vertex_of[a]].entry(vertex_of[b]).or_default() += 1;
                    *edges[vertex_of[b]].entry(vertex_of[a]).or_default() += 1;
                }
            }
        }
        let graph = WeightedGraph {
            vertex: active.iter().map(|&id| field[id]).collect(),
            edges: edges.into_iter().map(|m| m.into_iter().collect()).collect(),
        };
        Ok(Self { field, trace_elements, element_traces, active, slabs, slab_of, order, graph, vertex_of })
    }

    pub fn n_slabs(&self) -> usize {
        self.slabs.len()
    }

    pub fn total_field(&self) -> usize {
        self.field.iter().sum()
    }

    pub fn total_dofs(&self) -> usize {
        self.total_field() + self.trace_elements.len()
    }
}

/// Owner rank of every element id known so far.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionState {
    pub ranks: usize,
    pub owner: Vec<Option<usize>>,
    /// Cut lines along z in integer mesh coordinates, for orthogonal partitions.
    pub cuts: Option<Vec<i64>>,
}

impl PartitionState {
    /// Extend ownership to elements created since this state was formed:
    /// children inherit the rank of their parent.
    pub fn inherit(&self, mesh: &Mesh) -> PartitionState {
        let mut owner = self.owner.clone();
        owner.resize(mesh.elements.len(), None);
        // children always have larger ids than their parents
        for e in &mesh.elements {
            if owner[e.id].is_none() {
                owner[e.id] = e.parent.and_then(|p| owner[p]);
            }
        }
        PartitionState { ranks: self.ranks, owner, cuts: self.cuts.clone() }
    }

    pub fn owner_of(&self, id: usize) -> Result<usize> {
        self.owner.get(id).copied().flatten().ok_or(Error::InactiveElement(id))
    }
}

/// Split the initial z-columns into contiguous blocks of near-equal size, one
/// per rank. Refined elements belong to the rank of their initial column.
pub fn static_partition(mesh: &Mesh, ranks: usize) -> Result<PartitionState> {
    let columns = mesh.initial_columns();
    if ranks == 0 || ranks > columns {
        return Err(Error::TooManyRanks { ranks, columns });
    }
    let rank_of = |c: usize| c * ranks / columns;
    let owner = mesh.elements.iter().map(|e| Some(rank_of(e.iz[0].div_euclid(SUBDIV) as usize))).collect();
    let cuts = (1..columns).filter(|&c| rank_of(c) != rank_of(c - 1)).map(|c| c as i64 * SUBDIV).collect();
    Ok(PartitionState { ranks, owner, cuts: Some(cuts) })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankLoads {
    pub workload: Vec<usize>,
    /// Interface trace DOFs touched by each rank.
    pub interface: Vec<usize>,
    /// Distinct interface trace DOFs.
    pub interface_total: usize,
}

pub fn rank_loads(model: &WorkModel, state: &PartitionState) -> Result<RankLoads> {
    let mut workload = vec![0; state.ranks];
    let mut interface = vec![0; state.ranks];
    let mut interface_total = 0;
    for &id in &model.active {
        workload[state.owner_of(id)?] += model.field[id];
    }
    for els in &model.trace_elements {
        let mut touched = BTreeSet::new();
        for &e in els {
            touched.insert(state.owner_of(e)?);
        }
        match touched.len() {
            0 => {}
            1 => workload[*touched.first().expect("one rank")] += 1,
            _ => {
                interface_total += 1;
                for r in touched {
                    interface[r] += 1;
                }
            }
        }
    }
    Ok(RankLoads { workload, interface, interface_total })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalanceMetrics {
    /// Largest over mean workload; one for a perfect balance.
    pub imbalance: f64,
    pub max_workload: usize,
    pub mean_workload: f64,
    /// Fraction of active elements whose rank changed.
    pub migration: f64,
    pub interface_total: usize,
}

/// Metrics of `next` on the mesh of `model`, with migration measured against
/// `prev` (which must already cover the elements of that mesh).
pub fn balance_metrics(model: &WorkModel, prev: &PartitionState, next: &PartitionState) -> Result<BalanceMetrics> {
    if prev.ranks != next.ranks {
        return Err(Error::RankMismatch(prev.ranks, next.ranks));
    }
    let loads = rank_loads(model, next)?;
    let max_workload = loads.workload.iter().copied().max().unwrap_or(0);
    let mean_workload = loads.workload.iter().sum::<usize>() as f64 / loads.workload.len().max(1) as f64;
    let imbalance = if mean_workload > 0.0 { max_workload as f64 / mean_workload } else { 1.0 };
    let mut moved = 0;
    for &id in &model.active {
        if prev.owner_of(id)? != next.owner_of(id)? {
            moved += 1;
        }
    }
    let migration = if model.active.is_empty() { 0.0 } else { moved as f64 / model.active.len() as f64 };
    Ok(BalanceMetrics { imbalance, max_workload, mean_workload, migration, interface_total: loads.interface_total })
}

/// Result of an orthogonal cut search.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrthogonalCut {
    /// Interior cut positions as slab indices: rank `k` owns slabs `cuts[k-1]..cuts[k]`.
    pub cuts: Vec<usize>,
    /// Largest rank workload.
    pub bottleneck: usize,
    /// Elements changing rank.
    pub migration: usize,
}

/// Cost tables of contiguous slab ranges.
struct RangeCosts {
    s: usize,
    /// `range[a][b]`: workload of slabs `a..b`, for `a < b`.
    range: Vec<Vec<usize>>,
    count_prefix: Vec<usize>,
    /// Per rank, prefix sums of elements previously owned by that rank.
    owned_prefix: Vec<Vec<usize>>,
}

fn prefix(v: &[usize]) -> Vec<usize> {
    let mut p = vec![0; v.len() + 1];
    for (i, x) in v.iter().enumerate() {
        p[i + 1] = p[i] + x;
    }
    p
}

impl RangeCosts {
    fn from_model(model: &WorkModel, prev: &PartitionState) -> Result<Self> {
        let s = model.n_slabs();
        let mut field = vec![0; s];
        let mut count = vec![0; s];
        let mut owned = vec![vec![0; s]; prev.ranks];
        for &id in &model.active {
            let slab = model.slab_of[id];
            field[slab] += model.field[id];
            count[slab] += 1;
            owned[prev.owner_of(id)?][slab] += 1;
        }
        // spans[lo][hi]: trace DOFs whose elements cover slabs lo..=hi exactly
        let mut spans = vec![vec![0usize; s]; s];
        for els in &model.trace_elements {
            let lo = els.iter().map(|&e| model.slab_of[e]).min();
            let hi = els.iter().map(|&e| model.slab_of[e]).max();
            if let (Some(lo), Some(hi)) = (lo, hi) {
                spans[lo][hi] += 1;
            }
        }
        let mut range = vec![vec![0; s + 1]; s + 1];
        for a in 0..s {
            let mut acc = 0;
            for b in a + 1..=s {
                acc += field[b - 1];
                acc += (a..b).map(|lo| spans[lo][b - 1]).sum::<usize>();
                range[a][b] = acc;
            }
        }
        Ok(Self { s, range, count_prefix: prefix(&count), owned_prefix: owned.iter().map(|o| prefix(o)).collect() })
    }

    /// Additive column weights with no previous owners.
    fn from_weights(weights: &[usize]) -> Self {
        let s = weights.len();
        let p = prefix(weights);
        let mut range = vec![vec![0; s + 1]; s + 1];
        for a in 0..s {
            for b in a + 1..=s {
                range[a][b] = p[b] - p[a];
            }
        }
        Self { s, range, count_prefix: vec![0; s + 1], owned_prefix: Vec::new() }
    }

    fn migration(&self, rank: usize, a: usize, b: usize) -> usize {
        let Some(owned) = self.owned_prefix.get(rank) else { return 0 };
        (self.count_prefix[b] - self.count_prefix[a]) - (owned[b] - owned[a])
    }

    /// Smallest bottleneck, then least migration, by dynamic programming.
    fn optimal(&self, r: usize) -> OrthogonalCut {
        let s = self.s;
        const INF: usize = usize::MAX;
        // bottleneck[k][b]: best largest workload placing slabs 0..b on ranks 0..k
        let mut bottleneck = vec![vec![INF; s + 1]; r + 1];
        bottleneck[0][0] = 0;
        for k in 1..=r {
            for b in k..=s - (r - k) {
                for a in k - 1..b {
                    if bottleneck[k - 1][a] != INF {
                        bottleneck[k][b] = bottleneck[k][b].min(bottleneck[k - 1][a].max(self.range[a][b]));
                    }
                }
            }
        }
        let best = bottleneck[r][s];

        // least migration with every range within `best`
        let mut mig = vec![vec![INF; s + 1]; r + 1];
        let mut from = vec![vec![0; s + 1]; r + 1];
        mig[0][0] = 0;
        for k in 1..=r {
            for b in k..=s - (r - k) {
                for a in k - 1..b {
                    if mig[k - 1][a] == INF || self.range[a][b] > best {
                        continue;
                    }
                    let m = mig[k - 1][a] + self.migration(k - 1, a, b);
                    if m < mig[k][b] {
                        mig[k][b] = m;
                        from[k][b] = a;
                    }
                }
            }
        }
        let mut cuts = vec![0; r - 1];
        let mut b = s;
        for k in (2..=r).rev() {
            b = from[k][b];
            cuts[k - 2] = b;
        }
        OrthogonalCut { cuts, bottleneck: best, migration: mig[r][s] }
    }

    /// The same optimum by enumerating placements. Ranges heavier than the
    /// best bottleneck found so far cannot be part of an optimum and are skipped.
    fn exhaustive(&self, r: usize) -> OrthogonalCut {
        struct Search<'a> {
            costs: &'a RangeCosts,
            r: usize,
            cuts: Vec<usize>,
            best: Option<OrthogonalCut>,
        }
        impl Search<'_> {
            fn bound(&self) -> usize {
                self.best.as_ref().map_or(usize::MAX, |b| b.bottleneck)
            }

            fn go(&mut self, k: usize, a: usize, bottleneck: usize, migration: usize) {
                let s = self.costs.s;
                if k == self.r - 1 {
                    let bn = bottleneck.max(self.costs.range[a][s]);
                    let m = migration + self.costs.migration(k, a, s);
                    if self.best.as_ref().is_none_or(|b| (bn, m) < (b.bottleneck, b.migration)) {
                        self.best = Some(OrthogonalCut { cuts: self.cuts.clone(), bottleneck: bn, migration: m });
                    }
                    return;
                }
                for b in a + 1..=s - (self.r - 1 - k) {
                    // range workloads grow with b
                    if self.costs.range[a][b] > self.bound() {
                        break;
                    }
                    self.cuts.push(b);
                    let bn = bottleneck.max(self.costs.range[a][b]);
                    let m = migration + self.costs.migration(k, a, b);
                    self.go(k + 1, b, bn, m);
                    self.cuts.pop();
                }
            }
        }
        let mut search = Search { costs: self, r, cuts: Vec::new(), best: None };
        search.go(0, 0, 0, 0);
        search.best.expect("at least one placement exists")
    }
}

fn check_slabs(ranks: usize, slabs: usize) -> Result<()> {
    if ranks == 0 || ranks > slabs {
        return Err(Error::TooManyRanks { ranks, columns: slabs });
    }
    Ok(())
}

/// Best contiguous split of additive column weights over `ranks`.
pub fn optimal_column_cuts(weights: &[usize], ranks: usize) -> Result<OrthogonalCut> {
    check_slabs(ranks, weights.len())?;
    Ok(RangeCosts::from_weights(weights).optimal(ranks))
}

/// Exhaustive counterpart of [`optimal_column_cuts`].
pub fn exhaustive_column_cuts(weights: &[usize], ranks: usize) -> Result<OrthogonalCut> {
    check_slabs(ranks, weights.len())?;
    if weights.len() > EXHAUSTIVE_SLAB_LIMIT {
        return Err(Error::TooLarge { dofs: weights.len(), limit: EXHAUSTIVE_SLAB_LIMIT });
    }
    Ok(RangeCosts::from_weights(weights).exhaustive(ranks))
}

fn cut_state(model: &WorkModel, ranks: usize, cut: &OrthogonalCut) -> PartitionState {
    let mut owner = vec![None; model.field.len()];
    for &id in &model.active {
        owner[id] = Some(cut.cuts.partition_point(|&c| c <= model.slab_of[id]));
    }
    let lines = cut.cuts.iter().map(|&c| model.slabs[c][0]).collect();
    PartitionState { ranks, owner, cuts: Some(lines) }
}

/// Contiguous slab ranges minimising the largest rank workload; among all
/// minimisers, the one moving the fewest elements away from `prev`.
pub fn rebalance_orthogonal(model: &WorkModel, prev: &PartitionState) -> Result<(PartitionState, OrthogonalCut)> {
    check_slabs(prev.ranks, model.n_slabs())?;
    let cut = RangeCosts::from_model(model, prev)?.optimal(prev.ranks);
    Ok((cut_state(model, prev.ranks, &cut), cut))
}

/// Exhaustive search for the optimum of [`rebalance_orthogonal`]'s objective.
pub fn exhaustive_orthogonal(model: &WorkModel, prev: &PartitionState) -> Result<OrthogonalCut> {
    let s = model.n_slabs();
    check_slabs(prev.ranks, s)?;
    if s > EXHAUSTIVE_SLAB_LIMIT {
        return Err(Error::TooLarge { dofs: s, limit: EXHAUSTIVE_SLAB_LIMIT });
    }
    Ok(RangeCosts::from_model(model, prev)?.exhaustive(prev.ranks))
}

/// Undirected graph with vertex weights and weighted adjacency lists.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightedGraph {
    pub vertex: Vec<usize>,
    /// `(neighbour, edge weight)` per vertex; symmetric.
    pub edges: Vec<Vec<(usize, usize)>>,
}

impl WeightedGraph {
    /// Chain `0 - 1 - ... - n-1` with unit edges.
    pub fn chain(vertex: Vec<usize>) -> Self {
        let n = vertex.len();
        let edges = (0..n)
            .map(|i| {
                let mut e = Vec::new();
                if i > 0 {
                    e.push((i - 1, 1));
                }
                if i + 1 < n {
                    e.push((i + 1, 1));
                }
                e
            })
            .collect();
        Self { vertex, edges }
    }

    pub fn loads(&self, part: &[usize], ranks: usize) -> Vec<usize> {
        let mut l = vec![0; ranks];
        for (v, &p) in part.iter().enumerate() {
            l[p] += self.vertex[v];
        }
        l
    }

    pub fn edge_cut(&self, part: &[usize]) -> usize {
        let mut cut = 0;
        for (v, adj) in self.edges.iter().enumerate() {
            for &(u, w) in adj {
                if u > v && part[u] != part[v] {
                    cut += w;
                }
            }
        }
        cut
    }
}

/// k-way partition of `graph`: contiguous chunks of `order` with equal vertex
/// weight, then single-vertex moves off the heaviest part while they lower the
/// largest part weight, then moves that shrink the edge cut while every part
/// stays within `GRAPH_TARGET_IMBALANCE` of the mean and the largest part does
/// not grow. Deterministic for a given order.
pub fn partition_graph(graph: &WeightedGraph, order: &[usize], ranks: usize) -> Result<Vec<usize>> {
    let n = graph.vertex.len();
    if ranks == 0 || ranks > n {
        return Err(Error::TooManyRanks { ranks, columns: n });
    }
    let total: usize = graph.vertex.iter().sum();
    let mut part = vec![0; n];
    let mut acc = 0usize;
    for (i, &v) in order.iter().enumerate() {
        let w = graph.vertex[v];
        let mid = acc as f64 + 0.5 * w as f64;
        let mut rank = if total > 0 { (mid / total as f64 * ranks as f64).floor() as usize } else { i * ranks / n };
        // keep every part non-empty
        rank = rank.min(ranks - 1).max(ranks.saturating_sub(n - i)).min(i);
        part[v] = rank;
        acc += w;
    }
    let mut loads = graph.loads(&part, ranks);
    let mut sizes = vec![0usize; ranks];
    for &p in &part {
        sizes[p] += 1;
    }
    let cut_gain = |part: &[usize], v: usize, to: usize| -> i64 {
        graph.edges[v].iter().map(|&(u, w)| if part[u] == to { w as i64 } else if part[u] == part[v] { -(w as i64) } else { 0 }).sum()
    };

    // balance phase
    for _ in 0..4 * n {
        let heavy = (0..ranks).max_by_key(|&k| (loads[k], std::cmp::Reverse(k))).expect("ranks > 0");
        if sizes[heavy] <= 1 {
            break;
        }
        let lightest = (0..ranks).min_by_key(|&k| (loads[k], k)).expect("ranks > 0");
        let mut best: Option<(usize, i64, usize, usize)> = None;
        for v in (0..n).filter(|&v| part[v] == heavy) {
            let mut targets: BTreeSet<usize> = graph.edges[v].iter().map(|&(u, _)| part[u]).filter(|&k| k != heavy).collect();
            targets.insert(lightest);
            targets.remove(&heavy);
            for to in targets {
                let w = graph.vertex[v];
                let worst = (loads[heavy] - w).max(loads[to] + w);
                if worst >= loads[heavy] {
                    continue;
                }
                let key = (worst, -cut_gain(&part, v, to), v, to);
                if best.is_none_or(|b| key < b) {
                    best = Some(key);
                }
            }
        }
        let Some((_, _, v, to)) = best else { break };
        loads[heavy] -= graph.vertex[v];
        loads[to] += graph.vertex[v];
        sizes[heavy] -= 1;
        sizes[to] += 1;
        part[v] = to;
    }

    // cut phase
    let target = (GRAPH_TARGET_IMBALANCE * total as f64 / ranks as f64).floor() as usize;
    let cap = target.max(*loads.iter().max().expect("ranks > 0"));
    for _ in 0..4 * n {
        let mut best: Option<(i64, usize, usize)> = None;
        for v in 0..n {
            let from = part[v];
            if sizes[from] <= 1 {
                continue;
            }
            let targets: BTreeSet<usize> = graph.edges[v].iter().map(|&(u, _)| part[u]).filter(|&k| k != from).collect();
            for to in targets {
                let gain = cut_gain(&part, v, to);
                if gain <= 0 || loads[to] + graph.vertex[v] > cap {
                    continue;
                }
                let key = (-gain, v, to);
                if best.is_none_or(|b| key < b) {
                    best = Some(key);
                }
            }
        }
        let Some((_, v, to)) = best else { break };
        let from = part[v];
        loads[from] -= graph.vertex[v];
        loads[to] += graph.vertex[v];
        sizes[from] -= 1;
        sizes[to] += 1;
        part[v] = to;
    }
    Ok(part)
}

/// Element-level rebalance on the element graph with field DOFs as vertex
/// weights and shared trace DOFs as edge weights.
pub fn rebalance_graph(model: &WorkModel, prev: &PartitionState) -> Result<PartitionState> {
    let order: Vec<usize> = model.order.iter().map(|&id| model.vertex_of[id]).collect();
    let part = partition_graph(&model.graph, &order, prev.ranks)?;
    let mut owner = vec![None; model.field.len()];
    for (v, &id) in model.active.iter().enumerate() {
        owner[id] = Some(part[v]);
    }
    Ok(PartitionState { ranks: prev.ranks, owner, cuts: None })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BalancePolicy {
    None,
    Orthogonal,
    Graph,
}

impl BalancePolicy {
    pub const ALL: [BalancePolicy; 3] = [BalancePolicy::None, BalancePolicy::Orthogonal, BalancePolicy::Graph];

    pub fn name(self) -> &'static str {
        match self {
            BalancePolicy::None => "none",
            BalancePolicy::Orthogonal => "orthogonal",
            BalancePolicy::Graph => "graph",
        }
    }
}

/// One CSV row of a partition trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionRecord {
    pub step: usize,
    pub rank: usize,
    pub workload: usize,
    pub imbalance: f64,
    /// Fraction of elements that changed rank in this step's rebalance.
    pub migration: f64,
    pub interface_dofs: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionTrace {
    pub policy: BalancePolicy,
    pub ranks: usize,
    pub records: Vec<PartitionRecord>,
    pub metrics: Vec<BalanceMetrics>,
    pub total_dofs: Vec<usize>,
    /// Per step, whether the orthogonal cut matched exhaustive search;
    /// `None` when not checked.
    pub verified: Vec<Option<bool>>,
}

impl PartitionTrace {
    pub fn imbalance(&self) -> Vec<f64> {
        self.metrics.iter().map(|m| m.imbalance).collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.records {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Distribute every mesh of an adaptive sequence over `ranks`. Step zero uses
/// the static column split; later steps inherit ownership from their parents
/// and are then rebalanced according to `policy`. With `verify`, orthogonal
/// cuts are checked against exhaustive search when the slab count allows it.
pub fn replay(meshes: &[Mesh], orders: Orders, ranks: usize, policy: BalancePolicy, verify: bool) -> Result<PartitionTrace> {
    let mut trace = PartitionTrace {
        policy,
        ranks,
        records: Vec::new(),
        metrics: Vec::new(),
        total_dofs: Vec::new(),
        verified: Vec::new(),
    };
    let mut state: Option<PartitionState> = None;
    for (step, mesh) in meshes.iter().enumerate() {
        let model = WorkModel::new(mesh, orders)?;
        let inherited = match &state {
            None => static_partition(mesh, ranks)?,
            Some(s) => s.inherit(mesh),
        };
        let mut verified = None;
        let next = match policy {
            BalancePolicy::None => inherited.clone(),
            BalancePolicy::Orthogonal => {
                let (next, cut) = rebalance_orthogonal(&model, &inherited)?;
                if verify && model.n_slabs() <= EXHAUSTIVE_SLAB_LIMIT {
                    let brute = exhaustive_orthogonal(&model, &inherited)?;
                    verified = Some(brute.bottleneck == cut.bottleneck && brute.migration == cut.migration);
                }
                next
            }
            BalancePolicy::Graph => rebalance_graph(&model, &inherited)?,
        };
        let metrics = balance_metrics(&model, &inherited, &next)?;
        let loads = rank_loads(&model, &next)?;
        for rank in 0..ranks {
            trace.records.push(PartitionRecord {
                step,
                rank,
                workload: loads.workload[rank],
                imbalance: metrics.imbalance,
                migration: metrics.migration,
                interface_dofs: loads.interface[rank],
            });
        }
        trace.metrics.push(metrics);
        trace.total_dofs.push(model.total_dofs());
        trace.verified.push(verified);
        state = Some(next);
    }
    Ok(trace)
}
