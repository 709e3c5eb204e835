//! Envelope (skyline) Cholesky `A = L Lᴴ` for sparse Hermitian positive
//! definite systems, with reverse Cuthill–McKee ordering.

use std::collections::VecDeque;

use crate::{Error, Result, C64};

/// Reverse Cuthill–McKee permutation of an undirected graph. `perm[k]` is the
/// original vertex placed at position `k`.
pub fn reverse_cuthill_mckee(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&v| (degree[v], v));
    for &start in &by_degree {
        if visited[start] {
            continue;
        }
        let root = pseudo_peripheral(adj, start, &degree);
        let mut queue = VecDeque::new();
        visited[root] = true;
        queue.push_back(root);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (degree[w], w));
            for w in next {
                if !visited[w] {
                    visited[w] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    order.reverse();
    order
}

fn pseudo_peripheral(adj: &[Vec<usize>], start: usize, degree: &[usize]) -> usize {
    let mut root = start;
    let mut ecc = 0;
    for _ in 0..8 {
        let levels = bfs_levels(adj, root);
        let max = levels.iter().filter_map(|&l| l).max().unwrap_or(0);
        if max <= ecc && ecc > 0 {
            break;
        }
        ecc = max;
        let far = (0..adj.len())
            .filter(|&v| levels[v] == Some(max))
            .min_by_key(|&v| (degree[v], v))
            .unwrap_or(root);
        if far == root {
            break;
        }
        root = far;
    }
    root
}

fn bfs_levels(adj: &[Vec<usize>], root: usize) -> Vec<Option<usize>> {
    let mut level = vec![None; adj.len()];
    level[root] = Some(0);
    let mut queue = VecDeque::from([root]);
    while let Some(v) = queue.pop_front() {
        let l = level[v].unwrap();
        for &w in &adj[v] {
            if level[w].is_none() {
                level[w] = Some(l + 1);
                queue.push_back(w);
            }
        }
    }
    level
}

/// Lower envelope of a Hermitian matrix in permuted numbering. Row `i` stores
/// columns `first[i]..=i` contiguously starting at `start[i]`.
#[derive(Debug, Clone)]
pub struct SkylineMatrix {
    pub n: usize,
    /// `perm[k]`: original index at position `k`.
    pub perm: Vec<usize>,
    /// `inv[orig]`: position of an original index.
    pub inv: Vec<usize>,
    first: Vec<usize>,
    start: Vec<usize>,
    data: Vec<C64>,
    factored: bool,
}

impl SkylineMatrix {
    /// Empty matrix with the envelope implied by `adj` (original numbering).
    pub fn with_pattern(adj: &[Vec<usize>]) -> Self {
        let n = adj.len();
        let perm = reverse_cuthill_mckee(adj);
        let mut inv = vec![0; n];
        for (k, &v) in perm.iter().enumerate() {
            inv[v] = k;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (v, nb) in adj.iter().enumerate() {
            let i = inv[v];
            for &w in nb {
                let j = inv[w];
                if j < i {
                    first[i] = first[i].min(j);
                } else if i < j {
                    first[j] = first[j].min(i);
                }
            }
        }
        let mut start = Vec::with_capacity(n + 1);
        let mut total = 0;
        for i in 0..n {
            start.push(total);
            total += i - first[i] + 1;
        }
        start.push(total);
        Self { n, perm, inv, first, start, data: vec![C64::new(0.0, 0.0); total], factored: false }
    }

    pub fn stored_entries(&self) -> usize {
        self.data.len()
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && j >= self.first[i]);
        self.start[i] + (j - self.first[i])
    }

    /// Add `v` to entry `(r, c)` given in original numbering. Only the lower
    /// triangle (after permutation) is stored; the caller may pass either
    /// half, the other half is ignored.
    pub fn add(&mut self, r: usize, c: usize, v: C64) {
        let (i, j) = (self.inv[r], self.inv[c]);
        if j > i {
            return;
        }
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    /// In-place factorization with the pivot floor `1e-14 · trace / n`.
    pub fn factor(&mut self) -> Result<()> {
        let n = self.n;
        let trace: f64 = (0..n).map(|i| self.data[self.idx(i, i)].re).sum();
        let floor = 1e-14 * trace.abs() / n.max(1) as f64;
        for i in 0..n {
            let fi = self.first[i];
            for j in fi..i {
                let fj = self.first[j];
                let k0 = fi.max(fj);
                let (ri, rj) = (self.start[i] + (k0 - fi), self.start[j] + (k0 - fj));
                let len = j - k0;
                let mut acc = C64::new(0.0, 0.0);
                for t in 0..len {
                    acc += self.data[ri + t] * self.data[rj + t].conj();
                }
                let ij = self.idx(i, j);
                let jj = self.idx(j, j);
                self.data[ij] = (self.data[ij] - acc) / self.data[jj].re;
            }
            let ri = self.start[i];
            let mut d = self.data[self.idx(i, i)].re;
            for t in 0..(i - fi) {
                d -= self.data[ri + t].norm_sqr();
            }
            if !(d > floor) {
                return Err(Error::SingularSystem { pivot: i, size: n });
            }
            let ii = self.idx(i, i);
            self.data[ii] = C64::new(d.sqrt(), 0.0);
        }
        self.factored = true;
        Ok(())
    }

    /// Solve `A x = b` (original numbering) after [`factor`](Self::factor).
    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        assert!(self.factored, "matrix not factored");
        let n = self.n;
        let mut y: Vec<C64> = (0..n).map(|k| b[self.perm[k]]).collect();
        // L y = b
        for i in 0..n {
            let fi = self.first[i];
            let ri = self.start[i];
            let mut acc = y[i];
            for t in 0..(i - fi) {
                acc -= self.data[ri + t] * y[fi + t];
            }
            y[i] = acc / self.data[self.idx(i, i)].re;
        }
        // Lᴴ x = y
        for i in (0..n).rev() {
            let xi = y[i] / self.data[self.idx(i, i)].re;
            y[i] = xi;
            let fi = self.first[i];
            let ri = self.start[i];
            for t in 0..(i - fi) {
                y[fi + t] -= self.data[ri + t].conj() * xi;
            }
        }
        let mut x = vec![C64::new(0.0, 0.0); n];
        for k in 0..n {
            x[self.perm[k]] = y[k];
        }
        x
    }
}
