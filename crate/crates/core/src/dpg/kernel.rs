//! Element matrices for the broken ultraweak form.
//!
//! Test DOFs are ordered `[q, v_x, v_z]` (`[q, v]` in 1D), trial fields
//! `[u_x, u_z, p]` (`[u, p]` in 1D). Local traces follow the layout of
//! [`DofMap`](crate::spaces::DofMap): all `p̂` side blocks, then all `û` blocks.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::mesh::{Axis, Side};
use crate::physics::adjoint_apply;
use crate::spaces::poly::{lobatto, GaussRule};
use crate::spaces::{tabulate_reference, ElementQuadrature, Orders, SpaceTag};
use crate::{Error, Result, C64};

/// Geometry and material data determining an element's matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementShape {
    pub dim: usize,
    pub hx: f64,
    pub hz: f64,
    pub n2: f64,
    pub omega: f64,
    pub orders: Orders,
    pub alpha: f64,
}

/// Hashable identity of an [`ElementShape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ShapeKey([u64; 5], [usize; 4]);

impl ElementShape {
    pub fn key(&self) -> ShapeKey {
        ShapeKey(
            [self.hx.to_bits(), self.hz.to_bits(), self.n2.to_bits(), self.omega.to_bits(), self.alpha.to_bits()],
            [self.dim, self.orders.px, self.orders.pz, self.orders.dp],
        )
    }

    pub fn n_test(&self) -> usize {
        let comps = if self.dim == 1 { 2 } else { 3 };
        comps * self.orders.test_scalar(self.dim)
    }

    pub fn n_field(&self) -> usize {
        let comps = if self.dim == 1 { 2 } else { 3 };
        comps * self.orders.trial_scalar(self.dim)
    }

    pub fn per_side(&self) -> usize {
        if self.dim == 1 {
            1
        } else {
            self.orders.trace() + 1
        }
    }

    pub fn n_trace(&self) -> usize {
        2 * Side::of_dim(self.dim).len() * self.per_side()
    }

    fn quadrature(&self) -> ElementQuadrature {
        ElementQuadrature::new(self.dim, self.hx, self.hz, self.orders.quad_points())
    }

    fn test_order(&self) -> [usize; 2] {
        let r = self.orders.test();
        [r, r]
    }
}

/// `A*φ_i · sqrt(w_q)` for every test function `i` (rows) and every
/// `(component, point)` pair (columns, component-major), together with the
/// plain weighted test values for the L² term.
fn adjoint_table(shape: &ElementShape, quad: &ElementQuadrature) -> Result<(DMatrix<C64>, DMatrix<f64>)> {
    let t = tabulate_reference(SpaceTag::TestScalar, shape.test_order(), quad)?;
    let nq = quad.len();
    let nt = t.n_functions;
    let comps = if shape.dim == 1 { 2 } else { 3 };
    let zero = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    let mut a = DMatrix::<C64>::zeros(comps * nt, 3 * nq);
    let mut m = DMatrix::<f64>::zeros(comps * nt, comps * nq);
    for q in 0..nq {
        let sw = quad.weights[q].sqrt();
        for f in 0..nt {
            let v = t.value(f, q);
            let g = t.grad(f, q);
            let gq = [one * g[0], one * g[1]];
            // scalar test function q = φ
            let (av, aq) = adjoint_apply(shape.omega, shape.n2, [zero, zero], zero, one * v, gq);
            let rows: Vec<(usize, [C64; 2], C64)> = if shape.dim == 1 {
                let (bv, bq) = adjoint_apply(shape.omega, shape.n2, [zero, one * v], one * g[1], zero, [zero, zero]);
                vec![(f, av, aq), (nt + f, bv, bq)]
            } else {
                let (bx, bqx) = adjoint_apply(shape.omega, shape.n2, [one * v, zero], one * g[0], zero, [zero, zero]);
                let (bz, bqz) = adjoint_apply(shape.omega, shape.n2, [zero, one * v], one * g[1], zero, [zero, zero]);
                vec![(f, av, aq), (nt + f, bx, bqx), (2 * nt + f, bz, bqz)]
            };
            for (c, (row, vec, scal)) in rows.into_iter().enumerate() {
                a[(row, q)] = vec[0] * sw;
                a[(row, nq + q)] = vec[1] * sw;
                a[(row, 2 * nq + q)] = scal * sw;
                m[(row, c * nq + q)] = v * sw;
            }
        }
    }
    Ok((a, m))
}

/// Test Gram matrix `G_ij = (A*φ_j, A*φ_i) + α (φ_j, φ_i)`.
pub fn element_gram(shape: &ElementShape) -> Result<DMatrix<C64>> {
    let quad = shape.quadrature();
    let (a, m) = adjoint_table(shape, &quad)?;
    Ok(gram_from_tables(&a, &m, shape.alpha))
}

fn gram_from_tables(a: &DMatrix<C64>, m: &DMatrix<f64>, alpha: f64) -> DMatrix<C64> {
    let mut g = a.conjugate() * a.transpose();
    let mass = m * m.transpose();
    g.zip_apply(&mass, |gij, mij| *gij += C64::new(alpha * mij, 0.0));
    // exact Hermitian symmetry
    let n = g.nrows();
    for i in 0..n {
        g[(i, i)].im = 0.0;
        for j in 0..i {
            let avg = 0.5 * (g[(i, j)] + g[(j, i)].conj());
            g[(i, j)] = avg;
            g[(j, i)] = avg.conj();
        }
    }
    g
}

/// Field and trace blocks of the element stiffness `B = [B_f B_t]`, test rows.
pub fn element_stiffness(shape: &ElementShape) -> Result<(DMatrix<C64>, DMatrix<C64>)> {
    let quad = shape.quadrature();
    let (a, _) = adjoint_table(shape, &quad)?;
    Ok((field_block(shape, &quad, &a)?, trace_block(shape)?))
}

fn field_block(shape: &ElementShape, quad: &ElementQuadrature, a: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let o = shape.orders;
    let trial = tabulate_reference(SpaceTag::TrialField, [o.px, o.pz], quad)?;
    let nq = quad.len();
    let nf = trial.n_functions;
    // trial component c pairs with adjoint column block: u_x -> 0, u_z -> 1, p -> 2
    let blocks: &[usize] = if shape.dim == 1 { &[1, 2] } else { &[0, 1, 2] };
    let mut t = DMatrix::<C64>::zeros(blocks.len() * nf, 3 * nq);
    for (c, &blk) in blocks.iter().enumerate() {
        for f in 0..nf {
            for q in 0..nq {
                t[(c * nf + f, blk * nq + q)] = C64::new(trial.value(f, q) * quad.weights[q].sqrt(), 0.0);
            }
        }
    }
    Ok(a.conjugate() * t.transpose())
}

/// Facet pairings `⟨p̂, v·n⟩` and `⟨û_n, q⟩` with traces in the local layout.
fn trace_block(shape: &ElementShape) -> Result<DMatrix<C64>> {
    let dim = shape.dim;
    let sides = Side::of_dim(dim);
    let ns = sides.len();
    let ps = shape.per_side();
    let r = shape.orders.test();
    let nts = shape.orders.test_scalar(dim);
    let mut b = DMatrix::<C64>::zeros(shape.n_test(), shape.n_trace());
    if dim == 1 {
        // test functions are Lobatto in z; only the vertex functions are nonzero at the ends
        for (s, side) in sides.iter().enumerate() {
            let f = if side.index == 0 { 0 } else { 1 };
            // p̂ against v·n = sign v
            b[(nts + f, s)] = C64::new(side.sign, 0.0);
            // û_n against q
            b[(f, ns + s)] = C64::new(1.0, 0.0);
        }
        return Ok(b);
    }
    let m = shape.orders.trace();
    let rule = GaussRule::new(shape.orders.quad_points());
    let nx = r + 1;
    for (s, side) in sides.iter().enumerate() {
        let (len, fixed_end) = match side.index {
            0 => (shape.hx, 0.0),
            1 => (shape.hz, 1.0),
            2 => (shape.hx, 1.0),
            _ => (shape.hz, 0.0),
        };
        let fixed_vals = lobatto(r, fixed_end).0;
        let flux_block = match side.normal {
            Axis::X => 1,
            Axis::Z => 2,
        };
        for (&t, &w) in rule.points.iter().zip(&rule.weights) {
            let lt = lobatto(m, t).0;
            let tv = lobatto(r, t).0;
            for a in 0..nx {
                for bb in 0..nx {
                    // tangential factor and normal factor of test function (a, bb)
                    let val = match side.normal {
                        Axis::Z => tv[a] * fixed_vals[bb],
                        Axis::X => fixed_vals[a] * tv[bb],
                    };
                    if val == 0.0 {
                        continue;
                    }
                    let f = a + nx * bb;
                    for j in 0..=m {
                        let base = w * len * lt[j] * val;
                        b[(flux_block * nts + f, s * ps + j)] += C64::new(side.sign * base, 0.0);
                        b[(f, (ns + s) * ps + j)] += C64::new(base, 0.0);
                    }
                }
            }
        }
    }
    Ok(b)
}

/// Normal equations of one element: `S = Bᴴ G⁻¹ B` and `f = Bᴴ G⁻¹ l`.
pub fn condense(g: &DMatrix<C64>, b: &DMatrix<C64>, l: Option<&DVector<C64>>) -> Result<(DMatrix<C64>, DVector<C64>)> {
    let chol = hermitian_cholesky(g.clone()).ok_or(Error::SingularGram { element: usize::MAX })?;
    let x = chol.l().solve_lower_triangular(b).ok_or(Error::SingularGram { element: usize::MAX })?;
    let s = hermitian_part(x.adjoint() * &x);
    let f = match l {
        Some(l) => {
            let y = chol.l().solve_lower_triangular(l).ok_or(Error::SingularGram { element: usize::MAX })?;
            x.adjoint() * y
        }
        None => DVector::zeros(b.ncols()),
    };
    Ok((s, f))
}

/// Cholesky factorization with the pivot floor `1e-14 · trace / n`.
pub fn hermitian_cholesky(a: DMatrix<C64>) -> Option<Cholesky<C64, Dyn>> {
    let n = a.nrows();
    if n == 0 {
        return Cholesky::new(a);
    }
    let trace: f64 = (0..n).map(|i| a[(i, i)].re).sum();
    let floor = 1e-14 * trace / n as f64;
    let chol = Cholesky::new(a)?;
    let l = chol.l_dirty();
    if (0..n).any(|i| !(l[(i, i)].re * l[(i, i)].re > floor)) {
        return None;
    }
    Some(chol)
}

pub(crate) fn hermitian_part(mut s: DMatrix<C64>) -> DMatrix<C64> {
    let n = s.nrows();
    for i in 0..n {
        s[(i, i)].im = 0.0;
        for j in 0..i {
            let avg = 0.5 * (s[(i, j)] + s[(j, i)].conj());
            s[(i, j)] = avg;
            s[(j, i)] = avg.conj();
        }
    }
    s
}

/// Everything the global solver needs from one element shape.
#[derive(Debug, Clone)]
pub struct ElementKernel {
    pub shape: ElementShape,
    pub gram: DMatrix<C64>,
    pub gram_chol: Cholesky<C64, Dyn>,
    /// `[B_f B_t]`.
    pub b: DMatrix<C64>,
    /// `L⁻¹ B` with `G = L Lᴴ`.
    pub x: DMatrix<C64>,
    pub s: DMatrix<C64>,
    pub sff_chol: Cholesky<C64, Dyn>,
    /// `S_ff⁻¹ S_ft`.
    pub w: DMatrix<C64>,
    /// Trace Schur complement `S_tt - S_tf S_ff⁻¹ S_ft`.
    pub schur: DMatrix<C64>,
}

impl ElementKernel {
    pub fn new(shape: ElementShape) -> Result<Self> {
        let quad = shape.quadrature();
        let (a, m) = adjoint_table(&shape, &quad)?;
        let gram = gram_from_tables(&a, &m, shape.alpha);
        let bf = field_block(&shape, &quad, &a)?;
        let bt = trace_block(&shape)?;
        let nf = bf.ncols();
        let nt = bt.ncols();
        let mut b = DMatrix::<C64>::zeros(bf.nrows(), nf + nt);
        b.columns_mut(0, nf).copy_from(&bf);
        b.columns_mut(nf, nt).copy_from(&bt);
        let gram_chol = hermitian_cholesky(gram.clone()).ok_or(Error::SingularGram { element: usize::MAX })?;
        let x = gram_chol.l().solve_lower_triangular(&b).ok_or(Error::SingularGram { element: usize::MAX })?;
        let s = hermitian_part(x.adjoint() * &x);
        let sff = s.view((0, 0), (nf, nf)).into_owned();
        let sft = s.view((0, nf), (nf, nt)).into_owned();
        let stt = s.view((nf, nf), (nt, nt)).into_owned();
        let sff_chol = hermitian_cholesky(sff).ok_or(Error::SingularFieldBlock { element: usize::MAX })?;
        let w = sff_chol.solve(&sft);
        let schur = hermitian_part(stt - sft.adjoint() * &w);
        Ok(Self { shape, gram, gram_chol, b, x, s, sff_chol, w, schur })
    }

    pub fn n_field(&self) -> usize {
        self.shape.n_field()
    }

    pub fn n_trace(&self) -> usize {
        self.shape.n_trace()
    }

    /// Condensed load `Bᴴ G⁻¹ l`.
    pub fn condensed_load(&self, l: &DVector<C64>) -> DVector<C64> {
        let y = self.gram_chol.l().solve_lower_triangular(l).expect("factor is nonsingular");
        self.x.adjoint() * y
    }

    /// Field coefficients minimizing the element residual for given traces.
    pub fn recover_fields(&self, f_field: &DVector<C64>, traces: &DVector<C64>) -> DVector<C64> {
        self.sff_chol.solve(f_field) - &self.w * traces
    }

    /// Riesz representer `ψ = G⁻¹ (l - B y)` and `η² = Re(rᴴ ψ)`.
    pub fn residual(&self, l: Option<&DVector<C64>>, y: &DVector<C64>) -> (DVector<C64>, f64) {
        let mut r = -(&self.b * y);
        if let Some(l) = l {
            r += l;
        }
        let psi = self.gram_chol.solve(&r);
        let eta2 = r.dotc(&psi).re.max(0.0);
        (psi, eta2)
    }
}

/// Load vector `l_i = ∫ f · conj(φ_i)` for a source on an element with lower
/// corner `(x0, z0)`.
pub fn element_load(shape: &ElementShape, x0: f64, z0: f64, source: &dyn Fn(f64, f64) -> Option<[C64; 3]>) -> Result<DVector<C64>> {
    let quad = shape.quadrature();
    let t = tabulate_reference(SpaceTag::TestScalar, shape.test_order(), &quad)?;
    let nt = t.n_functions;
    let mut l = DVector::<C64>::zeros(shape.n_test());
    for q in 0..quad.len() {
        let [x, z] = quad.point(q, x0, z0);
        let Some(f) = source(x, z) else { continue };
        let w = quad.weights[q];
        for i in 0..nt {
            let v = t.value(i, q) * w;
            l[i] += f[2] * v;
            if shape.dim == 1 {
                l[nt + i] += f[1] * v;
            } else {
                l[nt + i] += f[0] * v;
                l[2 * nt + i] += f[1] * v;
            }
        }
    }
    Ok(l)
}
