use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::mesh::{build_waveguide_mesh, MarkSet, RefineMode};
use crate::physics::{apply, plane_mode, rectangular_mode, relative_l2_error, FieldFunction, IndexProfile, ZeroData};
use crate::spaces::Orders;

const ONE: C64 = C64::new(1.0, 0.0);
const ZERO: C64 = C64::new(0.0, 0.0);

/// `Σ c x^a z^b`.
#[derive(Clone)]
struct TensorPoly(Vec<(C64, i32, i32)>);

impl TensorPoly {
    fn eval(&self, x: f64, z: f64) -> (C64, C64, C64) {
        let mut v = ZERO;
        let mut dx = ZERO;
        let mut dz = ZERO;
        for &(c, a, b) in &self.0 {
            v += c * x.powi(a) * z.powi(b);
            if a > 0 {
                dx += c * (a as f64) * x.powi(a - 1) * z.powi(b);
            }
            if b > 0 {
                dz += c * (b as f64) * x.powi(a) * z.powi(b - 1);
            }
        }
        (v, dx, dz)
    }
}

/// Polynomial fields `[u_x, u_z, p]` and the source `A(u, p)`.
#[derive(Clone)]
struct PolyFields {
    ux: TensorPoly,
    uz: TensorPoly,
    p: TensorPoly,
}

impl FieldFunction for PolyFields {
    fn fields(&self, x: f64, z: f64) -> [C64; 3] {
        [self.ux.eval(x, z).0, self.uz.eval(x, z).0, self.p.eval(x, z).0]
    }
}

struct PolySource {
    f: PolyFields,
    omega: f64,
    n2: f64,
}

impl FieldFunction for PolySource {
    fn fields(&self, x: f64, z: f64) -> [C64; 3] {
        let (ux, dux, _) = self.f.ux.eval(x, z);
        let (uz, _, duz) = self.f.uz.eval(x, z);
        let (p, dpx, dpz) = self.f.p.eval(x, z);
        let (v, s) = apply(self.omega, self.n2, [ux, uz], dux + duz, p, [dpx, dpz]);
        [v[0], v[1], s]
    }
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn quadratic_fields(dim: usize) -> PolyFields {
    let tx = |v: Vec<(C64, i32, i32)>| {
        if dim == 1 {
            TensorPoly(v.into_iter().filter(|t| t.1 == 0).collect())
        } else {
            TensorPoly(v)
        }
    };
    PolyFields {
        ux: if dim == 1 { TensorPoly(vec![]) } else { tx(vec![(c(0.3, 0.1), 0, 0), (c(-0.4, 0.2), 1, 1), (c(0.2, 0.0), 2, 0)]) },
        uz: tx(vec![(c(1.0, -0.5), 0, 0), (c(0.5, 0.3), 0, 1), (c(-0.25, 0.1), 0, 2), (c(0.3, 0.0), 1, 2)]),
        p: tx(vec![(c(0.7, 0.2), 0, 0), (c(-0.6, 0.4), 0, 1), (c(0.35, -0.15), 0, 2), (c(0.1, 0.2), 2, 1)]),
    }
}

fn manufactured(dim: usize, omega: f64) -> (WaveProblem, PolyFields) {
    let f = quadratic_fields(dim);
    let src = PolySource { f: f.clone(), omega, n2: 1.0 };
    let prob = WaveProblem::manufactured(omega, IndexProfile::uniform(1.0), c(1.3, 0.2), Arc::new(f.clone()), Some(Arc::new(src)));
    (prob, f)
}

fn shape_1d(h: f64, omega: f64, alpha: f64, p: usize, dp: usize) -> ElementShape {
    ElementShape { dim: 1, hx: 1.0, hz: h, n2: 1.0, omega, orders: Orders::uniform(p, dp), alpha }
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, cols: usize) -> DMatrix<C64> {
    DMatrix::from_fn(r, cols, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

#[test]
fn gram_constant_flux_entry() {
    // v = 1 on a unit element (the flux test vertex functions sum to one)
    for (omega, expect) in [(1.0, 2.0), (0.0, 1.0)] {
        let shape = shape_1d(1.0, omega, 1.0, 1, 1);
        let g = element_gram(&shape).unwrap();
        let nt = shape.orders.test_scalar(1);
        let mut v = DVector::<C64>::zeros(shape.n_test());
        v[nt] = ONE;
        v[nt + 1] = ONE;
        let val = v.dotc(&(&g * &v));
        assert!((val.re - expect).abs() < 1e-13, "omega {omega}: {val}");
        assert!(val.im.abs() < 1e-13);
    }
}

#[test]
fn gram_is_hermitian_positive_definite() {
    let shapes = [
        shape_1d(0.3, 7.0, 1.0, 2, 1),
        shape_1d(2.0, 0.0, 0.5, 3, 2),
        ElementShape { dim: 2, hx: 0.5, hz: 0.25, n2: 2.1, omega: 6.0, orders: Orders::uniform(2, 1), alpha: 1.0 },
        ElementShape { dim: 2, hx: 3.0, hz: 0.1, n2: 1.0, omega: 0.0, orders: Orders { px: 1, pz: 3, dp: 1 }, alpha: 0.1 },
    ];
    for s in shapes {
        let g = element_gram(&s).unwrap();
        assert_eq!(g, g.adjoint());
        let min = g.clone().symmetric_eigenvalues().min();
        assert!(min > 0.0, "{s:?}: {min}");
    }
}

#[test]
fn constant_pressure_sees_no_volume_derivative() {
    // (p, q') = 0 for constant p and q: the field column of p against the
    // scalar vertex test functions reduces to the -iω n² mass term
    let omega = 2.0;
    let shape = shape_1d(1.0, omega, 1.0, 1, 1);
    let (bf, _) = element_stiffness(&shape).unwrap();
    let np = shape.orders.trial_scalar(1);
    // constant q = φ0 + φ1, constant p = first Legendre function of block p
    let pcol = np;
    let q_row = bf.row(0) + bf.row(1);
    // ∫ p conj(-iω q) = iω on the unit element
    assert!((q_row[pcol] - c(0.0, omega)).norm() < 1e-13, "{}", q_row[pcol]);
}

#[test]
fn condense_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let b0 = DMatrix::<C64>::zeros(5, 3);
    let g = {
        let a = random_matrix(&mut rng, 5, 5);
        &a * a.adjoint() + DMatrix::identity(5, 5)
    };
    let l = DVector::from_fn(5, |_, _| c(rng.random_range(-1.0..1.0), 0.3));
    let (s, f) = condense(&g, &b0, Some(&l)).unwrap();
    assert!(s.norm() == 0.0 && f.norm() == 0.0);

    let b = random_matrix(&mut rng, 5, 3);
    let (s, _) = condense(&DMatrix::identity(5, 5), &b, None).unwrap();
    assert!((s - b.adjoint() * &b).norm() < 1e-14);

    let (s, f) = condense(&g, &b, Some(&l)).unwrap();
    let ginv = g.clone().try_inverse().unwrap();
    assert!((&s - b.adjoint() * &ginv * &b).norm() < 1e-12);
    assert!((&f - b.adjoint() * &ginv * &l).norm() < 1e-12);
    assert_eq!(s, s.adjoint());
}

#[test]
fn condense_rejects_indefinite_gram() {
    let mut g = DMatrix::<C64>::identity(3, 3);
    g[(2, 2)] = c(-1.0, 0.0);
    assert!(condense(&g, &DMatrix::zeros(3, 1), None).is_err());
}

#[test]
fn neighbours_see_opposite_signs_on_shared_facet() {
    let mesh = build_waveguide_mesh(1, 2, 2, 2, None).unwrap();
    let (prob, _) = manufactured(2, 3.0);
    let disc = Discretization::new(&mesh, &prob).unwrap();
    let dofs = &disc.dofs;
    // elements 0 and 2 share the facet z = 0.5 in the lower row
    let (a, b) = (0usize, 2usize);
    let ea = dofs.element(a).unwrap();
    let eb = dofs.element(b).unwrap();
    let (sa, sb) = (0..4)
        .flat_map(|i| (0..4).map(move |j| (i, j)))
        .find(|&(i, j)| ea.sides[i].0 == eb.sides[j].0)
        .expect("shared carrier");
    let ka = &disc.element(a).unwrap().kernel;
    let kb = &disc.element(b).unwrap().kernel;
    let nf = ka.n_field();
    for j in 0..dofs.per_side() {
        // both sides are oriented alike, so the same local index carries the same global p̂
        assert_eq!(ea.rows[dofs.local_p(sa, j)], eb.rows[dofs.local_p(sb, j)]);
        let col = |k: &ElementKernel, s: usize| k.b.column(nf + dofs.local_p(s, j)).iter().map(|v| v.re).sum::<f64>();
        let (ca, cb) = (col(ka, sa), col(kb, sb));
        assert!(ca.abs() > 1e-3);
        assert!((ca + cb).abs() < 1e-12, "j {j}: {ca} vs {cb}");
    }
}

#[test]
fn single_element_extended_matrix_matches_dense_oracle() {
    // 1D, p = 1, Δp = 1 on (0, h): assemble [B_f B_t] by hand from the
    // monomial-free hat and Legendre functions and compare
    let (h, omega) = (0.7, 2.5);
    let shape = shape_1d(h, omega, 1.0, 1, 1);
    let (bf, bt) = element_stiffness(&shape).unwrap();
    // test scalar functions: hats 1 - t, t, bubble (lobatto order 2)
    let rule = crate::spaces::poly::GaussRule::new(8);
    let i = C64::new(0.0, 1.0);
    let nt = 3;
    let test = |k: usize, t: f64| -> (f64, f64) {
        let (v, d) = crate::spaces::poly::lobatto(2, t);
        (v[k], d[k] / h)
    };
    let trial = |k: usize, t: f64| crate::spaces::poly::shifted_legendre(1, t)[k];
    let mut oracle = DMatrix::<C64>::zeros(2 * nt, 4);
    for (&t, &w) in rule.points.iter().zip(&rule.weights) {
        let w = w * h;
        for k in 0..nt {
            let (v, dv) = test(k, t);
            // q = φ_k: A* = (-∇q, -iω q); v = φ_k: A* = (-iω v, -div v)
            for a in 0..2 {
                let ph = trial(a, t);
                // u pairs with first component, p with the scalar one
                oracle[(k, a)] += ph * (-dv) * w; // u · conj(-q')
                oracle[(k, 2 + a)] += ph * (-i * omega * v).conj() * w;
                oracle[(nt + k, a)] += ph * (-i * omega * v).conj() * w;
                oracle[(nt + k, 2 + a)] += ph * (-dv) * w;
            }
        }
    }
    assert!((&bf - &oracle).norm() < 1e-12, "{bf}\n{oracle}");
    // traces: p̂ at the ends against v n, û against q
    let mut tr = DMatrix::<C64>::zeros(2 * nt, 4);
    tr[(nt, 0)] = c(-1.0, 0.0);
    tr[(nt + 1, 1)] = c(1.0, 0.0);
    tr[(0, 2)] = ONE;
    tr[(1, 3)] = ONE;
    assert!((&bt - &tr).norm() < 1e-14, "{bt}");
}

#[test]
fn polynomial_solution_is_reproduced() {
    for dim in [1usize, 2] {
        let layers = if dim == 1 { 0 } else { 2 };
        let mesh = build_waveguide_mesh(1, 3, layers, 2, None).unwrap();
        let (prob, exact) = manufactured(dim, 4.0);
        let sol = assemble_solve(&mesh, &prob).unwrap();
        let err = relative_l2_error(&sol, &exact).unwrap();
        assert!(err < 1e-8, "dim {dim}: {err}%");
        assert!(sol.total_residual < 1e-10, "dim {dim}: {}", sol.total_residual);
        assert!(sol.residuals.iter().all(|r| r.1 < 1e-10));
    }
}

#[test]
fn polynomial_solution_is_reproduced_with_hanging_nodes() {
    let mut mesh = build_waveguide_mesh(1, 2, 2, 2, None).unwrap();
    mesh.refine(&MarkSet::uniform([0], RefineMode::Iso)).unwrap();
    let child = mesh.elements[0].children[3];
    mesh.refine(&MarkSet::uniform([child], RefineMode::AnisoX)).unwrap();
    mesh.refine(&MarkSet::uniform([3], RefineMode::AnisoZ)).unwrap();
    let (prob, exact) = manufactured(2, 4.0);
    let sol = assemble_solve(&mesh, &prob).unwrap();
    let err = relative_l2_error(&sol, &exact).unwrap();
    assert!(err < 1e-8, "{err}%");
    assert!(sol.total_residual < 1e-10, "{}", sol.total_residual);
}

#[test]
fn zero_data_gives_zero_solution() {
    let mesh = build_waveguide_mesh(2, 2, 2, 2, None).unwrap();
    let mut prob = WaveProblem::mode_excitation(rectangular_mode(1, 7.0, 1.0), ONE, IndexProfile::uniform(1.0)).unwrap();
    prob.data = Arc::new(ZeroData);
    let sol = assemble_solve(&mesh, &prob).unwrap();
    assert!(sol.fields.iter().all(|v| v.norm() == 0.0));
    assert!(sol.traces.iter().all(|v| v.norm() == 0.0));
    assert_eq!(sol.total_residual, 0.0);
}

/// Dense mixed system `(ψ, v)_V + b(u, v) = l(v)`, `b(w, ψ) = 0` over the whole
/// broken test space and all free unknowns.
fn dense_mixed_solve(disc: &Discretization) -> Vec<C64> {
    let nf = disc.dofs.n_field;
    let nfree = disc.n_free;
    let elems: Vec<&ElementData> = disc.active().collect();
    let nv: usize = elems.iter().map(|d| d.kernel.gram.nrows()).sum();
    let nu = nf + nfree;
    let n = nv + nu;
    let mut m = DMatrix::<C64>::zeros(n, n);
    let mut rhs = DVector::<C64>::zeros(n);
    let mut off = 0;
    for d in &elems {
        let k = &d.kernel;
        let ntst = k.gram.nrows();
        m.view_mut((off, off), (ntst, ntst)).copy_from(&k.gram);
        let range = disc.dofs.element(d.id).unwrap().field.clone();
        let nfl = range.len();
        // B_f into field columns
        for (a, g) in range.enumerate() {
            for i in 0..ntst {
                let v = k.b[(i, a)];
                m[(off + i, nv + g)] += v;
                m[(nv + g, off + i)] += v.conj();
            }
        }
        // B_t T into free trace columns; B_t lift to the load
        let bt = k.b.columns(nfl, k.n_trace()).into_owned();
        let btt = &bt * &d.t;
        for (a, &g) in d.free.iter().enumerate() {
            for i in 0..ntst {
                let v = btt[(i, a)];
                m[(off + i, nv + nf + g)] += v;
                m[(nv + nf + g, off + i)] += v.conj();
            }
        }
        let lift = &bt * &d.lift;
        for i in 0..ntst {
            rhs[off + i] -= lift[i];
            if let Some(l) = &d.load {
                rhs[off + i] += l[i];
            }
        }
        off += ntst;
    }
    let x = m.lu().solve(&rhs).unwrap();
    x.rows(nv, nu).iter().copied().collect()
}

#[test]
fn condensed_solve_matches_dense_mixed_system() {
    let mesh = build_waveguide_mesh(1, 2, 0, 2, None).unwrap();
    for prob in [
        manufactured(1, 5.0).0.with_enrichment(2),
        WaveProblem::mode_excitation(plane_mode(2.0 * std::f64::consts::PI, 1.0), c(0.8, 0.3), IndexProfile::uniform(1.0))
            .unwrap()
            .with_enrichment(2),
    ] {
        let disc = Discretization::new(&mesh, &prob).unwrap();
        assert_eq!(disc.active().count(), 2);
        let sol = disc.solve().unwrap();
        let dense = dense_mixed_solve(&disc);
        let nf = disc.dofs.n_field;
        let scale = dense.iter().map(|v| v.norm()).fold(0.0, f64::max);
        for i in 0..nf {
            assert!((sol.fields[i] - dense[i]).norm() < 1e-10 * scale, "field {i}");
        }
        let free = disc.free_values(&sol.traces);
        for i in 0..disc.n_free {
            assert!((free[i] - dense[nf + i]).norm() < 1e-10 * scale, "trace {i}");
        }
    }
}

fn mode_problem_2d() -> (Mesh, WaveProblem, crate::physics::ModeSpec) {
    let pi = std::f64::consts::PI;
    let mode = rectangular_mode(1, (5.0f64).sqrt() * pi, 1.0);
    let mesh = build_waveguide_mesh(1, 3, 2, 2, None).unwrap();
    let prob = WaveProblem::mode_excitation(mode, ONE, IndexProfile::uniform(1.0)).unwrap();
    (mesh, prob, mode)
}

#[test]
fn residual_localizes_and_solver_is_accurate() {
    let (mesh, prob, _) = mode_problem_2d();
    let sol = assemble_solve(&mesh, &prob).unwrap();
    let total2 = sol.total_residual * sol.total_residual;
    assert!(total2 > 0.0);
    assert!((total2 - sol.sum_eta_squared()).abs() / total2 < 1e-12);
    assert!(sol.solver_residual < 1e-10, "{}", sol.solver_residual);
}

#[test]
fn normal_equations_are_stationary() {
    // (ψ, T w)_V = Re-part-free: Σ_K (B_K w_K)ᴴ ψ_K = 0 for all discrete w
    let (mesh, prob, _) = mode_problem_2d();
    let disc = Discretization::new(&mesh, &prob).unwrap();
    let sol = disc.solve().unwrap();
    let nf = disc.dofs.n_field;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let wf: Vec<C64> = (0..nf).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        let wfree: Vec<C64> = (0..disc.n_free).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        // homogeneous trace values: constrained DOFs follow the free ones without offsets
        let mut wt = vec![ZERO; disc.status.len()];
        for (dof, slot) in wt.iter_mut().enumerate() {
            expand_status(&disc.status, dof, ONE, &mut |f, cc| *slot += cc * wfree[f], &mut |_| {});
        }
        let (mut inner, mut wn, mut pn) = (ZERO, 0.0, 0.0);
        for (d, psi) in disc.active().zip(&sol.psi) {
            let y = disc.local_trial(d, &wf, &wt);
            let bw = &d.kernel.b * &y;
            inner += bw.dotc(psi);
            let tw = d.kernel.gram_chol.solve(&bw);
            wn += tw.dotc(&bw).re;
            pn += psi.dotc(&(&d.kernel.gram * psi)).re;
        }
        assert!(inner.norm() < 1e-9 * wn.sqrt() * pn.sqrt(), "{inner}");
    }
}

#[test]
fn perturbing_coefficients_never_lowers_the_residual() {
    let (mesh, prob, _) = mode_problem_2d();
    let disc = Discretization::new(&mesh, &prob).unwrap();
    let sol = disc.solve().unwrap();
    let base = sol.total_residual;
    let nf = disc.dofs.n_field;
    let free = disc.free_values(&sol.traces);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let k = rng.random_range(0..nf + disc.n_free);
        for sign in [1.0, -1.0] {
            let mut fields = sol.fields.clone();
            let mut fr = free.clone();
            let slot = if k < nf { &mut fields[k] } else { &mut fr[k - nf] };
            let delta = 1e-3 * slot.norm().max(1e-12) * sign;
            *slot += delta;
            let traces = disc.trace_values(&fr);
            let r = disc.residual_of(&fields, &traces).unwrap().total;
            assert!(r >= base * (1.0 - 1e-12), "coefficient {k}: {r} < {base}");
        }
    }
}

#[test]
fn mode_error_converges_under_uniform_refinement() {
    let pi = std::f64::consts::PI;
    let mode = rectangular_mode(1, (5.0f64).sqrt() * pi, 1.0);
    let prob = WaveProblem::mode_excitation(mode, ONE, IndexProfile::uniform(1.0)).unwrap();
    for p in [1usize, 2] {
        let errs: Vec<f64> = [4usize, 8, 16]
            .iter()
            .map(|&n| {
                let mesh = build_waveguide_mesh(1, n, n / 2, p, None).unwrap();
                relative_l2_error(&assemble_solve(&mesh, &prob).unwrap(), &mode).unwrap()
            })
            .collect();
        let slope = (errs[0] / errs[2]).log2() / 2.0;
        assert!(slope >= p as f64 - 0.5, "p {p}: {errs:?}");
    }
}

#[test]
fn mixed_orders_are_rejected() {
    let mut mesh = build_waveguide_mesh(1, 2, 0, 2, None).unwrap();
    mesh.elements[0].p = 3;
    let prob = manufactured(1, 1.0).0;
    assert!(matches!(Discretization::new(&mesh, &prob), Err(Error::InvalidMesh(_))));
}

#[test]
fn infsup_probe_examples() {
    let pi = std::f64::consts::PI;
    let mk = |omega: f64| WaveProblem::mode_excitation(plane_mode(omega, 1.0), ONE, IndexProfile::uniform(1.0)).unwrap();
    let gammas: Vec<f64> = [2usize, 4, 8]
        .iter()
        .map(|&n| estimate_infsup(&build_waveguide_mesh(1, n, 0, 2, None).unwrap(), &mk(2.0 * pi)).unwrap().gamma_h)
        .collect();
    let (lo, hi) = gammas.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &g| (a.min(g), b.max(g)));
    assert!(lo > 0.0);
    assert!((hi - lo) / hi < 0.25, "{gammas:?}");
    let mesh = build_waveguide_mesh(1, 8, 0, 2, None).unwrap();
    let g1 = estimate_infsup(&mesh, &mk(1.0)).unwrap();
    let g10 = estimate_infsup(&mesh, &mk(10.0)).unwrap();
    let ratio = g1.gamma_h / g10.gamma_h;
    assert!((0.1..=10.0).contains(&ratio), "{ratio}");
    assert!(g1.continuity >= g1.gamma_h);
    let big = build_waveguide_mesh(16, 8, 4, 2, None).unwrap();
    assert!(matches!(estimate_infsup(&big, &mk(1.0)), Err(Error::TooLarge { .. })));
}
