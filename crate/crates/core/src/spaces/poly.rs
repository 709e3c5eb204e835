//! One-dimensional polynomial families on the unit interval `[0, 1]`.

/// Legendre polynomials `P_0..=P_n` evaluated at `xi` in `[-1, 1]`.
pub fn legendre(n: usize, xi: f64) -> Vec<f64> {
    let mut p = Vec::with_capacity(n + 1);
    p.push(1.0);
    if n >= 1 {
        p.push(xi);
    }
    for k in 2..=n {
        let kf = k as f64;
        let next = ((2.0 * kf - 1.0) * xi * p[k - 1] - (kf - 1.0) * p[k - 2]) / kf;
        p.push(next);
    }
    p
}

/// Shifted Legendre polynomials on `[0, 1]`, values only.
///
/// These span the discontinuous (L²) trial spaces; they are orthogonal with
/// `∫₀¹ P_a P_b = δ_ab / (2a + 1)`.
pub fn shifted_legendre(n: usize, t: f64) -> Vec<f64> {
    legendre(n, 2.0 * t - 1.0)
}

/// Shifted Legendre values and `t`-derivatives on `[0, 1]`.
pub fn shifted_legendre_with_derivatives(n: usize, t: f64) -> (Vec<f64>, Vec<f64>) {
    let p = legendre(n, 2.0 * t - 1.0);
    let mut d = vec![0.0; n + 1];
    for k in 1..=n {
        // P'_k = P'_{k-2} + (2k - 1) P_{k-1}, in xi; d/dt = 2 d/dxi
        let prev = if k >= 2 { d[k - 2] } else { 0.0 };
        d[k] = prev + 2.0 * (2.0 * k as f64 - 1.0) * p[k - 1];
    }
    (p, d)
}

/// Hierarchical integrated-Legendre (Lobatto) shape functions of order `r` on
/// `[0, 1]`: two vertex functions `1 - t`, `t`, followed by `r - 1` bubbles.
///
/// Returns `(values, derivatives)` with derivatives taken with respect to `t`.
pub fn lobatto(r: usize, t: f64) -> (Vec<f64>, Vec<f64>) {
    let xi = 2.0 * t - 1.0;
    let p = legendre(r.max(1), xi);
    let mut val = Vec::with_capacity(r + 1);
    let mut der = Vec::with_capacity(r + 1);
    val.push(1.0 - t);
    der.push(-1.0);
    val.push(t);
    der.push(1.0);
    for k in 2..=r {
        let kf = k as f64;
        let scale = (2.0 * (2.0 * kf - 1.0)).sqrt();
        val.push((p[k] - p[k - 2]) / scale);
        // d/dxi = sqrt((2k-1)/2) P_{k-1}; d/dt = 2 d/dxi
        der.push(2.0 * ((2.0 * kf - 1.0) / 2.0).sqrt() * p[k - 1]);
    }
    (val, der)
}

/// Gauss–Legendre rule on `[0, 1]`.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    /// `n`-point rule, exact for polynomials of degree `2n - 1`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "quadrature needs at least one point");
        let mut points = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            // map from [-1, 1] to [0, 1]
            points[i] = 0.5 * (1.0 - x);
            points[n - 1 - i] = 0.5 * (1.0 + x);
            weights[i] = 0.5 * w;
            weights[n - 1 - i] = 0.5 * w;
        }
        Self { points, weights }
    }

    /// Smallest rule integrating polynomials of `degree` exactly.
    pub fn exact_for(degree: usize) -> Self {
        Self::new(degree / 2 + 1)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Integrate `f` over `[a, b]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let h = b - a;
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * h * f(a + h * t))
            .sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let p = legendre(n, x);
    let pn = p[n];
    let pn1 = if n >= 1 { p[n - 1] } else { 0.0 };
    let d = n as f64 * (x * pn - pn1) / (x * x - 1.0);
    (pn, d)
}

/// Coefficients of the restriction of a Lobatto expansion of order `r` on
/// `[0, 1]` to the sub-interval `[t0, t1]`, re-expanded in the Lobatto basis of
/// that sub-interval. Entry `(j, k)` is the local coefficient `j` produced by
/// parent function `k`.
pub fn lobatto_restriction(r: usize, t0: f64, t1: f64) -> nalgebra::DMatrix<f64> {
    let n = r + 1;
    let mut out = nalgebra::DMatrix::zeros(n, n);
    let rule = GaussRule::new(r + 2);
    let h = t1 - t0;
    for k in 0..n {
        let (v0, _) = lobatto(r, t0);
        let (v1, _) = lobatto(r, t1);
        out[(0, k)] = v0[k];
        out[(1, k)] = v1[k];
        // bubbles are orthogonal in the H¹ seminorm, and orthogonal to the
        // constant derivative of the vertex part
        for j in 2..n {
            let mut num = 0.0;
            let mut den = 0.0;
            for (&s, &w) in rule.points.iter().zip(&rule.weights) {
                let (_, dl) = lobatto(r, s);
                let (_, dp) = lobatto(r, t0 + h * s);
                num += w * dp[k] * h * dl[j];
                den += w * dl[j] * dl[j];
            }
            out[(j, k)] = num / den;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rule_integrates_monomials_exactly() {
        for n in 1..12 {
            let rule = GaussRule::new(n);
            for k in 0..(2 * n) {
                let got = rule.integrate(0.0, 1.0, |x| x.powi(k as i32));
                let want = 1.0 / (k as f64 + 1.0);
                assert!((got - want).abs() < 1e-14, "n={n} k={k} {got} {want}");
            }
        }
    }

    #[test]
    fn lobatto_derivatives_match_finite_differences() {
        let h = 1e-6;
        for r in 1..8 {
            for &t in &[0.1, 0.37, 0.5, 0.81] {
                let (_, d) = lobatto(r, t);
                let (vp, _) = lobatto(r, t + h);
                let (vm, _) = lobatto(r, t - h);
                for k in 0..=r {
                    let fd = (vp[k] - vm[k]) / (2.0 * h);
                    assert!((fd - d[k]).abs() < 1e-6, "r={r} k={k}");
                }
            }
        }
    }

    #[test]
    fn lobatto_bubbles_vanish_at_endpoints() {
        let (v0, _) = lobatto(6, 0.0);
        let (v1, _) = lobatto(6, 1.0);
        for k in 2..=6 {
            assert!(v0[k].abs() < 1e-14 && v1[k].abs() < 1e-14);
        }
    }

    #[test]
    fn restriction_reproduces_parent_polynomial() {
        let r = 5;
        let coeffs = [0.3, -1.2, 0.7, 0.05, -0.4, 1.1];
        for &(t0, t1) in &[(0.0, 0.5), (0.5, 1.0), (0.25, 0.5)] {
            let m = lobatto_restriction(r, t0, t1);
            for &s in &[0.0, 0.2, 0.6, 1.0] {
                let (pv, _) = lobatto(r, t0 + (t1 - t0) * s);
                let (lv, _) = lobatto(r, s);
                let parent: f64 = (0..=r).map(|k| coeffs[k] * pv[k]).sum();
                let local: f64 = (0..=r)
                    .map(|j| lv[j] * (0..=r).map(|k| m[(j, k)] * coeffs[k]).sum::<f64>())
                    .sum();
                assert!((parent - local).abs() < 1e-12);
            }
        }
    }
}
