//! Gaussian quadrature by Golub–Welsch, plus the composite and graded rules
//! used for the moment integrals and the t-integrals of the kernels.

use crate::error::{Error, Result};
use crate::numerics::gamma::ln_gamma_pos;
use nalgebra::{DMatrix, SymmetricEigen};

/// Which integral a [`QuadratureRule`] approximates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    /// `∫₀¹ t^alpha (1-t)^beta f(t) dt`
    UnitJacobi { alpha: f64, beta: f64 },
    /// `∫₀^∞ s^gamma e^{-s} f(s) ds`
    SemiAxisLaguerre { gamma: f64 },
    /// `∫_lo^hi f(x) dx`
    Interval { lo: f64, hi: f64 },
    /// `∫₀¹ t^e0 f(t) dt` through `t = w^q`
    GradedUnit { e0: f64, q: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub domain: Domain,
}

impl QuadratureRule {
    pub fn apply<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        // pairwise would be overkill here; the weights are all positive
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Nodes and Christoffel weights from the three-term recurrence
/// `sqrt(b_{k+1}) p_{k+1} = (x - a_k) p_k - sqrt(b_k) p_{k-1}` with `∫ w = mu0`.
fn golub_welsch(a: &[f64], b: &[f64], mu0: f64) -> (Vec<f64>, Vec<f64>) {
    let n = a.len();
    let sb: Vec<f64> = b.iter().map(|v| v.sqrt()).collect();
    let mut nodes: Vec<f64> = if n == 1 {
        vec![a[0]]
    } else {
        let mut j = DMatrix::<f64>::zeros(n, n);
        for k in 0..n {
            j[(k, k)] = a[k];
            if k + 1 < n {
                j[(k, k + 1)] = sb[k + 1];
                j[(k + 1, k)] = sb[k + 1];
            }
        }
        SymmetricEigen::new(j).eigenvalues.iter().copied().collect()
    };
    nodes.sort_by(|x, y| x.partial_cmp(y).unwrap());

    let p0 = 1.0 / mu0.sqrt();
    // orthonormal values (and derivatives) up to degree n-1, plus the
    // unnormalised degree-n residual used for Newton polishing
    let eval = |x: f64| -> (f64, f64, f64) {
        let (mut pm, mut p, mut dpm, mut dp) = (0.0, p0, 0.0, 0.0);
        let mut sumsq = p * p;
        for k in 0..n {
            let q = (x - a[k]) * p - if k > 0 { sb[k] * pm } else { 0.0 };
            let dq = p + (x - a[k]) * dp - if k > 0 { sb[k] * dpm } else { 0.0 };
            if k + 1 == n {
                return (q, dq, sumsq);
            }
            let s = sb[k + 1];
            pm = p;
            dpm = dp;
            p = q / s;
            dp = dq / s;
            sumsq += p * p;
        }
        unreachable!()
    };

    let mut out_x = Vec::with_capacity(n);
    let mut out_w = Vec::with_capacity(n);
    for (i, &x0) in nodes.iter().enumerate() {
        let gap = match (i > 0, i + 1 < n) {
            (true, true) => (x0 - nodes[i - 1]).min(nodes[i + 1] - x0),
            (true, false) => x0 - nodes[i - 1],
            (false, true) => nodes[i + 1] - x0,
            _ => f64::INFINITY,
        };
        let mut x = x0;
        for _ in 0..3 {
            let (q, dq, _) = eval(x);
            if dq == 0.0 || !q.is_finite() || !dq.is_finite() {
                break;
            }
            let step = q / dq;
            if step.abs() > 0.1 * gap {
                break;
            }
            x -= step;
        }
        let (_, _, sumsq) = eval(x);
        let w = 1.0 / sumsq;
        if w > 0.0 && w.is_finite() {
            out_x.push(x);
            out_w.push(w);
        }
    }
    (out_x, out_w)
}

fn jacobi_recurrence(n: usize, alpha: f64, beta: f64) -> (Vec<f64>, Vec<f64>, f64) {
    // shifted to (0,1) with weight t^alpha (1-t)^beta; the classical
    // recurrence on [-1,1] uses (1-x)^A (1+x)^B
    let (aa, bb) = (beta, alpha);
    let s = aa + bb;
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    for k in 0..n {
        let kf = k as f64;
        let ak = if k == 0 { (bb - aa) / (s + 2.0) } else { (bb * bb - aa * aa) / ((2.0 * kf + s) * (2.0 * kf + s + 2.0)) };
        a[k] = 0.5 * (1.0 + ak);
        if k >= 1 {
            let bk = if k == 1 {
                4.0 * (1.0 + aa) * (1.0 + bb) / ((2.0 + s).powi(2) * (3.0 + s))
            } else {
                let t = 2.0 * kf + s;
                4.0 * kf * (kf + aa) * (kf + bb) * (kf + s) / (t * t * (t + 1.0) * (t - 1.0))
            };
            b[k] = 0.25 * bk;
        }
    }
    let mu0 = (ln_gamma_pos1(alpha + 1.0) + ln_gamma_pos1(beta + 1.0) - ln_gamma_pos1(alpha + beta + 2.0)).exp();
    (a, b, mu0)
}

// log Γ for positive arguments that may fall below 1/2
fn ln_gamma_pos1(x: f64) -> f64 {
    if x >= 0.5 {
        ln_gamma_pos(x)
    } else {
        ln_gamma_pos(x + 1.0) - x.ln()
    }
}

/// Gauss–Jacobi rule for `∫₀¹ t^alpha f(t) dt`.
pub fn gauss_jacobi(order: usize, alpha: f64) -> Result<QuadratureRule> {
    gauss_jacobi_ab(order, alpha, 0.0)
}

/// Gauss–Jacobi rule for `∫₀¹ t^alpha (1-t)^beta f(t) dt`.
pub fn gauss_jacobi_ab(order: usize, alpha: f64, beta: f64) -> Result<QuadratureRule> {
    if order == 0 {
        return Err(Error::domain("quadrature order must be at least 1"));
    }
    if !(alpha > -1.0) || !(beta > -1.0) {
        return Err(Error::domain(format!("Jacobi exponents must exceed -1, got ({alpha}, {beta})")));
    }
    let (a, b, mu0) = jacobi_recurrence(order, alpha, beta);
    let (nodes, weights) = golub_welsch(&a, &b, mu0);
    Ok(QuadratureRule { nodes, weights, domain: Domain::UnitJacobi { alpha, beta } })
}

/// Gauss–Laguerre rule for `∫₀^∞ s^gamma e^{-s} f(s) ds`. Nodes whose weight
/// underflows are dropped.
pub fn gauss_laguerre(order: usize, gamma: f64) -> Result<QuadratureRule> {
    if order == 0 {
        return Err(Error::domain("quadrature order must be at least 1"));
    }
    if !(gamma > -1.0) {
        return Err(Error::domain(format!("Laguerre exponent must exceed -1, got {gamma}")));
    }
    let a: Vec<f64> = (0..order).map(|k| 2.0 * k as f64 + gamma + 1.0).collect();
    let b: Vec<f64> = (0..order).map(|k| k as f64 * (k as f64 + gamma)).collect();
    let (nodes, weights) = golub_welsch(&a, &b, ln_gamma_pos1(gamma + 1.0).exp());
    Ok(QuadratureRule { nodes, weights, domain: Domain::SemiAxisLaguerre { gamma } })
}

/// Gauss–Legendre rule on `[lo, hi]`.
pub fn gauss_legendre(order: usize, lo: f64, hi: f64) -> Result<QuadratureRule> {
    let unit = gauss_jacobi_ab(order, 0.0, 0.0)?;
    let h = hi - lo;
    Ok(QuadratureRule {
        nodes: unit.nodes.iter().map(|t| lo + h * t).collect(),
        weights: unit.weights.iter().map(|w| h * w).collect(),
        domain: Domain::Interval { lo, hi },
    })
}

/// Rule for `∫₀¹ t^e0 f(t) dt` after the substitution `t = w^q`, which turns
/// fractional powers `t^{k/θ}` in `f` into the much smoother `w^{qk/θ}`.
pub fn graded_unit(order: usize, e0: f64, q: f64) -> Result<QuadratureRule> {
    if !(e0 > -1.0) {
        return Err(Error::domain(format!("leading exponent must exceed -1, got {e0}")));
    }
    let base = gauss_jacobi(order, q * (e0 + 1.0) - 1.0)?;
    Ok(QuadratureRule {
        nodes: base.nodes.iter().map(|w| w.powf(q)).collect(),
        weights: base.weights.iter().map(|w| q * w).collect(),
        domain: Domain::GradedUnit { e0, q },
    })
}

/// Point rule in the plane: `Σ w f(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneRule {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub weights: Vec<f64>,
}

impl PlaneRule {
    pub fn apply<F: FnMut(f64, f64) -> f64>(&self, mut f: F) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.weights.len() {
            acc += self.weights[i] * f(self.xs[i], self.ys[i]);
        }
        acc
    }
}

/// Tensor rule for `∬_{ℝ₊²} f(x,y) x^alpha y^beta e^{-(x+y)}/(x+y) dx dy` via
/// `x = s u`, `y = s(1-u)`: Laguerre in `s` (exponent `alpha+beta`) times
/// Jacobi in `u`.
pub fn simplex_quad_2d(alpha: f64, beta: f64, radial_order: usize, angular_order: usize) -> Result<PlaneRule> {
    if !(alpha > -1.0) || !(beta > -1.0) || !(alpha + beta > -1.0) {
        return Err(Error::domain(format!("simplex rule needs alpha, beta, alpha+beta > -1, got ({alpha}, {beta})")));
    }
    let rs = gauss_laguerre(radial_order, alpha + beta)?;
    let ru = gauss_jacobi_ab(angular_order, alpha, beta)?;
    let mut out = PlaneRule { xs: vec![], ys: vec![], weights: vec![] };
    for (&s, &ws) in rs.nodes.iter().zip(&rs.weights) {
        for (&u, &wu) in ru.nodes.iter().zip(&ru.weights) {
            out.xs.push(s * u);
            out.ys.push(s * (1.0 - u));
            out.weights.push(ws * wu);
        }
    }
    Ok(out)
}

/// Same integral as [`simplex_quad_2d`], but graded towards the axes and the
/// origin so that integrands with fractional powers `x^{θl}` converge
/// quickly. `order` sets both the angular and the radial resolution.
pub fn graded_simplex(alpha: f64, beta: f64, order: usize) -> Result<PlaneRule> {
    if !(alpha > -1.0) || !(beta > -1.0) || !(alpha + beta > -1.0) {
        return Err(Error::domain(format!("simplex rule needs alpha, beta, alpha+beta > -1, got ({alpha}, {beta})")));
    }
    const K: f64 = 3.0;
    const Q: f64 = 4.0;
    let ang = gauss_jacobi_ab(order, K * (alpha + 1.0) - 1.0, K * (beta + 1.0) - 1.0)?;
    let mut us = Vec::with_capacity(ang.len());
    for (&w, &wt) in ang.nodes.iter().zip(&ang.weights) {
        let (p, q) = (w.powf(K), (1.0 - w).powf(K));
        let d = p + q;
        us.push((p / d, wt * K / d.powf(alpha + beta + 2.0)));
    }
    let g = alpha + beta;
    // s in [0,1]: graded with the e^{-s} left in the integrand
    let inner = graded_unit(order, g, Q)?;
    let mut radial: Vec<(f64, f64)> = inner.nodes.iter().zip(&inner.weights).map(|(&s, &w)| (s, w * (-s).exp())).collect();
    // s in [1,∞): s = 1 + t
    let outer = gauss_laguerre(order, 0.0)?;
    for (&t, &w) in outer.nodes.iter().zip(&outer.weights) {
        let s = 1.0 + t;
        radial.push((s, w * (-1.0f64).exp() * s.powf(g)));
    }
    let mut out = PlaneRule { xs: vec![], ys: vec![], weights: vec![] };
    for &(s, ws) in &radial {
        for &(u, wu) in &us {
            out.xs.push(s * u);
            out.ys.push(s * (1.0 - u));
            out.weights.push(ws * wu);
        }
    }
    Ok(out)
}

/// `∫₀^∞ y^e0 f(y) dy` for `f` smooth on `(0,∞)` with (at least) exponential
/// decay: a graded first panel `[0, split]`, then geometrically growing
/// Gauss–Legendre panels out to `y_max`. The order doubles until two
/// successive results agree to `tol` relative, or to `noise` times
/// `∫ y^e0 |f|` when the integrand cancels.
pub fn semi_axis<F: Fn(f64) -> f64>(f: F, e0: f64, split: f64, y_max: f64, tol: f64, noise: f64) -> Result<f64> {
    let mut prev: Option<f64> = None;
    let mut order = 16;
    while order <= 512 {
        let first = graded_unit(order, e0, 4.0)?;
        let scale = split.powf(e0 + 1.0);
        let mut acc = scale * first.apply(|t| f(split * t));
        let mut mag = scale * first.apply(|t| f(split * t).abs());
        let mut lo = split;
        while lo < y_max {
            let hi = (2.0 * lo).min(y_max).max(lo + 1.0);
            let r = gauss_legendre(order, lo, hi)?;
            acc += r.apply(|y| y.powf(e0) * f(y));
            mag += r.apply(|y| (y.powf(e0) * f(y)).abs());
            lo = hi;
        }
        if let Some(p) = prev {
            if (acc - p).abs() <= (tol * acc.abs()).max(noise * mag).max(1e-300) {
                return Ok(acc);
            }
        }
        prev = Some(acc);
        order *= 2;
    }
    Err(Error::non_converged("semi-axis quadrature did not settle by order 512"))
}

/// Apply rules of doubling order until successive values agree to `tol`
/// relative (or order exceeds `max_order`).
pub fn converge_order<F: FnMut(usize) -> Result<f64>>(start: usize, max_order: usize, tol: f64, mut eval: F) -> Result<f64> {
    let mut order = start;
    let mut prev = eval(order)?;
    while order < max_order {
        order *= 2;
        let cur = eval(order)?;
        if (cur - prev).abs() <= tol * cur.abs().max(1e-300) {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::non_converged(format!("quadrature did not settle by order {max_order}")))
}

/// Tanh–sinh rule for `∫₀¹ f(t) dt`. Algebraic endpoint singularities of
/// any strength, including sums of unrelated fractional powers, only cost a
/// logarithmic factor. The step halves until two levels agree to `tol`
/// relative, or to `noise` times `∫|f|` when cancellation makes the relative
/// target meaningless (`noise` is the relative accuracy of the `f` values).
pub fn tanh_sinh<F: FnMut(f64) -> Result<f64>>(mut f: F, tol: f64, noise: f64) -> Result<f64> {
    tanh_sinh_err(|t| Ok((f(t)?, 0.0)), tol, noise)
}

/// [`tanh_sinh`] for integrands that report an absolute error bound with
/// each value: the levels may also stop once they agree to the integrated
/// bound, the accuracy the values themselves allow.
pub fn tanh_sinh_err<F: FnMut(f64) -> Result<(f64, f64)>>(mut f: F, tol: f64, noise: f64) -> Result<f64> {
    const S_MAX: f64 = 6.0;
    const MAX_LEVEL: u32 = 9;
    // t = 1/(1+e^{-π sinh s}), dt/ds = π cosh s · t(1-t)
    let mut node = |s: f64| -> Result<(f64, f64, f64)> {
        let e = (-std::f64::consts::PI * s.sinh()).exp();
        let t = 1.0 / (1.0 + e);
        let w = std::f64::consts::PI * s.cosh() * e / ((1.0 + e) * (1.0 + e));
        if t <= 0.0 || w == 0.0 || !w.is_finite() {
            return Ok((0.0, 0.0, 0.0));
        }
        let (v, err) = f(t)?;
        Ok((w * v, (w * v).abs(), w * err))
    };
    let mut h = 0.5;
    let (mut sum, mut mag, mut err) = node(0.0)?;
    let mut k = 1;
    while k as f64 * h <= S_MAX {
        for s in [k as f64 * h, -(k as f64) * h] {
            let (v, m, e) = node(s)?;
            sum += v;
            mag += m;
            err += e;
        }
        k += 1;
    }
    let mut prev = h * sum;
    for level in 1..=MAX_LEVEL {
        h *= 0.5;
        let mut k = 1;
        while k as f64 * h <= S_MAX {
            for s in [k as f64 * h, -(k as f64) * h] {
                let (v, m, e) = node(s)?;
                sum += v;
                mag += m;
                err += e;
            }
            k += 2;
        }
        let cur = h * sum;
        if level >= 2 && (cur - prev).abs() <= (tol * cur.abs()).max(noise * h * mag).max(2.0 * h * err) {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::non_converged(format!("tanh-sinh rule did not settle after {MAX_LEVEL} halvings")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tanh_sinh_mixed_powers() {
        // t^{-0.6} + t^{0.05}: two unrelated fractional exponents
        let v = tanh_sinh(|t: f64| Ok(t.powf(-0.6) + t.powf(0.05)), 1e-13, 1e-16).unwrap();
        assert!((v - (2.5 + 1.0 / 1.05)).abs() < 1e-12, "{v}");
        let v = tanh_sinh(|t: f64| Ok((3.0 * t).cos()), 1e-13, 1e-16).unwrap();
        assert!((v - 3f64.sin() / 3.0).abs() < 1e-14);
    }

    #[test]
    fn midpoint_rule() {
        let r = gauss_jacobi(1, 0.0).unwrap();
        assert!((r.nodes[0] - 0.5).abs() < 1e-15);
        assert!((r.weights[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn jacobi_exactness() {
        let r = gauss_jacobi(4, 1.25).unwrap();
        let v = r.apply(|t| t.powi(5));
        assert!((v - 1.0 / 7.25).abs() < 1e-13 / 7.25);
        for n in [1, 3, 8, 20] {
            let r = gauss_jacobi(n, 0.5).unwrap();
            assert!((r.apply(|_| 1.0) - 2.0 / 3.0).abs() < 1e-14);
        }
    }

    #[test]
    fn nodes_increase_inside_domain() {
        let r = gauss_jacobi_ab(40, -0.7, 2.5).unwrap();
        assert!(r.nodes.windows(2).all(|w| w[0] < w[1]));
        assert!(r.nodes[0] > 0.0 && *r.nodes.last().unwrap() < 1.0);
        assert!(r.weights.iter().all(|&w| w > 0.0));
        let l = gauss_laguerre(200, 0.3).unwrap();
        assert!(l.nodes.windows(2).all(|w| w[0] < w[1]) && l.nodes[0] > 0.0);
    }

    #[test]
    fn laguerre_moments() {
        let r = gauss_laguerre(12, 0.3).unwrap();
        // ∫ s^{0.3} e^{-s} s^k ds = Γ(k + 1.3)
        for k in 0..23 {
            let want = ln_gamma_pos(k as f64 + 1.3).exp();
            assert!((r.apply(|s| s.powi(k)) - want).abs() < 1e-12 * want, "k={k}");
        }
    }

    #[test]
    fn rejects_bad_exponents() {
        assert!(gauss_jacobi(4, -1.0).is_err());
        assert!(gauss_laguerre(4, -1.5).is_err());
        assert!(simplex_quad_2d(-0.6, -0.6, 8, 8).is_err());
    }

    #[test]
    fn simplex_reproduces_unit_moments() {
        let r = simplex_quad_2d(0.0, 0.0, 10, 10).unwrap();
        assert!((r.apply(|_, _| 1.0) - 1.0).abs() < 1e-14);
        let r = simplex_quad_2d(0.0, 1.0, 10, 10).unwrap();
        assert!((r.apply(|_, _| 1.0) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn graded_simplex_handles_fractional_powers() {
        // ∬ x^{a+1.5} y^{b+3} e^{-x-y}/(x+y) = Γ(a+2.5)Γ(b+4)/(a+b+5.5)
        let (a, b) = (0.3, -0.4);
        let want = (ln_gamma_pos(a + 2.5) + ln_gamma_pos(b + 4.0)).exp() / (a + b + 5.5);
        let r = graded_simplex(a, b, 48).unwrap();
        let got = r.apply(|x, y| x.powf(1.5) * y.powf(3.0));
        assert!((got - want).abs() < 1e-11 * want, "{got} {want}");
    }

    #[test]
    fn semi_axis_exponential_integral() {
        // ∫ e^{-y}/(1+y) dy = e E₁(1)
        let want = 0.596_347_362_323_194_1;
        let got = semi_axis(|y| (-y).exp() / (1.0 + y), 0.0, 1.0, 60.0, 1e-13, 0.0).unwrap();
        assert!((got - want).abs() < 1e-13);
    }

    #[test]
    fn semi_axis_noise_floor() {
        // ∫ y^{1/2} (3/2 - y) e^{-y} dy = 0: no relative target can be met
        let f = |y: f64| (1.5 - y) * (-y).exp();
        assert!(semi_axis(f, 0.5, 1.0, 60.0, 1e-13, 0.0).is_err());
        assert!(semi_axis(f, 0.5, 1.0, 60.0, 1e-13, 1e-14).unwrap().abs() < 1e-13);
    }

    proptest! {
        #[test]
        fn jacobi_integrates_polynomials(alpha in -0.9f64..4.0, beta in -0.9f64..3.0, n in 1usize..30) {
            let r = gauss_jacobi_ab(n, alpha, beta).unwrap();
            // ∫ t^{alpha+k} (1-t)^beta = B(alpha+k+1, beta+1)
            for k in [0, n, 2 * n - 1] {
                let kf = k as f64;
                let want = (ln_gamma_pos1(alpha + kf + 1.0) + ln_gamma_pos1(beta + 1.0)
                    - ln_gamma_pos1(alpha + beta + kf + 2.0)).exp();
                let got = r.apply(|t| t.powi(k as i32));
                prop_assert!((got - want).abs() <= 1e-12 * want, "k={} got={} want={}", k, got, want);
            }
        }
    }
}
