//! Christoffel–Darboux kernel `K_N` of the θ-deformed Cauchy two-matrix
//! model, the correlation kernels `K01`, `K10`, `K11`, their weighted
//! ("hatted") forms, and the hard-edge limits.
//!
//! Argument conventions: `k01(x, x')`, `k10(y, y')`, `k11(y, x)`.

use crate::ensembles::EnsembleParams;
use crate::error::{Error, Result};
use crate::foxh::{loop_grid, loop_shape, FoxValue, GEvaluator, GKind, Side};
use crate::numerics::adaptive::envelope_cutoff;
use crate::numerics::quadrature::{converge_order, gauss_jacobi, semi_axis, tanh_sinh_err, QuadratureRule};
use crate::polynomials::{p_hat, q_hat, PolySeries, MAX_DEGREE};
use num_complex::Complex64 as C;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// How `K_N(x, y)` is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CdStrategy {
    /// `Σ_{n<N} (2nθ+a+b+1) P̂_n(x^θ) Q̂_n(y^θ)`, the reference.
    Sum,
    /// `θ ∫₀¹ t^α G_{N,a}(t x^θ) G_{N,b}(t y^θ) dt`
    TIntegral,
    /// `θ ∮∮ Φ_a(u) Φ_b(v) x^{-θu} y^{-θv} / (1+α-u-v)` over two Hankel loops.
    DoubleContour,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KernelKind {
    K00,
    K01,
    K10,
    K11,
    K00Hat,
    K01Hat,
    K10Hat,
    K11Hat,
}

impl KernelKind {
    pub const ALL: [KernelKind; 8] = [
        KernelKind::K00,
        KernelKind::K01,
        KernelKind::K10,
        KernelKind::K11,
        KernelKind::K00Hat,
        KernelKind::K01Hat,
        KernelKind::K10Hat,
        KernelKind::K11Hat,
    ];

    pub fn is_hatted(self) -> bool {
        matches!(self, KernelKind::K00Hat | KernelKind::K01Hat | KernelKind::K10Hat | KernelKind::K11Hat)
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelKind::K00 => "K00",
            KernelKind::K01 => "K01",
            KernelKind::K10 => "K10",
            KernelKind::K11 => "K11",
            KernelKind::K00Hat => "K00hat",
            KernelKind::K01Hat => "K01hat",
            KernelKind::K10Hat => "K10hat",
            KernelKind::K11Hat => "K11hat",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        KernelKind::ALL.into_iter().find(|k| k.name().eq_ignore_ascii_case(s))
    }
}

/// The two independent routes to `K01`, `K10`, `K11`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Route {
    /// Semi-axis quadrature of the defining integrals against `K_N`.
    Quadrature,
    /// The `t`-integral of `G` and `G̃`.
    TIntegral,
}

const T_TOL: f64 = 1e-12;
const AXIS_TOL: f64 = 1e-13;
/// Floor for the semi-axis integrals relative to `∫|f|`: the polynomial
/// factors cancel at larger `N`.
const AXIS_NOISE: f64 = 1e-14;
/// Relative accuracy of the `G̃` values; bounds what the `t`-integrals can
/// resolve once the integrand cancels (large arguments, where the kernels
/// are `O(e^{-x})` but the integrand is not).
const G_NOISE: f64 = 1e-13;
/// Above this exponent the production path leaves the `t`-integral.
const CANCEL_LEVER: f64 = 10.0;

/// Fixed numerical settings of the kernel routes, for output metadata.
#[derive(Debug, Clone, Serialize)]
pub struct NumericalSettings {
    pub t_integral_tol: f64,
    pub t_integral_noise: f64,
    pub semi_axis_tol: f64,
    pub semi_axis_noise: f64,
    pub cancel_lever: f64,
    /// `K00` `t`-integral at finite `N`: Gauss–Jacobi of this order (exact).
    pub k00_gauss_jacobi_order: &'static str,
    pub max_polynomial_degree: usize,
}

pub fn numerical_settings() -> NumericalSettings {
    NumericalSettings {
        t_integral_tol: T_TOL,
        t_integral_noise: G_NOISE,
        semi_axis_tol: AXIS_TOL,
        semi_axis_noise: AXIS_NOISE,
        cancel_lever: CANCEL_LEVER,
        k00_gauss_jacobi_order: "N + 1",
        max_polynomial_degree: MAX_DEGREE,
    }
}

fn check_point(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::domain(format!("{name} must be positive and finite, got {v}")));
    }
    Ok(())
}

fn check_sum(x: f64, y: f64) -> Result<()> {
    if x + y < 1e-12 {
        return Err(Error::SingularPoint(format!("x + y = {} is at the 1/(x+y) singularity", x + y)));
    }
    Ok(())
}

/// `w·u·v` with the first-order propagated error.
fn product(w: f64, u: FoxValue, v: FoxValue) -> Result<(f64, f64)> {
    Ok((w * u.value * v.value, w.abs() * (u.value.abs() * v.est_error + v.value.abs() * u.est_error)))
}

fn apply_fallible<F: Fn(f64) -> Result<f64>>(rule: &QuadratureRule, f: F) -> Result<f64> {
    let mut acc = 0.0;
    for (t, w) in rule.nodes.iter().zip(&rule.weights) {
        acc += w * f(*t)?;
    }
    Ok(acc)
}

/// The four kernel functions `G_a, G_b, G̃_a, G̃_b` at one parameter point,
/// finite-`N` or limiting, and the `t`-integrals built from them.
#[derive(Debug, Clone)]
struct GFour {
    a: f64,
    b: f64,
    theta: f64,
    alpha: f64,
    /// `Some(N)` for the polynomial `G_N` (exact Gauss–Jacobi order).
    n: Option<usize>,
    ga: GEvaluator,
    gb: GEvaluator,
    gta: GEvaluator,
    gtb: GEvaluator,
}

impl GFour {
    fn finite(p: &EnsembleParams) -> Result<Self> {
        Ok(GFour {
            a: p.a,
            b: p.b,
            theta: p.theta,
            alpha: p.alpha(),
            n: Some(p.n),
            ga: GEvaluator::for_side(p, Side::A, GKind::GN)?,
            gb: GEvaluator::for_side(p, Side::B, GKind::GN)?,
            gta: GEvaluator::for_side(p, Side::A, GKind::GTildeN)?,
            gtb: GEvaluator::for_side(p, Side::B, GKind::GTildeN)?,
        })
    }

    fn limit(a: f64, b: f64, theta: f64) -> Result<Self> {
        // same validation as a finite ensemble; N plays no role
        let p = EnsembleParams::new(a, b, theta, 1)?;
        let al = p.alpha();
        Ok(GFour {
            a,
            b,
            theta,
            alpha: al,
            n: None,
            ga: GEvaluator::g_inf(a, al, theta)?,
            gb: GEvaluator::g_inf(b, al, theta)?,
            gta: GEvaluator::g_tilde_inf(a, al, theta)?,
            gtb: GEvaluator::g_tilde_inf(b, al, theta)?,
        })
    }

    /// `θ ∫₀¹ t^α G_a(t x^θ) G_b(t y^θ) dt`
    fn s00(&self, x: f64, y: f64) -> Result<f64> {
        let (zx, zy) = (x.powf(self.theta), y.powf(self.theta));
        let f = |t: f64| Ok(self.ga.value(t * zx)? * self.gb.value(t * zy)?);
        let v = match self.n {
            // polynomial of degree 2N-2 in t: exact
            Some(n) => apply_fallible(&gauss_jacobi(n + 1, self.alpha)?, f)?,
            None => converge_order(16, 1024, T_TOL, |o| apply_fallible(&gauss_jacobi(o, self.alpha)?, f))?,
        };
        Ok(self.theta * v)
    }

    /// `θ ∫₀¹ t^α G_a(t x^θ) G̃_b(t x'^θ) dt`. The `G̃` factors are
    /// evaluated as `z^σ G̃(z)`, with `t^{-σ}` moved into the weight, so
    /// the tanh–sinh nodes near `t = 0` stay finite. Each node carries the
    /// error estimates of its two factors.
    fn s01(&self, x: f64, xp: f64) -> Result<f64> {
        let (zx, zp) = (x.powf(self.theta), xp.powf(self.theta));
        let sb = self.gtb.singular_power();
        let f = |t: f64| product(t.powf(self.alpha - sb), self.ga.eval(t * zx)?, self.gtb.eval_scaled(t * zp, sb)?);
        Ok(self.theta * zp.powf(-sb) * tanh_sinh_err(f, T_TOL, G_NOISE)?)
    }

    /// `θ ∫₀¹ t^α G̃_a(t y^θ) G_b(t y'^θ) dt`
    fn s10(&self, y: f64, yp: f64) -> Result<f64> {
        let (zy, zp) = (y.powf(self.theta), yp.powf(self.theta));
        let sa = self.gta.singular_power();
        let f = |t: f64| product(t.powf(self.alpha - sa), self.gta.eval_scaled(t * zy, sa)?, self.gb.eval(t * zp)?);
        Ok(self.theta * zy.powf(-sa) * tanh_sinh_err(f, T_TOL, G_NOISE)?)
    }

    /// `θ ∫₀¹ t^α G̃_a(t y^θ) G̃_b(t x^θ) dt`
    fn s11(&self, y: f64, x: f64) -> Result<f64> {
        let (zy, zx) = (y.powf(self.theta), x.powf(self.theta));
        let (sa, sb) = (self.gta.singular_power(), self.gtb.singular_power());
        let f = |t: f64| product(t.powf(self.alpha - sa - sb), self.gta.eval_scaled(t * zy, sa)?, self.gtb.eval_scaled(t * zx, sb)?);
        Ok(self.theta * zy.powf(-sa) * zx.powf(-sb) * tanh_sinh_err(f, T_TOL, G_NOISE)?)
    }

    /// Kernel of either family from the smooth parts. For the limit the
    /// exponential factors are dropped (they tend to 1 under the scaling).
    fn kernel(&self, kind: KernelKind, p1: f64, p2: f64) -> Result<f64> {
        check_point("first argument", p1)?;
        check_point("second argument", p2)?;
        let (a, b) = (self.a, self.b);
        let expo = |s: f64| if self.n.is_some() { s.exp() } else { 1.0 };
        match kind {
            KernelKind::K00 | KernelKind::K00Hat => self.s00(p1, p2),
            KernelKind::K01 => Ok(expo(p2) * p2.powf(b) * self.s01(p1, p2)?),
            KernelKind::K01Hat => Ok(p2.powf(a + b) * self.s01(p1, p2)?),
            KernelKind::K10 => Ok(expo(p1) * p1.powf(a) * self.s10(p1, p2)?),
            KernelKind::K10Hat => Ok(p1.powf(a + b) * self.s10(p1, p2)?),
            KernelKind::K11 => {
                let (y, x) = (p1, p2);
                check_sum(x, y)?;
                let e = expo(x + y);
                Ok(e * (x.powf(b) * y.powf(a) * self.s11(y, x)? - 1.0 / (x + y)))
            }
            KernelKind::K11Hat => {
                let (y, x) = (p1, p2);
                check_sum(x, y)?;
                Ok((x * y).powf(a + b) * self.s11(y, x)? - x.powf(a) * y.powf(b) / (x + y))
            }
        }
    }
}

/// All kernels of one finite ensemble, with the polynomial and `G` tables
/// built once.
#[derive(Debug, Clone)]
pub struct KernelSet {
    pub params: EnsembleParams,
    g: GFour,
    /// `(2nθ+a+b+1) P̂_n` and `Q̂_n` for `n < N`, when `N ≤ MAX_DEGREE`.
    polys: Option<(Vec<PolySeries>, Vec<PolySeries>)>,
}

impl KernelSet {
    pub fn new(params: EnsembleParams) -> Result<Self> {
        params.validate()?;
        let polys = if params.n <= MAX_DEGREE {
            let mut ps = vec![];
            let mut qs = vec![];
            for n in 0..params.n {
                let w = 2.0 * n as f64 * params.theta + params.a + params.b + 1.0;
                ps.push(p_hat(&params, n)?.scale(w));
                qs.push(q_hat(&params, n)?);
            }
            Some((ps, qs))
        } else {
            None
        };
        Ok(KernelSet { params, g: GFour::finite(&params)?, polys })
    }

    fn polys(&self) -> Result<&(Vec<PolySeries>, Vec<PolySeries>)> {
        self.polys.as_ref().ok_or_else(|| Error::domain(format!("the polynomial sum needs N <= {MAX_DEGREE}, got {}", self.params.n)))
    }

    pub fn cd(&self, x: f64, y: f64, strategy: CdStrategy) -> Result<f64> {
        check_point("x", x)?;
        check_point("y", y)?;
        match strategy {
            CdStrategy::Sum => {
                let (ps, qs) = self.polys()?;
                let th = self.params.theta;
                Ok(ps.iter().zip(qs).map(|(p, q)| p.eval_x(x, th) * q.eval_x(y, th)).sum())
            }
            CdStrategy::TIntegral => self.g.s00(x, y),
            CdStrategy::DoubleContour => self.cd_contour(x, y),
        }
    }

    fn cd_contour(&self, x: f64, y: f64) -> Result<f64> {
        let al = self.params.alpha();
        let th = self.params.theta;
        // Re(u + v) <= 2c < 1 + α keeps 1/(1+α-u-v) off both loops
        let c = 0.5f64.min((1.0 + al) / 4.0);
        let (lx, ly) = (th * x.ln(), th * y.ln());
        let (lam_x, hx) = loop_shape(&self.g.ga, c, lx);
        let (lam_y, hy) = loop_shape(&self.g.gb, c, ly);
        let mut prev: Option<f64> = None;
        for k in 0..12 {
            let f = 0.5f64.powi(k);
            let gx = loop_grid(&self.g.ga, c, lam_x, hx * f, lx, 0.0);
            let gy = loop_grid(&self.g.gb, c, lam_y, hy * f, ly, 0.0);
            let mut acc = C::new(0.0, 0.0);
            let mut mag = 0.0;
            for (u, wu) in gx.s.iter().zip(&gx.w) {
                for (v, wv) in gy.s.iter().zip(&gy.w) {
                    let term = wu * wv / (1.0 + al - u - v);
                    acc += term;
                    mag += term.norm();
                }
            }
            let val = th * acc.re;
            if let Some(p) = prev {
                if (val - p).abs() <= 1e-13 * th * mag {
                    return Ok(val);
                }
            }
            prev = Some(val);
        }
        Err(Error::non_converged("double contour did not settle after 12 halvings"))
    }

    fn axis_cutoff(&self, e: f64) -> f64 {
        envelope_cutoff(e + self.params.theta * (self.params.n as f64 - 1.0), 1e-18)
    }

    /// Route (i) of `K01(x, x') = ∫ K_N(x, y) y^b e^{-y} / (x'+y) dy`.
    fn k01_quad(&self, x: f64, xp: f64) -> Result<f64> {
        let (ps, qs) = self.polys()?;
        let th = self.params.theta;
        let px: Vec<f64> = ps.iter().map(|p| p.eval_x(x, th)).collect();
        let f = |y: f64| {
            let k: f64 = px.iter().zip(qs).map(|(p, q)| p * q.eval_x(y, th)).sum();
            k * (-y).exp() / (xp + y)
        };
        semi_axis(f, self.params.b, xp, self.axis_cutoff(self.params.b).max(2.0 * xp), AXIS_TOL, AXIS_NOISE)
    }

    /// Route (i) of `K10(y, y') = ∫ K_N(x, y') x^a e^{-x} / (x+y) dx`.
    fn k10_quad(&self, y: f64, yp: f64) -> Result<f64> {
        let (ps, qs) = self.polys()?;
        let th = self.params.theta;
        let qy: Vec<f64> = qs.iter().map(|q| q.eval_x(yp, th)).collect();
        let f = |x: f64| {
            let k: f64 = ps.iter().zip(&qy).map(|(p, q)| p.eval_x(x, th) * q).sum();
            k * (-x).exp() / (x + y)
        };
        semi_axis(f, self.params.a, y, self.axis_cutoff(self.params.a).max(2.0 * y), AXIS_TOL, AXIS_NOISE)
    }

    /// Route (i) of `K11(y, x)`: the double integral separates into
    /// `Σ_n (2nθ+a+b+1) A_n(y) B_n(x)` with one-dimensional factors.
    fn k11_quad(&self, y: f64, x: f64) -> Result<f64> {
        check_sum(x, y)?;
        let (ps, qs) = self.polys()?;
        let (a, b, th) = (self.params.a, self.params.b, self.params.theta);
        let mut acc = 0.0;
        for (p, q) in ps.iter().zip(qs) {
            let an = semi_axis(|s| p.eval_x(s, th) * (-s).exp() / (s + y), a, y, self.axis_cutoff(a).max(2.0 * y), AXIS_TOL, AXIS_NOISE)?;
            let bn = semi_axis(|s| q.eval_x(s, th) * (-s).exp() / (x + s), b, x, self.axis_cutoff(b).max(2.0 * x), AXIS_TOL, AXIS_NOISE)?;
            acc += an * bn;
        }
        Ok(acc - 1.0 / (x + y))
    }

    pub fn k01(&self, x: f64, xp: f64, route: Route) -> Result<f64> {
        match route {
            Route::TIntegral => self.g.kernel(KernelKind::K01, x, xp),
            Route::Quadrature => {
                check_point("x", x)?;
                check_point("x'", xp)?;
                self.k01_quad(x, xp)
            }
        }
    }

    pub fn k10(&self, y: f64, yp: f64, route: Route) -> Result<f64> {
        match route {
            Route::TIntegral => self.g.kernel(KernelKind::K10, y, yp),
            Route::Quadrature => {
                check_point("y", y)?;
                check_point("y'", yp)?;
                self.k10_quad(y, yp)
            }
        }
    }

    pub fn k11(&self, y: f64, x: f64, route: Route) -> Result<f64> {
        match route {
            Route::TIntegral => self.g.kernel(KernelKind::K11, y, x),
            Route::Quadrature => {
                check_point("y", y)?;
                check_point("x", x)?;
                self.k11_quad(y, x)
            }
        }
    }

    /// Any kind by the production route: the sum for `K00` when available
    /// (`t`-integral otherwise); the `t`-integral for `K01/K10/K11` and
    /// their hatted forms, except where its integrand cancels by a factor
    /// `e^{x'}` (resp. `e^y`, `e^{x+y}`) above `e^{10}` and the polynomial
    /// tables exist: there the quadrature route is better conditioned.
    pub fn kernel(&self, kind: KernelKind, p1: f64, p2: f64) -> Result<f64> {
        let lever = match kind {
            KernelKind::K00 | KernelKind::K00Hat => {
                let s = if self.polys.is_some() { CdStrategy::Sum } else { CdStrategy::TIntegral };
                return self.cd(p1, p2, s);
            }
            KernelKind::K01 | KernelKind::K01Hat => p2,
            KernelKind::K10 | KernelKind::K10Hat => p1,
            KernelKind::K11 | KernelKind::K11Hat => p1 + p2,
        };
        if self.polys.is_none() || lever <= CANCEL_LEVER {
            return self.g.kernel(kind, p1, p2);
        }
        match kind {
            KernelKind::K01 => self.k01(p1, p2, Route::Quadrature),
            KernelKind::K10 => self.k10(p1, p2, Route::Quadrature),
            KernelKind::K11 => self.k11(p1, p2, Route::Quadrature),
            _ => self.hatted(kind, p1, p2, Route::Quadrature),
        }
    }

    /// The route [`kernel`](Self::kernel) does not take, for cross-checks:
    /// the `t`-integral (or the double contour past the polynomial tables)
    /// for `K00`, the other of the two routes otherwise.
    pub fn oracle(&self, kind: KernelKind, p1: f64, p2: f64) -> Result<f64> {
        let lever = match kind {
            KernelKind::K00 | KernelKind::K00Hat => {
                let s = if self.polys.is_some() { CdStrategy::TIntegral } else { CdStrategy::DoubleContour };
                return self.cd(p1, p2, s);
            }
            KernelKind::K01 | KernelKind::K01Hat => p2,
            KernelKind::K10 | KernelKind::K10Hat => p1,
            KernelKind::K11 | KernelKind::K11Hat => p1 + p2,
        };
        self.polys()?;
        let route = if lever <= CANCEL_LEVER { Route::Quadrature } else { Route::TIntegral };
        match kind {
            KernelKind::K01 => self.k01(p1, p2, route),
            KernelKind::K10 => self.k10(p1, p2, route),
            KernelKind::K11 => self.k11(p1, p2, route),
            _ => self.hatted(kind, p1, p2, route),
        }
    }

    /// Hatted kernel via the chosen route. The quadrature route applies the
    /// weight factor to the unhatted value.
    pub fn hatted(&self, kind: KernelKind, p1: f64, p2: f64, route: Route) -> Result<f64> {
        let (a, b) = (self.params.a, self.params.b);
        match (route, kind) {
            (Route::TIntegral, KernelKind::K00 | KernelKind::K00Hat) => self.kernel(KernelKind::K00, p1, p2),
            (Route::TIntegral, _) => self.g.kernel(hat_of(kind), p1, p2),
            (Route::Quadrature, KernelKind::K00 | KernelKind::K00Hat) => self.kernel(KernelKind::K00, p1, p2),
            (Route::Quadrature, KernelKind::K01 | KernelKind::K01Hat) => Ok((-p2).exp() * p2.powf(a) * self.k01(p1, p2, route)?),
            (Route::Quadrature, KernelKind::K10 | KernelKind::K10Hat) => Ok((-p1).exp() * p1.powf(b) * self.k10(p1, p2, route)?),
            (Route::Quadrature, KernelKind::K11 | KernelKind::K11Hat) => {
                let (y, x) = (p1, p2);
                Ok((-(x + y)).exp() * x.powf(a) * y.powf(b) * self.k11(y, x, route)?)
            }
        }
    }

    /// `N^{-p} K(X N^{-2/θ}, Y N^{-2/θ})` with the exponent `p` of
    /// [`hard_edge_power`]; tends to [`hard_edge_kernel`].
    pub fn scaled(&self, kind: KernelKind, xs: f64, ys: f64) -> Result<f64> {
        let p = &self.params;
        let nf = p.n as f64;
        let s = nf.powf(-2.0 / p.theta);
        let v = match kind {
            KernelKind::K00 | KernelKind::K00Hat => self.g.s00(xs * s, ys * s)?,
            _ => self.g.kernel(kind, xs * s, ys * s)?,
        };
        Ok(v * nf.powf(-hard_edge_power(p.a, p.b, p.theta, kind)))
    }
}

fn hat_of(kind: KernelKind) -> KernelKind {
    match kind {
        KernelKind::K00 | KernelKind::K00Hat => KernelKind::K00Hat,
        KernelKind::K01 | KernelKind::K01Hat => KernelKind::K01Hat,
        KernelKind::K10 | KernelKind::K10Hat => KernelKind::K10Hat,
        KernelKind::K11 | KernelKind::K11Hat => KernelKind::K11Hat,
    }
}

/// Exponent `p` with `N^{-p} K(X N^{-2/θ}, Y N^{-2/θ}) → K^∞(X, Y)`.
/// For `K11` this is the exponent of the smooth part and of the subtracted
/// pole alike, `2/θ`; [`fit_k11_exponent`] measures it.
pub fn hard_edge_power(a: f64, b: f64, theta: f64, kind: KernelKind) -> f64 {
    let alpha = (a + b + 1.0) / theta - 1.0;
    match kind {
        KernelKind::K00 | KernelKind::K00Hat => 2.0 * (alpha + 1.0),
        KernelKind::K01 => (2.0 + 2.0 * a) / theta,
        KernelKind::K10 => (2.0 + 2.0 * b) / theta,
        KernelKind::K11 => 2.0 / theta,
        KernelKind::K01Hat | KernelKind::K10Hat => 2.0 / theta,
        KernelKind::K11Hat => (2.0 - 2.0 * (a + b)) / theta,
    }
}

pub fn cd_kernel(params: &EnsembleParams, x: f64, y: f64, strategy: CdStrategy) -> Result<f64> {
    KernelSet::new(*params)?.cd(x, y, strategy)
}

pub fn k01(params: &EnsembleParams, x: f64, xp: f64) -> Result<f64> {
    KernelSet::new(*params)?.kernel(KernelKind::K01, x, xp)
}

pub fn k10(params: &EnsembleParams, y: f64, yp: f64) -> Result<f64> {
    KernelSet::new(*params)?.kernel(KernelKind::K10, y, yp)
}

/// `K11(y, x)`, including the `-1/(x+y)` subtraction.
pub fn k11(params: &EnsembleParams, y: f64, x: f64) -> Result<f64> {
    KernelSet::new(*params)?.kernel(KernelKind::K11, y, x)
}

pub fn hatted(params: &EnsembleParams, kind: KernelKind, pt1: f64, pt2: f64) -> Result<f64> {
    KernelSet::new(*params)?.kernel(hat_of(kind), pt1, pt2)
}

/// Limits at the hard edge, built from `G_∞` and `G̃_∞`.
#[derive(Debug, Clone)]
pub struct HardEdgeKernels {
    g: GFour,
}

impl HardEdgeKernels {
    pub fn new(a: f64, b: f64, theta: f64) -> Result<Self> {
        Ok(HardEdgeKernels { g: GFour::limit(a, b, theta)? })
    }

    /// `K00: θ∫t^α G_∞,a G_∞,b`; `K01: θX'^b∫t^α G_∞,a G̃_∞,b`;
    /// `K10: θY^a∫t^α G̃_∞,a G_∞,b`; `K11: θX^bY^a∫t^α G̃_∞,a G̃_∞,b − 1/(X+Y)`.
    /// Hatted kinds carry the extra powers `X'^a`, `Y^b`, `X^aY^b`.
    pub fn kernel(&self, kind: KernelKind, p1: f64, p2: f64) -> Result<f64> {
        self.g.kernel(kind, p1, p2)
    }
}

pub fn hard_edge_kernel(a: f64, b: f64, theta: f64, kind: KernelKind, x: f64, y: f64) -> Result<f64> {
    HardEdgeKernels::new(a, b, theta)?.kernel(kind, x, y)
}

/// Least-squares slope of `ln|K11|` against `ln N` for the unscaled
/// kernel at `(Y N^{-2/θ}, X N^{-2/θ})`.
pub fn fit_k11_exponent(a: f64, b: f64, theta: f64, y: f64, x: f64, ns: &[usize]) -> Result<f64> {
    let mut pts = vec![];
    for &n in ns {
        let p = EnsembleParams::new(a, b, theta, n)?;
        let s = (n as f64).powf(-2.0 / theta);
        let v = KernelSet::new(p)?.g.kernel(KernelKind::K11, y * s, x * s)?;
        pts.push(((n as f64).ln(), v.abs().ln()));
    }
    let m = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / m, pts.iter().map(|p| p.1).sum::<f64>() / m);
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GridKind {
    Finite(KernelKind),
    HardEdge(KernelKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GridParams {
    Finite(EnsembleParams),
    HardEdge { a: f64, b: f64, theta: f64 },
}

/// N-power bookkeeping: a hard-edge grid holds the limit of
/// `N^{-n_power} K(X N^{-arg_power}, Y N^{-arg_power})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub n_power: f64,
    pub arg_power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelGrid {
    pub kind: GridKind,
    pub params: GridParams,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Row-major, `values[i][j]` at `(xs[i], ys[j])`.
    pub values: Vec<Vec<f64>>,
    pub scaling: Option<Scaling>,
    /// Second-route values, same layout as `values`; see [`KernelGrid::attach_oracle`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<Vec<Vec<f64>>>,
}

fn check_axis(name: &str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::domain(format!("{name} is empty")));
    }
    for w in v.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::domain(format!("{name} must be strictly increasing")));
        }
    }
    if !(v[0] > 0.0) || !v[v.len() - 1].is_finite() {
        return Err(Error::domain(format!("{name} must be positive and finite")));
    }
    Ok(())
}

impl KernelGrid {
    /// Evaluate in parallel; the result order does not depend on scheduling.
    pub fn compute(kind: GridKind, params: GridParams, xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        check_axis("xs", &xs)?;
        check_axis("ys", &ys)?;
        let eval: Box<dyn Fn(f64, f64) -> Result<f64> + Sync> = match (kind, params) {
            (GridKind::Finite(k), GridParams::Finite(p)) => {
                let set = KernelSet::new(p)?;
                Box::new(move |x, y| set.kernel(k, x, y))
            }
            (GridKind::HardEdge(k), GridParams::HardEdge { a, b, theta }) => {
                let he = HardEdgeKernels::new(a, b, theta)?;
                Box::new(move |x, y| he.kernel(k, x, y))
            }
            _ => return Err(Error::domain("grid kind and parameters disagree (finite vs hard edge)")),
        };
        let ny = ys.len();
        let flat = (0..xs.len() * ny)
            .into_par_iter()
            .map(|ij| {
                let v = eval(xs[ij / ny], ys[ij % ny])?;
                if !v.is_finite() {
                    return Err(Error::non_converged(format!("non-finite value at ({}, {})", xs[ij / ny], ys[ij % ny])));
                }
                Ok(v)
            })
            .collect::<Result<Vec<f64>>>()?;
        let values = flat.chunks(ny).map(|r| r.to_vec()).collect();
        let scaling = match (kind, params) {
            (GridKind::HardEdge(k), GridParams::HardEdge { a, b, theta }) => {
                Some(Scaling { n_power: hard_edge_power(a, b, theta, k), arg_power: 2.0 / theta })
            }
            _ => None,
        };
        Ok(KernelGrid { kind, params, xs, ys, values, scaling, oracle: None })
    }

    /// Fill [`oracle`](Self::oracle) by the independent route: [`KernelSet::oracle`]
    /// for a finite grid; for a hard-edge grid, the finite-`N` scaled kernel
    /// ([`KernelSet::scaled`]) at `n_ref`, which only approaches the limit.
    pub fn attach_oracle(&mut self, n_ref: usize) -> Result<()> {
        let eval: Box<dyn Fn(f64, f64) -> Result<f64> + Sync> = match (self.kind, self.params) {
            (GridKind::Finite(k), GridParams::Finite(p)) => {
                let set = KernelSet::new(p)?;
                Box::new(move |x, y| set.oracle(k, x, y))
            }
            (GridKind::HardEdge(k), GridParams::HardEdge { a, b, theta }) => {
                let set = KernelSet::new(EnsembleParams::new(a, b, theta, n_ref)?)?;
                Box::new(move |x, y| set.scaled(k, x, y))
            }
            _ => return Err(Error::domain("grid kind and parameters disagree (finite vs hard edge)")),
        };
        let ny = self.ys.len();
        let (xs, ys) = (&self.xs, &self.ys);
        let flat = (0..xs.len() * ny).into_par_iter().map(|ij| eval(xs[ij / ny], ys[ij % ny])).collect::<Result<Vec<f64>>>()?;
        self.oracle = Some(flat.chunks(ny).map(|r| r.to_vec()).collect());
        Ok(())
    }

    /// `x,y,value[,oracle,discrepancy]` rows, shortest round-trip decimals.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(vec![]);
        let mut out = || -> std::result::Result<(), csv::Error> {
            if self.oracle.is_some() {
                w.write_record(["x", "y", "value", "oracle", "discrepancy"])?;
            } else {
                w.write_record(["x", "y", "value"])?;
            }
            for (i, x) in self.xs.iter().enumerate() {
                for (j, y) in self.ys.iter().enumerate() {
                    let v = self.values[i][j];
                    let mut row = vec![x.to_string(), y.to_string(), v.to_string()];
                    if let Some(o) = &self.oracle {
                        row.push(o[i][j].to_string());
                        row.push((v - o[i][j]).abs().to_string());
                    }
                    w.write_record(&row)?;
                }
            }
            Ok(())
        };
        out().expect("writing to memory cannot fail");
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ASCII output")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("grid is plain data")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::quadrature::graded_simplex;
    use crate::numerics::rel_err;
    use proptest::prelude::*;

    fn ens(a: f64, b: f64, th: f64, n: usize) -> EnsembleParams {
        EnsembleParams::new(a, b, th, n).unwrap()
    }

    /// `E₁(x)` from its power series (x ≤ 2 here).
    fn e1(x: f64) -> f64 {
        let gamma_e = 0.577_215_664_901_532_9;
        let mut term = 1.0;
        let mut acc = 0.0;
        for k in 1..60 {
            term *= -x / k as f64;
            acc -= term / k as f64;
        }
        -gamma_e - x.ln() + acc
    }

    #[test]
    fn trivial_one_point_kernel() {
        let ks = KernelSet::new(ens(0.0, 0.0, 1.0, 1)).unwrap();
        for &(x, y) in &[(0.1, 0.2), (1.0, 3.0), (7.0, 0.4)] {
            for s in [CdStrategy::Sum, CdStrategy::TIntegral, CdStrategy::DoubleContour] {
                assert!((ks.cd(x, y, s).unwrap() - 1.0).abs() < 1e-10, "{s:?}");
            }
        }
    }

    #[test]
    fn strategies_agree() {
        let ks = KernelSet::new(ens(0.0, 0.0, 1.0, 2)).unwrap();
        let s = ks.cd(0.7, 1.3, CdStrategy::Sum).unwrap();
        assert!(rel_err(ks.cd(0.7, 1.3, CdStrategy::TIntegral).unwrap(), s) < 1e-9);
        let ks = KernelSet::new(ens(0.4, 0.9, 1.5, 3)).unwrap();
        let s = ks.cd(1.0, 2.0, CdStrategy::Sum).unwrap();
        assert!(rel_err(ks.cd(1.0, 2.0, CdStrategy::DoubleContour).unwrap(), s) < 1e-7);
        assert!(rel_err(ks.cd(1.0, 2.0, CdStrategy::TIntegral).unwrap(), s) < 1e-10);
    }

    #[test]
    fn exponential_integral_oracle() {
        // N = 1, a = b = 0, θ = 1: K01(x, x') = e^{x'} E₁(x')
        let ks = KernelSet::new(ens(0.0, 0.0, 1.0, 1)).unwrap();
        let want = 1f64.exp() * e1(1.0);
        assert!((want - 0.596_347_362_323_194).abs() < 1e-14);
        for r in [Route::Quadrature, Route::TIntegral] {
            assert!(rel_err(ks.k01(0.6, 1.0, r).unwrap(), want) < 1e-9, "{r:?}");
        }
    }

    #[test]
    fn k10_reference_value() {
        // frozen from an independent high-precision evaluation of the defining integral
        let ks = KernelSet::new(ens(0.3, 1.3, 1.5, 2)).unwrap();
        let want = 3.295_026_488_766_689;
        assert!(rel_err(ks.k10(0.5, 0.8, Route::Quadrature).unwrap(), want) < 1e-10);
        assert!(rel_err(ks.k10(0.5, 0.8, Route::TIntegral).unwrap(), want) < 1e-9);
    }

    #[test]
    fn k11_cancelling_reference() {
        // K11 ≈ 1e-5 against a 1/(x+y) = 0.125 subtraction; frozen from a
        // 40-digit evaluation of the defining integral. The t-integral route
        // carries e^{x+y} cancellation here, the semi-axis route does not.
        let ks = KernelSet::new(ens(0.4, 0.2, 1.5, 5)).unwrap();
        let want = -7.014_066_627_901_353e-6;
        assert!(rel_err(ks.k11(4.0, 4.0, Route::Quadrature).unwrap(), want) < 1e-9);
        assert!(rel_err(ks.k11(4.0, 4.0, Route::TIntegral).unwrap(), want) < 1e-5);
        let ks = KernelSet::new(ens(0.0, 0.0, 1.0, 5)).unwrap();
        assert!(rel_err(ks.k11(4.0, 4.0, Route::Quadrature).unwrap(), -3.239_139_774_236_958e-5) < 1e-9);
    }

    #[test]
    fn routes_agree() {
        let ks = KernelSet::new(ens(0.3, 1.3, 1.5, 2)).unwrap();
        let (x, xp) = (0.5, 0.8);
        assert!(rel_err(ks.k01(x, xp, Route::Quadrature).unwrap(), ks.k01(x, xp, Route::TIntegral).unwrap()) < 1e-8);
        assert!(rel_err(ks.k11(x, xp, Route::Quadrature).unwrap(), ks.k11(x, xp, Route::TIntegral).unwrap()) < 1e-8);
        let ks = KernelSet::new(ens(0.5, 0.2, 2.0, 3)).unwrap();
        for &(u, v) in &[(0.3, 1.7), (2.0, 0.9)] {
            for (q, t) in [
                (ks.k01(u, v, Route::Quadrature), ks.k01(u, v, Route::TIntegral)),
                (ks.k10(u, v, Route::Quadrature), ks.k10(u, v, Route::TIntegral)),
                (ks.k11(u, v, Route::Quadrature), ks.k11(u, v, Route::TIntegral)),
            ] {
                assert!(rel_err(q.unwrap(), t.unwrap()) < 1e-8);
            }
        }
    }

    #[test]
    fn k11_regular_on_diagonal() {
        let ks = KernelSet::new(ens(0.3, 0.6, 1.5, 2)).unwrap();
        assert!(ks.k11(1.0, 1.0, Route::TIntegral).unwrap().is_finite());
        assert!(matches!(ks.g.kernel(KernelKind::K11, 1e-13, 1e-13), Err(Error::SingularPoint(_))));
    }

    #[test]
    fn hatted_relations() {
        let p = ens(0.3, 0.7, 1.5, 3);
        let ks = KernelSet::new(p).unwrap();
        let (a, b) = (p.a, p.b);
        let pts = [(0.2, 0.9), (1.4, 0.3), (2.2, 2.9), (0.6, 0.6), (3.1, 1.2)];
        for &(u, v) in &pts {
            assert_eq!(ks.kernel(KernelKind::K00Hat, u, v).unwrap(), ks.kernel(KernelKind::K00, u, v).unwrap());
        }
        let (x, xp) = (0.7, 1.9);
        let r = ks.kernel(KernelKind::K01Hat, x, xp).unwrap() / ks.kernel(KernelKind::K01, x, xp).unwrap();
        assert!(rel_err(r, (-xp).exp() * xp.powf(a)) < 1e-13);
        let r = ks.kernel(KernelKind::K10Hat, x, xp).unwrap() / ks.kernel(KernelKind::K10, x, xp).unwrap();
        assert!(rel_err(r, (-x).exp() * x.powf(b)) < 1e-13);
        // (r, s) = (1, 1) block: det of hatted = weight × det of unhatted
        let (x, y) = (0.8, 1.4);
        let k = |kind, u, v| ks.kernel(kind, u, v).unwrap();
        let hat = k(KernelKind::K01Hat, x, x) * k(KernelKind::K10Hat, y, y) - k(KernelKind::K00Hat, x, y) * k(KernelKind::K11Hat, y, x);
        let raw = k(KernelKind::K01, x, x) * k(KernelKind::K10, y, y) - k(KernelKind::K00, x, y) * k(KernelKind::K11, y, x);
        let w = x.powf(a) * y.powf(b) * (-x - y).exp();
        assert!(rel_err(hat, w * raw) < 1e-10);
        // the quadrature route applies the same weights
        assert!(rel_err(ks.hatted(KernelKind::K11Hat, y, x, Route::Quadrature).unwrap(), k(KernelKind::K11Hat, y, x)) < 1e-8);
    }

    #[test]
    fn trace_and_reproducing() {
        for &(a, b, th) in &[(0.0, 0.0, 1.0), (0.4, 0.2, 1.5)] {
            let rule = graded_simplex(a, b, 64).unwrap();
            for n in 1..=3 {
                let ks = KernelSet::new(ens(a, b, th, n)).unwrap();
                let k = |x: f64, y: f64| ks.cd(x, y, CdStrategy::Sum).unwrap();
                let tr = rule.apply(k);
                assert!((tr - n as f64).abs() < 1e-7 * n as f64, "trace {tr} for N = {n}");
                for &(x, y) in &[(0.5, 1.5), (2.0, 0.3)] {
                    // the rule carries w^a z^b e^{-w-z}/(w+z)
                    let rep = rule.apply(|w, z| k(x, z) * k(w, y));
                    assert!(rel_err(rep, k(x, y)) < 1e-6);
                }
            }
        }
    }

    #[test]
    fn hard_edge_properties() {
        let h = HardEdgeKernels::new(0.3, 0.8, 1.5).unwrap();
        let g = HardEdgeKernels::new(0.8, 0.3, 1.5).unwrap();
        let v = h.kernel(KernelKind::K00, 0.5, 1.5).unwrap();
        assert!(rel_err(v, g.kernel(KernelKind::K00, 1.5, 0.5).unwrap()) < 1e-12);
        let z = HardEdgeKernels::new(0.0, 0.0, 1.0).unwrap();
        for x in [0.1, 1.0, 5.0] {
            assert!(z.kernel(KernelKind::K00, x, x).unwrap() > 0.0);
        }
    }

    #[test]
    fn hard_edge_convergence() {
        let (a, b, th) = (0.3, 0.8, 1.5);
        let lim = hard_edge_kernel(a, b, th, KernelKind::K00, 0.5, 1.5).unwrap();
        let errs: Vec<f64> = [20, 40, 80]
            .iter()
            .map(|&n| {
                let ks = KernelSet::new(ens(a, b, th, n)).unwrap();
                rel_err(ks.scaled(KernelKind::K00, 0.5, 1.5).unwrap(), lim)
            })
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2] && errs[2] < 0.05, "{errs:?}");
        // the smooth parts converge the same way
        for kind in [KernelKind::K01Hat, KernelKind::K11] {
            let lim = hard_edge_kernel(a, b, th, kind, 0.5, 1.5).unwrap();
            let errs: Vec<f64> = [20, 40, 80]
                .iter()
                .map(|&n| rel_err(KernelSet::new(ens(a, b, th, n)).unwrap().scaled(kind, 0.5, 1.5).unwrap(), lim))
                .collect();
            assert!(errs[0] > errs[1] && errs[1] > errs[2], "{kind:?}: {errs:?}");
        }
    }

    #[test]
    fn k11_exponent() {
        let th = 1.5;
        let s = fit_k11_exponent(0.3, 0.8, th, 1.0, 0.7, &[20, 40, 80]).unwrap();
        assert!((s - 2.0 / th).abs() < 0.02, "{s}");
    }

    #[test]
    fn grid_output() {
        let p = GridParams::Finite(ens(0.0, 0.0, 1.0, 1));
        let xs = vec![0.5, 1.0, 2.0];
        let g = KernelGrid::compute(GridKind::Finite(KernelKind::K00), p, xs.clone(), xs.clone()).unwrap();
        assert!(g.values.iter().flatten().all(|v| (v - 1.0).abs() < 1e-13));
        let csv = g.to_csv();
        assert_eq!(csv.lines().count(), 10);
        assert!(csv.starts_with("x,y,value\n"));
        let back: KernelGrid = serde_json::from_str(&g.to_json()).unwrap();
        assert_eq!(back, g);
        assert!(KernelGrid::compute(GridKind::Finite(KernelKind::K00), p, vec![1.0, 0.5], xs.clone()).is_err());
        let he = GridParams::HardEdge { a: 0.0, b: 0.0, theta: 1.0 };
        assert!(KernelGrid::compute(GridKind::Finite(KernelKind::K00), he, xs.clone(), xs.clone()).is_err());

        let p = GridParams::Finite(ens(0.4, 0.2, 1.5, 3));
        let mut g = KernelGrid::compute(GridKind::Finite(KernelKind::K10), p, vec![0.5, 12.0], vec![0.7, 1.9]).unwrap();
        let before = g.values.clone();
        g.attach_oracle(0).unwrap();
        assert_eq!(g.values, before);
        for (r, o) in g.values.iter().flatten().zip(g.oracle.as_ref().unwrap().iter().flatten()) {
            assert!(rel_err(*r, *o) < 1e-6);
        }
        let csv = g.to_csv();
        assert!(csv.starts_with("x,y,value,oracle,discrepancy\n"));
        let back: KernelGrid = serde_json::from_str(&g.to_json()).unwrap();
        assert_eq!(back, g);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn sum_vs_t_integral(a in -0.5f64..1.5, b in -0.5f64..1.5, th in 0.6f64..2.5, n in 1usize..6,
                             x in 0.05f64..10.0, y in 0.05f64..10.0) {
            prop_assume!(a + b + 1.0 > 0.1);
            let ks = KernelSet::new(ens(a, b, th, n)).unwrap();
            let s = ks.cd(x, y, CdStrategy::Sum).unwrap();
            let t = ks.cd(x, y, CdStrategy::TIntegral).unwrap();
            let scale: f64 = ks.polys.as_ref().unwrap().0.iter().zip(&ks.polys.as_ref().unwrap().1)
                .map(|(p, q)| {
                    let pa: f64 = p.coeffs.iter().enumerate().map(|(l, c)| (c * x.powf(th * l as f64)).abs()).sum();
                    let qa: f64 = q.coeffs.iter().enumerate().map(|(l, c)| (c * y.powf(th * l as f64)).abs()).sum();
                    pa * qa
                }).sum();
            prop_assert!((s - t).abs() <= 1e-11 * scale);
        }
    }
}
