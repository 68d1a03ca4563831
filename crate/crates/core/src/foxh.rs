//! Fox H-functions on the positive axis: residue series, Hankel loops and
//! vertical-line Mellin–Barnes quadrature, plus the four specialisations
//! `G_N`, `G̃_N`, `G_∞`, `G̃_∞` that build the correlation kernels.
//!
//! Conventions: the integrand is
//! `Φ(s) z^{-s}` with
//! `Φ(s) = ∏_{j≤m} Γ(b_j + B_j s) ∏_{j≤n} Γ(1 - a_j - A_j s)
//!        / (∏_{j>m} Γ(1 - b_j - B_j s) ∏_{j>n} Γ(a_j + A_j s))`,
//! and the residue sum runs over the poles of the first product ("left"
//! poles).

use crate::ensembles::EnsembleParams;
use crate::error::{Error, Result};
use crate::numerics::gamma::{ln_gamma_pos, ln_gamma_signed, log_gamma_mod};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

type C = Complex64;

const EPS: f64 = f64::EPSILON;
/// Generic pole-collision threshold in the `u`-plane.
pub const COLLISION_TOL: f64 = 1e-8;
/// Collision threshold for the `G̃` specialisations, where near-coincident
/// poles already cost more than half the digits.
pub const COLLISION_TOL_TILDE: f64 = 1e-6;
const TABLE_LEN: usize = 600;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoxHSpec {
    /// `(a_j, A_j)`
    pub upper: Vec<(f64, f64)>,
    /// `(b_j, B_j)`
    pub lower: Vec<(f64, f64)>,
    pub m: usize,
    pub n: usize,
}

impl FoxHSpec {
    pub fn new(upper: Vec<(f64, f64)>, lower: Vec<(f64, f64)>, m: usize, n: usize) -> Result<Self> {
        let s = FoxHSpec { upper, lower, m, n };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m > self.lower.len() {
            return Err(Error::domain(format!("m = {} exceeds the {} lower parameters", self.m, self.lower.len())));
        }
        if self.n > self.upper.len() {
            return Err(Error::domain(format!("n = {} exceeds the {} upper parameters", self.n, self.upper.len())));
        }
        for (i, &(p, w)) in self.upper.iter().enumerate() {
            if !(w > 0.0) || !p.is_finite() || !w.is_finite() {
                return Err(Error::domain(format!("upper[{i}] = ({p}, {w}) needs a finite parameter and a positive slope")));
            }
        }
        for (i, &(p, w)) in self.lower.iter().enumerate() {
            if !(w > 0.0) || !p.is_finite() || !w.is_finite() {
                return Err(Error::domain(format!("lower[{i}] = ({p}, {w}) needs a finite parameter and a positive slope")));
            }
        }
        if self.m == 0 {
            return Err(Error::domain("m = 0 leaves no left poles to sum"));
        }
        Ok(())
    }

    /// `H^{1,0}_{0,1}[z | —; (0,1)] = e^{-z}`.
    pub fn exponential() -> Self {
        FoxHSpec { upper: vec![], lower: vec![(0.0, 1.0)], m: 1, n: 0 }
    }

    /// `G_∞` as `H^{1,0}_{0,3}`.
    pub fn g_inf(a: f64, alpha: f64, theta: f64) -> Self {
        FoxHSpec { upper: vec![], lower: vec![(0.0, 1.0), (-alpha, 1.0), (-a, theta)], m: 1, n: 0 }
    }

    /// `G̃_∞` as `H^{2,0}_{0,3}`.
    pub fn g_tilde_inf(a: f64, alpha: f64, theta: f64) -> Self {
        FoxHSpec { upper: vec![], lower: vec![(0.0, 1.0), (-a, theta), (-alpha, 1.0)], m: 2, n: 0 }
    }

    /// `G_N` as `H^{1,1}_{2,3}`.
    pub fn g_n(a: f64, alpha: f64, theta: f64, n: usize) -> Self {
        let nf = n as f64;
        FoxHSpec { upper: vec![(-alpha - nf, 1.0), (nf, 1.0)], lower: vec![(0.0, 1.0), (-alpha, 1.0), (-a, theta)], m: 1, n: 1 }
    }

    /// `G̃_N` as `H^{2,1}_{2,3}`.
    pub fn g_tilde_n(a: f64, alpha: f64, theta: f64, n: usize) -> Self {
        let nf = n as f64;
        FoxHSpec { upper: vec![(-alpha - nf, 1.0), (nf, 1.0)], lower: vec![(0.0, 1.0), (-a, theta), (-alpha, 1.0)], m: 2, n: 1 }
    }

    /// `a* = Σ_{j≤n} A_j - Σ_{j>n} A_j + Σ_{j≤m} B_j - Σ_{j>m} B_j`; the
    /// integrand decays along vertical lines iff this is positive.
    pub fn a_star(&self) -> f64 {
        let up: f64 = self.upper.iter().enumerate().map(|(j, &(_, w))| if j < self.n { w } else { -w }).sum();
        let lo: f64 = self.lower.iter().enumerate().map(|(j, &(_, w))| if j < self.m { w } else { -w }).sum();
        up + lo
    }

    fn left_edge(&self) -> f64 {
        self.lower[..self.m].iter().map(|&(b, w)| -b / w).fold(f64::NEG_INFINITY, f64::max)
    }

    fn right_edge(&self) -> f64 {
        self.upper[..self.n].iter().map(|&(a, w)| (1.0 - a) / w).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ContourKind {
    VerticalLine,
    HankelLoop,
    ResidueSum,
}

/// A fixed discretisation: trapezoid rule with `node_count` steps over
/// `[0, truncation]` of the contour parameter, anchored at `Re s = anchor`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContourPlan {
    pub kind: ContourKind,
    pub anchor: f64,
    pub truncation: f64,
    pub node_count: usize,
}

impl ContourPlan {
    pub fn new(kind: ContourKind, anchor: f64, truncation: f64, node_count: usize) -> Result<Self> {
        if kind != ContourKind::ResidueSum && (!(truncation > 0.0) || node_count < 16) {
            return Err(Error::domain("contour plans need truncation > 0 and at least 16 nodes"));
        }
        Ok(ContourPlan { kind, anchor, truncation, node_count })
    }
}

/// How to evaluate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Evaluation {
    /// Residues where they are safe, a contour otherwise.
    Auto,
    /// A specific strategy with adaptively chosen discretisation.
    Kind(ContourKind),
    /// A fully specified discretisation.
    Plan(ContourPlan),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FoxValue {
    pub value: f64,
    pub strategy: ContourKind,
    pub est_error: f64,
}

/// Mellin–Barnes integrand `Φ(s)` (without `z^{-s}`).
pub(crate) trait Mellin {
    /// `log Φ(s)` modulo `2πi`; real part `-inf` at zeros.
    fn ln_phi(&self, s: C) -> C;
    /// Supremum of the left poles.
    fn left_edge(&self) -> f64;
    /// Infimum of the right poles (`inf` if none).
    fn right_edge(&self) -> f64;
}

fn ln_gamma_num(w: C) -> C {
    log_gamma_mod(w).unwrap_or(C::new(f64::INFINITY, 0.0))
}

fn ln_gamma_den(w: C) -> C {
    match log_gamma_mod(w) {
        Ok(v) => -v,
        Err(_) => C::new(f64::NEG_INFINITY, 0.0),
    }
}

/// `log[Γ(w+N)/Γ(w)]` (mod 2πi), finite wherever the Pochhammer symbol is
/// nonzero, including far to the left where both gammas oscillate.
fn ln_poch(w: C, n: usize) -> C {
    let nf = n as f64;
    if (w + nf).re < 0.5 {
        // Γ(w+N)/Γ(w) = (-1)^N Γ(1-w)/Γ(1-w-N)
        let odd = if n % 2 == 1 { C::new(0.0, PI) } else { C::new(0.0, 0.0) };
        return odd + ln_gamma_num(1.0 - w) + ln_gamma_den(1.0 - w - nf);
    }
    if n <= 16 {
        let mut acc = C::new(0.0, 0.0);
        for j in 0..n {
            let t = w + j as f64;
            if t.norm() == 0.0 {
                return C::new(f64::NEG_INFINITY, 0.0);
            }
            acc += t.ln();
        }
        return acc;
    }
    ln_gamma_num(w + nf) + ln_gamma_den(w)
}

impl Mellin for FoxHSpec {
    fn ln_phi(&self, s: C) -> C {
        let mut acc = C::new(0.0, 0.0);
        for (j, &(b, w)) in self.lower.iter().enumerate() {
            acc += if j < self.m { ln_gamma_num(b + w * s) } else { ln_gamma_den(1.0 - b - w * s) };
        }
        for (j, &(a, w)) in self.upper.iter().enumerate() {
            acc += if j < self.n { ln_gamma_num(1.0 - a - w * s) } else { ln_gamma_den(a + w * s) };
        }
        acc
    }

    fn left_edge(&self) -> f64 {
        FoxHSpec::left_edge(self)
    }

    fn right_edge(&self) -> f64 {
        FoxHSpec::right_edge(self)
    }
}

fn phi_times_zs<M: Mellin + ?Sized>(m: &M, s: C, lnz: f64) -> C {
    let l = m.ln_phi(s) - s * lnz;
    if l.re == f64::NEG_INFINITY {
        return C::new(0.0, 0.0);
    }
    l.exp()
}

/// Smooth stand-in for `log|Φ(c) z^{-c}|`, evaluated slightly off the real
/// axis so that zeros of reciprocal gammas do not trap the minimiser.
fn envelope<M: Mellin + ?Sized>(m: &M, c: f64, lnz: f64) -> f64 {
    let v = m.ln_phi(C::new(c, 0.5)).re - c * lnz;
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Anchor minimising the envelope between the pole families.
fn choose_anchor<M: Mellin + ?Sized>(m: &M, lnz: f64) -> f64 {
    let left = m.left_edge();
    let right = m.right_edge();
    let lo = left + 0.02;
    let hi_cap = if right.is_finite() { right - 0.02 } else { f64::INFINITY };
    if !(hi_cap > lo) {
        return 0.5 * (left + right);
    }
    // coarse scan, geometric in the distance from the left edge
    let mut best = (lo, envelope(m, lo, lnz));
    let mut pts = vec![lo];
    let mut d = 0.05;
    while pts.len() < 48 {
        let p = left + d;
        if p >= hi_cap {
            pts.push(hi_cap);
            break;
        }
        pts.push(p);
        d *= 1.4;
    }
    let vals: Vec<f64> = pts.iter().map(|&p| envelope(m, p, lnz)).collect();
    let mut bi = 0;
    for (i, &v) in vals.iter().enumerate() {
        if v < best.1 {
            best = (pts[i], v);
            bi = i;
        }
    }
    let (mut a, mut b) = (pts[bi.saturating_sub(1)], pts[(bi + 1).min(pts.len() - 1)]);
    let gr = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - gr * (b - a);
    let mut x2 = a + gr * (b - a);
    let (mut f1, mut f2) = (envelope(m, x1, lnz), envelope(m, x2, lnz));
    for _ in 0..40 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - gr * (b - a);
            f1 = envelope(m, x1, lnz);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + gr * (b - a);
            f2 = envelope(m, x2, lnz);
        }
    }
    let c = 0.5 * (a + b);
    if envelope(m, c, lnz) <= best.1 {
        c
    } else {
        best.0
    }
}

/// Local curvature data `(g', g'')` of the envelope at `c`.
fn curvature<M: Mellin + ?Sized>(m: &M, c: f64, lnz: f64) -> (f64, f64) {
    let left = m.left_edge();
    let h = (1e-3 * c.abs().max(1.0)).min(0.3 * (c - left).abs().max(1e-6));
    let (fm, f0, fp) = (envelope(m, c - h, lnz), envelope(m, c, lnz), envelope(m, c + h, lnz));
    ((fp - fm) / (2.0 * h), (fp - 2.0 * f0 + fm) / (h * h))
}

/// Opening parameter of the parabola `s(t) = c - t² + iλt`.
fn hankel_lambda(g1: f64, g2: f64) -> f64 {
    if !(g2 > 1e-8) || !g2.is_finite() {
        return 1.0;
    }
    (1.0 / g2.sqrt()).max((4.0 * g1.abs() / g2).sqrt()).clamp(0.5, 50.0)
}

/// Sum of `f(j h)` for `j ≥ j0` in steps of `stride`, stopping once the
/// terms fall below `1e-18` of the running peak for several steps.
fn tail_sum<F: FnMut(f64) -> (f64, f64)>(mut f: F, h: f64, j0: usize, stride: usize, peak: &mut f64) -> Result<(f64, f64)> {
    let mut acc = 0.0;
    let mut abs = 0.0;
    let mut quiet = 0;
    let mut j = j0;
    while j < 400_000 {
        let (v, mag) = f(j as f64 * h);
        if !v.is_finite() || !mag.is_finite() {
            return Err(Error::non_converged("contour integrand overflowed"));
        }
        acc += v;
        abs += mag;
        *peak = peak.max(mag);
        if mag < 1e-18 * *peak {
            quiet += 1;
            if quiet >= 4 {
                return Ok((acc, abs));
            }
        } else {
            quiet = 0;
        }
        j += stride;
    }
    Err(Error::non_converged("contour integrand did not decay"))
}

/// Trapezoid rule with step halving for `∫₀^∞ f(t) dt`, where `f0` is the
/// value at `t = 0` (weighted by 1/2). Returns `(value, est_error)`.
fn halving_trapezoid<F: Fn(f64) -> (f64, f64)>(f: F, h0: f64) -> Result<(f64, f64)> {
    let (v0, m0) = f(0.0);
    let mut peak = m0;
    let mut h = h0;
    let (tail, tail_abs) = tail_sum(&f, h, 1, 1, &mut peak)?;
    let mut sum_nodes = 0.5 * v0 + tail;
    let mut abs_nodes = 0.5 * m0 + tail_abs;
    let mut prev = h * sum_nodes;
    for _ in 0..14 {
        let half = 0.5 * h;
        let (odd, odd_abs) = tail_sum(&f, half, 1, 2, &mut peak)?;
        sum_nodes += odd;
        abs_nodes += odd_abs;
        h = half;
        let cur = h * sum_nodes;
        let scale = h * abs_nodes;
        let diff = (cur - prev).abs();
        if diff <= 1e-14 * scale.max(1e-300) || diff <= 1e-15 * cur.abs() {
            return Ok((cur, diff + 4.0 * EPS * scale));
        }
        prev = cur;
    }
    Err(Error::non_converged("contour trapezoid did not settle after 14 halvings"))
}

fn fixed_trapezoid<F: Fn(f64) -> (f64, f64)>(f: F, truncation: f64, n: usize) -> (f64, f64) {
    let h = truncation / n as f64;
    let run = |step: usize| {
        let hh = h * step as f64;
        let mut acc = 0.5 * f(0.0).0;
        let mut abs = 0.5 * f(0.0).1;
        let mut j = 1;
        while j * step <= n {
            let (v, m) = f(j as f64 * hh);
            acc += v;
            abs += m;
            j += 1;
        }
        (hh * acc, hh * abs)
    };
    let (fine, abs) = run(1);
    let (coarse, _) = run(2);
    (fine, (fine - coarse).abs() + 4.0 * EPS * abs)
}

/// Discretised Hankel loop around the left poles: nodes `s_j` and complex
/// weights `w_j` (including `ds/(2πi)`) over `t ∈ [-T, T]`, for reuse in
/// double integrals. Also returns the anchor and opening used.
pub(crate) struct LoopGrid {
    pub s: Vec<C>,
    pub w: Vec<C>,
}

pub(crate) fn loop_grid<M: Mellin + ?Sized>(m: &M, c: f64, lam: f64, h: f64, lnz: f64, scale_peak: f64) -> LoopGrid {
    let mut s = vec![];
    let mut w = vec![];
    let push = |t: f64, s: &mut Vec<C>, w: &mut Vec<C>| -> f64 {
        let st = C::new(c - t * t, lam * t);
        let ds = C::new(-2.0 * t, lam);
        let f = phi_times_zs(m, st, lnz) * ds * h / C::new(0.0, 2.0 * PI);
        s.push(st);
        w.push(f);
        f.norm()
    };
    let mut peak = push(0.0, &mut s, &mut w).max(scale_peak);
    for sign in [1.0, -1.0] {
        let mut quiet = 0;
        let mut j = 1;
        while j < 100_000 {
            let mag = push(sign * j as f64 * h, &mut s, &mut w);
            peak = peak.max(mag);
            if mag < 1e-18 * peak {
                quiet += 1;
                if quiet >= 4 {
                    break;
                }
            } else {
                quiet = 0;
            }
            j += 1;
        }
    }
    LoopGrid { s, w }
}

/// Anchor, opening and natural step of the Hankel loop for `Φ(s) z^{-s}`
/// when the anchor is fixed in advance.
pub(crate) fn loop_shape<M: Mellin + ?Sized>(m: &M, c: f64, lnz: f64) -> (f64, f64) {
    let (g1, g2) = curvature(m, c, lnz);
    let lam = hankel_lambda(g1, g2);
    let kappa = g1 + 0.5 * g2 * lam * lam;
    let width = if kappa > 1e-8 && kappa.is_finite() { 1.0 / kappa.sqrt() } else { 1.0 };
    (lam, (0.5 * width).min(0.5))
}

pub(crate) fn hankel<M: Mellin + ?Sized>(m: &M, z: f64, plan: Option<&ContourPlan>) -> Result<(f64, f64)> {
    let lnz = z.ln();
    let c = match plan {
        Some(p) => p.anchor,
        None => choose_anchor(m, lnz),
    };
    if c <= m.left_edge() || c >= m.right_edge() {
        return Err(Error::domain(format!("anchor {c} does not separate the pole families")));
    }
    let (lam, h0) = loop_shape(m, c, lnz);
    // ∫_L Φ z^{-s} ds/(2πi) = (1/π) ∫₀^∞ Im[Φ(s(t)) s'(t)] dt
    let f = |t: f64| {
        let s = C::new(c - t * t, lam * t);
        let g = phi_times_zs(m, s, lnz) * C::new(-2.0 * t, lam);
        (g.im / PI, g.norm() / PI)
    };
    match plan {
        Some(p) => Ok(fixed_trapezoid(f, p.truncation, p.node_count)),
        None => halving_trapezoid(f, h0),
    }
}

pub(crate) fn vertical<M: Mellin + ?Sized>(m: &M, z: f64, plan: Option<&ContourPlan>) -> Result<(f64, f64)> {
    let lnz = z.ln();
    let c = match plan {
        Some(p) => p.anchor,
        None => choose_anchor(m, lnz),
    };
    if c <= m.left_edge() || c >= m.right_edge() {
        return Err(Error::domain(format!("anchor {c} does not separate the pole families")));
    }
    let (_, g2) = curvature(m, c, lnz);
    let h0 = if g2 > 1e-8 && g2.is_finite() { (0.5 / g2.sqrt()).min(0.5) } else { 0.5 };
    // (1/2π)∫ Φ(c+iy) z^{-c-iy} dy = (1/π)∫₀^∞ Re[...] dy
    let f = |y: f64| {
        let g = phi_times_zs(m, C::new(c, y), lnz);
        (g.re / PI, g.norm() / PI)
    };
    match plan {
        Some(p) => Ok(fixed_trapezoid(f, p.truncation, p.node_count)),
        None => halving_trapezoid(f, h0),
    }
}

/// One residue term in log form: `sign · exp(log_mag + power · ln z)`.
#[derive(Debug, Clone, Copy)]
struct Term {
    log_mag: f64,
    sign: f64,
    power: f64,
}

/// Sum a family of residue terms (times `z^shift`) with the
/// three-small-terms stopping rule. Returns `(sum, Σ|terms|, converged)`.
fn sum_family(terms: &[Term], lnz: f64, shift: f64) -> (f64, f64, bool) {
    if terms.is_empty() {
        return (0.0, 0.0, true);
    }
    let mut acc = 0.0;
    let mut abs = 0.0;
    let mut peak: f64 = 0.0;
    let mut small = 0;
    for t in terms {
        let v = if t.sign == 0.0 { 0.0 } else { t.sign * (t.log_mag + (t.power + shift) * lnz).exp() };
        acc += v;
        abs += v.abs();
        peak = peak.max(v.abs());
        if v.abs() < 1e-17 * acc.abs().max(peak) || v == 0.0 && peak == 0.0 {
            small += 1;
            if small >= 3 {
                return (acc, abs, true);
            }
        } else {
            small = 0;
        }
    }
    (acc, abs, false)
}

/// Families flagged `true` are finite and summed in full.
fn sum_family_all(terms: &[Term], lnz: f64, shift: f64) -> (f64, f64, bool) {
    let mut acc = 0.0;
    let mut abs = 0.0;
    for t in terms {
        let v = if t.sign == 0.0 { 0.0 } else { t.sign * (t.log_mag + (t.power + shift) * lnz).exp() };
        acc += v;
        abs += v.abs();
    }
    (acc, abs, true)
}

/// `z^shift` times the residue sum over `fams`.
fn residue_value(fams: &[(&[Term], bool)], z: f64, shift: f64) -> Result<(f64, f64)> {
    let lnz = z.ln();
    let mut acc = 0.0;
    let mut abs = 0.0;
    for &(f, finite) in fams {
        let (s, a, ok) = if finite {
            let (s, a, _) = sum_family_all(f, lnz, shift);
            (s, a, true)
        } else {
            sum_family(f, lnz, shift)
        };
        if !ok {
            return Err(Error::non_converged(format!("residue series not converged within {} terms at z = {z}", f.len())));
        }
        acc += s;
        abs += a;
    }
    if !acc.is_finite() {
        return Err(Error::non_converged(format!("residue series overflowed at z = {z}")));
    }
    Ok((acc, 8.0 * EPS * abs))
}

impl FoxHSpec {
    fn residue_terms(&self, max_terms: usize) -> Result<Vec<Vec<Term>>> {
        let mut fams = Vec::new();
        for j in 0..self.m {
            let (bj, wj) = self.lower[j];
            let mut fam = Vec::new();
            for k in 0..max_terms {
                let s = -(bj + k as f64) / wj;
                // other left families must not have a pole here
                for (i, &(bi, wi)) in self.lower[..self.m].iter().enumerate() {
                    if i == j {
                        continue;
                    }
                    let kk = -(bi + wi * s);
                    if kk > -0.5 && (kk - kk.round()).abs() / wi < COLLISION_TOL {
                        return Err(Error::PoleCollision(format!("poles of Γ(b_{j}+B_{j}s) and Γ(b_{i}+B_{i}s) meet at s = {s}")));
                    }
                }
                let mut lm = -ln_gamma_pos(k as f64 + 1.0) - wj.ln();
                let mut sg = if k % 2 == 0 { 1.0 } else { -1.0 };
                let mut zero = false;
                let mut num = |w: f64| -> Result<()> {
                    let (l, s) = ln_gamma_signed(w).map_err(|_| Error::PoleCollision(format!("left and right poles meet near s = {s}")))?;
                    lm += l;
                    sg *= f64::from(s);
                    Ok(())
                };
                for (i, &(bi, wi)) in self.lower.iter().enumerate() {
                    if i < self.m && i != j {
                        num(bi + wi * s)?;
                    }
                }
                for (i, &(ai, wi)) in self.upper.iter().enumerate() {
                    if i < self.n {
                        num(1.0 - ai - wi * s)?;
                    }
                }
                let mut den = |w: f64| match ln_gamma_signed(w) {
                    Ok((l, s)) => {
                        lm -= l;
                        sg *= f64::from(s);
                    }
                    Err(_) => zero = true,
                };
                for (i, &(bi, wi)) in self.lower.iter().enumerate() {
                    if i >= self.m {
                        den(1.0 - bi - wi * s);
                    }
                }
                for (i, &(ai, wi)) in self.upper.iter().enumerate() {
                    if i >= self.n {
                        den(ai + wi * s);
                    }
                }
                fam.push(Term { log_mag: lm, sign: if zero { 0.0 } else { sg }, power: -s });
            }
            fams.push(fam);
        }
        Ok(fams)
    }
}

/// Evaluate `H^{m,n}_{p,q}(z)` for `z > 0`.
pub fn fox_h(spec: &FoxHSpec, z: f64, how: Evaluation) -> Result<FoxValue> {
    spec.validate()?;
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::domain("z must be positive"));
    }
    if spec.left_edge() >= spec.right_edge() {
        return Err(Error::domain("left and right pole families overlap; no separating contour"));
    }
    let residue = || -> Result<FoxValue> {
        let fams = spec.residue_terms(4000)?;
        let refs: Vec<(&[Term], bool)> = fams.iter().map(|f| (f.as_slice(), false)).collect();
        let (v, e) = residue_value(&refs, z, 0.0)?;
        Ok(FoxValue { value: v, strategy: ContourKind::ResidueSum, est_error: e })
    };
    let contour = |kind: ContourKind, plan: Option<&ContourPlan>| -> Result<FoxValue> {
        let (v, e) = match kind {
            ContourKind::VerticalLine => {
                if !(spec.a_star() > 0.0) {
                    return Err(Error::domain("vertical-line contour needs a* > 0"));
                }
                vertical(spec, z, plan)?
            }
            ContourKind::HankelLoop => hankel(spec, z, plan)?,
            ContourKind::ResidueSum => unreachable!(),
        };
        Ok(FoxValue { value: v, strategy: kind, est_error: e })
    };
    match how {
        Evaluation::Kind(ContourKind::ResidueSum) => residue(),
        Evaluation::Kind(k) => contour(k, None),
        Evaluation::Plan(p) if p.kind == ContourKind::ResidueSum => residue(),
        Evaluation::Plan(p) => contour(p.kind, Some(&p)),
        Evaluation::Auto => {
            let fallback = if spec.a_star() > 0.0 { ContourKind::VerticalLine } else { ContourKind::HankelLoop };
            match residue() {
                Ok(r) if r.est_error <= 1e-13 * r.value.abs() => Ok(r),
                Ok(r) => match contour(fallback, None) {
                    Ok(c) if c.est_error < r.est_error => Ok(c),
                    _ => Ok(r),
                },
                // colliding poles sit on the negative axis, which the loop encloses
                Err(Error::PoleCollision(msg)) => contour(ContourKind::HankelLoop, None).map_err(|e| match e {
                    Error::NonConverged(_) => Error::PoleCollision(msg),
                    other => other,
                }),
                Err(e) => contour(fallback, None).map_err(|_| e),
            }
        }
    }
}

/// Which specialisation a [`GEvaluator`] computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GKind {
    GN,
    GTildeN,
    GInf,
    GTildeInf,
}

/// Precomputed residue tables for one of the kernel functions at fixed
/// `(a, α, θ[, N])`. Evaluation at many `z` then costs one `exp` per term.
#[derive(Debug, Clone)]
pub struct GEvaluator {
    pub kind: GKind,
    pub a: f64,
    pub alpha: f64,
    pub theta: f64,
    /// `N` for the finite-size kinds, 0 otherwise.
    pub n: usize,
    fam_k: Vec<Term>,
    fam_m: Vec<Term>,
    collision: Option<String>,
}

fn check_g_params(a: f64, alpha: f64, theta: f64) -> Result<()> {
    if !(a > -1.0) || !(alpha > -1.0) || !(theta > 0.0) {
        return Err(Error::domain(format!("need a > -1, alpha > -1, theta > 0; got ({a}, {alpha}, {theta})")));
    }
    Ok(())
}

impl GEvaluator {
    /// `G_{N,a}(z) = Σ_{k<N} (-1)^k Γ(α+N+1+k) z^k / (k! Γ(N-k) Γ(α+1+k) Γ(a+θk+1))`.
    pub fn g_n(a: f64, alpha: f64, theta: f64, n: usize) -> Result<Self> {
        check_g_params(a, alpha, theta)?;
        if n == 0 {
            return Err(Error::domain("N must be at least 1"));
        }
        let fam_k = (0..n).map(|k| finite_k_coeff(a, alpha, theta, n, k, false)).collect::<Result<_>>()?;
        Ok(GEvaluator { kind: GKind::GN, a, alpha, theta, n, fam_k, fam_m: vec![], collision: None })
    }

    /// `G̃_{N,a}`: residues of `Γ(u)Γ(θu-a) Γ(α+N+1-u)/(Γ(N+u)Γ(α+1-u)) z^{-u}`.
    pub fn g_tilde_n(a: f64, alpha: f64, theta: f64, n: usize) -> Result<Self> {
        check_g_params(a, alpha, theta)?;
        if n == 0 {
            return Err(Error::domain("N must be at least 1"));
        }
        let collision = tilde_collision(a, theta, Some(n));
        let mut fam_k = vec![];
        let mut fam_m = vec![];
        if collision.is_none() {
            fam_k = (0..n).map(|k| finite_k_coeff(a, alpha, theta, n, k, true)).collect::<Result<_>>()?;
            for m in 0..TABLE_LEN {
                let u = (a - m as f64) / theta;
                // R(u) = ∏_{j=1}^N (α+j-u)/(u+j-1)
                let mut lm = -ln_gamma_pos(m as f64 + 1.0) - theta.ln();
                let mut sg = if m % 2 == 0 { 1.0 } else { -1.0 };
                for j in 1..=n {
                    let p = alpha + j as f64 - u;
                    let q = u + j as f64 - 1.0;
                    lm += p.abs().ln() - q.abs().ln();
                    sg *= p.signum() * q.signum();
                }
                fam_m.push(Term { log_mag: lm, sign: sg, power: -u });
            }
        }
        Ok(GEvaluator { kind: GKind::GTildeN, a, alpha, theta, n, fam_k, fam_m, collision })
    }

    /// `G_∞(z) = Σ_k (-z)^k / (k! Γ(α+k+1) Γ(a+θk+1))`.
    pub fn g_inf(a: f64, alpha: f64, theta: f64) -> Result<Self> {
        check_g_params(a, alpha, theta)?;
        let fam_k = (0..TABLE_LEN)
            .map(|k| {
                let kf = k as f64;
                Term {
                    log_mag: -ln_gamma_pos(kf + 1.0) - ln_gamma_pos1(alpha + kf + 1.0) - ln_gamma_pos1(a + theta * kf + 1.0),
                    sign: if k % 2 == 0 { 1.0 } else { -1.0 },
                    power: kf,
                }
            })
            .collect();
        Ok(GEvaluator { kind: GKind::GInf, a, alpha, theta, n: 0, fam_k, fam_m: vec![], collision: None })
    }

    /// `G̃_∞`: residues of `Γ(u)Γ(θu-a)/Γ(α+1-u) z^{-u}`.
    pub fn g_tilde_inf(a: f64, alpha: f64, theta: f64) -> Result<Self> {
        check_g_params(a, alpha, theta)?;
        let collision = tilde_collision(a, theta, None);
        let mut fam_k = vec![];
        let mut fam_m = vec![];
        if collision.is_none() {
            for k in 0..TABLE_LEN {
                let kf = k as f64;
                let (lg, sg) = ln_gamma_signed(-theta * kf - a)?;
                fam_k.push(Term {
                    log_mag: lg - ln_gamma_pos(kf + 1.0) - ln_gamma_pos1(alpha + 1.0 + kf),
                    sign: f64::from(sg) * if k % 2 == 0 { 1.0 } else { -1.0 },
                    power: kf,
                });
            }
            for m in 0..TABLE_LEN {
                let u = (a - m as f64) / theta;
                let (l1, s1) = ln_gamma_signed(u)?;
                let (l2, s2) = ln_gamma_signed(alpha + 1.0 - u)?;
                fam_m.push(Term {
                    log_mag: l1 - l2 - ln_gamma_pos(m as f64 + 1.0) - theta.ln(),
                    sign: f64::from(s1 * s2) * if m % 2 == 0 { 1.0 } else { -1.0 },
                    power: -u,
                });
            }
        }
        Ok(GEvaluator { kind: GKind::GTildeInf, a, alpha, theta, n: 0, fam_k, fam_m, collision })
    }

    /// Build the evaluator for one side of an ensemble: exponent `a` or `b`.
    pub fn for_side(p: &EnsembleParams, side: Side, kind: GKind) -> Result<Self> {
        let e = match side {
            Side::A => p.a,
            Side::B => p.b,
        };
        match kind {
            GKind::GN => Self::g_n(e, p.alpha(), p.theta, p.n),
            GKind::GTildeN => Self::g_tilde_n(e, p.alpha(), p.theta, p.n),
            GKind::GInf => Self::g_inf(e, p.alpha(), p.theta),
            GKind::GTildeInf => Self::g_tilde_inf(e, p.alpha(), p.theta),
        }
    }

    pub fn spec(&self) -> FoxHSpec {
        match self.kind {
            GKind::GN => FoxHSpec::g_n(self.a, self.alpha, self.theta, self.n),
            GKind::GTildeN => FoxHSpec::g_tilde_n(self.a, self.alpha, self.theta, self.n),
            GKind::GInf => FoxHSpec::g_inf(self.a, self.alpha, self.theta),
            GKind::GTildeInf => FoxHSpec::g_tilde_inf(self.a, self.alpha, self.theta),
        }
    }

    /// True when two residue families coincide (double poles).
    pub fn has_collision(&self) -> bool {
        self.collision.is_some()
    }

    fn residue(&self, z: f64) -> Result<FoxValue> {
        self.residue_scaled(z, 0.0)
    }

    fn residue_scaled(&self, z: f64, shift: f64) -> Result<FoxValue> {
        if let Some(msg) = &self.collision {
            return Err(Error::PoleCollision(msg.clone()));
        }
        if z == 0.0 {
            return match self.kind {
                GKind::GN | GKind::GInf => {
                    let t = self.fam_k[0];
                    Ok(FoxValue { value: t.sign * t.log_mag.exp(), strategy: ContourKind::ResidueSum, est_error: 0.0 })
                }
                _ => Err(Error::domain("G̃ is singular or undefined at z = 0")),
            };
        }
        let (v, e) = match self.kind {
            // exact polynomial: no truncation
            GKind::GN => residue_value(&[(&self.fam_k, true)], z, shift)?,
            GKind::GTildeN => residue_value(&[(&self.fam_k, true), (&self.fam_m, false)], z, shift)?,
            _ => residue_value(&[(&self.fam_k, false), (&self.fam_m, false)], z, shift)?,
        };
        Ok(FoxValue { value: v, strategy: ContourKind::ResidueSum, est_error: e })
    }

    /// Evaluate with a chosen strategy.
    pub fn eval_with(&self, z: f64, how: Evaluation) -> Result<FoxValue> {
        if !(z >= 0.0) || !z.is_finite() {
            return Err(Error::domain("z must be nonnegative and finite"));
        }
        let contour = |kind: ContourKind, plan: Option<&ContourPlan>| -> Result<FoxValue> {
            if z == 0.0 {
                return Err(Error::domain("contours need z > 0"));
            }
            let (v, e) = match kind {
                ContourKind::HankelLoop => hankel(self, z, plan)?,
                ContourKind::VerticalLine => {
                    return Err(Error::domain("the kernel Mellin integrands grow along vertical lines; use a Hankel loop"))
                }
                ContourKind::ResidueSum => unreachable!(),
            };
            Ok(FoxValue { value: v, strategy: kind, est_error: e })
        };
        match how {
            Evaluation::Kind(ContourKind::ResidueSum) => self.residue(z),
            Evaluation::Kind(k) => contour(k, None),
            Evaluation::Plan(p) if p.kind == ContourKind::ResidueSum => self.residue(z),
            Evaluation::Plan(p) => contour(p.kind, Some(&p)),
            Evaluation::Auto => {
                if self.kind == GKind::GN {
                    return self.residue(z);
                }
                match self.residue(z) {
                    Ok(r) if r.est_error <= 1e-12 * r.value.abs() => Ok(r),
                    Ok(r) => match contour(ContourKind::HankelLoop, None) {
                        Ok(c) if c.est_error < r.est_error => Ok(c),
                        _ => Ok(r),
                    },
                    Err(e) => contour(ContourKind::HankelLoop, None).map_err(|ce| match e {
                        Error::PoleCollision(_) => ce,
                        other => other,
                    }),
                }
            }
        }
    }

    pub fn eval(&self, z: f64) -> Result<FoxValue> {
        self.eval_with(z, Evaluation::Auto)
    }

    pub fn value(&self, z: f64) -> Result<f64> {
        Ok(self.eval(z)?.value)
    }

    /// `z^p G(z)` for `z > 0`, error estimate scaled alike. The power
    /// enters the residue terms before exponentiation, so `G̃` stays
    /// representable at tiny `z` where `G̃(z) ~ z^{-a/θ}` alone overflows.
    pub fn eval_scaled(&self, z: f64, p: f64) -> Result<FoxValue> {
        if p == 0.0 {
            return self.eval(z);
        }
        if !(z > 0.0) || !z.is_finite() {
            return Err(Error::domain("scaled values need finite z > 0"));
        }
        match self.residue_scaled(z, p) {
            Ok(r) if r.est_error <= 1e-12 * r.value.abs() => Ok(r),
            _ => {
                let v = self.eval(z)?;
                let s = z.powf(p);
                Ok(FoxValue { value: v.value * s, est_error: v.est_error * s, ..v })
            }
        }
    }

    /// Power of the `z → 0` singularity: `G̃(z) = O(z^{-σ})`, `σ = max(a/θ, 0)`.
    pub fn singular_power(&self) -> f64 {
        match self.kind {
            GKind::GN | GKind::GInf => 0.0,
            GKind::GTildeN | GKind::GTildeInf => (self.a / self.theta).max(0.0),
        }
    }
}

impl Mellin for GEvaluator {
    fn ln_phi(&self, s: C) -> C {
        let (a, al, th) = (self.a, self.alpha, self.theta);
        match self.kind {
            GKind::GN => -ln_poch(s, self.n) + ln_poch(al + 1.0 - s, self.n) + ln_gamma_den(a - th * s + 1.0),
            GKind::GTildeN => -ln_poch(s, self.n) + ln_poch(al + 1.0 - s, self.n) + ln_gamma_num(th * s - a),
            GKind::GInf => ln_gamma_num(s) + ln_gamma_den(al + 1.0 - s) + ln_gamma_den(a - th * s + 1.0),
            GKind::GTildeInf => ln_gamma_num(s) + ln_gamma_num(th * s - a) + ln_gamma_den(al + 1.0 - s),
        }
    }

    fn left_edge(&self) -> f64 {
        self.singular_power()
    }

    fn right_edge(&self) -> f64 {
        f64::INFINITY
    }
}

fn ln_gamma_pos1(x: f64) -> f64 {
    if x >= 0.5 {
        ln_gamma_pos(x)
    } else {
        ln_gamma_pos(x + 1.0) - x.ln()
    }
}

/// Coefficient of `z^k` in `G_N` (or, with `tilde`, the `Γ(-θk-a)`-weighted
/// one in `G̃_N`).
fn finite_k_coeff(a: f64, alpha: f64, theta: f64, n: usize, k: usize, tilde: bool) -> Result<Term> {
    let (nf, kf) = (n as f64, k as f64);
    let mut lm = ln_gamma_pos1(alpha + nf + 1.0 + kf) - ln_gamma_pos(kf + 1.0) - ln_gamma_pos(nf - kf) - ln_gamma_pos1(alpha + 1.0 + kf);
    let mut sg = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
    if tilde {
        let (l, s) = ln_gamma_signed(-theta * kf - a)?;
        lm += l;
        sg *= f64::from(s);
    } else {
        lm -= ln_gamma_pos1(a + theta * kf + 1.0);
    }
    Ok(Term { log_mag: lm, sign: sg, power: kf })
}

/// Detect `(a - m)/θ = -k`, i.e. `a + θk = m`, for `k < N` (or any `k`).
fn tilde_collision(a: f64, theta: f64, n: Option<usize>) -> Option<String> {
    let kmax = n.unwrap_or(TABLE_LEN);
    for k in 0..kmax {
        let m = a + theta * k as f64;
        if m > -0.5 && (m - m.round()).abs() / theta < COLLISION_TOL_TILDE {
            return Some(format!("pole families meet at u = -{k} (a + θk = {m})"));
        }
    }
    None
}

/// Which weight exponent a kernel function is built on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

/// `G_{N,a}(z)` (or the `b` side).
pub fn g_n(params: &EnsembleParams, side: Side, z: f64) -> Result<f64> {
    if !(z >= 0.0) {
        return Err(Error::domain("z must be nonnegative"));
    }
    GEvaluator::for_side(params, side, GKind::GN)?.value(z)
}

/// `G̃_{N,a}(z)` (or the `b` side), `z > 0`.
pub fn g_tilde_n(params: &EnsembleParams, side: Side, z: f64) -> Result<FoxValue> {
    if !(z > 0.0) {
        return Err(Error::domain("z must be positive"));
    }
    GEvaluator::for_side(params, side, GKind::GTildeN)?.eval(z)
}

/// `G_∞(z)`; entire in `z`.
pub fn g_inf(a: f64, alpha: f64, theta: f64, z: f64) -> Result<FoxValue> {
    if !(z >= 0.0) {
        return Err(Error::domain("z must be nonnegative"));
    }
    GEvaluator::g_inf(a, alpha, theta)?.eval(z)
}

/// `G̃_∞(z)`, `z > 0`.
pub fn g_tilde_inf(a: f64, alpha: f64, theta: f64, z: f64) -> Result<FoxValue> {
    if !(z > 0.0) {
        return Err(Error::domain("z must be positive"));
    }
    GEvaluator::g_tilde_inf(a, alpha, theta)?.eval(z)
}
