//! θ-deformed Cauchy bi-orthogonal polynomials, their monic versions, the
//! Bures skew-orthogonal family `φ_n`, and the Jacobi connection.
//!
//! All polynomials are stored in the variable `z = x^θ`.

use crate::ensembles::{moment_c, partition_bures, partition_cauchy, EnsembleParams};
use crate::error::{Error, Result};
use crate::foxh::{fox_h, ContourKind, Evaluation, FoxHSpec};
use crate::numerics::gamma::{ln_gamma_pos, log_gamma_complex, rgamma};
use crate::numerics::linalg::{det_lv, solve_checked};
use crate::numerics::quadrature::graded_simplex;
use crate::numerics::LogValue;
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Degrees at and above this are refused: coefficients leave double range
/// for large `α` and the moment systems are hopeless anyway.
pub const MAX_DEGREE: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolySeries {
    pub degree: usize,
    /// Monomial coefficients, `coeffs[l]` multiplies `z^l`.
    pub coeffs: Vec<f64>,
}

impl PolySeries {
    pub fn new(coeffs: Vec<f64>) -> Self {
        let degree = coeffs.len().saturating_sub(1);
        PolySeries { degree, coeffs }
    }

    pub fn leading(&self) -> f64 {
        self.coeffs[self.degree]
    }

    /// Horner evaluation in `z`.
    pub fn eval(&self, z: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * z + c)
    }

    /// Term-by-term evaluation (reference for [`PolySeries::eval`]).
    pub fn eval_terms(&self, z: f64) -> f64 {
        self.coeffs.iter().enumerate().map(|(l, &c)| c * z.powi(l as i32)).sum()
    }

    /// Evaluate at `z = x^θ`.
    pub fn eval_x(&self, x: f64, theta: f64) -> f64 {
        self.eval(x.powf(theta))
    }

    pub fn scale(&self, f: f64) -> Self {
        PolySeries { degree: self.degree, coeffs: self.coeffs.iter().map(|c| c * f).collect() }
    }

    /// `self + f·other`, padded to the longer length.
    pub fn axpy(&self, f: f64, other: &PolySeries) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        let coeffs: Vec<f64> =
            (0..n).map(|l| self.coeffs.get(l).copied().unwrap_or(0.0) + f * other.coeffs.get(l).copied().unwrap_or(0.0)).collect();
        PolySeries::new(coeffs)
    }

    /// Largest coefficientwise relative difference, each coefficient
    /// measured against the larger of the two magnitudes.
    pub fn max_rel_diff(&self, other: &PolySeries) -> f64 {
        let n = self.coeffs.len().max(other.coeffs.len());
        let scale = self.coeffs.iter().chain(&other.coeffs).fold(0.0f64, |m, c| m.max(c.abs()));
        (0..n)
            .map(|l| {
                let (x, y) = (self.coeffs.get(l).copied().unwrap_or(0.0), other.coeffs.get(l).copied().unwrap_or(0.0));
                (x - y).abs() / x.abs().max(y.abs()).max(1e-300 * scale).max(f64::MIN_POSITIVE)
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormalizationData {
    /// `h_n = θ/(2nθ+a+b+1)`
    pub h_n: f64,
    /// `Z_{n+1}/Z_n`
    pub z_ratio: LogValue,
}

fn check_degree(n: usize) -> Result<()> {
    if n >= MAX_DEGREE {
        return Err(Error::domain(format!("degree {n} is beyond the supported range (< {MAX_DEGREE})")));
    }
    Ok(())
}

fn ln_gamma_any(x: f64) -> f64 {
    if x >= 0.5 {
        ln_gamma_pos(x)
    } else {
        ln_gamma_pos(x + 1.0) - x.ln()
    }
}

/// `c_{n,l} = (-1)^l Γ(α+n+l+1) / (l!(n-l)! Γ(α+l+1))`.
pub fn coeff_c(n: usize, l: usize, alpha: f64) -> Result<f64> {
    if l > n {
        return Err(Error::Index(format!("c_{{n,l}} needs l <= n, got n = {n}, l = {l}")));
    }
    if !(alpha > -1.0) {
        return Err(Error::domain(format!("alpha must exceed -1, got {alpha}")));
    }
    let (nf, lf) = (n as f64, l as f64);
    let lm = ln_gamma_any(alpha + nf + lf + 1.0) - ln_gamma_pos(lf + 1.0) - ln_gamma_pos(nf - lf + 1.0) - ln_gamma_any(alpha + lf + 1.0);
    Ok(if l.is_multiple_of(2) { lm.exp() } else { -lm.exp() })
}

fn hat_poly(p: &EnsembleParams, n: usize, e: f64) -> Result<PolySeries> {
    p.validate()?;
    check_degree(n)?;
    let al = p.alpha();
    let coeffs =
        (0..=n).map(|l| Ok(coeff_c(n, l, al)? * (-ln_gamma_any(e + p.theta * l as f64 + 1.0)).exp())).collect::<Result<Vec<_>>>()?;
    Ok(PolySeries::new(coeffs))
}

/// `P̂_n(z) = Σ_l c_{n,l} z^l / Γ(a+θl+1)`.
pub fn p_hat(p: &EnsembleParams, n: usize) -> Result<PolySeries> {
    hat_poly(p, n, p.a)
}

/// `Q̂_n(z) = Σ_l c_{n,l} z^l / Γ(b+θl+1)`.
pub fn q_hat(p: &EnsembleParams, n: usize) -> Result<PolySeries> {
    hat_poly(p, n, p.b)
}

/// `h_n = θ/(2nθ+a+b+1)`.
pub fn h_n(p: &EnsembleParams, n: usize) -> f64 {
    p.theta / (2.0 * n as f64 * p.theta + p.a + p.b + 1.0)
}

/// `P_n^{(α,0)}(1-2x)` by the three-term recurrence.
pub fn jacobi_p(n: usize, alpha: f64, x: f64) -> Result<f64> {
    if !(alpha > -1.0) {
        return Err(Error::domain(format!("alpha must exceed -1, got {alpha}")));
    }
    let t = 1.0 - 2.0 * x;
    let mut p0 = 1.0;
    if n == 0 {
        return Ok(p0);
    }
    let mut p1 = (alpha + 1.0) + (alpha + 2.0) * (t - 1.0) / 2.0;
    for k in 2..=n {
        let k = k as f64;
        let s = 2.0 * k + alpha;
        let a1 = 2.0 * k * (k + alpha) * (s - 2.0);
        let a2 = (s - 1.0) * alpha * alpha;
        let a3 = (s - 2.0) * (s - 1.0) * s;
        let a4 = 2.0 * (k + alpha - 1.0) * (k - 1.0) * s;
        let p2 = ((a2 + a3 * t) * p1 - a4 * p0) / a1;
        p0 = p1;
        p1 = p2;
    }
    Ok(p1)
}

/// Monic `P̃_n`, `Q̃_n` with `⟨P̃_n, Q̃_m⟩ = (Z_{n+1}/Z_n) δ_{nm}`.
pub fn monic_pair(p: &EnsembleParams, n: usize) -> Result<(PolySeries, PolySeries, NormalizationData)> {
    let ph = p_hat(p, n)?;
    let qh = q_hat(p, n)?;
    let pt = ph.scale(1.0 / ph.leading());
    let qt = qh.scale(1.0 / qh.leading());
    let zn = if n == 0 { LogValue::ONE } else { partition_cauchy(&p.with_n(n))? };
    let z_ratio = partition_cauchy(&p.with_n(n + 1))? / zn;
    Ok((pt, qt, NormalizationData { h_n: h_n(p, n), z_ratio }))
}

/// Scaled Bures skew moments `I^B_{j,k}/(i_j i_k)`, 0-based.
fn mb(p: &EnsembleParams, l: usize, i: usize) -> f64 {
    p.theta * (i as f64 - l as f64) / (2.0 * p.a + 2.0 + p.theta * (l + i) as f64)
}

/// Monic Bures polynomial `φ_d`. Even `d`: skew-orthogonal to `z^i`, `i<d`.
/// Odd `d`: `⟨φ_d, z^j⟩_B = -κ i_j` for `j ≤ d`, the bordered-Pfaffian
/// structure. `b` is ignored.
pub fn phi_bures(p: &EnsembleParams, d: usize) -> Result<PolySeries> {
    p.validate()?;
    check_degree(d)?;
    if d == 0 {
        return Ok(PolySeries::new(vec![1.0]));
    }
    let li: Vec<f64> = (0..=d).map(|l| ln_gamma_any(p.a + p.theta * l as f64 + 1.0)).collect();
    // unknowns c'_l = c_l i_l / i_d
    let primed = if d.is_multiple_of(2) {
        let m = DMatrix::from_fn(d, d, |i, l| mb(p, l, i));
        let rhs: Vec<f64> = (0..d).map(|i| -mb(p, d, i)).collect();
        solve_checked(&m, &rhs)?
    } else {
        let m = DMatrix::from_fn(d + 1, d + 1, |j, l| if l < d { mb(p, l, j) } else { 1.0 });
        let rhs: Vec<f64> = (0..=d).map(|j| -mb(p, d, j)).collect();
        let mut sol = solve_checked(&m, &rhs)?;
        sol.truncate(d);
        sol
    };
    let mut coeffs: Vec<f64> = primed.iter().enumerate().map(|(l, c)| c * (li[d] - li[l]).exp()).collect();
    coeffs.push(1.0);
    Ok(PolySeries::new(coeffs))
}

/// `Z^B_{n+1} Z^B_{n-1} / (Z^B_n)²`, the coefficient in the relations
/// between `P̃`, `Q̃` and `φ` at `b = a + 1`.
pub fn bures_ratio(p: &EnsembleParams, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::Index("the ratio needs n >= 1".into()));
    }
    let z = |k: usize| if k == 0 { Ok(LogValue::ONE) } else { partition_bures(&p.with_n(k)) };
    Ok((z(n + 1)? * z(n - 1)? / (z(n)? * z(n)?)).to_real())
}

/// Verbatim determinant form of `P̂_n` (`Q̂_n` with `q = true`):
/// `√(h_n/(θ Z_n Z_{n+1}))` times the bordered moment determinant.
/// It matches [`p_hat`] only up to a constant factor; see the tests.
pub fn hat_det_form(p: &EnsembleParams, n: usize, z: f64, q: bool) -> Result<f64> {
    check_degree(n)?;
    let m = DMatrix::from_fn(n + 1, n + 1, |i, j| {
        // P: rows i = 0..n, columns μ_{i,0..n-1} then z^i. Q: transposed layout.
        let (r, c) = if q { (j, i) } else { (i, j) };
        if c == n {
            z.powi(r as i32)
        } else if q {
            moment_c(p, c + 1, r + 1).unwrap()
        } else {
            moment_c(p, r + 1, c + 1).unwrap()
        }
    });
    let det = det_lv(&m)?;
    let zn = if n == 0 { LogValue::ONE } else { partition_cauchy(&p.with_n(n))? };
    let zn1 = partition_cauchy(&p.with_n(n + 1))?;
    let pre = (LogValue::from_real(h_n(p, n) / p.theta) / (zn * zn1)).sqrt();
    Ok((det * pre).to_real())
}

/// Coefficients of `P̂_n` (or `Q̂_n`) from the residues at `u = 0, -1, …, -n`
/// of its Mellin–Barnes integrand
/// `Γ(α+n-u+1)Γ(u) / (Γ(n+u+1)Γ(α-u+1)Γ(e-θu+1))`.
pub fn hat_residue_form(p: &EnsembleParams, n: usize, q: bool) -> Result<PolySeries> {
    check_degree(n)?;
    let e = if q { p.b } else { p.a };
    let (al, nf) = (p.alpha(), n as f64);
    let lg = |x: f64| log_gamma_complex(Complex64::new(x, 0.0)).map(|v| v.re);
    let coeffs = (0..=n)
        .map(|k| {
            let u = -(k as f64);
            // Res_{u=-k} Γ(u) = (-1)^k/k!
            let res = if k % 2 == 0 { 1.0 } else { -1.0 } * rgamma(k as f64 + 1.0);
            let mag = (lg(al + nf - u + 1.0)? - lg(nf + u + 1.0)? - lg(al - u + 1.0)?).exp();
            Ok(res * mag * rgamma(e - p.theta * u + 1.0))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PolySeries::new(coeffs))
}

/// `P̂_n(z)` (or `Q̂_n`) by Hankel-loop quadrature of the same integrand.
pub fn hat_contour(p: &EnsembleParams, n: usize, z: f64, q: bool) -> Result<f64> {
    let e = if q { p.b } else { p.a };
    let (al, nf) = (p.alpha(), n as f64);
    let spec = FoxHSpec::new(vec![(-al - nf, 1.0), (nf + 1.0, 1.0)], vec![(0.0, 1.0), (-al, 1.0), (-e, p.theta)], 1, 1)?;
    Ok(fox_h(&spec, z, Evaluation::Kind(ContourKind::HankelLoop))?.value)
}

/// `⟨f, g⟩ = ∬ f(x^θ) g(y^θ) x^a y^b e^{-x-y}/(x+y) dx dy` by graded simplex
/// quadrature.
pub fn inner_c(p: &EnsembleParams, f: &PolySeries, g: &PolySeries, order: usize) -> Result<f64> {
    let rule = graded_simplex(p.a, p.b, order)?;
    Ok(rule.apply(|x, y| f.eval_x(x, p.theta) * g.eval_x(y, p.theta)))
}

/// `⟨f, g⟩_B = ∬ (y-x)/(y+x) f(x^θ) g(y^θ) (xy)^a e^{-x-y} dx dy`.
pub fn inner_b(p: &EnsembleParams, f: &PolySeries, g: &PolySeries, order: usize) -> Result<f64> {
    let rule = graded_simplex(p.a, p.a, order)?;
    Ok(rule.apply(|x, y| (y - x) * f.eval_x(x, p.theta) * g.eval_x(y, p.theta)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::moment_b_vec;
    use crate::numerics::rel_err;
    use proptest::prelude::*;

    fn params(a: f64, b: f64, th: f64) -> EnsembleParams {
        EnsembleParams::new(a, b, th, 1).unwrap()
    }

    #[test]
    fn coefficients() {
        assert_eq!(coeff_c(0, 0, 0.3).unwrap(), 1.0);
        assert!((coeff_c(1, 1, 0.0).unwrap() + 2.0).abs() < 1e-15);
        assert!(matches!(coeff_c(2, 3, 0.0), Err(Error::Index(_))));
        // rational product: (α+n+1)…(α+n+l) / (l!(n-l)!) × (α+l)…(α+1)... written out
        let (n, l, al) = (5usize, 3usize, 0.8f64);
        let mut num = 1.0;
        for j in (l + 1)..=(n + l) {
            num *= al + j as f64;
        }
        let fact = |k: usize| (1..=k).product::<usize>() as f64;
        let want = -num / (fact(l) * fact(n - l));
        assert!(rel_err(coeff_c(n, l, al).unwrap(), want) < 1e-13);
    }

    #[test]
    fn hat_polys_small() {
        let p = params(0.0, 0.0, 1.0);
        let p1 = p_hat(&p, 1).unwrap();
        assert!((p1.coeffs[0] - 1.0).abs() < 1e-15 && (p1.coeffs[1] + 2.0).abs() < 1e-15);
        assert_eq!(p_hat(&p, 0).unwrap().coeffs, vec![1.0]);
        assert!(p_hat(&p, MAX_DEGREE).is_err());
    }

    #[test]
    fn biorthogonality() {
        let p = params(0.5, 0.3, 1.7);
        let v = inner_c(&p, &p_hat(&p, 4).unwrap(), &q_hat(&p, 2).unwrap(), 48).unwrap();
        assert!(v.abs() < 1e-8, "{v}");
        for n in 0..4 {
            let v = inner_c(&p, &p_hat(&p, n).unwrap(), &q_hat(&p, n).unwrap(), 48).unwrap();
            assert!((v - h_n(&p, n) / p.theta).abs() < 1e-8);
        }
    }

    #[test]
    fn jacobi_connection() {
        assert_eq!(jacobi_p(0, 0.4, 0.3).unwrap(), 1.0);
        assert!(jacobi_p(1, 0.0, 0.5).unwrap().abs() < 1e-16);
        let (n, al, x) = (7usize, 1.3, 0.37f64);
        let sum: f64 = (0..=n).map(|l| coeff_c(n, l, al).unwrap() * x.powi(l as i32)).sum();
        assert!(rel_err(jacobi_p(n, al, x).unwrap(), sum) < 1e-10);
    }

    #[test]
    fn monic_pair_small() {
        let p = params(0.0, 0.0, 1.0);
        let (pt, _, nd) = monic_pair(&p, 1).unwrap();
        assert!((pt.coeffs[0] + 0.5).abs() < 1e-15 && pt.coeffs[1] == 1.0);
        assert!(nd.h_n > 0.0);
        let (p0, _, _) = monic_pair(&p, 0).unwrap();
        assert_eq!(p0.coeffs, vec![1.0]);
        // ⟨P̃_2, Q̃_2⟩ = Z_3/Z_2 by quadrature
        let p = params(0.3, 0.6, 1.5);
        let (pt, qt, nd) = monic_pair(&p, 2).unwrap();
        let v = inner_c(&p, &pt, &qt, 48).unwrap();
        assert!(rel_err(v, nd.z_ratio.to_real()) < 1e-7);
    }

    #[test]
    fn phi_relations() {
        for &(a, th) in &[(0.0, 1.0), (0.4, 1.5), (0.2, 2.0)] {
            let p = EnsembleParams::bures(a, th, 1).unwrap();
            for n in 1..=5 {
                let (pt, qt, _) = monic_pair(&p, n).unwrap();
                let phi = phi_bures(&p, n).unwrap();
                let phim = phi_bures(&p, n - 1).unwrap();
                let r = bures_ratio(&p, n).unwrap();
                let avg = pt.axpy(1.0, &qt).scale(0.5);
                assert!(avg.max_rel_diff(&phi) < 1e-8, "(1) a={a} th={th} n={n}");
                assert!(qt.max_rel_diff(&phi.axpy(-r, &phim)) < 1e-8, "(2) n={n}");
                assert!(pt.max_rel_diff(&phi.axpy(r, &phim)) < 1e-8, "(3) n={n}");
            }
        }
    }

    #[test]
    fn phi_skew_orthogonality() {
        let p = EnsembleParams::bures(0.2, 2.0, 1).unwrap();
        for d in [2usize, 4] {
            let phi = phi_bures(&p, d).unwrap();
            let ratio = (partition_bures(&p.with_n(d + 2)).unwrap() / partition_bures(&p.with_n(d)).unwrap()).to_real();
            for i in 0..=d + 1 {
                let mut zi = vec![0.0; i + 1];
                zi[i] = 1.0;
                let v = inner_b(&p, &phi, &PolySeries::new(zi), 96).unwrap();
                let want = if i == d + 1 { ratio } else { 0.0 };
                assert!((v - want).abs() < 1e-7 * ratio.abs().max(1.0), "d={d} i={i}: {v} vs {want}");
            }
        }
        // odd degree: ⟨φ_3, z^j⟩_B proportional to i_j
        let phi = phi_bures(&p, 3).unwrap();
        let mut ratios = vec![];
        for j in 0..=3 {
            let mut zj = vec![0.0; j + 1];
            zj[j] = 1.0;
            ratios.push(inner_b(&p, &phi, &PolySeries::new(zj), 48).unwrap() / moment_b_vec(&p, j + 1).unwrap());
        }
        for r in &ratios {
            assert!(rel_err(*r, ratios[0]) < 1e-7);
        }
        assert_eq!(phi_bures(&p, 0).unwrap().coeffs, vec![1.0]);
    }

    #[test]
    fn residue_and_contour_forms() {
        let p = params(0.4, 0.9, 1.5);
        for n in 0..=6 {
            assert!(hat_residue_form(&p, n, false).unwrap().max_rel_diff(&p_hat(&p, n).unwrap()) < 1e-10);
            assert!(hat_residue_form(&p, n, true).unwrap().max_rel_diff(&q_hat(&p, n).unwrap()) < 1e-10);
        }
        let ph = p_hat(&p, 3).unwrap();
        for &z in &[0.3, 1.1, 2.5] {
            let c = hat_contour(&p, 3, z, false).unwrap();
            assert!((c - ph.eval(z)).abs() < 1e-9 * ph.coeffs.iter().map(|c| c.abs()).sum::<f64>());
        }
    }

    #[test]
    fn determinant_forms() {
        // the product P̂_n(x)Q̂_n(y) matches; individually they differ by a
        // constant, which is ±1 when a = b
        let p = params(0.3, 0.8, 1.5);
        for n in 0..=4 {
            let (ph, qh) = (p_hat(&p, n).unwrap(), q_hat(&p, n).unwrap());
            let pts = [0.2, 0.7, 1.3, 2.1, 3.4];
            let ratio0 = hat_det_form(&p, n, pts[0], false).unwrap() / ph.eval(pts[0]);
            for (i, &x) in pts.iter().enumerate() {
                let y = pts[(i + 2) % 5];
                let dp = hat_det_form(&p, n, x, false).unwrap();
                let dq = hat_det_form(&p, n, y, true).unwrap();
                assert!(rel_err(dp * dq, ph.eval(x) * qh.eval(y)) < 1e-7, "n={n}");
                assert!(rel_err(dp / ph.eval(x), ratio0) < 1e-7);
            }
        }
        let p = params(0.5, 0.5, 1.5);
        for n in 0..=4 {
            let d = hat_det_form(&p, n, 0.9, false).unwrap();
            let s = if n % 2 == 0 { 1.0 } else { -1.0 };
            assert!(rel_err(s * d, p_hat(&p, n).unwrap().eval(0.9)) < 1e-7);
        }
    }

    proptest! {
        #[test]
        fn horner_matches_terms(c in proptest::collection::vec(-3.0f64..3.0, 1..10), z in -10.0f64..10.0) {
            let p = PolySeries::new(c);
            let scale: f64 = p.coeffs.iter().enumerate().map(|(l, c)| c.abs() * z.abs().powi(l as i32)).sum();
            prop_assert!((p.eval(z) - p.eval_terms(z)).abs() <= 1e-12 * scale.max(1e-300));
        }

        #[test]
        fn jacobi_recurrence_vs_sum(n in 0usize..13, al in -0.9f64..3.0, x in 0.0f64..1.0) {
            let sum: f64 = (0..=n).map(|l| coeff_c(n, l, al).unwrap() * x.powi(l as i32)).sum();
            let scale: f64 = (0..=n).map(|l| (coeff_c(n, l, al).unwrap() * x.powi(l as i32)).abs()).sum();
            prop_assert!((jacobi_p(n, al, x).unwrap() - sum).abs() <= 1e-12 * scale);
        }
    }
}
