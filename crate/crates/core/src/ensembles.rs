//! Ensemble parameters, bimoments and partition functions of the
//! θ-deformed Cauchy two-matrix model and the θ-deformed Bures ensemble.
//!
//! Partition functions are normalised so that `Z_N = det[I_{j,k}]`: the
//! `1/N!` factors of the eigenvalue integrals are absorbed.

use crate::error::{Error, Result};
use crate::numerics::gamma::{ln_gamma, ln_gamma_pos};
use crate::numerics::linalg::{cauchy_double_alternant, det_lv, pfaffian, pfaffian_bordered, SkewMatrix};
use crate::numerics::LogValue;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleParams {
    pub a: f64,
    pub b: f64,
    pub theta: f64,
    pub n: usize,
}

impl EnsembleParams {
    pub fn new(a: f64, b: f64, theta: f64, n: usize) -> Result<Self> {
        let p = EnsembleParams { a, b, theta, n };
        p.validate()?;
        Ok(p)
    }

    /// Parameters of the Bures ensemble with weight exponent `a`; `b` is
    /// carried as `a + 1`, the Cauchy companion the Bures kernels use.
    pub fn bures(a: f64, theta: f64, n: usize) -> Result<Self> {
        Self::new(a, a + 1.0, theta, n)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > -1.0) || !(self.b > -1.0) {
            return Err(Error::domain(format!("need a > -1 and b > -1, got a = {}, b = {}", self.a, self.b)));
        }
        // a, b > -1 alone allows a + b + 1 <= 0, where alpha <= -1
        if !(self.a + self.b + 1.0 > 0.0) {
            return Err(Error::domain(format!("need a + b + 1 > 0 (alpha > -1), got {}", self.a + self.b + 1.0)));
        }
        if !(self.theta > 0.0) || !self.theta.is_finite() {
            return Err(Error::domain(format!("need theta > 0, got {}", self.theta)));
        }
        if self.n == 0 {
            return Err(Error::domain("N must be at least 1"));
        }
        Ok(())
    }

    /// `α = (a+b+1)/θ - 1`
    pub fn alpha(&self) -> f64 {
        (self.a + self.b + 1.0) / self.theta - 1.0
    }

    /// `β = (1+a+b)/θ`
    pub fn beta(&self) -> f64 {
        (1.0 + self.a + self.b) / self.theta
    }

    /// `β̂ = (a+1)/θ - 1`
    pub fn beta_hat(&self) -> f64 {
        (self.a + 1.0) / self.theta - 1.0
    }

    pub fn with_n(&self, n: usize) -> Self {
        EnsembleParams { n, ..*self }
    }

    /// Same `(a, θ, N)` with `b = a + 1`.
    pub fn bures_companion(&self) -> Self {
        EnsembleParams { b: self.a + 1.0, ..*self }
    }
}

fn check_index(j: usize, k: usize) -> Result<()> {
    if j == 0 || k == 0 {
        return Err(Error::Index(format!("moment indices start at 1, got ({j}, {k})")));
    }
    Ok(())
}

/// `ln Γ(e + θ(j-1) + 1)` for `e > -1`.
fn ln_i(e: f64, theta: f64, j: usize) -> f64 {
    ln_gamma_pos_any(e + theta * (j as f64 - 1.0) + 1.0)
}

fn ln_gamma_pos_any(x: f64) -> f64 {
    if x >= 0.5 {
        ln_gamma_pos(x)
    } else {
        ln_gamma(x).expect("positive argument")
    }
}

/// `I^C_{j,k} = Γ(a+θ(j-1)+1) Γ(b+θ(k-1)+1) / (1+a+b+θ(j+k-2))`.
pub fn moment_c(p: &EnsembleParams, j: usize, k: usize) -> Result<f64> {
    p.validate()?;
    check_index(j, k)?;
    let den = 1.0 + p.a + p.b + p.theta * (j + k - 2) as f64;
    Ok((ln_i(p.a, p.theta, j) + ln_i(p.b, p.theta, k)).exp() / den)
}

/// `i^B_j = Γ(a+θ(j-1)+1)`.
pub fn moment_b_vec(p: &EnsembleParams, j: usize) -> Result<f64> {
    p.validate()?;
    check_index(j, 1)?;
    Ok(ln_i(p.a, p.theta, j).exp())
}

/// Antisymmetric Bures bimoment, from `2 I^C_{j,k}(a, a+1) = I^B_{j,k} + i_j i_k`.
pub fn moment_b(p: &EnsembleParams, j: usize, k: usize) -> Result<f64> {
    let c = moment_c(&p.bures_companion(), j, k)?;
    Ok(2.0 * c - moment_b_vec(p, j)? * moment_b_vec(p, k)?)
}

/// Kernel of the scaled Bures moment, `I^B_{j,k} / (i_j i_k)`, which avoids
/// the cancellation in the relation above.
fn moment_b_scaled(p: &EnsembleParams, j: usize, k: usize) -> f64 {
    p.theta * (k as f64 - j as f64) / (2.0 * p.a + 2.0 + p.theta * (j + k - 2) as f64)
}

/// Closed product form:
/// `Z^C_N = θ^{-N} ∏_{j=1}^N Γ(a+θ(j-1)+1) Γ(b+θ(j-1)+1) ((j-1)!)² Γ(β+j-1)/Γ(β+j+N-1)`.
pub fn partition_cauchy(p: &EnsembleParams) -> Result<LogValue> {
    p.validate()?;
    let n = p.n;
    let beta = p.beta();
    let mut l = -(n as f64) * p.theta.ln();
    for j in 1..=n {
        let jf = j as f64;
        l += ln_i(p.a, p.theta, j) + ln_i(p.b, p.theta, j);
        l += 2.0 * ln_gamma_pos(jf);
        l += ln_gamma_pos_any(beta + jf - 1.0) - ln_gamma_pos_any(beta + jf + n as f64 - 1.0);
    }
    Ok(LogValue::from_log(1, l))
}

/// `det[I^C_{j,k}]` with the Γ factors pulled out of rows and columns; the
/// remaining Cauchy-type matrix goes through LU for `N ≤ 8` and through the
/// double-alternant product beyond.
pub fn partition_cauchy_det(p: &EnsembleParams) -> Result<LogValue> {
    p.validate()?;
    let n = p.n;
    let mut pre = 0.0;
    for j in 1..=n {
        pre += ln_i(p.a, p.theta, j) + ln_i(p.b, p.theta, j);
    }
    let core = if n <= 8 {
        let m = DMatrix::from_fn(n, n, |j, k| 1.0 / (1.0 + p.a + p.b + p.theta * (j + k) as f64));
        det_lv(&m)?
    } else {
        let x: Vec<f64> = (0..n).map(|j| 1.0 + p.a + p.b + p.theta * j as f64).collect();
        let y: Vec<f64> = (0..n).map(|k| p.theta * k as f64).collect();
        cauchy_double_alternant(&x, &y)?
    };
    Ok(core * LogValue::from_log(1, pre))
}

/// Bures partition function from the Pfaffian of the bimoments (bordered by
/// `i^B` for odd `N`). `b` is ignored.
pub fn partition_bures(p: &EnsembleParams) -> Result<LogValue> {
    p.validate()?;
    let n = p.n;
    let mut pre = 0.0;
    for j in 1..=n {
        pre += ln_i(p.a, p.theta, j);
    }
    let m = SkewMatrix::from_upper(n, |j, k| moment_b_scaled(p, j + 1, k + 1));
    let pf = if n.is_multiple_of(2) { pfaffian(&m)? } else { pfaffian_bordered(&m, &vec![1.0; n])? };
    let z = pf * LogValue::from_log(1, pre);
    if z.sign() <= 0 {
        return Err(Error::Sign(format!("Bures Pfaffian came out nonpositive ({z}) at N = {n}")));
    }
    Ok(z)
}

/// Product evaluation of `Z^B_N`, with the product over `j = 0..N-1`
/// restored. Experimental: compare against [`partition_bures`] rather than
/// trusting it.
pub fn partition_bures_closed(p: &EnsembleParams) -> Result<LogValue> {
    p.validate()?;
    let (n, th) = (p.n as f64, p.theta);
    let bh = p.beta_hat();
    let ln2 = std::f64::consts::LN_2;
    let mut l = 0.5 * n * std::f64::consts::PI.ln() - (th * n * n + 2.0 * p.a * n - (th - 1.0) * n) * ln2;
    for j in 0..p.n {
        let jf = j as f64;
        let s = bh + jf + 1.0;
        l += ln_gamma_pos(jf + 1.0) + ln_gamma_pos_any(2.0 * bh + jf + 2.0) - ln_gamma_pos_any(th * s + 0.5);
        l += 0.5
            * (ln_gamma_pos_any(2.0 * th * s) + ln_gamma_pos_any(2.0 * th * s + 1.0)
                - ln_gamma_pos_any(2.0 * s)
                - ln_gamma_pos_any(2.0 * s + 1.0));
    }
    Ok(LogValue::from_log(1, l))
}

/// Outcome of comparing the closed Bures product with the Pfaffian route.
#[derive(Debug, Clone, Serialize)]
pub struct ClosedFormReport {
    pub n: usize,
    pub pfaffian: LogValue,
    pub closed: LogValue,
    /// `ln(closed / pfaffian)`
    pub log_ratio: f64,
    pub agrees: bool,
}

pub fn compare_bures_closed(p: &EnsembleParams, tol: f64) -> Result<ClosedFormReport> {
    let pf = partition_bures(p)?;
    let cl = partition_bures_closed(p)?;
    let log_ratio = cl.log_mag() - pf.log_mag();
    Ok(ClosedFormReport { n: p.n, pfaffian: pf, closed: cl, log_ratio, agrees: log_ratio.abs() <= tol })
}

/// Moment tables and partition functions for one parameter set, built once
/// and read-only afterwards.
#[derive(Debug, Clone)]
pub struct EnsembleSession {
    pub params: EnsembleParams,
    moments_c: Vec<Vec<f64>>,
    z_cauchy: Vec<LogValue>,
}

impl EnsembleSession {
    /// Tables up to size `params.n + 1` (so `Z_{n+1}` is available).
    pub fn new(params: EnsembleParams) -> Result<Self> {
        params.validate()?;
        let m = params.n + 1;
        let moments_c =
            (1..=m).map(|j| (1..=m).map(|k| moment_c(&params, j, k)).collect::<Result<Vec<_>>>()).collect::<Result<Vec<_>>>()?;
        let mut z_cauchy = vec![LogValue::ONE];
        for k in 1..=m {
            z_cauchy.push(partition_cauchy(&params.with_n(k))?);
        }
        Ok(EnsembleSession { params, moments_c, z_cauchy })
    }

    /// `I^C_{j,k}`, 1-based.
    pub fn moment_c(&self, j: usize, k: usize) -> Result<f64> {
        check_index(j, k)?;
        self.moments_c
            .get(j - 1)
            .and_then(|r| r.get(k - 1))
            .copied()
            .ok_or_else(|| Error::Index(format!("({j}, {k}) outside the cached table")))
    }

    /// `Z^C_k` for `0 ≤ k ≤ N + 1` (`Z_0 = 1`).
    pub fn z_cauchy(&self, k: usize) -> Result<LogValue> {
        self.z_cauchy.get(k).copied().ok_or_else(|| Error::Index(format!("Z_{k} outside the cached range")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::quadrature::simplex_quad_2d;
    use crate::numerics::rel_err;
    use proptest::prelude::*;

    fn lv(x: LogValue) -> f64 {
        x.to_real()
    }

    #[test]
    fn params_derived() {
        let p = EnsembleParams::new(0.5, 0.25, 2.0, 3).unwrap();
        assert!((p.alpha() - (1.75 / 2.0 - 1.0)).abs() < 1e-15);
        assert!((p.beta() - 0.875).abs() < 1e-15);
        assert!((p.beta_hat() - (-0.25)).abs() < 1e-15);
        assert!(EnsembleParams::new(-0.9, -0.9, 1.0, 1).is_err());
        assert!(EnsembleParams::new(-1.0, 0.0, 1.0, 1).is_err());
        assert!(EnsembleParams::new(0.0, 0.0, 0.0, 1).is_err());
    }

    #[test]
    fn moment_c_values() {
        let p = EnsembleParams::new(0.0, 0.0, 1.0, 2).unwrap();
        assert!((moment_c(&p, 1, 1).unwrap() - 1.0).abs() < 1e-15);
        assert!((moment_c(&p, 1, 2).unwrap() - 0.5).abs() < 1e-15);
        assert!(moment_c(&p, 0, 1).is_err());
    }

    #[test]
    fn moment_c_quadrature() {
        // I = ∫∫ x^{p} y^{q} e^{-x-y}/(x+y) = Γ(p+q+1) ∫ u^p (1-u)^q du
        let p = EnsembleParams::new(0.5, 0.25, 2.0, 2).unwrap();
        let (e1, e2) = (p.a + p.theta, p.b);
        let rule = simplex_quad_2d(e1, e2, 20, 40).unwrap();
        // the rule already carries x^e1 y^e2 e^{-x-y}/(x+y)
        let q = rule.apply(|_, _| 1.0);
        let want = ln_gamma(3.5).unwrap().exp() * ln_gamma(1.25).unwrap().exp() / 3.75;
        assert!(rel_err(moment_c(&p, 2, 1).unwrap(), want) < 1e-14);
        assert!(rel_err(q, want) < 1e-9, "{q} vs {want}");
    }

    #[test]
    fn moment_b_values() {
        let p = EnsembleParams::bures(0.0, 1.0, 2).unwrap();
        assert!((moment_b_vec(&p, 1).unwrap() - 1.0).abs() < 1e-15);
        for j in 1..5 {
            assert!(moment_b(&p, j, j).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn moment_b_quadrature() {
        let p = EnsembleParams::bures(0.3, 1.5, 2).unwrap();
        let (e1, e2) = (p.a, p.a + p.theta);
        let rule = simplex_quad_2d(e1, e2, 20, 40).unwrap();
        let q = rule.apply(|x, y| y - x);
        let v = moment_b(&p, 1, 2).unwrap();
        assert!(rel_err(v, q) < 1e-9, "{v} vs {q}");
        let scaled = moment_b_scaled(&p, 1, 2) * moment_b_vec(&p, 1).unwrap() * moment_b_vec(&p, 2).unwrap();
        assert!(rel_err(scaled, v) < 1e-13);
    }

    #[test]
    fn cauchy_small() {
        let p1 = EnsembleParams::new(0.0, 0.0, 1.0, 1).unwrap();
        assert!((lv(partition_cauchy(&p1).unwrap()) - 1.0).abs() < 1e-14);
        let p2 = EnsembleParams::new(0.0, 0.0, 1.0, 2).unwrap();
        assert!((lv(partition_cauchy(&p2).unwrap()) - 1.0 / 12.0).abs() < 1e-15);
        assert!((lv(partition_cauchy_det(&p2).unwrap()) - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn cauchy_routes_agree() {
        for &(a, b, th) in &[(0.2, 0.7, 1.5), (0.0, 0.0, 2.0), (0.5, 0.25, 1.0)] {
            // LU on the Cauchy-type core loses ~1 digit per size step; the
            // alternant takes over above 8
            for n in (1..=6).chain(9..=12) {
                let p = EnsembleParams::new(a, b, th, n).unwrap();
                let x = partition_cauchy(&p).unwrap();
                let y = partition_cauchy_det(&p).unwrap();
                let tol = if n <= 8 { 1e-9 } else { 1e-11 };
                assert!(x.rel_diff(&y) < tol, "n={n}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn cauchy_theta_one_is_laguerre_case() {
        // θ = 1: det of Γ(a+j)Γ(b+k)/(a+b+j+k-1), unscaled
        let (a, b) = (0.3, 0.9);
        for n in 1..=5 {
            let m = DMatrix::from_fn(n, n, |j, k| {
                let (j, k) = (j as f64 + 1.0, k as f64 + 1.0);
                (ln_gamma(a + j).unwrap() + ln_gamma(b + k).unwrap()).exp() / (a + b + j + k - 1.0)
            });
            let d = det_lv(&m).unwrap();
            let z = partition_cauchy(&EnsembleParams::new(a, b, 1.0, n).unwrap()).unwrap();
            assert!(d.rel_diff(&z) < 1e-9);
        }
    }

    #[test]
    fn bures_square_identity() {
        for &(a, th) in &[(0.0, 1.0), (0.5, 1.0), (0.2, 1.5), (0.0, 2.0)] {
            for n in 1..=6 {
                let p = EnsembleParams::bures(a, th, n).unwrap();
                let zb = partition_bures(&p).unwrap();
                let zc = partition_cauchy(&p.bures_companion()).unwrap();
                let lhs = zb * zb;
                let rhs = zc * LogValue::from_real(2f64.powi(n as i32));
                assert!(lhs.rel_diff(&rhs) < 1e-9, "a={a} th={th} n={n}");
            }
        }
        let p = EnsembleParams::bures(0.0, 1.0, 1).unwrap();
        assert!((lv(partition_bures(&p).unwrap()) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bures_closed_is_reported() {
        let p = EnsembleParams::bures(0.0, 1.0, 1).unwrap();
        let r = compare_bures_closed(&p, 1e-8).unwrap();
        assert!(r.log_ratio.is_finite());
    }

    #[test]
    fn session_cache() {
        let p = EnsembleParams::new(0.3, 0.6, 1.5, 3).unwrap();
        let s = EnsembleSession::new(p).unwrap();
        assert_eq!(s.moment_c(2, 3).unwrap(), moment_c(&p, 2, 3).unwrap());
        assert!(s.z_cauchy(4).unwrap().rel_diff(&partition_cauchy(&p.with_n(4)).unwrap()) < 1e-15);
        assert!(s.z_cauchy(5).is_err());
    }

    proptest! {
        #[test]
        fn moment_relation(a in -0.9f64..2.0, th in 0.3f64..3.0, j in 1usize..6, k in 1usize..6) {
            let p = EnsembleParams::bures(a, th, 1).unwrap();
            let lhs = 2.0 * moment_c(&p.bures_companion(), j, k).unwrap();
            let rhs = moment_b(&p, j, k).unwrap() + moment_b_vec(&p, j).unwrap() * moment_b_vec(&p, k).unwrap();
            prop_assert!(rel_err(lhs, rhs) < 1e-12);
            prop_assert!((moment_b(&p, j, k).unwrap() + moment_b(&p, k, j).unwrap()).abs() <= 1e-12 * lhs.abs());
        }

        #[test]
        fn partitions_positive(a in -0.5f64..2.0, b in -0.5f64..2.0, th in 0.8f64..3.0, n in 1usize..6) {
            let p = EnsembleParams::new(a, b, th, n).unwrap();
            prop_assert_eq!(partition_cauchy(&p).unwrap().sign(), 1);
            prop_assert!(partition_cauchy(&p).unwrap().rel_diff(&partition_cauchy_det(&p).unwrap()) < 1e-8);
        }
    }
}
