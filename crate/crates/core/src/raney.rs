//! Raney numbers `R_{p,r}(n)`, the Fuss–Catalan special case, and the
//! Sommers–Życzkowski global density of the Bures ensemble, whose moments
//! are `R_{3/2,1/2}(n)`.

use crate::error::{Error, Result};
use crate::numerics::adaptive::integrate;
use crate::numerics::gamma::ln_gamma_signed;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Right end of the support of [`sz_density`], `3√3/2`.
pub const L_SZ: f64 = 2.598_076_211_353_316;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RaneyParams {
    pub p: f64,
    pub r: f64,
}

impl RaneyParams {
    pub fn new(p: f64, r: f64) -> Result<Self> {
        if !(p > 0.0) || !(r > 0.0) {
            return Err(Error::domain(format!("Raney parameters need p, r > 0; got ({p}, {r})")));
        }
        Ok(RaneyParams { p, r })
    }

    pub fn number(&self, n: u32) -> Result<f64> {
        raney(self.p, self.r, n)
    }

    /// Leading small-`x` form `sin(rπ/p)/π · x^{-(p-r)/p}` of the density
    /// with these moments; needs `r < p`.
    pub fn small_x_asymptote(&self, x: f64) -> Result<f64> {
        if !(self.r < self.p) {
            return Err(Error::domain("the small-x form needs r < p"));
        }
        Ok((self.r * PI / self.p).sin() / PI * x.powf(-(self.p - self.r) / self.p))
    }
}

/// Generalised binomial `C(X, n) = Π_{j=1}^n (X-n+j)/j`. The running
/// product stays an exact integer whenever `X` is one (up to 2^53).
fn binomial(x: f64, n: u32) -> f64 {
    let mut acc = 1.0;
    for j in 1..=n {
        acc = acc * (x - n as f64 + j as f64) / j as f64;
    }
    acc
}

fn is_nonpositive_integer(v: f64) -> bool {
    v <= 0.0 && v == v.round()
}

/// `R_{p,r}(n) = r/(pn+r) · C(pn+r, n)`.
pub fn raney(p: f64, r: f64, n: u32) -> Result<f64> {
    let x = p * n as f64 + r;
    if is_nonpositive_integer(x) {
        return Err(Error::Pole(format!("pn + r = {x} is a nonpositive integer")));
    }
    if n <= 170 {
        return Ok(r * binomial(x, n) / x);
    }
    // Γ(X+1)/(Γ(n+1)Γ(X-n+1)) in logs; a pole of the last gamma gives 0
    if is_nonpositive_integer(x - n as f64 + 1.0) {
        return Ok(0.0);
    }
    let (l1, s1) = ln_gamma_signed(x + 1.0)?;
    let (l2, _) = ln_gamma_signed(n as f64 + 1.0)?;
    let (l3, s3) = ln_gamma_signed(x - n as f64 + 1.0)?;
    Ok(f64::from(s1 * s3) * r / x * (l1 - l2 - l3).exp())
}

/// `1/(θn+1) · C(n(1+θ), n)`, the Fuss–Catalan number with parameter `θ+1`.
pub fn fuss_catalan_moment(theta: f64, n: u32) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(Error::domain(format!("theta must be positive, got {theta}")));
    }
    Ok(binomial(n as f64 * (1.0 + theta), n) / (theta * n as f64 + 1.0))
}

/// Global density on `[0, 3√3/2]`:
/// `((L/x + √(L²/x²−1))^{2/3} − (L/x − √(L²/x²−1))^{2/3}) / (2π√3)`.
pub fn sz_density(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::domain(format!("the density needs x > 0, got {x}")));
    }
    if x >= L_SZ {
        return Ok(0.0);
    }
    // the two bracketed bases multiply to 1; taking the reciprocal avoids
    // the cancellation in the second one for small x
    let u = (L_SZ + (L_SZ * L_SZ - x * x).sqrt()) / x;
    let c = u.cbrt();
    Ok((c * c - 1.0 / (c * c)) / (2.0 * PI * 3f64.sqrt()))
}

/// `∫₀^L x^n ρ(x) dx` after `x = s³`, which makes the integrand regular at 0.
pub fn sz_moment(n: u32, tol: f64) -> Result<f64> {
    let f = |s: f64| {
        let x = s * s * s;
        if x <= 0.0 || x >= L_SZ {
            return 0.0;
        }
        3.0 * s * s * x.powi(n as i32) * sz_density(x).unwrap_or(0.0)
    };
    Ok(integrate(f, 0.0, L_SZ.cbrt(), 1e-15, tol)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn support_constant() {
        assert!((L_SZ - 1.5 * 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn catalan_exact() {
        let want = [1.0, 1.0, 2.0, 5.0, 14.0, 42.0];
        for (n, w) in want.iter().enumerate() {
            assert_eq!(raney(2.0, 1.0, n as u32).unwrap(), *w);
        }
    }

    #[test]
    fn small_values() {
        assert_eq!(raney(1.5, 0.5, 1).unwrap(), 0.5);
        assert_eq!(raney(0.7, 0.3, 0).unwrap(), 1.0);
        assert_eq!(fuss_catalan_moment(1.0, 3).unwrap(), 5.0);
        assert!((fuss_catalan_moment(2.0, 2).unwrap() - 3.0).abs() < 1e-14);
        assert!(matches!(raney(1.0, -2.0, 2), Err(Error::Pole(_))));
        assert!(RaneyParams::new(0.0, 1.0).is_err());
    }

    #[test]
    fn large_n_log_path() {
        // R_{2,1}(200) vs its ratio recurrence C_{n+1} = C_n · 2(2n+1)/(n+2)
        let mut c = raney(2.0, 1.0, 170).unwrap();
        for n in 170..200 {
            c *= 2.0 * (2 * n + 1) as f64 / (n + 2) as f64;
        }
        let v = raney(2.0, 1.0, 200).unwrap();
        assert!(((v - c) / c).abs() < 1e-11);
    }

    #[test]
    fn density_edges() {
        assert_eq!(sz_density(L_SZ).unwrap(), 0.0);
        assert_eq!(sz_density(3.0).unwrap(), 0.0);
        assert!(sz_density(L_SZ * (1.0 - 1e-12)).unwrap().abs() < 1e-5);
        assert!(sz_density(0.0).is_err());
    }

    #[test]
    fn moments_are_raney() {
        for n in 0..=5 {
            let m = sz_moment(n, 1e-12).unwrap();
            let r = raney(1.5, 0.5, n).unwrap();
            assert!(((m - r) / r).abs() < 1e-9, "n = {n}: {m} vs {r}");
        }
    }

    #[test]
    fn small_x_form() {
        let rp = RaneyParams::new(1.5, 0.5).unwrap();
        for x in [1e-4, 1e-5, 1e-6] {
            let ratio = sz_density(x).unwrap() / rp.small_x_asymptote(x).unwrap();
            assert!((0.98..=1.02).contains(&ratio), "{x}: {ratio}");
        }
        let direct = 3f64.sqrt() / (2.0 * PI) * 1e-5f64.powf(-2.0 / 3.0);
        assert!((rp.small_x_asymptote(1e-5).unwrap() / direct - 1.0).abs() < 1e-13);
        assert!(RaneyParams::new(1.0, 2.0).unwrap().small_x_asymptote(0.1).is_err());
    }

    proptest! {
        #[test]
        fn fuss_catalan_is_raney(theta in 0.05f64..6.0, n in 0u32..40) {
            let a = fuss_catalan_moment(theta, n).unwrap();
            let b = raney(theta + 1.0, 1.0, n).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * b.abs());
        }
    }
}
