//! Gamma-function family: complex and real log-gamma, reciprocal gamma.
//!
//! Everything rests on the Stirling series with an upward shift to
//! `Re z >= 7`; the left half-plane uses either the recurrence (analytic
//! branch) or the reflection formula (value correct modulo `2πi`, cheaper far
//! from the origin).

use crate::error::{Error, Result};
use crate::numerics::LogValue;
use num_complex::Complex64;
use std::f64::consts::PI;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const LN_PI: f64 = 1.144_729_885_849_400_2;
const SHIFT_TO: f64 = 7.0;
const POLE_TOL: f64 = 1e-12;

// B_{2k} / (2k (2k-1)), k = 1..10
const STIRLING: [f64; 10] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360_360.0,
    1.0 / 156.0,
    -3617.0 / 122_400.0,
    43867.0 / 244_188.0,
    -174_611.0 / 125_400.0,
];

fn stirling(z: Complex64) -> Complex64 {
    let w = z.inv();
    let w2 = w * w;
    let mut series = Complex64::new(0.0, 0.0);
    for c in STIRLING.iter().rev() {
        series = series * w2 + c;
    }
    (z - 0.5) * z.ln() - z + LN_SQRT_2PI + series * w
}

fn stirling_real(x: f64) -> f64 {
    let w = 1.0 / x;
    let w2 = w * w;
    let mut series = 0.0;
    for c in STIRLING.iter().rev() {
        series = series * w2 + c;
    }
    (x - 0.5) * x.ln() - x + LN_SQRT_2PI + series * w
}

fn near_pole(re: f64, im: f64) -> bool {
    im.abs() < POLE_TOL && re <= POLE_TOL && (re - re.round()).abs() < POLE_TOL
}

/// Principal-branch `log Γ(z)`, analytic continuation of the real log-gamma
/// from the positive axis (so `Im log Γ(-0.5) = -π`).
pub fn log_gamma_complex(z: Complex64) -> Result<Complex64> {
    if !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::domain(format!("non-finite argument {z}")));
    }
    if near_pole(z.re, z.im) {
        return Err(Error::Pole(format!("{z}")));
    }
    let mut w = z;
    let mut shift = Complex64::new(0.0, 0.0);
    while w.re < SHIFT_TO {
        shift += w.ln();
        w += 1.0;
    }
    Ok(stirling(w) - shift)
}

/// `sin(πz)` with exact argument reduction on the real part.
fn sin_pi_complex(z: Complex64) -> Complex64 {
    let (s, c) = sincos_pi(z.re);
    let y = PI * z.im;
    Complex64::new(s * y.cosh(), c * y.sinh())
}

/// `(sin πx, cos πx)` reduced to `[-1/4, 1/4]` first.
pub(crate) fn sincos_pi(x: f64) -> (f64, f64) {
    let n = (2.0 * x).round();
    let r = x - 0.5 * n;
    let (s, c) = (PI * r).sin_cos();
    match (n as i64).rem_euclid(4) {
        0 => (s, c),
        1 => (c, -s),
        2 => (-s, -c),
        _ => (-c, s),
    }
}

pub(crate) fn sin_pi(x: f64) -> f64 {
    sincos_pi(x).0
}

/// `log sin(πz)` modulo `2πi`, safe for large `|Im z|`.
fn log_sin_pi(z: Complex64) -> Complex64 {
    let i = Complex64::i();
    if z.im > 10.0 {
        // sin(πz) = (i/2) e^{-iπz} (1 - e^{2iπz})
        let e = (2.0 * PI * i * z).exp();
        -i * PI * z + Complex64::new(0.5f64.ln(), PI / 2.0) + (1.0 - e).ln()
    } else if z.im < -10.0 {
        let e = (-2.0 * PI * i * z).exp();
        i * PI * z + Complex64::new(0.5f64.ln(), -PI / 2.0) + (1.0 - e).ln()
    } else {
        sin_pi_complex(z).ln()
    }
}

/// `log Γ(z)` valid modulo `2πi`: enough whenever only `Γ(z)` itself is
/// needed. Uses reflection in the left half-plane, so its cost does not grow
/// with `|Re z|`.
pub fn log_gamma_mod(z: Complex64) -> Result<Complex64> {
    if near_pole(z.re, z.im) {
        return Err(Error::Pole(format!("{z}")));
    }
    if z.re >= 0.5 {
        return log_gamma_complex(z);
    }
    let lg = log_gamma_complex(1.0 - z)?;
    Ok(Complex64::new(LN_PI, 0.0) - log_sin_pi(z) - lg)
}

/// `(log|Γ(x)|, sign Γ(x))` for real `x` off the poles.
pub fn ln_gamma_signed(x: f64) -> Result<(f64, i8)> {
    if !x.is_finite() {
        return Err(Error::domain(format!("non-finite argument {x}")));
    }
    if near_pole(x, 0.0) {
        return Err(Error::Pole(format!("{x}")));
    }
    if x >= 0.5 {
        return Ok((ln_gamma_pos(x), 1));
    }
    let s = sin_pi(x);
    let lg = ln_gamma_pos(1.0 - x);
    Ok((LN_PI - s.abs().ln() - lg, if s > 0.0 { 1 } else { -1 }))
}

/// `log Γ(x)` for `x >= 0.5` (no error path).
pub(crate) fn ln_gamma_pos(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    if x >= SHIFT_TO {
        return stirling_real(x);
    }
    let mut w = x;
    let mut prod = 1.0;
    while w < SHIFT_TO {
        prod *= w;
        w += 1.0;
    }
    stirling_real(w) - prod.ln()
}

/// `log Γ(x)` for positive `x`.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if x <= 0.0 {
        return Err(Error::domain(format!("ln_gamma needs x > 0, got {x}")));
    }
    if x < 0.5 {
        return Ok(ln_gamma_signed(x)?.0);
    }
    Ok(ln_gamma_pos(x))
}

/// `Γ(x)` as a [`LogValue`].
pub fn gamma_lv(x: f64) -> Result<LogValue> {
    let (l, s) = ln_gamma_signed(x)?;
    Ok(LogValue::from_log(s, l))
}

/// `Γ(x)`; overflows to `inf` past 171.6.
pub fn gamma(x: f64) -> Result<f64> {
    if x == x.round() && x > 0.0 && x < 30.0 {
        let mut f = 1.0;
        for k in 2..(x as u64) {
            f *= k as f64;
        }
        return Ok(f);
    }
    Ok(gamma_lv(x)?.to_real())
}

/// `1/Γ(x)` as a [`LogValue`]; exactly zero at the poles.
pub fn rgamma_lv(x: f64) -> LogValue {
    if x <= 0.0 && x == x.round() {
        return LogValue::ZERO;
    }
    match ln_gamma_signed(x) {
        Ok((l, s)) => LogValue::from_log(s, -l),
        // within the pole tolerance: 1/Γ(x) ≈ (-1)^n n! (x + n)
        Err(_) => {
            let n = -x.round();
            let lf = ln_gamma_pos(n + 1.0);
            let d = x + n;
            let sign = if (n as i64) % 2 == 0 { 1.0 } else { -1.0 } * d.signum();
            LogValue::from_log(sign as i8, lf + d.abs().ln())
        }
    }
}

/// `1/Γ(x)`, entire.
pub fn rgamma(x: f64) -> f64 {
    rgamma_lv(x).to_real()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn special_values() {
        assert!(log_gamma_complex(c(1.0, 0.0)).unwrap().norm() < 3e-15);
        assert!(log_gamma_complex(c(2.0, 0.0)).unwrap().norm() < 3e-15);
        let half = log_gamma_complex(c(0.5, 0.0)).unwrap();
        assert!((half.re - 0.572_364_942_924_700_1).abs() < 3e-15);
        assert!(matches!(log_gamma_complex(c(0.0, 0.0)), Err(Error::Pole(_))));
        assert!(matches!(log_gamma_complex(c(-3.0, 1e-14)), Err(Error::Pole(_))));
    }

    #[test]
    fn negative_axis_branch() {
        let v = log_gamma_complex(c(-0.5, 0.0)).unwrap();
        // Γ(-1/2) = -2√π
        assert!((v.re - (2.0 * PI.sqrt()).ln()).abs() < 1e-14);
        assert!((v.im + PI).abs() < 1e-14);
        let v = log_gamma_complex(c(-2.5, 0.0)).unwrap();
        assert!((v.im + 3.0 * PI).abs() < 1e-13);
    }

    #[test]
    fn factorials() {
        for n in 1..25u32 {
            let exact: f64 = (1..n).map(f64::from).product();
            let lg = ln_gamma_pos(f64::from(n));
            assert!((lg.exp() - exact).abs() <= 2e-14 * exact.max(1.0) * (n as f64));
            assert_eq!(gamma(f64::from(n)).unwrap(), exact);
        }
    }

    #[test]
    fn reciprocal_gamma_vanishes_at_poles() {
        assert_eq!(rgamma(0.0), 0.0);
        assert_eq!(rgamma(-4.0), 0.0);
        assert!((rgamma(-0.5) + 0.5 / PI.sqrt()).abs() < 1e-15);
        // continuous through a pole
        let x = -2.0 + 1e-13;
        assert!((rgamma(x) - 2.0 * (x + 2.0)).abs() < 1e-24);
    }

    #[test]
    fn mod_branch_matches_value() {
        for &z in &[c(-7.3, 0.2), c(-40.2, -3.0), c(-0.3, 25.0), c(-120.7, 0.0)] {
            let a = log_gamma_complex(z).unwrap();
            let b = log_gamma_mod(z).unwrap();
            assert!((a.re - b.re).abs() < 1e-11 * a.re.abs().max(1.0), "{z}: {a} {b}");
            let k = (a.im - b.im) / (2.0 * PI);
            assert!((k - k.round()).abs() < 1e-9, "{z}: {a} {b}");
        }
    }

    #[test]
    fn real_signed_matches_complex() {
        for &x in &[-5.5, -1.25, -0.75, 0.1, 0.5, 3.3, 40.0] {
            let (l, s) = ln_gamma_signed(x).unwrap();
            let z = log_gamma_complex(c(x, 0.0)).unwrap();
            assert!((l - z.re).abs() < 1e-13 * l.abs().max(1.0));
            let zs = if (z.im / PI).round() as i64 % 2 == 0 { 1 } else { -1 };
            assert_eq!(s, zs);
        }
    }

    proptest! {
        #[test]
        fn recurrence_right_half_plane(re in 0.01f64..50.0, im in -50.0f64..50.0) {
            let z = c(re, im);
            let lhs = log_gamma_complex(z + 1.0).unwrap();
            let rhs = log_gamma_complex(z).unwrap() + z.ln();
            prop_assert!((lhs - rhs).norm() <= 1e-12 * lhs.norm().max(1.0));
        }

        #[test]
        fn reflection_identity(x in -30.0f64..30.0) {
            prop_assume!((x - x.round()).abs() > 1e-6);
            let (l1, s1) = ln_gamma_signed(x).unwrap();
            let (l2, s2) = ln_gamma_signed(1.0 - x).unwrap();
            let lhs = f64::from(s1 * s2) * (l1 + l2).exp();
            let rhs = PI / sin_pi(x);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs());
        }
    }
}
