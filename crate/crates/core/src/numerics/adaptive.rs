//! Adaptive Gauss–Kronrod (7/15) integration. Used by the brute-force
//! oracles, never on a production path.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let d = h * XGK[i];
        let s = f(c - d) + f(c + d);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// `∫_a^b f` to `max(abs_tol, rel_tol·|I|)`, bisecting the worst panel.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<(f64, f64)> {
    let mut panels = vec![(a, b, gk15(&mut f, a, b))];
    for _ in 0..4000 {
        let total: f64 = panels.iter().map(|p| p.2 .0).sum();
        let err: f64 = panels.iter().map(|p| p.2 .1).sum();
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok((total, err));
        }
        let (worst, _) = panels.iter().enumerate().max_by(|x, y| x.1 .2 .1.partial_cmp(&y.1 .2 .1).unwrap()).unwrap();
        let (lo, hi, _) = panels.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        panels.push((lo, mid, gk15(&mut f, lo, mid)));
        panels.push((mid, hi, gk15(&mut f, mid, hi)));
    }
    let total: f64 = panels.iter().map(|p| p.2 .0).sum();
    let err: f64 = panels.iter().map(|p| p.2 .1).sum();
    if err <= 10.0 * abs_tol.max(rel_tol * total.abs()) {
        return Ok((total, err));
    }
    Err(Error::non_converged(format!("adaptive quadrature on [{a}, {b}] stalled at error {err:.2e}")))
}

/// Sum of [`integrate`] over consecutive breakpoints.
pub fn integrate_breaks<F: FnMut(f64) -> f64>(mut f: F, breaks: &[f64], abs_tol: f64, rel_tol: f64) -> Result<f64> {
    let mut acc = 0.0;
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            acc += integrate(&mut f, w[0], w[1], abs_tol, rel_tol)?.0;
        }
    }
    Ok(acc)
}

/// Where `x^p e^{-x}` has fallen below `rel` times its peak (past the peak).
pub fn envelope_cutoff(p: f64, rel: f64) -> f64 {
    let p = p.max(0.0);
    let peak = if p > 0.0 { p * p.ln() - p } else { 0.0 };
    let target = peak + rel.ln();
    let mut x = (2.0 * p).max(1.0);
    while p * x.ln() - x > target {
        x *= 1.25;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_singularity() {
        let (v, _) = integrate(|x: f64| x.sqrt().recip(), 0.0, 1.0, 1e-12, 1e-12).unwrap();
        assert!((v - 2.0).abs() < 1e-9);
    }

    #[test]
    fn smooth_integral() {
        let (v, _) = integrate(|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-14, 1e-14).unwrap();
        assert!((v - 2.0).abs() < 1e-13);
    }

    #[test]
    fn cutoff_envelope() {
        let x = envelope_cutoff(5.0, 1e-12);
        let peak = 5.0f64 * 5f64.ln() - 5.0;
        assert!(5.0 * x.ln() - x <= peak + (1e-12f64).ln());
    }
}
