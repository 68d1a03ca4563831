//! Correlation functions: the determinantal `(r,s)`-correlations of the
//! θ-deformed Cauchy two-matrix model, the Pfaffian `k`-point correlations
//! of the θ-deformed Bures ensemble, their hard-edge limits, and
//! brute-force oracles for small `N`.

use crate::ensembles::{partition_bures, partition_cauchy, EnsembleParams};
use crate::error::{Error, Result};
use crate::kernels::{HardEdgeKernels, KernelKind, KernelSet};
use crate::numerics::adaptive::{envelope_cutoff, integrate_breaks};
use crate::numerics::gamma::ln_gamma_pos;
use crate::numerics::linalg::{pfaffian, SkewMatrix};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Model {
    Cauchy,
    Bures,
    CauchyHardEdge,
    BuresHardEdge,
}

/// Arguments of one correlation function. For the Bures models `ys` is
/// unused and `params.b` is replaced by `a + 1`; for the hard-edge models
/// `params.n` is ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRequest {
    pub model: Model,
    pub params: EnsembleParams,
    pub xs: Vec<f64>,
    #[serde(default)]
    pub ys: Vec<f64>,
}

fn check_species(name: &str, v: &[f64]) -> Result<()> {
    for (i, &p) in v.iter().enumerate() {
        if !(p > 0.0) || !p.is_finite() {
            return Err(Error::domain(format!("{name}[{i}] = {p} must be positive and finite")));
        }
        if v[..i].contains(&p) {
            return Err(Error::domain(format!("points in {name} must be pairwise different ({p} repeats)")));
        }
    }
    Ok(())
}

impl CorrelationRequest {
    pub fn new(model: Model, params: EnsembleParams, xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        let r = CorrelationRequest { model, params, xs, ys };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        check_species("xs", &self.xs)?;
        check_species("ys", &self.ys)?;
        let n = self.params.n;
        match self.model {
            Model::Cauchy => {
                if self.xs.len() > n || self.ys.len() > n {
                    return Err(Error::Dimension(format!("need r, s <= N = {n}, got ({}, {})", self.xs.len(), self.ys.len())));
                }
            }
            Model::Bures => {
                if self.xs.len() > n {
                    return Err(Error::Dimension(format!("need k <= N = {n}, got {}", self.xs.len())));
                }
            }
            Model::CauchyHardEdge | Model::BuresHardEdge => {}
        }
        if matches!(self.model, Model::Bures | Model::BuresHardEdge) && !self.ys.is_empty() {
            return Err(Error::domain("the Bures ensemble has a single species; ys must be empty"));
        }
        Ok(())
    }
}

/// Block determinant `det[[K̂01(x_i,x_j), K̂00(x_i,y_j)], [K̂11(y_i,x_j), K̂10(y_i,y_j)]]`.
fn block_det<F: Fn(KernelKind, f64, f64) -> Result<f64>>(k: F, xs: &[f64], ys: &[f64]) -> Result<f64> {
    let (r, s) = (xs.len(), ys.len());
    let mut m = DMatrix::zeros(r + s, r + s);
    for i in 0..r + s {
        for j in 0..r + s {
            m[(i, j)] = match (i < r, j < r) {
                (true, true) => k(KernelKind::K01Hat, xs[i], xs[j])?,
                (true, false) => k(KernelKind::K00Hat, xs[i], ys[j - r])?,
                (false, true) => k(KernelKind::K11Hat, ys[i - r], xs[j])?,
                (false, false) => k(KernelKind::K10Hat, ys[i - r], ys[j - r])?,
            };
        }
    }
    Ok(if r + s == 0 { 1.0 } else { m.determinant() })
}

/// `ρ_{r,s}`: determinant of the hatted-kernel block matrix. For
/// [`Model::CauchyHardEdge`] the hard-edge kernels are used.
pub fn rho_cauchy(req: &CorrelationRequest) -> Result<f64> {
    req.validate()?;
    match req.model {
        Model::Cauchy => {
            let ks = KernelSet::new(req.params)?;
            block_det(|k, u, v| ks.kernel(k, u, v), &req.xs, &req.ys)
        }
        Model::CauchyHardEdge => {
            let he = HardEdgeKernels::new(req.params.a, req.params.b, req.params.theta)?;
            block_det(|k, u, v| he.kernel(k, u, v), &req.xs, &req.ys)
        }
        _ => Err(Error::domain("rho_cauchy needs a Cauchy model")),
    }
}

/// `2k × 2k` skew matrix with blocks `ΔK11`, `ΣK01` and `ΔK00`:
/// upper-left `K̂11(z_i;z_j) − K̂11(z_j;z_i)`, upper-right
/// `K̂01(z_i,z_j) + K̂10(z_j,z_i)`, lower-right `K̂00(z_j,z_i) − K̂00(z_i,z_j)`.
pub fn bures_matrix<F: Fn(KernelKind, f64, f64) -> Result<f64>>(k: F, zs: &[f64]) -> Result<SkewMatrix> {
    let n = zs.len();
    let mut upper = vec![0.0; 4 * n * n];
    for i in 0..2 * n {
        for j in i + 1..2 * n {
            upper[i * 2 * n + j] = match (i < n, j < n) {
                (true, true) => k(KernelKind::K11Hat, zs[i], zs[j])? - k(KernelKind::K11Hat, zs[j], zs[i])?,
                (true, false) => {
                    let (zi, zj) = (zs[i], zs[j - n]);
                    k(KernelKind::K01Hat, zi, zj)? + k(KernelKind::K10Hat, zj, zi)?
                }
                _ => {
                    let (zi, zj) = (zs[i - n], zs[j - n]);
                    k(KernelKind::K00Hat, zj, zi)? - k(KernelKind::K00Hat, zi, zj)?
                }
            };
        }
    }
    Ok(SkewMatrix::from_upper(2 * n, |i, j| upper[i * 2 * n + j]))
}

fn parity_sign(k: usize) -> f64 {
    if (k * (k.saturating_sub(1)) / 2).is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// A Bures correlation with its normalization bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BuresCorrelation {
    /// `(−1)^{k(k−1)/2} 2^{−k} Pf`, normalized so that `∫ρ_k = N!/(N−k)!`.
    pub value: f64,
    /// Same Pfaffian with the prefactor `(−1)^{k(k−1)/2} N!/((2N)^k (N−k)!)`.
    pub verbatim: f64,
    /// `value / verbatim = N^k (N−k)!/N!`; 1 for `k = 1`.
    pub calibration: f64,
    pub pfaffian: f64,
}

pub fn bures_calibration(n: usize, k: usize) -> f64 {
    let (nf, kf) = (n as f64, k as f64);
    (kf * nf.ln() + ln_gamma_pos(nf - kf + 1.0) - ln_gamma_pos(nf + 1.0)).exp()
}

/// `ρ_k` of the Bures ensemble from the Cauchy kernels at `(a, a+1, θ)`.
pub fn rho_bures(req: &CorrelationRequest) -> Result<BuresCorrelation> {
    if req.model != Model::Bures {
        return Err(Error::domain("rho_bures needs the Bures model"));
    }
    req.validate()?;
    let p = req.params.bures_companion();
    let (n, k) = (p.n, req.xs.len());
    if k == 0 {
        return Ok(BuresCorrelation { value: 1.0, verbatim: 1.0, calibration: 1.0, pfaffian: 1.0 });
    }
    let ks = KernelSet::new(p)?;
    let m = bures_matrix(|kind, u, v| ks.kernel(kind, u, v), &req.xs)?;
    let pf = pfaffian(&m)?.to_real();
    let sg = parity_sign(k);
    let value = sg * pf * 0.5f64.powi(k as i32);
    let calibration = bures_calibration(n, k);
    Ok(BuresCorrelation { value, verbatim: value / calibration, calibration, pfaffian: pf })
}

/// Hard-edge limit `lim N^{−2k/θ} ρ_k(z N^{−2/θ})`.
pub fn rho_bures_hard_edge(a: f64, theta: f64, zs: &[f64]) -> Result<f64> {
    check_species("zs", zs)?;
    if zs.is_empty() {
        return Ok(1.0);
    }
    let he = HardEdgeKernels::new(a, a + 1.0, theta)?;
    let m = bures_matrix(|kind, u, v| he.kernel(kind, u, v), zs)?;
    Ok(parity_sign(zs.len()) * pfaffian(&m)?.to_real() * 0.5f64.powi(zs.len() as i32))
}

/// `N^{−2k/θ} ρ_k(z N^{−2/θ})` at finite `N`, the sequence that tends to
/// [`rho_bures_hard_edge`].
pub fn rho_bures_scaled(a: f64, theta: f64, n: usize, zs: &[f64]) -> Result<f64> {
    let s = (n as f64).powf(-2.0 / theta);
    let req = CorrelationRequest::new(Model::Bures, EnsembleParams::bures(a, theta, n)?, zs.iter().map(|z| z * s).collect(), vec![])?;
    Ok(rho_bures(&req)?.value * s.powi(zs.len() as i32))
}

/// Nested adaptive quadrature over `dims` variables on `[0, cut]`, with
/// breakpoints at the fixed points and a geometric grading towards 0.
struct Nested<'a> {
    f: &'a dyn Fn(&[f64]) -> f64,
    dims: usize,
    breaks: Vec<f64>,
    rel: f64,
    /// Factor by which each inner level tightens `rel`.
    step: f64,
    /// Absolute target for the whole integral. Inner integrals that nearly
    /// cancel cannot reach a relative target; this bounds their effort.
    abs: f64,
}

impl Nested<'_> {
    fn eval(&self, prefix: &[f64]) -> Result<f64> {
        if prefix.len() == self.dims {
            return Ok((self.f)(prefix));
        }
        // inner integrals tighter than the outer one
        let depth = prefix.len();
        let tighten = self.step.powi((self.dims - 1 - depth) as i32);
        let span = self.breaks.last().copied().unwrap_or(1.0).max(1.0);
        let abs = self.abs * tighten / (span.powi(depth as i32) * self.breaks.len() as f64);
        let mut buf = prefix.to_vec();
        buf.push(0.0);
        let mut err = None;
        let v = integrate_breaks(
            |t| {
                buf[depth] = t;
                match self.eval(&buf) {
                    Ok(v) => v,
                    Err(e) => {
                        err.get_or_insert(e);
                        0.0
                    }
                }
            },
            &self.breaks,
            abs.max(1e-300),
            self.rel * tighten,
        )?;
        match err {
            Some(e) => Err(e),
            None => Ok(v),
        }
    }
}

/// `∫ f` over `[0, cut]^dims` to `rel` relative to `∫ |f|`, which a coarse
/// first pass estimates.
fn nested_integral(f: &dyn Fn(&[f64]) -> f64, dims: usize, breaks: Vec<f64>, rel: f64) -> Result<f64> {
    if dims == 0 {
        return Ok(f(&[]));
    }
    let g = |v: &[f64]| f(v).abs();
    let scale = Nested { f: &g, dims, breaks: breaks.clone(), rel: 0.1, step: 1.0, abs: 0.0 }.eval(&[])?;
    Nested { f, dims, breaks, rel, step: 0.1, abs: rel * scale }.eval(&[])
}

fn breakpoints(fixed: &[f64], cut: f64) -> Vec<f64> {
    let mut b = vec![0.0, 1e-8, 1e-6, 1e-4, 1e-2, 0.1, 1.0];
    b.extend(fixed.iter().copied().filter(|&p| p < cut));
    b.push(cut);
    b.retain(|&p| p <= cut);
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.dedup();
    b
}

fn prod_diff(v: &[f64], g: impl Fn(f64) -> f64) -> f64 {
    let mut acc = 1.0;
    for k in 0..v.len() {
        for j in 0..k {
            acc *= g(v[k]) - g(v[j]);
        }
    }
    acc
}

/// Defining integral of the correlation function by nested adaptive
/// quadrature, normalized by the partition function. Cauchy: `points =
/// (xs, ys)` with `N ≤ 2`; Bures: `points = (zs, [])` with `N ≤ 3`. This is
/// the oracle for [`rho_cauchy`] and [`rho_bures`], never the production path.
pub fn brute_force_correlation(model: Model, params: &EnsembleParams, xs: &[f64], ys: &[f64], rel_tol: f64) -> Result<f64> {
    let n = params.n;
    match model {
        Model::Cauchy => {
            if n > 2 {
                return Err(Error::Complexity(format!("Cauchy oracle handles N <= 2, got {n}")));
            }
            CorrelationRequest::new(model, *params, xs.to_vec(), ys.to_vec())?;
            let (a, b, th) = (params.a, params.b, params.theta);
            let (r, s) = (xs.len(), ys.len());
            let cut = envelope_cutoff(a.max(b) + th * (n as f64 - 1.0), 1e-12);
            let f = |free: &[f64]| -> f64 {
                let mut x = xs.to_vec();
                x.extend_from_slice(&free[..n - r]);
                let mut y = ys.to_vec();
                y.extend_from_slice(&free[n - r..]);
                let c = DMatrix::from_fn(n, n, |i, j| 1.0 / (x[i] + y[j]));
                let w: f64 = free[..n - r].iter().map(|&u| u.powf(a) * (-u).exp()).product::<f64>()
                    * free[n - r..].iter().map(|&u| u.powf(b) * (-u).exp()).product::<f64>();
                w * prod_diff(&x, |u| u.powf(th)) * prod_diff(&y, |u| u.powf(th)) * c.determinant()
            };
            let mut fixed = xs.to_vec();
            fixed.extend_from_slice(ys);
            let integral = nested_integral(&f, 2 * n - r - s, breakpoints(&fixed, cut), rel_tol)?;
            let given: f64 =
                xs.iter().map(|&u| u.powf(a) * (-u).exp()).product::<f64>() * ys.iter().map(|&u| u.powf(b) * (-u).exp()).product::<f64>();
            let z = partition_cauchy(params)?.to_real();
            let fact = (ln_gamma_pos((n - r) as f64 + 1.0) + ln_gamma_pos((n - s) as f64 + 1.0)).exp();
            Ok(given * integral / (fact * z))
        }
        Model::Bures => {
            if n > 3 {
                return Err(Error::Complexity(format!("Bures oracle handles N <= 3, got {n}")));
            }
            CorrelationRequest::new(model, *params, xs.to_vec(), vec![])?;
            let (a, th) = (params.a, params.theta);
            let k = xs.len();
            let cut = envelope_cutoff(a + th * (n as f64 - 1.0), 1e-12);
            let f = |free: &[f64]| -> f64 {
                let mut z = xs.to_vec();
                z.extend_from_slice(free);
                let mut acc = 1.0;
                for q in 0..n {
                    for j in 0..q {
                        acc *= (z[q] - z[j]) / (z[q] + z[j]) * (z[q].powf(th) - z[j].powf(th));
                    }
                }
                acc * free.iter().map(|&u| u.powf(a) * (-u).exp()).product::<f64>()
            };
            let integral = nested_integral(&f, n - k, breakpoints(xs, cut), rel_tol)?;
            let given: f64 = xs.iter().map(|&u| u.powf(a) * (-u).exp()).product();
            let z = partition_bures(params)?.to_real();
            Ok(given * integral / (ln_gamma_pos((n - k) as f64 + 1.0).exp() * z))
        }
        _ => Err(Error::domain("brute-force oracles exist for the finite models only")),
    }
}

/// Serializable record of one evaluation, optionally with its oracle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationRecord {
    pub model: Model,
    pub params: EnsembleParams,
    pub points: (Vec<f64>, Vec<f64>),
    pub value: f64,
    pub route: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub discrepancy: Option<f64>,
    /// Bures only: the verbatim-prefactor value and the calibration factor.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verbatim: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration: Option<f64>,
}

/// Evaluate a request by its production route; with `oracle = Some(tol)`,
/// also run the brute-force integral (finite models) to relative accuracy
/// `tol` and report the discrepancy. The production value is the same
/// either way.
pub fn evaluate(req: &CorrelationRequest, oracle: Option<f64>) -> Result<CorrelationRecord> {
    let (value, route, verbatim, calibration) = match req.model {
        Model::Cauchy | Model::CauchyHardEdge => (rho_cauchy(req)?, "determinant", None, None),
        Model::Bures => {
            let v = rho_bures(req)?;
            (v.value, "pfaffian", Some(v.verbatim), Some(v.calibration))
        }
        Model::BuresHardEdge => {
            req.validate()?;
            (rho_bures_hard_edge(req.params.a, req.params.theta, &req.xs)?, "pfaffian-hard-edge", None, None)
        }
    };
    let oracle_value = match (oracle, req.model) {
        (Some(tol), Model::Cauchy | Model::Bures) => Some(brute_force_correlation(req.model, &req.params, &req.xs, &req.ys, tol)?),
        _ => None,
    };
    Ok(CorrelationRecord {
        model: req.model,
        params: req.params,
        points: (req.xs.clone(), req.ys.clone()),
        value,
        route: route.into(),
        oracle_value,
        discrepancy: oracle_value.map(|o| (value - o).abs()),
        verbatim,
        calibration,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rel_err;

    fn cauchy(a: f64, b: f64, th: f64, n: usize, xs: &[f64], ys: &[f64]) -> CorrelationRequest {
        CorrelationRequest::new(Model::Cauchy, EnsembleParams::new(a, b, th, n).unwrap(), xs.to_vec(), ys.to_vec()).unwrap()
    }

    fn bures(a: f64, th: f64, n: usize, zs: &[f64]) -> CorrelationRequest {
        CorrelationRequest::new(Model::Bures, EnsembleParams::bures(a, th, n).unwrap(), zs.to_vec(), vec![]).unwrap()
    }

    #[test]
    fn validation() {
        let p = EnsembleParams::new(0.0, 0.0, 1.0, 1).unwrap();
        assert!(CorrelationRequest::new(Model::Cauchy, p, vec![1.0, 2.0], vec![]).is_err());
        assert!(CorrelationRequest::new(Model::Cauchy, p.with_n(2), vec![1.0, 1.0], vec![]).is_err());
        assert!(CorrelationRequest::new(Model::Cauchy, p, vec![-1.0], vec![]).is_err());
        assert!(matches!(
            rho_bures(&CorrelationRequest { model: Model::Bures, params: p, xs: vec![1.0, 2.0], ys: vec![] }),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(brute_force_correlation(Model::Cauchy, &p.with_n(3), &[1.0], &[], 1e-6), Err(Error::Complexity(_))));
        assert!(matches!(brute_force_correlation(Model::Bures, &p.with_n(4), &[1.0], &[], 1e-6), Err(Error::Complexity(_))));
    }

    #[test]
    fn empty_determinant() {
        assert_eq!(rho_cauchy(&cauchy(0.3, 0.2, 1.5, 2, &[], &[])).unwrap(), 1.0);
    }

    #[test]
    fn cauchy_one_point_oracle() {
        let req = cauchy(0.0, 0.0, 1.0, 1, &[1.0], &[]);
        let bf = brute_force_correlation(Model::Cauchy, &req.params, &[1.0], &[], 1e-9).unwrap();
        // Z₁ = 1 at a = b = 0, θ = 1, and ∫e^{-y}/(1+y) dy = e E₁(1)
        assert!(rel_err(bf, (-1f64).exp() * 0.596_347_362_323_194) < 1e-8);
        assert!(rel_err(rho_cauchy(&req).unwrap(), bf) < 1e-8);
    }

    #[test]
    fn cauchy_two_point_oracle() {
        let req = cauchy(0.5, 0.5, 1.0, 2, &[0.8], &[1.4]);
        let v = rho_cauchy(&req).unwrap();
        let bf = brute_force_correlation(Model::Cauchy, &req.params, &[0.8], &[1.4], 1e-7).unwrap();
        let bf_loose = brute_force_correlation(Model::Cauchy, &req.params, &[0.8], &[1.4], 1e-5).unwrap();
        assert!(rel_err(bf_loose, bf) < 1e-4);
        assert!(rel_err(v, bf) < 1e-5, "{v} vs {bf}");
    }

    #[test]
    fn cauchy_exchange_symmetry() {
        let v1 = rho_cauchy(&cauchy(0.3, 0.6, 1.5, 3, &[0.4, 1.3], &[0.9])).unwrap();
        let v2 = rho_cauchy(&cauchy(0.3, 0.6, 1.5, 3, &[1.3, 0.4], &[0.9])).unwrap();
        assert!(rel_err(v1, v2) < 1e-12 && v1 > 0.0);
        let w1 = rho_cauchy(&cauchy(0.3, 0.6, 1.5, 3, &[0.7], &[0.5, 2.1])).unwrap();
        let w2 = rho_cauchy(&cauchy(0.3, 0.6, 1.5, 3, &[0.7], &[2.1, 0.5])).unwrap();
        assert!(rel_err(w1, w2) < 1e-12 && w1 > 0.0);
    }

    #[test]
    fn cauchy_normalization() {
        for n in 1..=2 {
            let p = EnsembleParams::new(0.4, 0.2, 1.5, n).unwrap();
            let ks = KernelSet::new(p).unwrap();
            let cut = envelope_cutoff(0.4 + 1.5 * (n as f64 - 1.0), 1e-10);
            let f = |x: f64| ks.kernel(KernelKind::K01Hat, x, x).unwrap();
            let breaks = [0.0, 1e-4, 1e-2, 0.5, 2.0, cut];
            let tot = integrate_breaks(f, &breaks, 1e-12, 1e-8).unwrap();
            assert!((tot - n as f64).abs() < 1e-4 * n as f64, "N = {n}: {tot}");
            let g = |y: f64| ks.kernel(KernelKind::K10Hat, y, y).unwrap();
            assert!((integrate_breaks(g, &breaks, 1e-12, 1e-8).unwrap() - n as f64).abs() < 1e-4 * n as f64);
        }
    }

    #[test]
    fn bures_one_point_oracles() {
        // N = 1: ρ₁(z) = z^a e^{-z}/Γ(a+1)
        let v = rho_bures(&bures(0.0, 1.0, 1, &[1.0])).unwrap();
        assert!(rel_err(v.value, (-1f64).exp()) < 1e-9);
        assert_eq!(v.calibration, 1.0);
        let req = bures(0.5, 1.5, 2, &[0.9]);
        let bf = brute_force_correlation(Model::Bures, &req.params, &[0.9], &[], 1e-9).unwrap();
        assert!(rel_err(rho_bures(&req).unwrap().value, bf) < 1e-7);
    }

    #[test]
    fn bures_two_point_and_calibration() {
        let req = bures(0.5, 1.5, 2, &[0.6, 1.7]);
        let v = rho_bures(&req).unwrap();
        let bf = brute_force_correlation(Model::Bures, &req.params, &[0.6, 1.7], &[], 1e-9).unwrap();
        assert!(rel_err(v.value, bf) < 1e-8, "{} vs {bf}", v.value);
        // the verbatim prefactor is off by exactly N^k (N-k)!/N! = 2
        assert!(rel_err(bf / v.verbatim, 2.0) < 1e-8);
        let p = EnsembleParams::bures(0.5, 1.5, 2).unwrap().bures_companion();
        let ks = KernelSet::new(p).unwrap();
        let m = bures_matrix(|k, u, v| ks.kernel(k, u, v), &[0.6, 1.7]).unwrap();
        assert_eq!(m.asymmetry_defect(), 0.0);
        // N = 3, k = 2 against the oracle (one remaining variable)
        let req = bures(0.3, 1.2, 3, &[0.5, 1.9]);
        let bf = brute_force_correlation(Model::Bures, &req.params, &[0.5, 1.9], &[], 1e-9).unwrap();
        assert!(rel_err(rho_bures(&req).unwrap().value, bf) < 1e-7);
    }

    #[test]
    fn bures_normalization() {
        let req = bures(0.4, 1.5, 2, &[1.0]);
        let ks = KernelSet::new(req.params.bures_companion()).unwrap();
        let f = |z: f64| 0.5 * (ks.kernel(KernelKind::K01Hat, z, z).unwrap() + ks.kernel(KernelKind::K10Hat, z, z).unwrap());
        let cut = envelope_cutoff(0.4 + 1.5, 1e-10);
        let tot = integrate_breaks(f, &[0.0, 1e-3, 0.5, 2.0, cut], 1e-12, 1e-8).unwrap();
        assert!((tot - 2.0).abs() < 1e-5, "{tot}");
    }

    #[test]
    fn bures_hard_edge() {
        let (a, th) = (0.3, 1.5);
        let z = 1.0;
        let lim = rho_bures_hard_edge(a, th, &[z]).unwrap();
        let he = HardEdgeKernels::new(a, a + 1.0, th).unwrap();
        let half = 0.5 * (he.kernel(KernelKind::K01Hat, z, z).unwrap() + he.kernel(KernelKind::K10Hat, z, z).unwrap());
        assert!(rel_err(lim, half) < 1e-14);
        let errs: Vec<f64> = [20, 40, 80].iter().map(|&n| rel_err(rho_bures_scaled(a, th, n, &[z]).unwrap(), lim)).collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2] && errs[2] < 0.05, "{errs:?}");
        // two points, including the subtracted pole of K̂11
        let lim2 = rho_bures_hard_edge(a, th, &[0.7, 1.6]).unwrap();
        let errs: Vec<f64> = [20, 40, 80].iter().map(|&n| rel_err(rho_bures_scaled(a, th, n, &[0.7, 1.6]).unwrap(), lim2)).collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
        assert!(rho_bures_hard_edge(a, th, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn record_serializes() {
        let rec = evaluate(&bures(0.0, 1.0, 1, &[1.0]), Some(1e-7)).unwrap();
        assert!(rec.discrepancy.unwrap() < 1e-7);
        let js = serde_json::to_string(&rec).unwrap();
        assert!(js.contains("\"oracle_value\"") && js.contains("\"calibration\""));
    }
}
