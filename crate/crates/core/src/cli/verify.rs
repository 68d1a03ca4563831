//! The `verify` suites: module invariants evaluated at fixed and seeded
//! random points, each reported as a measured error against a tolerance.

use super::{Failure, RunConfig, Suite};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use theta_rmt::correlations::{brute_force_correlation, evaluate, rho_bures_hard_edge, rho_bures_scaled, CorrelationRequest, Model};
use theta_rmt::ensembles::{compare_bures_closed, partition_bures, partition_cauchy, partition_cauchy_det, EnsembleParams};
use theta_rmt::foxh::{fox_h, ContourKind, Evaluation, FoxHSpec, GEvaluator};
use theta_rmt::kernels::{hard_edge_kernel, CdStrategy, KernelKind, KernelSet, Route};
use theta_rmt::numerics::linalg::{cauchy_double_alternant, pfaffian_expansion};
use theta_rmt::numerics::quadrature::graded_simplex;
use theta_rmt::numerics::{
    det_lv, gamma, gauss_jacobi, gauss_laguerre, ln_gamma, log_gamma_complex, pfaffian, rel_err, LogValue, SkewMatrix,
};
use theta_rmt::polynomials::{bures_ratio, coeff_c, h_n, hat_residue_form, inner_c, jacobi_p, monic_pair, p_hat, phi_bures, q_hat};
use theta_rmt::raney::{fuss_catalan_moment, raney, sz_density, sz_moment, RaneyParams};
use theta_rmt::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    /// The check could not be evaluated (counts as a failure).
    Error,
    /// Reported for information; never fails.
    Info,
}

impl Status {
    pub fn is_failure(self) -> bool {
        matches!(self, Status::Fail | Status::Error)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub check_name: String,
    pub status: Status,
    pub measured: f64,
    pub tolerance: f64,
    pub detail: Option<String>,
}

pub struct Report {
    pub checks: Vec<Check>,
}

struct Ctx {
    rng: ChaCha8Rng,
    tol: Option<f64>,
    a: f64,
    b: f64,
    theta: f64,
    checks: Vec<Check>,
}

impl Ctx {
    /// Record `measured ≤ tol` (the `--tol` override replaces `tol`).
    fn check(&mut self, name: impl Into<String>, tol: f64, measured: Result<f64>) {
        let tolerance = self.tol.unwrap_or(tol);
        let check_name = name.into();
        let c = match measured {
            Ok(m) if m <= tolerance => Check { check_name, status: Status::Pass, measured: m, tolerance, detail: None },
            Ok(m) => Check { check_name, status: Status::Fail, measured: m, tolerance, detail: None },
            Err(e) => Check { check_name, status: Status::Error, measured: f64::NAN, tolerance, detail: Some(e.to_string()) },
        };
        self.checks.push(c);
    }

    fn info(&mut self, name: impl Into<String>, measured: Result<f64>, detail: String) {
        let (measured, detail) = match measured {
            Ok(m) => (m, detail),
            Err(e) => (f64::NAN, e.to_string()),
        };
        self.checks.push(Check { check_name: name.into(), status: Status::Info, measured, tolerance: f64::NAN, detail: Some(detail) });
    }

    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.gen_range(lo..hi)
    }

    /// The user's `(a, b, θ)` first, then fixed sets.
    fn param_sets(&self) -> Vec<(f64, f64, f64)> {
        let mut v = vec![(self.a, self.b, self.theta)];
        for s in [(0.5, 0.25, 1.0), (0.3, 0.7, 1.5), (0.0, 0.0, 2.0)] {
            if !v.contains(&s) {
                v.push(s);
            }
        }
        v
    }
}

fn max_of<I: IntoIterator<Item = Result<f64>>>(it: I) -> Result<f64> {
    it.into_iter().try_fold(0.0f64, |m, v| Ok(m.max(v?)))
}

pub fn run(suite: Suite, cfg: &RunConfig) -> std::result::Result<Report, Failure> {
    let s = &cfg.settings;
    let (a, b, theta) = (s.a.unwrap_or(0.0), s.b.unwrap_or(0.0), s.theta.unwrap_or(1.0));
    EnsembleParams::new(a, b, theta, 1)?;
    let mut ctx = Ctx { rng: ChaCha8Rng::seed_from_u64(s.seed.unwrap_or(0)), tol: s.tol, a, b, theta, checks: vec![] };
    let all = suite == Suite::All;
    if all || suite == Suite::Numerics {
        numerics(&mut ctx);
    }
    if all || suite == Suite::Foxh {
        foxh(&mut ctx);
    }
    if all || suite == Suite::Ensembles {
        ensembles(&mut ctx);
    }
    if all || suite == Suite::Polynomials {
        polynomials(&mut ctx);
    }
    if all || suite == Suite::Kernels {
        kernels(&mut ctx);
    }
    if all || suite == Suite::Correlations {
        correlations(&mut ctx);
    }
    if all || suite == Suite::Raney {
        raney_suite(&mut ctx);
    }
    Ok(Report { checks: ctx.checks })
}

fn numerics(ctx: &mut Ctx) {
    let mut fact = 1.0;
    let v = max_of((1..=20).map(|k| {
        if k > 1 {
            fact *= (k - 1) as f64;
        }
        Ok(rel_err(gamma(k as f64)?, fact))
    }));
    ctx.check("numerics/gamma_factorials", 1e-13, v);
    ctx.check("numerics/gamma_half", 1e-14, gamma(0.5).map(|g| rel_err(g, std::f64::consts::PI.sqrt())));

    let zs: Vec<f64> = (0..10).map(|_| ctx.uniform(0.05, 40.0)).collect();
    let v =
        max_of(zs.iter().map(|&x| Ok((log_gamma_complex(Complex64::new(x, 0.0))?.re - ln_gamma(x)?).abs() / ln_gamma(x)?.abs().max(1.0))));
    ctx.check("numerics/complex_log_gamma_on_real_axis", 1e-12, v);
    let cs: Vec<Complex64> = (0..10).map(|_| Complex64::new(ctx.uniform(-8.0, 8.0), ctx.uniform(-8.0, 8.0))).collect();
    let v = max_of(cs.iter().map(|&z| {
        // lnΓ(z+1) = lnΓ(z) + ln z modulo 2πi
        let d = log_gamma_complex(z + 1.0)? - log_gamma_complex(z)? - z.ln();
        Ok((d.exp() - 1.0).norm())
    }));
    ctx.check("numerics/complex_log_gamma_recurrence", 1e-11, v);

    let al = ctx.uniform(-0.9, 3.0);
    let v = gauss_jacobi(12, al).and_then(|r| max_of((0..24).map(|k| Ok(rel_err(r.apply(|t| t.powi(k)), 1.0 / (al + k as f64 + 1.0))))));
    ctx.check("numerics/gauss_jacobi_exactness", 1e-12, v);
    let ga = ctx.uniform(-0.9, 2.0);
    let v = gauss_laguerre(20, ga).and_then(|r| max_of((0..12).map(|k| Ok(rel_err(r.apply(|s| s.powi(k)), gamma(ga + k as f64 + 1.0)?)))));
    ctx.check("numerics/gauss_laguerre_moments", 1e-11, v);

    let n = 6;
    let entries: Vec<f64> = (0..n * n).map(|_| ctx.uniform(-1.0, 1.0)).collect();
    let m = SkewMatrix::from_upper(n, |i, j| entries[i * n + j]);
    let v = pfaffian(&m).and_then(|pf| {
        let det = det_lv(&m.to_dense())?;
        Ok((pf * pf).rel_diff(&det).max(rel_err(pf.to_real(), pfaffian_expansion(&m))))
    });
    ctx.check("numerics/pfaffian_squared_is_determinant", 1e-10, v);

    let x: Vec<f64> = (0..5).map(|j| 0.3 + j as f64 + ctx.uniform(0.0, 0.5)).collect();
    let y: Vec<f64> = (0..5).map(|j| 0.1 + 1.3 * j as f64 + ctx.uniform(0.0, 0.5)).collect();
    let v = cauchy_double_alternant(&x, &y).and_then(|c| Ok(c.rel_diff(&det_lv(&DMatrix::from_fn(5, 5, |i, j| 1.0 / (x[i] + y[j])))?)));
    ctx.check("numerics/cauchy_double_alternant", 1e-10, v);

    let big = LogValue::from_log(1, 2000.0);
    let u = LogValue::from_real(3.5);
    let w = LogValue::from_real(1.25);
    ctx.check("numerics/logvalue_roundtrip", 1e-14, Ok((big * u / big).rel_diff(&u).max(u.add(&w).sub(&w).rel_diff(&u))));
}

fn foxh(ctx: &mut Ctx) {
    let e = FoxHSpec::exponential();
    let v = max_of((0..20).map(|i| {
        let z = 0.1 + 9.9 * i as f64 / 19.0;
        Ok(rel_err(fox_h(&e, z, Evaluation::Auto)?.value, (-z).exp()))
    }));
    ctx.check("foxh/exponential", 1e-12, v);
    for th in [2f64.sqrt(), 1.5] {
        let (a, al) = (ctx.uniform(0.0, 1.0), ctx.uniform(-0.5, 1.5));
        let zs: Vec<f64> = (0..5).map(|_| ctx.uniform(0.1, 5.0)).collect();
        for (label, g) in [("g_inf", GEvaluator::g_inf(a, al, th)), ("g_tilde_inf", GEvaluator::g_tilde_inf(a, al, th))] {
            let v = g.and_then(|g| {
                max_of(zs.iter().map(|&z| {
                    let r = g.eval_with(z, Evaluation::Kind(ContourKind::ResidueSum))?.value;
                    let h = g.eval_with(z, Evaluation::Kind(ContourKind::HankelLoop))?.value;
                    Ok(rel_err(r, h))
                }))
            });
            ctx.check(format!("foxh/{label}_residue_vs_hankel(theta={th:.4})"), 1e-8, v);
        }
    }
    // the G̃_∞ pole collision at θ = 1, a = 0 must route to the Hankel loop
    let v =
        GEvaluator::g_tilde_inf(0.0, 0.7, 1.0)
            .and_then(|g| g.eval(1.0))
            .map(|v| if v.strategy == ContourKind::HankelLoop { 0.0 } else { 1.0 });
    ctx.check("foxh/collision_uses_hankel_loop", 0.0, v);
}

fn ensembles(ctx: &mut Ctx) {
    for (a, b, th) in ctx.param_sets() {
        let v = max_of((1..=6).map(|n| {
            let p = EnsembleParams::new(a, b, th, n)?;
            Ok(partition_cauchy(&p)?.rel_diff(&partition_cauchy_det(&p)?))
        }));
        ctx.check(format!("ensembles/cauchy_closed_vs_determinant(a={a},b={b},theta={th})"), 1e-8, v);
        let v = max_of((1..=5).map(|n| {
            let p = EnsembleParams::bures(a, th, n)?;
            let zb = partition_bures(&p)?;
            let zc = partition_cauchy(&p.bures_companion())?;
            Ok((zb * zb).rel_diff(&(zc * LogValue::from_real(2f64.powi(n as i32)))))
        }));
        ctx.check(format!("ensembles/bures_square_is_2^N_cauchy(a={a},theta={th})"), 1e-7, v);
        let v = max_of((1..=5).map(|n| Ok(compare_bures_closed(&EnsembleParams::bures(a, th, n)?, 1e-8)?.log_ratio.abs())));
        ctx.info(
            format!("ensembles/bures_product_form_log_ratio(a={a},theta={th})"),
            v,
            "max |ln(product / pfaffian)| over N = 1..5".into(),
        );
    }
    let v = EnsembleParams::new(0.0, 0.0, 1.0, 2).and_then(|p| partition_cauchy(&p)).map(|z| rel_err(z.to_real(), 1.0 / 12.0));
    ctx.check("ensembles/z2_hand_value", 1e-13, v);
}

fn polynomials(ctx: &mut Ctx) {
    for (a, b, th) in [(0.5, 0.7, 1.5), (ctx.a, ctx.b, ctx.theta)] {
        let v = EnsembleParams::new(a, b, th, 1).and_then(|p| {
            max_of((0..=4).flat_map(|n| (0..=4).map(move |m| (n, m))).map(|(n, m)| {
                let ip = inner_c(&p, &p_hat(&p, n)?, &q_hat(&p, m)?, 48)?;
                let want = if n == m { h_n(&p, n) / p.theta } else { 0.0 };
                Ok((ip - want).abs())
            }))
        });
        ctx.check(format!("polynomials/biorthogonality(a={a},b={b},theta={th})"), 1e-8, v);
    }
    let v = max_of([0.0, 0.8, 2.3].into_iter().flat_map(|al| (0..=12).map(move |n| (al, n))).map(|(al, n)| {
        max_of((0..=20).map(|i| {
            let x = i as f64 / 20.0;
            let terms = (0..=n).map(|l| Ok(coeff_c(n, l, al)? * x.powi(l as i32))).collect::<Result<Vec<f64>>>()?;
            let scale: f64 = terms.iter().map(|t| t.abs()).sum();
            Ok((jacobi_p(n, al, x)? - terms.iter().sum::<f64>()).abs() / scale)
        }))
    }));
    ctx.check("polynomials/jacobi_connection(scaled)", 1e-12, v);
    for (a, th) in [(0.0, 1.0), (0.4, 1.5)] {
        let v = EnsembleParams::bures(a, th, 1).and_then(|p| {
            max_of((1..=5).map(|n| {
                let (pt, qt, _) = monic_pair(&p, n)?;
                let phi = phi_bures(&p, n)?;
                let phim = phi_bures(&p, n - 1)?;
                let r = bures_ratio(&p, n)?;
                let e1 = pt.axpy(1.0, &qt).scale(0.5).max_rel_diff(&phi);
                let e2 = qt.max_rel_diff(&phi.axpy(-r, &phim));
                let e3 = pt.max_rel_diff(&phi.axpy(r, &phim));
                Ok(e1.max(e2).max(e3))
            }))
        });
        ctx.check(format!("polynomials/bures_phi_relations(a={a},theta={th})"), 1e-8, v);
    }
    let v = EnsembleParams::new(ctx.a, ctx.b, ctx.theta, 1).and_then(|p| {
        max_of((0..=6).map(|n| {
            Ok(hat_residue_form(&p, n, false)?
                .max_rel_diff(&p_hat(&p, n)?)
                .max(hat_residue_form(&p, n, true)?.max_rel_diff(&q_hat(&p, n)?)))
        }))
    });
    ctx.check("polynomials/residue_form_coefficients", 1e-10, v);
}

fn kernels(ctx: &mut Ctx) {
    for (a, b, th) in [(ctx.a, ctx.b, ctx.theta), (0.4, 0.2, 1.5)] {
        let pts: Vec<(f64, f64)> = (0..9).map(|_| (ctx.uniform(0.1, 6.0), ctx.uniform(0.1, 6.0))).collect();
        let v = max_of((1..=5).map(|n| {
            let ks = KernelSet::new(EnsembleParams::new(a, b, th, n)?)?;
            max_of(pts.iter().map(|&(x, y)| {
                let s = ks.cd(x, y, CdStrategy::Sum)?;
                let t = ks.cd(x, y, CdStrategy::TIntegral)?;
                let c = ks.cd(x, y, CdStrategy::DoubleContour)?;
                Ok(rel_err(t, s).max(rel_err(c, s)))
            }))
        }));
        ctx.check(format!("kernels/cd_strategies_agree(a={a},b={b},theta={th})"), 1e-7, v);
        let pts: Vec<(f64, f64)> = (0..5).map(|_| (ctx.uniform(0.2, 4.0), ctx.uniform(0.2, 4.0))).collect();
        let v = EnsembleParams::new(a, b, th, 3).and_then(KernelSet::new).and_then(|ks| {
            max_of(pts.iter().map(|&(u, w)| {
                let e01 = rel_err(ks.k01(u, w, Route::Quadrature)?, ks.k01(u, w, Route::TIntegral)?);
                let e10 = rel_err(ks.k10(u, w, Route::Quadrature)?, ks.k10(u, w, Route::TIntegral)?);
                let e11 = rel_err(ks.k11(u, w, Route::Quadrature)?, ks.k11(u, w, Route::TIntegral)?);
                Ok(e01.max(e10).max(e11))
            }))
        });
        ctx.check(format!("kernels/k01_k10_k11_routes_agree(a={a},b={b},theta={th})"), 1e-6, v);
        let v = graded_simplex(a, b, 64).and_then(|rule| {
            max_of((1..=3).map(|n| {
                let ks = KernelSet::new(EnsembleParams::new(a, b, th, n)?)?;
                let tr = rule.apply(|x, y| ks.cd(x, y, CdStrategy::Sum).unwrap_or(f64::NAN));
                Ok((tr - n as f64).abs() / n as f64)
            }))
        });
        ctx.check(format!("kernels/trace_is_N(a={a},b={b},theta={th})"), 1e-7, v);
    }
    // monotone approach to the hard-edge limit
    let v = (|| {
        let lim = hard_edge_kernel(0.3, 0.5, 1.5, KernelKind::K00, 0.7, 1.3)?;
        let errs = [20usize, 40, 80]
            .iter()
            .map(|&n| Ok(rel_err(KernelSet::new(EnsembleParams::new(0.3, 0.5, 1.5, n)?)?.scaled(KernelKind::K00, 0.7, 1.3)?, lim)))
            .collect::<Result<Vec<f64>>>()?;
        Ok(if errs[0] > errs[1] && errs[1] > errs[2] { 0.0 } else { 1.0 })
    })();
    ctx.check("kernels/hard_edge_k00_error_decreases", 0.0, v);
}

/// Model, `(a, b, θ, N)`, `xs`, `ys`.
type CorrCase = (Model, (f64, f64, f64, usize), &'static [f64], &'static [f64]);

fn correlations(ctx: &mut Ctx) {
    let cases: [CorrCase; 4] = [
        (Model::Cauchy, (0.0, 0.0, 1.0, 1), &[1.0], &[]),
        (Model::Cauchy, (0.3, 0.6, 1.5, 2), &[0.8], &[]),
        (Model::Bures, (0.0, 1.0, 1.0, 1), &[1.0], &[]),
        (Model::Bures, (0.3, 1.3, 1.5, 2), &[0.9], &[]),
    ];
    for (model, (a, b, th, n), xs, ys) in cases {
        let v = (|| {
            let p = if model == Model::Bures { EnsembleParams::bures(a, th, n)? } else { EnsembleParams::new(a, b, th, n)? };
            let r = evaluate(&CorrelationRequest::new(model, p, xs.to_vec(), ys.to_vec())?, None)?;
            Ok(rel_err(r.value, brute_force_correlation(model, &p, xs, ys, 1e-5)?))
        })();
        ctx.check(format!("correlations/{model:?}_N={n}_vs_brute_force").to_lowercase(), 1e-4, v);
    }
    let v = (|| {
        let lim = rho_bures_hard_edge(0.3, 1.5, &[0.8])?;
        let errs =
            [20usize, 40, 80].iter().map(|&n| Ok(rel_err(rho_bures_scaled(0.3, 1.5, n, &[0.8])?, lim))).collect::<Result<Vec<f64>>>()?;
        Ok(if errs[0] > errs[1] && errs[1] > errs[2] { 0.0 } else { 1.0 })
    })();
    ctx.check("correlations/bures_hard_edge_rho1_error_decreases", 0.0, v);
}

fn raney_suite(ctx: &mut Ctx) {
    let cat = [1.0, 1.0, 2.0, 5.0, 14.0, 42.0];
    let v = max_of(cat.iter().enumerate().map(|(n, c)| Ok((raney(2.0, 1.0, n as u32)? - c).abs())));
    ctx.check("raney/catalan_exact", 0.0, v);
    let v = max_of((0..=5).map(|n| Ok(rel_err(sz_moment(n, 1e-12)?, raney(1.5, 0.5, n)?))));
    ctx.check("raney/sz_moments_are_raney", 1e-6, v);
    let v = RaneyParams::new(1.5, 0.5).and_then(|r| Ok((sz_density(1e-5)? / r.small_x_asymptote(1e-5)? - 1.0).abs()));
    ctx.check("raney/sz_small_x_ratio", 0.02, v);
    let th = ctx.uniform(0.1, 4.0);
    let v = max_of((0..30).map(|n| Ok(rel_err(fuss_catalan_moment(th, n)?, raney(th + 1.0, 1.0, n)?))));
    ctx.check("raney/fuss_catalan_is_raney", 1e-12, v);
}
