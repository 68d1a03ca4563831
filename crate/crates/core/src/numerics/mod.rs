//! Foundational numerics: log-gamma, quadrature, dense linear algebra,
//! Pfaffians and overflow-safe scalars.

pub mod adaptive;
pub mod gamma;
pub mod linalg;
mod logvalue;
pub mod quadrature;

pub use gamma::{gamma, ln_gamma, ln_gamma_signed, log_gamma_complex, rgamma};
pub use linalg::{det_lv, pfaffian, pfaffian_bordered, SkewMatrix};
pub use logvalue::LogValue;
pub use quadrature::{gauss_jacobi, gauss_jacobi_ab, gauss_laguerre, gauss_legendre, simplex_quad_2d, QuadratureRule};

/// Relative difference with an absolute floor of `1e-300`.
pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(1e-300)
}
