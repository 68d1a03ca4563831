//! Determinants and Pfaffians carried in [`LogValue`], plus the closed
//! products (Vandermonde, Cauchy double alternant, Schur) used to check them.

use crate::error::{Error, Result};
use crate::numerics::LogValue;
use nalgebra::DMatrix;

/// Real antisymmetric matrix. Only the strict upper triangle is supplied; the
/// lower triangle is its exact negation, so antisymmetry holds bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SkewMatrix {
    /// Build from `upper(i, j)` for `i < j`.
    pub fn from_upper<F: FnMut(usize, usize) -> f64>(dim: usize, mut upper: F) -> Self {
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in i + 1..dim {
                let v = upper(i, j);
                data[i * dim + j] = v;
                data[j * dim + i] = -v;
            }
        }
        SkewMatrix { dim, data }
    }

    /// From a full square matrix, keeping its strict upper triangle.
    pub fn from_dense(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Dimension(format!("{}x{} matrix is not square", m.nrows(), m.ncols())));
        }
        Ok(Self::from_upper(m.nrows(), |i, j| m[(i, j)]))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.data)
    }

    /// Largest `|m_ij + m_ji|`; zero by construction.
    pub fn asymmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                worst = worst.max((self.get(i, j) + self.get(j, i)).abs());
            }
        }
        worst
    }
}

/// Pfaffian by Parlett–Reid skew `LTLᵀ` elimination with partial pivoting.
pub fn pfaffian(m: &SkewMatrix) -> Result<LogValue> {
    let n = m.dim;
    if n % 2 == 1 {
        return Err(Error::Dimension(format!("Pfaffian needs an even dimension, got {n}")));
    }
    let mut a = m.data.clone();
    let idx = |i: usize, j: usize| i * n + j;
    let mut pf = LogValue::ONE;
    let mut k = 0;
    while k + 1 < n {
        let mut kp = k + 1;
        let mut best = a[idx(k + 1, k)].abs();
        for i in k + 2..n {
            if a[idx(i, k)].abs() > best {
                best = a[idx(i, k)].abs();
                kp = i;
            }
        }
        if kp != k + 1 {
            for c in 0..n {
                a.swap(idx(k + 1, c), idx(kp, c));
            }
            for r in 0..n {
                a.swap(idx(r, k + 1), idx(r, kp));
            }
            pf = -pf;
        }
        let piv = a[idx(k, k + 1)];
        if piv == 0.0 {
            return Ok(LogValue::ZERO);
        }
        pf = pf * LogValue::from_real(piv);
        if k + 2 < n {
            let tau: Vec<f64> = (k + 2..n).map(|j| a[idx(k, j)] / piv).collect();
            let col: Vec<f64> = (k + 2..n).map(|i| a[idx(i, k + 1)]).collect();
            for (ii, i) in (k + 2..n).enumerate() {
                for (jj, j) in (k + 2..n).enumerate() {
                    a[idx(i, j)] += tau[ii] * col[jj] - col[ii] * tau[jj];
                }
            }
        }
        k += 2;
    }
    Ok(pf)
}

/// Pfaffian of `[[0, border], [-borderᵀ, M]]` for odd-dimensional `M`.
pub fn pfaffian_bordered(m: &SkewMatrix, border: &[f64]) -> Result<LogValue> {
    if m.dim.is_multiple_of(2) {
        return Err(Error::Dimension(format!("bordering needs an odd dimension, got {}", m.dim)));
    }
    if border.len() != m.dim {
        return Err(Error::Dimension(format!("border length {} does not match dimension {}", border.len(), m.dim)));
    }
    let big = SkewMatrix::from_upper(m.dim + 1, |i, j| if i == 0 { border[j - 1] } else { m.get(i - 1, j - 1) });
    pfaffian(&big)
}

/// Reference Pfaffian by expansion along the first row; for tiny matrices in
/// tests only.
pub fn pfaffian_expansion(m: &SkewMatrix) -> f64 {
    fn rec(m: &SkewMatrix, idx: &[usize]) -> f64 {
        if idx.is_empty() {
            return 1.0;
        }
        let mut acc = 0.0;
        for p in 1..idx.len() {
            let rest: Vec<usize> = idx.iter().enumerate().filter(|&(q, _)| q != 0 && q != p).map(|(_, &v)| v).collect();
            let sign = if p % 2 == 1 { 1.0 } else { -1.0 };
            acc += sign * m.get(idx[0], idx[p]) * rec(m, &rest);
        }
        acc
    }
    let idx: Vec<usize> = (0..m.dim).collect();
    rec(m, &idx)
}

/// Determinant via partially pivoted LU, returned with sign and log-magnitude.
pub fn det_lv(m: &DMatrix<f64>) -> Result<LogValue> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!("{}x{} matrix is not square", m.nrows(), m.ncols())));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(LogValue::ONE);
    }
    let lu = m.clone().lu();
    let mut d = LogValue::from_real(lu.p().determinant::<f64>());
    let u = lu.u();
    for i in 0..n {
        d = d * LogValue::from_real(u[(i, i)]);
    }
    Ok(d)
}

/// `∏_{j<k} (z_k - z_j)`.
pub fn vandermonde(z: &[f64]) -> LogValue {
    let mut p = LogValue::ONE;
    for k in 0..z.len() {
        for j in 0..k {
            p = p * LogValue::from_real(z[k] - z[j]);
        }
    }
    p
}

/// `det[1/(x_j + y_k)] = ∏_{j<k}(x_k - x_j)(y_k - y_j) / ∏_{j,k}(x_j + y_k)`.
pub fn cauchy_double_alternant(x: &[f64], y: &[f64]) -> Result<LogValue> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!("lengths {} and {} differ", x.len(), y.len())));
    }
    let mut den = LogValue::ONE;
    for &xj in x {
        for &yk in y {
            den = den * LogValue::from_real(xj + yk);
        }
    }
    Ok(vandermonde(x) * vandermonde(y) / den)
}

/// `∏_{j<k} (x_k - x_j)/(x_k + x_j)`.
pub fn schur_product(x: &[f64]) -> LogValue {
    let mut p = LogValue::ONE;
    for k in 0..x.len() {
        for j in 0..k {
            p = p * LogValue::from_real((x[k] - x[j]) / (x[k] + x[j]));
        }
    }
    p
}

/// Solve `A c = rhs` by LU; errors when the system is numerically singular
/// (reciprocal condition estimate below `1e-12`).
pub fn solve_checked(a: &DMatrix<f64>, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = a.nrows();
    if n != a.ncols() || rhs.len() != n {
        return Err(Error::Dimension("solve: shape mismatch".into()));
    }
    if n == 0 {
        return Ok(vec![]);
    }
    let svd = a.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-12 * smax) {
        return Err(Error::SingularSystem(format!("condition estimate {:.3e} exceeds 1e12", smax / smin)));
    }
    let b = nalgebra::DVector::from_column_slice(rhs);
    let x = a.clone().lu().solve(&b).ok_or_else(|| Error::SingularSystem("LU pivot vanished".into()))?;
    Ok(x.iter().copied().collect())
}
