//! Small dense linear algebra.
//!
//! Everything here is sized for state dimensions up to about ten, so plain
//! row-major storage with `O(n^3)` elimination is more than adequate. The
//! structured solvers (Brunovský pair, pole placement for that pair,
//! continuous Lyapunov equation) are what the controllers are built from.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Dense row-major real matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major entries, rejecting length mismatches
    /// and non-finite entries.
    pub fn from_row_slice(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidDimension(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NumericOverflow { index });
        }
        Ok(Self {
            rows,
            cols,
            data: data.to_vec(),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::InvalidDimension("ragged rows".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_row_slice(r, c, &flat)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, rhs: &Matrix) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    out[(i, j)] += a * rhs[(k, j)];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "mul_vec dimension mismatch");
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `vᵀ M`.
    pub fn vec_mul(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, v.len(), "vec_mul dimension mismatch");
        let mut out = vec![0.0; self.cols];
        for (i, vi) in v.iter().enumerate() {
            for (o, m) in out.iter_mut().zip(self.row(i)) {
                *o += vi * m;
            }
        }
        out
    }

    pub fn add(&self, rhs: &Matrix) -> Self {
        self.zip_with(rhs, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Matrix) -> Self {
        self.zip_with(rhs, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    fn zip_with(&self, rhs: &Matrix, op: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| op(*a, *b))
                .collect(),
        }
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Quadratic form `vᵀ M v`.
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        dot(v, &self.mul_vec(v))
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Solves `A x = b` by LU factorisation with partial pivoting.
pub fn lu_solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.rows();
    if a.cols() != n || b.len() != n {
        return Err(Error::InvalidDimension(format!(
            "lu_solve needs square system, got {}x{} with rhs {}",
            a.rows(),
            a.cols(),
            b.len()
        )));
    }
    let mut m = a.clone();
    let mut x = b.to_vec();
    let scale = m.max_abs().max(f64::MIN_POSITIVE);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[(i, col)].abs().total_cmp(&m[(j, col)].abs()))
            .unwrap();
        if m[(pivot, col)].abs() <= 1e-13 * scale {
            return Err(Error::Singular);
        }
        if pivot != col {
            for j in 0..n {
                m.data.swap(col * n + j, pivot * n + j);
            }
            x.swap(col, pivot);
        }
        let d = m[(col, col)];
        for i in col + 1..n {
            let factor = m[(i, col)] / d;
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                m[(i, j)] -= factor * m[(col, j)];
            }
            x[i] -= factor * x[col];
        }
    }
    for i in (0..n).rev() {
        let tail: f64 = (i + 1..n).map(|j| m[(i, j)] * x[j]).sum();
        x[i] = (x[i] - tail) / m[(i, i)];
    }
    Ok(x)
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
/// Fails with [`Error::NotHurwitz`] when the matrix is not positive definite,
/// which is how callers of [`solve_lyapunov`] learn of an unstable input.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::NotHurwitz(format!(
                "Lyapunov solution is not positive definite (pivot {j} = {d:e})"
            )));
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Integrator chain `(A, B)`: ones on the first superdiagonal of `A`, `B = e_n`.
pub fn brunovsky_pair(n: usize) -> Result<(Matrix, Vec<f64>)> {
    if n == 0 {
        return Err(Error::InvalidDimension("chain length must be >= 1".into()));
    }
    let mut a = Matrix::zeros(n, n);
    for i in 0..n - 1 {
        a[(i, i + 1)] = 1.0;
    }
    let mut b = vec![0.0; n];
    b[n - 1] = 1.0;
    Ok((a, b))
}

/// Coefficients `c_0..c_n` of `∏ (s - p_j)`, lowest degree first.
pub fn poly_from_roots(roots: &[f64]) -> Vec<f64> {
    let mut c = vec![1.0];
    for &r in roots {
        let mut next = vec![0.0; c.len() + 1];
        for (i, ci) in c.iter().enumerate() {
            next[i + 1] += ci;
            next[i] -= r * ci;
        }
        c = next;
    }
    c
}

/// State-feedback gain `k` placing the eigenvalues of `A - B kᵀ` for the
/// Brunovský pair of dimension `n` at `poles`.
///
/// For the integrator chain the closed-loop characteristic polynomial is
/// `s^n + k_n s^{n-1} + … + k_1`, so the gain is read off the coefficients.
pub fn pole_placement(n: usize, poles: &[f64]) -> Result<Vec<f64>> {
    if n == 0 || poles.len() != n {
        return Err(Error::InvalidDimension(format!(
            "need {n} poles, got {}",
            poles.len()
        )));
    }
    if let Some(&pole) = poles.iter().find(|p| !(**p < 0.0)) {
        return Err(Error::UnstableSpecification { pole });
    }
    let c = poly_from_roots(poles);
    Ok(c[..n].to_vec())
}

/// `A - b kᵀ`.
pub fn closed_loop(a: &Matrix, b: &[f64], k: &[f64]) -> Matrix {
    let mut m = a.clone();
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            m[(i, j)] -= b[i] * k[j];
        }
    }
    m
}

/// Residual `AᵀP + PA + I`.
pub fn lyapunov_residual(a: &Matrix, p: &Matrix) -> Matrix {
    a.transpose()
        .matmul(p)
        .add(&p.matmul(a))
        .add(&Matrix::identity(a.rows()))
}

/// Solves `AᵀP + PA = -I` for symmetric positive definite `P` by
/// vectorisation into an `n² × n²` dense system.
pub fn solve_lyapunov(a: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    if n == 0 || a.cols() != n {
        return Err(Error::InvalidDimension(format!(
            "Lyapunov equation needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let nn = n * n;
    // Unknown P[i][j] sits at i*n + j.
    let mut kron = Matrix::zeros(nn, nn);
    for i in 0..n {
        for j in 0..n {
            let row = i * n + j;
            for m in 0..n {
                // (AᵀP)_ij = Σ_m A_mi P_mj
                kron[(row, m * n + j)] += a[(m, i)];
                // (PA)_ij = Σ_m P_im A_mj
                kron[(row, i * n + m)] += a[(m, j)];
            }
        }
    }
    let mut rhs = vec![0.0; nn];
    for i in 0..n {
        rhs[i * n + i] = -1.0;
    }
    let vec_p = lu_solve(&kron, &rhs).map_err(|e| match e {
        Error::Singular => Error::NotHurwitz("vectorised Lyapunov system is singular".into()),
        other => other,
    })?;
    let raw = Matrix::from_row_slice(n, n, &vec_p)?;
    let p = raw.add(&raw.transpose()).scale(0.5);
    cholesky(&p)?;
    let res = lyapunov_residual(a, &p).max_abs();
    if res > 1e-10 * (1.0 + p.max_abs()) {
        return Err(Error::NotHurwitz(format!(
            "Lyapunov residual {res:e} too large"
        )));
    }
    Ok(p)
}

/// Left pseudo-inverse `(gᵀg)⁻¹gᵀ` of a column vector.
pub fn left_pseudo_inverse(g: &[f64]) -> Result<Vec<f64>> {
    let gg = dot(g, g);
    if gg == 0.0 || !gg.is_finite() {
        return Err(Error::DegenerateInputChannel);
    }
    Ok(g.iter().map(|v| v / gg).collect())
}

/// Orthonormal basis of the null space of `gᵀ`, as the columns of an
/// `n × (n-1)` matrix.
///
/// Built from the Householder reflector that maps `g/‖g‖` onto a multiple of
/// `e_1`; its remaining columns complete `g` to an orthonormal basis.
pub fn annihilator(g: &[f64]) -> Result<Matrix> {
    let n = g.len();
    if n == 0 {
        return Err(Error::InvalidDimension("empty input vector".into()));
    }
    let len = norm(g);
    if len == 0.0 || !len.is_finite() {
        return Err(Error::DegenerateInputChannel);
    }
    if n == 1 {
        return Ok(Matrix::zeros(1, 0));
    }
    let mut u: Vec<f64> = g.iter().map(|v| v / len).collect();
    let sign = if u[0] >= 0.0 { 1.0 } else { -1.0 };
    u[0] += sign;
    let uu = dot(&u, &u);
    let mut basis = Matrix::zeros(n, n - 1);
    for i in 0..n {
        for j in 1..n {
            let delta = if i == j { 1.0 } else { 0.0 };
            basis[(i, j - 1)] = delta - 2.0 * u[i] * u[j] / uu;
        }
    }
    Ok(basis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn brunovsky_small_cases() {
        let (a, b) = brunovsky_pair(1).unwrap();
        assert_eq!(a.as_slice(), &[0.0]);
        assert_eq!(b, vec![1.0]);

        let (a, b) = brunovsky_pair(3).unwrap();
        assert_eq!(
            a.as_slice(),
            &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]
        );
        assert_eq!(b, vec![0.0, 0.0, 1.0]);

        let (a, b) = brunovsky_pair(2).unwrap();
        assert_eq!(a.as_slice(), &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(b, vec![0.0, 1.0]);

        assert!(matches!(brunovsky_pair(0), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn pole_placement_reproduces_chain_gains() {
        assert_eq!(pole_placement(3, &[-1.0; 3]).unwrap(), vec![1.0, 3.0, 3.0]);
        assert_eq!(
            pole_placement(3, &[-4.0; 3]).unwrap(),
            vec![64.0, 48.0, 12.0]
        );
        assert_eq!(pole_placement(1, &[-2.0]).unwrap(), vec![2.0]);
    }

    #[test]
    fn pole_placement_rejects_unstable() {
        assert!(matches!(
            pole_placement(2, &[-1.0, 0.0]),
            Err(Error::UnstableSpecification { .. })
        ));
        assert!(matches!(
            pole_placement(2, &[-1.0, f64::NAN]),
            Err(Error::UnstableSpecification { .. })
        ));
        assert!(pole_placement(3, &[-1.0]).is_err());
    }

    #[test]
    fn lyapunov_of_negative_identity() {
        let a = Matrix::identity(2).scale(-1.0);
        let p = solve_lyapunov(&a).unwrap();
        assert_abs_diff_eq!(p.as_slice(), &[0.5, 0.0, 0.0, 0.5][..], epsilon = 1e-15);
    }

    #[test]
    fn lyapunov_of_damped_oscillator() {
        let a = Matrix::from_rows(&[vec![0.0, 1.0], vec![-1.0, -1.0]]).unwrap();
        let p = solve_lyapunov(&a).unwrap();
        assert!(lyapunov_residual(&a, &p).max_abs() <= 1e-10);
        // Hand solution: P = [[1.5, 0.5], [0.5, 1.0]].
        assert_abs_diff_eq!(p.as_slice(), &[1.5, 0.5, 0.5, 1.0][..], epsilon = 1e-12);
    }

    #[test]
    fn lyapunov_rejects_unstable() {
        let a = Matrix::identity(2);
        assert!(matches!(solve_lyapunov(&a), Err(Error::NotHurwitz(_))));
        // Purely imaginary eigenvalues make the vectorised system singular.
        let a = Matrix::from_rows(&[vec![0.0, 1.0], vec![-1.0, 0.0]]).unwrap();
        assert!(matches!(solve_lyapunov(&a), Err(Error::NotHurwitz(_))));
    }

    #[test]
    fn pseudo_inverse_cases() {
        assert_eq!(left_pseudo_inverse(&[0.0, 0.0, 1.0]).unwrap(), vec![0.0, 0.0, 1.0]);
        assert_eq!(left_pseudo_inverse(&[0.0, 0.0, 2.0]).unwrap(), vec![0.0, 0.0, 0.5]);
        let gp = left_pseudo_inverse(&[1.0, 1.0]).unwrap();
        assert_eq!(gp, vec![0.5, 0.5]);
        assert_abs_diff_eq!(dot(&gp, &[1.0, 1.0]), 1.0, epsilon = 1e-12);
        assert!(matches!(
            left_pseudo_inverse(&[0.0, 0.0]),
            Err(Error::DegenerateInputChannel)
        ));
    }

    #[test]
    fn annihilator_cases() {
        let perp = annihilator(&[0.0, 0.0, 1.0]).unwrap();
        assert_eq!((perp.rows(), perp.cols()), (3, 2));
        for j in 0..2 {
            assert_abs_diff_eq!(perp[(2, j)], 0.0, epsilon = 1e-15);
        }

        let s = std::f64::consts::FRAC_1_SQRT_2;
        let perp = annihilator(&[s, s]).unwrap();
        assert_eq!(perp.cols(), 1);
        assert_abs_diff_eq!(perp[(0, 0)] + perp[(1, 0)], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(perp[(0, 0)].abs(), s, epsilon = 1e-15);

        let empty = annihilator(&[3.0]).unwrap();
        assert_eq!((empty.rows(), empty.cols()), (1, 0));
    }

    #[test]
    fn lu_detects_singular() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(matches!(lu_solve(&a, &[1.0, 1.0]), Err(Error::Singular)));
    }

    #[test]
    fn from_row_slice_rejects_bad_input() {
        assert!(Matrix::from_row_slice(2, 2, &[1.0; 3]).is_err());
        assert!(matches!(
            Matrix::from_row_slice(1, 2, &[1.0, f64::INFINITY]),
            Err(Error::NumericOverflow { index: 1 })
        ));
    }
}
