//! Dense Hermitian matrices and their eigendecomposition.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Relative tolerance for the Hermiticity check, scaled by `max(1, ‖H‖_max)`.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// A dense complex matrix that passed the Hermiticity check.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    inner: CMatrix,
    real: bool,
}

impl HermitianMatrix {
    pub fn new(m: CMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::ContractViolation(format!(
                "matrix is {}x{}, expected square",
                m.nrows(),
                m.ncols()
            )));
        }
        let scale = max_abs(&m).max(1.0);
        let err = hermiticity_error(&m);
        if err > HERMITIAN_TOL * scale {
            return Err(Error::ContractViolation(format!(
                "matrix is not Hermitian: max |H - H†| = {err:e}"
            )));
        }
        let real = m.iter().all(|z| z.im == 0.0);
        Ok(Self { inner: m, real })
    }

    pub fn from_real_symmetric(m: DMatrix<f64>) -> Result<Self> {
        Self::new(m.map(|x| Complex64::new(x, 0.0)))
    }

    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.inner
    }

    pub fn into_inner(self) -> CMatrix {
        self.inner
    }

    /// True when every entry has an exactly zero imaginary part.
    pub fn is_real(&self) -> bool {
        self.real
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.inner)
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.inner[(row, col)]
    }
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `max |M - M†|` over all entries.
pub fn hermiticity_error(m: &CMatrix) -> f64 {
    let n = m.nrows().min(m.ncols());
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Eigenvalues in ascending order with the matching orthonormal eigenvectors
/// stored column-wise.
#[derive(Debug, Clone)]
pub struct Eigensystem {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

pub fn diagonalize(h: &HermitianMatrix) -> Eigensystem {
    let n = h.dim();
    let (values, vectors) = if h.is_real() {
        let re = h.matrix().map(|z| z.re);
        let eig = SymmetricEigen::new(re);
        (
            eig.eigenvalues.iter().copied().collect::<Vec<_>>(),
            eig.eigenvectors.map(|x| Complex64::new(x, 0.0)),
        )
    } else {
        let eig = SymmetricEigen::new(h.matrix().clone());
        (
            eig.eigenvalues.iter().copied().collect::<Vec<_>>(),
            eig.eigenvectors,
        )
    };

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let sorted_values = order.iter().map(|&k| values[k]).collect();
    let sorted_vectors = CMatrix::from_fn(n, n, |i, j| vectors[(i, order[j])]);
    Eigensystem {
        values: sorted_values,
        vectors: sorted_vectors,
    }
}

impl Eigensystem {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `exp(-i H tau) psi` evaluated in the eigenbasis.
    pub fn evolve(&self, psi: &CVector, tau: f64) -> CVector {
        let mut coeffs = self.vectors.ad_mul(psi);
        for (c, &e) in coeffs.iter_mut().zip(&self.values) {
            *c *= Complex64::from_polar(1.0, -e * tau);
        }
        &self.vectors * coeffs
    }

    /// The full propagator `V exp(-i Λ tau) V†`.
    pub fn propagator(&self, tau: f64) -> CMatrix {
        let n = self.dim();
        let mut scaled = self.vectors.clone();
        for j in 0..n {
            let phase = Complex64::from_polar(1.0, -self.values[j] * tau);
            for i in 0..n {
                scaled[(i, j)] *= phase;
            }
        }
        scaled * self.vectors.adjoint()
    }

    /// `max_n ‖H v_n - E_n v_n‖`.
    pub fn residual(&self, h: &HermitianMatrix) -> f64 {
        let hv = h.matrix() * &self.vectors;
        (0..self.dim())
            .map(|j| {
                let e = self.values[j];
                (0..self.dim())
                    .map(|i| (hv[(i, j)] - self.vectors[(i, j)] * e).norm_sqr())
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }
}

/// `max |A - I|` over all entries.
pub fn identity_deviation(a: &CMatrix) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((a[(i, j)] - Complex64::new(target, 0.0)).norm());
        }
    }
    worst
}

pub fn basis_vector(dim: usize, index: usize) -> CVector {
    let mut v = CVector::zeros(dim);
    v[index] = Complex64::new(1.0, 0.0);
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn diagonal_matrix_is_its_own_eigensystem() {
        let h = HermitianMatrix::new(CMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(2.0)]))
            .unwrap();
        let eig = diagonalize(&h);
        assert_eq!(eig.values, vec![1.0, 2.0]);
        assert!(identity_deviation(&eig.vectors.map(|z| Complex64::new(z.norm(), 0.0))) < 1e-15);
    }

    #[test]
    fn sigma_x_spectrum() {
        let h = HermitianMatrix::new(CMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)]))
            .unwrap();
        let eig = diagonalize(&h);
        assert!((eig.values[0] + 1.0).abs() < 1e-15);
        assert!((eig.values[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn complex_hermitian_residual_and_orthonormality() {
        let i = Complex64::i();
        let m = CMatrix::from_row_slice(
            3,
            3,
            &[c(1.0), c(0.5) + i * 0.2, c(0.0), c(0.5) - i * 0.2, c(-1.0), i * 0.3, c(0.0), -i * 0.3, c(2.0)],
        );
        let h = HermitianMatrix::new(m).unwrap();
        assert!(!h.is_real());
        let eig = diagonalize(&h);
        assert!(eig.residual(&h) < 1e-9 * h.max_abs());
        let gram = eig.vectors.adjoint() * &eig.vectors;
        assert!(identity_deviation(&gram) < 1e-10);
        assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn non_hermitian_input_is_rejected() {
        let m = CMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(0.5), c(0.0)]);
        assert!(matches!(HermitianMatrix::new(m), Err(Error::ContractViolation(_))));
        let rect = CMatrix::zeros(2, 3);
        assert!(matches!(HermitianMatrix::new(rect), Err(Error::ContractViolation(_))));
    }

    #[test]
    fn propagator_is_unitary() {
        let h = HermitianMatrix::new(CMatrix::from_row_slice(2, 2, &[c(0.3), c(1.1), c(1.1), c(-0.7)]))
            .unwrap();
        let u = diagonalize(&h).propagator(17.3);
        assert!(identity_deviation(&(u.adjoint() * &u)) < 1e-10);
    }
}
