//! Small dense symmetric positive-definite matrices.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;

/// A validated symmetric positive-definite matrix with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct SpdMatrix {
    matrix: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl PartialEq for SpdMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.matrix == other.matrix
    }
}

impl SpdMatrix {
    /// Validates symmetry (1e-12 relative) and positive pivots.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::NotSpd(format!(
                "expected a non-empty square matrix, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotSpd("non-finite entry".into()));
        }
        let scale = matrix.amax().max(f64::MIN_POSITIVE);
        let n = matrix.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::NotSpd(format!("asymmetric at ({i}, {j})")));
                }
            }
        }
        // symmetrize so the stored matrix and the factor agree exactly
        let matrix = 0.5 * (&matrix + matrix.transpose());
        let chol = Cholesky::new(matrix.clone())
            .ok_or_else(|| Error::NotSpd("non-positive Cholesky pivot".into()))?;
        if chol.l_dirty().diagonal().iter().any(|&d| d.is_nan() || d <= 0.0) {
            return Err(Error::NotSpd("non-positive Cholesky pivot".into()));
        }
        Ok(Self { matrix, chol })
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(DMatrix::identity(dim, dim)).expect("identity is SPD")
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Lower-triangular `L` with `L Lᵗ = self`.
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        if rhs.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "rhs has length {}, matrix is {}x{}",
                rhs.len(),
                self.dim(),
                self.dim()
            )));
        }
        Ok(self.chol.solve(rhs))
    }

    pub fn solve_matrix(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(rhs)
    }

    /// `2 Σ ln Lᵢᵢ`.
    pub fn logdet(&self) -> f64 {
        2.0 * self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    pub fn inverse(&self) -> SpdMatrix {
        SpdMatrix::new(self.chol.inverse()).expect("inverse of an SPD matrix is SPD")
    }

    /// `xᵗ self⁻¹ x`.
    pub fn inv_quad_form(&self, x: &DVector<f64>) -> Result<f64> {
        let sol = self.solve(x)?;
        Ok(x.dot(&sol))
    }

    pub fn quad_form(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.matrix * x))
    }

    pub fn scale(&self, factor: f64) -> Result<SpdMatrix> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::NotSpd(format!("scale factor {factor} is not positive")));
        }
        SpdMatrix::new(&self.matrix * factor)
    }

    pub fn add(&self, other: &SpdMatrix) -> Result<SpdMatrix> {
        if other.dim() != self.dim() {
            return Err(Error::Dimension("matrix sizes differ".into()));
        }
        SpdMatrix::new(&self.matrix + &other.matrix)
    }
}

/// Lower Cholesky factor of `m`.
pub fn cholesky(m: &SpdMatrix) -> DMatrix<f64> {
    m.cholesky_factor()
}

pub fn solve_spd(m: &SpdMatrix, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    m.solve(rhs)
}

pub fn logdet_spd(m: &SpdMatrix) -> f64 {
    m.logdet()
}
