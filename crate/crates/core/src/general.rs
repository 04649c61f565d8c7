//! Numerical checks of the algebra for the general model
//! `y_it = x_iᵗβ + z_iᵗu_i + e_it`, `u_i ~ N(0, σ²Λ)`, with unequal group
//! sizes `w_i`.
//!
//! Notation: `K` is the `N × n` observation-to-group indicator, `W = KᵗK`,
//! `Z` is the `nq × n` block matrix holding `z_i` in block `i`, and
//! `Σ⊗ = I_N + K Zᵗ(Iₙ ⊗ Λ)Z Kᵗ` is the covariance of `y` divided by `σ²`.

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::numkernel::{sample_std_normal, SpdMatrix};

/// Largest `N` for which dense reference computations are run.
pub const DENSE_LIMIT: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct GeneralDesign {
    pub w: Vec<usize>,
    pub z: Vec<DVector<f64>>,
    pub x: DMatrix<f64>,
    pub lambda: SpdMatrix,
    pub sigma2: f64,
    pub beta: DVector<f64>,
}

/// Largest relative (or absolute, for the cross terms) discrepancy found.
pub fn rel_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn matrix_rel_gap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = a.amax().max(b.amax());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).amax() / scale
    }
}

impl GeneralDesign {
    pub fn n(&self) -> usize {
        self.w.len()
    }

    pub fn q(&self) -> usize {
        self.lambda.dim()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn total(&self) -> usize {
        self.w.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if n == 0 {
            return Err(domain("design has no groups"));
        }
        if self.w.iter().any(|&w| w == 0) {
            return Err(domain("every group needs at least one observation"));
        }
        if self.z.len() != n || self.z.iter().any(|z| z.len() != self.q()) {
            return Err(Error::Dimension(format!(
                "need {n} random-effect vectors of length {}",
                self.q()
            )));
        }
        if self.x.nrows() != n || self.beta.len() != self.p() {
            return Err(Error::Dimension("design matrix and beta disagree".into()));
        }
        if !(self.sigma2 > 0.0) {
            return Err(domain(format!("sigma2 must be > 0, got {}", self.sigma2)));
        }
        Ok(())
    }

    /// `N × n` indicator.
    pub fn k(&self) -> DMatrix<f64> {
        let mut k = DMatrix::zeros(self.total(), self.n());
        let mut row = 0;
        for (i, &wi) in self.w.iter().enumerate() {
            for _ in 0..wi {
                k[(row, i)] = 1.0;
                row += 1;
            }
        }
        k
    }

    pub fn w_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_iterator(self.n(), self.w.iter().map(|&w| w as f64)))
    }

    /// `nq × n` block matrix with `z_i` in rows `iq..(i+1)q` of column `i`.
    pub fn z_matrix(&self) -> DMatrix<f64> {
        let q = self.q();
        let mut z = DMatrix::zeros(self.n() * q, self.n());
        for (i, zi) in self.z.iter().enumerate() {
            z.view_mut((i * q, i), (q, 1)).copy_from(zi);
        }
        z
    }

    fn block_diag(&self, block: &DMatrix<f64>) -> DMatrix<f64> {
        let q = self.q();
        let mut m = DMatrix::zeros(self.n() * q, self.n() * q);
        for i in 0..self.n() {
            m.view_mut((i * q, i * q), (q, q)).copy_from(block);
        }
        m
    }

    /// `I ⊗ Λ⁻¹ + Z W Zᵗ`.
    pub fn inner(&self) -> Result<SpdMatrix> {
        let lambda_inv = self.lambda.inverse();
        let z = self.z_matrix();
        SpdMatrix::new(self.block_diag(lambda_inv.matrix()) + &z * self.w_matrix() * z.transpose())
    }

    /// Draws `y` from the model.
    pub fn simulate_y<R: RngCore + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let l = self.lambda.cholesky_factor();
        let sd = self.sigma2.sqrt();
        let mut y = DVector::zeros(self.total());
        let mut row = 0;
        for i in 0..self.n() {
            let e = DVector::from_fn(self.q(), |_, _| sample_std_normal(rng));
            let u = (&l * e) * sd;
            let mean = (self.x.row(i) * &self.beta)[0] + self.z[i].dot(&u);
            for _ in 0..self.w[i] {
                y[row] = mean + sd * sample_std_normal(rng);
                row += 1;
            }
        }
        y
    }
}

#[derive(Debug, Clone)]
pub struct SigmaKron {
    pub sigma: DMatrix<f64>,
    /// Inverse by the Woodbury identity.
    pub inverse: DMatrix<f64>,
    /// `n ln|Λ| + ln|I ⊗ Λ⁻¹ + ZWZᵗ|`.
    pub logdet: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenseGaps {
    pub inverse: f64,
    pub logdet: f64,
}

pub fn sigma_kron_ops(d: &GeneralDesign) -> Result<SigmaKron> {
    d.validate()?;
    let k = d.k();
    let z = d.z_matrix();
    // Zᵗ(I⊗Λ)Z is diagonal with entries z_iᵗ Λ z_i
    let zlz = DMatrix::from_diagonal(&DVector::from_iterator(
        d.n(),
        d.z.iter().map(|zi| d.lambda.quad_form(zi)),
    ));
    let sigma = DMatrix::identity(d.total(), d.total()) + &k * zlz * k.transpose();
    let inner = d.inner()?;
    let kz = &k * z.transpose();
    let inverse = DMatrix::identity(d.total(), d.total()) - &kz * inner.solve_matrix(&kz.transpose());
    let logdet = d.n() as f64 * d.lambda.logdet() + inner.logdet();
    Ok(SigmaKron {
        sigma,
        inverse,
        logdet,
    })
}

impl SigmaKron {
    /// Relative gaps against a dense factorization of `Σ⊗`.
    pub fn dense_gaps(&self) -> Result<DenseGaps> {
        if self.sigma.nrows() > DENSE_LIMIT {
            return Err(domain(format!("dense check capped at N = {DENSE_LIMIT}")));
        }
        let dense = SpdMatrix::new(self.sigma.clone())?;
        Ok(DenseGaps {
            inverse: matrix_rel_gap(&dense.inverse().matrix().clone(), &self.inverse),
            logdet: rel_gap(dense.logdet(), self.logdet),
        })
    }
}

#[derive(Debug, Clone)]
pub struct GeneralStats {
    pub g: DMatrix<f64>,
    pub ybar: DVector<f64>,
    pub beta_w: DVector<f64>,
    pub beta_lambda: DVector<f64>,
    pub q1: f64,
    pub q2: f64,
    /// `1 - (ȳ - Xβ̂_w)ᵗ G (ȳ - Xβ̂_w) / Q2`.
    pub rho: f64,
    /// `1 - rho^{1/n}`, the reading with the root applied.
    pub delta_root: f64,
}

pub fn general_stats(d: &GeneralDesign, y: &DVector<f64>) -> Result<GeneralStats> {
    d.validate()?;
    if y.len() != d.total() {
        return Err(Error::Dimension(format!(
            "y has length {}, design has {} observations",
            y.len(),
            d.total()
        )));
    }
    let k = d.k();
    let wm = d.w_matrix();
    let kty = k.transpose() * y;
    let ybar = DVector::from_fn(d.n(), |i, _| kty[i] / d.w[i] as f64);
    let resid_within = y - &k * &ybar;
    let q1 = resid_within.norm_squared();
    let z = d.z_matrix();
    let inner = d.inner()?;
    let zw = &z * &wm;
    let g = zw.transpose() * inner.solve_matrix(&zw);
    let xtwx = SpdMatrix::new(d.x.transpose() * &wm * &d.x).map_err(|_| Error::RankDeficient)?;
    let beta_w = xtwx.solve(&(d.x.transpose() * &wm * &ybar))?;
    let a = &wm - &g;
    let xtax = SpdMatrix::new(d.x.transpose() * &a * &d.x).map_err(|_| Error::RankDeficient)?;
    let beta_lambda = xtax.solve(&(d.x.transpose() * &a * &ybar))?;
    let e = &ybar - &d.x * &beta_w;
    let q2 = e.dot(&(&wm * &e));
    if q2 <= 0.0 {
        return Err(Error::Degenerate("Q2 = 0, rho undefined".into()));
    }
    let rho = 1.0 - e.dot(&(&g * &e)) / q2;
    Ok(GeneralStats {
        g,
        ybar,
        beta_w,
        beta_lambda,
        q1,
        q2,
        rho,
        delta_root: 1.0 - rho.powf(1.0 / d.n() as f64),
    })
}

/// The three evaluations of `(y - KXβ)ᵗ Σ⊗⁻¹ (y - KXβ)` at one `β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticForms {
    pub direct: f64,
    pub projected: f64,
    pub expanded: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub forms: Vec<QuadraticForms>,
    /// Largest pairwise relative gap among the three forms.
    pub max_gap: f64,
    /// Largest vanishing cross term, relative to the magnitude of its factors.
    pub max_cross_term: f64,
}

pub fn verify_quadratic_decomposition(
    d: &GeneralDesign,
    y: &DVector<f64>,
    betas: &[DVector<f64>],
) -> Result<DecompositionReport> {
    if d.total() > DENSE_LIMIT {
        return Err(domain(format!("dense check capped at N = {DENSE_LIMIT}")));
    }
    let st = general_stats(d, y)?;
    let ops = sigma_kron_ops(d)?;
    let dense_inv = SpdMatrix::new(ops.sigma.clone())?.inverse().matrix().clone();
    let k = d.k();
    let wm = d.w_matrix();
    let a_dense = k.transpose() * &dense_inv * &k;
    let a_wood = &wm - &st.g;
    let xax = d.x.transpose() * &a_dense * &d.x;
    let r_lambda = &st.ybar - &d.x * &st.beta_lambda;
    let dw = &st.beta_w - &st.beta_lambda;
    let trace_term = dw.dot(&(d.x.transpose() * &a_wood * &d.x * &dw));
    let within = y - &k * &st.ybar;

    let mut forms = Vec::with_capacity(betas.len());
    let mut max_gap: f64 = 0.0;
    let mut max_cross: f64 = 0.0;
    for beta in betas {
        if beta.len() != d.p() {
            return Err(Error::Dimension("beta length".into()));
        }
        let r = y - &k * (&d.x * beta);
        let direct = r.dot(&(&dense_inv * &r));
        let db = beta - &st.beta_lambda;
        let beta_term = db.dot(&(&xax * &db));
        let projected = st.q1 + r_lambda.dot(&(&a_dense * &r_lambda)) + beta_term;
        let expanded = st.q1 + st.q2 * st.rho - trace_term + beta_term;
        max_gap = max_gap
            .max(rel_gap(direct, projected))
            .max(rel_gap(direct, expanded))
            .max(rel_gap(projected, expanded));
        // (y - Kȳ)ᵗ Σ⁻¹ K (ȳ - Xβ)
        let mean_resid = &st.ybar - &d.x * beta;
        let left = &dense_inv * &within;
        let right = &k * &mean_resid;
        let cross = left.dot(&right) / (left.norm() * right.norm()).max(f64::MIN_POSITIVE);
        max_cross = max_cross.max(cross.abs());
        forms.push(QuadraticForms {
            direct,
            projected,
            expanded,
        });
    }
    // (I - H_Λ)ᵗ A X = 0 for A = KᵗΣ⁻¹K (dense) and A = W - G (Woodbury)
    for a in [&a_dense, &a_wood] {
        let ax = a * &d.x;
        let h = &d.x * SpdMatrix::new(d.x.transpose() * &ax)?.solve_matrix(&ax.transpose());
        let resid = (DMatrix::identity(d.n(), d.n()) - h).transpose() * &ax;
        max_cross = max_cross.max(resid.amax() / ax.amax().max(f64::MIN_POSITIVE));
    }
    Ok(DecompositionReport {
        forms,
        max_gap,
        max_cross_term: max_cross,
    })
}

#[derive(Debug, Clone)]
pub struct BetaCovariance {
    /// `(XᵗKᵗΣ⊗⁻¹KX)⁻¹` through the C-matrix identity.
    pub woodbury: DMatrix<f64>,
    /// The same by direct inversion.
    pub direct: DMatrix<f64>,
    pub gap: f64,
}

pub fn woodbury_beta_covariance(d: &GeneralDesign) -> Result<BetaCovariance> {
    d.validate()?;
    let wm = d.w_matrix();
    let z = d.z_matrix();
    let x = &d.x;
    let a = SpdMatrix::new(x.transpose() * &wm * x).map_err(|_| Error::RankDeficient)?;
    let a_inv = a.inverse().matrix().clone();
    let proj = DMatrix::identity(d.n(), d.n()) - x * &a_inv * x.transpose() * &wm;
    let lambda_inv = d.lambda.inverse();
    let middle = SpdMatrix::new(d.block_diag(lambda_inv.matrix()) + &z * &wm * proj * z.transpose())?;
    let u = x.transpose() * &wm * z.transpose();
    let c = &u * middle.solve_matrix(&u.transpose());
    let woodbury = &a_inv + &a_inv * c * &a_inv;

    let ops = sigma_kron_ops(d)?;
    let k = d.k();
    let xax = x.transpose() * k.transpose() * &ops.inverse * &k * x;
    let direct = SpdMatrix::new(0.5 * (&xax + xax.transpose()))?.inverse().matrix().clone();
    let gap = matrix_rel_gap(&woodbury, &direct);
    Ok(BetaCovariance {
        woodbury,
        direct,
        gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::RngStream;

    fn design(lambda_scale: f64) -> GeneralDesign {
        GeneralDesign {
            w: vec![1, 3, 2, 4, 2],
            z: vec![
                DVector::from_vec(vec![1.0, 0.5]),
                DVector::from_vec(vec![1.0, -0.3]),
                DVector::from_vec(vec![1.0, 1.2]),
                DVector::from_vec(vec![1.0, 0.0]),
                DVector::from_vec(vec![1.0, -1.1]),
            ],
            x: DMatrix::from_row_slice(5, 2, &[1.0, 0.2, 1.0, -0.4, 1.0, 1.5, 1.0, 0.9, 1.0, -1.3]),
            lambda: SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[0.8, 0.2, 0.2, 0.5]))
                .unwrap()
                .scale(lambda_scale)
                .unwrap(),
            sigma2: 1.3,
            beta: DVector::from_vec(vec![0.4, -0.7]),
        }
    }

    #[test]
    fn woodbury_and_lemma_match_dense() {
        let ops = sigma_kron_ops(&design(1.0)).unwrap();
        let gaps = ops.dense_gaps().unwrap();
        assert!(gaps.inverse < 1e-10 && gaps.logdet < 1e-10, "{gaps:?}");
    }

    #[test]
    fn vanishing_lambda_gives_identity() {
        let ops = sigma_kron_ops(&design(1e-12)).unwrap();
        assert!((ops.sigma.clone() - DMatrix::identity(12, 12)).amax() < 1e-10);
        assert!(ops.logdet.abs() < 1e-9);
    }

    #[test]
    fn decomposition_and_covariance() {
        let d = design(1.0);
        let y = d.simulate_y(&mut RngStream::new(3, 1).generator());
        let betas = vec![DVector::from_vec(vec![0.0, 0.0]), DVector::from_vec(vec![2.0, -1.0])];
        let rep = verify_quadratic_decomposition(&d, &y, &betas).unwrap();
        assert!(rep.max_gap < 1e-10 && rep.max_cross_term < 1e-10, "{rep:?}");
        let cov = woodbury_beta_covariance(&d).unwrap();
        assert!(cov.gap < 1e-10);
        let st = general_stats(&d, &y).unwrap();
        assert!(st.rho > 0.0 && st.rho <= 1.0);
    }
}
