//! Foundational numerics shared by every other module: special functions,
//! the Gauss hypergeometric function, log-space adaptive quadrature, small
//! dense SPD linear algebra, quantile functions and reproducible sampling.

pub mod dist;
pub mod hyp2f1;
pub mod linalg;
pub mod quadrature;
pub mod rng;
pub mod special;

pub use dist::{
    cdf_beta, cdf_gamma, cdf_normal, cdf_t, log_pdf_beta, log_pdf_gamma, quantile_beta, quantile_chi2, quantile_f,
    quantile_gamma, quantile_normal, quantile_t,
};
pub use hyp2f1::{log_2f1, EulerKernel};
pub use linalg::{cholesky, logdet_spd, solve_spd, SpdMatrix};
pub use quadrature::{integrate, QuadratureSpec};
pub use rng::{
    sample_gamma, sample_mvnormal, sample_std_normal, sample_uniform, MvNormalSampler, RngStream,
    StreamRng,
};
pub use special::{log_beta, log_gamma, log_sum_exp};
