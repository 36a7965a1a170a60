//! Gaussian-process surrogates: a regression model over standardized task
//! scores and a probit-likelihood latent model over qualitative feedback.

mod numeric;
mod qualitative;

pub use numeric::{num_posterior, standardize_scores, NumericDataset, NumericModel};
pub use qualitative::{
    fit_laplace, ordinal_prob, pairwise_prob, qual_log_posterior, qual_posterior, LaplaceFit,
    LikelihoodParams, OrdinalLabel, Preference, QualDataset, QualObjective, QualProblem,
    PROB_CLAMP,
};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// RBF kernel coefficient: `k(a, b) = exp(-theta * (a - b)^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub theta: f64,
}

impl KernelParams {
    pub fn new(theta: f64) -> Result<Self> {
        let kp = Self { theta };
        kp.validate()?;
        Ok(kp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta.is_finite() && self.theta > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "kernel theta must be positive, got {}",
                self.theta
            )));
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn eval(&self, a: f64, b: f64) -> f64 {
        let d = a - b;
        (-self.theta * d * d).exp()
    }

    pub(crate) fn gram(&self, xs: &[f64]) -> DMatrix<f64> {
        let n = xs.len();
        DMatrix::from_fn(n, n, |i, j| self.eval(xs[i], xs[j]))
    }

    pub(crate) fn cross(&self, xs: &[f64], x_star: f64) -> DVector<f64> {
        DVector::from_iterator(xs.len(), xs.iter().map(|&x| self.eval(x, x_star)))
    }
}

impl Default for KernelParams {
    fn default() -> Self {
        Self { theta: 5.0 }
    }
}

pub fn rbf_kernel(x1: f64, x2: f64, theta: f64) -> Result<f64> {
    ensure_finite("x1", x1)?;
    ensure_finite("x2", x2)?;
    let kp = KernelParams::new(theta)?;
    Ok(kp.eval(x1, x2))
}

/// Predictive mean and variance at one query point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorGaussian {
    pub mean: f64,
    pub variance: f64,
}

impl PosteriorGaussian {
    pub const PRIOR: Self = Self { mean: 0.0, variance: 1.0 };

    pub fn std(&self) -> f64 {
        self.variance.max(0.0).sqrt()
    }
}

/// Anything that yields a Gaussian predictive distribution over assistance.
pub trait Surrogate {
    fn predict(&self, x_star: f64) -> PosteriorGaussian;
}

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal CDF.
#[inline]
pub fn norm_cdf(z: f64) -> f64 {
    if z == f64::INFINITY {
        1.0
    } else if z == f64::NEG_INFINITY {
        0.0
    } else {
        0.5 * libm::erfc(-z / SQRT_2)
    }
}

/// Standard normal density.
#[inline]
pub fn norm_pdf(z: f64) -> f64 {
    if z.is_infinite() {
        0.0
    } else {
        INV_SQRT_2PI * (-0.5 * z * z).exp()
    }
}
