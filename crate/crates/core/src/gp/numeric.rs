use nalgebra::{Cholesky, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::{KernelParams, PosteriorGaussian, Surrogate};
use crate::error::{ensure_unit, Error, Result};
use crate::linalg::cholesky_jittered;

/// Z-scores with population standard deviation. A single sample or a
/// zero-variance sample maps to all zeros.
pub fn standardize_scores(s: &[f64]) -> Result<Vec<f64>> {
    if s.is_empty() {
        return Err(Error::InvalidArgument("cannot standardize an empty score list".into()));
    }
    let (mean, std) = mean_std(s);
    if s.len() == 1 || std == 0.0 {
        return Ok(vec![0.0; s.len()]);
    }
    Ok(s.iter().map(|v| (v - mean) / std).collect())
}

pub(crate) fn mean_std(s: &[f64]) -> (f64, f64) {
    if s.is_empty() {
        return (0.0, 0.0);
    }
    let n = s.len() as f64;
    let mean = s.iter().sum::<f64>() / n;
    let var = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Assistance levels, raw normalized scores and their standardized version.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(try_from = "RawNumeric")]
pub struct NumericDataset {
    x: Vec<f64>,
    s: Vec<f64>,
    #[serde(skip)]
    y: Vec<f64>,
}

#[derive(Deserialize)]
struct RawNumeric {
    x: Vec<f64>,
    s: Vec<f64>,
}

impl TryFrom<RawNumeric> for NumericDataset {
    type Error = Error;

    fn try_from(raw: RawNumeric) -> Result<Self> {
        Self::from_pairs(raw.x, raw.s)
    }
}

impl PartialEq for NumericDataset {
    fn eq(&self, other: &Self) -> bool {
        self.x == other.x && self.s == other.s
    }
}

impl NumericDataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(x: Vec<f64>, s: Vec<f64>) -> Result<Self> {
        if x.len() != s.len() {
            return Err(Error::InvalidArgument(format!(
                "x and s lengths differ ({} vs {})",
                x.len(),
                s.len()
            )));
        }
        let mut d = Self::new();
        for (xi, si) in x.into_iter().zip(s) {
            d.push(xi, si)?;
        }
        Ok(d)
    }

    /// Appends one observation and re-standardizes the whole score set.
    pub fn push(&mut self, x: f64, s: f64) -> Result<()> {
        ensure_unit("assistance", x)?;
        ensure_unit("score", s)?;
        self.x.push(x);
        self.s.push(s);
        self.y = standardize_scores(&self.s)?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn s(&self) -> &[f64] {
        &self.s
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Population mean and standard deviation of the raw scores.
    pub fn score_moments(&self) -> (f64, f64) {
        mean_std(&self.s)
    }

    // `y` is skipped by serde; rebuild it after deserialization.
    pub(crate) fn restore(&mut self) {
        self.y = if self.s.is_empty() { Vec::new() } else { standardize_scores(&self.s).unwrap_or_default() };
    }
}

/// Fitted regression surrogate over standardized scores.
#[derive(Debug, Clone)]
pub struct NumericModel {
    data: NumericDataset,
    kp: KernelParams,
    sigma_w2: f64,
    chol: Option<Cholesky<f64, Dyn>>,
    alpha: DVector<f64>,
}

impl NumericModel {
    pub fn fit(data: &NumericDataset, kp: KernelParams, sigma_w2: f64) -> Result<Self> {
        kp.validate()?;
        if !(sigma_w2.is_finite() && sigma_w2 >= 0.0) {
            return Err(Error::InvalidArgument(format!("sigma_w2 must be >= 0, got {sigma_w2}")));
        }
        let mut data = data.clone();
        if data.y.len() != data.s.len() {
            data.restore();
        }
        if data.is_empty() {
            return Ok(Self { data, kp, sigma_w2, chol: None, alpha: DVector::zeros(0) });
        }
        let mut k = kp.gram(data.x());
        for i in 0..data.len() {
            k[(i, i)] += sigma_w2;
        }
        let (chol, _) = cholesky_jittered(&k)?;
        let alpha = chol.solve(&DVector::from_column_slice(data.y()));
        Ok(Self { data, kp, sigma_w2, chol: Some(chol), alpha })
    }

    pub fn data(&self) -> &NumericDataset {
        &self.data
    }

    pub fn sigma_w2(&self) -> f64 {
        self.sigma_w2
    }

    /// Posterior mean mapped back to the raw score scale.
    pub fn raw_mean(&self, x_star: f64) -> f64 {
        let (m, s) = self.data.score_moments();
        m + s * self.predict(x_star).mean
    }
}

impl Surrogate for NumericModel {
    fn predict(&self, x_star: f64) -> PosteriorGaussian {
        let Some(chol) = &self.chol else {
            return PosteriorGaussian::PRIOR;
        };
        let ks = self.kp.cross(self.data.x(), x_star);
        let mean = ks.dot(&self.alpha);
        let v = chol.solve(&ks);
        let variance = (1.0 - ks.dot(&v)).max(0.0);
        PosteriorGaussian { mean, variance }
    }
}

pub fn num_posterior(
    data: &NumericDataset,
    x_star: f64,
    sigma_w2: f64,
    kp: KernelParams,
) -> Result<PosteriorGaussian> {
    ensure_unit("x_star", x_star)?;
    Ok(NumericModel::fit(data, kp, sigma_w2)?.predict(x_star))
}
