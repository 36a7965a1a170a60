//! Latent perceived-challenge model. Ordinal labels and pairwise comparisons
//! enter through probit likelihoods; the posterior over the latent values at
//! the training inputs is approximated by a Gaussian centred at the MAP.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::{norm_cdf, norm_pdf, KernelParams, PosteriorGaussian, Surrogate};
use crate::error::{ensure_finite, ensure_unit, Error, Result};
use crate::linalg::{cholesky_jittered, inf_norm, psd_project, psd_sqrt};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before taking logs.
pub const PROB_CLAMP: f64 = 1e-12;

const FIT_TOLERANCE: f64 = 1e-6;
const FIT_MAX_ITER: usize = 100;
const SAME_INPUT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrdinalLabel {
    Easy,
    Moderate,
    Hard,
}

impl OrdinalLabel {
    pub const ALL: [OrdinalLabel; 3] = [OrdinalLabel::Easy, OrdinalLabel::Moderate, OrdinalLabel::Hard];

    /// One-based ordinal index.
    pub fn index(self) -> usize {
        match self {
            OrdinalLabel::Easy => 1,
            OrdinalLabel::Moderate => 2,
            OrdinalLabel::Hard => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            1 => Some(OrdinalLabel::Easy),
            2 => Some(OrdinalLabel::Moderate),
            3 => Some(OrdinalLabel::Hard),
            _ => None,
        }
    }
}

impl std::fmt::Display for OrdinalLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OrdinalLabel::Easy => "easy",
            OrdinalLabel::Moderate => "moderate",
            OrdinalLabel::Hard => "hard",
        })
    }
}

impl std::str::FromStr for OrdinalLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "easy" => Ok(OrdinalLabel::Easy),
            "moderate" => Ok(OrdinalLabel::Moderate),
            "hard" => Ok(OrdinalLabel::Hard),
            other => Err(Error::InvalidArgument(format!("unknown ordinal label {other:?}"))),
        }
    }
}

/// Which of two consecutive trials was judged harder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preference {
    CurrentHarder,
    PreviousHarder,
}

impl Preference {
    fn sign(self) -> f64 {
        match self {
            Preference::CurrentHarder => 1.0,
            Preference::PreviousHarder => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodParams {
    pub c_o: f64,
    pub c_p: f64,
    /// Inner thresholds `(t1, t2)`; the outer ones are `-inf` and `+inf`.
    pub thresholds: (f64, f64),
}

impl Default for LikelihoodParams {
    fn default() -> Self {
        Self { c_o: 1.0, c_p: 0.5, thresholds: (-0.5, 0.5) }
    }
}

impl LikelihoodParams {
    pub fn validate(&self) -> Result<()> {
        let (t1, t2) = self.thresholds;
        if !(self.c_o > 0.0 && self.c_o.is_finite()) || !(self.c_p > 0.0 && self.c_p.is_finite()) {
            return Err(Error::InvalidArgument("likelihood noise c_o and c_p must be positive".into()));
        }
        if !(t1.is_finite() && t2.is_finite() && t1 < t2) {
            return Err(Error::InvalidArgument(format!("thresholds must satisfy t1 < t2, got ({t1}, {t2})")));
        }
        Ok(())
    }

    /// Lower and upper bin edges for a label.
    pub fn bin(&self, label: OrdinalLabel) -> (f64, f64) {
        let (t1, t2) = self.thresholds;
        match label {
            OrdinalLabel::Easy => (f64::NEG_INFINITY, t1),
            OrdinalLabel::Moderate => (t1, t2),
            OrdinalLabel::Hard => (t2, f64::INFINITY),
        }
    }
}

/// `Phi(hi) - Phi(lo)` evaluated on whichever tail avoids cancellation.
fn interval_mass(lo: f64, hi: f64) -> f64 {
    if lo > 0.0 {
        norm_cdf(-lo) - norm_cdf(-hi)
    } else {
        norm_cdf(hi) - norm_cdf(lo)
    }
}

fn clamped_ln(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP).ln()
}

/// Probability that latent value `f` is labelled `label`.
pub fn ordinal_prob(f: f64, label: OrdinalLabel, lp: &LikelihoodParams) -> f64 {
    let (lo, hi) = lp.bin(label);
    interval_mass((lo - f) / lp.c_o, (hi - f) / lp.c_o)
}

/// Probability that the current trial is judged harder than the previous one.
pub fn pairwise_prob(f_curr: f64, f_prev: f64, lp: &LikelihoodParams) -> f64 {
    norm_cdf((f_curr - f_prev) / lp.c_p)
}

// Value, first and second derivative (w.r.t. f) of the log ordinal likelihood.
fn ordinal_terms(f: f64, label: OrdinalLabel, lp: &LikelihoodParams) -> (f64, f64, f64) {
    let c = lp.c_o;
    let (t_lo, t_hi) = lp.bin(label);
    let a = (t_hi - f) / c;
    let b = (t_lo - f) / c;
    let p = interval_mass(b, a);
    let (pa, pb) = (norm_pdf(a), norm_pdf(b));
    let za = if a.is_finite() { a * pa } else { 0.0 };
    let zb = if b.is_finite() { b * pb } else { 0.0 };
    let p_safe = p.max(f64::MIN_POSITIVE);
    let d1 = -(pa - pb) / (c * p_safe);
    let d2 = -(za - zb) / (c * c * p_safe) - d1 * d1;
    (clamped_ln(p), d1, d2)
}

// Inverse Mills ratio phi(z)/Phi(z), stable in the lower tail.
fn mills(z: f64) -> f64 {
    if z < -35.0 {
        // asymptotic expansion
        let iz = 1.0 / z;
        -z / (1.0 - iz * iz + 3.0 * iz.powi(4))
    } else {
        norm_pdf(z) / norm_cdf(z)
    }
}

// Value, derivative and curvature w.r.t. the signed difference z.
fn pairwise_terms(z: f64) -> (f64, f64, f64) {
    let r = mills(z);
    (clamped_ln(norm_cdf(z)), r, -r * (z + r))
}

/// Ordinal labels and pairwise comparisons keyed by raw assistance level.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QualDataset {
    pub ordinal: Vec<(f64, OrdinalLabel)>,
    /// `(x_prev, x_curr, preference)`.
    pub pairwise: Vec<(f64, f64, Preference)>,
}

impl QualDataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_ordinal(&mut self, x: f64, label: OrdinalLabel) -> Result<()> {
        ensure_unit("assistance", x)?;
        self.ordinal.push((x, label));
        Ok(())
    }

    pub fn push_pairwise(&mut self, x_prev: f64, x_curr: f64, pref: Preference) -> Result<()> {
        ensure_unit("previous assistance", x_prev)?;
        ensure_unit("current assistance", x_curr)?;
        self.pairwise.push((x_prev, x_curr, pref));
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.ordinal.is_empty() && self.pairwise.is_empty()
    }

    pub fn len(&self) -> usize {
        self.ordinal.len() + self.pairwise.len()
    }
}

/// Feedback re-indexed onto the distinct training inputs (one latent per input).
#[derive(Debug, Clone, PartialEq)]
pub struct QualProblem {
    pub inputs: Vec<f64>,
    pub ordinal: Vec<(usize, OrdinalLabel)>,
    /// `(prev index, curr index, preference)`.
    pub pairwise: Vec<(usize, usize, Preference)>,
}

impl QualProblem {
    pub fn from_dataset(dq: &QualDataset) -> Self {
        let mut inputs: Vec<f64> = Vec::new();
        let mut index_of = |x: f64| -> usize {
            match inputs.iter().position(|&v| (v - x).abs() <= SAME_INPUT_EPS) {
                Some(i) => i,
                None => {
                    inputs.push(x);
                    inputs.len() - 1
                }
            }
        };
        let mut ordinal = Vec::with_capacity(dq.ordinal.len());
        let mut pairwise = Vec::with_capacity(dq.pairwise.len());
        for &(x, label) in &dq.ordinal {
            ordinal.push((index_of(x), label));
        }
        for &(xp, xc, pref) in &dq.pairwise {
            pairwise.push((index_of(xp), index_of(xc), pref));
        }
        Self { inputs, ordinal, pairwise }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Log-likelihood, its gradient and the negative Hessian (`W`).
    pub fn likelihood_terms(&self, f: &DVector<f64>, lp: &LikelihoodParams) -> (f64, DVector<f64>, DMatrix<f64>) {
        let n = self.len();
        let mut value = 0.0;
        let mut grad = DVector::zeros(n);
        let mut w = DMatrix::zeros(n, n);
        for &(i, label) in &self.ordinal {
            let (v, d1, d2) = ordinal_terms(f[i], label, lp);
            value += v;
            grad[i] += d1;
            w[(i, i)] -= d2;
        }
        for &(p, c, pref) in &self.pairwise {
            let s = pref.sign();
            let z = s * (f[c] - f[p]) / lp.c_p;
            let (v, dz, d2z) = pairwise_terms(z);
            value += v;
            let g = s * dz / lp.c_p;
            grad[c] += g;
            grad[p] -= g;
            let h = -d2z / (lp.c_p * lp.c_p);
            w[(c, c)] += h;
            w[(p, p)] += h;
            w[(c, p)] -= h;
            w[(p, c)] -= h;
        }
        (value, grad, w)
    }

    pub fn log_likelihood(&self, f: &DVector<f64>, lp: &LikelihoodParams) -> f64 {
        let mut value = 0.0;
        for &(i, label) in &self.ordinal {
            value += clamped_ln(ordinal_prob(f[i], label, lp));
        }
        for &(p, c, pref) in &self.pairwise {
            let z = pref.sign() * (f[c] - f[p]) / lp.c_p;
            value += clamped_ln(norm_cdf(z));
        }
        value
    }
}

/// Unnormalized log posterior `log p(D|f) - f' K^-1 f / 2` with its derivatives.
#[derive(Debug, Clone)]
pub struct QualObjective {
    problem: QualProblem,
    lp: LikelihoodParams,
    k: DMatrix<f64>,
    k_jittered: DMatrix<f64>,
    chol: Option<Cholesky<f64, Dyn>>,
}

impl QualObjective {
    pub fn new(dq: &QualDataset, kp: KernelParams, lp: LikelihoodParams) -> Result<Self> {
        kp.validate()?;
        lp.validate()?;
        let problem = QualProblem::from_dataset(dq);
        let k = kp.gram(&problem.inputs);
        let (chol, k_jittered) = if problem.is_empty() {
            (None, k.clone())
        } else {
            let (ch, jitter) = cholesky_jittered(&k)?;
            let mut kj = k.clone();
            for i in 0..kj.nrows() {
                kj[(i, i)] += jitter;
            }
            (Some(ch), kj)
        };
        Ok(Self { problem, lp, k, k_jittered, chol })
    }

    pub fn problem(&self) -> &QualProblem {
        &self.problem
    }

    pub fn dim(&self) -> usize {
        self.problem.len()
    }

    fn k_inv_f(&self, f: &DVector<f64>) -> DVector<f64> {
        match &self.chol {
            Some(ch) => ch.solve(f),
            None => DVector::zeros(0),
        }
    }

    pub fn value(&self, f: &DVector<f64>) -> f64 {
        let alpha = self.k_inv_f(f);
        self.problem.log_likelihood(f, &self.lp) - 0.5 * f.dot(&alpha)
    }

    pub fn gradient(&self, f: &DVector<f64>) -> DVector<f64> {
        let (_, g, _) = self.problem.likelihood_terms(f, &self.lp);
        g - self.k_inv_f(f)
    }
}

/// Convenience wrapper: log posterior of `f` given the feedback.
pub fn qual_log_posterior(
    f: &[f64],
    dq: &QualDataset,
    kp: KernelParams,
    lp: LikelihoodParams,
) -> Result<f64> {
    let obj = QualObjective::new(dq, kp, lp)?;
    if f.len() != obj.dim() {
        return Err(Error::InvalidArgument(format!(
            "latent vector has length {} but feedback references {} distinct inputs",
            f.len(),
            obj.dim()
        )));
    }
    for &v in f {
        ensure_finite("latent", v)?;
    }
    Ok(obj.value(&DVector::from_column_slice(f)))
}

/// Laplace approximation of the latent posterior.
#[derive(Debug, Clone)]
pub struct LaplaceFit {
    pub inputs: Vec<f64>,
    pub f_hat: DVector<f64>,
    /// Negative Hessian of the log-likelihood at `f_hat`, PSD-projected.
    pub w: DMatrix<f64>,
    /// Noiseless kernel matrix over `inputs`.
    pub k: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
    pub likelihood: LikelihoodParams,
    kp: KernelParams,
    alpha: DVector<f64>,
    w_sqrt: DMatrix<f64>,
    b_chol: Option<Cholesky<f64, Dyn>>,
}

impl LaplaceFit {
    fn prior(kp: KernelParams, likelihood: LikelihoodParams) -> Self {
        Self {
            inputs: Vec::new(),
            f_hat: DVector::zeros(0),
            w: DMatrix::zeros(0, 0),
            k: DMatrix::zeros(0, 0),
            converged: true,
            iterations: 0,
            grad_norm: 0.0,
            likelihood,
            kp,
            alpha: DVector::zeros(0),
            w_sqrt: DMatrix::zeros(0, 0),
            b_chol: None,
        }
    }

    /// Latent MAP value at a training input, if present.
    pub fn latent_at(&self, x: f64) -> Option<f64> {
        self.inputs
            .iter()
            .position(|&v| (v - x).abs() <= SAME_INPUT_EPS)
            .map(|i| self.f_hat[i])
    }
}

impl Surrogate for LaplaceFit {
    fn predict(&self, x_star: f64) -> PosteriorGaussian {
        let Some(b_chol) = &self.b_chol else {
            return PosteriorGaussian::PRIOR;
        };
        let ks = self.kp.cross(&self.inputs, x_star);
        let mean = ks.dot(&self.alpha);
        // k** - k*' W^1/2 (I + W^1/2 K W^1/2)^-1 W^1/2 k*, never inverting W
        let b = &self.w_sqrt * &ks;
        let v = b_chol.solve(&b);
        let variance = (1.0 - b.dot(&v)).max(0.0);
        PosteriorGaussian { mean, variance }
    }
}

/// Damped Newton ascent on the log posterior starting from `f = 0`.
pub fn fit_laplace(dq: &QualDataset, kp: KernelParams, lp: LikelihoodParams) -> Result<LaplaceFit> {
    let obj = QualObjective::new(dq, kp, lp)?;
    let n = obj.dim();
    if n == 0 {
        return Ok(LaplaceFit::prior(kp, lp));
    }
    let kj = &obj.k_jittered;
    let eye = DMatrix::<f64>::identity(n, n);

    let mut f = DVector::<f64>::zeros(n);
    let mut psi = obj.value(&f);
    let mut iterations = 0;
    let mut grad_norm;
    loop {
        let (_, g_lik, w) = obj.problem.likelihood_terms(&f, &lp);
        let w = psd_project(&w);
        let grad = &g_lik - obj.k_inv_f(&f);
        grad_norm = inf_norm(&grad);
        if grad_norm < FIT_TOLERANCE || iterations >= FIT_MAX_ITER {
            break;
        }
        iterations += 1;

        // (I + K W) f_new = K (W f + g)
        let lhs = &eye + kj * &w;
        let rhs = kj * (&w * &f + &g_lik);
        let Some(f_new) = lhs.lu().solve(&rhs) else {
            return Err(Error::Numerical("singular Newton system in Laplace fit".into()));
        };
        let delta = f_new - &f;

        let mut step = 1.0;
        let mut accepted = false;
        while step > 1e-10 {
            let cand = &f + &delta * step;
            let v = obj.value(&cand);
            if v >= psi {
                f = cand;
                psi = v;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // no ascent possible along the Newton direction at machine precision
            let (_, g_lik, _) = obj.problem.likelihood_terms(&f, &lp);
            grad_norm = inf_norm(&(&g_lik - obj.k_inv_f(&f)));
            break;
        }
    }
    let converged = grad_norm < FIT_TOLERANCE;
    if !converged {
        log::warn!(
            "Laplace fit did not converge after {iterations} iterations (gradient inf-norm {grad_norm:e})"
        );
    }

    let (_, _, w) = obj.problem.likelihood_terms(&f, &lp);
    let w = psd_project(&w);
    let w_sqrt = psd_sqrt(&w);
    let b = &eye + &w_sqrt * kj * &w_sqrt;
    let b_chol = Cholesky::new((&b + b.transpose()) * 0.5)
        .ok_or_else(|| Error::Numerical("I + W^1/2 K W^1/2 is not positive definite".into()))?;
    let alpha = obj.k_inv_f(&f);

    Ok(LaplaceFit {
        inputs: obj.problem.inputs.clone(),
        f_hat: f,
        w,
        k: obj.k.clone(),
        converged,
        iterations,
        grad_norm,
        likelihood: lp,
        kp,
        alpha,
        w_sqrt,
        b_chol: Some(b_chol),
    })
}

/// Posterior predictive of the latent challenge at `x_star`.
pub fn qual_posterior(fit: &LaplaceFit, x_star: f64) -> Result<PosteriorGaussian> {
    ensure_unit("x_star", x_star)?;
    Ok(fit.predict(x_star))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp() -> LikelihoodParams {
        LikelihoodParams::default()
    }

    #[test]
    fn moderate_at_zero() {
        let p = ordinal_prob(0.0, OrdinalLabel::Moderate, &lp());
        assert!((p - 0.382_924_922_548_026).abs() < 1e-12, "{p}");
    }

    #[test]
    fn hard_at_large_latent() {
        assert!(ordinal_prob(1e6, OrdinalLabel::Hard, &lp()) > 1.0 - 1e-15);
    }

    #[test]
    fn pairwise_symmetry_and_one_sigma() {
        assert_eq!(pairwise_prob(0.3, 0.3, &lp()), 0.5);
        let p = pairwise_prob(0.5, 0.0, &lp());
        assert!((p - 0.841_344_746_068_543).abs() < 1e-12);
    }

    #[test]
    fn duplicate_inputs_share_a_latent() {
        let mut dq = QualDataset::new();
        dq.push_ordinal(0.5, OrdinalLabel::Easy).unwrap();
        dq.push_ordinal(0.2, OrdinalLabel::Hard).unwrap();
        dq.push_ordinal(0.5, OrdinalLabel::Moderate).unwrap();
        dq.push_pairwise(0.2, 0.5, Preference::PreviousHarder).unwrap();
        let pr = QualProblem::from_dataset(&dq);
        assert_eq!(pr.inputs, vec![0.5, 0.2]);
        assert_eq!(pr.ordinal, vec![(0, OrdinalLabel::Easy), (1, OrdinalLabel::Hard), (0, OrdinalLabel::Moderate)]);
        assert_eq!(pr.pairwise, vec![(1, 0, Preference::PreviousHarder)]);
    }

    #[test]
    fn empty_feedback_gives_prior() {
        let fit = fit_laplace(&QualDataset::new(), KernelParams::default(), lp()).unwrap();
        assert!(fit.f_hat.is_empty());
        assert_eq!(qual_posterior(&fit, 0.3).unwrap(), PosteriorGaussian::PRIOR);
    }

    #[test]
    fn single_ordinal_value_is_likelihood_plus_prior() {
        let mut dq = QualDataset::new();
        dq.push_ordinal(0.4, OrdinalLabel::Hard).unwrap();
        let f = 0.7;
        let v = qual_log_posterior(&[f], &dq, KernelParams::default(), lp()).unwrap();
        let expect = ordinal_prob(f, OrdinalLabel::Hard, &lp()).ln() - 0.5 * f * f / (1.0 + 1e-8);
        assert!((v - expect).abs() < 1e-12);
    }

    #[test]
    fn log_posterior_rejects_wrong_dimension() {
        let mut dq = QualDataset::new();
        dq.push_ordinal(0.4, OrdinalLabel::Hard).unwrap();
        assert!(qual_log_posterior(&[0.0, 1.0], &dq, KernelParams::default(), lp()).is_err());
    }

    #[test]
    fn newton_terms_match_value() {
        let mut dq = QualDataset::new();
        dq.push_ordinal(0.1, OrdinalLabel::Hard).unwrap();
        dq.push_ordinal(0.9, OrdinalLabel::Easy).unwrap();
        dq.push_pairwise(0.1, 0.9, Preference::PreviousHarder).unwrap();
        let pr = QualProblem::from_dataset(&dq);
        let f = DVector::from_vec(vec![0.4, -0.8]);
        let (v, _, w) = pr.likelihood_terms(&f, &lp());
        assert!((v - pr.log_likelihood(&f, &lp())).abs() < 1e-12);
        assert!((w.clone() - w.transpose()).norm() < 1e-14);
    }

    #[test]
    fn labels_parse() {
        for l in OrdinalLabel::ALL {
            assert_eq!(l.to_string().parse::<OrdinalLabel>().unwrap(), l);
            assert_eq!(OrdinalLabel::from_index(l.index()), Some(l));
        }
        assert!("medium".parse::<OrdinalLabel>().is_err());
    }
}
