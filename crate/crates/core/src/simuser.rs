//! Parametric simulated participant: a noisy, delayed, skill-scaled LQR player
//! whose qualitative answers are drawn from the learner's own likelihoods.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_unit, Error, Result};
use crate::gp::{norm_cdf, ordinal_prob, LikelihoodParams, OrdinalLabel, Preference};
use crate::pareto::{ObjectivePoint, ParetoFront};
use crate::port::UserPort;
use crate::seeds::derive;
use crate::task::{best_of_three, BestOfThree, DisturbanceConfig, OuProcess, TaskEnv, TaskState};

/// True latent difficulty `clip(offset + slope * a, -clip, clip)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatentCurve {
    pub offset: f64,
    pub slope: f64,
    pub clip: f64,
}

impl Default for LatentCurve {
    fn default() -> Self {
        Self { offset: 2.5, slope: -5.0, clip: 3.0 }
    }
}

impl LatentCurve {
    pub fn eval(&self, assist: f64) -> f64 {
        (self.offset + self.slope * assist).clamp(-self.clip, self.clip)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimUserProfile {
    pub skill: f64,
    /// Stationary std of the control noise (N).
    pub noise_std: f64,
    /// Correlation time of the control noise (s).
    pub noise_tau: f64,
    /// Reaction delay in integration steps.
    pub delay_steps: usize,
    pub latent: LatentCurve,
    pub likelihood: LikelihoodParams,
    pub success_threshold: f64,
    pub seed: u64,
    /// Skill change per played trial; zero keeps the user stationary.
    pub skill_drift: f64,
}

impl Default for SimUserProfile {
    fn default() -> Self {
        Self {
            skill: 0.3,
            noise_std: 5.0,
            noise_tau: 1.0,
            delay_steps: 3,
            latent: LatentCurve::default(),
            likelihood: LikelihoodParams::default(),
            success_threshold: 0.99,
            seed: 0,
            skill_drift: 0.0,
        }
    }
}

impl SimUserProfile {
    pub fn validate(&self) -> Result<()> {
        ensure_unit("skill", self.skill)?;
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::Config("noise_std must be >= 0".into()));
        }
        if !(self.noise_tau.is_finite() && self.noise_tau > 0.0) {
            return Err(Error::Config("noise_tau must be positive".into()));
        }
        if !self.latent.offset.is_finite() || !self.latent.slope.is_finite() || !(self.latent.clip > 0.0) {
            return Err(Error::Config("latent curve must be finite with positive clip".into()));
        }
        if !self.skill_drift.is_finite() {
            return Err(Error::Config("skill_drift must be finite".into()));
        }
        self.likelihood.validate()
    }

    pub fn g(&self, assist: f64) -> f64 {
        self.latent.eval(assist)
    }

    fn noise_config(&self) -> DisturbanceConfig {
        DisturbanceConfig {
            rate: 1.0 / self.noise_tau,
            intensity: self.noise_std * (2.0 / self.noise_tau).sqrt(),
            clamp: f64::MAX,
        }
    }
}

struct SimPolicy<'a> {
    skill: f64,
    env: &'a TaskEnv,
    noise: OuProcess,
    delay: usize,
    buffer: VecDeque<TaskState>,
}

impl crate::task::Policy for SimPolicy<'_> {
    fn force(&mut self, state: &TaskState) -> std::result::Result<f64, String> {
        self.buffer.push_back(*state);
        let seen = if self.buffer.len() > self.delay {
            self.buffer.pop_front().expect("non-empty")
        } else {
            *self.buffer.front().expect("non-empty")
        };
        Ok(self.skill * self.env.gains.control(&seen) + self.noise.sample())
    }
}

fn play_with_skill(profile: &SimUserProfile, skill: f64, assist: f64, seeds: [u64; 3], env: &TaskEnv) -> Result<BestOfThree> {
    let noise_cfg = profile.noise_config();
    best_of_three(
        |_, seed| SimPolicy {
            skill,
            env,
            noise: OuProcess::new(&noise_cfg, env.plant.dt, derive(seed, &[profile.seed])),
            delay: profile.delay_steps,
            buffer: VecDeque::with_capacity(profile.delay_steps + 1),
        },
        assist,
        seeds,
        env.gains,
        &env.plant,
        &env.disturbance,
    )
}

/// Best of three attempts by the profile's policy.
pub fn sim_play(profile: &SimUserProfile, assist: f64, seeds: [u64; 3], env: &TaskEnv) -> Result<BestOfThree> {
    ensure_unit("assistance", assist)?;
    play_with_skill(profile, profile.skill, assist, seeds, env)
}

pub fn sim_ordinal<R: Rng + ?Sized>(profile: &SimUserProfile, assist: f64, rng: &mut R) -> OrdinalLabel {
    let f = profile.g(assist);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for label in [OrdinalLabel::Easy, OrdinalLabel::Moderate] {
        acc += ordinal_prob(f, label, &profile.likelihood);
        if u < acc {
            return label;
        }
    }
    OrdinalLabel::Hard
}

/// Probability that the current trial is reported harder.
pub fn current_harder_prob(profile: &SimUserProfile, assist_prev: f64, assist_curr: f64) -> f64 {
    norm_cdf((profile.g(assist_curr) - profile.g(assist_prev)) / profile.likelihood.c_p)
}

pub fn sim_pairwise<R: Rng + ?Sized>(profile: &SimUserProfile, assist_prev: f64, assist_curr: f64, rng: &mut R) -> Preference {
    let p = current_harder_prob(profile, assist_prev, assist_curr);
    if rng.random::<f64>() < p {
        Preference::CurrentHarder
    } else {
        Preference::PreviousHarder
    }
}

/// Expected best-of-three score at each grid point (mean over `n_seeds`), with
/// the exact latent as challenge.
pub fn true_front(profile: &SimUserProfile, grid: &[f64], n_seeds: usize, master_seed: u64, env: &TaskEnv) -> Result<ParetoFront> {
    if n_seeds == 0 {
        return Err(Error::InvalidArgument("true_front needs at least one seed".into()));
    }
    let points = grid
        .par_iter()
        .enumerate()
        .map(|(i, &a)| {
            let mut total = 0.0;
            for k in 0..n_seeds as u64 {
                let base = derive(master_seed, &[i as u64, k]);
                let seeds = [derive(base, &[0]), derive(base, &[1]), derive(base, &[2])];
                total += sim_play(profile, a, seeds, env)?.best().score;
            }
            Ok(ObjectivePoint { assistance: a, expected_score: total / n_seeds as f64, expected_challenge: profile.g(a) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ParetoFront::from_points(points, profile.likelihood.thresholds))
}

/// A simulated participant behind the [`UserPort`] interface.
#[derive(Debug, Clone)]
pub struct SimUser {
    pub profile: SimUserProfile,
    pub env: TaskEnv,
    trials_played: usize,
}

impl SimUser {
    pub fn new(profile: SimUserProfile, env: TaskEnv) -> Result<Self> {
        profile.validate()?;
        Ok(Self { profile, env, trials_played: 0 })
    }

    pub fn current_skill(&self) -> f64 {
        (self.profile.skill + self.profile.skill_drift * self.trials_played as f64).clamp(0.0, 1.0)
    }

    fn feedback_rng(&self, seed: u64, stream: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(derive(seed, &[self.profile.seed, stream]))
    }
}

impl UserPort for SimUser {
    fn play(&mut self, assist: f64, seeds: [u64; 3]) -> Result<BestOfThree> {
        ensure_unit("assistance", assist)?;
        let out = play_with_skill(&self.profile, self.current_skill(), assist, seeds, &self.env)?;
        self.trials_played += 1;
        Ok(out)
    }

    fn rate(&mut self, assist: f64, seed: u64) -> Result<OrdinalLabel> {
        Ok(sim_ordinal(&self.profile, assist, &mut self.feedback_rng(seed, 0)))
    }

    fn compare(&mut self, prev: f64, curr: f64, seed: u64) -> Result<Preference> {
        Ok(sim_pairwise(&self.profile, prev, curr, &mut self.feedback_rng(seed, 1)))
    }
}
