//! Per-trial records shared by characterization, training and evaluation phases.

use serde::{Deserialize, Serialize};

use crate::gp::{OrdinalLabel, Preference};
use crate::task::{BestOfThree, FailureReason};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Warmup,
    PreEval,
    PreHil,
    Training,
    PostEval,
    PostHil,
}

impl Phase {
    pub const ORDER: [Phase; 6] =
        [Phase::Warmup, Phase::PreEval, Phase::PreHil, Phase::Training, Phase::PostEval, Phase::PostHil];

    pub fn index(self) -> usize {
        Self::ORDER.iter().position(|&p| p == self).expect("phase in ORDER")
    }

    pub fn is_hil(self) -> bool {
        matches!(self, Phase::PreHil | Phase::PostHil)
    }

    pub fn is_eval(self) -> bool {
        matches!(self, Phase::PreEval | Phase::PostEval)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Warmup => "warmup",
            Phase::PreEval => "pre_eval",
            Phase::PreHil => "pre_hil",
            Phase::Training => "training",
            Phase::PostEval => "post_eval",
            Phase::PostHil => "post_hil",
        }
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSeeds {
    pub attempts: [u64; 3],
    /// Drives the simulated user's qualitative answers.
    pub feedback: u64,
}

impl TrialSeeds {
    pub fn derive(base: u64, iteration: u64) -> Self {
        use crate::seeds::derive;
        Self {
            attempts: [derive(base, &[iteration, 0]), derive(base, &[iteration, 1]), derive(base, &[iteration, 2])],
            feedback: derive(base, &[iteration, 3]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WallClock {
    pub started_ms: u64,
    pub finished_ms: u64,
}

impl WallClock {
    pub fn now_ms() -> u64 {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub phase: Phase,
    /// One-based index within the phase.
    pub iteration: usize,
    pub assistance: f64,
    pub attempts: [f64; 3],
    pub reasons: [FailureReason; 3],
    pub best: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ordinal: Option<OrdinalLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairwise: Option<Preference>,
    pub seeds: TrialSeeds,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock: Option<WallClock>,
}

impl TrialRecord {
    pub fn from_play(phase: Phase, iteration: usize, assistance: f64, play: &BestOfThree, seeds: TrialSeeds) -> Self {
        Self {
            phase,
            iteration,
            assistance,
            attempts: play.scores(),
            reasons: [play.attempts[0].reason, play.attempts[1].reason, play.attempts[2].reason],
            best: play.best().score,
            ordinal: None,
            pairwise: None,
            seeds,
            wall_clock: None,
        }
    }

    /// Equality ignoring wall-clock timestamps.
    pub fn replay_eq(&self, other: &Self) -> bool {
        let strip = |r: &Self| Self { wall_clock: None, ..r.clone() };
        strip(self) == strip(other)
    }

    /// Qualitative fields are present exactly when the phase and iteration call for them.
    pub fn feedback_consistent(&self) -> bool {
        if self.phase.is_hil() {
            self.ordinal.is_some() && (self.pairwise.is_some() == (self.iteration >= 2))
        } else {
            self.ordinal.is_none() && self.pairwise.is_none()
        }
    }
}
