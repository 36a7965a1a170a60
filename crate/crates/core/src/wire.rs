//! WebSocket message schema. Every message is a JSON object with a `type` tag.

use serde::{Deserialize, Serialize};

use crate::gp::{OrdinalLabel, Preference};
use crate::pareto::ObjectivePoint;
use crate::record::Phase;
use crate::task::{FailureReason, TaskState};

/// Surrogate curves on the candidate grid after one HiL iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelUpdate {
    pub grid: Vec<f64>,
    /// Raw score scale.
    pub score_mean: Vec<f64>,
    pub score_std: Vec<f64>,
    /// Latent challenge scale.
    pub chall_mean: Vec<f64>,
    pub chall_std: Vec<f64>,
    pub front_points: Vec<ObjectivePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMsg {
    State { t: f64, cart_x: f64, cart_v: f64, theta: f64, theta_v: f64, score_so_far: f64 },
    TrialStart { attempt_index: usize },
    TrialEnd { attempt_index: usize, score: f64, reason: FailureReason },
    QueryOrdinal {},
    QueryPairwise { prev_assist_blinded: bool },
    ModelUpdate(ModelUpdate),
    PhaseUpdate { phase: Phase, iteration: usize, total: usize },
    Error { message: String },
}

impl ServerMsg {
    pub fn state(s: &TaskState, trial_duration: f64) -> Self {
        ServerMsg::State {
            t: s.t,
            cart_x: s.x,
            cart_v: s.x_dot,
            theta: s.theta,
            theta_v: s.theta_dot,
            score_so_far: (s.t / trial_duration).min(1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMsg {
    Input { force: f64 },
    AnswerOrdinal { label: OrdinalLabel },
    AnswerPairwise { choice: Preference },
}
