//! Request and response bodies of the HTTP API.

use serde::{Deserialize, Serialize};

use crate::moo::{CharacterizationConfig, ModelSnapshot};
use crate::pareto::ParetoFront;
use crate::protocol::{FailureNote, Group, ProspectiveSummary, SessionConfig};
use crate::record::{Phase, TrialRecord};
use crate::simuser::SimUserProfile;
use crate::task::{DisturbanceConfig, PlantParams};
use crate::wire::ModelUpdate;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlayerKind {
    #[default]
    Simulated,
    Human,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CreateSession {
    pub config: SessionConfig,
    pub player: PlayerKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub phase: Phase,
    pub iteration: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStatus {
    pub id: String,
    pub participant_id: String,
    pub group: Group,
    pub player: PlayerKind,
    pub completed_phases: Vec<Phase>,
    pub next_phase: Option<Phase>,
    pub running: Option<Phase>,
    pub progress: Option<Progress>,
    pub finished: bool,
    pub failure: Option<FailureNote>,
    pub records: usize,
    pub prospective: Option<ProspectiveSummary>,
    pub log_path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvanceResponse {
    pub phase: Phase,
    /// False when the phase was started in the background.
    pub done: bool,
    pub status: SessionStatus,
}

/// Latest surrogate curves: live during a HiL phase, final afterwards.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelsView {
    pub live: Option<ModelUpdate>,
    pub pre: Option<ModelUpdate>,
    pub post: Option<ModelUpdate>,
    pub pre_front: Option<ParetoFront>,
    pub post_front: Option<ParetoFront>,
}

/// One HiL characterization against a simulated user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CharacterizeRequest {
    pub config: CharacterizationConfig,
    pub profile: SimUserProfile,
    pub plant: PlantParams,
    pub disturbance: DisturbanceConfig,
    pub seed: u64,
}

impl Default for CharacterizeRequest {
    fn default() -> Self {
        Self {
            config: CharacterizationConfig::default(),
            profile: SimUserProfile::default(),
            plant: PlantParams::default(),
            disturbance: DisturbanceConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterizeResponse {
    pub records: Vec<TrialRecord>,
    pub snapshots: Vec<ModelSnapshot>,
    pub models: ModelUpdate,
    pub front: ParetoFront,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub error: String,
    pub kind: String,
}
