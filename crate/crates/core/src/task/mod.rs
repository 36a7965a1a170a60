//! Cart-pole balancing game with a virtual-spring assistant.
//!
//! State convention: `(x, x_dot, theta, theta_dot)` with `theta = 0` upright.
//! The pole is a uniform rod of half-length `l`.

mod disturbance;
mod dynamics;
mod lqr;
mod trial;

pub use disturbance::{DisturbanceConfig, OuProcess};
pub use dynamics::{assistance_force, derivative, mechanical_energy, step, step_with_force};
pub use lqr::{closed_loop_matrix, linearize, lqr_gains, solve_care, Gains};
pub use trial::{
    best_of_three, run_trial, BestOfThree, FailureReason, Policy, TraceRow, TrialResult,
    TrialRunner, ZeroPolicy,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantParams {
    pub cart_mass: f64,
    pub pole_mass: f64,
    pub pole_half_length: f64,
    pub gravity: f64,
    pub cart_damping: f64,
    pub dt: f64,
    /// Monsters sit at `±workspace_half_width`.
    pub workspace_half_width: f64,
    pub max_force: f64,
    /// Spring stiffness at full assistance (N/m).
    pub k_max: f64,
    pub q_diag: [f64; 4],
    pub r: f64,
    pub trial_duration: f64,
    pub fail_angle_deg: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            cart_mass: 1.0,
            pole_mass: 0.2,
            pole_half_length: 0.5,
            gravity: 9.81,
            cart_damping: 0.5,
            dt: 0.01,
            workspace_half_width: 1.0,
            max_force: 15.0,
            k_max: 200.0,
            q_diag: [10.0, 1.0, 100.0, 1.0],
            r: 0.1,
            trial_duration: 25.0,
            fail_angle_deg: 50.0,
        }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("cart_mass", self.cart_mass),
            ("pole_mass", self.pole_mass),
            ("pole_half_length", self.pole_half_length),
            ("gravity", self.gravity),
            ("dt", self.dt),
            ("workspace_half_width", self.workspace_half_width),
            ("max_force", self.max_force),
            ("k_max", self.k_max),
            ("r", self.r),
            ("trial_duration", self.trial_duration),
            ("fail_angle_deg", self.fail_angle_deg),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("plant parameter {name} must be positive, got {v}")));
            }
        }
        if !(self.cart_damping.is_finite() && self.cart_damping >= 0.0) {
            return Err(Error::Config("cart_damping must be >= 0".into()));
        }
        if self.q_diag.iter().any(|q| !(q.is_finite() && *q >= 0.0)) {
            return Err(Error::Config("LQR Q diagonal must be >= 0".into()));
        }
        Ok(())
    }

    pub fn trial_steps(&self) -> usize {
        (self.trial_duration / self.dt).round() as usize
    }

    pub fn fail_angle(&self) -> f64 {
        self.fail_angle_deg.to_radians()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TaskState {
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
    pub t: f64,
}

impl TaskState {
    pub fn upright() -> Self {
        Self::default()
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x, self.x_dot, self.theta, self.theta_dot]
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite()) && self.t.is_finite()
    }
}

/// Plant, disturbance and the derived assistance gains, bundled for players.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskEnv {
    pub plant: PlantParams,
    pub disturbance: DisturbanceConfig,
    pub gains: Gains,
}

impl TaskEnv {
    pub fn new(plant: PlantParams, disturbance: DisturbanceConfig) -> Result<Self> {
        plant.validate()?;
        disturbance.validate()?;
        let gains = lqr_gains(&plant)?;
        Ok(Self { plant, disturbance, gains })
    }
}

impl Default for TaskEnv {
    fn default() -> Self {
        Self::new(PlantParams::default(), DisturbanceConfig::default()).expect("default task parameters are valid")
    }
}
