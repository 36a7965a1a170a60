//! Two-up-one-down adaptive staircase used by the control group.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StaircaseConfig {
    pub start: f64,
    pub step: f64,
    /// Consecutive successes needed before assistance drops.
    pub successes_to_step_down: u32,
    /// A trial counts as a success when its best score reaches this value.
    pub success_threshold: f64,
}

impl Default for StaircaseConfig {
    fn default() -> Self {
        Self { start: 0.5, step: 0.1, successes_to_step_down: 2, success_threshold: 0.99 }
    }
}

impl StaircaseConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.start) || !(self.step > 0.0 && self.step <= 1.0) || self.successes_to_step_down == 0 {
            return Err(Error::Config(format!("invalid staircase config {self:?}")));
        }
        if !unit(self.success_threshold) {
            return Err(Error::Config("staircase success threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn initial(&self) -> StaircaseState {
        StaircaseState { level: self.start, consecutive_successes: 0 }
    }

    pub fn is_success(&self, best_score: f64) -> bool {
        best_score >= self.success_threshold
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StaircaseState {
    pub level: f64,
    pub consecutive_successes: u32,
}

impl Default for StaircaseState {
    fn default() -> Self {
        StaircaseConfig::default().initial()
    }
}

// Snap to the step lattice so repeated +/-0.1 does not accumulate rounding.
fn snap(level: f64, step: f64) -> f64 {
    let k = (level / step).round();
    if ((k * step) - level).abs() < 1e-9 {
        (k * step * 1e12).round() / 1e12
    } else {
        level
    }
}

pub fn staircase_update_with(cfg: &StaircaseConfig, st: StaircaseState, success: bool) -> StaircaseState {
    if !success {
        return StaircaseState { level: snap((st.level + cfg.step).min(1.0), cfg.step), consecutive_successes: 0 };
    }
    let count = st.consecutive_successes + 1;
    if count >= cfg.successes_to_step_down {
        StaircaseState { level: snap((st.level - cfg.step).max(0.0), cfg.step), consecutive_successes: 0 }
    } else {
        StaircaseState { level: st.level, consecutive_successes: count }
    }
}

/// Failure raises the level by one step; two consecutive successes lower it.
pub fn staircase_update(st: StaircaseState, success: bool) -> StaircaseState {
    staircase_update_with(&StaircaseConfig::default(), st, success)
}

/// Levels visited for an outcome sequence, starting with the initial level.
pub fn staircase_trace(cfg: &StaircaseConfig, outcomes: &[bool]) -> Vec<f64> {
    let mut st = cfg.initial();
    let mut levels = vec![st.level];
    for &ok in outcomes {
        st = staircase_update_with(cfg, st, ok);
        levels.push(st.level);
    }
    levels
}
