use serde::{Deserialize, Serialize};

use super::{assistance_force, step_with_force, DisturbanceConfig, Gains, OuProcess, PlantParams, TaskState};
use crate::error::{ensure_unit, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    PoleFell,
    HitMonster,
    Survived,
    PolicyError,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
    pub user_force: f64,
    pub assist_force: f64,
    pub disturbance: f64,
}

impl TraceRow {
    pub const HEADER: &'static str = "t,x,x_dot,theta,theta_dot,user_force,assist_force,disturbance";

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.t, self.x, self.x_dot, self.theta, self.theta_dot, self.user_force, self.assist_force, self.disturbance
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub survival_time: f64,
    pub score: f64,
    pub reason: FailureReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceRow>>,
}

/// A player: maps the observed state to a cart force.
pub trait Policy {
    fn force(&mut self, state: &TaskState) -> std::result::Result<f64, String>;
}

impl<F> Policy for F
where
    F: FnMut(&TaskState) -> std::result::Result<f64, String>,
{
    fn force(&mut self, state: &TaskState) -> std::result::Result<f64, String> {
        self(state)
    }
}

/// Applies no force.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroPolicy;

impl Policy for ZeroPolicy {
    fn force(&mut self, _: &TaskState) -> std::result::Result<f64, String> {
        Ok(0.0)
    }
}

/// Step-by-step trial driver shared by the batch simulator and live sessions.
#[derive(Debug, Clone)]
pub struct TrialRunner {
    params: PlantParams,
    gains: Gains,
    assist: f64,
    state: TaskState,
    disturbance: OuProcess,
    steps: usize,
    max_steps: usize,
    outcome: Option<FailureReason>,
    last_row: Option<TraceRow>,
}

impl TrialRunner {
    pub fn new(assist: f64, seed: u64, gains: Gains, p: &PlantParams, dc: &DisturbanceConfig) -> Result<Self> {
        ensure_unit("assistance", assist)?;
        p.validate()?;
        dc.validate()?;
        Ok(Self {
            params: p.clone(),
            gains,
            assist,
            state: TaskState::upright(),
            disturbance: OuProcess::new(dc, p.dt, seed),
            steps: 0,
            max_steps: p.trial_steps(),
            outcome: None,
            last_row: None,
        })
    }

    pub fn state(&self) -> &TaskState {
        &self.state
    }

    pub fn outcome(&self) -> Option<FailureReason> {
        self.outcome
    }

    pub fn last_row(&self) -> Option<&TraceRow> {
        self.last_row.as_ref()
    }

    pub fn elapsed(&self) -> f64 {
        self.steps as f64 * self.params.dt
    }

    /// Advances one `dt`; returns the terminal reason once the trial ends.
    pub fn tick(&mut self, user_force: f64) -> Result<Option<FailureReason>> {
        if self.outcome.is_some() {
            return Ok(self.outcome);
        }
        let p = &self.params;
        let user = if user_force.is_finite() { user_force.clamp(-p.max_force, p.max_force) } else {
            return Err(Error::SimulationFault { time: self.state.t, reason: "non-finite user force".into() });
        };
        let assist = assistance_force(self.assist, &self.state, &self.gains, p);
        let dist = self.disturbance.sample();
        let mut next = step_with_force(&self.state, user + assist + dist, p)?;
        self.steps += 1;
        next.t = self.elapsed();
        self.state = next;
        self.last_row = Some(TraceRow {
            t: next.t,
            x: next.x,
            x_dot: next.x_dot,
            theta: next.theta,
            theta_dot: next.theta_dot,
            user_force: user,
            assist_force: assist,
            disturbance: dist,
        });
        self.outcome = if next.theta.abs() > p.fail_angle() {
            Some(FailureReason::PoleFell)
        } else if next.x.abs() >= p.workspace_half_width {
            Some(FailureReason::HitMonster)
        } else if self.steps >= self.max_steps {
            Some(FailureReason::Survived)
        } else {
            None
        };
        Ok(self.outcome)
    }

    pub fn result(&self, reason: FailureReason, trace: Option<Vec<TraceRow>>) -> TrialResult {
        let survival_time = self.elapsed().min(self.params.trial_duration);
        let score = if reason == FailureReason::Survived { 1.0 } else { (survival_time / self.params.trial_duration).min(1.0) };
        TrialResult { survival_time, score, reason, trace }
    }
}

/// Plays one trial to completion (failure or full duration).
pub fn run_trial<P: Policy + ?Sized>(
    policy: &mut P,
    assist: f64,
    seed: u64,
    gains: Gains,
    p: &PlantParams,
    dc: &DisturbanceConfig,
    record_trace: bool,
) -> Result<TrialResult> {
    let mut runner = TrialRunner::new(assist, seed, gains, p, dc)?;
    let mut trace = record_trace.then(Vec::new);
    loop {
        let force = match policy.force(runner.state()) {
            Ok(f) => f,
            Err(msg) => {
                log::warn!("policy failed at t={:.2}s: {msg}", runner.elapsed());
                return Ok(runner.result(FailureReason::PolicyError, trace));
            }
        };
        let outcome = runner.tick(force)?;
        if let (Some(tr), Some(row)) = (trace.as_mut(), runner.last_row()) {
            tr.push(*row);
        }
        if let Some(reason) = outcome {
            return Ok(runner.result(reason, trace));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestOfThree {
    pub attempts: [TrialResult; 3],
    pub best_index: usize,
}

impl BestOfThree {
    pub fn from_attempts(attempts: [TrialResult; 3]) -> Self {
        let mut best_index = 0;
        for i in 1..3 {
            if attempts[i].score > attempts[best_index].score {
                best_index = i;
            }
        }
        Self { attempts, best_index }
    }

    pub fn best(&self) -> &TrialResult {
        &self.attempts[self.best_index]
    }

    pub fn scores(&self) -> [f64; 3] {
        [self.attempts[0].score, self.attempts[1].score, self.attempts[2].score]
    }
}

/// Three attempts at one assistance level; the first maximal score wins.
pub fn best_of_three<P, F>(
    mut make_policy: F,
    assist: f64,
    seeds: [u64; 3],
    gains: Gains,
    p: &PlantParams,
    dc: &DisturbanceConfig,
) -> Result<BestOfThree>
where
    P: Policy,
    F: FnMut(usize, u64) -> P,
{
    let mut play = |i: usize| -> Result<TrialResult> {
        let mut policy = make_policy(i, seeds[i]);
        run_trial(&mut policy, assist, seeds[i], gains, p, dc, false)
    };
    let attempts = [play(0)?, play(1)?, play(2)?];
    Ok(BestOfThree::from_attempts(attempts))
}
