//! The six-phase experiment: warm-up, pre-evaluation, pre-training HiL
//! characterization, training, post-evaluation and post-training HiL.

mod log;

pub use log::{
    from_jsonl, load, persist, to_jsonl, FailureNote, LogEntry, LogHeader, LogWriter, PhaseSnapshot, SessionLog,
    LOG_FORMAT, LOG_VERSION,
};

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{staircase_update_with, StaircaseConfig};
use crate::error::{Error, Result};
use crate::moo::{run_characterization_with, CharEvent, CharacterizationConfig, FittedModels};
use crate::pareto::{select_designs_or_nearest, ParetoFront, SelectionWindow};
use crate::port::{ProgressEvent, UserPort};
use crate::record::{Phase, TrialRecord, TrialSeeds, WallClock};
use crate::seeds::derive;
use crate::simuser::{SimUser, SimUserProfile};
use crate::task::{DisturbanceConfig, PlantParams, TaskEnv};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Pareto,
    Staircase,
}

impl std::fmt::Display for Group {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Group::Pareto => "pareto",
            Group::Staircase => "staircase",
        })
    }
}

impl std::str::FromStr for Group {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pareto" => Ok(Group::Pareto),
            "staircase" => Ok(Group::Staircase),
            other => Err(Error::InvalidArgument(format!("unknown group {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub participant_id: String,
    pub group: Group,
    pub characterization: CharacterizationConfig,
    pub training_trials: usize,
    pub eval_trials: usize,
    pub window: SelectionWindow,
    pub staircase: StaircaseConfig,
    pub plant: PlantParams,
    pub disturbance: DisturbanceConfig,
    /// Profile used when the session is played by the simulated user.
    pub simuser: SimUserProfile,
    pub master_seed: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            participant_id: "sim-0".into(),
            group: Group::Pareto,
            characterization: CharacterizationConfig::default(),
            training_trials: 20,
            eval_trials: 3,
            window: SelectionWindow::default(),
            staircase: StaircaseConfig::default(),
            plant: PlantParams::default(),
            disturbance: DisturbanceConfig::default(),
            simuser: SimUserProfile::default(),
            master_seed: 0,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        self.characterization.validate()?;
        self.window.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.staircase.validate()?;
        self.plant.validate()?;
        self.disturbance.validate()?;
        self.simuser.validate()?;
        if self.training_trials == 0 || self.eval_trials == 0 {
            return Err(Error::Config("training and evaluation need at least one trial".into()));
        }
        Ok(())
    }

    pub fn env(&self) -> Result<TaskEnv> {
        TaskEnv::new(self.plant.clone(), self.disturbance.clone())
    }

    pub fn phase_seed(&self, phase: Phase) -> u64 {
        derive(self.master_seed, &[phase.index() as u64])
    }

    pub fn sim_user(&self) -> Result<SimUser> {
        SimUser::new(self.simuser.clone(), self.env()?)
    }
}

/// Assistance levels the Pareto protocol selects from a characterization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProspectiveSummary {
    pub designs: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

pub fn prospective_assistance(front: &ParetoFront, window: &SelectionWindow) -> Result<ProspectiveSummary> {
    let designs = select_designs_or_nearest(front, window)?;
    let n = designs.len() as f64;
    let mean = designs.iter().sum::<f64>() / n;
    let std = (designs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok(ProspectiveSummary { designs, mean, std })
}

fn play_record<P: UserPort + ?Sized>(port: &mut P, phase: Phase, iteration: usize, total: usize, assist: f64, seeds: TrialSeeds) -> Result<TrialRecord> {
    port.notify(&ProgressEvent::Phase { phase, iteration, total });
    let started_ms = WallClock::now_ms();
    let play = port.play(assist, seeds.attempts)?;
    let mut rec = TrialRecord::from_play(phase, iteration, assist, &play, seeds);
    rec.wall_clock = Some(WallClock { started_ms, finished_ms: WallClock::now_ms() });
    Ok(rec)
}

/// Assistance order for Pareto training: shuffled passes over `designs`, with a
/// fresh shuffle each time the set is exhausted.
pub fn pareto_schedule(designs: &[f64], n_trials: usize, seed: u64) -> Result<Vec<f64>> {
    if designs.is_empty() {
        return Err(Error::InvalidArgument("Pareto training needs at least one design".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_trials);
    let mut pool = Vec::new();
    while out.len() < n_trials {
        if pool.is_empty() {
            pool = designs.to_vec();
            pool.shuffle(&mut rng);
        }
        out.push(pool.pop().expect("refilled"));
    }
    Ok(out)
}

/// Plays Pareto training; `sink` sees each record as soon as it is complete.
pub fn training_pareto<P: UserPort + ?Sized>(
    designs: &[f64],
    n_trials: usize,
    port: &mut P,
    phase_seed: u64,
    sink: &mut dyn FnMut(&TrialRecord) -> Result<()>,
) -> Result<Vec<TrialRecord>> {
    let schedule = pareto_schedule(designs, n_trials, derive(phase_seed, &[u64::MAX]))?;
    let mut out = Vec::with_capacity(n_trials);
    for (i, &a) in schedule.iter().enumerate() {
        let rec = play_record(port, Phase::Training, i + 1, n_trials, a, TrialSeeds::derive(phase_seed, i as u64 + 1))?;
        sink(&rec)?;
        out.push(rec);
    }
    Ok(out)
}

pub fn training_staircase<P: UserPort + ?Sized>(
    n_trials: usize,
    port: &mut P,
    cfg: &StaircaseConfig,
    phase_seed: u64,
    sink: &mut dyn FnMut(&TrialRecord) -> Result<()>,
) -> Result<Vec<TrialRecord>> {
    cfg.validate()?;
    let mut st = cfg.initial();
    let mut out = Vec::with_capacity(n_trials);
    for i in 1..=n_trials {
        let rec = play_record(port, Phase::Training, i, n_trials, st.level, TrialSeeds::derive(phase_seed, i as u64))?;
        st = staircase_update_with(cfg, st, cfg.is_success(rec.best));
        sink(&rec)?;
        out.push(rec);
    }
    Ok(out)
}

/// Drives one participant through the phases, one call per phase.
#[derive(Debug)]
pub struct ProtocolRunner {
    log: SessionLog,
    next: usize,
    writer: Option<LogWriter>,
    pre_models: Option<FittedModels>,
    post_models: Option<FittedModels>,
}

impl ProtocolRunner {
    pub fn new(config: SessionConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { log: SessionLog::new(config), next: 0, writer: None, pre_models: None, post_models: None })
    }

    /// Like [`ProtocolRunner::new`], streaming every entry to `path`.
    pub fn with_log_file(config: SessionConfig, path: impl AsRef<Path>) -> Result<Self> {
        let mut r = Self::new(config)?;
        r.writer = Some(LogWriter::create(path, &r.log.header())?);
        Ok(r)
    }

    pub fn config(&self) -> &SessionConfig {
        &self.log.config
    }

    pub fn log(&self) -> &SessionLog {
        &self.log
    }

    pub fn into_log(self) -> SessionLog {
        self.log
    }

    pub fn next_phase(&self) -> Option<Phase> {
        if self.log.failure.is_some() {
            None
        } else {
            Phase::ORDER.get(self.next).copied()
        }
    }

    pub fn is_finished(&self) -> bool {
        self.next_phase().is_none()
    }

    pub fn pre_models(&self) -> Option<&FittedModels> {
        self.pre_models.as_ref()
    }

    pub fn post_models(&self) -> Option<&FittedModels> {
        self.post_models.as_ref()
    }

    fn emit(log: &mut SessionLog, writer: &mut Option<LogWriter>, entry: LogEntry) -> Result<()> {
        if let Some(w) = writer {
            w.append(&entry)?;
        }
        log.apply(entry);
        Ok(())
    }

    /// Runs the next phase. On failure the partial phase is kept, a failure
    /// entry is logged and no further phases run.
    pub fn run_next_phase<P: UserPort + ?Sized>(&mut self, port: &mut P) -> Result<Phase> {
        let phase = self
            .next_phase()
            .ok_or_else(|| Error::InvalidArgument("protocol already finished".into()))?;
        match self.run_phase(phase, port) {
            Ok(()) => {
                Self::emit(&mut self.log, &mut self.writer, LogEntry::PhaseComplete { phase })?;
                self.next += 1;
                Ok(phase)
            }
            Err(e) => {
                let message = e.to_string();
                Self::emit(&mut self.log, &mut self.writer, LogEntry::Failure { phase, message })?;
                Err(e)
            }
        }
    }

    fn run_phase<P: UserPort + ?Sized>(&mut self, phase: Phase, port: &mut P) -> Result<()> {
        let cfg = self.log.config.clone();
        let seed = cfg.phase_seed(phase);
        match phase {
            Phase::Warmup => {
                port.notify(&ProgressEvent::Phase { phase, iteration: 0, total: 0 });
                port.warmup()
            }
            Phase::PreEval | Phase::PostEval => {
                for i in 1..=cfg.eval_trials {
                    let rec = play_record(port, phase, i, cfg.eval_trials, 0.0, TrialSeeds::derive(seed, i as u64))?;
                    Self::emit(&mut self.log, &mut self.writer, LogEntry::Trial(rec))?;
                }
                Ok(())
            }
            Phase::Training => match cfg.group {
                Group::Pareto => {
                    let designs = match &self.log.selected_designs {
                        Some(d) => d.clone(),
                        None => {
                            let front = self
                                .log
                                .pre_front
                                .as_ref()
                                .ok_or_else(|| Error::Log("training needs the pre-training front".into()))?;
                            let d = select_designs_or_nearest(front, &cfg.window)?;
                            Self::emit(&mut self.log, &mut self.writer, LogEntry::Designs { designs: d.clone() })?;
                            d
                        }
                    };
                    let log = &mut self.log;
                    let writer = &mut self.writer;
                    training_pareto(&designs, cfg.training_trials, port, seed, &mut |r| {
                        Self::emit(log, writer, LogEntry::Trial(r.clone()))
                    })
                    .map(|_| ())
                }
                Group::Staircase => {
                    let log = &mut self.log;
                    let writer = &mut self.writer;
                    training_staircase(cfg.training_trials, port, &cfg.staircase, seed, &mut |r| {
                        Self::emit(log, writer, LogEntry::Trial(r.clone()))
                    })
                    .map(|_| ())
                }
            },
            Phase::PreHil | Phase::PostHil => {
                let mut emit_err = None;
                let log = &mut self.log;
                let writer = &mut self.writer;
                let outcome = run_characterization_with(port, &cfg.characterization, phase, seed, &mut |ev| {
                    let entry = match ev {
                        CharEvent::Trial(r) => LogEntry::Trial(r.clone()),
                        CharEvent::Snapshot(s) => LogEntry::Snapshot { phase, snapshot: s.clone() },
                    };
                    if let Err(e) = Self::emit(log, writer, entry) {
                        emit_err.get_or_insert(e);
                    }
                });
                if let Some(e) = emit_err {
                    return Err(e);
                }
                let outcome = outcome.map_err(|a| a.error)?;
                Self::emit(&mut self.log, &mut self.writer, LogEntry::Front { phase, front: outcome.front.clone() })?;
                if phase == Phase::PreHil {
                    let summary = prospective_assistance(&outcome.front, &cfg.window)?;
                    Self::emit(&mut self.log, &mut self.writer, LogEntry::Prospective(summary))?;
                    self.pre_models = Some(outcome.models);
                } else {
                    self.post_models = Some(outcome.models);
                }
                Ok(())
            }
        }
    }

    /// Runs every remaining phase.
    pub fn run_to_end<P: UserPort + ?Sized>(&mut self, port: &mut P) -> Result<()> {
        while !self.is_finished() {
            self.run_next_phase(port)?;
        }
        Ok(())
    }
}

/// All six phases against `port`; a failure returns the partial log alongside the error.
pub fn run_protocol<P: UserPort + ?Sized>(port: &mut P, cfg: SessionConfig) -> std::result::Result<SessionLog, (SessionLog, Error)> {
    let mut runner = match ProtocolRunner::new(cfg.clone()) {
        Ok(r) => r,
        Err(e) => return Err((SessionLog::new(cfg), e)),
    };
    match runner.run_to_end(port) {
        Ok(()) => Ok(runner.into_log()),
        Err(e) => Err((runner.into_log(), e)),
    }
}

/// Runs the protocol against the simulated user described by the config.
pub fn run_simulated(cfg: SessionConfig) -> Result<SessionLog> {
    let mut user = cfg.sim_user()?;
    run_protocol(&mut user, cfg).map_err(|(_, e)| e)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub records_compared: usize,
    pub mismatches: Vec<String>,
}

impl ReplayReport {
    pub fn is_identical(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Simulated user that stops after the number of plays a partial log recorded.
struct ReplayPort {
    inner: SimUser,
    plays_left: Option<usize>,
}

impl UserPort for ReplayPort {
    fn play(&mut self, assist: f64, seeds: [u64; 3]) -> Result<crate::task::BestOfThree> {
        match &mut self.plays_left {
            Some(0) => return Err(Error::Port("end of recorded session".into())),
            Some(n) => *n -= 1,
            None => {}
        }
        self.inner.play(assist, seeds)
    }

    fn rate(&mut self, assist: f64, seed: u64) -> Result<crate::gp::OrdinalLabel> {
        self.inner.rate(assist, seed)
    }

    fn compare(&mut self, prev: f64, curr: f64, seed: u64) -> Result<crate::gp::Preference> {
        self.inner.compare(prev, curr, seed)
    }
}

/// Re-runs a log's config against the simulated user and compares everything
/// except wall-clock timestamps.
pub fn replay(log: &SessionLog) -> Result<ReplayReport> {
    let budget = log.failure.as_ref().map(|_| log.records.len());
    let mut user = ReplayPort { inner: log.config.sim_user()?, plays_left: budget };
    let mut runner = ProtocolRunner::new(log.config.clone())?;
    let phases = log.completed_phases.len() + usize::from(log.failure.is_some());
    for _ in 0..phases {
        if runner.is_finished() || runner.run_next_phase(&mut user).is_err() {
            break;
        }
    }
    let fresh = runner.into_log();
    let mut mismatches = Vec::new();
    if fresh.records.len() != log.records.len() {
        mismatches.push(format!("record count {} vs logged {}", fresh.records.len(), log.records.len()));
    }
    for (i, (a, b)) in fresh.records.iter().zip(&log.records).enumerate() {
        if !a.replay_eq(b) {
            mismatches.push(format!("record {i} ({} #{}) differs", b.phase, b.iteration));
        }
    }
    if fresh.snapshots != log.snapshots {
        mismatches.push("model snapshots differ".into());
    }
    if fresh.pre_front != log.pre_front || fresh.post_front != log.post_front {
        mismatches.push("Pareto fronts differ".into());
    }
    if fresh.selected_designs != log.selected_designs || fresh.prospective != log.prospective {
        mismatches.push("selected designs differ".into());
    }
    if fresh.completed_phases != log.completed_phases || fresh.failure.is_some() != log.failure.is_some() {
        mismatches.push("phase sequence differs".into());
    }
    Ok(ReplayReport { records_compared: log.records.len(), mismatches })
}
