//! A participant connected over the WebSocket. Runs on a blocking thread:
//! physics is stepped here and streamed out, inputs and answers arrive on a
//! channel fed by the socket task.

use std::sync::mpsc::{Receiver, RecvTimeoutError, TryRecvError};
use std::time::{Duration, Instant};

use paretohil_core::gp::{OrdinalLabel, Preference};
use paretohil_core::port::UserPort;
use paretohil_core::task::{BestOfThree, TaskEnv, TrialResult, TrialRunner};
use paretohil_core::wire::{ClientMsg, ServerMsg};
use paretohil_core::{Error, Result};
use tokio::sync::broadcast;

/// Physics runs at `1/dt`; every `STREAM_EVERY`-th step is sent (50 Hz at dt = 0.01).
const STREAM_EVERY: usize = 2;

#[derive(Debug, Clone, Copy)]
pub struct Pacing {
    /// Wall seconds per simulated second; 0 runs as fast as possible.
    pub time_scale: f64,
    pub answer_timeout: Duration,
}

impl Default for Pacing {
    fn default() -> Self {
        Self { time_scale: 1.0, answer_timeout: Duration::from_secs(600) }
    }
}

pub struct HumanPort {
    env: TaskEnv,
    events: broadcast::Sender<ServerMsg>,
    inbox: Receiver<ClientMsg>,
    pacing: Pacing,
    force: f64,
}

impl HumanPort {
    pub fn new(env: TaskEnv, events: broadcast::Sender<ServerMsg>, inbox: Receiver<ClientMsg>, pacing: Pacing) -> Self {
        Self { env, events, inbox, pacing, force: 0.0 }
    }

    fn send(&self, msg: ServerMsg) {
        let _ = self.events.send(msg);
    }

    fn handle_during_trial(&mut self, msg: ClientMsg) {
        match msg {
            ClientMsg::Input { force } if force.is_finite() => {
                let m = self.env.plant.max_force;
                self.force = force.clamp(-m, m);
            }
            ClientMsg::Input { .. } => self.send(ServerMsg::Error { message: "force must be finite".into() }),
            other => self.send(ServerMsg::Error { message: format!("unexpected {other:?} during a trial") }),
        }
    }

    fn attempt(&mut self, index: usize, assist: f64, seed: u64) -> Result<TrialResult> {
        let p = &self.env.plant;
        let mut runner = TrialRunner::new(assist, seed, self.env.gains, p, &self.env.disturbance)?;
        let (dt, duration) = (p.dt, p.trial_duration);
        self.force = 0.0;
        self.send(ServerMsg::TrialStart { attempt_index: index });
        self.send(ServerMsg::state(runner.state(), duration));
        let start = Instant::now();
        let mut steps = 0usize;
        let reason = loop {
            loop {
                match self.inbox.try_recv() {
                    Ok(msg) => self.handle_during_trial(msg),
                    Err(TryRecvError::Empty) => break,
                    Err(TryRecvError::Disconnected) => return Err(Error::Port("participant disconnected".into())),
                }
            }
            let outcome = runner.tick(self.force)?;
            steps += 1;
            if steps % STREAM_EVERY == 0 || outcome.is_some() {
                self.send(ServerMsg::state(runner.state(), duration));
            }
            if let Some(r) = outcome {
                break r;
            }
            if self.pacing.time_scale > 0.0 {
                let due = Duration::from_secs_f64(steps as f64 * dt * self.pacing.time_scale);
                if let Some(wait) = due.checked_sub(start.elapsed()) {
                    std::thread::sleep(wait);
                }
            }
        };
        let result = runner.result(reason, None);
        self.send(ServerMsg::TrialEnd { attempt_index: index, score: result.score, reason: result.reason });
        Ok(result)
    }

    /// Waits for the first message `pick` accepts; stray inputs are dropped.
    fn await_answer<T>(&mut self, pick: impl Fn(ClientMsg) -> Option<T>) -> Result<T> {
        let deadline = Instant::now() + self.pacing.answer_timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            match self.inbox.recv_timeout(left) {
                Ok(ClientMsg::Input { .. }) => {}
                Ok(msg) => match pick(msg.clone()) {
                    Some(v) => return Ok(v),
                    None => self.send(ServerMsg::Error { message: format!("unexpected {msg:?}") }),
                },
                Err(RecvTimeoutError::Timeout) => return Err(Error::Port("no answer before timeout".into())),
                Err(RecvTimeoutError::Disconnected) => return Err(Error::Port("participant disconnected".into())),
            }
        }
    }
}

impl UserPort for HumanPort {
    fn play(&mut self, assist: f64, seeds: [u64; 3]) -> Result<BestOfThree> {
        let a = self.attempt(0, assist, seeds[0])?;
        let b = self.attempt(1, assist, seeds[1])?;
        let c = self.attempt(2, assist, seeds[2])?;
        Ok(BestOfThree::from_attempts([a, b, c]))
    }

    fn rate(&mut self, _assist: f64, _seed: u64) -> Result<OrdinalLabel> {
        self.send(ServerMsg::QueryOrdinal {});
        self.await_answer(|m| match m {
            ClientMsg::AnswerOrdinal { label } => Some(label),
            _ => None,
        })
    }

    fn compare(&mut self, _prev: f64, _curr: f64, _seed: u64) -> Result<Preference> {
        self.send(ServerMsg::QueryPairwise { prev_assist_blinded: false });
        self.await_answer(|m| match m {
            ClientMsg::AnswerPairwise { choice } => Some(choice),
            _ => None,
        })
    }

    /// One unrecorded practice attempt without assistance.
    fn warmup(&mut self) -> Result<()> {
        self.attempt(0, 0.0, 0).map(|_| ())
    }
}
