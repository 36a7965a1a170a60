use std::path::PathBuf;
use std::sync::atomic::AtomicBool;
use std::sync::{mpsc, Arc, Mutex, RwLock};

use paretohil_core::api::{ModelsView, PlayerKind, Progress, SessionStatus};
use paretohil_core::gp::{OrdinalLabel, Preference};
use paretohil_core::port::{ProgressEvent, UserPort};
use paretohil_core::protocol::{FailureNote, ProtocolRunner, SessionConfig, SessionLog};
use paretohil_core::record::Phase;
use paretohil_core::task::BestOfThree;
use paretohil_core::wire::{ClientMsg, ServerMsg};
use paretohil_core::{Error, Result};
use tokio::sync::{broadcast, OwnedMutexGuard};

use crate::human::{HumanPort, Pacing};

pub type BoxPort = Box<dyn UserPort + Send>;

/// What a phase needs exclusively. Held behind an async mutex so that
/// commands for one session run one at a time, in arrival order.
pub struct Executor {
    runner: Option<ProtocolRunner>,
    port: Option<BoxPort>,
}

/// Readable while a phase runs.
#[derive(Debug)]
pub struct View {
    pub log: SessionLog,
    pub running: Option<Phase>,
    pub progress: Option<Progress>,
    pub models: ModelsView,
    pub lost: bool,
}

pub struct Session {
    pub id: String,
    pub player: PlayerKind,
    pub exec: Arc<tokio::sync::Mutex<Executor>>,
    pub view: Arc<RwLock<View>>,
    pub events: broadcast::Sender<ServerMsg>,
    /// Query awaiting an answer, replayed to a socket that connects late.
    pub pending: Arc<Mutex<Option<ServerMsg>>>,
    pub inbox: Option<Mutex<mpsc::Sender<ClientMsg>>>,
    pub socket_open: AtomicBool,
    pub log_path: Option<PathBuf>,
}

/// Tracks the last query sent so a reconnecting client can be re-asked.
struct PendingPort {
    inner: HumanPort,
    pending: Arc<Mutex<Option<ServerMsg>>>,
}

impl UserPort for PendingPort {
    fn play(&mut self, assist: f64, seeds: [u64; 3]) -> Result<BestOfThree> {
        self.inner.play(assist, seeds)
    }

    fn rate(&mut self, assist: f64, seed: u64) -> Result<OrdinalLabel> {
        *self.pending.lock().expect("pending lock") = Some(ServerMsg::QueryOrdinal {});
        let r = self.inner.rate(assist, seed);
        *self.pending.lock().expect("pending lock") = None;
        r
    }

    fn compare(&mut self, prev: f64, curr: f64, seed: u64) -> Result<Preference> {
        *self.pending.lock().expect("pending lock") = Some(ServerMsg::QueryPairwise { prev_assist_blinded: false });
        let r = self.inner.compare(prev, curr, seed);
        *self.pending.lock().expect("pending lock") = None;
        r
    }

    fn warmup(&mut self) -> Result<()> {
        self.inner.warmup()
    }
}

/// Forwards progress notifications to the socket and the session view.
struct Relay<'a> {
    inner: &'a mut dyn UserPort,
    events: &'a broadcast::Sender<ServerMsg>,
    view: &'a RwLock<View>,
}

impl UserPort for Relay<'_> {
    fn play(&mut self, assist: f64, seeds: [u64; 3]) -> Result<BestOfThree> {
        self.inner.play(assist, seeds)
    }

    fn rate(&mut self, assist: f64, seed: u64) -> Result<OrdinalLabel> {
        self.inner.rate(assist, seed)
    }

    fn compare(&mut self, prev: f64, curr: f64, seed: u64) -> Result<Preference> {
        self.inner.compare(prev, curr, seed)
    }

    fn warmup(&mut self) -> Result<()> {
        self.inner.warmup()
    }

    fn notify(&mut self, event: &ProgressEvent) {
        let msg = match event {
            ProgressEvent::Phase { phase, iteration, total } => {
                self.view.write().expect("view lock").progress =
                    Some(Progress { phase: *phase, iteration: *iteration, total: *total });
                ServerMsg::PhaseUpdate { phase: *phase, iteration: *iteration, total: *total }
            }
            ProgressEvent::Models(update) => {
                self.view.write().expect("view lock").models.live = Some(update.clone());
                ServerMsg::ModelUpdate(update.clone())
            }
        };
        let _ = self.events.send(msg);
        self.inner.notify(event);
    }
}

impl Session {
    pub fn create(id: String, config: SessionConfig, player: PlayerKind, log_path: Option<PathBuf>, pacing: Pacing) -> Result<Self> {
        let runner = match &log_path {
            Some(p) => ProtocolRunner::with_log_file(config.clone(), p)?,
            None => ProtocolRunner::new(config.clone())?,
        };
        let (events, _) = broadcast::channel(1 << 16);
        let pending = Arc::new(Mutex::new(None));
        let (port, inbox): (BoxPort, _) = match player {
            PlayerKind::Simulated => (Box::new(config.sim_user()?), None),
            PlayerKind::Human => {
                let (tx, rx) = mpsc::channel();
                let human = HumanPort::new(config.env()?, events.clone(), rx, pacing);
                (Box::new(PendingPort { inner: human, pending: pending.clone() }), Some(Mutex::new(tx)))
            }
        };
        let view = View { log: runner.log().clone(), running: None, progress: None, models: ModelsView::default(), lost: false };
        Ok(Self {
            id,
            player,
            exec: Arc::new(tokio::sync::Mutex::new(Executor { runner: Some(runner), port: Some(port) })),
            view: Arc::new(RwLock::new(view)),
            events,
            pending,
            inbox,
            socket_open: AtomicBool::new(false),
            log_path,
        })
    }

    pub fn status(&self) -> SessionStatus {
        let v = self.view.read().expect("view lock");
        let done = &v.log.completed_phases;
        let next_phase = if v.log.failure.is_some() || v.lost { None } else { Phase::ORDER.get(done.len()).copied() };
        SessionStatus {
            id: self.id.clone(),
            participant_id: v.log.config.participant_id.clone(),
            group: v.log.config.group,
            player: self.player,
            completed_phases: done.clone(),
            next_phase,
            running: v.running,
            progress: v.progress,
            finished: next_phase.is_none(),
            failure: v.log.failure.clone(),
            records: v.log.records.len(),
            prospective: v.log.prospective.clone(),
            log_path: self.log_path.as_ref().map(|p| p.display().to_string()),
        }
    }

    /// Phase the executor would run next, or why it cannot.
    pub fn next_phase(exec: &Executor) -> std::result::Result<Phase, String> {
        match &exec.runner {
            None => Err("session executor was lost after a crash".into()),
            Some(r) => r.next_phase().ok_or_else(|| "protocol already finished".into()),
        }
    }

    /// Runs the next phase on a blocking thread while holding the executor.
    pub async fn run_phase(self: Arc<Self>, mut exec: OwnedMutexGuard<Executor>) -> Result<Phase> {
        let phase = Self::next_phase(&exec).map_err(Error::InvalidArgument)?;
        let (mut runner, mut port) = match (exec.runner.take(), exec.port.take()) {
            (Some(r), Some(p)) => (r, p),
            _ => unreachable!("checked by next_phase"),
        };
        self.view.write().expect("view lock").running = Some(phase);
        let me = self.clone();
        let joined = tokio::task::spawn_blocking(move || {
            let mut relay = Relay { inner: port.as_mut(), events: &me.events, view: &me.view };
            let r = runner.run_next_phase(&mut relay);
            (runner, port, r)
        })
        .await;
        let mut view = self.view.write().expect("view lock");
        view.running = None;
        match joined {
            Ok((runner, port, result)) => {
                view.log = runner.log().clone();
                if let Ok(grid) = runner.config().characterization.grid() {
                    view.models.pre = runner.pre_models().map(|m| m.model_update(&grid));
                    view.models.post = runner.post_models().map(|m| m.model_update(&grid));
                }
                view.models.pre_front = view.log.pre_front.clone();
                view.models.post_front = view.log.post_front.clone();
                exec.runner = Some(runner);
                exec.port = Some(port);
                if let Err(e) = &result {
                    let _ = self.events.send(ServerMsg::Error { message: format!("{phase} failed: {e}") });
                }
                result
            }
            Err(join) => {
                view.lost = true;
                let message = format!("phase worker crashed: {join}");
                view.log.failure = Some(FailureNote { phase, message: message.clone() });
                Err(Error::Port(message))
            }
        }
    }
}
