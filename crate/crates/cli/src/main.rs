use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use paretohil_client::Client;
use paretohil_core::api::{CharacterizeRequest, CreateSession, PlayerKind};
use paretohil_core::cohort::{analyze, cohort_profiles, load_profiles, simulate_cohort, CohortReport};
use paretohil_core::protocol::{load, persist, replay, Group, SessionConfig, SessionLog};
use paretohil_service::{Pacing, ServiceConfig};

#[derive(Parser)]
#[command(name = "paretohil", version, about = "Pareto characterization of performance and perceived challenge")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Remote {
    /// Base URL of a running service. Without it an embedded service is started.
    #[arg(long)]
    server: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// One HiL characterization against the simulated user.
    Characterize {
        #[command(flatten)]
        remote: Remote,
        /// JSON request body; fields left out take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Where to write the full response as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// All six phases for one participant.
    RunProtocol {
        #[command(flatten)]
        remote: Remote,
        /// Session config as JSON; fields left out take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        group: Option<Group>,
        #[arg(long)]
        seed: Option<u64>,
        /// Wait for a participant on the WebSocket instead of simulating.
        #[arg(long, requires = "server")]
        human: bool,
        /// Session log destination (JSON lines).
        #[arg(long, default_value = "session.jsonl")]
        out: PathBuf,
    },
    /// Simulated participants in both groups, then the cohort analysis.
    SimulateCohort {
        #[arg(long, default_value_t = 17)]
        participants: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// JSON array of simulated-user profiles instead of random ones.
        #[arg(long)]
        profiles: Option<PathBuf>,
        /// Session config shared by everyone.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 5000)]
        bootstrap: usize,
        #[arg(long, default_value = "cohort")]
        out_dir: PathBuf,
    },
    /// Tables from a directory of session logs.
    Report {
        logs: PathBuf,
        #[arg(long, default_value_t = 5000)]
        bootstrap: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "report")]
        out_dir: PathBuf,
    },
    /// Start the HTTP/WebSocket service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Stream every session log into this directory.
        #[arg(long)]
        log_dir: Option<PathBuf>,
        /// Wall seconds per simulated second in live trials.
        #[arg(long, default_value_t = 1.0)]
        time_scale: f64,
        /// Seconds to wait for a questionnaire answer.
        #[arg(long, default_value_t = 600)]
        answer_timeout: u64,
    },
    /// Re-run logs against the simulated user and compare.
    Replay {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
    },
}

fn read_json<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

/// Connects to `--server`, or starts a service on a free local port.
async fn connect(remote: &Remote) -> Result<Client> {
    match &remote.server {
        Some(url) => Ok(Client::new(url.clone())),
        None => {
            let (addr, _) = paretohil_service::spawn("127.0.0.1:0".parse()?, ServiceConfig::default()).await?;
            log::info!("embedded service on {addr}");
            Ok(Client::new(format!("http://{addr}")))
        }
    }
}

async fn characterize(remote: Remote, config: Option<PathBuf>, seed: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let mut req: CharacterizeRequest = read_json(config.as_deref())?;
    if let Some(s) = seed {
        req.seed = s;
    }
    let client = connect(&remote).await?;
    let resp = client.characterize(&req).await?;
    println!("iteration\tassistance\tbest\tordinal\tpairwise");
    for r in &resp.records {
        let ord = r.ordinal.map(|o| format!("{o:?}")).unwrap_or_default();
        let pw = r.pairwise.map(|p| format!("{p:?}")).unwrap_or_default();
        println!("{}\t{:.3}\t{:.3}\t{ord}\t{pw}", r.iteration, r.assistance, r.best);
    }
    let front = resp.front.front_assistance();
    println!(
        "front: {} points, assistance {:.3} to {:.3}",
        front.len(),
        front.first().copied().unwrap_or(f64::NAN),
        front.last().copied().unwrap_or(f64::NAN)
    );
    if let Some(path) = out {
        fs::write(&path, serde_json::to_string_pretty(&resp)?)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

async fn run_protocol(
    remote: Remote,
    config: Option<PathBuf>,
    group: Option<Group>,
    seed: Option<u64>,
    human: bool,
    out: PathBuf,
) -> Result<()> {
    let mut cfg: SessionConfig = read_json(config.as_deref())?;
    if let Some(g) = group {
        cfg.group = g;
    }
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    let client = connect(&remote).await?;
    let player = if human { PlayerKind::Human } else { PlayerKind::Simulated };
    let st = client.create_session(&CreateSession { config: cfg, player }).await?;
    if human {
        println!("session {} waiting; connect a participant to {}/sessions/{}/ws", st.id, client.base(), st.id);
    }
    let log = client
        .run_to_end(&st.id, |r| println!("{} done ({} records)", r.phase, r.status.records))
        .await;
    let log = match log {
        Ok(log) => log,
        Err(e) => {
            let partial = client.log(&st.id).await?;
            persist(&partial, &out)?;
            bail!("session failed: {e}; partial log written to {}", out.display());
        }
    };
    persist(&log, &out)?;
    summarize(&log);
    println!("wrote {}", out.display());
    Ok(())
}

fn summarize(log: &SessionLog) {
    use paretohil_core::record::Phase;
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3}"));
    println!("pre-evaluation mean {}, post-evaluation mean {}", fmt(log.eval_mean(Phase::PreEval)), fmt(log.eval_mean(Phase::PostEval)));
    if let Some(p) = &log.prospective {
        println!("selected {} designs, mean assistance {:.3} (std {:.3})", p.designs.len(), p.mean, p.std);
    }
}

fn write_report(report: &CohortReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (name, tsv) in report.tables() {
        fs::write(dir.join(format!("{name}.tsv")), tsv)?;
    }
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(report)?)?;
    println!("group\tparticipants\tpre_eval\tpost_eval\ttraining_assistance");
    for g in &report.groups {
        println!(
            "{}\t{}\t{:.3}\t{:.3}\t{:.3}",
            g.group, g.participants, g.pre_eval_mean, g.post_eval_mean, g.training_mean_assistance
        );
    }
    println!("window\tmean_assistance\tmean_designs");
    for w in &report.windows {
        println!("{:.0}-{:.0}%\t{:.3}\t{:.1}", w.lo * 100.0, w.hi * 100.0, w.mean_assistance, w.mean_designs);
    }
    println!("tables in {}", dir.display());
    Ok(())
}

fn load_dir(dir: &Path) -> Result<Vec<SessionLog>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no .jsonl logs in {}", dir.display());
    }
    paths.iter().map(|p| load(p).with_context(|| format!("loading {}", p.display()))).collect()
}

fn simulate(participants: usize, seed: u64, profiles: Option<PathBuf>, config: Option<PathBuf>, bootstrap: usize, out_dir: PathBuf) -> Result<()> {
    let base: SessionConfig = read_json(config.as_deref())?;
    let profiles = match profiles {
        Some(p) => load_profiles(p)?,
        None => cohort_profiles(participants, seed),
    };
    let logs = simulate_cohort(&base, &profiles, &[Group::Pareto, Group::Staircase], seed)?;
    let log_dir = out_dir.join("logs");
    fs::create_dir_all(&log_dir)?;
    for l in &logs {
        persist(l, log_dir.join(format!("{}.jsonl", l.config.participant_id)))?;
    }
    println!("{} sessions in {}", logs.len(), log_dir.display());
    let report = analyze(&logs, bootstrap, 0.95, seed)?;
    write_report(&report, &out_dir)
}

fn replay_logs(paths: &[PathBuf]) -> Result<()> {
    let mut failed = 0;
    for p in paths {
        let log = load(p).with_context(|| format!("loading {}", p.display()))?;
        let rep = replay(&log)?;
        if rep.is_identical() {
            println!("{}: identical ({} records)", p.display(), rep.records_compared);
        } else {
            failed += 1;
            println!("{}: {} mismatches", p.display(), rep.mismatches.len());
            for m in &rep.mismatches {
                println!("  {m}");
            }
        }
    }
    if failed > 0 {
        bail!("{failed} of {} logs did not replay", paths.len());
    }
    Ok(())
}

#[tokio::main]
async fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Characterize { remote, config, seed, out } => characterize(remote, config, seed, out).await,
        Command::RunProtocol { remote, config, group, seed, human, out } => {
            run_protocol(remote, config, group, seed, human, out).await
        }
        Command::SimulateCohort { participants, seed, profiles, config, bootstrap, out_dir } => {
            tokio::task::block_in_place(|| simulate(participants, seed, profiles, config, bootstrap, out_dir))
        }
        Command::Report { logs, bootstrap, seed, out_dir } => tokio::task::block_in_place(|| {
            let logs = load_dir(&logs)?;
            write_report(&analyze(&logs, bootstrap, 0.95, seed)?, &out_dir)
        }),
        Command::Serve { addr, log_dir, time_scale, answer_timeout } => {
            if let Some(d) = &log_dir {
                fs::create_dir_all(d)?;
            }
            let pacing = Pacing { time_scale, answer_timeout: Duration::from_secs(answer_timeout) };
            println!("serving on http://{addr}");
            paretohil_service::serve(addr, ServiceConfig { log_dir, pacing }).await?;
            Ok(())
        }
        Command::Replay { logs } => tokio::task::block_in_place(|| replay_logs(&logs)),
    }
}
