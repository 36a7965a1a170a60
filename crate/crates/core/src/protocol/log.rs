use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ProspectiveSummary, SessionConfig};
use crate::error::{Error, Result};
use crate::moo::ModelSnapshot;
use crate::pareto::ParetoFront;
use crate::record::{Phase, TrialRecord};

pub const LOG_FORMAT: &str = "paretohil-session";
pub const LOG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format: String,
    pub version: u32,
    pub config: SessionConfig,
}

/// One line of a session log after the header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogEntry {
    Trial(TrialRecord),
    Snapshot { phase: Phase, snapshot: ModelSnapshot },
    Front { phase: Phase, front: ParetoFront },
    Designs { designs: Vec<f64> },
    Prospective(ProspectiveSummary),
    PhaseComplete { phase: Phase },
    Failure { phase: Phase, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSnapshot {
    pub phase: Phase,
    pub snapshot: ModelSnapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureNote {
    pub phase: Phase,
    pub message: String,
}

/// Everything recorded for one participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub format_version: u32,
    pub config: SessionConfig,
    pub records: Vec<TrialRecord>,
    pub snapshots: Vec<PhaseSnapshot>,
    pub pre_front: Option<ParetoFront>,
    pub post_front: Option<ParetoFront>,
    /// Training designs of the Pareto group.
    pub selected_designs: Option<Vec<f64>>,
    pub prospective: Option<ProspectiveSummary>,
    pub completed_phases: Vec<Phase>,
    pub failure: Option<FailureNote>,
}

impl SessionLog {
    pub fn new(config: SessionConfig) -> Self {
        Self {
            format_version: LOG_VERSION,
            config,
            records: Vec::new(),
            snapshots: Vec::new(),
            pre_front: None,
            post_front: None,
            selected_designs: None,
            prospective: None,
            completed_phases: Vec::new(),
            failure: None,
        }
    }

    pub fn header(&self) -> LogHeader {
        LogHeader { format: LOG_FORMAT.into(), version: self.format_version, config: self.config.clone() }
    }

    pub fn apply(&mut self, entry: LogEntry) {
        match entry {
            LogEntry::Trial(r) => self.records.push(r),
            LogEntry::Snapshot { phase, snapshot } => self.snapshots.push(PhaseSnapshot { phase, snapshot }),
            LogEntry::Front { phase: Phase::PreHil, front } => self.pre_front = Some(front),
            LogEntry::Front { front, .. } => self.post_front = Some(front),
            LogEntry::Designs { designs } => self.selected_designs = Some(designs),
            LogEntry::Prospective(p) => self.prospective = Some(p),
            LogEntry::PhaseComplete { phase } => self.completed_phases.push(phase),
            LogEntry::Failure { phase, message } => self.failure = Some(FailureNote { phase, message }),
        }
    }

    /// Entries in the order they are written, so that applying them to an
    /// empty log rebuilds this one.
    pub fn entries(&self) -> Vec<LogEntry> {
        let mut out = Vec::new();
        let mut records = self.records.iter().peekable();
        let mut snaps = self.snapshots.iter().peekable();
        let mut phases: Vec<Phase> = self.completed_phases.clone();
        if let Some(f) = &self.failure {
            phases.push(f.phase);
        }
        for phase in phases {
            while let Some(r) = records.next_if(|r| r.phase == phase) {
                out.push(LogEntry::Trial(r.clone()));
                if phase.is_hil() {
                    if let Some(s) = snaps.next_if(|s| s.phase == phase && s.snapshot.iteration == r.iteration) {
                        out.push(LogEntry::Snapshot { phase, snapshot: s.snapshot.clone() });
                    }
                }
            }
            match phase {
                Phase::PreHil => {
                    if let Some(front) = &self.pre_front {
                        out.push(LogEntry::Front { phase, front: front.clone() });
                    }
                    if let Some(p) = &self.prospective {
                        out.push(LogEntry::Prospective(p.clone()));
                    }
                }
                Phase::Training => {
                    if let Some(d) = &self.selected_designs {
                        out.push(LogEntry::Designs { designs: d.clone() });
                    }
                }
                Phase::PostHil => {
                    if let Some(front) = &self.post_front {
                        out.push(LogEntry::Front { phase, front: front.clone() });
                    }
                }
                _ => {}
            }
            if self.failure.as_ref().is_some_and(|f| f.phase == phase) {
                let f = self.failure.as_ref().expect("checked");
                out.push(LogEntry::Failure { phase, message: f.message.clone() });
            } else {
                out.push(LogEntry::PhaseComplete { phase });
            }
        }
        out
    }

    pub fn records_in(&self, phase: Phase) -> impl Iterator<Item = &TrialRecord> {
        self.records.iter().filter(move |r| r.phase == phase)
    }

    pub fn is_complete(&self) -> bool {
        self.failure.is_none() && self.completed_phases == Phase::ORDER
    }

    /// Mean best score of an evaluation phase.
    pub fn eval_mean(&self, phase: Phase) -> Option<f64> {
        let v: Vec<f64> = self.records_in(phase).map(|r| r.best).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

fn to_line<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string(v)?)
}

/// Appends log entries to a JSONL file, flushing after every line.
#[derive(Debug)]
pub struct LogWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl LogWriter {
    pub fn create(path: impl AsRef<Path>, header: &LogHeader) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let out = BufWriter::new(File::create(&path)?);
        let mut w = Self { path, out };
        w.write_line(&to_line(header)?)?;
        Ok(w)
    }

    fn write_line(&mut self, line: &str) -> Result<()> {
        self.out.write_all(line.as_bytes())?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }

    pub fn append(&mut self, entry: &LogEntry) -> Result<()> {
        let line = to_line(entry)?;
        self.write_line(&line)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

pub fn persist(log: &SessionLog, path: impl AsRef<Path>) -> Result<()> {
    let mut w = LogWriter::create(path, &log.header())?;
    for e in log.entries() {
        w.append(&e)?;
    }
    Ok(())
}

pub fn to_jsonl(log: &SessionLog) -> Result<String> {
    let mut s = to_line(&log.header())?;
    s.push('\n');
    for e in log.entries() {
        s.push_str(&to_line(&e)?);
        s.push('\n');
    }
    Ok(s)
}

pub fn from_jsonl<R: BufRead>(reader: R) -> Result<SessionLog> {
    let mut lines = reader.lines().enumerate().filter(|(_, l)| !matches!(l, Ok(s) if s.trim().is_empty()));
    let (_, first) = lines.next().ok_or_else(|| Error::Log("empty session log".into()))?;
    let first = first?;
    let probe: serde_json::Value =
        serde_json::from_str(&first).map_err(|e| Error::Log(format!("line 1: malformed header: {e}")))?;
    if probe.get("format").and_then(|v| v.as_str()) != Some(LOG_FORMAT) {
        return Err(Error::Log(format!("line 1: not a {LOG_FORMAT} log")));
    }
    let version = probe.get("version").and_then(|v| v.as_u64()).unwrap_or(0);
    if version != LOG_VERSION as u64 {
        return Err(Error::UnsupportedVersion { found: version as u32, expected: LOG_VERSION });
    }
    let header: LogHeader =
        serde_json::from_value(probe).map_err(|e| Error::Log(format!("line 1: malformed header: {e}")))?;
    let mut log = SessionLog::new(header.config);
    for (i, line) in lines {
        let line = line?;
        let entry: LogEntry =
            serde_json::from_str(&line).map_err(|e| Error::Log(format!("line {}: {e}", i + 1)))?;
        log.apply(entry);
    }
    Ok(log)
}

pub fn load(path: impl AsRef<Path>) -> Result<SessionLog> {
    let f = File::open(path.as_ref())?;
    from_jsonl(BufReader::new(f))
}
