//! Simulated cohorts: many participants through the protocol, then group
//! curves, bootstrap change intervals and the selection-window analysis.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::Surrogate;
use crate::moo::{refit_from_records, CharacterizationConfig, FittedModels};
use crate::pareto::{aggregate_curves, bootstrap_change_ci, BootstrapReport, GroupCurves, ParticipantCurves, SelectionWindow};
use crate::protocol::{prospective_assistance, run_simulated, Group, SessionConfig, SessionLog};
use crate::record::{Phase, TrialRecord};
use crate::seeds::derive;
use crate::simuser::{LatentCurve, SimUserProfile};

/// Heterogeneous profiles around the default simulated user.
pub fn cohort_profiles(n: usize, seed: u64) -> Vec<SimUserProfile> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| SimUserProfile {
            skill: rng.random_range(0.1..0.6),
            noise_std: rng.random_range(3.0..7.0),
            latent: LatentCurve { offset: rng.random_range(2.0..3.0), slope: rng.random_range(-6.0..-4.0), clip: 3.0 },
            seed: derive(seed, &[i as u64]),
            ..SimUserProfile::default()
        })
        .collect()
}

pub fn load_profiles(path: impl AsRef<std::path::Path>) -> Result<Vec<SimUserProfile>> {
    let text = std::fs::read_to_string(path)?;
    let profiles: Vec<SimUserProfile> = serde_json::from_str(&text)?;
    for p in &profiles {
        p.validate()?;
    }
    Ok(profiles)
}

/// One session per (profile, group), run in parallel. Session `i` of a group
/// gets master seed `derive(seed, [i])`, shared across groups.
pub fn simulate_cohort(base: &SessionConfig, profiles: &[SimUserProfile], groups: &[Group], seed: u64) -> Result<Vec<SessionLog>> {
    let jobs: Vec<(usize, Group)> = groups.iter().flat_map(|&g| (0..profiles.len()).map(move |i| (i, g))).collect();
    jobs.par_iter()
        .map(|&(i, group)| {
            let cfg = SessionConfig {
                participant_id: format!("{group}-{i:02}"),
                group,
                simuser: profiles[i].clone(),
                master_seed: derive(seed, &[i as u64]),
                ..base.clone()
            };
            run_simulated(cfg)
        })
        .collect()
}

pub fn phase_models(log: &SessionLog, phase: Phase) -> Result<FittedModels> {
    let records: Vec<TrialRecord> = log.records_in(phase).cloned().collect();
    if records.is_empty() {
        return Err(Error::Log(format!("{} has no {phase} trials", log.config.participant_id)));
    }
    refit_from_records(&records, &log.config.characterization)
}

pub fn participant_curves(models: &FittedModels, grid: &[f64]) -> ParticipantCurves {
    ParticipantCurves {
        score: grid.iter().map(|&x| models.num.raw_mean(x)).collect(),
        challenge: grid.iter().map(|&x| models.qual.predict(x).mean).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRow {
    pub lo: f64,
    pub hi: f64,
    pub mean_assistance: f64,
    pub mean_designs: f64,
}

/// Mean prospective assistance across participants for each window.
pub fn window_analysis(logs: &[SessionLog], windows: &[(f64, f64)], cfg: &CharacterizationConfig) -> Result<Vec<WindowRow>> {
    let grid = cfg.grid()?;
    let fronts: Vec<_> = logs
        .iter()
        .map(|l| phase_models(l, Phase::PreHil).map(|m| crate::moo::extract_front(&m.num, &m.qual, &grid)))
        .collect::<Result<_>>()?;
    windows
        .iter()
        .map(|&(lo, hi)| {
            let w = SelectionWindow::symmetric(lo, hi);
            let (mut sum, mut count) = (0.0, 0.0);
            for f in &fronts {
                let p = prospective_assistance(f, &w)?;
                sum += p.mean;
                count += p.designs.len() as f64;
            }
            let n = fronts.len() as f64;
            Ok(WindowRow { lo, hi, mean_assistance: sum / n, mean_designs: count / n })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub group: Group,
    pub participants: usize,
    pub pre_eval_mean: f64,
    pub post_eval_mean: f64,
    pub training_mean_assistance: f64,
    pub pre: GroupCurves,
    pub post: GroupCurves,
    pub change: BootstrapReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortReport {
    pub groups: Vec<GroupReport>,
    pub windows: Vec<WindowRow>,
}

pub const STANDARD_WINDOWS: [(f64, f64); 3] = [(0.3, 0.7), (0.4, 0.8), (0.5, 0.9)];

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 { f64::NAN } else { s / n as f64 }
}

pub fn analyze(logs: &[SessionLog], replicates: usize, confidence: f64, seed: u64) -> Result<CohortReport> {
    let first = logs.first().ok_or_else(|| Error::InvalidArgument("empty cohort".into()))?;
    let cfg = &first.config.characterization;
    let grid = cfg.grid()?;
    let mut groups = Vec::new();
    for group in [Group::Pareto, Group::Staircase] {
        let members: Vec<&SessionLog> = logs.iter().filter(|l| l.config.group == group).collect();
        if members.is_empty() {
            continue;
        }
        let curves = |phase| -> Result<Vec<ParticipantCurves>> {
            members.par_iter().map(|l| phase_models(l, phase).map(|m| participant_curves(&m, grid.points()))).collect()
        };
        let pre = aggregate_curves(grid.points(), curves(Phase::PreHil)?)?;
        let post = aggregate_curves(grid.points(), curves(Phase::PostHil)?)?;
        let pre_s: Vec<Vec<f64>> = pre.participants.iter().map(|p| p.score.clone()).collect();
        let post_s: Vec<Vec<f64>> = post.participants.iter().map(|p| p.score.clone()).collect();
        let change = bootstrap_change_ci(grid.points(), &pre_s, &post_s, replicates, confidence, derive(seed, &[group as u64]))?;
        groups.push(GroupReport {
            group,
            participants: members.len(),
            pre_eval_mean: mean(members.iter().filter_map(|l| l.eval_mean(Phase::PreEval))),
            post_eval_mean: mean(members.iter().filter_map(|l| l.eval_mean(Phase::PostEval))),
            training_mean_assistance: mean(members.iter().flat_map(|l| l.records_in(Phase::Training).map(|r| r.assistance))),
            pre,
            post,
            change,
        });
    }
    let pareto_logs: Vec<SessionLog> = {
        let mut seen = std::collections::HashSet::new();
        logs.iter().filter(|l| seen.insert(l.config.master_seed)).cloned().collect()
    };
    let windows = window_analysis(&pareto_logs, &STANDARD_WINDOWS, cfg)?;
    Ok(CohortReport { groups, windows })
}

fn table(header: &str, rows: impl Iterator<Item = String>) -> String {
    let mut s = String::from(header);
    s.push('\n');
    for r in rows {
        s.push_str(&r);
        s.push('\n');
    }
    s
}

impl CohortReport {
    /// Tab-separated tables keyed by file stem.
    pub fn tables(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for g in &self.groups {
            let rows = (0..g.pre.grid.len()).map(|j| {
                let c = &g.change.intervals[j];
                format!(
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    g.pre.grid[j], g.pre.mean_score[j], g.post.mean_score[j], g.pre.mean_challenge[j], g.post.mean_challenge[j],
                    c.mean_change, c.lo, c.hi
                )
            });
            out.push((
                format!("{}_curves", g.group),
                table("assistance\tpre_score\tpost_score\tpre_challenge\tpost_challenge\tchange\tci_lo\tci_hi", rows),
            ));
            for (name, curves) in [("pre", &g.pre), ("post", &g.post)] {
                let front = curves.front((-0.5, 0.5));
                let rows = front.front.iter().map(|p| format!("{}\t{}\t{}", p.assistance, p.expected_score, p.expected_challenge));
                out.push((format!("{}_{name}_front", g.group), table("assistance\texpected_score\texpected_challenge", rows)));
            }
        }
        let rows = self.windows.iter().map(|w| format!("{}\t{}\t{}\t{}", w.lo, w.hi, w.mean_assistance, w.mean_designs));
        out.push(("windows".into(), table("lo\thi\tmean_assistance\tmean_designs", rows)));
        let rows = self.groups.iter().map(|g| {
            format!("{}\t{}\t{}\t{}\t{}", g.group, g.participants, g.pre_eval_mean, g.post_eval_mean, g.training_mean_assistance)
        });
        out.push(("groups".into(), table("group\tparticipants\tpre_eval\tpost_eval\ttraining_assistance", rows)));
        out
    }
}
