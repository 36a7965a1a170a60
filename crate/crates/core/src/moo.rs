//! The HiL Pareto characterization loop: Sobol warm start, UCB acquisitions,
//! surrogate Pareto set, volumetric-uncertainty pick and mean-front extraction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{
    fit_laplace, KernelParams, LaplaceFit, LikelihoodParams, NumericDataset, NumericModel, PosteriorGaussian,
    QualDataset, Surrogate,
};
use crate::pareto::{non_dominated_indices, ObjectivePoint, ParetoFront};
use crate::port::{ProgressEvent, UserPort};
use crate::record::{Phase, TrialRecord, TrialSeeds, WallClock};
use crate::sobol::sobol_points;
use crate::wire::ModelUpdate;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcqParams {
    pub lambda_num: f64,
    pub lambda_qual: f64,
}

impl Default for AcqParams {
    fn default() -> Self {
        Self { lambda_num: 2.0, lambda_qual: 1.0 }
    }
}

impl AcqParams {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_num >= 0.0 && self.lambda_qual >= 0.0 {
            Ok(())
        } else {
            Err(Error::Config("UCB weights must be >= 0".into()))
        }
    }
}

pub fn ucb(post: PosteriorGaussian, lambda: f64) -> f64 {
    post.mean + lambda * post.std()
}

/// Evenly spaced assistance levels over `[0, 1]`, endpoints included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateGrid {
    points: Vec<f64>,
}

impl CandidateGrid {
    pub const DEFAULT_SIZE: usize = 201;

    pub fn new(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::Config(format!("candidate grid needs at least 2 points, got {m}")));
        }
        let points = (0..m).map(|i| i as f64 / (m - 1) as f64).collect();
        Ok(Self { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl Default for CandidateGrid {
    fn default() -> Self {
        Self::new(Self::DEFAULT_SIZE).expect("default grid")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CharacterizationConfig {
    pub iterations: usize,
    pub sobol_iterations: usize,
    pub num_kernel: KernelParams,
    pub qual_kernel: KernelParams,
    pub likelihood: LikelihoodParams,
    pub acquisition: AcqParams,
    pub sigma_w2: f64,
    pub grid_size: usize,
}

impl Default for CharacterizationConfig {
    fn default() -> Self {
        Self {
            iterations: 10,
            sobol_iterations: 3,
            num_kernel: KernelParams::default(),
            qual_kernel: KernelParams::default(),
            likelihood: LikelihoodParams::default(),
            acquisition: AcqParams::default(),
            sigma_w2: 0.1,
            grid_size: CandidateGrid::DEFAULT_SIZE,
        }
    }
}

impl CharacterizationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1 <= self.sobol_iterations && self.sobol_iterations < self.iterations) {
            return Err(Error::Config(format!(
                "need 1 <= sobol_iterations < iterations, got {} and {}",
                self.sobol_iterations, self.iterations
            )));
        }
        if !(self.sigma_w2.is_finite() && self.sigma_w2 >= 0.0) {
            return Err(Error::Config("sigma_w2 must be >= 0".into()));
        }
        self.num_kernel.validate()?;
        self.qual_kernel.validate()?;
        self.likelihood.validate()?;
        self.acquisition.validate()?;
        CandidateGrid::new(self.grid_size).map(|_| ())
    }

    pub fn grid(&self) -> Result<CandidateGrid> {
        CandidateGrid::new(self.grid_size)
    }
}

/// Both surrogates fitted to the same iteration's data.
#[derive(Debug, Clone)]
pub struct FittedModels {
    pub num: NumericModel,
    pub qual: LaplaceFit,
}

impl FittedModels {
    pub fn fit(num: &NumericDataset, qual: &QualDataset, cfg: &CharacterizationConfig) -> Result<Self> {
        let num = NumericModel::fit(num, cfg.num_kernel, cfg.sigma_w2)?;
        let qual = fit_laplace(qual, cfg.qual_kernel, cfg.likelihood)?;
        if !qual.converged {
            log::warn!("Laplace fit did not converge (grad norm {:.3e})", qual.grad_norm);
        }
        Ok(Self { num, qual })
    }

    /// Posterior curves and mean-prediction front on the grid.
    pub fn model_update(&self, grid: &CandidateGrid) -> ModelUpdate {
        let (_, s_std) = self.num.data().score_moments();
        let mut u = ModelUpdate {
            grid: grid.points().to_vec(),
            score_mean: Vec::with_capacity(grid.len()),
            score_std: Vec::with_capacity(grid.len()),
            chall_mean: Vec::with_capacity(grid.len()),
            chall_std: Vec::with_capacity(grid.len()),
            front_points: Vec::new(),
        };
        for &x in grid.points() {
            let n = self.num.predict(x);
            let q = self.qual.predict(x);
            u.score_mean.push(self.num.raw_mean(x));
            u.score_std.push(s_std * n.std());
            u.chall_mean.push(q.mean);
            u.chall_std.push(q.std());
        }
        u.front_points = extract_front(&self.num, &self.qual, grid).front;
        u
    }
}

/// Grid points whose `(ucb_num, ucb_qual)` pair is non-dominated.
pub fn surrogate_pareto_set<N: Surrogate, Q: Surrogate>(grid: &CandidateGrid, num: &N, qual: &Q, acq: &AcqParams) -> Vec<f64> {
    let objs: Vec<(f64, f64)> = grid
        .points()
        .iter()
        .map(|&x| (ucb(num.predict(x), acq.lambda_num), ucb(qual.predict(x), acq.lambda_qual)))
        .collect();
    non_dominated_indices(&objs).into_iter().map(|i| grid.points()[i]).collect()
}

/// Candidate maximizing `sigma_num * sigma_qual`; the smallest level wins ties.
pub fn pick_next<N: Surrogate, Q: Surrogate>(candidates: &[f64], num: &N, qual: &Q) -> Result<f64> {
    let mut best: Option<(f64, f64)> = None;
    for &x in candidates {
        let v = num.predict(x).std() * qual.predict(x).std();
        best = match best {
            Some((bx, bv)) if v < bv || (v == bv && bx <= x) => Some((bx, bv)),
            _ => Some((x, v)),
        };
    }
    best.map(|(x, _)| x).ok_or_else(|| Error::InvalidArgument("pick_next needs at least one candidate".into()))
}

/// Mean-prediction front: score on the raw scale, challenge on the latent scale.
pub fn extract_front(num: &NumericModel, qual: &LaplaceFit, grid: &CandidateGrid) -> ParetoFront {
    let pts = grid
        .points()
        .iter()
        .map(|&x| ObjectivePoint { assistance: x, expected_score: num.raw_mean(x), expected_challenge: qual.predict(x).mean })
        .collect();
    ParetoFront::from_points(pts, qual.likelihood.thresholds)
}

/// Datasets and latent MAP after one HiL iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub iteration: usize,
    pub numeric: NumericDataset,
    pub qualitative: QualDataset,
    pub latent_inputs: Vec<f64>,
    pub f_hat: Vec<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct CharacterizationOutcome {
    pub records: Vec<TrialRecord>,
    pub snapshots: Vec<ModelSnapshot>,
    pub models: FittedModels,
    pub front: ParetoFront,
}

/// A characterization that stopped early; `records` holds every completed trial.
#[derive(Debug)]
pub struct Aborted {
    pub records: Vec<TrialRecord>,
    pub snapshots: Vec<ModelSnapshot>,
    pub error: Error,
}

impl std::fmt::Display for Aborted {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "characterization aborted after {} trials: {}", self.records.len(), self.error)
    }
}

impl std::error::Error for Aborted {}

/// Progress reported to a [`run_characterization_with`] observer as soon as it exists.
#[derive(Debug, Clone, Copy)]
pub enum CharEvent<'a> {
    Trial(&'a TrialRecord),
    Snapshot(&'a ModelSnapshot),
}

/// Runs the loop against `port`. Trial seeds derive from `base_seed` and the
/// one-based iteration index.
pub fn run_characterization<P: UserPort + ?Sized>(
    port: &mut P,
    cfg: &CharacterizationConfig,
    phase: Phase,
    base_seed: u64,
) -> std::result::Result<CharacterizationOutcome, Aborted> {
    run_characterization_with(port, cfg, phase, base_seed, &mut |_| {})
}

pub fn run_characterization_with<P: UserPort + ?Sized>(
    port: &mut P,
    cfg: &CharacterizationConfig,
    phase: Phase,
    base_seed: u64,
    observer: &mut dyn FnMut(CharEvent<'_>),
) -> std::result::Result<CharacterizationOutcome, Aborted> {
    let mut records = Vec::with_capacity(cfg.iterations);
    let mut snapshots = Vec::with_capacity(cfg.iterations);
    let abort = |records, snapshots, error| Aborted { records, snapshots, error };
    if let Err(e) = cfg.validate() {
        return Err(abort(records, snapshots, e));
    }
    let grid = cfg.grid().expect("validated");
    let sobol = sobol_points(cfg.sobol_iterations);
    let mut numeric = NumericDataset::new();
    let mut qualitative = QualDataset::new();
    let mut models: Option<FittedModels> = None;

    for n in 1..=cfg.iterations {
        port.notify(&ProgressEvent::Phase { phase, iteration: n, total: cfg.iterations });
        let x = match &models {
            Some(m) if n > cfg.sobol_iterations => {
                let set = surrogate_pareto_set(&grid, &m.num, &m.qual, &cfg.acquisition);
                match pick_next(&set, &m.num, &m.qual) {
                    Ok(x) => x,
                    Err(e) => return Err(abort(records, snapshots, e)),
                }
            }
            _ => sobol[n - 1],
        };
        let seeds = TrialSeeds::derive(base_seed, n as u64);
        let started_ms = WallClock::now_ms();
        let step = (|| -> Result<TrialRecord> {
            let play = port.play(x, seeds.attempts)?;
            let mut rec = TrialRecord::from_play(phase, n, x, &play, seeds);
            rec.ordinal = Some(port.rate(x, seeds.feedback)?);
            if let Some(prev) = records.last().map(|r: &TrialRecord| r.assistance) {
                rec.pairwise = Some(port.compare(prev, x, seeds.feedback)?);
            }
            rec.wall_clock = Some(WallClock { started_ms, finished_ms: WallClock::now_ms() });
            Ok(rec)
        })();
        let rec = match step {
            Ok(r) => r,
            Err(e) => return Err(abort(records, snapshots, e)),
        };
        let fitted = (|| -> Result<FittedModels> {
            numeric.push(x, rec.best)?;
            qualitative.push_ordinal(x, rec.ordinal.expect("set above"))?;
            if let (Some(prev), Some(pref)) = (records.last().map(|r: &TrialRecord| r.assistance), rec.pairwise) {
                qualitative.push_pairwise(prev, x, pref)?;
            }
            FittedModels::fit(&numeric, &qualitative, cfg)
        })();
        observer(CharEvent::Trial(&rec));
        records.push(rec);
        let fitted = match fitted {
            Ok(f) => f,
            Err(e) => return Err(abort(records, snapshots, e)),
        };
        snapshots.push(ModelSnapshot {
            iteration: n,
            numeric: numeric.clone(),
            qualitative: qualitative.clone(),
            latent_inputs: fitted.qual.inputs.clone(),
            f_hat: fitted.qual.f_hat.iter().copied().collect(),
            converged: fitted.qual.converged,
        });
        observer(CharEvent::Snapshot(snapshots.last().expect("just pushed")));
        port.notify(&ProgressEvent::Models(fitted.model_update(&grid)));
        models = Some(fitted);
    }
    let models = models.expect("at least one iteration");
    let front = extract_front(&models.num, &models.qual, &grid);
    Ok(CharacterizationOutcome { records, snapshots, models, front })
}

/// Outcome of re-deriving one post-Sobol pick from the logged trials.
#[derive(Debug, Clone, PartialEq)]
pub struct PickCheck {
    pub iteration: usize,
    pub sampled: f64,
    pub in_surrogate_set: bool,
    pub maximizes_volume: bool,
}

/// Recomputes, from the records alone, each adaptive iteration's surrogate set
/// and volumetric maximizer and compares them to the sampled level.
pub fn verify_sampler(records: &[TrialRecord], cfg: &CharacterizationConfig) -> Result<Vec<PickCheck>> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let mut numeric = NumericDataset::new();
    let mut qualitative = QualDataset::new();
    let mut checks = Vec::new();
    for (i, rec) in records.iter().enumerate() {
        let n = i + 1;
        if n > cfg.sobol_iterations {
            let m = FittedModels::fit(&numeric, &qualitative, cfg)?;
            let set = surrogate_pareto_set(&grid, &m.num, &m.qual, &cfg.acquisition);
            let best = pick_next(&set, &m.num, &m.qual)?;
            checks.push(PickCheck {
                iteration: n,
                sampled: rec.assistance,
                in_surrogate_set: set.contains(&rec.assistance),
                maximizes_volume: best == rec.assistance,
            });
        }
        numeric.push(rec.assistance, rec.best)?;
        let label = rec.ordinal.ok_or_else(|| Error::Log(format!("iteration {n} has no ordinal label")))?;
        qualitative.push_ordinal(rec.assistance, label)?;
        if i > 0 {
            let pref = rec.pairwise.ok_or_else(|| Error::Log(format!("iteration {n} has no pairwise answer")))?;
            qualitative.push_pairwise(records[i - 1].assistance, rec.assistance, pref)?;
        }
    }
    Ok(checks)
}

/// Refits the final models of a logged characterization.
pub fn refit_from_records(records: &[TrialRecord], cfg: &CharacterizationConfig) -> Result<FittedModels> {
    let mut numeric = NumericDataset::new();
    let mut qualitative = QualDataset::new();
    for (i, rec) in records.iter().enumerate() {
        numeric.push(rec.assistance, rec.best)?;
        if let Some(label) = rec.ordinal {
            qualitative.push_ordinal(rec.assistance, label)?;
        }
        if let (Some(pref), true) = (rec.pairwise, i > 0) {
            qualitative.push_pairwise(records[i - 1].assistance, rec.assistance, pref)?;
        }
    }
    FittedModels::fit(&numeric, &qualitative, cfg)
}
