//! Non-dominance utilities, AAN design selection, group aggregation,
//! percentile-bootstrap group change and front-to-front distances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds::derive;

/// One grid evaluation in objective space. Both objectives are maximized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectivePoint {
    pub assistance: f64,
    pub expected_score: f64,
    pub expected_challenge: f64,
}

impl ObjectivePoint {
    fn objectives(&self) -> (f64, f64) {
        (self.expected_score, self.expected_challenge)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoFront {
    pub all_points: Vec<ObjectivePoint>,
    pub front: Vec<ObjectivePoint>,
    /// Ordinal thresholds `(t1, t2)` for easy/moderate/hard band shading.
    pub thresholds: (f64, f64),
}

impl ParetoFront {
    pub fn from_points(all_points: Vec<ObjectivePoint>, thresholds: (f64, f64)) -> Self {
        let front = non_dominated(&all_points);
        Self { all_points, front, thresholds }
    }

    pub fn front_assistance(&self) -> Vec<f64> {
        self.front.iter().map(|p| p.assistance).collect()
    }
}

/// Indices of the non-dominated pairs (both maximized), ascending. Among exact
/// duplicates the lowest index is kept.
pub fn non_dominated_indices(objs: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..objs.len()).collect();
    order.sort_by(|&i, &j| {
        objs[j].0.total_cmp(&objs[i].0).then(objs[j].1.total_cmp(&objs[i].1)).then(i.cmp(&j))
    });
    let mut best_b = f64::NEG_INFINITY;
    let mut keep = Vec::new();
    for i in order {
        if objs[i].1 > best_b {
            best_b = objs[i].1;
            keep.push(i);
        }
    }
    keep.sort_unstable();
    keep
}

pub fn non_dominated(points: &[ObjectivePoint]) -> Vec<ObjectivePoint> {
    let objs: Vec<(f64, f64)> = points.iter().map(ObjectivePoint::objectives).collect();
    non_dominated_indices(&objs).into_iter().map(|i| points[i]).collect()
}

/// Fractions of the individual's observed range, per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionWindow {
    pub perf_lo: f64,
    pub perf_hi: f64,
    pub chall_lo: f64,
    pub chall_hi: f64,
}

impl Default for SelectionWindow {
    fn default() -> Self {
        Self::symmetric(0.4, 0.8)
    }
}

impl SelectionWindow {
    pub fn symmetric(lo: f64, hi: f64) -> Self {
        Self { perf_lo: lo, perf_hi: hi, chall_lo: lo, chall_hi: hi }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |lo: f64, hi: f64| (0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi) && lo < hi;
        if ok(self.perf_lo, self.perf_hi) && ok(self.chall_lo, self.chall_hi) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid selection window {self:?}")))
        }
    }

    fn center(&self) -> (f64, f64) {
        (0.5 * (self.perf_lo + self.perf_hi), 0.5 * (self.chall_lo + self.chall_hi))
    }
}

// Per-axis min-max normalization over the front; a flat axis maps to None.
fn front_normalizer(front: &[ObjectivePoint]) -> impl Fn(&ObjectivePoint) -> (Option<f64>, Option<f64>) {
    let range = |f: fn(&ObjectivePoint) -> f64| {
        let lo = front.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = front.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    };
    let (s_lo, s_hi) = range(|p| p.expected_score);
    let (c_lo, c_hi) = range(|p| p.expected_challenge);
    move |p: &ObjectivePoint| {
        let s = (s_hi > s_lo).then(|| (p.expected_score - s_lo) / (s_hi - s_lo));
        let c = (c_hi > c_lo).then(|| (p.expected_challenge - c_lo) / (c_hi - c_lo));
        (s, c)
    }
}

/// Assistance levels of front points whose normalized score and challenge both
/// fall inside the window. May be empty.
pub fn select_designs(front: &ParetoFront, window: &SelectionWindow) -> Result<Vec<f64>> {
    window.validate()?;
    if front.front.is_empty() {
        return Err(Error::InvalidArgument("cannot select designs from an empty front".into()));
    }
    let norm = front_normalizer(&front.front);
    let inside = |v: Option<f64>, lo: f64, hi: f64| v.map_or(true, |v| v >= lo - 1e-12 && v <= hi + 1e-12);
    Ok(front
        .front
        .iter()
        .filter(|p| {
            let (s, c) = norm(p);
            inside(s, window.perf_lo, window.perf_hi) && inside(c, window.chall_lo, window.chall_hi)
        })
        .map(|p| p.assistance)
        .collect())
}

/// Like [`select_designs`], but an empty selection falls back to the front point
/// nearest to the window centre in normalized coordinates.
pub fn select_designs_or_nearest(front: &ParetoFront, window: &SelectionWindow) -> Result<Vec<f64>> {
    let picked = select_designs(front, window)?;
    if !picked.is_empty() {
        return Ok(picked);
    }
    let norm = front_normalizer(&front.front);
    let (cs, cc) = window.center();
    let nearest = front
        .front
        .iter()
        .map(|p| {
            let (s, c) = norm(p);
            let d = (s.unwrap_or(cs) - cs).powi(2) + (c.unwrap_or(cc) - cc).powi(2);
            (d, p.assistance)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)))
        .map(|(_, a)| a)
        .expect("non-empty front");
    Ok(vec![nearest])
}

/// Posterior-mean curves for one participant on a shared grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantCurves {
    /// Raw score scale.
    pub score: Vec<f64>,
    /// Latent challenge scale.
    pub challenge: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCurves {
    pub grid: Vec<f64>,
    pub participants: Vec<ParticipantCurves>,
    pub mean_score: Vec<f64>,
    pub mean_challenge: Vec<f64>,
}

impl GroupCurves {
    pub fn front(&self, thresholds: (f64, f64)) -> ParetoFront {
        let pts = self
            .grid
            .iter()
            .zip(self.mean_score.iter().zip(&self.mean_challenge))
            .map(|(&assistance, (&expected_score, &expected_challenge))| ObjectivePoint {
                assistance,
                expected_score,
                expected_challenge,
            })
            .collect();
        ParetoFront::from_points(pts, thresholds)
    }
}

fn pointwise_mean<'a>(curves: impl Iterator<Item = &'a [f64]>, len: usize) -> Vec<f64> {
    let mut sum = vec![0.0; len];
    let mut n = 0usize;
    for c in curves {
        for (s, v) in sum.iter_mut().zip(c) {
            *s += v;
        }
        n += 1;
    }
    sum.into_iter().map(|s| s / n as f64).collect()
}

/// Pointwise average of the participants' posterior-mean curves.
pub fn aggregate_curves(grid: &[f64], participants: Vec<ParticipantCurves>) -> Result<GroupCurves> {
    if participants.is_empty() {
        return Err(Error::InvalidArgument("aggregate needs at least one participant".into()));
    }
    if participants.iter().any(|p| p.score.len() != grid.len() || p.challenge.len() != grid.len()) {
        return Err(Error::InvalidArgument("participant curves must share the grid".into()));
    }
    let mean_score = pointwise_mean(participants.iter().map(|p| p.score.as_slice()), grid.len());
    let mean_challenge = pointwise_mean(participants.iter().map(|p| p.challenge.as_slice()), grid.len());
    Ok(GroupCurves { grid: grid.to_vec(), participants, mean_score, mean_challenge })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeInterval {
    pub assistance: f64,
    /// Mean change of the unresampled cohort.
    pub mean_change: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub replicates: usize,
    pub confidence: f64,
    pub intervals: Vec<ChangeInterval>,
    /// Set when the cohort has a single participant (intervals have zero width).
    pub degenerate: bool,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Percentile bootstrap of the post−pre mean score change at each grid point.
/// Participants are resampled with replacement; replicate `r` draws from its
/// own stream derived from `seed`, so results do not depend on scheduling.
pub fn bootstrap_change_ci(
    grid: &[f64],
    pre: &[Vec<f64>],
    post: &[Vec<f64>],
    replicates: usize,
    confidence: f64,
    seed: u64,
) -> Result<BootstrapReport> {
    if pre.is_empty() || pre.len() != post.len() {
        return Err(Error::InvalidArgument("bootstrap needs paired, non-empty pre/post cohorts".into()));
    }
    if replicates == 0 || !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidArgument("bootstrap needs B >= 1 and confidence in (0, 1)".into()));
    }
    let g = grid.len();
    if pre.iter().chain(post).any(|c| c.len() != g) {
        return Err(Error::InvalidArgument("curves must share the grid".into()));
    }
    let n = pre.len();
    let diffs: Vec<Vec<f64>> = pre.iter().zip(post).map(|(a, b)| b.iter().zip(a).map(|(y, x)| y - x).collect()).collect();
    let point = pointwise_mean(diffs.iter().map(Vec::as_slice), g);

    let reps: Vec<Vec<f64>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, &[r as u64]));
            let mut acc = vec![0.0; g];
            for _ in 0..n {
                let i = rng.random_range(0..n);
                for (a, d) in acc.iter_mut().zip(&diffs[i]) {
                    *a += d;
                }
            }
            acc.iter_mut().for_each(|a| *a /= n as f64);
            acc
        })
        .collect();

    let alpha = (1.0 - confidence) / 2.0;
    let intervals = (0..g)
        .map(|j| {
            let mut col: Vec<f64> = reps.iter().map(|r| r[j]).collect();
            col.sort_by(f64::total_cmp);
            ChangeInterval {
                assistance: grid[j],
                mean_change: point[j],
                lo: quantile_sorted(&col, alpha),
                hi: quantile_sorted(&col, 1.0 - alpha),
            }
        })
        .collect();
    Ok(BootstrapReport { replicates, confidence, intervals, degenerate: n == 1 })
}

/// How objective axes are scaled before measuring distances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FrontScaling {
    /// Divide each axis by a fixed scale shared by both fronts.
    Shared { score: f64, challenge: f64 },
    /// Min-max normalize each front over its own `all_points` range.
    PerFront,
}

fn scaled_points(front: &ParetoFront, scaling: FrontScaling) -> Vec<(f64, f64)> {
    match scaling {
        FrontScaling::Shared { score, challenge } => {
            front.front.iter().map(|p| (p.expected_score / score, p.expected_challenge / challenge)).collect()
        }
        FrontScaling::PerFront => {
            let base = if front.all_points.is_empty() { &front.front } else { &front.all_points };
            let norm = front_normalizer(base);
            front
                .front
                .iter()
                .map(|p| {
                    let (s, c) = norm(p);
                    (s.unwrap_or(0.0), c.unwrap_or(0.0))
                })
                .collect()
        }
    }
}

fn directed_hausdorff(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    a.iter()
        .map(|p| b.iter().map(|q| (p.0 - q.0).hypot(p.1 - q.1)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

/// Symmetric Hausdorff distance between two fronts after scaling.
pub fn front_hausdorff(a: &ParetoFront, b: &ParetoFront, scaling: FrontScaling) -> Result<f64> {
    if a.front.is_empty() || b.front.is_empty() {
        return Err(Error::InvalidArgument("Hausdorff distance needs non-empty fronts".into()));
    }
    let pa = scaled_points(a, scaling);
    let pb = scaled_points(b, scaling);
    Ok(directed_hausdorff(&pa, &pb).max(directed_hausdorff(&pb, &pa)))
}
