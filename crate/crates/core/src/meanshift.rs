//! Mean-shift mode seeking over per-point keypoint candidates.
//!
//! This is the iterative clustering baseline the closed-form voting is
//! compared against: every point proposes a candidate keypoint position
//! `p_i + offset_i` and the keypoint is taken as the densest mode of the
//! weighted candidate cloud.
//!
//! The gaussian kernel is truncated at `truncation × bandwidth` so that a
//! uniform grid can restrict each update to nearby candidates. The update is
//! then exact mean shift for the truncated profile, which still ascends the
//! (shifted, truncated) gaussian density. Set `truncation = ∞` for the
//! untruncated kernel.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::geom::{Point3, Vec3};
use crate::synth::farthest_point_indices;
use crate::voting::VectorVoteProblem;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    Flat,
    Gaussian,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanShiftConfig {
    /// Kernel scale in meters (gaussian σ, or flat radius).
    pub bandwidth: f64,
    pub kernel: Kernel,
    pub max_iterations: usize,
    /// Converged once a step moves less than this (meters).
    pub shift_tolerance: f64,
    /// Modes closer than this are merged (meters).
    pub merge_radius: f64,
    /// Upper bound on trajectories; larger candidate sets are seeded by
    /// farthest-point sampling.
    pub max_seeds: usize,
    /// Gaussian cutoff in bandwidths.
    pub truncation: f64,
}

impl MeanShiftConfig {
    pub const DEFAULT_BANDWIDTH_FRACTION: f64 = 0.05;
    pub const DEFAULT_MAX_SEEDS: usize = 512;

    /// Defaults scaled to an object of the given diameter.
    pub fn for_diameter(diameter: f64) -> Self {
        let bandwidth = Self::DEFAULT_BANDWIDTH_FRACTION * diameter;
        MeanShiftConfig {
            bandwidth,
            kernel: Kernel::Gaussian,
            max_iterations: 100,
            shift_tolerance: 1e-5,
            merge_radius: bandwidth / 2.0,
            max_seeds: Self::DEFAULT_MAX_SEEDS,
            truncation: 3.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("bandwidth", self.bandwidth)?;
        positive("shift_tolerance", self.shift_tolerance)?;
        positive("merge_radius", self.merge_radius)?;
        if !(self.truncation > 0.0) {
            return Err(Error::Config(format!(
                "truncation must be positive, got {}",
                self.truncation
            )));
        }
        if self.max_iterations == 0 || self.max_seeds == 0 {
            return Err(Error::Config("max_iterations and max_seeds must be ≥ 1".into()));
        }
        if self.merge_radius > self.bandwidth {
            return Err(Error::Config("merge_radius must not exceed bandwidth".into()));
        }
        Ok(())
    }

    /// Distance beyond which the kernel is exactly zero.
    fn cutoff(&self) -> f64 {
        match self.kernel {
            Kernel::Flat => self.bandwidth,
            Kernel::Gaussian => self.truncation * self.bandwidth,
        }
    }

    /// Kernel profile at squared distance `d2` (unnormalized, `K(0) = 1`).
    #[inline]
    pub fn kernel_weight(&self, d2: f64) -> f64 {
        let h2 = self.bandwidth * self.bandwidth;
        match self.kernel {
            Kernel::Flat => {
                if d2 <= h2 {
                    1.0
                } else {
                    0.0
                }
            }
            Kernel::Gaussian => {
                let t2 = self.truncation * self.truncation;
                if d2 < t2 * h2 {
                    (-0.5 * d2 / h2).exp()
                } else {
                    0.0
                }
            }
        }
    }
}

/// Candidate keypoint positions with non-negative weights.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateSet {
    candidates: Vec<Point3>,
    weights: Vec<f64>,
}

impl CandidateSet {
    pub fn new(candidates: Vec<Point3>, weights: Vec<f64>) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::degenerate("no candidates"));
        }
        if candidates.len() != weights.len() {
            return Err(Error::Shape(format!(
                "{} candidates, {} weights",
                candidates.len(),
                weights.len()
            )));
        }
        if candidates.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("non-finite candidate".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidInput("negative or non-finite weight".into()));
        }
        if !weights.iter().any(|w| *w > 0.0) {
            return Err(Error::degenerate("all candidate weights are zero"));
        }
        Ok(CandidateSet {
            candidates,
            weights,
        })
    }

    /// Equal unit weights.
    pub fn unweighted(candidates: Vec<Point3>) -> Result<Self> {
        let n = candidates.len();
        Self::new(candidates, vec![1.0; n])
    }

    pub fn candidates(&self) -> &[Point3] {
        &self.candidates
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanShiftMode {
    pub mode: Point3,
    /// Iterations of the trajectory that produced `mode`.
    pub iterations_used: usize,
    /// Iterations summed over all seed trajectories.
    pub total_iterations: usize,
    /// `Σ w_i K(mode − c_i)`
    pub support: f64,
    /// Distinct modes left after merging.
    pub modes_found: usize,
}

/// Candidates bucketed on a uniform grid with cell size equal to the kernel cutoff.
/// Cell key to the half-open range of its members in `CandidateIndex::points`.
type CellMap = HashMap<(i64, i64, i64), (usize, usize)>;

struct CandidateIndex<'a> {
    set: &'a CandidateSet,
    config: &'a MeanShiftConfig,
    // Candidate positions/weights reordered so each cell is contiguous.
    points: Vec<Point3>,
    weights: Vec<f64>,
    cells: Option<(f64, CellMap)>,
}

impl<'a> CandidateIndex<'a> {
    fn build(set: &'a CandidateSet, config: &'a MeanShiftConfig) -> Self {
        let cutoff = config.cutoff();
        if !cutoff.is_finite() {
            return CandidateIndex {
                set,
                config,
                points: set.candidates.clone(),
                weights: set.weights.clone(),
                cells: None,
            };
        }
        let key = |p: &Point3| {
            (
                (p.x / cutoff).floor() as i64,
                (p.y / cutoff).floor() as i64,
                (p.z / cutoff).floor() as i64,
            )
        };
        let mut order: Vec<((i64, i64, i64), usize)> = set
            .candidates
            .iter()
            .enumerate()
            .filter(|(i, _)| set.weights[*i] > 0.0)
            .map(|(i, p)| (key(p), i))
            .collect();
        order.sort_unstable();
        let mut cells = HashMap::new();
        let mut start = 0;
        while start < order.len() {
            let k = order[start].0;
            let mut end = start;
            while end < order.len() && order[end].0 == k {
                end += 1;
            }
            cells.insert(k, (start, end));
            start = end;
        }
        CandidateIndex {
            set,
            config,
            points: order.iter().map(|(_, i)| set.candidates[*i]).collect(),
            weights: order.iter().map(|(_, i)| set.weights[*i]).collect(),
            cells: Some((cutoff, cells)),
        }
    }

    /// Visits `(weight × kernel, candidate)` for every candidate in kernel range of `x`.
    #[inline]
    fn for_each_in_range(&self, x: Point3, mut f: impl FnMut(f64, Point3)) {
        let mut visit = |lo: usize, hi: usize| {
            for (p, w) in self.points[lo..hi].iter().zip(&self.weights[lo..hi]) {
                let k = self.config.kernel_weight((*p - x).norm_squared());
                if k > 0.0 {
                    f(w * k, *p);
                }
            }
        };
        match &self.cells {
            None => visit(0, self.points.len()),
            Some((cutoff, cells)) => {
                let cx = (x.x / cutoff).floor() as i64;
                let cy = (x.y / cutoff).floor() as i64;
                let cz = (x.z / cutoff).floor() as i64;
                for dx in -1..=1 {
                    for dy in -1..=1 {
                        for dz in -1..=1 {
                            if let Some(&(lo, hi)) = cells.get(&(cx + dx, cy + dy, cz + dz)) {
                                visit(lo, hi);
                            }
                        }
                    }
                }
            }
        }
    }

    /// Weighted kernel mean around `x` and the kernel mass it was computed from.
    fn shifted_mean(&self, x: Point3) -> Option<(Point3, f64)> {
        let mut num = Vec3::ZERO;
        let mut den = 0.0;
        self.for_each_in_range(x, |wk, p| {
            num += p * wk;
            den += wk;
        });
        (den > 0.0).then(|| (num * (1.0 / den), den))
    }

    fn support(&self, x: Point3) -> f64 {
        let mut s = 0.0;
        self.for_each_in_range(x, |wk, _| s += wk);
        s
    }

    /// Runs one trajectory; returns the end point and the iteration count.
    fn climb(&self, seed: Point3) -> (Point3, usize) {
        let mut x = seed;
        let mut iterations = 0;
        while iterations < self.config.max_iterations {
            let Some((next, _)) = self.shifted_mean(x) else {
                break;
            };
            iterations += 1;
            let shift = (next - x).norm();
            x = next;
            if shift < self.config.shift_tolerance {
                break;
            }
        }
        (x, iterations)
    }

    fn seeds(&self) -> Vec<Point3> {
        let positive: Vec<Point3> = self
            .set
            .candidates
            .iter()
            .zip(&self.set.weights)
            .filter(|(_, w)| **w > 0.0)
            .map(|(p, _)| *p)
            .collect();
        if positive.len() <= self.config.max_seeds {
            positive
        } else {
            farthest_point_indices(&positive, self.config.max_seeds, 0)
                .into_iter()
                .map(|i| positive[i])
                .collect()
        }
    }
}

/// Densest mode of the weighted candidate cloud.
pub fn mean_shift_mode(
    candidates: &CandidateSet,
    config: &MeanShiftConfig,
    exec: Exec,
) -> Result<MeanShiftMode> {
    config.validate()?;
    let index = CandidateIndex::build(candidates, config);
    let seeds = index.seeds();
    let trajectories = exec.map_slice(&seeds, |s| {
        let (end, iters) = index.climb(*s);
        (end, iters, index.support(end))
    });
    let total_iterations = trajectories.iter().map(|t| t.1).sum();

    let mut ranked = trajectories;
    ranked.sort_by(|a, b| b.2.total_cmp(&a.2).then_with(|| a.0.lex_cmp(&b.0)));
    let mut accepted: Vec<(Point3, usize, f64)> = Vec::new();
    for t in ranked {
        if accepted
            .iter()
            .all(|a| a.0.distance(t.0) > config.merge_radius)
        {
            accepted.push(t);
        }
    }
    let (mode, iterations_used, support) = accepted[0];
    Ok(MeanShiftMode {
        mode,
        iterations_used,
        total_iterations,
        support,
        modes_found: accepted.len(),
    })
}

/// Weighted kernel density `Σ w_i K(x − c_i)` under the configured kernel.
pub fn kernel_density(candidates: &CandidateSet, config: &MeanShiftConfig, x: Point3) -> f64 {
    candidates
        .candidates
        .iter()
        .zip(&candidates.weights)
        .map(|(c, w)| w * config.kernel_weight((*c - x).norm_squared()))
        .sum()
}

/// Norm of the mean-shift step taken from `x`.
pub fn mean_shift_step(candidates: &CandidateSet, config: &MeanShiftConfig, x: Point3) -> Option<f64> {
    CandidateIndex::build(candidates, config)
        .shifted_mean(x)
        .map(|(m, _)| (m - x).norm())
}

/// Iterates of one trajectory from `start`, `start` included, under the same
/// stopping rule as [`mean_shift_mode`].
pub fn mean_shift_trajectory(candidates: &CandidateSet, config: &MeanShiftConfig, start: Point3) -> Vec<Point3> {
    let index = CandidateIndex::build(candidates, config);
    let mut path = vec![start];
    let mut x = start;
    while path.len() <= config.max_iterations {
        let Some((next, _)) = index.shifted_mean(x) else {
            break;
        };
        path.push(next);
        let shift = (next - x).norm();
        x = next;
        if shift < config.shift_tolerance {
            break;
        }
    }
    path
}

/// Clusters `p_i + offsets[j][i]` for every keypoint `j`, weighted by the
/// problem's per-point weights. Outcomes are per keypoint; a keypoint whose
/// offset row is empty reports `DegenerateProblem`.
pub fn cluster_keypoints_each(
    problem: &VectorVoteProblem,
    offsets: &[Vec<Vec3>],
    config: &MeanShiftConfig,
    exec: Exec,
) -> Result<Vec<Result<MeanShiftMode>>> {
    config.validate()?;
    let m = problem.point_count();
    if offsets.len() != problem.keypoint_count() {
        return Err(Error::Shape(format!(
            "{} offset rows for {} keypoints",
            offsets.len(),
            problem.keypoint_count()
        )));
    }
    if let Some((j, row)) = offsets
        .iter()
        .enumerate()
        .find(|(_, r)| !r.is_empty() && r.len() != m)
    {
        return Err(Error::Shape(format!(
            "offset row {j} has {} entries, expected {m}",
            row.len()
        )));
    }
    // Seeds are the inner parallel loop; keypoints stay sequential.
    Ok(offsets
        .iter()
        .enumerate()
        .map(|(j, row)| {
            if row.is_empty() {
                return Err(Error::degenerate("no candidates").at_keypoint(j));
            }
            let candidates = problem
                .points()
                .iter()
                .zip(row)
                .map(|(p, o)| *p + *o)
                .collect();
            CandidateSet::new(candidates, problem.weights().to_vec())
                .and_then(|set| mean_shift_mode(&set, config, exec))
                .map_err(|e| e.at_keypoint(j))
        })
        .collect())
}

/// Mode positions for every keypoint; fails on the first degenerate keypoint.
pub fn cluster_all_keypoints(
    problem: &VectorVoteProblem,
    offsets: &[Vec<Vec3>],
    config: &MeanShiftConfig,
    exec: Exec,
) -> Result<Vec<Point3>> {
    cluster_keypoints_each(problem, offsets, config, exec)?
        .into_iter()
        .map(|r| r.map(|m| m.mode))
        .collect()
}
