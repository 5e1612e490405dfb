//! Closed-form weighted vector-wise keypoint voting.
//!
//! Every scene point `p_i` casts a ray along its predicted unit direction `v_i`
//! toward keypoint `k`. The keypoint estimate minimizes the weighted sum of
//! squared perpendicular distances from `k` to all rays,
//!
//! ```text
//! D(k) = Σ_i c_i (p_i − k)ᵀ (I − v_i v_iᵀ) (p_i − k)
//! ```
//!
//! whose stationarity condition is the 3x3 normal system `A k = b` with
//! `A = Σ c_i (I − v_i v_iᵀ)` and `b = Σ c_i (I − v_i v_iᵀ) p_i`. The estimate is
//! `A⁺ b`, so rank-deficient geometry (all rays parallel) yields the
//! minimum-norm solution together with the detected rank instead of an error.
//!
//! There is no iteration: one pass over the points builds `A`, `b` and the
//! constant term of `D`, then one 3x3 pseudoinverse finishes the job.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::geom::{pseudoinverse_3x3, Mat3, Point3, PointCloud, UnitVector3, Vec3};

/// Point count from which accumulation switches to compensated summation.
pub const COMPENSATED_SUMMATION_THRESHOLD: usize = 10_000;

/// Points, one unit-vector field per keypoint, and shared per-point weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorVoteProblem {
    points: PointCloud,
    vector_fields: Vec<Vec<UnitVector3>>,
    weights: Vec<f64>,
}

impl VectorVoteProblem {
    /// `vector_fields[j][i]` is the direction from point `i` toward keypoint `j`.
    pub fn new(
        points: Vec<Point3>,
        vector_fields: Vec<Vec<UnitVector3>>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::degenerate("no points to vote with"));
        }
        let points = PointCloud::new(points)?;
        let m = points.len();
        if vector_fields.is_empty() {
            return Err(Error::Shape("at least one keypoint vector field is required".into()));
        }
        if let Some((j, row)) = vector_fields.iter().enumerate().find(|(_, r)| r.len() != m) {
            return Err(Error::Shape(format!(
                "vector field {j} has {} entries, expected {m}",
                row.len()
            )));
        }
        validate_weights(&weights, m)?;
        Ok(VectorVoteProblem {
            points,
            vector_fields,
            weights,
        })
    }

    pub fn points(&self) -> &[Point3] {
        self.points.points()
    }

    pub fn point_cloud(&self) -> &PointCloud {
        &self.points
    }

    pub fn vector_field(&self, keypoint: usize) -> &[UnitVector3] {
        &self.vector_fields[keypoint]
    }

    pub fn vector_fields(&self) -> &[Vec<UnitVector3>] {
        &self.vector_fields
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn keypoint_count(&self) -> usize {
        self.vector_fields.len()
    }

    pub fn point_count(&self) -> usize {
        self.points.len()
    }

    /// Same geometry with every weight replaced.
    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        validate_weights(&weights, self.point_count())?;
        Ok(VectorVoteProblem {
            points: self.points.clone(),
            vector_fields: self.vector_fields.clone(),
            weights,
        })
    }
}

fn validate_weights(weights: &[f64], m: usize) -> Result<()> {
    if weights.len() != m {
        return Err(Error::Shape(format!(
            "{} weights for {m} points",
            weights.len()
        )));
    }
    if let Some(i) = weights.iter().position(|c| !(c.is_finite() && *c >= 0.0)) {
        return Err(Error::InvalidInput(format!(
            "weight {i} = {} is negative or non-finite",
            weights[i]
        )));
    }
    if !weights.iter().any(|c| *c > 0.0) {
        return Err(Error::degenerate("all weights are zero"));
    }
    Ok(())
}

/// Which frame a keypoint set is expressed in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    Object,
    Camera,
}

/// Ordered keypoints; the order matches the vector-field rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeypointSet {
    pub keypoints: Vec<Point3>,
    pub frame: Frame,
}

impl KeypointSet {
    pub fn new(keypoints: Vec<Point3>, frame: Frame) -> Self {
        KeypointSet { keypoints, frame }
    }

    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }
}

/// The accumulated normal equations for one keypoint.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalSystem {
    /// `Σ c_i (I − v_i v_iᵀ)`, symmetric positive semidefinite.
    pub a: Mat3,
    /// `Σ c_i (I − v_i v_iᵀ) p_i`
    pub b: Vec3,
    /// `Σ c_i p_iᵀ (I − v_i v_iᵀ) p_i`, the constant term of `D`.
    pub constant: f64,
    /// `Σ c_i`
    pub weight_mass: f64,
}

/// Neumaier compensated sum.
#[derive(Clone, Copy, Default)]
struct CompensatedSum {
    sum: f64,
    correction: f64,
}

impl CompensatedSum {
    #[inline]
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.correction += (self.sum - t) + x;
        } else {
            self.correction += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(self) -> f64 {
        self.sum + self.correction
    }
}

// Layout: a00 a01 a02 a11 a12 a22 | b0 b1 b2 | constant | mass
const TERMS: usize = 11;

#[inline]
fn vote_terms(p: Point3, v: Vec3, c: f64) -> [f64; TERMS] {
    let vp = v.dot(p);
    // (I − v vᵀ) p = p − v (v·p)
    let proj = p - v * vp;
    [
        c * (1.0 - v.x * v.x),
        -c * v.x * v.y,
        -c * v.x * v.z,
        c * (1.0 - v.y * v.y),
        -c * v.y * v.z,
        c * (1.0 - v.z * v.z),
        c * proj.x,
        c * proj.y,
        c * proj.z,
        c * proj.dot(p),
        c,
    ]
}

fn assemble(t: [f64; TERMS]) -> NormalSystem {
    NormalSystem {
        a: Mat3([[t[0], t[1], t[2]], [t[1], t[3], t[4]], [t[2], t[4], t[5]]]),
        b: Vec3::new(t[6], t[7], t[8]),
        constant: t[9],
        weight_mass: t[10],
    }
}

impl NormalSystem {
    /// Single pass over `(point, direction, weight)` votes. Zero-weight votes
    /// are skipped outright.
    pub fn from_votes<I>(votes: I, compensated: bool) -> Result<Self>
    where
        I: IntoIterator<Item = (Point3, UnitVector3, f64)>,
    {
        let mut any_positive = false;
        let totals = if compensated {
            let mut acc = [CompensatedSum::default(); TERMS];
            for (p, v, c) in votes {
                if c == 0.0 {
                    continue;
                }
                any_positive = true;
                for (slot, x) in acc.iter_mut().zip(vote_terms(p, v.as_vec(), c)) {
                    slot.add(x);
                }
            }
            acc.map(CompensatedSum::value)
        } else {
            let mut acc = [0.0; TERMS];
            for (p, v, c) in votes {
                if c == 0.0 {
                    continue;
                }
                any_positive = true;
                for (slot, x) in acc.iter_mut().zip(vote_terms(p, v.as_vec(), c)) {
                    *slot += x;
                }
            }
            acc
        };
        if !any_positive {
            return Err(Error::degenerate("all weights are zero"));
        }
        Ok(assemble(totals))
    }

    /// `D(k)` evaluated from the accumulated moments (clamped at zero).
    pub fn objective(&self, k: Point3) -> f64 {
        (self.constant - 2.0 * k.dot(self.b) + k.dot(self.a * k)).max(0.0)
    }
}

/// Builds `A = Σ c_i (I − v_i v_iᵀ)` and `b = Σ c_i (I − v_i v_iᵀ) p_i`.
pub fn accumulate_normal_system(
    points: &[Point3],
    vectors: &[UnitVector3],
    weights: &[f64],
) -> Result<NormalSystem> {
    let m = points.len();
    if m == 0 {
        return Err(Error::degenerate("no points to vote with"));
    }
    if vectors.len() != m || weights.len() != m {
        return Err(Error::Shape(format!(
            "{m} points, {} vectors, {} weights",
            vectors.len(),
            weights.len()
        )));
    }
    if let Some(i) = weights.iter().position(|c| !(c.is_finite() && *c >= 0.0)) {
        return Err(Error::InvalidInput(format!(
            "weight {i} = {} is negative or non-finite",
            weights[i]
        )));
    }
    let votes = points
        .iter()
        .zip(vectors)
        .zip(weights)
        .map(|((p, v), c)| (*p, *v, *c));
    NormalSystem::from_votes(votes, m >= COMPENSATED_SUMMATION_THRESHOLD)
}

/// One localized keypoint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeypointEstimate {
    pub position: Point3,
    /// Numerical rank of `A`; below 3 means the rays did not pin down a point.
    pub normal_matrix_rank: usize,
    /// Objective value `D` at `position`.
    pub residual: f64,
    /// `Σ c_i`
    pub weight_mass: f64,
}

/// Solves `A k = b` with the Moore–Penrose pseudoinverse (`k = A⁺ b`).
pub fn solve_keypoint(system: &NormalSystem, rank_tolerance: f64) -> Result<KeypointEstimate> {
    if !system.a.is_finite() || !system.b.is_finite() || !system.constant.is_finite() {
        return Err(Error::InvalidInput("non-finite normal system".into()));
    }
    let (a_pinv, rank) = pseudoinverse_3x3(&system.a, rank_tolerance)?;
    let position = a_pinv * system.b;
    Ok(KeypointEstimate {
        position,
        normal_matrix_rank: rank,
        residual: system.objective(position),
        weight_mass: system.weight_mass,
    })
}

/// Localizes one keypoint from its vector field row.
pub fn vote_keypoint(
    problem: &VectorVoteProblem,
    keypoint: usize,
    rank_tolerance: f64,
) -> Result<KeypointEstimate> {
    accumulate_normal_system(
        problem.points(),
        problem.vector_field(keypoint),
        problem.weights(),
    )
    .and_then(|sys| solve_keypoint(&sys, rank_tolerance))
    .map_err(|e| e.at_keypoint(keypoint))
}

/// Per-keypoint outcomes in vector-field row order; one failing keypoint does
/// not prevent the others from being solved.
pub fn vote_keypoints_each(
    problem: &VectorVoteProblem,
    rank_tolerance: f64,
    exec: Exec,
) -> Vec<Result<KeypointEstimate>> {
    exec.map_range(problem.keypoint_count(), |j| {
        vote_keypoint(problem, j, rank_tolerance)
    })
}

/// Localizes all keypoints sequentially.
pub fn vote_all_keypoints(
    problem: &VectorVoteProblem,
    rank_tolerance: f64,
) -> Result<Vec<KeypointEstimate>> {
    vote_all_keypoints_with(problem, rank_tolerance, Exec::Sequential)
}

/// Localizes all keypoints under the given execution policy. Output is
/// identical for every policy.
pub fn vote_all_keypoints_with(
    problem: &VectorVoteProblem,
    rank_tolerance: f64,
    exec: Exec,
) -> Result<Vec<KeypointEstimate>> {
    vote_keypoints_each(problem, rank_tolerance, exec)
        .into_iter()
        .collect()
}
