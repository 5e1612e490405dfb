//! Pose accuracy metrics: ADD, ADD-S, accuracy-threshold AUC, ADD-0.1d and
//! keypoint RMSE.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::geom::{Point3, PointCloud, RigidTransform};
use crate::voting::KeypointSet;

/// Largest model for which the diameter is computed exactly.
pub const EXACT_DIAMETER_LIMIT: usize = 5000;

/// Largest model for which ADD-S uses the quadratic scan.
pub const BRUTE_FORCE_ADD_S_LIMIT: usize = 2048;

/// Default AUC ceiling in meters.
pub const DEFAULT_AUC_MAX_THRESHOLD: f64 = 0.10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectModel {
    points: PointCloud,
    diameter: f64,
    symmetric: bool,
}

impl ObjectModel {
    /// Computes the diameter from the points.
    pub fn new(points: PointCloud, symmetric: bool) -> Result<Self> {
        let diameter = cloud_diameter(points.points());
        if !(diameter > 0.0) {
            return Err(Error::InvalidModel("model has zero diameter".into()));
        }
        Ok(ObjectModel {
            points,
            diameter,
            symmetric,
        })
    }

    /// Uses a supplied diameter, checked against the points when the model is
    /// small enough to do so exactly.
    pub fn with_diameter(points: PointCloud, diameter: f64, symmetric: bool) -> Result<Self> {
        if !(diameter > 0.0 && diameter.is_finite()) {
            return Err(Error::InvalidModel(format!("diameter {diameter} must be positive")));
        }
        if points.len() <= EXACT_DIAMETER_LIMIT {
            let exact = cloud_diameter(points.points());
            if (exact - diameter).abs() > 1e-9 {
                return Err(Error::InvalidModel(format!(
                    "diameter {diameter} disagrees with max pairwise distance {exact}"
                )));
            }
        }
        Ok(ObjectModel {
            points,
            diameter,
            symmetric,
        })
    }

    pub fn points(&self) -> &[Point3] {
        self.points.points()
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Maximum pairwise distance; exact up to [`EXACT_DIAMETER_LIMIT`] points,
/// otherwise a lower bound from repeated farthest-point sweeps.
pub fn cloud_diameter(points: &[Point3]) -> f64 {
    let n = points.len();
    if n <= EXACT_DIAMETER_LIMIT {
        let mut best2 = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                best2 = best2.max((points[i] - points[j]).norm_squared());
            }
        }
        return best2.sqrt();
    }
    let farthest_from = |q: Point3| {
        points
            .iter()
            .enumerate()
            .map(|(i, p)| (i, (*p - q).norm_squared()))
            .fold((0, -1.0), |a, b| if b.1 > a.1 { b } else { a })
    };
    let mut best2 = 0.0f64;
    let starts = 16.min(n);
    for s in 0..starts {
        let mut current = points[s * n / starts];
        for _ in 0..3 {
            let (i, d2) = farthest_from(current);
            best2 = best2.max(d2);
            current = points[i];
        }
    }
    best2.sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseError {
    pub add: f64,
    pub add_s: f64,
    pub keypoint_rmse: f64,
}

/// ADD: `(1/N) Σ_p ‖(R p + t) − (R* p + t*)‖`.
pub fn add_metric(model: &ObjectModel, estimated: &RigidTransform, truth: &RigidTransform) -> Result<f64> {
    let pts = model.points();
    if pts.is_empty() {
        return Err(Error::InvalidModel("empty model".into()));
    }
    let sum: f64 = pts
        .iter()
        .map(|p| estimated.apply(*p).distance(truth.apply(*p)))
        .sum();
    Ok(sum / pts.len() as f64)
}

/// ADD-S: `(1/N) Σ_{p1} min_{p2} ‖(R p1 + t) − (R* p2 + t*)‖`.
pub fn add_s_metric(model: &ObjectModel, estimated: &RigidTransform, truth: &RigidTransform) -> Result<f64> {
    add_s_metric_with(model, estimated, truth, Exec::Sequential)
}

pub fn add_s_metric_with(
    model: &ObjectModel,
    estimated: &RigidTransform,
    truth: &RigidTransform,
    exec: Exec,
) -> Result<f64> {
    if model.len() <= BRUTE_FORCE_ADD_S_LIMIT {
        add_s_brute_force(model, estimated, truth, exec)
    } else {
        add_s_grid(model, estimated, truth, exec)
    }
}

fn transformed_pair(model: &ObjectModel, estimated: &RigidTransform, truth: &RigidTransform) -> Result<(Vec<Point3>, Vec<Point3>)> {
    let pts = model.points();
    if pts.is_empty() {
        return Err(Error::InvalidModel("empty model".into()));
    }
    Ok((
        pts.iter().map(|p| estimated.apply(*p)).collect(),
        pts.iter().map(|p| truth.apply(*p)).collect(),
    ))
}

/// Quadratic closest-point scan.
pub fn add_s_brute_force(
    model: &ObjectModel,
    estimated: &RigidTransform,
    truth: &RigidTransform,
    exec: Exec,
) -> Result<f64> {
    let (est, tru) = transformed_pair(model, estimated, truth)?;
    let nearest = exec.map_slice(&est, |q| {
        tru.iter()
            .map(|p| (*p - *q).norm_squared())
            .fold(f64::INFINITY, f64::min)
            .sqrt()
    });
    Ok(nearest.iter().sum::<f64>() / est.len() as f64)
}

/// Closest-point search on a uniform grid with expanding shells; exact.
pub fn add_s_grid(
    model: &ObjectModel,
    estimated: &RigidTransform,
    truth: &RigidTransform,
    exec: Exec,
) -> Result<f64> {
    let (est, tru) = transformed_pair(model, estimated, truth)?;
    let grid = PointGrid::build(&tru);
    let nearest = exec.map_slice(&est, |q| grid.nearest_distance_squared(*q).sqrt());
    Ok(nearest.iter().sum::<f64>() / est.len() as f64)
}

struct PointGrid<'a> {
    points: &'a [Point3],
    origin: Point3,
    cell: f64,
    dims: [i64; 3],
    cells: HashMap<[i64; 3], Vec<usize>>,
}

impl<'a> PointGrid<'a> {
    fn build(points: &'a [Point3]) -> Self {
        let mut lo = points[0];
        let mut hi = points[0];
        for p in points {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let extent = (hi - lo).max_abs().max(f64::MIN_POSITIVE);
        // Roughly a handful of points per occupied cell on a surface sample.
        let cell = (extent / (points.len() as f64).sqrt().max(1.0)).max(extent * 1e-6);
        let dims = [0, 1, 2].map(|k| ((hi[k] - lo[k]) / cell).floor() as i64 + 1);
        let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key_of(lo, cell, *p)).or_default().push(i);
        }
        PointGrid {
            points,
            origin: lo,
            cell,
            dims,
            cells,
        }
    }

    fn key_of(origin: Point3, cell: f64, p: Point3) -> [i64; 3] {
        [0, 1, 2].map(|k| ((p[k] - origin[k]) / cell).floor() as i64)
    }

    fn nearest_distance_squared(&self, q: Point3) -> f64 {
        let c = Self::key_of(self.origin, self.cell, q);
        let mut best = f64::INFINITY;
        let max_ring = (0..3)
            .map(|k| (c[k]).abs().max((self.dims[k] - 1 - c[k]).abs()))
            .max()
            .unwrap_or(0);
        for r in 0..=max_ring {
            for dx in -r..=r {
                for dy in -r..=r {
                    for dz in -r..=r {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != r {
                            continue;
                        }
                        if let Some(idx) = self.cells.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                            for &i in idx {
                                best = best.min((self.points[i] - q).norm_squared());
                            }
                        }
                    }
                }
            }
            // Anything in ring r+1 or beyond is at least r cells away.
            let reach = r as f64 * self.cell;
            if best <= reach * reach {
                break;
            }
        }
        best
    }
}

fn validate_errors(errors: &[f64]) -> Result<()> {
    if errors.is_empty() {
        return Err(Error::InvalidInput("error list is empty".into()));
    }
    if errors.iter().any(|e| e.is_nan() || *e < 0.0) {
        return Err(Error::InvalidInput("errors must be non-negative".into()));
    }
    Ok(())
}

/// Area under accuracy(τ) = fraction of errors below τ for τ ∈ (0, max_threshold],
/// normalized to [0, 1]. Integrated exactly as a step function; infinite errors
/// (failed estimates) never count as accurate.
pub fn auc(errors: &[f64], max_threshold: f64) -> Result<f64> {
    validate_errors(errors)?;
    if !(max_threshold > 0.0 && max_threshold.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "max_threshold must be positive, got {max_threshold}"
        )));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    // accuracy is k/n on (e_(k), e_(k+1)]
    let mut area = 0.0;
    for (k, e) in sorted.iter().enumerate() {
        if *e >= max_threshold {
            break;
        }
        let next = sorted.get(k + 1).copied().unwrap_or(f64::INFINITY).min(max_threshold);
        area += (k + 1) as f64 / n * (next - e);
    }
    Ok((area / max_threshold).clamp(0.0, 1.0))
}

/// Fraction of errors strictly below 10% of the diameter.
pub fn add_0_1d_accuracy(errors: &[f64], diameter: f64) -> Result<f64> {
    validate_errors(errors)?;
    if !(diameter > 0.0 && diameter.is_finite()) {
        return Err(Error::InvalidInput(format!("diameter must be positive, got {diameter}")));
    }
    let threshold = diameter / 10.0;
    let hits = errors.iter().filter(|e| **e < threshold).count();
    Ok(hits as f64 / errors.len() as f64)
}

/// Root-mean-square Euclidean keypoint error, meters.
pub fn keypoint_rmse(estimated: &KeypointSet, truth: &KeypointSet) -> Result<f64> {
    keypoint_rmse_points(&estimated.keypoints, &truth.keypoints)
}

pub fn keypoint_rmse_points(estimated: &[Point3], truth: &[Point3]) -> Result<f64> {
    if estimated.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} estimated keypoints vs {} true keypoints",
            estimated.len(),
            truth.len()
        )));
    }
    if estimated.is_empty() {
        return Err(Error::InvalidInput("no keypoints".into()));
    }
    let sse: f64 = estimated
        .iter()
        .zip(truth)
        .map(|(a, b)| (*a - *b).norm_squared())
        .sum();
    Ok((sse / estimated.len() as f64).sqrt())
}

/// ADD, ADD-S and keypoint RMSE in one go.
pub fn pose_error(
    model: &ObjectModel,
    estimated: &RigidTransform,
    truth: &RigidTransform,
    estimated_keypoints: &[Point3],
    true_keypoints: &[Point3],
) -> Result<PoseError> {
    Ok(PoseError {
        add: add_metric(model, estimated, truth)?,
        add_s: add_s_metric(model, estimated, truth)?,
        keypoint_rmse: keypoint_rmse_points(estimated_keypoints, true_keypoints)?,
    })
}
