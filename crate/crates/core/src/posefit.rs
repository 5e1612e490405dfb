//! Rigid pose from keypoint correspondences (weighted Umeyama / Kabsch, no scale).

use crate::error::{Error, Result};
use crate::geom::{orthonormality_error, Mat3, Point3, RigidTransform, Vec3};
use crate::voting::{Frame, KeypointSet};

/// Relative cutoff on the model covariance's second singular value.
pub const COLLINEARITY_TOLERANCE: f64 = 1e-9;

/// Model-frame keypoints paired with camera-frame observations.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrespondenceSet {
    model_points: Vec<Point3>,
    observed_points: Vec<Point3>,
    weights: Vec<f64>,
}

impl CorrespondenceSet {
    pub fn new(
        model_points: Vec<Point3>,
        observed_points: Vec<Point3>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let k = model_points.len();
        if observed_points.len() != k || weights.len() != k {
            return Err(Error::Shape(format!(
                "{k} model points, {} observed points, {} weights",
                observed_points.len(),
                weights.len()
            )));
        }
        if k < 3 {
            return Err(Error::TooFewCorrespondences(k));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidInput("negative or non-finite weight".into()));
        }
        let active = weights.iter().filter(|w| **w > 0.0).count();
        if active < 3 {
            return Err(Error::TooFewCorrespondences(active));
        }
        let finite = |pts: &[Point3], w: &[f64]| pts.iter().zip(w).all(|(p, w)| *w == 0.0 || p.is_finite());
        if !finite(&model_points, &weights) || !finite(&observed_points, &weights) {
            return Err(Error::InvalidInput("non-finite correspondence".into()));
        }
        Ok(CorrespondenceSet {
            model_points,
            observed_points,
            weights,
        })
    }

    pub fn unweighted(model_points: Vec<Point3>, observed_points: Vec<Point3>) -> Result<Self> {
        let n = model_points.len();
        Self::new(model_points, observed_points, vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.model_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.model_points.is_empty()
    }

    fn active(&self) -> impl Iterator<Item = (Point3, Point3, f64)> + '_ {
        self.model_points
            .iter()
            .zip(&self.observed_points)
            .zip(&self.weights)
            .filter(|(_, w)| **w > 0.0)
            .map(|((m, o), w)| (*m, *o, *w))
    }

    /// `Σ w ‖T·model − observed‖²`
    pub fn weighted_sse(&self, t: &RigidTransform) -> f64 {
        self.active()
            .map(|(m, o, w)| w * (t.apply(m) - o).norm_squared())
            .sum()
    }

    fn weight_mass(&self) -> f64 {
        self.active().map(|(_, _, w)| w).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidFit {
    pub transform: RigidTransform,
    /// `sqrt(Σ w‖T·k* − k‖² / Σ w)`
    pub rms_residual: f64,
}

/// Least-squares rigid transform taking model points onto observed points.
///
/// Centroids and cross-covariance are weighted; the rotation comes from the
/// SVD of the covariance with the smallest singular direction flipped when
/// needed, so the result is always a proper rotation.
pub fn fit_rigid_transform(corr: &CorrespondenceSet) -> Result<RigidFit> {
    let mass = corr.weight_mass();
    let inv = 1.0 / mass;
    let (model_sum, obs_sum) = corr
        .active()
        .fold((Vec3::ZERO, Vec3::ZERO), |(a, b), (m, o, w)| (a + m * w, b + o * w));
    let model_c = model_sum * inv;
    let obs_c = obs_sum * inv;

    let mut cross = Mat3::ZERO;
    let mut model_cov = Mat3::ZERO;
    for (m, o, w) in corr.active() {
        let dm = m - model_c;
        let d_o = o - obs_c;
        cross = cross + Mat3::outer(d_o, dm).scale(w);
        model_cov = model_cov + Mat3::outer(dm, dm).scale(w);
    }

    let s = model_cov.svd().singular_values;
    if !(s[1] > COLLINEARITY_TOLERANCE * s[0]) {
        return Err(Error::DegenerateGeometry(format!(
            "model points are collinear or coincident (σ = {s:?})"
        )));
    }

    let svd = cross.svd();
    let d = (svd.u.determinant() * svd.v.determinant()).signum();
    let rotation = svd.u * Mat3::diag(1.0, 1.0, d) * svd.v.transpose();
    let rotation = if orthonormality_error(&rotation) > 1e-12 {
        rotation.nearest_rotation()
    } else {
        rotation
    };
    let translation = obs_c - rotation * model_c;
    let transform = RigidTransform::new(rotation, translation)?;
    let rms_residual = (corr.weighted_sse(&transform) * inv).sqrt();
    Ok(RigidFit {
        transform,
        rms_residual,
    })
}

/// Pose from predicted camera-frame keypoints and their model-frame
/// counterparts. `weights = None` fits unweighted.
pub fn estimate_pose(
    predicted: &KeypointSet,
    model: &KeypointSet,
    weights: Option<&[f64]>,
) -> Result<RigidTransform> {
    if predicted.frame != Frame::Camera || model.frame != Frame::Object {
        return Err(Error::InvalidInput(
            "expected camera-frame predictions and object-frame model keypoints".into(),
        ));
    }
    let k = predicted.len();
    let w = match weights {
        Some(w) => w.to_vec(),
        None => vec![1.0; k],
    };
    let corr = CorrespondenceSet::new(model.keypoints.clone(), predicted.keypoints.clone(), w)?;
    fit_rigid_transform(&corr).map(|f| f.transform)
}
