//! Deterministic synthetic scenes with known ground truth.
//!
//! A scene is an object model sampled on its surface, keypoints chosen by
//! farthest-point sampling, a random pose, and per-point vector fields and
//! offsets toward every keypoint, corrupted by angular noise, gross outliers
//! and spherical-cap occlusion. Every random draw comes from a stream derived
//! from `(seed, purpose)`, so a scene depends on its config alone.

use std::f64::consts::{PI, TAU};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geom::{Mat3, Point3, PointCloud, RigidTransform, UnitVector3, Vec3};
use crate::metrics::ObjectModel;
use crate::voting::{Frame, KeypointSet, VectorVoteProblem};

/// Weight given to outlier points under [`WeightModel::Oracle`].
pub const ORACLE_OUTLIER_WEIGHT: f64 = 0.01;

/// Inlier angular noise is drawn from a normal truncated at this many σ.
pub const NOISE_TRUNCATION_SIGMAS: f64 = 3.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectShape {
    Sphere { radius: f64 },
    Box { size: [f64; 3] },
    Cylinder { radius: f64, height: f64 },
    /// ASCII point cloud, one `x y z` per line, meters.
    Loaded { path: PathBuf },
}

impl Default for ObjectShape {
    fn default() -> Self {
        ObjectShape::Box {
            size: [0.12, 0.09, 0.06],
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightModel {
    /// Every point weighs 1.
    Uniform,
    /// 1 for inliers, [`ORACLE_OUTLIER_WEIGHT`] for outliers.
    #[default]
    Oracle,
    /// Independent uniform draws in `[0.01, 1)`, blind to inlier status.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    /// Drives pose, surface sampling, occlusion, outliers, noise and weights.
    pub seed: u64,
    /// Drives the object model and its keypoints, so trials can share one object.
    pub model_seed: u64,
    pub point_count: usize,
    pub keypoint_count: usize,
    /// Points in the object model used for ADD / ADD-S and keypoint selection.
    pub model_point_count: usize,
    pub shape: ObjectShape,
    pub symmetric: bool,
    pub angular_noise_deg: f64,
    pub outlier_fraction: f64,
    pub occlusion_fraction: f64,
    pub weight_model: WeightModel,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            seed: 0,
            model_seed: 0,
            point_count: 12_800,
            keypoint_count: 8,
            model_point_count: 2000,
            shape: ObjectShape::default(),
            symmetric: false,
            angular_noise_deg: 0.0,
            outlier_fraction: 0.0,
            occlusion_fraction: 0.0,
            weight_model: WeightModel::default(),
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.point_count == 0 || self.keypoint_count == 0 {
            return Err(Error::Config("point_count and keypoint_count must be ≥ 1".into()));
        }
        if self.keypoint_count > self.model_point_count {
            return Err(Error::Config("keypoint_count exceeds model_point_count".into()));
        }
        if !(self.angular_noise_deg >= 0.0 && self.angular_noise_deg.is_finite()) {
            return Err(Error::Config("angular_noise_deg must be ≥ 0".into()));
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return Err(Error::Config("outlier_fraction must lie in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.occlusion_fraction) {
            return Err(Error::Config("occlusion_fraction must lie in [0, 1)".into()));
        }
        let positive = |v: f64| v > 0.0 && v.is_finite();
        let ok = match &self.shape {
            ObjectShape::Sphere { radius } => positive(*radius),
            ObjectShape::Box { size } => size.iter().all(|s| positive(*s)),
            ObjectShape::Cylinder { radius, height } => positive(*radius) && positive(*height),
            ObjectShape::Loaded { .. } => true,
        };
        if !ok {
            return Err(Error::Config(format!("invalid shape dimensions {:?}", self.shape)));
        }
        Ok(())
    }

    /// Points surviving occlusion.
    pub fn visible_point_count(&self) -> usize {
        ((1.0 - self.occlusion_fraction) * self.point_count as f64).round() as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub config: SceneConfig,
    pub model: ObjectModel,
    pub model_keypoints: KeypointSet,
    pub truth_pose: RigidTransform,
    pub truth_keypoints_camera: KeypointSet,
    pub problem: VectorVoteProblem,
    /// `offsets[j][i]`: predicted translation from point `i` to keypoint `j`.
    pub offsets: Vec<Vec<Vec3>>,
    pub outlier_mask: Vec<bool>,
}

impl SyntheticScene {
    /// Structured-text dump (JSON) of every field.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene is always serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("scene dump: {e}")))
    }
}

/// Seed for an independent random stream, from `(master, index, purpose)`.
pub fn derive_seed(master: u64, index: u64, purpose: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(index.to_le_bytes());
    h.update(purpose.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

fn stream(seed: u64, purpose: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, 0, purpose))
}

/// Greedy farthest-point sampling starting at `start`. Ties go to the lower index.
pub fn farthest_point_indices(points: &[Point3], k: usize, start: usize) -> Vec<usize> {
    let n = points.len();
    let k = k.min(n);
    if k == 0 {
        return Vec::new();
    }
    let mut chosen = Vec::with_capacity(k);
    let mut nearest = vec![f64::INFINITY; n];
    let mut current = start;
    for _ in 0..k {
        chosen.push(current);
        let c = points[current];
        let mut best = (0usize, -1.0f64);
        for (i, (p, d)) in points.iter().zip(nearest.iter_mut()).enumerate() {
            let d2 = (*p - c).norm_squared();
            if d2 < *d {
                *d = d2;
            }
            if *d > best.1 {
                best = (i, *d);
            }
        }
        current = best.0;
    }
    chosen
}

/// Farthest-point sampling from a seeded random start.
pub fn farthest_point_sample(cloud: &PointCloud, k: usize, seed: u64) -> Result<KeypointSet> {
    if k > cloud.len() {
        return Err(Error::InvalidInput(format!(
            "cannot pick {k} points from a cloud of {}",
            cloud.len()
        )));
    }
    let start = stream(seed, "fps-start").random_range(0..cloud.len());
    let idx = farthest_point_indices(cloud.points(), k, start);
    Ok(KeypointSet::new(
        idx.into_iter().map(|i| cloud.points()[i]).collect(),
        Frame::Object,
    ))
}

/// Parses `x y z` lines; blank lines and lines starting with `#` are skipped.
pub fn parse_point_cloud(text: &str) -> Result<PointCloud> {
    let mut points = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::InvalidInput(format!(
                "line {}: expected 3 coordinates, found {}",
                n + 1,
                fields.len()
            )));
        }
        let mut xyz = [0.0; 3];
        for (slot, f) in xyz.iter_mut().zip(&fields) {
            *slot = f
                .parse()
                .map_err(|_| Error::InvalidInput(format!("line {}: bad number {f:?}", n + 1)))?;
        }
        points.push(Vec3::from_array(xyz));
    }
    PointCloud::new(points)
}

pub fn load_point_cloud(path: &Path) -> Result<PointCloud> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_point_cloud(&text)
}

/// Loads an object model; the diameter is computed on load.
pub fn load_object_model(path: &Path, symmetric: bool) -> Result<ObjectModel> {
    ObjectModel::new(load_point_cloud(path)?, symmetric)
}

fn unit_normal3(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        if let Some(u) = v.normalized() {
            return u;
        }
    }
}

fn sample_surface(shape: &ObjectShape, loaded: Option<&PointCloud>, n: usize, rng: &mut impl Rng) -> Vec<Point3> {
    match shape {
        ObjectShape::Sphere { radius } => (0..n).map(|_| unit_normal3(rng) * *radius).collect(),
        ObjectShape::Box { size } => {
            let h = size.map(|s| s / 2.0);
            // Face pairs normal to x, y, z with areas proportional to the other two extents.
            let areas = [size[1] * size[2], size[0] * size[2], size[0] * size[1]];
            let total: f64 = areas.iter().sum();
            (0..n)
                .map(|_| {
                    let pick = rng.random_range(0.0..total);
                    let axis = if pick < areas[0] {
                        0
                    } else if pick < areas[0] + areas[1] {
                        1
                    } else {
                        2
                    };
                    let mut p = Vec3::new(
                        rng.random_range(-h[0]..h[0]),
                        rng.random_range(-h[1]..h[1]),
                        rng.random_range(-h[2]..h[2]),
                    );
                    p[axis] = if rng.random_bool(0.5) { h[axis] } else { -h[axis] };
                    p
                })
                .collect()
        }
        ObjectShape::Cylinder { radius, height } => {
            let side = TAU * radius * height;
            let cap = PI * radius * radius;
            (0..n)
                .map(|_| {
                    let pick = rng.random_range(0.0..side + 2.0 * cap);
                    let phi = rng.random_range(0.0..TAU);
                    if pick < side {
                        let z = rng.random_range(-height / 2.0..height / 2.0);
                        Vec3::new(radius * phi.cos(), radius * phi.sin(), z)
                    } else {
                        let r = radius * rng.random::<f64>().sqrt();
                        let z = if pick < side + cap { height / 2.0 } else { -height / 2.0 };
                        Vec3::new(r * phi.cos(), r * phi.sin(), z)
                    }
                })
                .collect()
        }
        ObjectShape::Loaded { .. } => {
            let pts = loaded.expect("loaded cloud supplied").points();
            (0..n).map(|_| pts[rng.random_range(0..pts.len())]).collect()
        }
    }
}

/// Uniform rotation via a uniformly distributed unit quaternion.
pub fn uniform_rotation(rng: &mut impl Rng) -> Mat3 {
    let u1: f64 = rng.random();
    let u2: f64 = rng.random_range(0.0..TAU);
    let u3: f64 = rng.random_range(0.0..TAU);
    let a = (1.0 - u1).sqrt();
    let b = u1.sqrt();
    let q = [a * u2.sin(), a * u2.cos(), b * u3.sin(), b * u3.cos()];
    *RigidTransform::from_quaternion([q[3], q[0], q[1], q[2]], Vec3::ZERO)
        .expect("unit quaternion")
        .rotation()
}

/// Rotation uniform over SO(3), translation uniform in a 0.5 m cube centered
/// 1 m in front of the camera.
pub fn random_pose(rng: &mut impl Rng) -> RigidTransform {
    let r = uniform_rotation(rng);
    let t = Vec3::new(
        rng.random_range(-0.25..0.25),
        rng.random_range(-0.25..0.25),
        rng.random_range(0.75..1.25),
    );
    RigidTransform::new(r, t).expect("quaternion rotations are proper")
}

/// Rotates unit `v` by `angle` about a uniformly random axis perpendicular to it.
fn tilt(v: Vec3, angle: f64, rng: &mut impl Rng) -> Vec3 {
    if angle == 0.0 {
        return v;
    }
    let e1 = v.any_perpendicular();
    let e2 = v.cross(e1);
    let phi = rng.random_range(0.0..TAU);
    let axis = e1 * phi.cos() + e2 * phi.sin();
    // axis ⟂ v, so Rodrigues reduces to two terms.
    v * angle.cos() + axis.cross(v) * angle.sin()
}

fn truncated_abs_normal(sigma: f64, rng: &mut impl Rng) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    let normal = Normal::new(0.0, sigma).expect("finite σ");
    loop {
        let x: f64 = normal.sample(rng);
        if x.abs() <= NOISE_TRUNCATION_SIGMAS * sigma {
            return x.abs();
        }
    }
}

/// Object model and its object-frame keypoints; depends on `model_seed` and
/// the shape settings only.
pub fn generate_object(config: &SceneConfig) -> Result<(ObjectModel, KeypointSet)> {
    config.validate()?;
    let loaded = load_shape(&config.shape)?;
    object_from(config, loaded.as_ref())
}

fn load_shape(shape: &ObjectShape) -> Result<Option<PointCloud>> {
    match shape {
        ObjectShape::Loaded { path } => load_point_cloud(path).map(Some),
        _ => Ok(None),
    }
}

fn object_from(config: &SceneConfig, loaded: Option<&PointCloud>) -> Result<(ObjectModel, KeypointSet)> {
    let mut model_rng = stream(config.model_seed, "model");
    let model_points = match loaded {
        Some(cloud) if cloud.len() <= config.model_point_count => cloud.points().to_vec(),
        Some(cloud) => {
            let mut idx: Vec<usize> = (0..cloud.len()).collect();
            idx.shuffle(&mut model_rng);
            idx.truncate(config.model_point_count);
            idx.sort_unstable();
            idx.into_iter().map(|i| cloud.points()[i]).collect()
        }
        None => sample_surface(&config.shape, None, config.model_point_count, &mut model_rng),
    };
    let model = ObjectModel::new(PointCloud::new(model_points)?, config.symmetric)?;
    let keypoint_cloud = PointCloud::new(model.points().to_vec())?;
    let model_keypoints = farthest_point_sample(&keypoint_cloud, config.keypoint_count, derive_seed(config.model_seed, 0, "keypoints"))?;
    Ok((model, model_keypoints))
}

/// Generates a scene from its config alone.
pub fn generate_scene(config: &SceneConfig) -> Result<SyntheticScene> {
    config.validate()?;
    let loaded = load_shape(&config.shape)?;
    let (model, model_keypoints) = object_from(config, loaded.as_ref())?;
    let seed = config.seed;

    let truth_pose = random_pose(&mut stream(seed, "pose"));
    let truth_keypoints_camera = KeypointSet::new(
        model_keypoints.keypoints.iter().map(|k| truth_pose.apply(*k)).collect(),
        Frame::Camera,
    );

    // Observed surface, occluded by removing a spherical cap of the requested size.
    let surface = sample_surface(&config.shape, loaded.as_ref(), config.point_count, &mut stream(seed, "surface"));
    let keep = config.visible_point_count();
    if keep == 0 {
        return Err(Error::DegenerateScene(format!(
            "occlusion {} leaves no points out of {}",
            config.occlusion_fraction, config.point_count
        )));
    }
    let occluder = unit_normal3(&mut stream(seed, "occlusion"));
    let centroid = surface.iter().fold(Vec3::ZERO, |a, p| a + *p) * (1.0 / surface.len() as f64);
    let mut order: Vec<(f64, usize)> = surface
        .iter()
        .enumerate()
        .map(|(i, p)| ((*p - centroid).dot(occluder), i))
        .collect();
    // Lowest projections survive; the removed points form a cap around `occluder`.
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut visible: Vec<usize> = order[..keep].iter().map(|(_, i)| *i).collect();
    visible.sort_unstable();
    let points: Vec<Point3> = visible.iter().map(|i| truth_pose.apply(surface[*i])).collect();
    let m = points.len();

    let mut outlier_rng = stream(seed, "outliers");
    let outlier_count = (config.outlier_fraction * m as f64).round() as usize;
    let mut perm: Vec<usize> = (0..m).collect();
    perm.shuffle(&mut outlier_rng);
    let mut outlier_mask = vec![false; m];
    for &i in &perm[..outlier_count] {
        outlier_mask[i] = true;
    }

    let sigma = config.angular_noise_deg.to_radians();
    let mut noise_rng = stream(seed, "noise");
    let mut vector_fields = Vec::with_capacity(config.keypoint_count);
    let mut offsets = Vec::with_capacity(config.keypoint_count);
    for k in &truth_keypoints_camera.keypoints {
        let mut field = Vec::with_capacity(m);
        let mut offs = Vec::with_capacity(m);
        for (p, outlier) in points.iter().zip(&outlier_mask) {
            let to_k = *k - *p;
            let dist = to_k.norm();
            // A point sitting on the keypoint gets an arbitrary direction; its ray still hits k.
            let dir = to_k.normalized().unwrap_or(Vec3::new(0.0, 0.0, 1.0));
            let noisy = if *outlier {
                unit_normal3(&mut noise_rng)
            } else {
                let angle = truncated_abs_normal(sigma, &mut noise_rng);
                tilt(dir, angle, &mut noise_rng)
            };
            let unit = UnitVector3::from_vec(noisy)?;
            field.push(unit);
            offs.push(if *outlier || sigma > 0.0 { unit.as_vec() * dist } else { to_k });
        }
        vector_fields.push(field);
        offsets.push(offs);
    }

    let weights = match config.weight_model {
        WeightModel::Uniform => vec![1.0; m],
        WeightModel::Oracle => outlier_mask
            .iter()
            .map(|o| if *o { ORACLE_OUTLIER_WEIGHT } else { 1.0 })
            .collect(),
        WeightModel::Random => {
            let mut rng = stream(seed, "weights");
            (0..m).map(|_| rng.random_range(0.01..1.0)).collect()
        }
    };

    let problem = VectorVoteProblem::new(points, vector_fields, weights)?;
    Ok(SyntheticScene {
        config: config.clone(),
        model,
        model_keypoints,
        truth_pose,
        truth_keypoints_camera,
        problem,
        offsets,
        outlier_mask,
    })
}
