//! Seeded comparison of closed-form voting against the MeanShift baseline on
//! synthetic scenes, with per-trial accuracy and median-of-repetitions timing.

use std::fmt;
use std::hint::black_box;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::geom::{Point3, RigidTransform, DEFAULT_RANK_TOLERANCE};
use crate::meanshift::{cluster_keypoints_each, Kernel, MeanShiftConfig};
use crate::metrics::{add_metric, add_s_metric_with};
use crate::posefit::estimate_pose;
use crate::synth::{derive_seed, generate_object, generate_scene, SceneConfig, SyntheticScene};
use crate::voting::{vote_keypoints_each, Frame, KeypointSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Meanshift,
    Wvwv,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Meanshift => "meanshift",
            Algorithm::Wvwv => "wvwv",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "meanshift" => Ok(Algorithm::Meanshift),
            "wvwv" => Ok(Algorithm::Wvwv),
            other => Err(Error::InvalidInput(format!("unknown algorithm {other:?}"))),
        }
    }
}

/// MeanShift parameters with lengths expressed relative to the object diameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeanShiftSettings {
    pub bandwidth_fraction: f64,
    /// Merge radius as a fraction of the bandwidth.
    pub merge_fraction: f64,
    pub kernel: Kernel,
    pub max_iterations: usize,
    pub shift_tolerance: f64,
    pub max_seeds: usize,
    pub truncation: f64,
}

impl Default for MeanShiftSettings {
    fn default() -> Self {
        let base = MeanShiftConfig::for_diameter(1.0);
        MeanShiftSettings {
            bandwidth_fraction: MeanShiftConfig::DEFAULT_BANDWIDTH_FRACTION,
            merge_fraction: 0.5,
            kernel: base.kernel,
            max_iterations: base.max_iterations,
            shift_tolerance: base.shift_tolerance,
            max_seeds: base.max_seeds,
            truncation: base.truncation,
        }
    }
}

impl MeanShiftSettings {
    pub fn resolve(&self, diameter: f64) -> MeanShiftConfig {
        let bandwidth = self.bandwidth_fraction * diameter;
        MeanShiftConfig {
            bandwidth,
            kernel: self.kernel,
            max_iterations: self.max_iterations,
            shift_tolerance: self.shift_tolerance,
            merge_radius: self.merge_fraction * bandwidth,
            max_seeds: self.max_seeds,
            truncation: self.truncation,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub csv: Option<PathBuf>,
    pub structured: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Occlusion,
    Noise,
    Outliers,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::Occlusion => "occlusion",
            SweepAxis::Noise => "noise",
            SweepAxis::Outliers => "outliers",
        }
    }

    /// Scene config with this axis set to `level`.
    pub fn apply(self, scene: &SceneConfig, level: f64) -> SceneConfig {
        let mut s = scene.clone();
        match self {
            SweepAxis::Occlusion => s.occlusion_fraction = level,
            SweepAxis::Noise => s.angular_noise_deg = level,
            SweepAxis::Outliers => s.outlier_fraction = level,
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub levels: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            axis: SweepAxis::Occlusion,
            levels: vec![0.0, 0.2, 0.4, 0.6, 0.8],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub trials: usize,
    /// Timed repetitions per measurement; the median is reported.
    pub timing_repetitions: usize,
    pub algorithms: Vec<Algorithm>,
    pub rank_tolerance: f64,
    /// Policy for the inner data-parallel loops and, outside benchmark mode,
    /// for the trial loop.
    pub exec: Exec,
    /// Runs trials one at a time so that no other trial overlaps a timed region.
    pub benchmark_mode: bool,
    /// `seed` and `model_seed` are replaced per trial from `master_seed`.
    pub scene: SceneConfig,
    pub meanshift: MeanShiftSettings,
    pub sweep: SweepConfig,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            master_seed: 0,
            trials: 20,
            timing_repetitions: 5,
            algorithms: vec![Algorithm::Wvwv, Algorithm::Meanshift],
            rank_tolerance: DEFAULT_RANK_TOLERANCE,
            exec: Exec::Parallel,
            benchmark_mode: true,
            scene: SceneConfig::default(),
            meanshift: MeanShiftSettings::default(),
            sweep: SweepConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be ≥ 1".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Config("at least one algorithm is required".into()));
        }
        let mut algs = self.algorithms.clone();
        algs.sort();
        algs.dedup();
        if algs.len() != self.algorithms.len() {
            return Err(Error::Config("algorithms must not repeat".into()));
        }
        if self.timing_repetitions < 3 {
            return Err(Error::Config("timing_repetitions must be ≥ 3".into()));
        }
        if !(self.rank_tolerance > 0.0 && self.rank_tolerance.is_finite()) {
            return Err(Error::Config("rank_tolerance must be positive".into()));
        }
        if !(self.meanshift.bandwidth_fraction > 0.0 && self.meanshift.bandwidth_fraction.is_finite()) {
            return Err(Error::Config("meanshift.bandwidth_fraction must be positive".into()));
        }
        self.meanshift.resolve(1.0).validate()?;
        self.scene.validate()?;
        for level in &self.sweep.levels {
            self.sweep.axis.apply(&self.scene, *level).validate()?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, ignoring settings that cannot
    /// change any non-timing output (output paths, execution policy,
    /// benchmark mode).
    pub fn fingerprint(&self) -> String {
        let mut c = self.clone();
        c.output = OutputConfig::default();
        c.exec = Exec::default();
        c.benchmark_mode = true;
        let json = serde_json::to_vec(&c).expect("config is always serializable");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Scene settings used for one trial.
    pub fn trial_scene(&self, trial: usize) -> SceneConfig {
        SceneConfig {
            seed: derive_seed(self.master_seed, trial as u64, "scene"),
            model_seed: derive_seed(self.master_seed, 0, "model"),
            ..self.scene.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial: usize,
    pub algorithm: Algorithm,
    pub keypoint_rmse_m: Option<f64>,
    /// Euclidean error per keypoint, in keypoint order; empty when voting failed.
    pub keypoint_errors_m: Vec<f64>,
    pub add_m: Option<f64>,
    pub adds_m: Option<f64>,
    pub vote_time_ns: Option<u64>,
    pub fit_time_ns: Option<u64>,
    /// One character per keypoint: the normal-matrix rank for `wvwv`, `-` for
    /// `meanshift`, `x` where that keypoint failed. `degenerate` when the
    /// scene itself could not be generated.
    pub rank_flags: String,
    pub degenerate: bool,
    pub failure: Option<String>,
    pub estimated_pose: Option<RigidTransform>,
}

impl TrialReport {
    fn failed(trial: usize, algorithm: Algorithm, reason: String) -> Self {
        TrialReport {
            trial,
            algorithm,
            keypoint_rmse_m: None,
            keypoint_errors_m: Vec::new(),
            add_m: None,
            adds_m: None,
            vote_time_ns: None,
            fit_time_ns: None,
            rank_flags: "degenerate".into(),
            degenerate: true,
            failure: Some(reason),
            estimated_pose: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub fingerprint: String,
    pub object_diameter_m: f64,
    /// Sorted by trial, then algorithm name.
    pub reports: Vec<TrialReport>,
}

impl ExperimentOutcome {
    pub fn all_degenerate(&self) -> bool {
        self.reports.iter().all(|r| r.degenerate)
    }
}

/// Runs `f` `reps` times; returns the first result and the median wall time
/// in nanoseconds (at least 1).
pub fn time_median<T>(reps: usize, mut f: impl FnMut() -> T) -> (T, u64) {
    let mut times = Vec::with_capacity(reps);
    let mut first = None;
    for _ in 0..reps.max(1) {
        let start = Instant::now();
        let out = black_box(f());
        times.push(start.elapsed().as_nanos() as u64);
        if first.is_none() {
            first = Some(out);
        }
    }
    times.sort_unstable();
    (first.expect("at least one repetition"), times[times.len() / 2].max(1))
}

struct Localized {
    keypoints: Vec<Option<Point3>>,
    flags: String,
    failure: Option<String>,
}

fn localize(
    algorithm: Algorithm,
    scene: &SyntheticScene,
    config: &ExperimentConfig,
    meanshift: &MeanShiftConfig,
) -> Result<Localized> {
    let mut failure = None;
    let mut flags = String::new();
    let mut keypoints = Vec::new();
    match algorithm {
        Algorithm::Wvwv => {
            for r in vote_keypoints_each(&scene.problem, config.rank_tolerance, config.exec) {
                match r {
                    Ok(e) => {
                        flags.push(char::from_digit(e.normal_matrix_rank as u32, 10).unwrap_or('?'));
                        keypoints.push(Some(e.position));
                    }
                    Err(e) => {
                        flags.push('x');
                        keypoints.push(None);
                        failure.get_or_insert(e.to_string());
                    }
                }
            }
        }
        Algorithm::Meanshift => {
            for r in cluster_keypoints_each(&scene.problem, &scene.offsets, meanshift, config.exec)? {
                match r {
                    Ok(m) => {
                        flags.push('-');
                        keypoints.push(Some(m.mode));
                    }
                    Err(e) => {
                        flags.push('x');
                        keypoints.push(None);
                        failure.get_or_insert(e.to_string());
                    }
                }
            }
        }
    }
    Ok(Localized {
        keypoints,
        flags,
        failure,
    })
}

fn run_algorithm(
    trial: usize,
    algorithm: Algorithm,
    scene: &SyntheticScene,
    config: &ExperimentConfig,
    meanshift: &MeanShiftConfig,
) -> Result<TrialReport> {
    let (localized, vote_ns) = time_median(config.timing_repetitions, || {
        localize(algorithm, scene, config, meanshift)
    });
    let localized = localized?;
    let mut report = TrialReport {
        trial,
        algorithm,
        keypoint_rmse_m: None,
        keypoint_errors_m: Vec::new(),
        add_m: None,
        adds_m: None,
        vote_time_ns: Some(vote_ns),
        fit_time_ns: None,
        rank_flags: localized.flags,
        degenerate: false,
        failure: None,
        estimated_pose: None,
    };
    let Some(keypoints) = localized.keypoints.into_iter().collect::<Option<Vec<Point3>>>() else {
        report.degenerate = true;
        report.failure = localized.failure;
        return Ok(report);
    };
    let truth = &scene.truth_keypoints_camera.keypoints;
    report.keypoint_errors_m = keypoints.iter().zip(truth).map(|(e, t)| e.distance(*t)).collect();
    let sse: f64 = report.keypoint_errors_m.iter().map(|e| e * e).sum();
    report.keypoint_rmse_m = Some((sse / keypoints.len() as f64).sqrt());

    let predicted = KeypointSet::new(keypoints, Frame::Camera);
    let (pose, fit_ns) = time_median(config.timing_repetitions, || {
        estimate_pose(&predicted, &scene.model_keypoints, None)
    });
    match pose {
        Ok(pose) => {
            report.fit_time_ns = Some(fit_ns);
            report.add_m = Some(add_metric(&scene.model, &pose, &scene.truth_pose)?);
            report.adds_m = Some(add_s_metric_with(&scene.model, &pose, &scene.truth_pose, config.exec)?);
            report.estimated_pose = Some(pose);
        }
        Err(e) => {
            report.degenerate = true;
            report.failure = Some(e.to_string());
        }
    }
    Ok(report)
}

fn run_trial(config: &ExperimentConfig, trial: usize, meanshift: &MeanShiftConfig) -> Result<Vec<TrialReport>> {
    let scene = match generate_scene(&config.trial_scene(trial)) {
        Ok(s) => s,
        Err(e @ (Error::DegenerateScene(_) | Error::DegenerateProblem { .. })) => {
            return Ok(config
                .algorithms
                .iter()
                .map(|a| TrialReport::failed(trial, *a, e.to_string()))
                .collect());
        }
        Err(e) => return Err(e),
    };
    config
        .algorithms
        .iter()
        .map(|a| run_algorithm(trial, *a, &scene, config, meanshift))
        .collect()
}

/// Runs every trial and algorithm. Degenerate scenes and keypoints are
/// recorded in the reports; configuration and I/O problems are errors.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let (model, _) = generate_object(&config.trial_scene(0))?;
    let diameter = model.diameter();
    let meanshift = config.meanshift.resolve(diameter);
    let per_trial = if config.benchmark_mode {
        (0..config.trials).map(|t| run_trial(config, t, &meanshift)).collect::<Vec<_>>()
    } else {
        config.exec.map_range(config.trials, |t| run_trial(config, t, &meanshift))
    };
    let mut reports = Vec::with_capacity(config.trials * config.algorithms.len());
    for r in per_trial {
        reports.extend(r?);
    }
    reports.sort_by(|a, b| a.trial.cmp(&b.trial).then(a.algorithm.as_str().cmp(b.algorithm.as_str())));
    Ok(ExperimentOutcome {
        fingerprint: config.fingerprint(),
        object_diameter_m: diameter,
        reports,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepLevel {
    pub level: f64,
    pub outcome: ExperimentOutcome,
}

/// One experiment per level of `config.sweep`, all on the same trial seeds.
pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<SweepLevel>> {
    if config.sweep.levels.is_empty() {
        return Err(Error::Config("sweep.levels is empty".into()));
    }
    config.validate()?;
    config
        .sweep
        .levels
        .iter()
        .map(|level| {
            let cfg = ExperimentConfig {
                scene: config.sweep.axis.apply(&config.scene, *level),
                ..config.clone()
            };
            run_experiment(&cfg).map(|outcome| SweepLevel {
                level: *level,
                outcome,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            trials: 2,
            timing_repetitions: 3,
            scene: SceneConfig {
                point_count: 600,
                model_point_count: 300,
                ..SceneConfig::default()
            },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn noise_free_trial_recovers_pose() {
        let out = run_experiment(&ExperimentConfig { trials: 1, ..small() }).unwrap();
        assert_eq!(out.reports.len(), 2);
        assert_eq!(out.reports[0].algorithm, Algorithm::Meanshift);
        for r in &out.reports {
            assert!(!r.degenerate, "{r:?}");
            assert!(r.keypoint_rmse_m.unwrap() < 1e-6);
            assert!(r.add_m.unwrap() < 1e-6);
            assert!(r.vote_time_ns.unwrap() > 0 && r.fit_time_ns.unwrap() > 0);
        }
        assert_eq!(out.reports[1].rank_flags, "33333333");
        assert_eq!(out.reports[0].rank_flags, "--------");
    }

    #[test]
    fn invalid_configs_rejected() {
        for bad in [
            ExperimentConfig { trials: 0, ..small() },
            ExperimentConfig { algorithms: vec![], ..small() },
            ExperimentConfig { algorithms: vec![Algorithm::Wvwv, Algorithm::Wvwv], ..small() },
            ExperimentConfig { timing_repetitions: 2, ..small() },
        ] {
            assert!(matches!(run_experiment(&bad), Err(Error::Config(_))));
        }
    }

    #[test]
    fn fingerprint_ignores_paths_and_policy() {
        let a = small();
        let mut b = small();
        b.output.csv = Some("x.csv".into());
        b.exec = Exec::Sequential;
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint().len(), 64);
        b.master_seed = 1;
        assert_ne!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn degenerate_scene_is_recorded() {
        let cfg = ExperimentConfig {
            scene: SceneConfig {
                point_count: 1,
                occlusion_fraction: 0.9,
                ..small().scene
            },
            ..small()
        };
        let out = run_experiment(&cfg).unwrap();
        assert!(out.all_degenerate());
        assert!(out.reports.iter().all(|r| r.rank_flags == "degenerate"));
    }

    #[test]
    fn sweep_has_one_outcome_per_level() {
        let cfg = ExperimentConfig {
            trials: 1,
            algorithms: vec![Algorithm::Wvwv],
            ..small()
        };
        let levels = run_sweep(&cfg).unwrap();
        assert_eq!(levels.len(), 5);
        assert_eq!(levels[3].level, 0.6);
    }

    #[test]
    fn median_timing_returns_first_result() {
        let mut n = 0;
        let (first, ns) = time_median(5, || {
            n += 1;
            n
        });
        assert_eq!(first, 1);
        assert!(ns >= 1);
    }
}
