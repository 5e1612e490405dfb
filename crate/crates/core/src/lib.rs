//! Closed-form keypoint voting from per-point direction fields, with the
//! MeanShift baseline, rigid pose fitting, pose metrics, synthetic scenes and
//! an experiment harness comparing the two voting schemes.

// `!(x > 0.0)` guards also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod exec;
pub mod experiment;
pub mod fusion;
pub mod geom;
pub mod losses;
pub mod meanshift;
pub mod metrics;
pub mod oracle;
pub mod posefit;
pub mod report;
pub mod selftest;
pub mod synth;
pub mod voting;

pub use error::{Error, Result};
pub use exec::Exec;
pub use experiment::{run_experiment, run_sweep, Algorithm, ExperimentConfig, TrialReport};
pub use geom::{pseudoinverse_3x3, Mat3, Point3, PointCloud, RigidTransform, UnitVector3, Vec3};
pub use meanshift::{cluster_all_keypoints, MeanShiftConfig};
pub use metrics::{add_0_1d_accuracy, add_metric, add_s_metric, auc, ObjectModel};
pub use report::{emit_report, summarize, ReportFormat, ReportTable};
pub use posefit::{estimate_pose, fit_rigid_transform, CorrespondenceSet};
pub use synth::{generate_scene, SceneConfig, SyntheticScene};
pub use voting::{vote_all_keypoints, Frame, KeypointEstimate, KeypointSet, VectorVoteProblem};
