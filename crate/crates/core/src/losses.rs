//! Training-time supervision terms as scalar functions with analytic gradients:
//! focal segmentation loss, L1 keypoint-direction loss, the confidence-weighted
//! vector-field loss and their weighted total.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{UnitVector3, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub lambda_seg: f64,
    pub lambda_vecf: f64,
    /// Weight of the `−log c` confidence regularizer.
    pub w_balance: f64,
    pub focal_gamma: f64,
    pub focal_alpha: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda_seg: 1.0,
            lambda_vecf: 1.0,
            w_balance: 0.015,
            focal_gamma: 2.0,
            focal_alpha: 0.25,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.lambda_seg,
            self.lambda_vecf,
            self.w_balance,
            self.focal_gamma,
            self.focal_alpha,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("loss parameters must be finite".into()));
        }
        if self.w_balance <= 0.0 {
            return Err(Error::Config("w_balance must be positive".into()));
        }
        if self.focal_gamma < 0.0 {
            return Err(Error::Config("focal_gamma must be non-negative".into()));
        }
        if !(self.focal_alpha > 0.0 && self.focal_alpha <= 1.0) {
            return Err(Error::Config("focal_alpha must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Focal loss `−α (1 − p_t)^γ ln p_t` with `p_t = p` for positives and `1 − p`
/// otherwise. Returns the loss and `d loss / d p`.
pub fn focal_loss(predicted_prob: f64, is_positive: bool, config: &LossConfig) -> Result<(f64, f64)> {
    if !(predicted_prob > 0.0 && predicted_prob < 1.0) {
        return Err(Error::Domain(format!(
            "probability {predicted_prob} outside (0, 1)"
        )));
    }
    let alpha = config.focal_alpha;
    let gamma = config.focal_gamma;
    let (pt, dpt_dp) = if is_positive {
        (predicted_prob, 1.0)
    } else {
        (1.0 - predicted_prob, -1.0)
    };
    let q = 1.0 - pt;
    let log_pt = pt.ln();
    let loss = -alpha * q.powf(gamma) * log_pt;
    // d/dpt [ q^γ ln pt ] = −γ q^(γ−1) ln pt + q^γ / pt
    let modulating_grad = if gamma == 0.0 {
        0.0
    } else {
        -gamma * q.powf(gamma - 1.0) * log_pt
    };
    let dloss_dpt = -alpha * (modulating_grad + q.powf(gamma) / pt);
    Ok((loss, dloss_dpt * dpt_dp))
}

/// `Σ_k |predicted_k − target_k|` and its (sub)gradient with respect to
/// `predicted` (zero at kinks).
pub fn kps_l1_loss(predicted: UnitVector3, target: UnitVector3) -> (f64, Vec3) {
    l1_loss(predicted.as_vec(), target.as_vec())
}

pub(crate) fn l1_loss(predicted: Vec3, target: Vec3) -> (f64, Vec3) {
    let d = predicted - target;
    let sign = |x: f64| if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 };
    (
        d.x.abs() + d.y.abs() + d.z.abs(),
        Vec3::new(sign(d.x), sign(d.y), sign(d.z)),
    )
}

/// One point's vector-field supervision.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VecfSample {
    pub predicted_vector: UnitVector3,
    pub target_vector: UnitVector3,
    /// Predicted confidence `c_i ∈ (0, 1]`.
    pub confidence: f64,
}

/// `(1/M) Σ_i (l_i c_i − w ln c_i)` with `l_i` the L1 direction loss.
/// Returns the loss and `d loss / d c_i` for each sample.
pub fn vecf_loss(samples: &[VecfSample], config: &LossConfig) -> Result<(f64, Vec<f64>)> {
    let terms: Vec<f64> = samples
        .iter()
        .map(|s| kps_l1_loss(s.predicted_vector, s.target_vector).0)
        .collect();
    let confidences: Vec<f64> = samples.iter().map(|s| s.confidence).collect();
    vecf_loss_from_terms(&terms, &confidences, config)
}

/// Same as [`vecf_loss`] with the per-sample direction losses given directly.
pub fn vecf_loss_from_terms(
    direction_losses: &[f64],
    confidences: &[f64],
    config: &LossConfig,
) -> Result<(f64, Vec<f64>)> {
    let m = direction_losses.len();
    if m == 0 {
        return Err(Error::InvalidInput("no samples".into()));
    }
    if confidences.len() != m {
        return Err(Error::Shape(format!(
            "{m} losses for {} confidences",
            confidences.len()
        )));
    }
    if let Some(c) = confidences.iter().find(|c| !(**c > 0.0 && **c <= 1.0)) {
        return Err(Error::Domain(format!("confidence {c} outside (0, 1]")));
    }
    let w = config.w_balance;
    let inv_m = 1.0 / m as f64;
    let loss = direction_losses
        .iter()
        .zip(confidences)
        .map(|(l, c)| l * c - w * c.ln())
        .sum::<f64>()
        * inv_m;
    let grads = direction_losses
        .iter()
        .zip(confidences)
        .map(|(l, c)| (l - w / c) * inv_m)
        .collect();
    Ok((loss, grads))
}

/// `λ_seg · seg + λ_vecf · vecf`
pub fn total_loss(seg_loss: f64, vecf: f64, config: &LossConfig) -> f64 {
    config.lambda_seg * seg_loss + config.lambda_vecf * vecf
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(gamma: f64, alpha: f64) -> LossConfig {
        LossConfig {
            focal_gamma: gamma,
            focal_alpha: alpha,
            ..LossConfig::default()
        }
    }

    #[test]
    fn focal_examples() {
        let (l, _) = focal_loss(0.9, true, &cfg(0.0, 1.0)).unwrap();
        assert!((l - 0.105_360_515_657_826_3).abs() < 1e-12);
        let (l, _) = focal_loss(0.9, true, &cfg(2.0, 1.0)).unwrap();
        assert!((l - 0.01 * 0.105_360_515_657_826_3).abs() < 1e-12);
        let (l, _) = focal_loss(1.0 - 1e-12, true, &cfg(2.0, 0.25)).unwrap();
        assert!(l < 1e-30);
        assert!(matches!(focal_loss(1.0, true, &cfg(2.0, 0.25)), Err(Error::Domain(_))));
        assert!(matches!(focal_loss(0.0, false, &cfg(2.0, 0.25)), Err(Error::Domain(_))));
    }

    #[test]
    fn focal_negative_uses_complement() {
        let (pos, _) = focal_loss(0.3, false, &cfg(0.0, 1.0)).unwrap();
        assert!((pos + (0.7f64).ln()).abs() < 1e-15);
    }

    #[test]
    fn l1_examples() {
        let x = UnitVector3::new(1.0, 0.0, 0.0).unwrap();
        let y = UnitVector3::new(0.0, 1.0, 0.0).unwrap();
        assert_eq!(kps_l1_loss(x, x).0, 0.0);
        assert_eq!(kps_l1_loss(x, x).1, Vec3::ZERO);
        assert_eq!(kps_l1_loss(x, y).0, 2.0);
    }

    #[test]
    fn vecf_examples() {
        let c = LossConfig::default();
        let v = UnitVector3::new(0.0, 0.0, 1.0).unwrap();
        let s = VecfSample {
            predicted_vector: v,
            target_vector: v,
            confidence: 1.0,
        };
        assert_eq!(vecf_loss(&[s], &c).unwrap().0, 0.0);

        let (loss, grad) = vecf_loss_from_terms(&[0.03], &[0.5], &c).unwrap();
        assert!((loss - (0.015 - 0.015 * 0.5f64.ln())).abs() < 1e-15);
        assert!((loss - 0.025_397_207_708_399_2).abs() < 1e-12);
        assert!(grad[0].abs() < 1e-12);

        assert!(matches!(
            vecf_loss_from_terms(&[0.1], &[0.0], &c),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            vecf_loss_from_terms(&[0.1], &[1.5], &c),
            Err(Error::Domain(_))
        ));
        assert!(vecf_loss_from_terms(&[], &[], &c).is_err());
    }

    #[test]
    fn total_examples() {
        let c = LossConfig::default();
        assert_eq!(total_loss(0.0, 0.0, &c), 0.0);
        assert!((total_loss(0.2, 0.1, &c) - 0.3).abs() < 1e-15);
        let c2 = LossConfig {
            lambda_seg: 2.0,
            lambda_vecf: 0.5,
            ..c
        };
        assert!((total_loss(0.2, 0.1, &c2) - 0.45).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        assert!(LossConfig::default().validate().is_ok());
        assert!(cfg(-1.0, 0.5).validate().is_err());
        assert!(cfg(2.0, 0.0).validate().is_err());
        assert!(LossConfig { w_balance: 0.0, ..LossConfig::default() }.validate().is_err());
    }
}
