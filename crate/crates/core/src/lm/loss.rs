//! Focal loss and its gradient with respect to the logits.

use ndarray::Array1;

use crate::error::{Error, Result};

/// Lower clamp applied to `p_y` before taking the logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FocalConfig {
    pub alpha: f64,
    pub gamma: f64,
}

impl Default for FocalConfig {
    fn default() -> Self {
        Self {
            alpha: 0.25,
            gamma: 2.0,
        }
    }
}

fn check_probabilities(p: &[f64], y: usize) -> Result<()> {
    if y >= p.len() {
        return Err(Error::invalid(format!(
            "label {y} out of range for {} classes",
            p.len()
        )));
    }
    if p.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0 + SUM_TOLERANCE) {
        return Err(Error::invalid("probabilities must lie in [0, 1]"));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > SUM_TOLERANCE {
        return Err(Error::invalid(format!("probabilities sum to {total}, not 1")));
    }
    Ok(())
}

/// `−α (1 − p_y)^γ ln p_y` with `p_y` clamped to `[1e-12, 1]`.
pub fn focal_loss(p: &[f64], y: usize, alpha: f64, gamma: f64) -> Result<f64> {
    check_probabilities(p, y)?;
    let py = p[y].clamp(PROB_FLOOR, 1.0);
    Ok(-alpha * (1.0 - py).powf(gamma) * py.ln())
}

/// Derivative of [`focal_loss`] with respect to `p_y`.
fn dloss_dpy(py: f64, alpha: f64, gamma: f64) -> f64 {
    let q = 1.0 - py;
    let pull = if q > 0.0 && gamma != 0.0 {
        alpha * gamma * q.powf(gamma - 1.0) * py.ln()
    } else {
        0.0
    };
    pull - alpha * q.powf(gamma) / py
}

/// Gradient of the focal loss of `softmax(logits)` with respect to the
/// logits. Returns the loss alongside.
pub fn focal_loss_with_grad(probs: &[f64], y: usize, cfg: FocalConfig) -> Result<(f64, Array1<f64>)> {
    let loss = focal_loss(probs, y, cfg.alpha, cfg.gamma)?;
    let py = probs[y];
    if py < PROB_FLOOR {
        return Ok((loss, Array1::zeros(probs.len())));
    }
    let g = dloss_dpy(py, cfg.alpha, cfg.gamma);
    let grad = Array1::from_shape_fn(probs.len(), |k| {
        let delta = if k == y { 1.0 } else { 0.0 };
        g * py * (delta - probs[k])
    });
    Ok((loss, grad))
}
