use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gat::{Gradients, ModelParams};

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before the log.
pub const PROB_EPS: f64 = 1e-7;

/// Binary focal loss settings. The reduction is always a sum over nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Weight of the positive (Steiner) class; the negative class gets
    /// `1 - alpha`.
    pub alpha: f64,
    pub gamma: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha: 0.8,
            gamma: 2.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("focal alpha {} outside (0, 1)", self.alpha)));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::Config(format!("focal gamma {} is negative", self.gamma)));
        }
        Ok(())
    }
}

/// Summed binary focal loss and its derivative with respect to each
/// probability.
///
/// Positive nodes contribute `-α (1-p)^γ ln p`, negative nodes
/// `-(1-α) p^γ ln(1-p)`.
pub fn bfl_loss(probs: &[f64], labels: &[bool], cfg: &LossConfig) -> Result<(f64, Vec<f64>)> {
    if probs.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} probabilities for {} labels",
            probs.len(),
            labels.len()
        )));
    }
    let (alpha, gamma) = (cfg.alpha, cfg.gamma);
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(probs.len());
    for (&raw, &label) in probs.iter().zip(labels) {
        let p = raw.clamp(PROB_EPS, 1.0 - PROB_EPS);
        let inside = raw == p;
        let (loss, d) = if label {
            let q = 1.0 - p;
            let loss = -alpha * q.powf(gamma) * p.ln();
            let d = alpha * (gamma * q.powf(gamma - 1.0) * p.ln() - q.powf(gamma) / p);
            (loss, d)
        } else {
            let q = 1.0 - p;
            let loss = -(1.0 - alpha) * p.powf(gamma) * q.ln();
            let d = -(1.0 - alpha) * (gamma * p.powf(gamma - 1.0) * q.ln() - p.powf(gamma) / q);
            (loss, d)
        };
        total += loss;
        grad.push(if inside { d } else { 0.0 });
    }
    Ok((total, grad))
}

/// `lambda · Σ w²` over kernels, biases and attention vectors.
pub fn l2_penalty(params: &ModelParams, lambda: f64) -> (f64, Gradients) {
    let mut grads = Gradients::zeros_like(params);
    let mut loss = 0.0;
    for (w, g) in params.slices().into_iter().zip(grads.slices_mut()) {
        for (wi, gi) in w.iter().zip(g.iter_mut()) {
            loss += wi * wi;
            *gi = 2.0 * lambda * wi;
        }
    }
    (lambda * loss, grads)
}
