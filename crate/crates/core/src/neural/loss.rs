//! Training objectives and their gradients with respect to head logits.

use serde::{Deserialize, Serialize};

use super::NeuralError;

/// Probabilities are clamped into `[PROB_FLOOR, 1 - PROB_FLOOR]` before `ln`.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LossKind {
    /// Binary cross-entropy with positives weighted by `1 - positive_rate`
    /// and negatives by `positive_rate`.
    WeightedCrossEntropy { positive_rate: f64 },
    MeanSquaredError,
}

impl LossKind {
    pub fn validate(&self) -> Result<(), NeuralError> {
        if let LossKind::WeightedCrossEntropy { positive_rate } = *self {
            if !(positive_rate > 0.0 && positive_rate < 1.0) {
                return Err(NeuralError::InvalidConfig(format!("positive rate {positive_rate} outside (0, 1)")));
            }
        }
        Ok(())
    }
}

/// `-(1/n) sum [(1-p) y ln o + p (1-y) ln(1-o)]` over positive-class
/// probabilities `o`.
pub fn weighted_cross_entropy(probs: &[f64], targets: &[bool], positive_rate: f64) -> Result<f64, NeuralError> {
    LossKind::WeightedCrossEntropy { positive_rate }.validate()?;
    if probs.len() != targets.len() {
        return Err(NeuralError::Shape(format!("{} probabilities for {} targets", probs.len(), targets.len())));
    }
    if probs.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = probs
        .iter()
        .zip(targets)
        .map(|(&o, &y)| {
            let o = o.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
            if y {
                (1.0 - positive_rate) * o.ln()
            } else {
                positive_rate * (1.0 - o).ln()
            }
        })
        .sum();
    Ok(-sum / probs.len() as f64)
}

/// Gradient of one step's weighted cross-entropy term with respect to the two
/// logits `(z_neg, z_pos)`, already divided by `steps`.
pub fn weighted_cross_entropy_grad(prob_pos: f64, target: bool, positive_rate: f64, steps: usize) -> [f64; 2] {
    let (a, b) = if target { (1.0 - positive_rate, 0.0) } else { (0.0, positive_rate) };
    let d_pos = -(a * (1.0 - prob_pos) - b * prob_pos) / steps as f64;
    [-d_pos, d_pos]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquaredError {
    pub mse: f64,
    pub rmse: f64,
}

/// Mean over steps and components of squared residuals.
pub fn mean_squared_error(outputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<SquaredError, NeuralError> {
    if outputs.len() != targets.len() {
        return Err(NeuralError::Shape(format!("{} outputs for {} targets", outputs.len(), targets.len())));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (o, y) in outputs.iter().zip(targets) {
        if o.len() != y.len() {
            return Err(NeuralError::Shape(format!("output width {} vs target width {}", o.len(), y.len())));
        }
        sum += o.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        n += o.len();
    }
    let mse = if n == 0 { 0.0 } else { sum / n as f64 };
    Ok(SquaredError { mse, rmse: mse.sqrt() })
}
