//! Evaluation scores for detectors and volume predictors.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub accuracy: f64,
    /// Positives weighted by `1 - p`, negatives by `p`, normalized.
    pub weighted: f64,
}

pub fn accuracy_metrics(predictions: &[bool], targets: &[bool], positive_rate: f64) -> Accuracy {
    assert_eq!(predictions.len(), targets.len(), "prediction/target length mismatch");
    let (mut correct, mut w_correct, mut w_total) = (0usize, 0.0, 0.0);
    for (&p, &y) in predictions.iter().zip(targets) {
        let w = if y { 1.0 - positive_rate } else { positive_rate };
        w_total += w;
        if p == y {
            correct += 1;
            w_correct += w;
        }
    }
    let n = predictions.len().max(1) as f64;
    Accuracy { accuracy: correct as f64 / n, weighted: if w_total > 0.0 { w_correct / w_total } else { 1.0 } }
}

pub fn rmse(residuals: &[f64]) -> f64 {
    if residuals.is_empty() {
        return 0.0;
    }
    (residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64).sqrt()
}

/// Sample skewness `m3 / m2^(3/2)`; zero for constant data.
pub fn skewness(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if values.len() < 3 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n;
    let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m3 = values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    if m2 <= 0.0 {
        0.0
    } else {
        m3 / m2.powf(1.5)
    }
}

/// Counts over `bins` equal-width bins spanning `[lo, hi]`; values outside are
/// clamped into the end bins.
pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<usize> {
    let mut out = vec![0; bins];
    if bins == 0 || !(hi > lo) {
        return out;
    }
    let width = (hi - lo) / bins as f64;
    for v in values {
        let k = ((v - lo) / width).floor().clamp(0.0, (bins - 1) as f64) as usize;
        out[k] += 1;
    }
    out
}
