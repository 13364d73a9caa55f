//! Triangular-kernel smoothing of minute series.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SignalError {
    #[error("kernel half-width must be at least 1")]
    ZeroHalfWidth,
    #[error("smoothing needs at least one pass")]
    ZeroPasses,
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("time {t} outside a series of length {len}")]
    OutOfRange { t: usize, len: usize },
}

/// Symmetric triangular weights `w_k ∝ half_width + 1 - |k|`, summing to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingKernel {
    half_width: usize,
    passes: usize,
    weights: Vec<f64>,
}

impl Default for SmoothingKernel {
    fn default() -> Self {
        Self::triangular(10).expect("10 is a valid half-width")
    }
}

impl SmoothingKernel {
    pub fn triangular(half_width: usize) -> Result<Self, SignalError> {
        Self::with_passes(half_width, 1)
    }

    /// Kernel applied `passes` times in a row by [`smooth`].
    pub fn with_passes(half_width: usize, passes: usize) -> Result<Self, SignalError> {
        if half_width == 0 {
            return Err(SignalError::ZeroHalfWidth);
        }
        if passes == 0 {
            return Err(SignalError::ZeroPasses);
        }
        let h = half_width as f64;
        let total = (h + 1.0) * (h + 1.0);
        let weights = (0..=2 * half_width)
            .map(|i| (h + 1.0 - (i as f64 - h).abs()) / total)
            .collect();
        Ok(Self { half_width, passes, weights })
    }

    pub fn half_width(&self) -> usize {
        self.half_width
    }

    pub fn passes(&self) -> usize {
        self.passes
    }

    /// Weight at offset `k`, zero outside the support.
    pub fn weight(&self, k: isize) -> f64 {
        if k.unsigned_abs() > self.half_width {
            0.0
        } else {
            self.weights[(k + self.half_width as isize) as usize]
        }
    }

    /// Total weight on offsets `k <= 0`.
    pub fn causal_mass(&self) -> f64 {
        self.weights[..=self.half_width].iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CausalBoundary {
    /// Unseen future samples count as 0.
    DirichletZero,
    /// Unseen future samples repeat the last observation.
    NeumannHold,
}

fn check_finite(series: &[f64]) -> Result<(), SignalError> {
    match series.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(SignalError::NonFinite(i)),
        None => Ok(()),
    }
}

fn smooth_once(series: &[f64], kernel: &SmoothingKernel) -> Vec<f64> {
    let n = series.len() as isize;
    let hw = kernel.half_width as isize;
    (0..n)
        .map(|t| {
            let (mut acc, mut mass) = (0.0, 0.0);
            for k in -hw..=hw {
                let s = t + k;
                if (0..n).contains(&s) {
                    let w = kernel.weight(k);
                    acc += w * series[s as usize];
                    mass += w;
                }
            }
            acc / mass
        })
        .collect()
}

/// Acausal convolution; the kernel is truncated and renormalized at the ends.
pub fn smooth(series: &[f64], kernel: &SmoothingKernel) -> Result<Vec<f64>, SignalError> {
    check_finite(series)?;
    let mut out = series.to_vec();
    for _ in 0..kernel.passes {
        out = smooth_once(&out, kernel);
    }
    Ok(out)
}

/// Convolution over present samples only, renormalized by the weight of the
/// samples that exist. Positions whose whole window is missing stay missing.
pub fn smooth_with_gaps(series: &[Option<f64>], kernel: &SmoothingKernel) -> Result<Vec<Option<f64>>, SignalError> {
    if let Some(i) = series.iter().position(|x| x.is_some_and(|v| !v.is_finite())) {
        return Err(SignalError::NonFinite(i));
    }
    let mut out = series.to_vec();
    for _ in 0..kernel.passes {
        let n = out.len() as isize;
        let hw = kernel.half_width as isize;
        out = (0..n)
            .map(|t| {
                let (mut acc, mut mass) = (0.0, 0.0);
                for k in -hw..=hw {
                    let s = t + k;
                    if let Some(Some(x)) = (0..n).contains(&s).then(|| out[s as usize]) {
                        let w = kernel.weight(k);
                        acc += w * x;
                        mass += w;
                    }
                }
                (mass > 0.0).then(|| acc / mass)
            })
            .collect();
    }
    Ok(out)
}

/// Smoothed value at `t` seeing only `series[..=t]`. Samples after `t` are
/// substituted per `boundary`; samples before the start repeat the first one.
/// The kernel mass is not renormalized.
pub fn smooth_causal(
    series: &[f64],
    t: usize,
    kernel: &SmoothingKernel,
    boundary: CausalBoundary,
) -> Result<f64, SignalError> {
    if t >= series.len() {
        return Err(SignalError::OutOfRange { t, len: series.len() });
    }
    let prefix = &series[..=t];
    check_finite(prefix)?;
    let hw = kernel.half_width as isize;
    let t = t as isize;
    let mut acc = 0.0;
    for k in -hw..=hw {
        let s = t + k;
        let x = if s < 0 {
            prefix[0]
        } else if s <= t {
            prefix[s as usize]
        } else {
            match boundary {
                CausalBoundary::DirichletZero => 0.0,
                CausalBoundary::NeumannHold => prefix[t as usize],
            }
        };
        acc += kernel.weight(k) * x;
    }
    Ok(acc)
}

/// [`smooth_causal`] evaluated at every index, as a real-time filter would.
pub fn smooth_causal_series(
    series: &[f64],
    kernel: &SmoothingKernel,
    boundary: CausalBoundary,
) -> Result<Vec<f64>, SignalError> {
    check_finite(series)?;
    (0..series.len()).map(|t| smooth_causal(series, t, kernel, boundary)).collect()
}
