//! Single-layer read-out applied to every hidden state.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeadMode {
    /// Raw regression outputs.
    Predict,
    /// Softmax class probabilities.
    Classify,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    pub mode: HeadMode,
    pub n_out: usize,
    pub n_hid: usize,
    /// `n_out x n_hid`, row-major.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl HeadParams {
    pub fn zeros(mode: HeadMode, n_out: usize, n_hid: usize) -> Self {
        Self { mode, n_out, n_hid, w: vec![0.0; n_out * n_hid], b: vec![0.0; n_out] }
    }

    pub fn random<R: Rng>(mode: HeadMode, n_out: usize, n_hid: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(mode, n_out, n_hid);
        let a = 1.0 / (n_hid as f64).sqrt();
        for x in p.w.iter_mut().chain(p.b.iter_mut()) {
            *x = rng.random_range(-a..=a);
        }
        p
    }

    pub fn is_consistent(&self) -> bool {
        self.w.len() == self.n_out * self.n_hid && self.b.len() == self.n_out
    }

    /// Pre-activation `z = W h + b`.
    pub fn logits(&self, h: &[f64], z: &mut [f64]) {
        for (k, zk) in z.iter_mut().enumerate() {
            *zk = self.b[k] + self.w[k * self.n_hid..(k + 1) * self.n_hid].iter().zip(h).map(|(w, x)| w * x).sum::<f64>();
        }
    }

    /// Logits followed by softmax in `Classify` mode.
    pub fn apply(&self, h: &[f64], out: &mut [f64]) {
        self.logits(h, out);
        if self.mode == HeadMode::Classify {
            softmax_in_place(out);
        }
    }

    /// Given `dz` for hidden state `h`, accumulate head gradients and add
    /// `W^T dz` into `dh`.
    pub fn backward(&self, h: &[f64], dz: &[f64], dw: &mut [f64], db: &mut [f64], dh: &mut [f64]) {
        let hid = self.n_hid;
        for (k, &d) in dz.iter().enumerate() {
            db[k] += d;
            let row = &self.w[k * hid..(k + 1) * hid];
            for ((g, hv), (dhv, wv)) in dw[k * hid..(k + 1) * hid].iter_mut().zip(h).zip(dh.iter_mut().zip(row)) {
                *g += d * hv;
                *dhv += d * wv;
            }
        }
    }
}

pub fn softmax_in_place(z: &mut [f64]) {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        sum += *v;
    }
    z.iter_mut().for_each(|v| *v /= sum);
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let mut out = z.to_vec();
    softmax_in_place(&mut out);
    out
}
