//! Single-layer LSTM cell with a cached forward pass and full BPTT.
//!
//! Gate rows are stacked in the order forget, input, candidate, output, so
//! `w` is `4H x n_in`, `r` is `4H x H` and `b` has `4H` entries.

use rand::Rng;
use serde::{Deserialize, Serialize};

const FORGET: usize = 0;
const INPUT: usize = 1;
const CANDIDATE: usize = 2;
const OUTPUT: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub n_in: usize,
    pub n_hid: usize,
    pub w: Vec<f64>,
    pub r: Vec<f64>,
    pub b: Vec<f64>,
}

impl LstmParams {
    pub fn zeros(n_in: usize, n_hid: usize) -> Self {
        Self { n_in, n_hid, w: vec![0.0; 4 * n_hid * n_in], r: vec![0.0; 4 * n_hid * n_hid], b: vec![0.0; 4 * n_hid] }
    }

    /// Uniform in `[-1/sqrt(n_hid), 1/sqrt(n_hid)]`.
    pub fn random<R: Rng>(n_in: usize, n_hid: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(n_in, n_hid);
        let a = 1.0 / (n_hid as f64).sqrt();
        for x in p.w.iter_mut().chain(p.r.iter_mut()).chain(p.b.iter_mut()) {
            *x = rng.random_range(-a..=a);
        }
        p
    }

    pub fn is_consistent(&self) -> bool {
        let h = self.n_hid;
        self.w.len() == 4 * h * self.n_in && self.r.len() == 4 * h * h && self.b.len() == 4 * h
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gate activations and state produced by one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
    /// Activated gates `[f, i, g, o]`, each of length `n_hid`.
    pub gates: Vec<f64>,
}

// Scratch buffers are passed separately so BPTT can reuse one allocation.
#[allow(clippy::too_many_arguments)]
fn step_into(p: &LstmParams, x: &[f64], h_prev: &[f64], c_prev: &[f64], gates: &mut [f64], h: &mut [f64], c: &mut [f64], tc: &mut [f64]) {
    let (n_in, hid) = (p.n_in, p.n_hid);
    for (k, g) in gates.iter_mut().enumerate() {
        let a = p.b[k] + dot(&p.w[k * n_in..(k + 1) * n_in], x) + dot(&p.r[k * hid..(k + 1) * hid], h_prev);
        *g = if k / hid == CANDIDATE { a.tanh() } else { sigmoid(a) };
    }
    for j in 0..hid {
        let f = gates[FORGET * hid + j];
        let i = gates[INPUT * hid + j];
        let g = gates[CANDIDATE * hid + j];
        let o = gates[OUTPUT * hid + j];
        c[j] = f * c_prev[j] + i * g;
        tc[j] = c[j].tanh();
        h[j] = o * tc[j];
    }
}

/// One recurrence step from `(h_prev, c_prev)`.
pub fn lstm_step(p: &LstmParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> StepOutput {
    let hid = p.n_hid;
    let mut out = StepOutput { h: vec![0.0; hid], c: vec![0.0; hid], gates: vec![0.0; 4 * hid] };
    let mut tc = vec![0.0; hid];
    step_into(p, x, h_prev, c_prev, &mut out.gates, &mut out.h, &mut out.c, &mut tc);
    out
}

/// Everything BPTT needs from a forward pass over a sequence.
#[derive(Debug, Clone, Default)]
pub struct SequenceCache {
    pub steps: usize,
    /// `steps x n_in` normalized inputs.
    pub xs: Vec<f64>,
    /// `(steps + 1) x n_hid`, row 0 is the zero initial state.
    pub hs: Vec<f64>,
    pub cs: Vec<f64>,
    /// `steps x 4 n_hid` activated gates.
    pub gates: Vec<f64>,
    /// `steps x n_hid` values of `tanh(c_t)`.
    pub tanh_c: Vec<f64>,
}

impl SequenceCache {
    /// Hidden state after step `t` (0-based).
    pub fn hidden(&self, t: usize, n_hid: usize) -> &[f64] {
        &self.hs[(t + 1) * n_hid..(t + 2) * n_hid]
    }
}

/// Run the cell over `xs` (row-major `steps x n_in`) from zero state.
pub fn forward_sequence(p: &LstmParams, xs: &[f64], cache: &mut SequenceCache) {
    let (n_in, hid) = (p.n_in, p.n_hid);
    let steps = xs.len() / n_in;
    cache.steps = steps;
    cache.xs.clear();
    cache.xs.extend_from_slice(xs);
    cache.hs.clear();
    cache.hs.resize((steps + 1) * hid, 0.0);
    cache.cs.clear();
    cache.cs.resize((steps + 1) * hid, 0.0);
    cache.gates.clear();
    cache.gates.resize(steps * 4 * hid, 0.0);
    cache.tanh_c.clear();
    cache.tanh_c.resize(steps * hid, 0.0);
    for t in 0..steps {
        let (h_done, h_next) = cache.hs.split_at_mut((t + 1) * hid);
        let (c_done, c_next) = cache.cs.split_at_mut((t + 1) * hid);
        step_into(
            p,
            &xs[t * n_in..(t + 1) * n_in],
            &h_done[t * hid..],
            &c_done[t * hid..],
            &mut cache.gates[t * 4 * hid..(t + 1) * 4 * hid],
            &mut h_next[..hid],
            &mut c_next[..hid],
            &mut cache.tanh_c[t * hid..(t + 1) * hid],
        );
    }
}

/// Gradient buffers shaped like [`LstmParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct LstmGrads {
    pub w: Vec<f64>,
    pub r: Vec<f64>,
    pub b: Vec<f64>,
}

impl LstmGrads {
    pub fn zeros_like(p: &LstmParams) -> Self {
        Self { w: vec![0.0; p.w.len()], r: vec![0.0; p.r.len()], b: vec![0.0; p.b.len()] }
    }

    pub fn clear(&mut self) {
        for x in self.w.iter_mut().chain(self.r.iter_mut()).chain(self.b.iter_mut()) {
            *x = 0.0;
        }
    }
}

/// Accumulate parameter gradients given `dh[t]`, the loss gradient reaching
/// each hidden state from outside the recurrence (`steps x n_hid`).
pub fn backward_sequence(p: &LstmParams, cache: &SequenceCache, dh_out: &[f64], grads: &mut LstmGrads) {
    let (n_in, hid) = (p.n_in, p.n_hid);
    let mut dh_next = vec![0.0; hid];
    let mut dc_next = vec![0.0; hid];
    let mut da = vec![0.0; 4 * hid];
    for t in (0..cache.steps).rev() {
        let gates = &cache.gates[t * 4 * hid..(t + 1) * 4 * hid];
        let tc = &cache.tanh_c[t * hid..(t + 1) * hid];
        let c_prev = &cache.cs[t * hid..(t + 1) * hid];
        let h_prev = &cache.hs[t * hid..(t + 1) * hid];
        let x = &cache.xs[t * n_in..(t + 1) * n_in];
        for j in 0..hid {
            let f = gates[FORGET * hid + j];
            let i = gates[INPUT * hid + j];
            let g = gates[CANDIDATE * hid + j];
            let o = gates[OUTPUT * hid + j];
            let dh = dh_out[t * hid + j] + dh_next[j];
            let dc = dh * o * (1.0 - tc[j] * tc[j]) + dc_next[j];
            da[FORGET * hid + j] = dc * c_prev[j] * f * (1.0 - f);
            da[INPUT * hid + j] = dc * g * i * (1.0 - i);
            da[CANDIDATE * hid + j] = dc * i * (1.0 - g * g);
            da[OUTPUT * hid + j] = dh * tc[j] * o * (1.0 - o);
            dc_next[j] = dc * f;
        }
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        for (k, &d) in da.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            grads.b[k] += d;
            for (gw, xv) in grads.w[k * n_in..(k + 1) * n_in].iter_mut().zip(x) {
                *gw += d * xv;
            }
            let r_row = &p.r[k * hid..(k + 1) * hid];
            for ((gr, hv), (dn, rv)) in grads.r[k * hid..(k + 1) * hid].iter_mut().zip(h_prev).zip(dh_next.iter_mut().zip(r_row)) {
                *gr += d * hv;
                *dn += d * rv;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_fixed_point() {
        let p = LstmParams::zeros(2, 3);
        let s = lstm_step(&p, &[0.7, -1.2], &[0.0; 3], &[0.0; 3]);
        assert_eq!(s.h, vec![0.0; 3]);
        assert_eq!(s.c, vec![0.0; 3]);
        assert!(s.gates[..6].iter().chain(&s.gates[9..]).all(|g| *g == 0.5));
        assert!(s.gates[6..9].iter().all(|g| *g == 0.0));
    }

    #[test]
    fn zero_weights_decay_cell() {
        let p = LstmParams::zeros(1, 1);
        let s = lstm_step(&p, &[3.0], &[0.0], &[1.0]);
        assert!((s.c[0] - 0.5).abs() < 1e-15);
        assert!((s.h[0] - 0.5 * 0.5f64.tanh()).abs() < 1e-15);
        assert!((s.h[0] - 0.231059).abs() < 1e-6);
    }

    #[test]
    fn sequence_matches_repeated_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = LstmParams::random(2, 4, &mut rng);
        let xs: Vec<f64> = (0..10).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut cache = SequenceCache::default();
        forward_sequence(&p, &xs, &mut cache);
        let (mut h, mut c) = (vec![0.0; 4], vec![0.0; 4]);
        for t in 0..5 {
            let s = lstm_step(&p, &xs[2 * t..2 * t + 2], &h, &c);
            h = s.h;
            c = s.c;
            assert_eq!(cache.hidden(t, 4), h.as_slice());
        }
    }

    proptest! {
        #[test]
        fn hidden_state_is_bounded(seed in any::<u64>(), scale in 0.1f64..50.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut p = LstmParams::random(3, 5, &mut rng);
            p.w.iter_mut().for_each(|x| *x *= scale);
            let xs: Vec<f64> = (0..60).map(|_| rand::Rng::random_range(&mut rng, -10.0..10.0)).collect();
            let mut cache = SequenceCache::default();
            forward_sequence(&p, &xs, &mut cache);
            for &v in cache.hs.iter().chain(&cache.tanh_c) {
                prop_assert!(v.abs() <= 1.0);
            }
        }
    }
}
