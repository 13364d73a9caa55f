//! Bias-corrected ADAM with global gradient-norm clipping.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    /// Zero moments for parameter blocks of the given lengths.
    pub fn new(shapes: &[usize]) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// `theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)` for every block.
    pub fn update(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], lr: f64) {
        debug_assert_eq!(params.len(), self.first.len());
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (k, (block, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.first[k], &mut self.second[k]);
            for j in 0..block.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                block[j] -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}

/// Scale all blocks so their joint L2 norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut [&mut [f64]], max_norm: f64) -> f64 {
    let norm = grads.iter().flat_map(|g| g.iter()).map(|x| x * x).sum::<f64>().sqrt();
    if norm > max_norm && norm.is_finite() {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| g.iter_mut().for_each(|x| *x *= s));
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut s = AdamState::new(&[1]);
        let mut p = [0.0];
        s.update(&mut [&mut p], &[&[1.0]], 0.1);
        assert!((p[0] + 0.1 / (1.0 + 1e-8)).abs() < 1e-15);
        let mut s = AdamState::new(&[1]);
        let mut q = [2.0];
        s.update(&mut [&mut q], &[&[-3.0]], 0.1);
        assert!(q[0] > 2.0);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut s = AdamState::new(&[3, 2]);
        let mut a = [1.0, -2.0, 3.0];
        let mut b = [0.5, 0.25];
        for _ in 0..10 {
            s.update(&mut [&mut a, &mut b], &[&[0.0; 3], &[0.0; 2]], 0.1);
        }
        assert_eq!(a, [1.0, -2.0, 3.0]);
        assert_eq!(b, [0.5, 0.25]);
    }

    #[test]
    fn clipping_caps_the_joint_norm() {
        let mut a = [3.0, 0.0];
        let mut b = [4.0];
        let n = clip_global_norm(&mut [&mut a, &mut b], 1.0);
        assert_eq!(n, 5.0);
        assert!((a[0] - 0.6).abs() < 1e-15 && (b[0] - 0.8).abs() < 1e-15);
        let mut c = [0.1];
        clip_global_norm(&mut [&mut c], 1.0);
        assert_eq!(c, [0.1]);
    }
}
