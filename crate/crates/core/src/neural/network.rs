//! LSTM plus head, wrapped with input/output normalization and persistence.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::head::{HeadMode, HeadParams};
use super::loss::{weighted_cross_entropy_grad, LossKind, PROB_FLOOR};
use super::lstm::{backward_sequence, forward_sequence, LstmGrads, LstmParams, SequenceCache};
use super::NeuralError;

pub const MODEL_VERSION: u32 = 1;

/// Per-feature mean and standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormalizationStats {
    pub fn identity(n: usize) -> Self {
        Self { mean: vec![0.0; n], std: vec![1.0; n] }
    }

    /// Statistics over the present entries of `rows`. Features with no spread
    /// are rejected.
    pub fn fit<'a, I: IntoIterator<Item = &'a [Option<f64>]>>(rows: I, n: usize) -> Result<Self, NeuralError> {
        let mut count = vec![0usize; n];
        let mut sum = vec![0.0; n];
        let mut sq = vec![0.0; n];
        for row in rows {
            if row.len() != n {
                return Err(NeuralError::Shape(format!("row width {} vs {n} features", row.len())));
            }
            for (k, v) in row.iter().enumerate() {
                if let Some(v) = v {
                    if !v.is_finite() {
                        return Err(NeuralError::NonFinite { step: 0, feature: k });
                    }
                    count[k] += 1;
                    sum[k] += v;
                    sq[k] += v * v;
                }
            }
        }
        let mut mean = vec![0.0; n];
        let mut std = vec![0.0; n];
        for k in 0..n {
            if count[k] == 0 {
                return Err(NeuralError::DegenerateFeature(k));
            }
            mean[k] = sum[k] / count[k] as f64;
            let var = (sq[k] / count[k] as f64 - mean[k] * mean[k]).max(0.0);
            std[k] = var.sqrt();
            if !(std[k] > 1e-12 * (1.0 + mean[k].abs())) {
                return Err(NeuralError::DegenerateFeature(k));
            }
        }
        Ok(Self { mean, std })
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    /// `(x - mean) / std`; absent values map to 0.
    pub fn normalize_into(&self, row: &[Option<f64>], step: usize, out: &mut [f64]) -> Result<(), NeuralError> {
        for (k, (o, x)) in out.iter_mut().zip(row).enumerate() {
            *o = match x {
                Some(v) if v.is_nan() => return Err(NeuralError::NonFinite { step, feature: k }),
                Some(v) => (v - self.mean[k]) / self.std[k],
                None => 0.0,
            };
        }
        Ok(())
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter().enumerate().map(|(k, v)| (v - self.mean[k]) / self.std[k]).collect()
    }

    pub fn denormalize(&self, z: &[f64]) -> Vec<f64> {
        z.iter().enumerate().map(|(k, v)| v * self.std[k] + self.mean[k]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub n_in: usize,
    pub n_hid: usize,
    pub n_out: usize,
    pub mode: HeadMode,
    pub init_seed: u64,
}

impl NetworkConfig {
    pub fn classifier(n_hid: usize, init_seed: u64) -> Self {
        Self { n_in: 2, n_hid, n_out: 2, mode: HeadMode::Classify, init_seed }
    }

    pub fn predictor(n_hid: usize, init_seed: u64) -> Self {
        Self { n_in: 2, n_hid, n_out: 2, mode: HeadMode::Predict, init_seed }
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        if self.n_in == 0 || self.n_hid == 0 || self.n_out == 0 {
            return Err(NeuralError::InvalidConfig(format!("zero dimension in {self:?}")));
        }
        if self.mode == HeadMode::Classify && self.n_out != 2 {
            return Err(NeuralError::InvalidConfig("classification heads are binary".into()));
        }
        Ok(())
    }
}

/// Free-form facts recorded with a trained model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub role: String,
    pub init_seed: u64,
    pub epochs_trained: usize,
    pub positive_rate: Option<f64>,
    pub horizon: Option<usize>,
    pub shift: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub version: u32,
    pub lstm: LstmParams,
    pub head: HeadParams,
    pub input_norm: NormalizationStats,
    /// Present for regression heads trained on standardized targets.
    pub output_norm: Option<NormalizationStats>,
    pub metadata: ModelMetadata,
}

/// Gradients for every trainable block of a [`Network`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub lstm: LstmGrads,
    pub head_w: Vec<f64>,
    pub head_b: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            lstm: LstmGrads::zeros_like(&net.lstm),
            head_w: vec![0.0; net.head.w.len()],
            head_b: vec![0.0; net.head.b.len()],
        }
    }

    pub fn clear(&mut self) {
        self.lstm.clear();
        self.head_w.iter_mut().chain(self.head_b.iter_mut()).for_each(|x| *x = 0.0);
    }

    pub fn blocks(&self) -> [&[f64]; 5] {
        [&self.lstm.w, &self.lstm.r, &self.lstm.b, &self.head_w, &self.head_b]
    }

    pub fn blocks_mut(&mut self) -> [&mut [f64]; 5] {
        [&mut self.lstm.w, &mut self.lstm.r, &mut self.lstm.b, &mut self.head_w, &mut self.head_b]
    }

    pub fn scale(&mut self, s: f64) {
        for b in self.blocks_mut() {
            b.iter_mut().for_each(|x| *x *= s);
        }
    }
}

/// Supervision for one sequence, already in the network's output units.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetSeq {
    Classes(Vec<bool>),
    /// Row-major `valid_steps x n_out`; steps past the end are unsupervised.
    Values(Vec<f64>),
}

/// Reusable buffers for forward and backward passes.
#[derive(Debug, Default, Clone)]
pub struct Workspace {
    cache: SequenceCache,
    outputs: Vec<f64>,
    dh: Vec<f64>,
    dz: Vec<f64>,
}

impl Network {
    pub fn new(config: &NetworkConfig, input_norm: NormalizationStats, output_norm: Option<NormalizationStats>) -> Result<Self, NeuralError> {
        config.validate()?;
        if input_norm.width() != config.n_in {
            return Err(NeuralError::Shape(format!("{} input statistics for n_in = {}", input_norm.width(), config.n_in)));
        }
        if let Some(o) = &output_norm {
            if o.width() != config.n_out {
                return Err(NeuralError::Shape(format!("{} output statistics for n_out = {}", o.width(), config.n_out)));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let lstm = LstmParams::random(config.n_in, config.n_hid, &mut rng);
        let head = HeadParams::random(config.mode, config.n_out, config.n_hid, &mut rng);
        Ok(Self {
            version: MODEL_VERSION,
            lstm,
            head,
            input_norm,
            output_norm,
            metadata: ModelMetadata { init_seed: config.init_seed, ..ModelMetadata::default() },
        })
    }

    pub fn n_in(&self) -> usize {
        self.lstm.n_in
    }

    pub fn n_hid(&self) -> usize {
        self.lstm.n_hid
    }

    pub fn n_out(&self) -> usize {
        self.head.n_out
    }

    pub fn mode(&self) -> HeadMode {
        self.head.mode
    }

    pub fn param_count(&self) -> usize {
        self.lstm.w.len() + self.lstm.r.len() + self.lstm.b.len() + self.head.w.len() + self.head.b.len()
    }

    pub fn blocks_mut(&mut self) -> [&mut [f64]; 5] {
        [&mut self.lstm.w, &mut self.lstm.r, &mut self.lstm.b, &mut self.head.w, &mut self.head.b]
    }

    pub fn block_lengths(&self) -> [usize; 5] {
        [self.lstm.w.len(), self.lstm.r.len(), self.lstm.b.len(), self.head.w.len(), self.head.b.len()]
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        if self.version != MODEL_VERSION {
            return Err(NeuralError::UnsupportedVersion(self.version));
        }
        let shapes_ok = self.lstm.is_consistent()
            && self.head.is_consistent()
            && self.head.n_hid == self.lstm.n_hid
            && self.input_norm.width() == self.lstm.n_in
            && self.output_norm.as_ref().is_none_or(|o| o.width() == self.head.n_out);
        if !shapes_ok {
            return Err(NeuralError::Shape("inconsistent parameter shapes in model".into()));
        }
        let all = self.lstm.w.iter().chain(&self.lstm.r).chain(&self.lstm.b).chain(&self.head.w).chain(&self.head.b);
        if all.clone().any(|x| !x.is_finite()) {
            return Err(NeuralError::InvalidConfig("non-finite weight in model".into()));
        }
        Ok(())
    }

    /// Normalized, row-major input matrix for a sequence of raw rows.
    pub fn prepare_inputs(&self, rows: &[Vec<Option<f64>>]) -> Result<Vec<f64>, NeuralError> {
        let n = self.n_in();
        let mut xs = vec![0.0; rows.len() * n];
        for (t, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(NeuralError::Shape(format!("step {t} has {} features, model expects {n}", row.len())));
            }
            self.input_norm.normalize_into(row, t, &mut xs[t * n..(t + 1) * n])?;
        }
        Ok(xs)
    }

    /// Head outputs for prepared inputs: probabilities, or standardized
    /// predictions when output statistics are present.
    pub fn forward_prepared(&self, xs: &[f64], ws: &mut Workspace) -> Vec<f64> {
        forward_sequence(&self.lstm, xs, &mut ws.cache);
        let (hid, n_out) = (self.n_hid(), self.n_out());
        let steps = ws.cache.steps;
        ws.outputs.clear();
        ws.outputs.resize(steps * n_out, 0.0);
        for t in 0..steps {
            self.head.apply(ws.cache.hidden(t, hid), &mut ws.outputs[t * n_out..(t + 1) * n_out]);
        }
        ws.outputs.clone()
    }

    /// Per-step outputs in natural units.
    pub fn forward(&self, rows: &[Vec<Option<f64>>]) -> Result<Vec<Vec<f64>>, NeuralError> {
        let xs = self.prepare_inputs(rows)?;
        let mut ws = Workspace::default();
        let flat = self.forward_prepared(&xs, &mut ws);
        Ok(flat
            .chunks(self.n_out())
            .map(|z| match &self.output_norm {
                Some(norm) => norm.denormalize(z),
                None => z.to_vec(),
            })
            .collect())
    }

    /// Loss of one sequence; accumulates its gradient into `grads`.
    pub fn loss_and_grad(
        &self,
        xs: &[f64],
        target: &TargetSeq,
        loss: LossKind,
        grads: &mut Gradients,
        ws: &mut Workspace,
    ) -> Result<f64, NeuralError> {
        self.forward_prepared(xs, ws);
        let (hid, n_out) = (self.n_hid(), self.n_out());
        let steps = ws.cache.steps;
        ws.dz.clear();
        ws.dz.resize(steps * n_out, 0.0);
        let value = match (loss, target) {
            (LossKind::WeightedCrossEntropy { positive_rate }, TargetSeq::Classes(ys)) => {
                if ys.len() != steps || n_out != 2 {
                    return Err(NeuralError::Shape(format!("{} class targets for {steps} steps", ys.len())));
                }
                let mut sum = 0.0;
                for (t, &y) in ys.iter().enumerate() {
                    let p = ws.outputs[t * 2 + 1];
                    let pc = p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
                    sum += if y { (1.0 - positive_rate) * pc.ln() } else { positive_rate * (1.0 - pc).ln() };
                    ws.dz[t * 2..t * 2 + 2].copy_from_slice(&weighted_cross_entropy_grad(p, y, positive_rate, steps));
                }
                -sum / steps as f64
            }
            (LossKind::MeanSquaredError, TargetSeq::Values(ys)) => {
                if ys.len() % n_out != 0 || ys.len() > steps * n_out {
                    return Err(NeuralError::Shape(format!("{} target values for {steps} steps x {n_out}", ys.len())));
                }
                let n = ys.len().max(1) as f64;
                let mut sum = 0.0;
                for (k, &y) in ys.iter().enumerate() {
                    let r = ws.outputs[k] - y;
                    sum += r * r;
                    ws.dz[k] = 2.0 * r / n;
                }
                sum / n
            }
            _ => return Err(NeuralError::InvalidConfig("loss kind does not match target kind".into())),
        };
        ws.dh.clear();
        ws.dh.resize(steps * hid, 0.0);
        for t in 0..steps {
            let dz = &ws.dz[t * n_out..(t + 1) * n_out];
            if dz.iter().all(|d| *d == 0.0) {
                continue;
            }
            self.head.backward(
                ws.cache.hidden(t, hid),
                dz,
                &mut grads.head_w,
                &mut grads.head_b,
                &mut ws.dh[t * hid..(t + 1) * hid],
            );
        }
        backward_sequence(&self.lstm, &ws.cache, &ws.dh, &mut grads.lstm);
        Ok(value)
    }

    pub fn save(&self, path: &Path) -> Result<(), NeuralError> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NeuralError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, NeuralError> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        match value.get("version").and_then(serde_json::Value::as_u64) {
            Some(v) if v == MODEL_VERSION as u64 => {}
            Some(v) => return Err(NeuralError::UnsupportedVersion(v as u32)),
            None => return Err(NeuralError::InvalidConfig("model file has no version field".into())),
        }
        let net: Network = serde_json::from_value(value)?;
        net.validate()?;
        Ok(net)
    }
}

/// Per-step label and confidence `2 p - 1` from a binary classifier.
pub fn classify_with_confidence(net: &Network, rows: &[Vec<Option<f64>>]) -> Result<Vec<(bool, f64)>, NeuralError> {
    if net.mode() != HeadMode::Classify {
        return Err(NeuralError::InvalidConfig("network is not a classifier".into()));
    }
    Ok(net.forward(rows)?.iter().map(|p| label_from_probabilities(p)).collect())
}

/// Ties go to the negative class.
pub fn label_from_probabilities(p: &[f64]) -> (bool, f64) {
    (p[1] > p[0], 2.0 * p[1] - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confidence_examples() {
        assert_eq!(label_from_probabilities(&[0.5, 0.5]), (false, 0.0));
        let (l, c) = label_from_probabilities(&[0.1, 0.9]);
        assert!(l && (c - 0.8).abs() < 1e-15);
        let (l, c) = label_from_probabilities(&[0.9, 0.1]);
        assert!(!l && (c + 0.8).abs() < 1e-15);
    }

    #[test]
    fn zero_network_predicts_head_bias() {
        let cfg = NetworkConfig::predictor(4, 0);
        let mut net = Network::new(&cfg, NormalizationStats::identity(2), None).unwrap();
        for b in net.blocks_mut() {
            b.iter_mut().for_each(|x| *x = 0.0);
        }
        net.head.b = vec![3.0, -1.0];
        let rows = vec![vec![Some(1.0), None]; 5];
        assert!(net.forward(&rows).unwrap().iter().all(|o| o == &vec![3.0, -1.0]));
    }

    #[test]
    fn nan_input_is_rejected() {
        let net = Network::new(&NetworkConfig::classifier(3, 1), NormalizationStats::identity(2), None).unwrap();
        let rows = vec![vec![Some(1.0), Some(2.0)], vec![Some(f64::NAN), Some(0.0)]];
        assert!(matches!(net.forward(&rows), Err(NeuralError::NonFinite { step: 1, feature: 0 })));
    }

    #[test]
    fn normalization_round_trip_and_degenerate_features() {
        let rows: Vec<Vec<Option<f64>>> = (0..20).map(|i| vec![Some(i as f64), Some((i * i) as f64), None]).collect();
        assert!(matches!(
            NormalizationStats::fit(rows.iter().map(|r| r.as_slice()), 3),
            Err(NeuralError::DegenerateFeature(2))
        ));
        let rows: Vec<Vec<Option<f64>>> = rows.into_iter().map(|r| r[..2].to_vec()).collect();
        let s = NormalizationStats::fit(rows.iter().map(|r| r.as_slice()), 2).unwrap();
        let x = [3.7, -12.25];
        let back = s.denormalize(&s.normalize(&x));
        assert!((back[0] - x[0]).abs() < 1e-12 && (back[1] - x[1]).abs() < 1e-12);
        let constant: Vec<Vec<Option<f64>>> = vec![vec![Some(1.0)]; 5];
        assert!(NormalizationStats::fit(constant.iter().map(|r| r.as_slice()), 1).is_err());
    }

    #[test]
    fn model_file_round_trip_and_version_check() {
        let net = Network::new(&NetworkConfig::classifier(3, 5), NormalizationStats::identity(2), None).unwrap();
        let json = serde_json::to_string(&net).unwrap();
        assert_eq!(Network::from_json(&json).unwrap(), net);
        let bumped = json.replacen("\"version\":1", "\"version\":9", 1);
        assert!(matches!(Network::from_json(&bumped), Err(NeuralError::UnsupportedVersion(9))));
        let missing = json.replacen("\"version\":1,", "", 1);
        assert!(Network::from_json(&missing).is_err());
    }
}
