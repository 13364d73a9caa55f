//! Mini-batch training with era-wise learning-rate decay.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{clip_global_norm, AdamState};
use super::head::HeadMode;
use super::loss::LossKind;
use super::metrics::{accuracy_metrics, Accuracy};
use super::network::{label_from_probabilities, Gradients, Network, NetworkConfig, NormalizationStats, TargetSeq, Workspace};
use super::NeuralError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSchedule {
    pub eras: usize,
    pub epochs_per_era: usize,
    pub base_learning_rate: f64,
    /// Learning-rate factor applied at each era boundary.
    pub decay: f64,
    pub batch_size: usize,
    pub shuffle_seed: u64,
    pub clip_norm: f64,
}

impl TrainingSchedule {
    /// Ten eras of ten epochs.
    pub fn classifier() -> Self {
        Self { eras: 10, epochs_per_era: 10, base_learning_rate: 1e-2, decay: 0.5, batch_size: 24, shuffle_seed: 0, clip_norm: 5.0 }
    }

    /// Five eras of fifty epochs.
    pub fn predictor() -> Self {
        Self { eras: 5, epochs_per_era: 50, ..Self::classifier() }
    }

    pub fn total_epochs(&self) -> usize {
        self.eras * self.epochs_per_era
    }

    pub fn learning_rate(&self, era: usize) -> f64 {
        self.base_learning_rate * self.decay.powi(era as i32)
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        if self.batch_size == 0 {
            return Err(NeuralError::InvalidConfig("batch size must be positive".into()));
        }
        if !(self.base_learning_rate > 0.0) || !(self.decay > 0.0) || !(self.clip_norm > 0.0) {
            return Err(NeuralError::InvalidConfig(format!("bad schedule {self:?}")));
        }
        Ok(())
    }
}

/// Raw per-step targets for one sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Targets {
    Classes(Vec<bool>),
    /// One vector per supervised step; may be shorter than the input.
    Values(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub inputs: Vec<Vec<Option<f64>>>,
    pub targets: Targets,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub era: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
    pub accuracy: Option<f64>,
    pub weighted_accuracy: Option<f64>,
    pub rmse: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub epochs: Vec<EpochRecord>,
}

impl TrainingTrace {
    pub fn final_train_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_loss)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), NeuralError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "era", "learning_rate", "train_loss", "validation_loss", "accuracy", "weighted_accuracy", "rmse"])
            .map_err(csv_err)?;
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                e.era.to_string(),
                e.learning_rate.to_string(),
                e.train_loss.to_string(),
                opt(e.validation_loss),
                opt(e.accuracy),
                opt(e.weighted_accuracy),
                opt(e.rmse),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> NeuralError {
    NeuralError::Io(std::io::Error::other(e))
}

/// Positive rate of a set of classification examples.
pub fn positive_rate_of(examples: &[Example]) -> Result<f64, NeuralError> {
    let (mut pos, mut total) = (0usize, 0usize);
    for e in examples {
        if let Targets::Classes(ys) = &e.targets {
            pos += ys.iter().filter(|y| **y).count();
            total += ys.len();
        }
    }
    if pos == 0 || pos == total {
        return Err(NeuralError::InvalidConfig(format!("positive rate undefined ({pos} of {total})")));
    }
    Ok(pos as f64 / total as f64)
}

struct Prepared {
    xs: Vec<f64>,
    target: TargetSeq,
}

fn prepare(net: &Network, examples: &[Example]) -> Result<Vec<Prepared>, NeuralError> {
    examples
        .iter()
        .map(|e| {
            let xs = net.prepare_inputs(&e.inputs)?;
            let target = match &e.targets {
                Targets::Classes(ys) => TargetSeq::Classes(ys.clone()),
                Targets::Values(rows) => {
                    let flat = rows
                        .iter()
                        .flat_map(|r| match &net.output_norm {
                            Some(n) => n.normalize(r),
                            None => r.clone(),
                        })
                        .collect();
                    TargetSeq::Values(flat)
                }
            };
            Ok(Prepared { xs, target })
        })
        .collect()
}

fn check_examples(config: &NetworkConfig, examples: &[Example]) -> Result<(), NeuralError> {
    for (i, e) in examples.iter().enumerate() {
        let ok = match (&e.targets, config.mode) {
            (Targets::Classes(ys), HeadMode::Classify) => ys.len() == e.inputs.len(),
            (Targets::Values(rows), HeadMode::Predict) => {
                rows.len() <= e.inputs.len() && rows.iter().all(|r| r.len() == config.n_out && r.iter().all(|v| v.is_finite()))
            }
            _ => false,
        };
        if !ok {
            return Err(NeuralError::Shape(format!("example {i} does not match a {:?} head", config.mode)));
        }
    }
    Ok(())
}

/// Untrained network with statistics fitted on `train`.
pub fn initial_network(train: &[Example], config: &NetworkConfig) -> Result<Network, NeuralError> {
    config.validate()?;
    if train.is_empty() {
        return Err(NeuralError::EmptyDataset);
    }
    check_examples(config, train)?;
    let rows = train.iter().flat_map(|e| e.inputs.iter().map(Vec::as_slice));
    let input_norm = NormalizationStats::fit(rows, config.n_in)?;
    let output_norm = match config.mode {
        HeadMode::Predict => {
            let targets: Vec<Vec<Option<f64>>> = train
                .iter()
                .flat_map(|e| match &e.targets {
                    Targets::Values(rows) => rows.iter().map(|r| r.iter().map(|v| Some(*v)).collect()).collect(),
                    Targets::Classes(_) => Vec::new(),
                })
                .collect();
            Some(NormalizationStats::fit(targets.iter().map(Vec::as_slice), config.n_out)?)
        }
        HeadMode::Classify => None,
    };
    Network::new(config, input_norm, output_norm)
}

/// Train a fresh network. Returns it with one trace record per epoch.
pub fn train(
    train_set: &[Example],
    validation: &[Example],
    config: &NetworkConfig,
    schedule: &TrainingSchedule,
    loss: LossKind,
) -> Result<(Network, TrainingTrace), NeuralError> {
    schedule.validate()?;
    loss.validate()?;
    let mut net = initial_network(train_set, config)?;
    check_examples(config, validation)?;
    let data = prepare(&net, train_set)?;
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.shuffle_seed);
    let mut adam = AdamState::new(&net.block_lengths());
    let mut grads = Gradients::zeros_like(&net);
    let mut ws = Workspace::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut trace = TrainingTrace::default();
    for era in 0..schedule.eras {
        let lr = schedule.learning_rate(era);
        for _ in 0..schedule.epochs_per_era {
            let epoch = trace.epochs.len();
            order.shuffle(&mut rng);
            let mut loss_sum = 0.0;
            for batch in order.chunks(schedule.batch_size) {
                grads.clear();
                for &i in batch {
                    loss_sum += net.loss_and_grad(&data[i].xs, &data[i].target, loss, &mut grads, &mut ws)?;
                }
                grads.scale(1.0 / batch.len() as f64);
                let norm = clip_global_norm(&mut grads.blocks_mut(), schedule.clip_norm);
                if !norm.is_finite() {
                    return Err(NeuralError::Divergence { epoch, detail: format!("gradient norm {norm}") });
                }
                adam.update(&mut net.blocks_mut(), &grads.blocks(), lr);
            }
            let train_loss = loss_sum / data.len() as f64;
            if !train_loss.is_finite() {
                return Err(NeuralError::Divergence { epoch, detail: format!("training loss {train_loss}") });
            }
            let mut record = EpochRecord {
                epoch,
                era,
                learning_rate: lr,
                train_loss,
                validation_loss: None,
                accuracy: None,
                weighted_accuracy: None,
                rmse: None,
            };
            if !validation.is_empty() {
                let eval = evaluate(&net, validation, loss)?;
                record.validation_loss = Some(eval.loss);
                record.accuracy = eval.accuracy.map(|a| a.accuracy);
                record.weighted_accuracy = eval.accuracy.map(|a| a.weighted);
                record.rmse = eval.rmse;
            }
            trace.epochs.push(record);
        }
    }
    net.metadata.epochs_trained = trace.epochs.len();
    if let LossKind::WeightedCrossEntropy { positive_rate } = loss {
        net.metadata.positive_rate = Some(positive_rate);
    }
    Ok((net, trace))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: Option<Accuracy>,
    /// In natural output units.
    pub rmse: Option<f64>,
}

/// Mean loss plus accuracy (classifiers) or RMSE (predictors) over examples.
pub fn evaluate(net: &Network, examples: &[Example], loss: LossKind) -> Result<Evaluation, NeuralError> {
    let data = prepare(net, examples)?;
    let mut ws = Workspace::default();
    let mut scratch = Gradients::zeros_like(net);
    let mut loss_sum = 0.0;
    let (mut preds, mut truth) = (Vec::new(), Vec::new());
    let (mut sq, mut n) = (0.0, 0usize);
    for (p, e) in data.iter().zip(examples) {
        loss_sum += net.loss_and_grad(&p.xs, &p.target, loss, &mut scratch, &mut ws)?;
        let out = net.forward_prepared(&p.xs, &mut ws);
        match &e.targets {
            Targets::Classes(ys) => {
                preds.extend(out.chunks(2).map(|pr| label_from_probabilities(pr).0));
                truth.extend_from_slice(ys);
            }
            Targets::Values(rows) => {
                for (z, y) in out.chunks(net.n_out()).zip(rows) {
                    let o = match &net.output_norm {
                        Some(norm) => norm.denormalize(z),
                        None => z.to_vec(),
                    };
                    sq += o.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                    n += y.len();
                }
            }
        }
    }
    let accuracy = match loss {
        LossKind::WeightedCrossEntropy { positive_rate } => Some(accuracy_metrics(&preds, &truth, positive_rate)),
        LossKind::MeanSquaredError => None,
    };
    let rmse = (n > 0).then(|| (sq / n as f64).sqrt());
    Ok(Evaluation { loss: loss_sum / examples.len().max(1) as f64, accuracy, rmse })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_classification(days: usize, len: usize) -> Vec<Example> {
        (0..days)
            .map(|d| {
                let inputs: Vec<Vec<Option<f64>>> = (0..len)
                    .map(|t| {
                        let x = ((t * 7 + d * 3) % 11) as f64 - 5.0;
                        vec![Some(x), Some(((t + d) % 5) as f64)]
                    })
                    .collect();
                let ys = inputs.iter().map(|r| r[0].unwrap() > 1.5).collect();
                Example { inputs, targets: Targets::Classes(ys) }
            })
            .collect()
    }

    fn tiny_schedule(eras: usize, epochs: usize) -> TrainingSchedule {
        TrainingSchedule { eras, epochs_per_era: epochs, base_learning_rate: 0.05, batch_size: 4, ..TrainingSchedule::classifier() }
    }

    #[test]
    fn presets_match_protocol() {
        assert_eq!(TrainingSchedule::classifier().total_epochs(), 100);
        assert_eq!(TrainingSchedule::predictor().total_epochs(), 250);
        assert_eq!(TrainingSchedule::classifier().learning_rate(2), 0.0025);
    }

    #[test]
    fn zero_epochs_returns_initial_network() {
        let data = toy_classification(4, 30);
        let cfg = NetworkConfig::classifier(4, 3);
        let p = positive_rate_of(&data).unwrap();
        let (net, trace) = train(&data, &[], &cfg, &tiny_schedule(0, 10), LossKind::WeightedCrossEntropy { positive_rate: p }).unwrap();
        assert!(trace.epochs.is_empty());
        let mut init = initial_network(&data, &cfg).unwrap();
        init.metadata.positive_rate = Some(p);
        assert_eq!(net, init);
    }

    #[test]
    fn training_is_deterministic() {
        let data = toy_classification(6, 40);
        let cfg = NetworkConfig::classifier(5, 1);
        let loss = LossKind::WeightedCrossEntropy { positive_rate: positive_rate_of(&data).unwrap() };
        let a = train(&data, &data[..2], &cfg, &tiny_schedule(2, 3), loss).unwrap();
        let b = train(&data, &data[..2], &cfg, &tiny_schedule(2, 3), loss).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn separable_toy_loss_falls_across_eras() {
        let data = toy_classification(8, 60);
        let cfg = NetworkConfig::classifier(6, 2);
        let loss = LossKind::WeightedCrossEntropy { positive_rate: positive_rate_of(&data).unwrap() };
        let (net, trace) = train(&data, &[], &cfg, &tiny_schedule(4, 15), loss).unwrap();
        let era_end: Vec<f64> = trace.epochs.chunks(15).map(|c| c.last().unwrap().train_loss).collect();
        for w in era_end.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{era_end:?}");
        }
        let eval = evaluate(&net, &data, loss).unwrap();
        assert!(eval.accuracy.unwrap().accuracy > 0.95);
    }

    #[test]
    fn mismatched_targets_are_rejected() {
        let data = toy_classification(2, 10);
        let cfg = NetworkConfig::predictor(3, 0);
        assert!(train(&data, &[], &cfg, &tiny_schedule(1, 1), LossKind::MeanSquaredError).is_err());
        assert!(matches!(
            train(&[], &[], &NetworkConfig::classifier(3, 0), &tiny_schedule(1, 1), LossKind::MeanSquaredError),
            Err(NeuralError::InvalidConfig(_) | NeuralError::EmptyDataset)
        ));
    }
}
