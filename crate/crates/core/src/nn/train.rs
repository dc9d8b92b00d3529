use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{Adam, AdamConfig, Batch, Gradients, Network, NnError, Real};
use crate::math;
use crate::rng::{self, SeededRng};

/// Training objective. Binary cross-entropy is computed as two-way
/// categorical cross-entropy over the softmax output.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    BinaryCrossEntropy,
    CategoricalCrossEntropy,
}

const PROB_FLOOR: f64 = 1e-15;

/// Mean cross-entropy of rows of `probs` (`classes` wide) against labels.
pub fn cross_entropy<S: Real>(probs: &[S], classes: usize, targets: &[usize]) -> f64 {
    let n = targets.len();
    let total: f64 =
        targets.iter().enumerate().map(|(i, &t)| -math::ln(probs[i * classes + t].as_f64().max(PROB_FLOOR))).sum();
    total / n as f64
}

impl<S: Real> Network<S> {
    /// Gradient of the mean cross-entropy with respect to every parameter,
    /// using the recorded training forward pass. Returns the gradients and
    /// the loss value.
    pub fn backward(&mut self, targets: &[usize], loss: Loss) -> Result<(Gradients<S>, f64), NnError> {
        let classes = self.output_len();
        if loss == Loss::BinaryCrossEntropy && classes != 2 {
            return Err(NnError::InvalidConfig("binary cross-entropy needs two outputs"));
        }
        let probs = self.last_output().ok_or(NnError::NoForwardState)?.to_vec();
        if probs.len() != targets.len() * classes {
            return Err(NnError::ShapeMismatch { expected: probs.len() / classes.max(1), actual: targets.len() });
        }
        if let Some(&label) = targets.iter().find(|&&t| t >= classes) {
            return Err(NnError::LabelOutOfRange { label, classes });
        }
        let value = cross_entropy(&probs, classes, targets);
        let inv_n = S::from_f64(1.0 / targets.len() as f64);
        let fused = matches!(self.architecture().layers.last(), Some(super::LayerSpec::Softmax));
        let mut grad = probs;
        if fused {
            // d/dz of CE(softmax(z)) = p - onehot
            for (i, &t) in targets.iter().enumerate() {
                let row = &mut grad[i * classes..(i + 1) * classes];
                row[t] = row[t] - S::one();
                row.iter_mut().for_each(|g| *g = *g * inv_n);
            }
        } else {
            for (i, &t) in targets.iter().enumerate() {
                let row = &mut grad[i * classes..(i + 1) * classes];
                for (c, g) in row.iter_mut().enumerate() {
                    *g = if c == t { -inv_n / g.max(S::from_f64(PROB_FLOOR)) } else { S::zero() };
                }
            }
        }
        Ok((self.backward_from(grad, fused)?, value))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub loss: Loss,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { adam: AdamConfig::default(), loss: Loss::CategoricalCrossEntropy, batch_size: 16, epochs: 10, seed: 0 }
    }
}

/// One labelled input.
#[derive(Clone, Copy, Debug)]
pub struct Example<'a> {
    pub input: &'a [f64],
    pub label: usize,
}

/// Mean loss per epoch. `validation` is empty when no validation set was
/// supplied.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    pub train: Vec<f64>,
    pub validation: Vec<f64>,
}

/// Mini-batch training with seeded shuffling and dropout. The recorded
/// training loss of an epoch is the sample-weighted mean of its batch
/// losses.
pub fn train<S: Real>(
    net: &mut Network<S>,
    data: &[Example<'_>],
    validation: &[Example<'_>],
    config: &TrainConfig,
) -> Result<LossHistory, NnError> {
    if config.batch_size == 0 {
        return Err(NnError::InvalidConfig("batch size must be positive"));
    }
    config.adam.validate()?;
    let classes = net.output_len();
    for e in data.iter().chain(validation) {
        if e.label >= classes {
            return Err(NnError::LabelOutOfRange { label: e.label, classes });
        }
    }
    let mut history = LossHistory::default();
    if config.epochs == 0 {
        return Ok(history);
    }
    if data.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let mut rng: SeededRng = rng::seeded(config.seed);
    let mut adam = Adam::new(net, config.adam)?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let shape = net.input_shape();
    for _epoch in 0..config.epochs {
        rng::shuffle(&mut order, &mut rng);
        let mut total = 0.0;
        for idx in order.chunks(config.batch_size) {
            let inputs: Vec<&[f64]> = idx.iter().map(|&i| data[i].input).collect();
            let targets: Vec<usize> = idx.iter().map(|&i| data[i].label).collect();
            let batch = Batch::<S>::from_samples(shape, &inputs)?;
            net.forward_train(&batch, &mut rng)?;
            let (grads, loss) = net.backward(&targets, config.loss)?;
            adam.step(net, &grads)?;
            total += loss * idx.len() as f64;
        }
        history.train.push(total / data.len() as f64);
        if !validation.is_empty() {
            history.validation.push(evaluate_loss(net, validation, config.batch_size)?);
        }
    }
    Ok(history)
}

/// Mean inference-mode cross-entropy over `data`.
pub(crate) fn evaluate_loss<S: Real>(net: &Network<S>, data: &[Example<'_>], chunk: usize) -> Result<f64, NnError> {
    let classes = net.output_len();
    let mut total = 0.0;
    for group in data.chunks(chunk.max(1)) {
        let inputs: Vec<&[f64]> = group.iter().map(|e| e.input).collect();
        let targets: Vec<usize> = group.iter().map(|e| e.label).collect();
        let out = net.forward(&Batch::<S>::from_samples(net.input_shape(), &inputs)?)?;
        total += cross_entropy(out.data(), classes, &targets) * group.len() as f64;
    }
    Ok(total / data.len() as f64)
}
