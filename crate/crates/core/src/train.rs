//! Training loop, evaluation and top-k prediction.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::audio::AudioClip;
use crate::dataset::class_name;
use crate::dsp::MelSpectrogram;
use crate::features::{FeatureError, FeatureSettings};
use crate::nn::ops::{argmax, cross_entropy, softmax};
use crate::nn::{stack_batch, AdamConfig, AdamState, Mode, NnError, ResNet, Tensor};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyTrainSet,
    #[error("evaluation set is empty")]
    EmptyEvalSet,
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("batch size must be positive")]
    ZeroBatchSize,
    #[error("k = {k} outside 1..={classes}")]
    InvalidK { k: usize, classes: usize },
    #[error("epoch callback failed: {0}")]
    Callback(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

/// One network input `[C, H, W]` with its class index.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub input: Tensor<f32>,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Only the `fc.` head receives updates.
    pub freeze_backbone: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 16,
            adam: AdamConfig::default(),
            seed: 0,
            freeze_backbone: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    pub train_accuracy: f64,
    pub mean_loss: f64,
    /// `None` when there is no validation set.
    pub val_accuracy: Option<f64>,
}

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
struct CompensatedSum {
    sum: f64,
    c: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.c
    }
}

/// Runs `config.epochs` epochs of minibatch Adam. `on_epoch` sees each
/// epoch's metrics and the model after that epoch; an error from it stops
/// training.
pub fn train<E: fmt::Display>(
    model: &mut ResNet<f32>,
    train_set: &[TrainExample],
    val_set: &[TrainExample],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics, &ResNet<f32>) -> Result<(), E>,
) -> Result<Vec<EpochMetrics>, TrainError> {
    if train_set.is_empty() {
        return Err(TrainError::EmptyTrainSet);
    }
    if config.batch_size == 0 {
        return Err(TrainError::ZeroBatchSize);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::new(config.adam);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let trainable = |name: &str| !config.freeze_backbone || name.starts_with("fc.");

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = CompensatedSum::default();
        for (batch, idx) in order.chunks(config.batch_size).enumerate() {
            let inputs: Vec<&Tensor<f32>> = idx.iter().map(|&i| &train_set[i].input).collect();
            let targets: Vec<usize> = idx.iter().map(|&i| train_set[i].label).collect();
            let x = stack_batch(&inputs)?;
            model.zero_grad();
            let logits = model.forward(&x, Mode::Train)?;
            let ce = cross_entropy(&logits, &targets)?;
            if !ce.loss.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    batch: batch + 1,
                });
            }
            for &l in &ce.per_example {
                loss_sum.add(l);
            }
            model.backward(&ce.grad)?;
            adam.step_model(model, trainable)?;
        }
        let train_eval = evaluate(model, train_set, config.batch_size)?;
        let val_accuracy = if val_set.is_empty() {
            None
        } else {
            Some(evaluate(model, val_set, config.batch_size)?.accuracy)
        };
        let metrics = EpochMetrics {
            epoch,
            train_accuracy: train_eval.accuracy,
            mean_loss: loss_sum.total() / train_set.len() as f64,
            val_accuracy,
        };
        on_epoch(&metrics, model).map_err(|e| TrainError::Callback(format!("{e}")))?;
        history.push(metrics);
    }
    Ok(history)
}

/// Rows are true classes, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: alloc::vec![0; classes * classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth * self.classes + predicted] += 1;
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn row(&self, truth: usize) -> &[u64] {
        &self.counts[truth * self.classes..(truth + 1) * self.classes]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|i| self.get(i, i)).sum()
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => self.trace() as f64 / t as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub mean_loss: f64,
    pub confusion: ConfusionMatrix,
}

/// Eval-mode pass over `examples` in chunks of `batch_size`.
pub fn evaluate(
    model: &ResNet<f32>,
    examples: &[TrainExample],
    batch_size: usize,
) -> Result<Evaluation, TrainError> {
    if examples.is_empty() {
        return Err(TrainError::EmptyEvalSet);
    }
    if batch_size == 0 {
        return Err(TrainError::ZeroBatchSize);
    }
    let classes = model.num_classes();
    let mut confusion = ConfusionMatrix::new(classes);
    let mut loss_sum = CompensatedSum::default();
    for chunk in examples.chunks(batch_size) {
        let inputs: Vec<&Tensor<f32>> = chunk.iter().map(|e| &e.input).collect();
        let targets: Vec<usize> = chunk.iter().map(|e| e.label).collect();
        let logits = model.infer(&stack_batch(&inputs)?)?;
        let ce = cross_entropy(&logits, &targets)?;
        for (row, (&t, &l)) in logits
            .data()
            .chunks_exact(classes)
            .zip(targets.iter().zip(&ce.per_example))
        {
            confusion.record(t, argmax(row));
            loss_sum.add(l);
        }
    }
    Ok(Evaluation {
        accuracy: confusion.accuracy(),
        mean_loss: loss_sum.total() / examples.len() as f64,
        confusion,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopKEntry {
    pub class_index: usize,
    pub label: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopKReport {
    pub input: String,
    pub entries: Vec<TopKEntry>,
    /// Sum of the full softmax, not just the reported prefix.
    pub total_probability: f64,
    pub spectrogram_path: Option<String>,
}

/// Descending by probability; equal probabilities keep class order.
pub fn top_k(probabilities: &[f64], k: usize) -> Result<Vec<TopKEntry>, TrainError> {
    if k == 0 || k > probabilities.len() {
        return Err(TrainError::InvalidK {
            k,
            classes: probabilities.len(),
        });
    }
    let mut idx: Vec<usize> = (0..probabilities.len()).collect();
    idx.sort_by(|&a, &b| probabilities[b].total_cmp(&probabilities[a]));
    Ok(idx
        .into_iter()
        .take(k)
        .map(|i| TopKEntry {
            class_index: i,
            label: class_name(i),
            probability: probabilities[i],
        })
        .collect())
}

/// Full pipeline for one clip. Returns the report and the spectrogram it
/// was computed from so callers can render it.
pub fn predict_topk(
    model: &ResNet<f32>,
    features: &FeatureSettings,
    clip: &AudioClip,
    k: usize,
    input: &str,
) -> Result<(TopKReport, MelSpectrogram), TrainError> {
    let classes = model.num_classes();
    if k == 0 || k > classes {
        return Err(TrainError::InvalidK { k, classes });
    }
    let spec = features.extract(clip)?;
    let x = features.to_input(&spec);
    let mut shape = alloc::vec![1];
    shape.extend_from_slice(x.shape());
    let logits = model.infer(&x.reshape(&shape)?)?;
    let probabilities = softmax(logits.data());
    let report = TopKReport {
        input: input.into(),
        entries: top_k(&probabilities, k)?,
        total_probability: probabilities.iter().sum(),
        spectrogram_path: None,
    };
    Ok((report, spec))
}
