//! Mini-batch training, evaluation metrics and streaming inference.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::ingest::{GestureRecording, SensorSample};
use crate::label::GestureLabel;
use crate::model::{
    forward_batch, forward_with_mask, init_params, model_backward, Mode, ModelConfig, ModelParams, Variant,
};
use crate::numerics::{adam_update, argmax, AdamConfig, AdamState, Array2, Rng, Stream};
use crate::preprocess::{gravity_estimate, Preprocessor, WindowedDataset};

/// Windows per forward pass when only predictions are needed.
const EVAL_CHUNK: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    /// Seeds weight initialization, shuffling and dropout (each on its own
    /// stream).
    pub seed: u64,
    /// Stop after this many epochs without a new best validation accuracy.
    pub early_stop_patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            batch_size: 50,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            epochs: 30,
            seed: 0,
            early_stop_patience: None,
        }
    }
}

impl TrainConfig {
    /// Defaults with the usual learning rate for `variant`: 0.025 for the
    /// small ReLU-input model, Adam's 0.001 for the deeper one.
    pub fn for_variant(variant: Variant) -> Self {
        let learning_rate = match variant {
            Variant::A => 0.025,
            Variant::B => AdamConfig::default().learning_rate,
        };
        Self {
            learning_rate,
            ..Self::default()
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(contract("batch size and epochs must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(contract("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || !(self.epsilon.is_finite() && self.epsilon > 0.0)
        {
            return Err(contract("Adam needs betas in [0, 1) and a positive epsilon"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    /// Mean cross-entropy over the epoch's training windows, in training mode.
    pub train_loss: f64,
    /// Accuracy of the training-mode predictions made during the epoch.
    pub train_acc: f64,
    pub val_window_acc: Option<f64>,
    pub val_gesture_acc: Option<f64>,
}

pub const METRICS_HEADER: &str = "epoch,train_loss,train_acc,val_window_acc,val_gesture_acc";

/// One CSV row per epoch; validation columns are empty without a
/// validation set. Values are written at full precision.
pub fn metrics_csv(history: &[EpochMetrics]) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = format!("{METRICS_HEADER}\n");
    for m in history {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            m.epoch,
            m.train_loss,
            m.train_acc,
            opt(m.val_window_acc),
            opt(m.val_gesture_acc)
        );
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the best validation window accuracy
    /// (the final epoch when there is no validation set).
    pub best: ModelParams,
    pub best_epoch: usize,
    pub final_params: ModelParams,
    pub history: Vec<EpochMetrics>,
}

fn check_dataset(data: &WindowedDataset, config: &ModelConfig, what: &str) -> Result<()> {
    if data.channels() != config.input_dim || data.window_len != config.window_len {
        return Err(contract(format!(
            "{what} windows are {}x{}, model expects {}x{}",
            data.window_len,
            data.channels(),
            config.window_len,
            config.input_dim
        )));
    }
    if let Some(w) = data.windows.iter().find(|w| w.label.index() >= config.num_classes) {
        return Err(contract(format!(
            "{what} label {} outside the model's classes",
            w.label
        )));
    }
    Ok(())
}

/// Trains from freshly initialized parameters.
pub fn train(
    train_set: &WindowedDataset,
    val_set: Option<&WindowedDataset>,
    model: &ModelConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    train_observed(train_set, val_set, model, config, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_observed(
    train_set: &WindowedDataset,
    val_set: Option<&WindowedDataset>,
    model: &ModelConfig,
    config: &TrainConfig,
    observer: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    model.validate()?;
    let params = init_params(model, &mut Rng::for_stream(config.seed, Stream::Init))?;
    train_from(params, train_set, val_set, model, config, observer)
}

/// Trains starting from `params`, calling `observer` after every epoch.
pub fn train_from(
    mut params: ModelParams,
    train_set: &WindowedDataset,
    val_set: Option<&WindowedDataset>,
    model: &ModelConfig,
    config: &TrainConfig,
    mut observer: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    config.validate()?;
    model.validate()?;
    params.check_shapes(model)?;
    if train_set.is_empty() {
        return Err(contract("training set is empty"));
    }
    check_dataset(train_set, model, "training")?;
    if let Some(v) = val_set {
        check_dataset(v, model, "validation")?;
    }

    let adam = config.adam();
    let mut states: Vec<AdamState> = params.arrays().iter().map(|a| AdamState::new(a.len(), adam)).collect();
    let mut shuffle_rng = Rng::for_stream(config.seed, Stream::Shuffle);
    let mut dropout_rng = Rng::for_stream(config.seed, Stream::Dropout);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, ModelParams)> = None;

    for epoch in 1..=config.epochs {
        shuffle_rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(config.batch_size) {
            let windows: Vec<&Array2> = batch.iter().map(|&i| &train_set.windows[i].values).collect();
            let targets: Vec<usize> = batch.iter().map(|&i| train_set.windows[i].label.index()).collect();
            let cache = forward_batch(&windows, &params, model, Mode::Train, &mut dropout_rng)?;
            correct += targets
                .iter()
                .enumerate()
                .filter(|(b, &t)| argmax(cache.probabilities(*b)) == t)
                .count();
            let mut grads = model_backward(&cache, &targets, &params, model)?;
            loss_sum += grads.loss_sum;
            grads.grads.scale(1.0 / batch.len() as f64);
            for ((p, g), state) in params
                .arrays_mut()
                .into_iter()
                .zip(grads.grads.arrays())
                .zip(&mut states)
            {
                adam_update(p, g, state)?;
            }
        }
        if !params.is_finite() {
            return Err(contract(format!(
                "parameters diverged to non-finite values in epoch {epoch}"
            )));
        }

        let (val_window_acc, val_gesture_acc) = match val_set {
            Some(v) if !v.is_empty() => {
                let probs = predict_probabilities(&params, model, v)?;
                let window = window_accuracy(&probs, &v.labels());
                let gesture = gesture_accuracy_from_windows(&probs, v).accuracy;
                (Some(window), Some(gesture))
            }
            _ => (None, None),
        };
        let metrics = EpochMetrics {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            train_acc: correct as f64 / train_set.len() as f64,
            val_window_acc,
            val_gesture_acc,
        };
        log::info!(
            "epoch {epoch}: loss {:.4} train acc {:.4} val window acc {} val gesture acc {}",
            metrics.train_loss,
            metrics.train_acc,
            val_window_acc.map_or("-".into(), |a| format!("{a:.4}")),
            val_gesture_acc.map_or("-".into(), |a| format!("{a:.4}")),
        );
        observer(&metrics);
        history.push(metrics);

        let score = val_window_acc.unwrap_or(f64::NEG_INFINITY);
        let improved = match &best {
            None => true,
            Some((s, _, _)) => score > *s || val_window_acc.is_none(),
        };
        if improved {
            best = Some((score, epoch, params.clone()));
        }
        if let (Some(patience), Some((_, best_epoch, _))) = (config.early_stop_patience, &best) {
            if val_window_acc.is_some() && epoch - best_epoch >= patience {
                log::info!("no improvement for {patience} epochs; stopping after epoch {epoch}");
                break;
            }
        }
    }

    let (_, best_epoch, best) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        best,
        best_epoch,
        final_params: params,
        history,
    })
}

/// Inference-mode class probabilities for every window, in dataset order.
pub fn predict_probabilities(
    params: &ModelParams,
    config: &ModelConfig,
    data: &WindowedDataset,
) -> Result<Vec<Vec<f64>>> {
    let windows: Vec<&Array2> = data.windows.iter().map(|w| &w.values).collect();
    predict_windows(params, config, &windows)
}

pub fn predict_windows(params: &ModelParams, config: &ModelConfig, windows: &[&Array2]) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(windows.len());
    for chunk in windows.chunks(EVAL_CHUNK) {
        let cache = forward_with_mask(chunk, params, config, None)?;
        out.extend((0..chunk.len()).map(|b| cache.probabilities(b).to_vec()));
    }
    Ok(out)
}

fn window_accuracy(probs: &[Vec<f64>], labels: &[usize]) -> f64 {
    let correct = probs.iter().zip(labels).filter(|(p, &t)| argmax(p) == t).count();
    correct as f64 / labels.len() as f64
}

/// Counts with rows = true label and columns = prediction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn count(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn row_total(&self, truth: usize) -> u64 {
        self.counts[truth].iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total() as f64
    }

    /// Fraction of true-`truth` windows predicted as `predicted`; `None`
    /// when the class never occurs.
    pub fn rate(&self, truth: usize, predicted: usize) -> Option<f64> {
        let row = self.row_total(truth);
        (row > 0).then(|| self.counts[truth][predicted] as f64 / row as f64)
    }

    /// Mean of [`rate`](Self::rate) over all off-diagonal cells of classes
    /// that occur.
    pub fn mean_off_diagonal_rate(&self) -> f64 {
        let n = self.classes();
        let rates: Vec<f64> = (0..n)
            .flat_map(|t| (0..n).filter(move |&p| p != t).map(move |p| (t, p)))
            .filter_map(|(t, p)| self.rate(t, p))
            .collect();
        if rates.is_empty() {
            0.0
        } else {
            rates.iter().sum::<f64>() / rates.len() as f64
        }
    }

    /// CSV with a header row and a leading column of label names.
    pub fn to_csv(&self) -> String {
        let names: Vec<String> = (0..self.classes())
            .map(|i| GestureLabel::from_index(i).map_or_else(|| format!("class{i}"), |l| l.name().to_string()))
            .collect();
        let mut out = format!("true\\predicted,{}\n", names.join(","));
        for (name, row) in names.iter().zip(&self.counts) {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            let _ = writeln!(out, "{name},{}", cells.join(","));
        }
        out
    }
}

/// Inference-mode evaluation: confusion matrix and window accuracy.
pub fn evaluate(params: &ModelParams, config: &ModelConfig, data: &WindowedDataset) -> Result<(ConfusionMatrix, f64)> {
    if data.is_empty() {
        return Err(contract("cannot evaluate on an empty window set"));
    }
    check_dataset(data, config, "evaluation")?;
    let probs = predict_probabilities(params, config, data)?;
    Ok(confusion_from_probabilities(&probs, &data.labels(), config.num_classes))
}

pub fn confusion_from_probabilities(probs: &[Vec<f64>], labels: &[usize], classes: usize) -> (ConfusionMatrix, f64) {
    let mut cm = ConfusionMatrix::new(classes);
    for (p, &t) in probs.iter().zip(labels) {
        cm.record(t, argmax(p));
    }
    let acc = cm.accuracy();
    (cm, acc)
}

/// Soft vote: argmax of the summed probability vectors (ties go to the
/// lowest class).
pub fn soft_vote<P: AsRef<[f64]>>(probs: &[P]) -> Option<usize> {
    let first = probs.first()?.as_ref();
    let mut sum = vec![0.0; first.len()];
    for p in probs {
        for (s, v) in sum.iter_mut().zip(p.as_ref()) {
            *s += v;
        }
    }
    Some(argmax(&sum))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GestureAccuracy {
    pub accuracy: f64,
    /// Recordings that contributed at least one window.
    pub evaluated: usize,
    /// Indices of recordings without any window.
    pub excluded: Vec<usize>,
}

/// Per-recording soft vote over windows already classified.
pub fn gesture_accuracy_from_windows(probs: &[Vec<f64>], data: &WindowedDataset) -> GestureAccuracy {
    let mut groups: BTreeMap<usize, (GestureLabel, Vec<&[f64]>)> = BTreeMap::new();
    for (p, w) in probs.iter().zip(&data.windows) {
        groups
            .entry(w.recording)
            .or_insert_with(|| (w.label, Vec::new()))
            .1
            .push(p);
    }
    let correct = groups
        .values()
        .filter(|(label, ps)| soft_vote(ps) == Some(label.index()))
        .count();
    GestureAccuracy {
        accuracy: if groups.is_empty() {
            0.0
        } else {
            correct as f64 / groups.len() as f64
        },
        evaluated: groups.len(),
        excluded: Vec::new(),
    }
}

/// Gesture-level accuracy: each recording is classified by soft vote over
/// its windows. Recordings too short for a single window are excluded and
/// listed.
pub fn gesture_accuracy_majority(
    params: &ModelParams,
    config: &ModelConfig,
    recordings: &[GestureRecording],
    preprocessor: &Preprocessor,
) -> Result<GestureAccuracy> {
    let data = preprocessor.windows(recordings);
    check_dataset(&data, config, "evaluation")?;
    let probs = predict_probabilities(params, config, &data)?;
    let mut result = gesture_accuracy_from_windows(&probs, &data);
    result.excluded = recordings
        .iter()
        .enumerate()
        .filter(|(_, r)| r.samples.len() < preprocessor.window_len)
        .map(|(i, _)| i)
        .collect();
    Ok(result)
}

/// One streaming classification.
#[derive(Debug, Clone, PartialEq)]
pub struct Emission {
    /// Timestamp of the newest sample in the classified window.
    pub t_ms: i64,
    pub label: GestureLabel,
    /// Probability of the predicted class.
    pub confidence: f64,
    pub probabilities: Vec<f64>,
}

/// Online sliding-window classifier. Emits once the buffer first holds a
/// full window and then after every `step` further samples, applying the
/// same transform as batch preprocessing.
#[derive(Debug, Clone)]
pub struct StreamClassifier<'a> {
    params: &'a ModelParams,
    config: &'a ModelConfig,
    preprocessor: &'a Preprocessor,
    buffer: VecDeque<SensorSample>,
    /// Leading samples for the gravity estimate.
    head: Vec<SensorSample>,
    seen: usize,
}

impl<'a> StreamClassifier<'a> {
    pub fn new(params: &'a ModelParams, config: &'a ModelConfig, preprocessor: &'a Preprocessor) -> Result<Self> {
        preprocessor.validate()?;
        config.validate()?;
        params.check_shapes(config)?;
        if preprocessor.window_len != config.window_len || preprocessor.channel_names().len() != config.input_dim {
            return Err(contract("preprocessing and model disagree on window shape"));
        }
        Ok(Self {
            params,
            config,
            preprocessor,
            buffer: VecDeque::with_capacity(preprocessor.window_len),
            head: Vec::new(),
            seen: 0,
        })
    }

    pub fn push(&mut self, sample: SensorSample) -> Result<Option<Emission>> {
        let w = self.preprocessor.window_len;
        if let Some(k) = self.preprocessor.gravity_samples {
            if self.head.len() < k {
                self.head.push(sample);
            }
        }
        if self.buffer.len() == w {
            self.buffer.pop_front();
        }
        self.buffer.push_back(sample);
        self.seen += 1;
        if self.seen < w || !(self.seen - w).is_multiple_of(self.preprocessor.step) {
            return Ok(None);
        }
        let gravity = self
            .preprocessor
            .gravity_samples
            .map_or([0.0; 3], |k| gravity_estimate(&self.head, k));
        let rows: Vec<Vec<f64>> = self
            .buffer
            .iter()
            .map(|s| self.preprocessor.sample_row(s, gravity))
            .collect();
        let window = Array2::from_rows(&rows)?;
        let cache = forward_with_mask(&[&window], self.params, self.config, None)?;
        let probabilities = cache.probabilities(0).to_vec();
        let class = argmax(&probabilities);
        Ok(Some(Emission {
            t_ms: sample.t_ms,
            label: GestureLabel::from_index(class).ok_or_else(|| contract(format!("class {class} has no label")))?,
            confidence: probabilities[class],
            probabilities,
        }))
    }
}

/// Runs a whole sample sequence through a [`StreamClassifier`].
pub fn stream_infer(
    params: &ModelParams,
    config: &ModelConfig,
    preprocessor: &Preprocessor,
    samples: impl IntoIterator<Item = SensorSample>,
) -> Result<Vec<Emission>> {
    let mut classifier = StreamClassifier::new(params, config, preprocessor)?;
    let mut out = Vec::new();
    for s in samples {
        if let Some(e) = classifier.push(s)? {
            out.push(e);
        }
    }
    Ok(out)
}
