//! Mini-batch training with early stopping on validation loss.

use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::{Classifier, Example, ModelConfig};
use super::optim::Adam;
use super::split::Splits;
use super::NnError;
use crate::par::{self, Execution};
use crate::rng::{stream_id, substream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub max_epochs: usize,
    /// Consecutive non-improving epochs tolerated before stopping.
    pub patience: usize,
    /// A monitored loss must drop by more than this to count as improvement.
    /// Without it a tiny validation set keeps "improving" by negligible
    /// amounts and patience never runs out.
    #[serde(default = "default_min_delta")]
    pub min_delta: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Stop as soon as training accuracy reaches this value.
    pub target_train_accuracy: Option<f64>,
    pub exec: Execution,
}

pub const DEFAULT_MIN_DELTA: f64 = 1e-3;

fn default_min_delta() -> f64 {
    DEFAULT_MIN_DELTA
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 200,
            patience: 5,
            min_delta: DEFAULT_MIN_DELTA,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
            target_train_accuracy: None,
            exec: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    EarlyStopping,
    TargetAccuracy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights were returned.
    pub best_epoch: usize,
    pub stop_reason: StopReason,
}

impl History {
    pub fn stopped_epoch(&self) -> usize {
        self.epochs.last().map_or(0, |e| e.epoch)
    }

    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.iter().find(|e| e.epoch == self.best_epoch)
    }

    /// `epoch,train_loss,train_acc,val_loss,val_acc`
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        for e in &self.epochs {
            w.serialize(e)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// What [`EarlyStopping::observe`] decided about an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// New best; keep these weights.
    Improved,
    Continue,
    Stop,
}

/// Tracks the best monitored loss. Training stops once the number of
/// consecutive epochs without a strict improvement exceeds `patience`.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    min_delta: f64,
    best: f64,
    best_epoch: usize,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            min_delta: 0.0,
            best: f64::INFINITY,
            best_epoch: 0,
            stale: 0,
        }
    }

    pub fn with_min_delta(mut self, min_delta: f64) -> Self {
        self.min_delta = min_delta;
        self
    }

    pub fn observe(&mut self, epoch: usize, loss: f64) -> Verdict {
        if loss < self.best - self.min_delta {
            self.best = loss;
            self.best_epoch = epoch;
            self.stale = 0;
            Verdict::Improved
        } else {
            self.stale += 1;
            if self.stale > self.patience {
                Verdict::Stop
            } else {
                Verdict::Continue
            }
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

/// Inference-mode mean loss and accuracy (threshold 0.5).
pub fn evaluate(model: &Classifier, data: &[&Example], exec: Execution) -> Result<(f64, f64), NnError> {
    if data.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    let owned: Vec<Example> = data.iter().map(|&e| e.clone()).collect();
    let loss = model.loss(&owned, None, exec)?;
    let probs = par::map(exec, data, |ex| model.predict(&ex.seq));
    let mut correct = 0usize;
    for (ex, p) in data.iter().zip(probs) {
        if (p? >= 0.5) == ex.label.is_positive() {
            correct += 1;
        }
    }
    Ok((loss, correct as f64 / data.len() as f64))
}

/// Trains a fresh model on `splits.train`, monitoring validation loss (or
/// training loss when the validation set is empty). Returns the weights of
/// the best monitored epoch.
pub fn train(
    config: &ModelConfig,
    data: &[Example],
    splits: &Splits,
    tc: &TrainConfig,
) -> Result<(Classifier, History), NnError> {
    if splits.train.is_empty() {
        return Err(NnError::Split("training split is empty".into()));
    }
    if tc.batch_size == 0 || tc.max_epochs == 0 {
        return Err(NnError::Config("batch_size and max_epochs must be positive".into()));
    }
    if !(tc.min_delta >= 0.0 && tc.min_delta.is_finite()) {
        return Err(NnError::Config(format!(
            "min_delta {} must be a finite non-negative number",
            tc.min_delta
        )));
    }
    let index = |ids: &[usize]| -> Result<Vec<&Example>, NnError> {
        ids.iter()
            .map(|&i| {
                data.get(i)
                    .ok_or_else(|| NnError::Split(format!("index {i} out of range ({} samples)", data.len())))
            })
            .collect()
    };
    let train_set = index(&splits.train)?;
    let val_set = index(&splits.validation)?;

    let mut model = Classifier::new(config.clone(), tc.seed)?;
    let mut adam = Adam::new(tc.learning_rate);
    let mut stopper = EarlyStopping::new(tc.patience).with_min_delta(tc.min_delta);
    let mut best = model.clone();
    let mut epochs = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;

    for epoch in 1..=tc.max_epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut substream(tc.seed, stream_id(&[1, epoch as u64])));
        for (b, chunk) in order.chunks(tc.batch_size).enumerate() {
            let batch: Vec<Example> = chunk.iter().map(|&i| train_set[i].clone()).collect();
            let dropout_seed = stream_id(&[tc.seed, epoch as u64, b as u64]);
            let step = model
                .gradients(&batch, Some(dropout_seed), tc.exec)
                .map_err(|e| diverged(e, epoch))?;
            adam.step(&mut model, &step.grads);
        }
        let (train_loss, train_acc) = evaluate(&model, &train_set, tc.exec).map_err(|e| diverged(e, epoch))?;
        let (val_loss, val_acc) = evaluate(&model, &val_set, tc.exec).map_err(|e| diverged(e, epoch))?;
        log::debug!("epoch {epoch}: train_loss={train_loss:.4} train_acc={train_acc:.3} val_loss={val_loss:.4} val_acc={val_acc:.3}");
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            train_acc,
            val_loss,
            val_acc,
        });
        let monitored = if val_set.is_empty() { train_loss } else { val_loss };
        match stopper.observe(epoch, monitored) {
            Verdict::Improved => best = model.clone(),
            Verdict::Continue => {}
            Verdict::Stop => {
                stop_reason = StopReason::EarlyStopping;
                break;
            }
        }
        if tc.target_train_accuracy.is_some_and(|t| train_acc >= t) {
            stop_reason = StopReason::TargetAccuracy;
            break;
        }
    }
    let history = History {
        epochs,
        best_epoch: stopper.best_epoch(),
        stop_reason,
    };
    Ok((best, history))
}

fn diverged(err: NnError, epoch: usize) -> NnError {
    match err {
        NnError::NonFiniteLoss { sample } => NnError::Diverged { epoch, sample },
        other => other,
    }
}
