//! Confusion-matrix metrics, stratified K-fold plans and cross-validation.
//!
//! The positive class is malicious (label 1) throughout. Metrics whose
//! denominator is zero are `None` and print as `NA`.

use std::collections::BTreeSet;
use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::{build_vocab_on, encode_documents, Document};
use crate::nn::{self, Classifier, Example, ModelConfig, NnError, Splits, TrainConfig};
use crate::par::{self, Execution};
use crate::rng::substream;
use crate::script::Label;
use crate::tokenizer::Stoplist;

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const UNDEFINED: &str = "NA";

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("{predictions} predictions for {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("K must be at least 2, got {0}")]
    TooFewFolds(usize),
    #[error("label {label} has {count} samples, fewer than K={k}")]
    TooFewSamples { label: Label, count: usize, k: usize },
    #[error("fold {fold}: validation ids leaked into training")]
    Leakage { fold: usize },
    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn add(&mut self, other: &ConfusionMatrix) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }
}

/// A prediction is positive iff its probability is at least `threshold`.
pub fn confusion(predictions: &[f64], labels: &[Label], threshold: f64) -> Result<ConfusionMatrix, EvalError> {
    if predictions.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &label) in predictions.iter().zip(labels) {
        match (p >= threshold, label.is_positive()) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, true) => cm.fn_ += 1,
            (false, false) => cm.tn += 1,
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics(cm: &ConfusionMatrix) -> Metrics {
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    let recall = ratio(cm.tp, cm.tp + cm.fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    Metrics {
        accuracy: ratio(cm.tp + cm.tn, cm.total()),
        precision,
        recall,
        f1,
    }
}

pub fn format_metric(value: Option<f64>) -> String {
    value.map_or_else(|| UNDEFINED.to_string(), |v| format!("{v:.4}"))
}

/// K disjoint validation folds covering every sample index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<Vec<usize>>,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    pub fn validation(&self, fold: usize) -> &[usize] {
        &self.folds[fold]
    }

    /// Every index outside `fold`, ascending.
    pub fn training(&self, fold: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|&(f, _)| f != fold)
            .flat_map(|(_, ids)| ids.iter().copied())
            .collect();
        out.sort_unstable();
        out
    }
}

/// Stratified K-fold plan. Each label's shuffled indices are dealt round-robin,
/// and the dealing position carries over from one label to the next so that
/// fold sizes also stay within one of each other.
pub fn kfold(labels: &[Label], k: usize, seed: u64) -> Result<FoldPlan, EvalError> {
    if k < 2 {
        return Err(EvalError::TooFewFolds(k));
    }
    let mut folds = vec![Vec::new(); k];
    let mut offset = 0;
    for (li, &label) in Label::ALL.iter().enumerate() {
        let mut ids: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == label).collect();
        if ids.is_empty() {
            continue;
        }
        if ids.len() < k {
            return Err(EvalError::TooFewSamples {
                label,
                count: ids.len(),
                k,
            });
        }
        ids.shuffle(&mut substream(seed, li as u64));
        for (j, id) in ids.iter().enumerate() {
            folds[(offset + j) % k].push(*id);
        }
        offset += ids.len();
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(FoldPlan { folds })
}

/// Trains on one fold's training indices and scores its validation indices.
pub trait FoldTrainer: Sync {
    type Error: std::error::Error + Send + Sync + 'static;

    /// Probabilities for `validation`, in the same order.
    fn fit_predict(&self, fold: usize, training: &[usize], validation: &[usize]) -> Result<Vec<f64>, Self::Error>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: Option<f64>,
    /// Population standard deviation over the folds where the metric is defined.
    pub stddev: Option<f64>,
    pub defined_folds: usize,
}

impl MetricSummary {
    pub fn over(values: impl IntoIterator<Item = Option<f64>>) -> Self {
        let defined: Vec<f64> = values.into_iter().flatten().collect();
        if defined.is_empty() {
            return MetricSummary {
                mean: None,
                stddev: None,
                defined_folds: 0,
            };
        }
        let n = defined.len() as f64;
        let mean = defined.iter().sum::<f64>() / n;
        let var = defined.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        MetricSummary {
            mean: Some(mean),
            stddev: Some(var.sqrt()),
            defined_folds: defined.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub train_size: usize,
    pub validation_size: usize,
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValReport {
    pub folds: Vec<FoldResult>,
    pub accuracy: MetricSummary,
    pub precision: MetricSummary,
    pub recall: MetricSummary,
    pub f1: MetricSummary,
}

impl CrossValReport {
    /// Per-fold rows followed by `mean` and `stddev` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["fold", "tp", "fp", "fn", "tn", "accuracy", "precision", "recall", "f1"])?;
        for f in &self.folds {
            let c = &f.confusion;
            let m = &f.metrics;
            w.write_record([
                f.fold.to_string(),
                c.tp.to_string(),
                c.fp.to_string(),
                c.fn_.to_string(),
                c.tn.to_string(),
                format_metric(m.accuracy),
                format_metric(m.precision),
                format_metric(m.recall),
                format_metric(m.f1),
            ])?;
        }
        let summaries = [&self.accuracy, &self.precision, &self.recall, &self.f1];
        for (name, pick) in [("mean", 0), ("stddev", 1)] {
            let mut row = vec![
                name.to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
            ];
            row.extend(
                summaries
                    .iter()
                    .map(|s| format_metric(if pick == 0 { s.mean } else { s.stddev })),
            );
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn mean_metrics(&self) -> Metrics {
        Metrics {
            accuracy: self.accuracy.mean,
            precision: self.precision.mean,
            recall: self.recall.mean,
            f1: self.f1.mean,
        }
    }
}

/// Runs `trainer` on every fold of a stratified plan. Folds may run
/// concurrently; results are ordered by fold index.
pub fn cross_validate<T: FoldTrainer>(
    trainer: &T,
    labels: &[Label],
    k: usize,
    seed: u64,
    exec: Execution,
) -> Result<CrossValReport, EvalError> {
    let plan = kfold(labels, k, seed)?;
    let fold_ids: Vec<usize> = (0..k).collect();
    let results = par::map(exec, &fold_ids, |&fold| -> Result<FoldResult, EvalError> {
        let validation = plan.validation(fold);
        let training = plan.training(fold);
        let held: BTreeSet<usize> = validation.iter().copied().collect();
        if training.iter().any(|i| held.contains(i)) {
            return Err(EvalError::Leakage { fold });
        }
        let probs = trainer
            .fit_predict(fold, &training, validation)
            .map_err(|e| EvalError::Fold {
                fold,
                source: Box::new(e),
            })?;
        let fold_labels: Vec<Label> = validation.iter().map(|&i| labels[i]).collect();
        let cm = confusion(&probs, &fold_labels, DEFAULT_THRESHOLD)?;
        Ok(FoldResult {
            fold,
            train_size: training.len(),
            validation_size: validation.len(),
            confusion: cm,
            metrics: metrics(&cm),
        })
    });
    let folds = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let summary = |pick: fn(&Metrics) -> Option<f64>| MetricSummary::over(folds.iter().map(|f| pick(&f.metrics)));
    Ok(CrossValReport {
        accuracy: summary(|m| m.accuracy),
        precision: summary(|m| m.precision),
        recall: summary(|m| m.recall),
        f1: summary(|m| m.f1),
        folds,
    })
}

/// One row of the model comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: String,
    pub metrics: Metrics,
}

/// `Model,Accuracy,Precision,Recall,F1`
pub fn write_comparison_csv<W: Write>(rows: &[ComparisonRow], writer: W) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["Model", "Accuracy", "Precision", "Recall", "F1"])?;
    for row in rows {
        let m = &row.metrics;
        w.write_record([
            row.model.clone(),
            format_metric(m.accuracy),
            format_metric(m.precision),
            format_metric(m.recall),
            format_metric(m.f1),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Cross-validation trainer for the recurrent classifier. Each fold holds out
/// a stratified `holdout` fraction of its training indices for early
/// stopping; with `holdout` 0 the training loss is monitored instead.
pub struct ClassifierTrainer<'a> {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub examples: &'a [Example],
    pub holdout: f64,
}

impl ClassifierTrainer<'_> {
    fn inner_splits(&self, fold: usize, training: &[usize]) -> Splits {
        let mut train = Vec::new();
        let mut validation = Vec::new();
        for (li, &label) in Label::ALL.iter().enumerate() {
            let mut ids: Vec<usize> = training
                .iter()
                .copied()
                .filter(|&i| self.examples[i].label == label)
                .collect();
            ids.shuffle(&mut substream(
                self.train.seed,
                (fold * Label::ALL.len() + li) as u64 + 1000,
            ));
            let n_hold = (ids.len() as f64 * self.holdout).round() as usize;
            let n_hold = n_hold.min(ids.len().saturating_sub(1));
            validation.extend(&ids[..n_hold]);
            train.extend(&ids[n_hold..]);
        }
        train.sort_unstable();
        validation.sort_unstable();
        Splits {
            train,
            validation,
            test: Vec::new(),
            dropped: Vec::new(),
        }
    }

    pub fn fit(&self, fold: usize, training: &[usize]) -> Result<(Classifier, nn::History), NnError> {
        let splits = self.inner_splits(fold, training);
        let mut tc = self.train.clone();
        tc.seed = crate::rng::stream_id(&[self.train.seed, fold as u64]);
        nn::train(&self.model, self.examples, &splits, &tc)
    }
}

impl FoldTrainer for ClassifierTrainer<'_> {
    type Error = NnError;

    fn fit_predict(&self, fold: usize, training: &[usize], validation: &[usize]) -> Result<Vec<f64>, NnError> {
        let (model, history) = self.fit(fold, training)?;
        log::info!(
            "fold {fold}: best epoch {} of {}",
            history.best_epoch,
            history.stopped_epoch()
        );
        validation
            .iter()
            .map(|&i| model.predict(&self.examples[i].seq))
            .collect()
    }
}

/// Cross-validation over token documents. Each fold builds its vocabulary
/// from its own training documents only, so held-out tokens encode as OOV.
pub struct DocumentTrainer<'a> {
    /// `vocab_size` and `max_len` are overwritten per fold.
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub documents: &'a [Document],
    pub cap: usize,
    pub max_len: usize,
    pub stoplist: &'a Stoplist,
    pub holdout: f64,
}

impl FoldTrainer for DocumentTrainer<'_> {
    type Error = NnError;

    fn fit_predict(&self, fold: usize, training: &[usize], validation: &[usize]) -> Result<Vec<f64>, NnError> {
        let vocab = build_vocab_on(self.documents, Some(training), self.cap, self.stoplist)
            .map_err(|e| NnError::Config(format!("fold {fold} vocabulary: {e}")))?;
        let examples = encode_documents(self.documents, &vocab, self.max_len, self.train.exec);
        let inner = ClassifierTrainer {
            model: ModelConfig {
                vocab_size: vocab.len(),
                max_len: self.max_len,
                ..self.model.clone()
            },
            train: self.train.clone(),
            examples: &examples,
            holdout: self.holdout,
        };
        inner.fit_predict(fold, training, validation)
    }
}
