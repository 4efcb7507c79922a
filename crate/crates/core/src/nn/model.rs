//! Classifier: embedding → (Bi)LSTM last hidden state → dropout → dense+ReLU
//! → dropout → sigmoid.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::lstm::{LstmCell, StepCache};
use super::tensor::{add_assign, axpy, dot, sigmoid, softplus, Matrix};
use super::NnError;
use crate::par::{self, Execution};
use crate::rng::substream;
use crate::script::Label;
use crate::tokenizer::{TokenSequence, PAD_ID, RESERVED_IDS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Ranked vocabulary entries, excluding the two reserved ids.
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub dense_dim: usize,
    pub dropout: f64,
    pub bidirectional: bool,
    pub max_len: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: 6000,
            embed_dim: 128,
            hidden_dim: 64,
            dense_dim: 64,
            dropout: 0.5,
            bidirectional: false,
            max_len: 400,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        let dims = [
            ("vocab_size", self.vocab_size),
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("dense_dim", self.dense_dim),
            ("max_len", self.max_len),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(NnError::Config(format!("{name} must be positive")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(NnError::Config(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        Ok(())
    }

    pub fn embedding_rows(&self) -> usize {
        self.vocab_size + RESERVED_IDS as usize
    }

    /// Width of the recurrent feature fed to the dense head.
    pub fn feature_dim(&self) -> usize {
        if self.bidirectional {
            2 * self.hidden_dim
        } else {
            self.hidden_dim
        }
    }
}

/// Everything learnable except the embedding table.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub forward: LstmCell,
    pub backward: Option<LstmCell>,
    /// dense_dim × feature_dim
    pub dense_weights: Matrix,
    pub dense_bias: Vec<f64>,
    pub output_weights: Vec<f64>,
    /// Single element.
    pub output_bias: Vec<f64>,
}

impl Weights {
    pub fn zeros(config: &ModelConfig) -> Self {
        let cell = || LstmCell::zeros(config.embed_dim, config.hidden_dim);
        Weights {
            forward: cell(),
            backward: config.bidirectional.then(cell),
            dense_weights: Matrix::zeros(config.dense_dim, config.feature_dim()),
            dense_bias: vec![0.0; config.dense_dim],
            output_weights: vec![0.0; config.dense_dim],
            output_bias: vec![0.0],
        }
    }

    fn init<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Self {
        let forward = LstmCell::init(config.embed_dim, config.hidden_dim, rng);
        let backward = config
            .bidirectional
            .then(|| LstmCell::init(config.embed_dim, config.hidden_dim, rng));
        let feat = config.feature_dim();
        let dense_weights = Matrix::uniform(config.dense_dim, feat, 1.0 / (feat as f64).sqrt(), rng);
        let out_limit = 1.0 / (config.dense_dim as f64).sqrt();
        let output_weights = Matrix::uniform(1, config.dense_dim, out_limit, rng).as_slice().to_vec();
        Weights {
            forward,
            backward,
            dense_weights,
            dense_bias: vec![0.0; config.dense_dim],
            output_weights,
            output_bias: vec![0.0],
        }
    }

    /// Named tensors in canonical order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = self.forward.tensors("fwd");
        if let Some(cell) = &self.backward {
            out.extend(cell.tensors("bwd"));
        }
        let d = &self.dense_weights;
        out.push(("dense.weight".into(), vec![d.rows(), d.cols()], d.as_slice()));
        out.push(("dense.bias".into(), vec![self.dense_bias.len()], &self.dense_bias));
        out.push((
            "output.weight".into(),
            vec![1, self.output_weights.len()],
            &self.output_weights,
        ));
        out.push(("output.bias".into(), vec![1], &self.output_bias));
        out
    }

    /// Mutable views in the same order as [`Weights::tensors`].
    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.forward.slices_mut();
        if let Some(cell) = &mut self.backward {
            out.extend(cell.slices_mut());
        }
        out.push(self.dense_weights.as_mut_slice());
        out.push(&mut self.dense_bias);
        out.push(&mut self.output_weights);
        out.push(&mut self.output_bias);
        out
    }

    fn add(&mut self, other: &Weights) {
        let theirs: Vec<&[f64]> = other.tensors().into_iter().map(|(_, _, s)| s).collect();
        for (mine, theirs) in self.slices_mut().into_iter().zip(theirs) {
            add_assign(mine, theirs);
        }
    }

    fn scale(&mut self, k: f64) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|v| *v *= k);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, _, s)| s.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// One labeled, encoded sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    pub seq: TokenSequence,
    pub label: Label,
}

/// Parameter gradients. Embedding gradients are kept per touched row.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub embedding: BTreeMap<u32, Vec<f64>>,
    pub weights: Weights,
}

impl Gradients {
    fn zeros(config: &ModelConfig) -> Self {
        Gradients {
            embedding: BTreeMap::new(),
            weights: Weights::zeros(config),
        }
    }

    fn add(&mut self, other: &Gradients) {
        for (&id, row) in &other.embedding {
            match self.embedding.get_mut(&id) {
                Some(mine) => add_assign(mine, row),
                None => {
                    self.embedding.insert(id, row.clone());
                }
            }
        }
        self.weights.add(&other.weights);
    }

    fn scale(&mut self, k: f64) {
        self.embedding
            .values_mut()
            .for_each(|row| row.iter_mut().for_each(|v| *v *= k));
        self.weights.scale(k);
    }

    pub fn max_abs(&self) -> f64 {
        self.embedding
            .values()
            .flatten()
            .fold(self.weights.max_abs(), |m, v| m.max(v.abs()))
    }
}

/// Mean loss and mean gradients over a batch.
#[derive(Debug, Clone)]
pub struct BatchGradients {
    pub loss: f64,
    pub grads: Gradients,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub config: ModelConfig,
    /// (vocab_size + 2) × embed_dim; row 0 is padding and never read.
    pub embedding: Matrix,
    pub weights: Weights,
}

/// Intermediate values of one forward pass, kept for backpropagation.
struct Trace<'m> {
    ids: Vec<u32>,
    xs: Vec<&'m [f64]>,
    fwd_caches: Vec<StepCache>,
    bwd_caches: Vec<StepCache>,
    feature_mask: Option<Vec<f64>>,
    feature: Vec<f64>,
    pre_dense: Vec<f64>,
    dense_mask: Option<Vec<f64>>,
    dense_out: Vec<f64>,
    logit: f64,
}

fn dropout_mask<R: Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..len)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect()
}

fn apply_mask(v: &mut [f64], mask: &Option<Vec<f64>>) {
    if let Some(mask) = mask {
        v.iter_mut().zip(mask).for_each(|(x, m)| *x *= m);
    }
}

fn scatter_rows<'a>(rows: &mut BTreeMap<u32, Vec<f64>>, ids: impl Iterator<Item = &'a u32>, grads: &[Vec<f64>]) {
    for (&id, dx) in ids.zip(grads) {
        rows.entry(id)
            .and_modify(|row| add_assign(row, dx))
            .or_insert_with(|| dx.clone());
    }
}

impl Classifier {
    /// Seeded initialization: embedding and weights uniform in `±1/√fan_in`,
    /// forget-gate biases 1, other biases 0.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, NnError> {
        config.validate()?;
        let mut rng = substream(seed, 0);
        let limit = 1.0 / (config.embed_dim as f64).sqrt();
        let mut embedding = Matrix::uniform(config.embedding_rows(), config.embed_dim, limit, &mut rng);
        embedding.row_mut(PAD_ID as usize).fill(0.0);
        let weights = Weights::init(&config, &mut rng);
        Ok(Classifier {
            config,
            embedding,
            weights,
        })
    }

    /// All parameters zero.
    pub fn zeros(config: ModelConfig) -> Result<Self, NnError> {
        config.validate()?;
        Ok(Classifier {
            embedding: Matrix::zeros(config.embedding_rows(), config.embed_dim),
            weights: Weights::zeros(&config),
            config,
        })
    }

    /// Named tensors in checkpoint order, starting with the embedding.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let e = &self.embedding;
        let mut out = vec![("embedding".to_string(), vec![e.rows(), e.cols()], e.as_slice())];
        out.extend(self.weights.tensors());
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![self.embedding.as_mut_slice()];
        out.extend(self.weights.slices_mut());
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, _, s)| s.len()).sum()
    }

    fn check_sequence(&self, seq: &TokenSequence) -> Result<Vec<u32>, NnError> {
        if seq.ids.len() != self.config.max_len {
            return Err(NnError::Shape(format!(
                "sequence length {} != max_len {}",
                seq.ids.len(),
                self.config.max_len
            )));
        }
        let rows = self.embedding.rows();
        if let Some(&id) = seq.ids.iter().find(|&&id| id as usize >= rows) {
            return Err(NnError::IdOutOfRange { id, rows });
        }
        Ok(seq.ids.iter().copied().filter(|&id| id != PAD_ID).collect())
    }

    /// Recurrent feature: the forward last hidden state, concatenated with
    /// the backward cell's last hidden state over the reversed tokens when
    /// bidirectional. Padding steps are skipped.
    pub fn last_hidden(&self, seq: &TokenSequence) -> Result<Vec<f64>, NnError> {
        let ids = self.check_sequence(seq)?;
        let xs: Vec<&[f64]> = ids.iter().map(|&id| self.embedding.row(id as usize)).collect();
        let mut feature = self.weights.forward.run(xs.iter().copied()).h;
        if let Some(cell) = &self.weights.backward {
            feature.extend(cell.run(xs.iter().rev().copied()).h);
        }
        Ok(feature)
    }

    /// Inference-mode probability of the malicious class.
    pub fn predict(&self, seq: &TokenSequence) -> Result<f64, NnError> {
        Ok(sigmoid(self.trace::<rand_chacha::ChaCha8Rng>(seq, None)?.logit))
    }

    /// Probability with dropout drawn from `rng` when given, identity otherwise.
    pub fn forward<R: Rng + ?Sized>(&self, seq: &TokenSequence, dropout_rng: Option<&mut R>) -> Result<f64, NnError> {
        Ok(sigmoid(self.trace(seq, dropout_rng)?.logit))
    }

    pub fn predict_all(&self, seqs: &[TokenSequence], exec: Execution) -> Result<Vec<f64>, NnError> {
        par::map(exec, seqs, |s| self.predict(s)).into_iter().collect()
    }

    fn trace<R: Rng + ?Sized>(&self, seq: &TokenSequence, mut rng: Option<&mut R>) -> Result<Trace<'_>, NnError> {
        let ids = self.check_sequence(seq)?;
        let xs: Vec<&[f64]> = ids.iter().map(|&id| self.embedding.row(id as usize)).collect();
        let (fwd_state, fwd_caches) = self.weights.forward.run_cached(xs.iter().copied());
        let mut feature = fwd_state.h;
        let mut bwd_caches = Vec::new();
        if let Some(cell) = &self.weights.backward {
            let (state, caches) = cell.run_cached(xs.iter().rev().copied());
            feature.extend(state.h);
            bwd_caches = caches;
        }
        let rate = self.config.dropout;
        let feature_mask = rng
            .as_deref_mut()
            .filter(|_| rate > 0.0)
            .map(|r| dropout_mask(feature.len(), rate, r));
        apply_mask(&mut feature, &feature_mask);

        let mut pre_dense = self.weights.dense_bias.clone();
        self.weights.dense_weights.matvec_acc(&feature, &mut pre_dense);
        let mut dense_out: Vec<f64> = pre_dense.iter().map(|&a| a.max(0.0)).collect();
        let dense_mask = rng
            .filter(|_| rate > 0.0)
            .map(|r| dropout_mask(dense_out.len(), rate, r));
        apply_mask(&mut dense_out, &dense_mask);
        let logit = dot(&self.weights.output_weights, &dense_out) + self.weights.output_bias[0];
        Ok(Trace {
            ids,
            xs,
            fwd_caches,
            bwd_caches,
            feature_mask,
            feature,
            pre_dense,
            dense_mask,
            dense_out,
            logit,
        })
    }

    /// Binary cross-entropy of one sample, from the logit.
    fn bce(logit: f64, label: Label) -> f64 {
        softplus(logit) - label.target() * logit
    }

    fn sample_rng(dropout_seed: Option<u64>, index: usize) -> Option<rand_chacha::ChaCha8Rng> {
        dropout_seed.map(|s| substream(s, index as u64))
    }

    /// Mean loss over `batch`. With `dropout_seed`, sample `i` draws its
    /// dropout masks from stream `i` of that seed, the same masks
    /// [`Classifier::gradients`] uses.
    pub fn loss(&self, batch: &[Example], dropout_seed: Option<u64>, exec: Execution) -> Result<f64, NnError> {
        if batch.is_empty() {
            return Err(NnError::EmptyBatch);
        }
        let losses = par::map_indexed(exec, batch, |i, ex| {
            let mut rng = Self::sample_rng(dropout_seed, i);
            let trace = self.trace(&ex.seq, rng.as_mut())?;
            Ok::<f64, NnError>(Self::bce(trace.logit, ex.label))
        });
        let mut total = 0.0;
        for (ex, loss) in batch.iter().zip(losses) {
            let loss: f64 = loss?;
            if !loss.is_finite() {
                return Err(NnError::NonFiniteLoss { sample: ex.id.clone() });
            }
            total += loss;
        }
        Ok(total / batch.len() as f64)
    }

    /// Mean BCE loss and its gradients with respect to every parameter.
    /// Per-sample gradients are summed in batch order, so the result does not
    /// depend on `exec`.
    pub fn gradients(
        &self,
        batch: &[Example],
        dropout_seed: Option<u64>,
        exec: Execution,
    ) -> Result<BatchGradients, NnError> {
        if batch.is_empty() {
            return Err(NnError::EmptyBatch);
        }
        let per_sample = par::map_indexed(exec, batch, |i, ex| {
            let mut rng = Self::sample_rng(dropout_seed, i);
            self.sample_gradients(ex, rng.as_mut())
        });
        let mut total = Gradients::zeros(&self.config);
        let mut loss = 0.0;
        for (ex, result) in batch.iter().zip(per_sample) {
            let (l, g) = result?;
            if !l.is_finite() {
                return Err(NnError::NonFiniteLoss { sample: ex.id.clone() });
            }
            loss += l;
            total.add(&g);
        }
        let n = batch.len() as f64;
        total.scale(1.0 / n);
        Ok(BatchGradients {
            loss: loss / n,
            grads: total,
        })
    }

    fn sample_gradients<R: Rng + ?Sized>(
        &self,
        ex: &Example,
        rng: Option<&mut R>,
    ) -> Result<(f64, Gradients), NnError> {
        let trace = self.trace(&ex.seq, rng)?;
        let loss = Self::bce(trace.logit, ex.label);
        let mut g = Gradients::zeros(&self.config);
        let w = &self.weights;

        let dz = sigmoid(trace.logit) - ex.label.target();
        axpy(dz, &trace.dense_out, &mut g.weights.output_weights);
        g.weights.output_bias[0] += dz;

        let mut d_pre: Vec<f64> = w.output_weights.iter().map(|&wo| dz * wo).collect();
        apply_mask(&mut d_pre, &trace.dense_mask);
        for (d, &a) in d_pre.iter_mut().zip(&trace.pre_dense) {
            if a <= 0.0 {
                *d = 0.0;
            }
        }
        g.weights.dense_weights.outer_acc(&d_pre, &trace.feature);
        add_assign(&mut g.weights.dense_bias, &d_pre);
        let mut d_feature = vec![0.0; trace.feature.len()];
        w.dense_weights.matvec_t_acc(&d_pre, &mut d_feature);
        apply_mask(&mut d_feature, &trace.feature_mask);

        let hidden = self.config.hidden_dim;
        let dx_fwd = w.forward.backward(
            &trace.xs,
            &trace.fwd_caches,
            &d_feature[..hidden],
            &mut g.weights.forward,
        );
        scatter_rows(&mut g.embedding, trace.ids.iter(), &dx_fwd);
        if let (Some(cell), Some(cell_grads)) = (&w.backward, g.weights.backward.as_mut()) {
            let reversed: Vec<&[f64]> = trace.xs.iter().rev().copied().collect();
            let dx_bwd = cell.backward(&reversed, &trace.bwd_caches, &d_feature[hidden..], cell_grads);
            scatter_rows(&mut g.embedding, trace.ids.iter().rev(), &dx_bwd);
        }
        Ok((loss, g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(bidirectional: bool) -> ModelConfig {
        ModelConfig {
            vocab_size: 5,
            embed_dim: 3,
            hidden_dim: 2,
            dense_dim: 4,
            dropout: 0.5,
            bidirectional,
            max_len: 6,
        }
    }

    fn seq(ids: &[u32], max_len: usize) -> TokenSequence {
        let mut v = ids.to_vec();
        v.resize(max_len, 0);
        TokenSequence {
            ids: v,
            true_len: ids.len(),
        }
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig::default().validate().is_ok());
        let full_dropout = ModelConfig {
            dropout: 1.0,
            ..ModelConfig::default()
        };
        assert!(full_dropout.validate().is_err());
        let no_hidden = ModelConfig {
            hidden_dim: 0,
            ..ModelConfig::default()
        };
        assert!(no_hidden.validate().is_err());
    }

    #[test]
    fn embedding_has_reserved_rows() {
        let model = Classifier::zeros(ModelConfig::default()).unwrap();
        assert_eq!(model.embedding.shape(), (6002, 128));
        assert_eq!((model.embedding.rows() - 2) * model.embedding.cols(), 768_000);
    }

    #[test]
    fn zero_model_predicts_half() {
        for bi in [false, true] {
            let model = Classifier::zeros(tiny(bi)).unwrap();
            assert_eq!(model.predict(&seq(&[2, 3, 4], 6)).unwrap(), 0.5);
        }
    }

    #[test]
    fn padding_only_gives_zero_hidden() {
        let model = Classifier::new(tiny(true), 3).unwrap();
        assert_eq!(model.last_hidden(&seq(&[], 6)).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn bad_sequences_are_rejected() {
        let model = Classifier::new(tiny(false), 3).unwrap();
        assert!(matches!(model.predict(&seq(&[2], 5)), Err(NnError::Shape(_))));
        assert!(matches!(
            model.predict(&seq(&[7], 6)),
            Err(NnError::IdOutOfRange { id: 7, rows: 7 })
        ));
    }

    #[test]
    fn inference_is_repeatable_and_dropout_changes_output() {
        let model = Classifier::new(tiny(false), 11).unwrap();
        let s = seq(&[2, 3, 6, 1], 6);
        assert_eq!(model.predict(&s).unwrap(), model.predict(&s).unwrap());
        let outputs: Vec<f64> = (0..8)
            .map(|k| model.forward(&s, Some(&mut substream(k, 0))).unwrap())
            .collect();
        assert!(outputs.iter().any(|&p| p != model.predict(&s).unwrap()));
    }

    #[test]
    fn gradients_do_not_depend_on_execution_mode() {
        let model = Classifier::new(tiny(true), 5).unwrap();
        let batch: Vec<Example> = (0..6)
            .map(|i| Example {
                id: format!("s{i}"),
                seq: seq(&[2 + (i % 5) as u32, 3, 1], 6),
                label: if i % 2 == 0 { Label::Benign } else { Label::Malicious },
            })
            .collect();
        let a = model.gradients(&batch, Some(9), Execution::Sequential).unwrap();
        let b = model.gradients(&batch, Some(9), Execution::Parallel).unwrap();
        assert_eq!(a.loss, b.loss);
        assert_eq!(a.grads, b.grads);
        assert_eq!(a.loss, model.loss(&batch, Some(9), Execution::Sequential).unwrap());
        assert!(model.gradients(&[], None, Execution::Sequential).is_err());
    }
}
