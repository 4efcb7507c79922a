//! Adam optimizer.

use super::model::{Classifier, Gradients};
use super::tensor::to_f32_grid;

#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update. Embedding rows absent from `grads` count as zero gradient;
    /// their moments still decay. Updated parameters are rounded to f32
    /// precision.
    pub fn step(&mut self, model: &mut Classifier, grads: &Gradients) {
        let embed_dim = model.config.embed_dim;
        let mut dense_embedding = vec![0.0; model.embedding.as_slice().len()];
        for (&id, row) in &grads.embedding {
            let start = id as usize * embed_dim;
            dense_embedding[start..start + embed_dim].copy_from_slice(row);
        }
        let mut flat: Vec<&[f64]> = vec![&dense_embedding];
        flat.extend(grads.weights.tensors().into_iter().map(|(_, _, s)| s));

        let params = model.slices_mut();
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.second = self.first.clone();
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (k, (param, grad)) in params.into_iter().zip(flat).enumerate() {
            let (m, v) = (&mut self.first[k], &mut self.second[k]);
            for j in 0..param.len() {
                let g = grad[j];
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g * g;
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                param[j] = to_f32_grid(param[j] - self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Example, ModelConfig};
    use crate::par::Execution;
    use crate::script::Label;
    use crate::tokenizer::TokenSequence;

    #[test]
    fn first_step_moves_each_parameter_by_about_lr() {
        let config = ModelConfig {
            vocab_size: 3,
            embed_dim: 2,
            hidden_dim: 2,
            dense_dim: 2,
            dropout: 0.0,
            bidirectional: false,
            max_len: 3,
        };
        let mut model = Classifier::new(config, 1).unwrap();
        let before = model.clone();
        let batch = vec![Example {
            id: "a".into(),
            seq: TokenSequence {
                ids: vec![2, 3, 0],
                true_len: 2,
            },
            label: Label::Malicious,
        }];
        let grads = model.gradients(&batch, None, Execution::Sequential).unwrap();
        let mut adam = Adam::new(1e-2);
        adam.step(&mut model, &grads.grads);
        assert_eq!(adam.steps(), 1);
        let out_before = before.weights.output_bias[0];
        let out_after = model.weights.output_bias[0];
        assert!(((out_after - out_before).abs() - 1e-2).abs() < 1e-6);
        // Untouched embedding row 4 stays put.
        assert_eq!(model.embedding.row(4), before.embedding.row(4));
        assert!(model.predict(&batch[0].seq).unwrap() > before.predict(&batch[0].seq).unwrap());
    }
}
