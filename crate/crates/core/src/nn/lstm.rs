//! LSTM cell: gate equations, sequence unrolling and backpropagation through
//! time.
//!
//! Per step, with `x` the input and `(h, c)` the previous state:
//!
//! ```text
//! i = σ(W_xi x + U_hi h + b_i)      g = tanh(W_xg x + U_hg h + b_g)
//! f = σ(W_xf x + U_hf h + b_f)      o = σ(W_xo x + U_ho h + b_o)
//! c' = f ⊙ c + i ⊙ g                h' = tanh(c') ⊙ o
//! ```

use rand::Rng;

use super::tensor::{add_assign, sigmoid, to_f32_grid, Matrix};
use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input = 0,
    Candidate = 1,
    Forget = 2,
    Output = 3,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Input, Gate::Candidate, Gate::Forget, Gate::Output];

    /// Subscript letter used in tensor names (`w_xi`, `u_hg`, `b_f`, ...).
    pub fn letter(self) -> char {
        match self {
            Gate::Input => 'i',
            Gate::Candidate => 'g',
            Gate::Forget => 'f',
            Gate::Output => 'o',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    /// `W_x•`, hidden × embed, indexed by [`Gate`].
    pub input_weights: [Matrix; 4],
    /// `U_h•`, hidden × hidden.
    pub recurrent_weights: [Matrix; 4],
    /// `b_•`, length hidden.
    pub biases: [Vec<f64>; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden_dim: usize) -> Self {
        LstmState {
            h: vec![0.0; hidden_dim],
            c: vec![0.0; hidden_dim],
        }
    }
}

/// Gate activations of one step, indexed by [`Gate`].
#[derive(Debug, Clone, PartialEq)]
pub struct GateValues(pub [Vec<f64>; 4]);

impl GateValues {
    pub fn get(&self, gate: Gate) -> &[f64] {
        &self.0[gate as usize]
    }
}

/// Everything one step needs for its backward pass.
#[derive(Debug, Clone)]
pub(crate) struct StepCache {
    gates: GateValues,
    prev: LstmState,
    tanh_c: Vec<f64>,
}

impl LstmCell {
    pub fn zeros(embed_dim: usize, hidden_dim: usize) -> Self {
        LstmCell {
            input_weights: std::array::from_fn(|_| Matrix::zeros(hidden_dim, embed_dim)),
            recurrent_weights: std::array::from_fn(|_| Matrix::zeros(hidden_dim, hidden_dim)),
            biases: std::array::from_fn(|_| vec![0.0; hidden_dim]),
        }
    }

    /// Uniform `±1/√fan_in` weights, zero biases except the forget gate at 1.
    pub fn init<R: Rng + ?Sized>(embed_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        let wx = 1.0 / (embed_dim as f64).sqrt();
        let uh = 1.0 / (hidden_dim as f64).sqrt();
        let mut cell = LstmCell {
            input_weights: std::array::from_fn(|_| Matrix::uniform(hidden_dim, embed_dim, wx, rng)),
            recurrent_weights: std::array::from_fn(|_| Matrix::uniform(hidden_dim, hidden_dim, uh, rng)),
            biases: std::array::from_fn(|_| vec![0.0; hidden_dim]),
        };
        cell.biases[Gate::Forget as usize].fill(to_f32_grid(1.0));
        cell
    }

    pub fn embed_dim(&self) -> usize {
        self.input_weights[0].cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.input_weights[0].rows()
    }

    pub fn check_shapes(&self) -> Result<(), NnError> {
        let (hidden, embed) = (self.hidden_dim(), self.embed_dim());
        let ok = self.input_weights.iter().all(|m| m.shape() == (hidden, embed))
            && self.recurrent_weights.iter().all(|m| m.shape() == (hidden, hidden))
            && self.biases.iter().all(|b| b.len() == hidden);
        if ok {
            Ok(())
        } else {
            Err(NnError::Shape("inconsistent LSTM cell tensor shapes".into()))
        }
    }

    fn check_inputs(&self, x: &[f64], prev: &LstmState) -> Result<(), NnError> {
        let hidden = self.hidden_dim();
        if x.len() != self.embed_dim() || prev.h.len() != hidden || prev.c.len() != hidden {
            return Err(NnError::Shape(format!(
                "step expects x[{}], h[{hidden}], c[{hidden}]; got x[{}], h[{}], c[{}]",
                self.embed_dim(),
                x.len(),
                prev.h.len(),
                prev.c.len()
            )));
        }
        Ok(())
    }

    /// One step; returns the new state and the gate activations.
    pub fn step(&self, x: &[f64], prev: &LstmState) -> Result<(LstmState, GateValues), NnError> {
        self.check_inputs(x, prev)?;
        Ok(self.step_unchecked(x, prev))
    }

    fn step_unchecked(&self, x: &[f64], prev: &LstmState) -> (LstmState, GateValues) {
        let gates = GateValues(std::array::from_fn(|k| {
            let mut z = self.biases[k].clone();
            self.input_weights[k].matvec_acc(x, &mut z);
            self.recurrent_weights[k].matvec_acc(&prev.h, &mut z);
            if k == Gate::Candidate as usize {
                z.iter_mut().for_each(|v| *v = v.tanh());
            } else {
                z.iter_mut().for_each(|v| *v = sigmoid(*v));
            }
            z
        }));
        let [i, g, f, o] = &gates.0;
        let c: Vec<f64> = (0..prev.c.len()).map(|k| f[k] * prev.c[k] + i[k] * g[k]).collect();
        let h = c.iter().zip(o).map(|(ck, ok)| ck.tanh() * ok).collect();
        (LstmState { h, c }, gates)
    }

    /// Runs the cell over `inputs` from a zero state, returning the last state.
    pub fn run<'a, I>(&self, inputs: I) -> LstmState
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut state = LstmState::zeros(self.hidden_dim());
        for x in inputs {
            state = self.step_unchecked(x, &state).0;
        }
        state
    }

    pub(crate) fn run_cached<'a, I>(&self, inputs: I) -> (LstmState, Vec<StepCache>)
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut state = LstmState::zeros(self.hidden_dim());
        let mut caches = Vec::new();
        for x in inputs {
            let (next, gates) = self.step_unchecked(x, &state);
            let tanh_c = next.c.iter().map(|v| v.tanh()).collect();
            caches.push(StepCache {
                gates,
                prev: state,
                tanh_c,
            });
            state = next;
        }
        (state, caches)
    }

    /// Backpropagation through time from a gradient on the last hidden state.
    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to each step's input, in step order.
    pub(crate) fn backward(
        &self,
        inputs: &[&[f64]],
        caches: &[StepCache],
        d_last_h: &[f64],
        grads: &mut LstmCell,
    ) -> Vec<Vec<f64>> {
        let hidden = self.hidden_dim();
        let mut dh = d_last_h.to_vec();
        let mut dc_next = vec![0.0; hidden];
        let mut dx_all = vec![Vec::new(); caches.len()];
        for t in (0..caches.len()).rev() {
            let cache = &caches[t];
            let [i, g, f, o] = &cache.gates.0;
            let mut d_pre: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; hidden]);
            let mut dc_prev = vec![0.0; hidden];
            for k in 0..hidden {
                let tc = cache.tanh_c[k];
                let d_o = dh[k] * tc;
                let dc = dc_next[k] + dh[k] * o[k] * (1.0 - tc * tc);
                let d_i = dc * g[k];
                let d_g = dc * i[k];
                let d_f = dc * cache.prev.c[k];
                dc_prev[k] = dc * f[k];
                d_pre[Gate::Input as usize][k] = d_i * i[k] * (1.0 - i[k]);
                d_pre[Gate::Candidate as usize][k] = d_g * (1.0 - g[k] * g[k]);
                d_pre[Gate::Forget as usize][k] = d_f * f[k] * (1.0 - f[k]);
                d_pre[Gate::Output as usize][k] = d_o * o[k] * (1.0 - o[k]);
            }
            let x = inputs[t];
            let mut dx = vec![0.0; x.len()];
            let mut dh_prev = vec![0.0; hidden];
            for (gate, da) in d_pre.iter().enumerate() {
                grads.input_weights[gate].outer_acc(da, x);
                grads.recurrent_weights[gate].outer_acc(da, &cache.prev.h);
                add_assign(&mut grads.biases[gate], da);
                self.input_weights[gate].matvec_t_acc(da, &mut dx);
                self.recurrent_weights[gate].matvec_t_acc(da, &mut dh_prev);
            }
            dx_all[t] = dx;
            dh = dh_prev;
            dc_next = dc_prev;
        }
        dx_all
    }

    /// Named tensors in canonical order: `w_x•`, `u_h•`, `b_•` for i, g, f, o.
    pub fn tensors(&self, prefix: &str) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = Vec::with_capacity(12);
        for gate in Gate::ALL {
            let m = &self.input_weights[gate as usize];
            out.push((
                format!("{prefix}.w_x{}", gate.letter()),
                vec![m.rows(), m.cols()],
                m.as_slice(),
            ));
        }
        for gate in Gate::ALL {
            let m = &self.recurrent_weights[gate as usize];
            out.push((
                format!("{prefix}.u_h{}", gate.letter()),
                vec![m.rows(), m.cols()],
                m.as_slice(),
            ));
        }
        for gate in Gate::ALL {
            let b = &self.biases[gate as usize];
            out.push((format!("{prefix}.b_{}", gate.letter()), vec![b.len()], b.as_slice()));
        }
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(12);
        out.extend(self.input_weights.iter_mut().map(Matrix::as_mut_slice));
        out.extend(self.recurrent_weights.iter_mut().map(Matrix::as_mut_slice));
        out.extend(self.biases.iter_mut().map(Vec::as_mut_slice));
        out
    }
}

/// Single LSTM step as a free function.
pub fn lstm_step(x: &[f64], prev: &LstmState, params: &LstmCell) -> Result<LstmState, NnError> {
    params.step(x, prev).map(|(state, _)| state)
}
