//! Single-step LSTM cell and the streaming forward pass.

use super::params::{Architecture, Gate, LstmLayerParams, NetworkParams};
use crate::encode::encode_into;
use crate::linalg::{dot, sigmoid, softmax};
use crate::types::FrameInput;
use crate::{Error, Result};

/// Hidden and cell vectors of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LayerState {
    pub fn zeros(hidden: usize) -> Self {
        LayerState { h: vec![0.0; hidden], c: vec![0.0; hidden] }
    }
}

/// Recurrent state of the whole stack.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenState {
    pub layers: Vec<LayerState>,
}

impl HiddenState {
    pub fn zeros(arch: &Architecture) -> Self {
        HiddenState { layers: (0..arch.layers).map(|_| LayerState::zeros(arch.hidden)).collect() }
    }

    pub fn reset(&mut self) {
        for l in &mut self.layers {
            l.h.fill(0.0);
            l.c.fill(0.0);
        }
    }
}

/// One LSTM update:
///
/// ```text
/// i = σ(W_xi x + W_hi h + b_i)    f = σ(W_xf x + W_hf h + b_f)
/// o = σ(W_xo x + W_ho h + b_o)    g = tanh(W_xc x + W_hc h + b_c)
/// c' = f ⊙ c + i ⊙ g              h' = o ⊙ tanh(c')
/// ```
pub fn lstm_cell(x: &[f64], prev: &LayerState, p: &LstmLayerParams) -> Result<LayerState> {
    let h = p.hidden;
    if x.len() != p.input_dim || prev.h.len() != h || prev.c.len() != h {
        return Err(Error::Shape(format!(
            "lstm_cell: input {} / state ({}, {}) vs layer ({}, {h})",
            x.len(),
            prev.h.len(),
            prev.c.len(),
            p.input_dim
        )));
    }
    let mut next = LayerState::zeros(h);
    let mut pre = [0.0; 4];
    for j in 0..h {
        for gate in Gate::ALL {
            let row = gate as usize * h + j;
            pre[gate as usize] = dot(&p.w_x[row * p.input_dim..(row + 1) * p.input_dim], x)
                + dot(&p.w_h[row * h..(row + 1) * h], &prev.h)
                + p.bias[row];
        }
        let i = sigmoid(pre[0]);
        let f = sigmoid(pre[1]);
        let o = sigmoid(pre[2]);
        let g = pre[3].tanh();
        let c = f * prev.c[j] + i * g;
        next.c[j] = c;
        next.h[j] = o * c.tanh();
    }
    Ok(next)
}

/// Row-stochastic `M × K` matrix of per-slot class probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentProbs {
    pub slots: usize,
    pub classes: usize,
    pub data: Vec<f64>,
}

impl AssignmentProbs {
    pub fn row(&self, slot: usize) -> &[f64] {
        &self.data[slot * self.classes..(slot + 1) * self.classes]
    }

    pub fn get(&self, slot: usize, class: usize) -> f64 {
        self.data[slot * self.classes + class]
    }
}

/// Normalized network input for a frame.
pub fn network_input(frame: &FrameInput, params: &NetworkParams) -> Result<Vec<f64>> {
    let arch = &params.arch;
    let mut x = vec![0.0; arch.input_dim()];
    encode_into(frame, arch.n_robots, arch.max_detections, &mut x)?;
    params.norm.apply(&mut x);
    Ok(x)
}

/// Top hidden vector → `M` softmax heads.
pub(crate) fn output_heads(top: &[f64], params: &NetworkParams) -> AssignmentProbs {
    let arch = &params.arch;
    let (k, hdim) = (arch.classes(), arch.hidden);
    let out = &params.weights.output;
    let mut data: Vec<f64> =
        (0..arch.max_detections * k).map(|r| dot(&out.w[r * hdim..(r + 1) * hdim], top) + out.bias[r]).collect();
    for row in data.chunks_exact_mut(k) {
        softmax(row);
    }
    AssignmentProbs { slots: arch.max_detections, classes: k, data }
}

/// One streaming step: normalize, run the stack, apply the output heads.
/// Pure in `(frame, state, params)`.
pub fn forward(
    frame: &FrameInput,
    state: &HiddenState,
    params: &NetworkParams,
) -> Result<(AssignmentProbs, HiddenState)> {
    if state.layers.len() != params.arch.layers {
        return Err(Error::Shape(format!("state has {} layers", state.layers.len())));
    }
    let x = network_input(frame, params)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("normalized input"));
    }
    let mut next: Vec<LayerState> = Vec::with_capacity(state.layers.len());
    for (p, prev) in params.weights.layers.iter().zip(&state.layers) {
        let layer = lstm_cell(next.last().map_or(&x, |s| &s.h), prev, p)?;
        next.push(layer);
    }
    let top = &next.last().expect("at least one layer").h;
    Ok((output_heads(top, params), HiddenState { layers: next }))
}
