use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encode::input_dim;
use crate::{Error, Result};

pub const DEFAULT_HIDDEN: usize = 64;
pub const DEFAULT_LAYERS: usize = 5;

/// Network shape. `K = N + 1` output classes per detection slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub n_robots: usize,
    pub max_detections: usize,
    pub hidden: usize,
    pub layers: usize,
}

impl Architecture {
    pub fn new(n_robots: usize, max_detections: usize) -> Self {
        Architecture { n_robots, max_detections, hidden: DEFAULT_HIDDEN, layers: DEFAULT_LAYERS }
    }

    pub fn classes(&self) -> usize {
        self.n_robots + 1
    }

    pub fn input_dim(&self) -> usize {
        input_dim(self.n_robots, self.max_detections)
    }

    pub fn layer_input_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_dim()
        } else {
            self.hidden
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_robots == 0 || self.max_detections == 0 || self.hidden == 0 || self.layers == 0 {
            return Err(Error::Shape(format!("degenerate architecture {self:?}")));
        }
        Ok(())
    }
}

/// Gate blocks of the stacked LSTM weight matrices, in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Output = 2,
    /// Input modulation `g`.
    Cell = 3,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Input, Gate::Forget, Gate::Output, Gate::Cell];
}

/// One LSTM layer. The four gate matrices are stacked row-wise in
/// [`Gate`] order: `w_x` is `4H × input_dim`, `w_h` is `4H × H`, `bias` is
/// `4H`. So `W_xi` is rows `0..H` of `w_x`, `W_hf` rows `H..2H` of `w_h`,
/// and so on.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayerParams {
    pub input_dim: usize,
    pub hidden: usize,
    pub w_x: Vec<f64>,
    pub w_h: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LstmLayerParams {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        LstmLayerParams {
            input_dim,
            hidden,
            w_x: vec![0.0; 4 * hidden * input_dim],
            w_h: vec![0.0; 4 * hidden * hidden],
            bias: vec![0.0; 4 * hidden],
        }
    }

    /// `H × input_dim` block of `w_x` for one gate.
    pub fn input_weights(&self, gate: Gate) -> &[f64] {
        let n = self.hidden * self.input_dim;
        &self.w_x[gate as usize * n..(gate as usize + 1) * n]
    }

    /// `H × H` block of `w_h` for one gate.
    pub fn recurrent_weights(&self, gate: Gate) -> &[f64] {
        let n = self.hidden * self.hidden;
        &self.w_h[gate as usize * n..(gate as usize + 1) * n]
    }

    pub fn gate_bias(&self, gate: Gate) -> &[f64] {
        &self.bias[gate as usize * self.hidden..(gate as usize + 1) * self.hidden]
    }

    fn check(&self) -> Result<()> {
        let h = self.hidden;
        if self.w_x.len() != 4 * h * self.input_dim || self.w_h.len() != 4 * h * h || self.bias.len() != 4 * h {
            return Err(Error::Shape(format!(
                "LSTM layer buffers ({}, {}, {}) inconsistent with input {} hidden {h}",
                self.w_x.len(),
                self.w_h.len(),
                self.bias.len(),
                self.input_dim
            )));
        }
        Ok(())
    }
}

/// The `M` output submodules, each an affine map `H → K`, stacked as one
/// `(M·K) × H` matrix with head `m` occupying rows `m·K..(m+1)·K`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputParams {
    pub w: Vec<f64>,
    pub bias: Vec<f64>,
}

/// A borrowed parameter tensor. `regularized` tensors enter the L2 penalty;
/// biases do not.
pub struct Tensor<'a> {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: &'a [f64],
    pub regularized: bool,
}

/// All trainable values. Gradients and optimizer moments use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub layers: Vec<LstmLayerParams>,
    pub output: OutputParams,
}

impl Weights {
    pub fn zeros(arch: &Architecture) -> Self {
        let layers = (0..arch.layers)
            .map(|l| LstmLayerParams::zeros(arch.layer_input_dim(l), arch.hidden))
            .collect();
        let rows = arch.max_detections * arch.classes();
        Weights { layers, output: OutputParams { w: vec![0.0; rows * arch.hidden], bias: vec![0.0; rows] } }
    }

    /// Tensors in canonical order with their logical shapes.
    pub fn tensors(&self) -> Vec<Tensor<'_>> {
        let mut out = Vec::with_capacity(3 * self.layers.len() + 2);
        for (l, p) in self.layers.iter().enumerate() {
            let h4 = 4 * p.hidden;
            out.push(Tensor { name: format!("lstm{l}.w_x"), rows: h4, cols: p.input_dim, data: &p.w_x, regularized: true });
            out.push(Tensor { name: format!("lstm{l}.w_h"), rows: h4, cols: p.hidden, data: &p.w_h, regularized: true });
            out.push(Tensor { name: format!("lstm{l}.bias"), rows: h4, cols: 1, data: &p.bias, regularized: false });
        }
        let rows = self.output.bias.len();
        let cols = if rows == 0 { 0 } else { self.output.w.len() / rows };
        out.push(Tensor { name: "out.w".into(), rows, cols, data: &self.output.w, regularized: true });
        out.push(Tensor { name: "out.bias".into(), rows, cols: 1, data: &self.output.bias, regularized: false });
        out
    }

    /// Mutable buffers in the same order as [`Weights::tensors`], paired
    /// with their regularization flag.
    pub fn buffers_mut(&mut self) -> Vec<(&mut [f64], bool)> {
        let mut out: Vec<(&mut [f64], bool)> = Vec::with_capacity(3 * self.layers.len() + 2);
        for p in &mut self.layers {
            out.push((&mut p.w_x, true));
            out.push((&mut p.w_h, true));
            out.push((&mut p.bias, false));
        }
        out.push((&mut self.output.w, true));
        out.push((&mut self.output.bias, false));
        out
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn fill(&mut self, v: f64) {
        for (b, _) in self.buffers_mut() {
            b.fill(v);
        }
    }

    /// Concatenation of all tensors in canonical order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|t| t.data.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.len() {
            return Err(Error::Shape(format!("flat vector {} != {}", flat.len(), self.len())));
        }
        let mut off = 0;
        for (b, _) in self.buffers_mut() {
            b.copy_from_slice(&flat[off..off + b.len()]);
            off += b.len();
        }
        Ok(())
    }

    /// `Σ W²` over regularized tensors.
    pub fn l2_sum(&self) -> f64 {
        self.tensors().iter().filter(|t| t.regularized).flat_map(|t| t.data.iter()).map(|w| w * w).sum()
    }

    pub fn norm(&self) -> f64 {
        self.tensors().iter().flat_map(|t| t.data.iter()).map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    fn check(&self, arch: &Architecture) -> Result<()> {
        if self.layers.len() != arch.layers {
            return Err(Error::Shape(format!("{} layers, expected {}", self.layers.len(), arch.layers)));
        }
        for (l, p) in self.layers.iter().enumerate() {
            if p.input_dim != arch.layer_input_dim(l) || p.hidden != arch.hidden {
                return Err(Error::Shape(format!("layer {l} shape mismatch")));
            }
            p.check()?;
        }
        let rows = arch.max_detections * arch.classes();
        if self.output.bias.len() != rows || self.output.w.len() != rows * arch.hidden {
            return Err(Error::Shape("output layer shape mismatch".into()));
        }
        Ok(())
    }
}

/// Per-feature input standardization.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalization {
    const MIN_STD: f64 = 1e-6;

    pub fn identity(dim: usize) -> Self {
        Normalization { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }

    /// Mean and standard deviation of each feature over `rows`. Features
    /// with (near) zero spread get unit scale.
    pub fn fit<'a>(dim: usize, rows: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let mut count = 0usize;
        let mut mean = vec![0.0; dim];
        let mut m2 = vec![0.0; dim];
        for row in rows {
            count += 1;
            for ((x, mu), s) in row.iter().zip(mean.iter_mut()).zip(m2.iter_mut()) {
                let d = x - *mu;
                *mu += d / count as f64;
                *s += d * (x - *mu);
            }
        }
        if count == 0 {
            return Self::identity(dim);
        }
        let std = m2
            .iter()
            .map(|s| {
                let sd = (s / count as f64).sqrt();
                if sd > Self::MIN_STD {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Normalization { mean, std }
    }

    pub fn apply(&self, x: &mut [f64]) {
        for ((v, mu), sd) in x.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = (*v - mu) / sd;
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.mean.len() != dim || self.std.len() != dim {
            return Err(Error::Shape(format!("normalization length {} != {dim}", self.mean.len())));
        }
        if self.mean.iter().any(|m| !m.is_finite()) || self.std.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::NonFinite("normalization statistics"));
        }
        Ok(())
    }
}

/// Everything needed to run the network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub arch: Architecture,
    pub weights: Weights,
    pub norm: Normalization,
}

impl NetworkParams {
    /// Uniform `±1/√fan_in` initialization (fan-in of a gate is
    /// `input_dim + H`), forget-gate bias `+1`, identity normalization.
    pub fn init<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let mut weights = Weights::zeros(&arch);
        for p in &mut weights.layers {
            let bound = 1.0 / ((p.input_dim + p.hidden) as f64).sqrt();
            for w in p.w_x.iter_mut().chain(p.w_h.iter_mut()) {
                *w = rng.random_range(-bound..bound);
            }
            let h = p.hidden;
            p.bias[h..2 * h].fill(1.0);
        }
        let bound = 1.0 / (arch.hidden as f64).sqrt();
        for w in &mut weights.output.w {
            *w = rng.random_range(-bound..bound);
        }
        Ok(NetworkParams { arch, weights, norm: Normalization::identity(arch.input_dim()) })
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        self.weights.check(&self.arch)?;
        self.norm.validate(self.arch.input_dim())?;
        if !self.weights.all_finite() {
            return Err(Error::NonFinite("network weights"));
        }
        Ok(())
    }
}
