//! Batched window forward pass and truncated backpropagation through time.
//!
//! A window holds `T` consecutive frames of `B` independent sequences.
//! Row `t·B + b` of every activation buffer belongs to timestep `t` of
//! sequence `b`. Layers are processed one at a time over the whole window,
//! so the input-to-gate products and all weight gradients are single large
//! GEMMs and only the recurrent products run per step. Gradients stop at
//! the window's initial state.

use super::cell::HiddenState;
use super::params::{Architecture, NetworkParams, Weights};
use super::PROB_FLOOR;
use crate::linalg::{gemm, matvec_acc, matvec_t_acc, sigmoid, softmax};
use crate::{Error, Result};

/// Recurrent state of `B` sequences: per layer, `B × H` row-major `h` and `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchState {
    pub batch: usize,
    pub h: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
}

impl BatchState {
    pub fn zeros(arch: &Architecture, batch: usize) -> Self {
        BatchState {
            batch,
            h: vec![vec![0.0; batch * arch.hidden]; arch.layers],
            c: vec![vec![0.0; batch * arch.hidden]; arch.layers],
        }
    }

    pub fn from_hidden(states: &[HiddenState]) -> Self {
        let layers = states.first().map_or(0, |s| s.layers.len());
        let gather = |f: &dyn Fn(&HiddenState, usize) -> Vec<f64>| -> Vec<Vec<f64>> {
            (0..layers).map(|l| states.iter().flat_map(|s| f(s, l)).collect()).collect()
        };
        BatchState {
            batch: states.len(),
            h: gather(&|s, l| s.layers[l].h.clone()),
            c: gather(&|s, l| s.layers[l].c.clone()),
        }
    }

    pub fn hidden(&self, b: usize) -> HiddenState {
        use super::cell::LayerState;
        let hdim = self.h.first().map_or(0, |v| v.len() / self.batch.max(1));
        HiddenState {
            layers: self
                .h
                .iter()
                .zip(&self.c)
                .map(|(h, c)| LayerState {
                    h: h[b * hdim..(b + 1) * hdim].to_vec(),
                    c: c[b * hdim..(b + 1) * hdim].to_vec(),
                })
                .collect(),
        }
    }
}

/// Normalized inputs (`T·B × Q`) and class labels (`T·B × M`) of a window.
#[derive(Debug, Clone, Copy)]
pub struct Window<'a> {
    pub steps: usize,
    pub batch: usize,
    pub inputs: &'a [f64],
    pub labels: &'a [usize],
}

#[derive(Debug, Clone)]
pub struct WindowOutput {
    /// Summed negative log-likelihood over all frames and slots.
    pub nll: f64,
    /// `λ · Σ W²`.
    pub penalty: f64,
    pub state: BatchState,
}

impl WindowOutput {
    pub fn loss(&self) -> f64 {
        self.nll + self.penalty
    }
}

#[derive(Default)]
struct LayerCache {
    /// Activated gates `[i f o g]`, `T·B × 4H`.
    gates: Vec<f64>,
    /// `(T+1)·B × H`, block 0 is the initial state.
    h: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
}

/// Reusable buffers for [`Bptt::run`].
pub struct Bptt {
    arch: Architecture,
    layers: Vec<LayerCache>,
    probs: Vec<f64>,
    d_above: Vec<f64>,
    d_below: Vec<f64>,
    d_gates: Vec<f64>,
    dh_rec: Vec<f64>,
    dc_rec: Vec<f64>,
}

impl Bptt {
    pub fn new(arch: Architecture) -> Self {
        Bptt {
            arch,
            layers: (0..arch.layers).map(|_| LayerCache::default()).collect(),
            probs: Vec::new(),
            d_above: Vec::new(),
            d_below: Vec::new(),
            d_gates: Vec::new(),
            dh_rec: Vec::new(),
            dc_rec: Vec::new(),
        }
    }

    fn check(&self, params: &NetworkParams, w: &Window, init: &BatchState) -> Result<()> {
        let a = &self.arch;
        if params.arch != *a {
            return Err(Error::Shape("parameters do not match workspace architecture".into()));
        }
        let rows = w.steps * w.batch;
        if w.inputs.len() != rows * a.input_dim() || w.labels.len() != rows * a.max_detections {
            return Err(Error::Shape(format!(
                "window buffers ({}, {}) inconsistent with {} steps × {} sequences",
                w.inputs.len(),
                w.labels.len(),
                w.steps,
                w.batch
            )));
        }
        if init.batch != w.batch || init.h.len() != a.layers || init.h.iter().any(|h| h.len() != w.batch * a.hidden)
        {
            return Err(Error::Shape("initial state does not match window batch".into()));
        }
        if let Some(&bad) = w.labels.iter().find(|&&c| c > a.n_robots) {
            return Err(Error::Invariant(format!("label class {bad} exceeds N = {}", a.n_robots)));
        }
        Ok(())
    }

    /// Runs the window forward and, when `grads` is given, overwrites it with
    /// the exact gradient of `nll + λΣW²`. An empty window has zero loss and
    /// zero gradient.
    pub fn run(
        &mut self,
        params: &NetworkParams,
        window: &Window,
        init: &BatchState,
        lambda: f64,
        grads: Option<&mut Weights>,
    ) -> Result<WindowOutput> {
        self.check(params, window, init)?;
        let want_grad = grads.is_some();
        if window.steps == 0 {
            if let Some(g) = grads {
                g.fill(0.0);
            }
            return Ok(WindowOutput { nll: 0.0, penalty: 0.0, state: init.clone() });
        }
        self.forward(params, window, init);
        let nll = self.heads(params, window, want_grad);
        let penalty = lambda * params.weights.l2_sum();
        if !(nll.is_finite()) {
            return Err(Error::Diverged { step: 0, reason: format!("window loss {nll}") });
        }
        if let Some(g) = grads {
            self.backward(params, window, lambda, g);
            if !g.all_finite() {
                return Err(Error::Diverged { step: 0, reason: "non-finite gradient".into() });
            }
        }
        let (t, b, hd) = (window.steps, window.batch, self.arch.hidden);
        let state = BatchState {
            batch: b,
            h: self.layers.iter().map(|l| l.h[t * b * hd..(t + 1) * b * hd].to_vec()).collect(),
            c: self.layers.iter().map(|l| l.c[t * b * hd..(t + 1) * b * hd].to_vec()).collect(),
        };
        Ok(WindowOutput { nll, penalty, state })
    }

    fn forward(&mut self, params: &NetworkParams, w: &Window, init: &BatchState) {
        let (t_len, b) = (w.steps, w.batch);
        let hd = self.arch.hidden;
        let h4 = 4 * hd;
        let rows = t_len * b;
        for l in 0..self.arch.layers {
            let p = &params.weights.layers[l];
            let (before, rest) = self.layers.split_at_mut(l);
            let cache = &mut rest[0];
            let xin: &[f64] = if l == 0 { w.inputs } else { &before[l - 1].h[b * hd..] };

            cache.gates.resize(rows * h4, 0.0);
            cache.h.resize((t_len + 1) * b * hd, 0.0);
            cache.c.resize((t_len + 1) * b * hd, 0.0);
            cache.tanh_c.resize(rows * hd, 0.0);
            cache.h[..b * hd].copy_from_slice(&init.h[l]);
            cache.c[..b * hd].copy_from_slice(&init.c[l]);

            gemm(rows, p.input_dim, h4, &xin[..rows * p.input_dim], false, &p.w_x, true, 0.0, &mut cache.gates);
            for row in cache.gates.chunks_exact_mut(h4) {
                for (g, bias) in row.iter_mut().zip(&p.bias) {
                    *g += bias;
                }
            }

            for t in 0..t_len {
                for bi in 0..b {
                    let r = t * b + bi;
                    let (hs, cs) = (t * b * hd + bi * hd, (t + 1) * b * hd + bi * hd);
                    let g = &mut cache.gates[r * h4..(r + 1) * h4];
                    matvec_acc(&p.w_h, &cache.h[hs..hs + hd], g);
                    for j in 0..hd {
                        let i = sigmoid(g[j]);
                        let f = sigmoid(g[hd + j]);
                        let o = sigmoid(g[2 * hd + j]);
                        let gg = g[3 * hd + j].tanh();
                        g[j] = i;
                        g[hd + j] = f;
                        g[2 * hd + j] = o;
                        g[3 * hd + j] = gg;
                        let c = f * cache.c[hs + j] + i * gg;
                        let tc = c.tanh();
                        cache.c[cs + j] = c;
                        cache.tanh_c[r * hd + j] = tc;
                        cache.h[cs + j] = o * tc;
                    }
                }
            }
        }
    }

    /// Output heads and loss. With `want_grad`, `self.probs` is left holding
    /// `∂nll/∂logits`.
    fn heads(&mut self, params: &NetworkParams, w: &Window, want_grad: bool) -> f64 {
        let a = &self.arch;
        let (k, m, hd) = (a.classes(), a.max_detections, a.hidden);
        let rows = w.steps * w.batch;
        let top = &self.layers[a.layers - 1].h[w.batch * hd..];
        let out = &params.weights.output;
        self.probs.resize(rows * m * k, 0.0);
        gemm(rows, hd, m * k, top, false, &out.w, true, 0.0, &mut self.probs);
        let mut nll = 0.0;
        for (r, row) in self.probs.chunks_exact_mut(m * k).enumerate() {
            for (s, head) in row.chunks_exact_mut(k).enumerate() {
                for (v, bias) in head.iter_mut().zip(&out.bias[s * k..(s + 1) * k]) {
                    *v += bias;
                }
                softmax(head);
                let y = w.labels[r * m + s];
                let p = head[y];
                nll -= p.max(PROB_FLOOR).ln();
                if want_grad {
                    if p < PROB_FLOOR {
                        // The floored loss is locally constant.
                        head.fill(0.0);
                    } else {
                        head[y] -= 1.0;
                    }
                }
            }
        }
        nll
    }

    fn backward(&mut self, params: &NetworkParams, w: &Window, lambda: f64, grads: &mut Weights) {
        let a = self.arch;
        let (k, m, hd) = (a.classes(), a.max_detections, a.hidden);
        let h4 = 4 * hd;
        let (t_len, b) = (w.steps, w.batch);
        let rows = t_len * b;
        let out = &params.weights.output;

        let top = &self.layers[a.layers - 1].h[b * hd..];
        let dlogits = &self.probs;
        gemm(m * k, rows, hd, dlogits, true, top, false, 0.0, &mut grads.output.w);
        grads.output.bias.fill(0.0);
        for row in dlogits.chunks_exact(m * k) {
            for (g, d) in grads.output.bias.iter_mut().zip(row) {
                *g += d;
            }
        }
        self.d_above.resize(rows * hd, 0.0);
        gemm(rows, m * k, hd, dlogits, false, &out.w, false, 0.0, &mut self.d_above);

        self.d_gates.resize(rows * h4, 0.0);
        self.dh_rec.resize(b * hd, 0.0);
        self.dc_rec.resize(b * hd, 0.0);
        for l in (0..a.layers).rev() {
            let p = &params.weights.layers[l];
            let cache = &self.layers[l];
            self.dh_rec.fill(0.0);
            self.dc_rec.fill(0.0);
            for t in (0..t_len).rev() {
                for bi in 0..b {
                    let r = t * b + bi;
                    let prev = t * b * hd + bi * hd;
                    let g = &cache.gates[r * h4..(r + 1) * h4];
                    let dg = &mut self.d_gates[r * h4..(r + 1) * h4];
                    let dh_rec = &mut self.dh_rec[bi * hd..(bi + 1) * hd];
                    let dc_rec = &mut self.dc_rec[bi * hd..(bi + 1) * hd];
                    for j in 0..hd {
                        let (i, f, o, gg) = (g[j], g[hd + j], g[2 * hd + j], g[3 * hd + j]);
                        let tc = cache.tanh_c[r * hd + j];
                        let dh = self.d_above[r * hd + j] + dh_rec[j];
                        let dc = dc_rec[j] + dh * o * (1.0 - tc * tc);
                        dg[j] = dc * gg * i * (1.0 - i);
                        dg[hd + j] = dc * cache.c[prev + j] * f * (1.0 - f);
                        dg[2 * hd + j] = dh * tc * o * (1.0 - o);
                        dg[3 * hd + j] = dc * i * (1.0 - gg * gg);
                        dc_rec[j] = dc * f;
                    }
                    dh_rec.fill(0.0);
                    matvec_t_acc(&p.w_h, dg, dh_rec);
                }
            }

            let gl = &mut grads.layers[l];
            let xin: &[f64] = if l == 0 { w.inputs } else { &self.layers[l - 1].h[b * hd..] };
            gemm(h4, rows, p.input_dim, &self.d_gates, true, &xin[..rows * p.input_dim], false, 0.0, &mut gl.w_x);
            gemm(h4, rows, hd, &self.d_gates, true, &cache.h[..rows * hd], false, 0.0, &mut gl.w_h);
            gl.bias.fill(0.0);
            for row in self.d_gates.chunks_exact(h4) {
                for (g, d) in gl.bias.iter_mut().zip(row) {
                    *g += d;
                }
            }
            if l > 0 {
                self.d_below.resize(rows * hd, 0.0);
                gemm(rows, h4, p.input_dim, &self.d_gates, false, &p.w_x, false, 0.0, &mut self.d_below);
                std::mem::swap(&mut self.d_above, &mut self.d_below);
            }
        }

        if lambda != 0.0 {
            for ((g, reg), src) in grads.buffers_mut().into_iter().zip(params.weights.tensors()) {
                if reg {
                    for (gi, wi) in g.iter_mut().zip(src.data) {
                        *gi += 2.0 * lambda * wi;
                    }
                }
            }
        }
    }
}
