//! Truncated-BPTT training loop.
//!
//! Each sequence starts from a zero state and is consumed in order: it is
//! cut into contiguous chunks (the logging unit), each chunk into windows of
//! at most `bptt_window` frames. The recurrent state is carried across
//! windows and chunks of the same sequence, gradients are truncated at
//! window boundaries, and every window is one optimizer step. Only the order
//! of sequences is shuffled between epochs. With `batch_sequences > 1`,
//! that many sequences advance in lockstep and their gradients are summed.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::bptt::{BatchState, Bptt, Window};
use super::params::{Architecture, NetworkParams, Normalization, Weights, DEFAULT_HIDDEN, DEFAULT_LAYERS};
use crate::encode::encode_into;
use crate::types::SequenceRecord;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub lr_decay: f64,
    /// L2 coefficient λ.
    pub l2: f64,
    /// Truncation depth ρ.
    pub bptt_window: usize,
    pub chunk_len: usize,
    pub epochs: usize,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Sequences processed in lockstep per optimizer step.
    pub batch_sequences: usize,
    pub hidden_size: usize,
    pub lstm_layers: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.004,
            lr_decay: 1e-4,
            l2: 1e-4,
            bptt_window: 150,
            chunk_len: 500,
            epochs: 10,
            grad_clip: 5.0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_sequences: 1,
            hidden_size: DEFAULT_HIDDEN,
            lstm_layers: DEFAULT_LAYERS,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            lr_decay: self.lr_decay,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            grad_clip: (self.grad_clip > 0.0).then_some(self.grad_clip),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.bptt_window == 0 || self.chunk_len == 0 || !(self.l2 >= 0.0) {
            return Err(Error::Config("need learning_rate > 0, bptt_window >= 1, chunk_len >= 1, l2 >= 0".into()));
        }
        if self.batch_sequences == 0 || self.hidden_size == 0 || self.lstm_layers == 0 {
            return Err(Error::Config("batch_sequences, hidden_size and lstm_layers must be positive".into()));
        }
        if !(self.lr_decay >= 0.0 && (0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err(Error::Config("invalid optimizer constants".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub epoch: usize,
    /// Optimizer step after the chunk's last window.
    pub step: u64,
    /// Dataset index of the first sequence in the batch.
    pub sequence: usize,
    pub chunk: usize,
    /// Mean negative log-likelihood per frame over the chunk.
    pub loss: f64,
    pub learning_rate: f64,
    /// Largest pre-clip gradient norm among the chunk's windows.
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub entries: Vec<LogEntry>,
}

impl TrainLog {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("epoch,step,sequence,chunk,loss,learning_rate,grad_norm\n");
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                e.epoch, e.step, e.sequence, e.chunk, e.loss, e.learning_rate, e.grad_norm
            ));
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Mean chunk loss over one epoch.
    pub fn epoch_loss(&self, epoch: usize) -> Option<f64> {
        let v: Vec<f64> = self.entries.iter().filter(|e| e.epoch == epoch).map(|e| e.loss).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// One sequence, encoded and normalized once.
struct Prepared {
    len: usize,
    inputs: Vec<f64>,
    labels: Vec<usize>,
}

fn prepare(seq: &SequenceRecord, arch: &Architecture, norm: Option<&Normalization>) -> Result<Prepared> {
    let (n, m, q) = (arch.n_robots, arch.max_detections, arch.input_dim());
    let mut inputs = vec![0.0; seq.len() * q];
    let mut labels = Vec::with_capacity(seq.len() * m);
    for (f, row) in seq.frames.iter().zip(inputs.chunks_exact_mut(q)) {
        encode_into(&f.input, n, m, row)?;
        if let Some(norm) = norm {
            norm.apply(row);
        }
        labels.extend_from_slice(&f.label.classes);
    }
    Ok(Prepared { len: seq.len(), inputs, labels })
}

/// Normalization statistics over every frame of a dataset.
pub fn fit_normalization(dataset: &[SequenceRecord], arch: &Architecture) -> Result<Normalization> {
    let q = arch.input_dim();
    let raw = dataset.iter().map(|s| prepare(s, arch, None)).collect::<Result<Vec<_>>>()?;
    Ok(Normalization::fit(q, raw.iter().flat_map(|p| p.inputs.chunks_exact(q))))
}

/// Stateful trainer. After an error the parameters are those of the last
/// successful step.
pub struct Trainer {
    config: TrainConfig,
    params: NetworkParams,
    adam: AdamState,
    bptt: Bptt,
    grads: Weights,
    rng: ChaCha8Rng,
    data: Vec<Prepared>,
    log: TrainLog,
    epoch: usize,
    window_inputs: Vec<f64>,
    window_labels: Vec<usize>,
}

impl Trainer {
    /// Starts from `init` (fine-tuning; its normalization is kept) or from
    /// a fresh initialization with statistics fitted on `dataset`.
    pub fn new(dataset: &[SequenceRecord], config: TrainConfig, init: Option<NetworkParams>) -> Result<Self> {
        config.validate()?;
        let first = dataset.first().ok_or_else(|| Error::Config("empty training set".into()))?;
        let (n, m) = (first.n_robots(), first.max_detections());
        if let Some(bad) = dataset.iter().find(|s| s.n_robots() != n || s.max_detections() != m) {
            return Err(Error::Config(format!(
                "mixed dataset: ({n}, {m}) and ({}, {})",
                bad.n_robots(),
                bad.max_detections()
            )));
        }
        if config.batch_sequences > 1 && dataset.iter().any(|s| s.len() != first.len()) {
            return Err(Error::Config("batched training needs equal sequence lengths".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = match init {
            Some(p) => {
                p.validate()?;
                if (p.arch.n_robots, p.arch.max_detections) != (n, m) {
                    return Err(Error::Shape(format!(
                        "checkpoint is for N={}, M={}, dataset has N={n}, M={m}",
                        p.arch.n_robots, p.arch.max_detections
                    )));
                }
                p
            }
            None => {
                let arch =
                    Architecture { n_robots: n, max_detections: m, hidden: config.hidden_size, layers: config.lstm_layers };
                let mut p = NetworkParams::init(arch, &mut rng)?;
                p.norm = fit_normalization(dataset, &arch)?;
                p
            }
        };
        let data = dataset.iter().map(|s| prepare(s, &params.arch, Some(&params.norm))).collect::<Result<_>>()?;
        Ok(Trainer {
            adam: AdamState::new(&params.weights),
            bptt: Bptt::new(params.arch),
            grads: Weights::zeros(&params.arch),
            rng,
            data,
            log: TrainLog::default(),
            epoch: 0,
            window_inputs: Vec::new(),
            window_labels: Vec::new(),
            config,
            params,
        })
    }

    pub fn params(&self) -> &NetworkParams {
        &self.params
    }

    pub fn into_params(self) -> NetworkParams {
        self.params
    }

    pub fn log(&self) -> &TrainLog {
        &self.log
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    pub fn run(&mut self) -> Result<()> {
        while self.epoch < self.config.epochs {
            self.run_epoch()?;
        }
        Ok(())
    }

    /// One pass over the dataset; returns the mean per-frame loss.
    pub fn run_epoch(&mut self) -> Result<f64> {
        let mut order: Vec<usize> = (0..self.data.len()).collect();
        order.shuffle(&mut self.rng);
        let adam = self.config.adam();
        let (q, m) = (self.params.arch.input_dim(), self.params.arch.max_detections);
        let mut total = 0.0;
        let mut frames = 0usize;
        for batch in order.chunks(self.config.batch_sequences) {
            let b = batch.len();
            let len = self.data[batch[0]].len;
            let mut state = BatchState::zeros(&self.params.arch, b);
            for (chunk, chunk_start) in (0..len).step_by(self.config.chunk_len).enumerate() {
                let chunk_end = (chunk_start + self.config.chunk_len).min(len);
                let mut chunk_nll = 0.0;
                let mut max_norm: f64 = 0.0;
                let mut lr = adam.learning_rate_at(self.adam.step);
                for start in (chunk_start..chunk_end).step_by(self.config.bptt_window) {
                    let end = (start + self.config.bptt_window).min(chunk_end);
                    let steps = end - start;
                    self.window_inputs.clear();
                    self.window_labels.clear();
                    for t in start..end {
                        for &s in batch {
                            let d = &self.data[s];
                            self.window_inputs.extend_from_slice(&d.inputs[t * q..(t + 1) * q]);
                            self.window_labels.extend_from_slice(&d.labels[t * m..(t + 1) * m]);
                        }
                    }
                    let window =
                        Window { steps, batch: b, inputs: &self.window_inputs, labels: &self.window_labels };
                    let step = self.adam.step + 1;
                    let out = self
                        .bptt
                        .run(&self.params, &window, &state, self.config.l2, Some(&mut self.grads))
                        .map_err(|e| match e {
                            Error::Diverged { reason, .. } => Error::Diverged { step, reason },
                            other => other,
                        })?;
                    let info = adam_step(&mut self.params.weights, &mut self.grads, &mut self.adam, &adam)
                        .map_err(|e| Error::Diverged { step, reason: e.to_string() })?;
                    chunk_nll += out.nll;
                    max_norm = max_norm.max(info.grad_norm);
                    lr = info.learning_rate;
                    state = out.state;
                }
                let n_frames = (chunk_end - chunk_start) * b;
                total += chunk_nll;
                frames += n_frames;
                self.log.entries.push(LogEntry {
                    epoch: self.epoch,
                    step: self.adam.step,
                    sequence: batch[0],
                    chunk,
                    loss: chunk_nll / n_frames as f64,
                    learning_rate: lr,
                    grad_norm: max_norm,
                });
            }
        }
        self.epoch += 1;
        Ok(if frames == 0 { 0.0 } else { total / frames as f64 })
    }
}

/// Trains for `config.epochs` epochs.
pub fn train(
    dataset: &[SequenceRecord],
    config: TrainConfig,
    init: Option<NetworkParams>,
) -> Result<(NetworkParams, TrainLog)> {
    let mut trainer = Trainer::new(dataset, config, init)?;
    trainer.run()?;
    let log = trainer.log().clone();
    Ok((trainer.into_params(), log))
}

/// Mean per-frame negative log-likelihood of `dataset` under `params`,
/// each sequence streamed from a zero state.
pub fn dataset_loss(params: &NetworkParams, dataset: &[SequenceRecord]) -> Result<f64> {
    let mut bptt = Bptt::new(params.arch);
    let (mut total, mut frames) = (0.0, 0usize);
    for seq in dataset {
        let p = prepare(seq, &params.arch, Some(&params.norm))?;
        let window = Window { steps: p.len, batch: 1, inputs: &p.inputs, labels: &p.labels };
        let out = bptt.run(params, &window, &BatchState::zeros(&params.arch, 1), 0.0, None)?;
        total += out.nll;
        frames += p.len;
    }
    Ok(if frames == 0 { 0.0 } else { total / frames as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{generate_sequences, SimConfig};

    fn small() -> TrainConfig {
        TrainConfig { hidden_size: 12, lstm_layers: 2, bptt_window: 40, chunk_len: 100, epochs: 3, ..TrainConfig::default() }
    }

    fn data(seed: u64, n: usize, len: usize) -> Vec<SequenceRecord> {
        generate_sequences(&SimConfig { seed, ..SimConfig::default() }, n, len).unwrap()
    }

    #[test]
    fn loss_falls_below_uniform() {
        let train_set = data(1, 4, 300);
        let uniform = 3.0 * 3f64.ln();
        let (params, log) = train(&train_set, TrainConfig { epochs: 6, ..small() }, None).unwrap();
        let first = log.epoch_loss(0).unwrap();
        let last = log.epoch_loss(5).unwrap();
        assert!(last < first, "{first} -> {last}");
        let held_out = dataset_loss(&params, &data(2, 2, 300)).unwrap();
        assert!(held_out < 0.8 * uniform, "held-out loss {held_out}");
        // 4 sequences × 3 chunks per epoch, 3 windows per chunk.
        assert_eq!(log.entries.len(), 6 * 4 * 3);
        assert_eq!(log.entries.last().unwrap().step, 6 * 4 * 3 * 3);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let train_set = data(3, 2, 120);
        let cfg = TrainConfig { epochs: 2, ..small() };
        let (a, la) = train(&train_set, cfg.clone(), None).unwrap();
        let (b, lb) = train(&train_set, cfg, None).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
    }

    #[test]
    fn batched_training_runs_and_logs_per_batch() {
        let train_set = data(4, 4, 200);
        let cfg = TrainConfig { batch_sequences: 2, epochs: 1, ..small() };
        let (_, log) = train(&train_set, cfg, None).unwrap();
        assert_eq!(log.entries.len(), 2 * 2);
        assert!(log.entries.iter().all(|e| e.loss.is_finite()));
        let uneven = vec![data(5, 1, 100).remove(0), data(6, 1, 150).remove(0)];
        assert!(Trainer::new(&uneven, TrainConfig { batch_sequences: 2, ..small() }, None).is_err());
    }

    #[test]
    fn fine_tuning_keeps_normalization() {
        let (base, _) = train(&data(7, 2, 100), TrainConfig { epochs: 1, ..small() }, None).unwrap();
        let other = data(8, 2, 100);
        let (tuned, _) = train(&other, TrainConfig { epochs: 1, ..small() }, Some(base.clone())).unwrap();
        assert_eq!(tuned.norm, base.norm);
        assert_ne!(tuned.weights, base.weights);
        assert_ne!(fit_normalization(&other, &base.arch).unwrap(), base.norm);
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let a = data(9, 1, 50);
        let b = generate_sequences(&SimConfig { n_robots: 3, max_detections: 5, ..SimConfig::default() }, 1, 50).unwrap();
        let mixed: Vec<_> = a.iter().chain(&b).cloned().collect();
        assert!(matches!(Trainer::new(&mixed, small(), None), Err(Error::Config(_))));
        let (p, _) = train(&a, TrainConfig { epochs: 1, ..small() }, None).unwrap();
        assert!(matches!(Trainer::new(&b, small(), Some(p)), Err(Error::Shape(_))));
        assert!(Trainer::new(&[], small(), None).is_err());
    }
}
