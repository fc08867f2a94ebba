use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::SuccessCounts;
use crate::net::{InferenceSession, NetworkParams};
use crate::types::{AssignmentLabel, FrameInput, SequenceRecord};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwapConfig {
    pub trials: usize,
    /// Frames during which two robots' broadcasts are exchanged.
    pub swap_len: usize,
    /// Frames after restoration within which recovery must happen.
    pub horizon: usize,
    /// Consecutive correct frames that count as recovered.
    pub stable_frames: usize,
    /// Minimum frames of normal operation before a swap starts.
    pub warmup: usize,
    pub seed: u64,
}

impl Default for SwapConfig {
    fn default() -> Self {
        SwapConfig { trials: 50, swap_len: 150, horizon: 150, stable_frames: 3, warmup: 150, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapTrial {
    pub sequence: usize,
    /// Zero-based robot indices whose broadcasts were exchanged.
    pub robots: (usize, usize),
    pub start: usize,
    pub swap_len: usize,
    /// Frames from restoration to the first frame of a stable correct run.
    pub recovery_frames: Option<usize>,
    /// Identification accuracy of the pair just before and during the swap.
    pub pre_accuracy: f64,
    pub during_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapReport {
    pub config: SwapConfig,
    pub recovered: usize,
    pub recovery_fraction: f64,
    /// Mean over recovered trials.
    pub mean_recovery_frames: f64,
    pub trials: Vec<SwapTrial>,
}

/// Per-frame state of the swapped pair: `None` if neither robot was
/// detected, otherwise whether every detection of either was labelled
/// correctly, plus the counts.
fn pair_status(truth: &AssignmentLabel, predicted: &AssignmentLabel, pair: (usize, usize)) -> (u32, u32) {
    let ids = [pair.0 + 1, pair.1 + 1];
    let mut seen = 0;
    let mut correct = 0;
    for (t, p) in truth.classes.iter().zip(&predicted.classes) {
        if ids.contains(t) {
            seen += 1;
            correct += u32::from(t == p);
        }
    }
    (correct, seen)
}

fn accuracy(statuses: &[(u32, u32)]) -> f64 {
    let (c, s) = statuses.iter().fold((0, 0), |(a, b), &(c, s)| (a + c, b + s));
    if s == 0 {
        1.0
    } else {
        f64::from(c) / f64::from(s)
    }
}

/// Frames from `restore` to the start of the first run of `stable`
/// correct frames. Frames where neither robot was seen are skipped.
fn recovery_frame(status: &[(u32, u32)], restore: usize, stable: usize) -> Option<usize> {
    let mut streak = 0;
    let mut first = 0;
    for (k, &(c, s)) in status.iter().enumerate().skip(restore) {
        if s == 0 {
            continue;
        }
        if c < s {
            streak = 0;
            continue;
        }
        if streak == 0 {
            first = k;
        }
        streak += 1;
        if streak >= stable {
            return Some(first - restore);
        }
    }
    None
}

/// Exchanges the broadcasts of `robots` for `swap_len` frames from `start`,
/// runs the network from the beginning of the sequence and measures how
/// long identification of the pair takes to recover once the true
/// broadcasts return.
pub fn heading_swap_trial(
    seq: &SequenceRecord,
    params: &NetworkParams,
    robots: (usize, usize),
    start: usize,
    cfg: &SwapConfig,
) -> Result<SwapTrial> {
    let n = seq.n_robots();
    if n < 2 || robots.0 == robots.1 || robots.0 >= n || robots.1 >= n {
        return Err(Error::Config(format!("cannot swap robots {robots:?} among {n}")));
    }
    let restore = start + cfg.swap_len;
    let end = (restore + cfg.horizon).min(seq.len());
    if restore > seq.len() {
        return Err(Error::Config("swap window runs past the end of the sequence".into()));
    }
    let mut session = InferenceSession::new(params)?;
    let mut status = Vec::with_capacity(end);
    for (t, f) in seq.frames[..end].iter().enumerate() {
        let mut input: FrameInput = f.input.clone();
        if (start..restore).contains(&t) {
            input.broadcasts.swap(robots.0, robots.1);
        }
        let pred = session.step(&input)?;
        status.push(pair_status(&f.label, &pred.label, robots));
    }
    let recovery_frames =
        if cfg.swap_len == 0 { Some(0) } else { recovery_frame(&status, restore, cfg.stable_frames) };
    let pre = start.saturating_sub(cfg.swap_len.max(1));
    Ok(SwapTrial {
        sequence: 0,
        robots,
        start,
        swap_len: cfg.swap_len,
        recovery_frames,
        pre_accuracy: accuracy(&status[pre..start]),
        during_accuracy: accuracy(&status[start..restore]),
    })
}

/// Repeated swap trials at random sequences, robot pairs and start frames.
pub fn heading_swap_test(sequences: &[SequenceRecord], params: &NetworkParams, cfg: &SwapConfig) -> Result<SwapReport> {
    let needed = cfg.warmup + cfg.swap_len + cfg.horizon;
    let usable: Vec<usize> = (0..sequences.len()).filter(|&i| sequences[i].len() >= needed).collect();
    if usable.is_empty() && cfg.trials > 0 {
        return Err(Error::Config(format!("swap test needs sequences of at least {needed} frames")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut trials = Vec::with_capacity(cfg.trials);
    for _ in 0..cfg.trials {
        let i = usable[rng.random_range(0..usable.len())];
        let seq = &sequences[i];
        let n = seq.n_robots();
        let a = rng.random_range(0..n);
        let b = (a + rng.random_range(1..n.max(2))) % n;
        let start = rng.random_range(cfg.warmup..=seq.len() - cfg.swap_len - cfg.horizon);
        let mut t = heading_swap_trial(seq, params, (a.min(b), a.max(b)), start, cfg)?;
        t.sequence = i;
        trials.push(t);
    }
    let times: Vec<usize> = trials.iter().filter_map(|t| t.recovery_frames).collect();
    Ok(SwapReport {
        config: cfg.clone(),
        recovered: times.len(),
        recovery_fraction: if trials.is_empty() { 1.0 } else { times.len() as f64 / trials.len() as f64 },
        mean_recovery_frames: if times.is_empty() { 0.0 } else { times.iter().sum::<usize>() as f64 / times.len() as f64 },
        trials,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShuffleResult {
    pub ordered: f64,
    pub shuffled: f64,
    pub ordered_counts: SuccessCounts,
    pub shuffled_counts: SuccessCounts,
}

fn run_in_order(seq: &SequenceRecord, params: &NetworkParams, order: &[usize]) -> Result<SuccessCounts> {
    let mut session = InferenceSession::new(params)?;
    let mut c = SuccessCounts::default();
    for &i in order {
        let f = &seq.frames[i];
        let pred = session.step(&f.input)?;
        c.add_frame(&f.input, &f.label, &pred.label)?;
    }
    Ok(c)
}

/// Success of the network on frames in temporal order versus the same
/// frames in a random order, state carried normally in both.
pub fn shuffle_control_test(sequences: &[SequenceRecord], params: &NetworkParams, seed: u64) -> Result<ShuffleResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ordered = SuccessCounts::default();
    let mut shuffled = SuccessCounts::default();
    for seq in sequences {
        let order: Vec<usize> = (0..seq.len()).collect();
        ordered.merge(run_in_order(seq, params, &order)?);
        let mut perm = order;
        perm.shuffle(&mut rng);
        shuffled.merge(run_in_order(seq, params, &perm)?);
    }
    Ok(ShuffleResult {
        ordered: ordered.rate(),
        shuffled: shuffled.rate(),
        ordered_counts: ordered,
        shuffled_counts: shuffled,
    })
}
