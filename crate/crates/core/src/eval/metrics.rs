use serde::{Deserialize, Serialize};

use crate::types::{AssignmentLabel, FrameInput, RobotTruth};
use crate::{Error, Result};

/// Correct and total identity decisions over non-empty slots. Clutter
/// detections count: predicting class 0 for one is correct.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuccessCounts {
    pub correct: u64,
    pub detections: u64,
}

impl SuccessCounts {
    /// Fraction correct; 1 when there were no detections to get wrong.
    pub fn rate(&self) -> f64 {
        if self.detections == 0 {
            1.0
        } else {
            self.correct as f64 / self.detections as f64
        }
    }

    pub fn add_frame(&mut self, input: &FrameInput, truth: &AssignmentLabel, predicted: &AssignmentLabel) -> Result<()> {
        let m = input.slots.len();
        if truth.classes.len() != m || predicted.classes.len() != m {
            return Err(Error::LengthMismatch(format!(
                "frame {}: {m} slots, {} true and {} predicted classes",
                input.t,
                truth.classes.len(),
                predicted.classes.len()
            )));
        }
        for s in input.occupied() {
            self.detections += 1;
            self.correct += u64::from(truth.classes[s] == predicted.classes[s]);
        }
        Ok(())
    }

    pub fn merge(&mut self, other: SuccessCounts) {
        self.correct += other.correct;
        self.detections += other.detections;
    }
}

/// Success rate of `predicted` against `truth` over the occupied slots of
/// `inputs`.
pub fn success_rate(inputs: &[FrameInput], truth: &[AssignmentLabel], predicted: &[AssignmentLabel]) -> Result<f64> {
    success_counts(inputs, truth, predicted).map(|c| c.rate())
}

pub fn success_counts(
    inputs: &[FrameInput],
    truth: &[AssignmentLabel],
    predicted: &[AssignmentLabel],
) -> Result<SuccessCounts> {
    if inputs.len() != truth.len() || inputs.len() != predicted.len() {
        return Err(Error::LengthMismatch(format!(
            "{} frames, {} true labels, {} predictions",
            inputs.len(),
            truth.len(),
            predicted.len()
        )));
    }
    let mut c = SuccessCounts::default();
    for ((i, t), p) in inputs.iter().zip(truth).zip(predicted) {
        c.add_frame(i, t, p)?;
    }
    Ok(c)
}

/// Running localization error. A method's estimate of a robot is the most
/// recent location it reported; robots it has never located are counted
/// separately and excluded from the mean.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LocalizationError {
    held: Vec<Option<(f64, f64)>>,
    pub sum_m: f64,
    pub pairs: u64,
    pub unestimated: u64,
}

impl LocalizationError {
    pub fn new(n_robots: usize) -> Self {
        LocalizationError { held: vec![None; n_robots], ..Default::default() }
    }

    /// Starts a new sequence; held estimates are dropped, sums kept.
    pub fn reset_sequence(&mut self) {
        self.held.iter_mut().for_each(|h| *h = None);
    }

    /// `positions` are normalized; `field` is `(width, height)` in metres.
    pub fn add_frame(&mut self, positions: &[Option<(f64, f64)>], truth: &[RobotTruth], field: (f64, f64)) -> Result<()> {
        if positions.len() != self.held.len() || truth.len() != self.held.len() {
            return Err(Error::LengthMismatch(format!(
                "{} estimates and {} truths for {} robots",
                positions.len(),
                truth.len(),
                self.held.len()
            )));
        }
        for ((held, p), t) in self.held.iter_mut().zip(positions).zip(truth) {
            if p.is_some() {
                *held = *p;
            }
            if !t.visible {
                continue;
            }
            match *held {
                Some((x, y)) => {
                    self.sum_m += (x * field.0 - t.x).hypot(y * field.1 - t.y);
                    self.pairs += 1;
                }
                None => self.unestimated += 1,
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &LocalizationError) {
        self.sum_m += other.sum_m;
        self.pairs += other.pairs;
        self.unestimated += other.unestimated;
    }

    /// Mean error in metres; 0 when nothing was compared.
    pub fn mean(&self) -> f64 {
        if self.pairs == 0 {
            0.0
        } else {
            self.sum_m / self.pairs as f64
        }
    }
}

/// Mean Euclidean error in metres over all (frame, visible robot) pairs.
/// `positions[t][r]` is the normalized estimate of robot `r` at frame `t`.
pub fn avg_localization_error(
    positions: &[Vec<Option<(f64, f64)>>],
    truth: &[Vec<RobotTruth>],
    field: (f64, f64),
) -> Result<f64> {
    if positions.len() != truth.len() {
        return Err(Error::LengthMismatch(format!("{} estimate frames, {} truth frames", positions.len(), truth.len())));
    }
    let n = truth.first().map_or(0, Vec::len);
    let mut acc = LocalizationError::new(n);
    for (p, t) in positions.iter().zip(truth) {
        acc.add_frame(p, t, field)?;
    }
    Ok(acc.mean())
}
