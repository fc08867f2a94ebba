use super::cell::AssignmentProbs;
use super::params::Weights;
use super::PROB_FLOOR;
use crate::types::AssignmentLabel;
use crate::{Error, Result};

/// `-Σ_m log p[m][label_m]` for one frame, with probabilities floored at
/// [`PROB_FLOOR`].
pub fn frame_nll(probs: &AssignmentProbs, label: &AssignmentLabel) -> Result<f64> {
    if label.classes.len() != probs.slots {
        return Err(Error::Shape(format!("{} labels for {} slots", label.classes.len(), probs.slots)));
    }
    label.classes.iter().enumerate().try_fold(0.0, |acc, (slot, &c)| {
        if c >= probs.classes {
            return Err(Error::Invariant(format!("class {c} out of range")));
        }
        Ok(acc - probs.get(slot, c).max(PROB_FLOOR).ln())
    })
}

/// Window objective: summed per-frame NLL plus `λ Σ W²` over the weight
/// matrices.
pub fn nll_loss(
    probs: &[AssignmentProbs],
    labels: &[AssignmentLabel],
    weights: &Weights,
    lambda: f64,
) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::LengthMismatch(format!("{} frames vs {} labels", probs.len(), labels.len())));
    }
    let data = probs.iter().zip(labels).try_fold(0.0, |acc, (p, l)| Ok::<_, Error>(acc + frame_nll(p, l)?))?;
    Ok(data + lambda * weights.l2_sum())
}
