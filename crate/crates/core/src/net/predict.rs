use super::cell::{forward, AssignmentProbs, HiddenState};
use super::params::NetworkParams;
use crate::types::{AssignmentLabel, FrameInput};
use crate::Result;

/// The slot the network considers most likely to be a given robot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotAssignment {
    pub slot: usize,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FramePrediction {
    pub probs: AssignmentProbs,
    /// Raw per-slot argmax; empty slots are class 0.
    pub label: AssignmentLabel,
    /// Per robot, the occupied slot maximizing `P(slot = robot)`.
    pub robots: Vec<Option<RobotAssignment>>,
}

/// Argmax decoding. Ties go to the lowest class (resp. slot) index.
pub fn decode(probs: &AssignmentProbs, frame: &FrameInput) -> (AssignmentLabel, Vec<Option<RobotAssignment>>) {
    let classes = (0..probs.slots)
        .map(|s| {
            if frame.slots[s].is_empty() {
                return 0;
            }
            let row = probs.row(s);
            let mut best = 0;
            for (c, &p) in row.iter().enumerate().skip(1) {
                if p > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect();
    let robots = (1..probs.classes)
        .map(|r| {
            let mut best: Option<RobotAssignment> = None;
            for s in frame.occupied() {
                let p = probs.get(s, r);
                if best.is_none_or(|b| p > b.probability) {
                    best = Some(RobotAssignment { slot: s, probability: p });
                }
            }
            best
        })
        .collect();
    (AssignmentLabel { classes }, robots)
}

/// Streaming inference over one sequence. Not shareable between threads
/// while stepping; create one session per sequence.
pub struct InferenceSession<'a> {
    params: &'a NetworkParams,
    state: HiddenState,
}

impl<'a> InferenceSession<'a> {
    pub fn new(params: &'a NetworkParams) -> Result<Self> {
        params.validate()?;
        Ok(InferenceSession { params, state: HiddenState::zeros(&params.arch), })
    }

    pub fn reset(&mut self) {
        self.state.reset();
    }

    pub fn state(&self) -> &HiddenState {
        &self.state
    }

    pub fn step(&mut self, frame: &FrameInput) -> Result<FramePrediction> {
        let (probs, next) = forward(frame, &self.state, self.params)?;
        self.state = next;
        let (label, robots) = decode(&probs, frame);
        Ok(FramePrediction { probs, label, robots })
    }
}

/// Runs a whole sequence from a zero state.
pub fn predict<'f>(
    frames: impl IntoIterator<Item = &'f FrameInput>,
    params: &NetworkParams,
) -> Result<Vec<FramePrediction>> {
    let mut session = InferenceSession::new(params)?;
    frames.into_iter().map(|f| session.step(f)).collect()
}
