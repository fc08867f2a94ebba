//! Common interface of every association method.

use crate::types::{AssignmentLabel, FrameInput};
use crate::Result;

/// What a method reports for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutput {
    /// Identity per detection slot; empty slots carry class 0.
    pub label: AssignmentLabel,
    /// Current location estimate per robot in normalized field units, if
    /// the method has one.
    pub positions: Vec<Option<(f64, f64)>>,
}

/// A stateful per-sequence association method.
pub trait Associator {
    fn name(&self) -> &str;
    /// Forgets all state; the next frame starts a new sequence.
    fn reset(&mut self);
    fn step(&mut self, frame: &FrameInput) -> Result<FrameOutput>;
}
