//! Generative 2D simulator of identical robots seen by a noisy detector.

mod config;
mod generate;
mod world;

pub use config::{BetaParams, SimConfig};
pub use generate::{generate_dataset, generate_sequence, generate_sequences, sequence_seeds};
pub use world::{observe, step_world, RobotState, WorldState};
