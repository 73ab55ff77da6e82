//! Toy denoising diffusion: noise schedules, procedural sprite data, small
//! noise-prediction agents and ancestral sampling.
//!
//! Step indices are 1-based throughout (`1..=T`), matching the usual
//! statement of the forward and reverse kernels. The label passed to an
//! agent stands in for a text prompt.

mod agent;
mod dataset;
mod sampling;
mod schedule;

use thiserror::Error;

pub use agent::{
    agents_from_text, agents_to_text, load_agents, save_agents, train_agent, AgentTrainConfig,
    Architecture, ToyAgent, TrainedAgent,
};
pub use dataset::{make_sprite_dataset, Sample, ToyDataset, SPRITE_CLASSES};
pub use sampling::{denoise_estimate, forward_noise, reverse_step, sample};
pub use schedule::NoiseSchedule;

use crate::textio::FormatError;

#[derive(Debug, Error)]
pub enum DiffusionError {
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("step {t} outside 1..={steps}")]
    StepRange { t: usize, steps: usize },
    #[error("label {label} outside 0..{classes}")]
    LabelRange { label: usize, classes: usize },
    #[error("length mismatch: expected {expected}, got {got}")]
    Length { expected: usize, got: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("non-finite loss at epoch {epoch}, sample {sample}")]
    NonFinite { epoch: usize, sample: usize },
    #[error("d_side must be at least 8, got {0}")]
    SideTooSmall(usize),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
