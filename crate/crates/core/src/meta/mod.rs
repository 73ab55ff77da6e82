//! Graph convolutional meta-model over the agent spanning tree.
//!
//! Node features pass through ReLU graph convolutions on the normalized
//! tree adjacency; a shared linear readout scores every agent and a softmax
//! over agents gives the blending weights `pi`. Training minimizes
//! `C + lambda * D + gamma * L_laplace` by plain gradient descent.

mod features;
mod gcnn;
mod loss;
mod model;
mod train;

use thiserror::Error;

pub use features::{build_node_features, NodeFeatures, FEATURE_DIM, HISTOGRAM_BINS};
pub use gcnn::{
    backward, blend, evaluate, gcnn_forward, head_weights, normalize_adjacency, readout_scores,
    Evaluation, ForwardCache, SampleInputs,
};
pub use loss::{
    bernoulli_sym_kl, composite_loss, cross_entropy, kl_diversity, laplacian_loss, LossBreakdown,
    PROB_CLAMP,
};
pub use model::{DiversityMode, MetaGradients, MetaModel};
pub use train::{train_meta, Ensemble, GraphPolicy, MetaConfig, MetaTraining};

use crate::diffusion::DiffusionError;
use crate::graph::GraphError;
use crate::knowledge::KbError;
use crate::textio::FormatError;

#[derive(Debug, Error)]
pub enum MetaError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("node {0} has zero degree; cannot normalize adjacency")]
    ZeroDegree(usize),
    #[error("adjacency must be symmetric and non-negative")]
    BadAdjacency,
    #[error("non-finite input to {0}")]
    NonFiniteInput(&'static str),
    #[error("need at least {need} agents, got {got}")]
    TooFewAgents { need: usize, got: usize },
    #[error("negative hyperparameter {name} = {value}")]
    NegativeHyper { name: &'static str, value: f64 },
    #[error("invalid meta config: {0}")]
    Config(String),
    #[error("forward cache does not match the inputs or parameters passed to backward")]
    StaleCache,
    #[error("non-finite loss at epoch {epoch}, sample {sample}")]
    NonFinite { epoch: usize, sample: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
