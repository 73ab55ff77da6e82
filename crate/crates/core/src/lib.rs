//! Graph-coordinated ensembles of toy diffusion agents.
//!
//! A pool of small denoising-diffusion agents is trained on procedural
//! sprites and recorded in a [`knowledge::KnowledgeBase`]. Pairwise agent
//! similarity defines a weighted graph whose maximum spanning tree drives a
//! graph convolutional meta-model; its softmax head yields per-agent
//! blending weights for the noise predictions used during sampling.

pub mod diffusion;
pub mod graph;
pub mod harness;
pub mod knowledge;
pub mod meta;
pub mod metrics;
pub mod spec;
pub mod textio;
