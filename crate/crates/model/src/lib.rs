//! The dual-task network: a small ViT encoder with adapters, two CNN
//! branches fused with encoder features, a shared prompt-driven mask
//! decoder, and the training and evaluation loops around it.

pub mod branch;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod decoder;
pub mod encoder;
pub mod eval;
pub mod freq;
pub mod loss;
pub mod network;
pub mod nn;
pub mod optim;
pub mod prompting;
pub mod resize;
pub mod schedule;
pub mod train;

pub use config::{ConfigError, ModelConfig};
pub use network::{ExternalPrompts, ForwardOutput, Network, NetworkError, Prediction, TaskOutput};
pub use prompting::{PromptEmbedding, PromptEncoder, Source, Task};
