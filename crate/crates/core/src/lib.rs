//! Generalist graph anomaly detection: feature alignment, a residual graph
//! encoder and an in-context cross-attention scorer trained once and applied
//! to unseen graphs from a handful of normal examples.

pub mod align;
pub mod autograd;
pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod encoder;
pub mod error;
pub mod graph;
pub mod inject;
pub mod linalg;
pub mod metrics;
pub mod optim;
pub mod pipeline;
pub mod scorer;
pub mod synth;
pub mod tensor;

pub use checkpoint::Checkpoint;
pub use config::TrainConfig;
pub use dataset::{load_dataset, save_dataset, Dataset};
pub use error::{ArcError, Result};
pub use graph::EdgeList;
pub use tensor::Tensor;
