//! Variational autoencoder trained on the unlabeled point cloud.
//!
//! The objective is the negative single-sample ELBO,
//! `(||x - x_hat||^2 + KL(q(z|x) || N(0, I))) / batch`, minimized with Adam.
//! Gradients are derived by hand (reverse mode through the reparameterized
//! sample) and checked against central finite differences in the tests.

mod adam;
mod checkpoint;
mod network;
mod train;

use thiserror::Error;

pub use adam::{adam_step, adam_update, AdamState, TrainConfig};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest};
pub use network::{forward, gradients, loss, Dense, ForwardPass, Loss, VaeArchitecture, VaeParams};
pub use train::{embed_dataset, train, LatentCloud, TrainHistory};

#[derive(Debug, Error)]
pub enum VaeError {
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("training diverged (non-finite loss) in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Npy(#[from] crate::io::NpyError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
