//! Two-branch pose-delta network: layers, training and model files.

pub mod adam;
pub mod float;
pub mod gradcheck;
pub mod layers;
pub mod model_io;
pub mod network;
pub mod train;

pub use adam::{AdamConfig, AdamState};
pub use float::Float;
pub use layers::Tensor;
pub use network::{forward_eval, forward_train, loss_and_gradients, ArchConfig, NetworkParams};
pub use model_io::Model;
pub use train::{train, write_history_csv, EpochRecord, TrainConfig, TrainOutcome, TrainingSource};
