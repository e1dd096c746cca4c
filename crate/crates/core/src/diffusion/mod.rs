//! Conditional denoising diffusion over visual feature vectors.

mod checkpoint;
mod network;
mod sample;
mod schedule;
mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use network::{timestep_embedding, DenoiserConfig, DenoiserNetwork, NoisePredictor};
pub use sample::{
    condition_for, generate_for_augmented, make_so_seed, sample, Generation, GenerationRequest,
    ItemError, SeedKind, SeedMode,
};
pub use schedule::{forward_diffuse, NoiseSchedule};
pub use train::{train, training_loss, TrainConfig, TrainExample, TrainState};
