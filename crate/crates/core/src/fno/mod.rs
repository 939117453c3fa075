//! Fourier neural operator surrogate.

pub mod adam;
pub mod checkpoint;
pub mod dft;
pub mod model;
pub mod spectral;
pub mod train;

pub use adam::{AdamConfig, TrainState};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, sidecar_path, write_checkpoint, CheckpointMeta};
pub use dft::{dft3, dft3_real, Direction};
pub use model::{Activation, FnoConfig, FnoModel, ForwardCache, LayerRanges, ParamLayout};
pub use spectral::{mix_modes, spectral_conv, ModeSet, SpectralPlan, Spectrum, Workspace};
pub use train::{
    encode_input, evaluate, split_indices, train, EpochRecord, Split, SplitMetrics, TrainConfig, TrainOutcome,
};
