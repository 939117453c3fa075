//! Heat-affected windows: cubic blocks cut around recent deposits, with the
//! input channels the surrogate sees and the next-step ground truth.

mod dataset;
mod distance;
mod extract;

pub use dataset::{load_dataset, manifest_path, save_dataset, Manifest};
pub use distance::{boundary_impact, BoundaryImpact};
pub use extract::{
    characteristic_radius, extract_windows, plan_windows, window_count, Channel, ExtractOptions,
    GeometryProvenance, Normalization, WindowDataset, WindowRef, WindowSample, CHANNEL_SCHEMA_VERSION,
    DEFAULT_K_RECENT, DEFAULT_WINDOW_EDGE, INPUT_CHANNELS,
};
