//! Synthetic training pairs: pose sampling, rendering, background
//! compositing, augmentation, input normalization and dataset files.

pub mod augment;
pub mod background;
pub mod dataset;
mod generate;
pub mod normalize;
pub mod ssim;

pub use augment::{add_gaussian_noise, mean_blur3, perturb_color, AugmentConfig, AugmentFlags};
pub use background::{import_frames, procedural_pool, BackgroundConfig};
pub use dataset::{is_validation, split_indices, write_dataset, DatasetHeader, DatasetReader, DatasetWriter};
pub use generate::{
    crop_geometry, estimate_stats, generate_batch, generate_indexed, generate_raw_sample, generate_sample_pair,
    render_predicted, GeneratorConfig, RawSample, SamplePair, SceneAssets, WINDOW_PAD,
};
pub use normalize::{compute_channel_stats, crop_resize, normalize_input, standardize, ChannelStats, NormalizedInput};
pub use ssim::{build_background_pool, ssim};
