//! Dataset construction: windowed correlation of multichannel signals,
//! windowed covariance of skeleton joints, synthetic trajectories, and the
//! `GDDS` file format.

mod dataset;
mod skeleton;
mod synth;
mod timeseries;

pub use dataset::{read_dataset_header, DatasetHeader, LabeledDataset, Manifest, DATASET_MAGIC, DATASET_VERSION};
pub use skeleton::{skeleton_covariance_sequence, SkeletonClip};
pub use synth::{
    plane_rotation, synth_generate, synth_timeseries, SynthConfig, SynthMode, SynthSeriesConfig, SYNTH_EIGEN_CLIP,
};
pub use timeseries::{sliding_window_fc, Constructed, TimeSeries};
