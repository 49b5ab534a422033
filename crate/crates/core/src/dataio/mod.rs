//! Schemas, file ingestion, preprocessing and the synthetic cohort generator.

mod dataset;
pub mod io;
mod motion;
mod preprocess;
mod schema;
pub mod synth;
mod types;

pub use dataset::{Dataset, RawDataset};
pub use io::{load_dataset, processed_snapshot_bytes, raw_snapshot_bytes, read_processed_snapshot, read_raw_snapshot};
pub use motion::{extract_weekly_pattern, resample_minutes, weekly_slot, MinuteSeries, MONDAY_EPOCH_MINUTE};
pub use preprocess::{
    build_context_pattern, compute_stats, impute_knn, minmax_scale, one_hot_encode, preprocess,
    PreprocessReport, DEFAULT_KNN_K, GENDER_CATEGORIES, LEARNING_MODE_CATEGORIES,
};
pub use schema::{EncodedSlot, Schema};
pub use synth::{generate_synthetic, SynthConfig};
pub use types::*;
