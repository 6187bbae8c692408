//! Datasets, manifests, preprocessing, checkpoints and run configuration.

use std::path::Path;

use crate::error::{Error, Result};

mod checkpoint;
mod config;
mod dataset;
mod manifest;
mod preprocess;
mod toy;

pub use checkpoint::{checkpoint_to_string, load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_FORMAT};
pub use config::{fingerprint, EvalConfig, RunConfig};
pub use dataset::{Dataset, Sample};
pub use manifest::{
    load_manifest, manifest_to_string, parse_manifest, write_manifest, BlurScenario, Manifest, ManifestEntry,
    DATA_ROOT_ENV,
};
pub use preprocess::{
    crop, denormalize, normalize, preprocess, preprocess_with_mask, CropMode, NormalizedImage, PreprocessSize,
    CHANNEL_MEAN, CHANNEL_STD,
};
pub use toy::{
    dataset_gap, generate_toy_dataset, inject_upsampling_artifacts, real_texture, toy_dataset, toy_id, ToyConfig,
    ToySummary, MIN_TOY_GAP,
};

/// Writes `bytes` to a sibling temp file, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
