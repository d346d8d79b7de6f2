//! Configuration, dataset, checkpoint, and gripper-model persistence.
//!
//! Every on-disk format carries a magic string and a version; numeric
//! payloads are little-endian 32-bit floats addressed through an explicit
//! manifest, and all writes go to a temporary file followed by an atomic
//! rename. Round trips are bit-exact at the file level.

mod checkpoint;
mod config;
mod dataset;
mod gripper;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointData};
pub use config::{
    load_config, save_config, DataConfig, ObjectSpec, RunConfig, ScheduleConfig, TrainingConfig,
};
pub use dataset::{pose_from_row, pose_to_row, read_dataset, write_dataset};
pub use gripper::{default_gripper_model, load_gripper_model, save_gripper_model};

use std::io::Write;
use std::path::Path;

/// Writes bytes to `path` via a temporary sibling and an atomic rename.
pub(crate) fn atomic_write(path: &Path, bytes: &[u8]) -> crate::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path)
        .map_err(|e| crate::Error::Io(e.error))?;
    Ok(())
}
