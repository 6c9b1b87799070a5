//! Command implementations behind the CLI verbs.

pub mod ablate;
pub mod datagen;
pub mod eval;
pub mod inpaint;
pub mod train;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, PhantomSection};
use scorepaint_core::geometry::ProjectionGeometry;

/// Exclusive ownership of an output directory for the duration of one
/// command (advisory lock file; removed on drop).
pub struct OutDir {
    pub path: PathBuf,
    lock: PathBuf,
}

impl OutDir {
    /// Claim `path` as this command's output directory. Refuses to reuse a
    /// non-empty directory unless `force` is set (which wipes it first).
    pub fn claim(path: &Path, force: bool) -> Result<Self> {
        if path.exists() {
            let non_empty = fs::read_dir(path)?.next().is_some();
            if non_empty {
                if !force {
                    bail!(
                        "output directory {} is not empty (pass --force to overwrite)",
                        path.display()
                    );
                }
                fs::remove_dir_all(path)
                    .with_context(|| format!("clearing {}", path.display()))?;
            }
        }
        fs::create_dir_all(path)?;
        let lock = path.join(".lock");
        match fs::OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(_) => {}
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                bail!(
                    "lock file {} exists; another command owns this directory (remove it if stale)",
                    lock.display()
                );
            }
            Err(e) => return Err(e.into()),
        }
        Ok(Self {
            path: path.to_path_buf(),
            lock,
        })
    }
}

impl Drop for OutDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}

/// What `datagen` writes next to the dataset so later stages can rebuild
/// the exact same inputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub geometry: ProjectionGeometry,
    pub phantom: PhantomSection,
    /// Global max over training projections; all stored projections are
    /// divided by it.
    pub normalization: f64,
    pub angles_deg: Vec<f64>,
    pub train_stems: Vec<String>,
    pub test_stems: Vec<String>,
}

impl DatasetManifest {
    pub fn load(dataset_dir: &Path) -> Result<Self> {
        let path = dataset_dir.join("manifest.json");
        let text = fs::read_to_string(&path)
            .with_context(|| format!("reading dataset manifest {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn projection_path(dataset_dir: &Path, stem: &str) -> PathBuf {
    dataset_dir.join("proj").join(format!("{stem}.raw"))
}

pub fn mask_path(dataset_dir: &Path, family: &str, stem: &str) -> PathBuf {
    dataset_dir.join("masks").join(family).join(format!("{stem}.raw"))
}

/// Volume-granular train/test split: the last k volumes are held out,
/// with k = round(n·test_fraction) clamped to [1, n−1]. No volume ever
/// straddles the split.
pub fn split_volumes(n_volumes: usize, test_fraction: f64) -> (Vec<usize>, Vec<usize>) {
    let k = ((n_volumes as f64 * test_fraction).round() as usize)
        .max(1)
        .min(n_volumes - 1);
    let cut = n_volumes - k;
    ((0..cut).collect(), (cut..n_volumes).collect())
}

pub fn default_checkpoint_base(config: &ExperimentConfig) -> PathBuf {
    config.train_dir().join("checkpoint")
}
