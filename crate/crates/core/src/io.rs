//! Persistence: raw little-endian f32 blobs with JSON sidecars for images
//! and volumes, 8-bit PGM previews, and flat-blob checkpoints with a JSON
//! manifest.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::image::Image2D;
use crate::score::{AdamConfig, DenoiserNet, NetConfig, OptimState};
use crate::sde::VeSchedule;
use crate::volume::Volume3D;
use crate::{real, Real};

/// Sidecar metadata next to every `.raw` blob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rows: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cols: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dims: Option<[usize; 3]>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub spacing: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub origin: Option<[f64; 3]>,
    /// Global normalization constant the stored values were divided by.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub normalization: Option<f64>,
}

fn sidecar_path(raw_path: &Path) -> PathBuf {
    raw_path.with_extension("json")
}

fn write_f32_le(path: &Path, values: impl Iterator<Item = f32>) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_f32_le(path: &Path) -> Result<Vec<f32>> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() % 4 != 0 {
        return Err(CoreError::Image(format!(
            "{}: raw file length {} not a multiple of 4",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Write an image as `.raw` (f32 LE) plus its JSON sidecar.
pub fn save_image<T: Real>(
    path: &Path,
    image: &Image2D<T>,
    normalization: Option<f64>,
) -> Result<()> {
    write_f32_le(path, image.iter().map(|v| v.as_f32()))?;
    let sidecar = Sidecar {
        rows: Some(image.rows()),
        cols: Some(image.cols()),
        dims: None,
        spacing: None,
        origin: None,
        normalization,
    };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

pub fn load_image<T: Real>(path: &Path) -> Result<(Image2D<T>, Sidecar)> {
    let sidecar: Sidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
    let (rows, cols) = match (sidecar.rows, sidecar.cols) {
        (Some(r), Some(c)) => (r, c),
        _ => {
            return Err(CoreError::Image(format!(
                "{}: sidecar lacks rows/cols",
                path.display()
            )))
        }
    };
    let values = read_f32_le(path)?;
    let data = values.into_iter().map(|v| real(v as f64)).collect();
    Ok((Image2D::from_vec(rows, cols, data)?, sidecar))
}

pub fn save_volume<T: Real>(path: &Path, vol: &Volume3D<T>) -> Result<()> {
    write_f32_le(path, vol.data().iter().map(|v| v.as_f32()))?;
    let sidecar = Sidecar {
        rows: None,
        cols: None,
        dims: Some(vol.dims()),
        spacing: Some(vol.spacing()),
        origin: Some(vol.origin()),
        normalization: None,
    };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

pub fn load_volume<T: Real>(path: &Path) -> Result<(Volume3D<T>, Sidecar)> {
    let sidecar: Sidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
    let (dims, spacing, origin) = match (sidecar.dims, sidecar.spacing, sidecar.origin) {
        (Some(d), Some(s), Some(o)) => (d, s, o),
        _ => {
            return Err(CoreError::Volume(format!(
                "{}: sidecar lacks dims/spacing/origin",
                path.display()
            )))
        }
    };
    let values = read_f32_le(path)?;
    let data = values.into_iter().map(|v| real(v as f64)).collect();
    Ok((Volume3D::from_vec(dims, spacing, origin, data)?, sidecar))
}

/// 8-bit binary PGM. Values are clamped to [0,1] and scaled to 0..=255, so
/// a binary mask lands on 0 (metal) and 255 (background).
pub fn save_pgm<T: Real>(path: &Path, image: &Image2D<T>) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    write!(w, "P5\n{} {}\n255\n", image.cols(), image.rows())?;
    for &v in image.iter() {
        let x = (v.as_f64().clamp(0.0, 1.0) * 255.0).round() as u8;
        w.write_all(&[x])?;
    }
    w.flush()?;
    Ok(())
}

/// Checkpoint manifest: everything needed to rebuild the model and resume
/// training.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub arch: NetConfig,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub sde_steps: usize,
    pub normalization: f64,
    pub train_seed: u64,
    pub steps_done: usize,
    pub adam: AdamConfig,
    pub param_count: usize,
}

/// Write `<base>.bin` (params, Adam m, Adam v as f32 LE) and `<base>.json`.
pub fn save_checkpoint<T: Real>(
    base: &Path,
    net: &DenoiserNet<T>,
    optim: &OptimState<T>,
    sched: &VeSchedule<T>,
    normalization: f64,
    train_seed: u64,
    adam: AdamConfig,
) -> Result<()> {
    let params = net.params.to_flat();
    let n = params.len();
    if optim.m.len() != n || optim.v.len() != n {
        return Err(CoreError::Checkpoint(
            "optimizer state length differs from parameter count".into(),
        ));
    }
    let blob = params
        .iter()
        .chain(optim.m.iter())
        .chain(optim.v.iter())
        .map(|v| v.as_f32());
    write_f32_le(&base.with_extension("bin"), blob)?;
    let manifest = CheckpointManifest {
        arch: net.config().clone(),
        sigma_min: sched.sigma_min().as_f64(),
        sigma_max: sched.sigma_max().as_f64(),
        sde_steps: sched.n_steps(),
        normalization,
        train_seed,
        steps_done: optim.steps_done,
        adam,
        param_count: n,
    };
    fs::write(
        base.with_extension("json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

/// Rebuild a model plus optimizer state from `<base>.{bin,json}`.
pub fn load_checkpoint<T: Real>(
    base: &Path,
) -> Result<(DenoiserNet<T>, OptimState<T>, CheckpointManifest)> {
    let manifest: CheckpointManifest =
        serde_json::from_str(&fs::read_to_string(base.with_extension("json"))?)?;
    let mut net = DenoiserNet::<T>::new(manifest.arch.clone());
    let n = net.n_params();
    if n != manifest.param_count {
        return Err(CoreError::Checkpoint(format!(
            "architecture expects {} params, manifest records {}",
            n, manifest.param_count
        )));
    }
    let values = read_f32_le(&base.with_extension("bin"))?;
    if values.len() != 3 * n {
        return Err(CoreError::Checkpoint(format!(
            "blob holds {} values, expected {}",
            values.len(),
            3 * n
        )));
    }
    let as_t = |chunk: &[f32]| -> Vec<T> { chunk.iter().map(|&v| real(v as f64)).collect() };
    net.params.load_flat(&as_t(&values[..n]))?;
    let optim = OptimState {
        m: as_t(&values[n..2 * n]),
        v: as_t(&values[2 * n..]),
        steps_done: manifest.steps_done,
    };
    Ok((net, optim, manifest))
}

/// Loss trace CSV with a `step,loss` header.
pub fn write_loss_csv(path: &Path, rows: &[(usize, f64)]) -> Result<()> {
    let mut out = String::from("step,loss\n");
    for (step, loss) in rows {
        out.push_str(&format!("{step},{loss:.10e}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}
