//! Masked-region MAE and PSNR, with per-image and aggregate reporting.
//!
//! Metrics accumulate in f64 regardless of the image precision so the
//! brute-force reference comparisons hold to tight tolerances.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::image::Image2D;
use crate::Real;

/// Mean absolute error over the masked (m = 0) pixels.
/// Rejects a mask with no masked pixels.
pub fn mae_masked<T: Real>(pred: &Image2D<T>, label: &Image2D<T>, m: &Image2D<T>) -> Result<f64> {
    if !pred.same_shape(label) || !pred.same_shape(m) {
        return Err(CoreError::Shape("mae_masked: shapes differ".into()));
    }
    let mut acc = 0.0f64;
    let mut n = 0usize;
    for ((&p, &l), &mv) in pred.iter().zip(label.iter()).zip(m.iter()) {
        if mv == T::zero() {
            acc += (p.as_f64() - l.as_f64()).abs();
            n += 1;
        }
    }
    if n == 0 {
        return Err(CoreError::Mask("mae_masked: mask has no masked pixels".into()));
    }
    Ok(acc / n as f64)
}

/// PSNR in dB from a mean squared error: 10·log₁₀(peak²/MSE), +∞ at MSE 0.
pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    assert!(peak > 0.0, "psnr: peak must be > 0");
    if mse == 0.0 {
        return f64::INFINITY;
    }
    10.0 * (peak * peak / mse).log10()
}

/// PSNR in dB over all pixels, +∞ when the images are identical.
pub fn psnr<T: Real>(pred: &Image2D<T>, label: &Image2D<T>, peak: f64) -> f64 {
    assert!(pred.same_shape(label), "psnr: shapes differ");
    let mut acc = 0.0f64;
    for (&p, &l) in pred.iter().zip(label.iter()) {
        let d = p.as_f64() - l.as_f64();
        acc += d * d;
    }
    psnr_from_mse(acc / pred.len() as f64, peak)
}

/// PSNR restricted to the masked (m = 0) pixels.
pub fn psnr_masked<T: Real>(
    pred: &Image2D<T>,
    label: &Image2D<T>,
    m: &Image2D<T>,
    peak: f64,
) -> Result<f64> {
    if !pred.same_shape(label) || !pred.same_shape(m) {
        return Err(CoreError::Shape("psnr_masked: shapes differ".into()));
    }
    let mut acc = 0.0f64;
    let mut n = 0usize;
    for ((&p, &l), &mv) in pred.iter().zip(label.iter()).zip(m.iter()) {
        if mv == T::zero() {
            let d = p.as_f64() - l.as_f64();
            acc += d * d;
            n += 1;
        }
    }
    if n == 0 {
        return Err(CoreError::Mask("psnr_masked: mask has no masked pixels".into()));
    }
    Ok(psnr_from_mse(acc / n as f64, peak))
}

/// Metrics of one (pred, label, mask) triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub mae_masked: f64,
    pub psnr: f64,
    pub psnr_masked: f64,
    pub n_pixels_masked: usize,
}

/// Per-image metrics plus their unweighted means.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_image: Vec<ImageMetrics>,
    pub mean_mae_masked: f64,
    pub mean_psnr: f64,
    pub mean_psnr_masked: f64,
    pub n_pixels_masked: usize,
}

/// Evaluate a set of (pred, label, mask) triples with PSNR peak `peak`.
/// Aggregation is the unweighted mean over images. Rejects an empty set.
pub fn evaluate_set<T: Real>(
    pairs: &[(&Image2D<T>, &Image2D<T>, &Image2D<T>)],
    peak: f64,
) -> Result<MetricReport> {
    if pairs.is_empty() {
        return Err(CoreError::Empty("evaluate_set".into()));
    }
    let mut per_image = Vec::with_capacity(pairs.len());
    for (pred, label, m) in pairs {
        per_image.push(ImageMetrics {
            mae_masked: mae_masked(pred, label, m)?,
            psnr: psnr(pred, label, peak),
            psnr_masked: psnr_masked(pred, label, m, peak)?,
            n_pixels_masked: m.iter().filter(|&&v| v == T::zero()).count(),
        });
    }
    let n = per_image.len() as f64;
    Ok(MetricReport {
        mean_mae_masked: per_image.iter().map(|r| r.mae_masked).sum::<f64>() / n,
        mean_psnr: per_image.iter().map(|r| r.psnr).sum::<f64>() / n,
        mean_psnr_masked: per_image.iter().map(|r| r.psnr_masked).sum::<f64>() / n,
        n_pixels_masked: per_image.iter().map(|r| r.n_pixels_masked).sum(),
        per_image,
    })
}
