//! Synthetic test masks: discs and full-span rectangles, randomly placed.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::image::Image2D;
use crate::rng::substream;
use crate::Real;

/// Mask families used at test time. `Metal` masks come from the projector;
/// the other three are generated here.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskKind {
    Metal,
    Circle,
    HRect,
    VRect,
}

impl MaskKind {
    pub const ALL: [MaskKind; 4] = [
        MaskKind::Metal,
        MaskKind::Circle,
        MaskKind::HRect,
        MaskKind::VRect,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MaskKind::Metal => "metal",
            MaskKind::Circle => "circle",
            MaskKind::HRect => "hrect",
            MaskKind::VRect => "vrect",
        }
    }

    pub fn parse(s: &str) -> Option<MaskKind> {
        match s {
            "metal" => Some(MaskKind::Metal),
            "circle" => Some(MaskKind::Circle),
            "hrect" => Some(MaskKind::HRect),
            "vrect" => Some(MaskKind::VRect),
            _ => None,
        }
    }
}

/// Allowed `size_px` range per family: circle diameter 20–60 px, rectangle
/// width 20–50 px.
fn size_range(kind: MaskKind) -> (usize, usize) {
    match kind {
        MaskKind::Circle => (20, 60),
        MaskKind::HRect | MaskKind::VRect => (20, 50),
        MaskKind::Metal => (0, usize::MAX),
    }
}

/// Binary mask with zeros inside the shape and ones in the background.
///
/// - `circle`: disc of diameter `size_px`, center placed uniformly so the
///   disc stays inside the image;
/// - `hrect`: full-width horizontal band of height `size_px` at a uniform
///   vertical offset;
/// - `vrect`: full-height vertical band of width `size_px`.
///
/// Deterministic per seed. Rejects sizes outside the stated ranges or
/// larger than the image.
pub fn synthetic_mask<T: Real>(
    kind: MaskKind,
    rows: usize,
    cols: usize,
    size_px: usize,
    seed: u64,
) -> Result<Image2D<T>> {
    if kind == MaskKind::Metal {
        return Err(CoreError::Mask(
            "metal masks come from the projector, not the synthetic generator".into(),
        ));
    }
    let (lo, hi) = size_range(kind);
    if size_px < lo || size_px > hi {
        return Err(CoreError::Mask(format!(
            "{} size {} px outside allowed range [{}, {}]",
            kind.name(),
            size_px,
            lo,
            hi
        )));
    }
    let fits = match kind {
        MaskKind::Circle => size_px <= rows && size_px <= cols,
        MaskKind::HRect => size_px <= rows,
        MaskKind::VRect => size_px <= cols,
        MaskKind::Metal => unreachable!(),
    };
    if !fits {
        return Err(CoreError::Mask(format!(
            "{} size {} px does not fit a {}x{} image",
            kind.name(),
            size_px,
            rows,
            cols
        )));
    }

    let mut rng = substream(seed, &format!("mask/{}", kind.name()));
    let mut mask = Image2D::filled(rows, cols, T::one());
    match kind {
        MaskKind::Circle => {
            let radius = size_px as f64 / 2.0;
            // center chosen so the disc stays fully inside
            let cr = rng.gen_range(radius..=(rows as f64 - radius));
            let cc = rng.gen_range(radius..=(cols as f64 - radius));
            for r in 0..rows {
                for c in 0..cols {
                    let dr = r as f64 + 0.5 - cr;
                    let dc = c as f64 + 0.5 - cc;
                    if dr * dr + dc * dc <= radius * radius {
                        mask.set(r, c, T::zero());
                    }
                }
            }
        }
        MaskKind::HRect => {
            let top = rng.gen_range(0..=(rows - size_px));
            for r in top..top + size_px {
                for c in 0..cols {
                    mask.set(r, c, T::zero());
                }
            }
        }
        MaskKind::VRect => {
            let left = rng.gen_range(0..=(cols - size_px));
            for c in left..left + size_px {
                for r in 0..rows {
                    mask.set(r, c, T::zero());
                }
            }
        }
        MaskKind::Metal => unreachable!(),
    }
    Ok(mask)
}
