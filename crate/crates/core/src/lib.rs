//! Score-based generative inpainting of cone-beam projection images.
//!
//! The pipeline has three legs:
//!
//! 1. **Data** — procedural phantoms are forward-projected through a C-arm
//!    cone-beam geometry ([`projector`], [`phantom`], [`masks`]) to produce
//!    projection images and binary metal masks.
//! 2. **Model** — a variance-exploding SDE ([`sde`]) perturbs images with
//!    noise; a score model ([`score`]) learns (or states analytically) the
//!    gradient of the log-density at every noise level.
//! 3. **Restoration** — a predictor–corrector sampler ([`sampler`]) runs the
//!    reverse SDE, and conditional resampling ([`inpaint`]) fuses the known
//!    background with the sampled content to fill masked pixels, benchmarked
//!    with MAE/PSNR ([`eval`]) against a harmonic interpolation baseline.
//!
//! All numeric code is generic over the scalar type via [`Real`]; `f32` is
//! the production type (and the on-disk type, see [`io`]), `f64` is handy
//! for high-precision oracles in tests.

pub mod error;
pub mod eval;
pub mod geometry;
pub mod image;
pub mod inpaint;
pub mod io;
pub mod masks;
pub mod phantom;
pub mod projector;
pub mod rng;
pub mod sampler;
pub mod score;
pub mod sde;
pub mod volume;

pub use error::{CoreError, Result};
pub use geometry::ProjectionGeometry;
pub use image::Image2D;
pub use inpaint::InpaintProblem;
pub use sampler::SamplerConfig;
pub use score::ScoreModel;
pub use sde::{DiffusionState, VeSchedule};
pub use volume::Volume3D;

use std::fmt;

/// Scalar type the numeric core is generic over: `f32` or `f64`.
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::NumAssign
    + ndarray::LinalgScalar
    + ndarray::ScalarOperand
    + fmt::Debug
    + fmt::Display
    + fmt::LowerExp
    + Send
    + Sync
    + 'static
{
    fn as_f64(self) -> f64;
    fn as_f32(self) -> f32;
}

impl Real for f32 {
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn as_f32(self) -> f32 {
        self
    }
}

impl Real for f64 {
    fn as_f64(self) -> f64 {
        self
    }
    fn as_f32(self) -> f32 {
        self as f32
    }
}

/// Convert an `f64` constant into the working scalar type.
#[inline]
pub fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("finite f64 must convert to the scalar type")
}

/// Projection/mask image in the production precision.
pub type ImageF32 = Image2D<f32>;
/// Attenuation volume in the production precision.
pub type VolumeF32 = Volume3D<f32>;
/// Noise schedule in the production precision.
pub type VeScheduleF32 = VeSchedule<f32>;
