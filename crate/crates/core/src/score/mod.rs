//! Score functions ∇ₓ log p_t(x): an analytic oracle over Gaussian data for
//! verification, and a small trainable denoiser fitted by denoising score
//! matching.

mod features;
mod net;
mod train;

pub use features::TimeEmbedding;
pub use net::{DenoiserNet, NetConfig, NetParams};
pub use train::{dsm_loss, train, AdamConfig, OptimState, TrainOpts, TrainResult};

use crate::image::Image2D;
use crate::sde::VeSchedule;
use crate::{real, Real};

/// Anything that can evaluate the score field of p_t at an image.
///
/// Output shape always equals input shape; a frozen model is safe to share
/// across threads.
pub trait ScoreModel<T: Real>: Send + Sync {
    fn score(&self, x: &Image2D<T>, t: T) -> Image2D<T>;
}

/// Pixelwise-independent Gaussian data distribution N(mean, τ²I); the
/// verification target with a closed-form score under VE perturbation.
#[derive(Debug, Clone)]
pub struct GaussianDataSpec<T> {
    pub mean: Image2D<T>,
    pub tau: T,
}

impl<T: Real> GaussianDataSpec<T> {
    pub fn new(mean: Image2D<T>, tau: T) -> Self {
        assert!(tau > T::zero(), "tau must be > 0");
        Self { mean, tau }
    }
}

/// Closed-form score of Gaussian data under VE perturbation:
/// p_t = N(mean, (τ² + σ²(t) − σ²(0))·I), so
/// ∇ₓ log p_t(x) = −(x − mean) / (τ² + σ²(t) − σ²(0)).
pub fn analytic_score<T: Real>(
    spec: &GaussianDataSpec<T>,
    sched: &VeSchedule<T>,
    x: &Image2D<T>,
    t: T,
) -> Image2D<T> {
    let var = spec.tau * spec.tau + sched.variance_gap(t);
    x.zip_map(&spec.mean, |xi, mi| -(xi - mi) / var)
}

/// [`ScoreModel`] wrapper around the analytic Gaussian score.
#[derive(Debug, Clone)]
pub struct AnalyticGaussianScore<T> {
    pub spec: GaussianDataSpec<T>,
    pub sched: VeSchedule<T>,
}

impl<T: Real> ScoreModel<T> for AnalyticGaussianScore<T> {
    fn score(&self, x: &Image2D<T>, t: T) -> Image2D<T> {
        analytic_score(&self.spec, &self.sched, x, t)
    }
}

/// Denoiser wrapped into a score model: the network predicts the noise
/// direction at unit scale and the score is net(x,t) / std(t).
pub struct LearnedScore<T: Real> {
    pub net: DenoiserNet<T>,
    pub sched: VeSchedule<T>,
}

impl<T: Real> ScoreModel<T> for LearnedScore<T> {
    fn score(&self, x: &Image2D<T>, t: T) -> Image2D<T> {
        let std = self.sched.perturbation_std(t).max(real(1e-12));
        let eps = self.net.forward(x, t);
        eps.map(|v| v / std)
    }
}

/// Test helper: the zero field.
pub struct ZeroScore;

impl<T: Real> ScoreModel<T> for ZeroScore {
    fn score(&self, x: &Image2D<T>, _t: T) -> Image2D<T> {
        Image2D::zeros(x.rows(), x.cols())
    }
}
