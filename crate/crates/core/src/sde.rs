//! Variance-exploding SDE: geometric σ-schedule, forward perturbation
//! kernel, and the discrete reverse-time update.
//!
//! The forward process has zero drift and diffusion g(t) = sqrt(d[σ²(t)]/dt)
//! with σ(t) = σ_min·(σ_max/σ_min)^t on t ∈ [0,1], so a clean image x₀
//! perturbs to x_t = x₀ + sqrt(σ²(t) − σ²(0))·z with z ~ N(0, I).

use crate::error::{CoreError, Result};
use crate::image::Image2D;
use crate::{real, Real};

/// Geometric noise schedule with a uniform time grid of `n_steps + 1` points.
/// Experiment configs carry it as plain `{sigma_min, sigma_max, n_steps}`
/// and rebuild it through `new` so the invariants always hold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VeSchedule<T> {
    sigma_min: T,
    sigma_max: T,
    n_steps: usize,
}

impl<T: Real> VeSchedule<T> {
    pub fn new(sigma_min: T, sigma_max: T, n_steps: usize) -> Result<Self> {
        if !(sigma_min > T::zero() && sigma_min.is_finite()) {
            return Err(CoreError::Schedule(format!(
                "sigma_min must be > 0, got {sigma_min}"
            )));
        }
        if !(sigma_max > sigma_min && sigma_max.is_finite()) {
            return Err(CoreError::Schedule(format!(
                "sigma_max must be > sigma_min, got {sigma_max} <= {sigma_min}"
            )));
        }
        if n_steps < 1 {
            return Err(CoreError::Schedule("n_steps must be >= 1".into()));
        }
        Ok(Self {
            sigma_min,
            sigma_max,
            n_steps,
        })
    }

    pub fn sigma_min(&self) -> T {
        self.sigma_min
    }

    pub fn sigma_max(&self) -> T {
        self.sigma_max
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Same σ range on a different grid resolution.
    pub fn with_n_steps(&self, n_steps: usize) -> Result<Self> {
        Self::new(self.sigma_min, self.sigma_max, n_steps)
    }

    /// σ(t) = σ_min·(σ_max/σ_min)^t. Panics outside t ∈ [0,1].
    pub fn sigma(&self, t: T) -> T {
        assert!(
            t >= T::zero() && t <= T::one(),
            "sigma: t must be in [0,1], got {t}"
        );
        self.sigma_min * (self.sigma_max / self.sigma_min).powf(t)
    }

    /// Variance gap σ²(t) − σ²(0) of the perturbation kernel at time t.
    pub fn variance_gap(&self, t: T) -> T {
        let s = self.sigma(t);
        (s * s - self.sigma_min * self.sigma_min).max(T::zero())
    }

    /// Standard deviation of the perturbation kernel at time t.
    pub fn perturbation_std(&self, t: T) -> T {
        self.variance_gap(t).sqrt()
    }

    /// Squared diffusion coefficient g(t)² = d[σ²(t)]/dt = 2·ln(σ_max/σ_min)·σ²(t).
    pub fn g_squared(&self, t: T) -> T {
        let s = self.sigma(t);
        real::<T>(2.0) * (self.sigma_max / self.sigma_min).ln() * s * s
    }

    /// Grid time of step `i`, t_i = i/N. Panics past the grid end.
    pub fn grid_t(&self, step_index: usize) -> T {
        assert!(
            step_index <= self.n_steps,
            "step_index {step_index} out of grid 0..={}",
            self.n_steps
        );
        real::<T>(step_index as f64 / self.n_steps as f64)
    }

    /// σ at grid step `i`; strictly increasing in `i`.
    pub fn sigma_at_step(&self, step_index: usize) -> T {
        self.sigma(self.grid_t(step_index))
    }
}

/// Sampler state: an image together with its position on the time grid.
#[derive(Debug, Clone)]
pub struct DiffusionState<T> {
    pub x: Image2D<T>,
    pub t: T,
    pub step_index: usize,
}

impl<T: Real> DiffusionState<T> {
    /// State at grid step `i` (so `t = i/N`).
    pub fn at_step(sched: &VeSchedule<T>, x: Image2D<T>, step_index: usize) -> Self {
        let t = sched.grid_t(step_index);
        Self { x, t, step_index }
    }
}

/// Forward perturbation: x₀ + sqrt(σ²(t) − σ²(0))·noise.
///
/// `noise` must be i.i.d. standard normal for the distributional guarantees
/// to hold; the function itself is deterministic in its inputs.
pub fn perturb<T: Real>(
    sched: &VeSchedule<T>,
    x0: &Image2D<T>,
    t: T,
    noise: &Image2D<T>,
) -> Image2D<T> {
    let std = sched.perturbation_std(t);
    x0.zip_map(noise, |x, z| x + std * z)
}

/// One Euler–Maruyama step of the reverse-time SDE on the discrete grid:
///
/// x_{i−1} = x_i + (σ_i² − σ_{i−1}²)·score + sqrt(σ_i² − σ_{i−1}²)·noise
///
/// Rejects `step_index == 0` (nothing before t = 0).
pub fn reverse_step<T: Real>(
    sched: &VeSchedule<T>,
    state: &DiffusionState<T>,
    score: &Image2D<T>,
    noise: &Image2D<T>,
) -> Result<DiffusionState<T>> {
    let i = state.step_index;
    if i == 0 {
        return Err(CoreError::Sampler {
            step: 0,
            reason: "reverse_step at step_index 0".into(),
        });
    }
    let sigma_cur = sched.sigma_at_step(i);
    let sigma_prev = sched.sigma_at_step(i - 1);
    let dvar = sigma_cur * sigma_cur - sigma_prev * sigma_prev;
    let std = dvar.sqrt();
    if !state.x.same_shape(score) || !state.x.same_shape(noise) {
        return Err(CoreError::Shape("reverse_step image shapes differ".into()));
    }
    let mut x = state.x.clone();
    for ((x, &s), &z) in x
        .as_mut_slice()
        .iter_mut()
        .zip(score.iter())
        .zip(noise.iter())
    {
        *x = *x + dvar * s + std * z;
    }
    Ok(DiffusionState::at_step(sched, x, i - 1))
}
