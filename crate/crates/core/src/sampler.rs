//! Predictor–corrector sampling of the reverse-time VE SDE: ancestral
//! predictor plus SNR-controlled Langevin corrector.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::image::Image2D;
use crate::rng::{normal_image, substream};
use crate::score::ScoreModel;
use crate::sde::{DiffusionState, VeSchedule};
use crate::{real, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Number of predictor steps N (the grid resolution of the reverse pass).
    pub n_steps: usize,
    /// Corrector signal-to-noise ratio η.
    pub snr: f64,
    /// Langevin iterations per predictor step.
    pub corrector_iters: usize,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps < 1 {
            return Err(CoreError::Sampler {
                step: 0,
                reason: "n_steps must be >= 1".into(),
            });
        }
        if !(self.snr > 0.0 && self.snr.is_finite()) {
            return Err(CoreError::Sampler {
                step: 0,
                reason: format!("snr must be > 0, got {}", self.snr),
            });
        }
        Ok(())
    }
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_steps: 1000,
            snr: 0.4,
            corrector_iters: 1,
            seed: 0,
        }
    }
}

/// VE ancestral-sampling predictor:
///
/// x_{i−1} = x_i + (σ_i² − σ_{i−1}²)·s(x_i, t_i)
///           + sqrt(σ_{i−1}²·(σ_i² − σ_{i−1}²)/σ_i²)·z
pub fn predictor_step<T: Real>(
    sched: &VeSchedule<T>,
    model: &dyn ScoreModel<T>,
    state: &DiffusionState<T>,
    rng: &mut impl Rng,
) -> Result<DiffusionState<T>> {
    let i = state.step_index;
    if i == 0 {
        return Err(CoreError::Sampler {
            step: 0,
            reason: "predictor_step at step_index 0".into(),
        });
    }
    let sigma_cur = sched.sigma_at_step(i);
    let sigma_prev = sched.sigma_at_step(i - 1);
    let var_cur = sigma_cur * sigma_cur;
    let var_prev = sigma_prev * sigma_prev;
    let dvar = var_cur - var_prev;
    let noise_std = (var_prev * dvar / var_cur).sqrt();

    let score = model.score(&state.x, state.t);
    let z = normal_image::<T>(state.x.rows(), state.x.cols(), rng);
    let mut x = state.x.clone();
    for ((xv, &s), &zv) in x
        .as_mut_slice()
        .iter_mut()
        .zip(score.iter())
        .zip(z.iter())
    {
        *xv = *xv + dvar * s + noise_std * zv;
    }
    Ok(DiffusionState::at_step(sched, x, i - 1))
}

/// Langevin step size ε = 2·(η·‖z‖₂/‖s‖₂)²; ε ∝ η² and invariant to
/// rescaling both norms by the same constant.
pub fn langevin_step_size<T: Real>(snr: f64, noise_norm: T, score_norm: T) -> T {
    let eta: T = real(snr);
    let ratio = eta * noise_norm / score_norm;
    real::<T>(2.0) * ratio * ratio
}

/// One Langevin iteration at fixed t:
///
/// x ← x + ε·s + sqrt(2ε)·z with ε = 2·(η·‖z‖₂/‖s‖₂)².
///
/// The noise norm enters ε in expectation (‖z‖₂ → sqrt(#pixels), the
/// batch-mean limit of the step-size rule); coupling ε to the injected
/// draw would bias the invariant law on small images (the noise term
/// becomes z·‖z‖, whose variance is 3× the intended 2ε on one pixel).
///
/// A zero-norm score skips the update and flags the step (second return).
pub fn corrector_step<T: Real>(
    model: &dyn ScoreModel<T>,
    state: &DiffusionState<T>,
    snr: f64,
    rng: &mut impl Rng,
) -> Result<(DiffusionState<T>, bool)> {
    if !(snr > 0.0) {
        return Err(CoreError::Sampler {
            step: state.step_index,
            reason: format!("snr must be > 0, got {snr}"),
        });
    }
    let score = model.score(&state.x, state.t);
    let z = normal_image::<T>(state.x.rows(), state.x.cols(), rng);
    let score_norm = score.norm_l2();
    if score_norm == T::zero() {
        return Ok((state.clone(), true));
    }
    let noise_norm: T = real((state.x.len() as f64).sqrt());
    let eps = langevin_step_size(snr, noise_norm, score_norm);
    let noise_scale = (real::<T>(2.0) * eps).sqrt();
    let mut x = state.x.clone();
    for ((xv, &s), &zv) in x
        .as_mut_slice()
        .iter_mut()
        .zip(score.iter())
        .zip(z.iter())
    {
        *xv = *xv + eps * s + noise_scale * zv;
    }
    Ok((
        DiffusionState {
            x,
            t: state.t,
            step_index: state.step_index,
        },
        false,
    ))
}

/// Full predictor–corrector reverse pass from pure noise.
///
/// Starts from σ(1)·z at step N, then for each grid step runs the
/// corrector iterations followed by the predictor. Deterministic per
/// `cfg.seed`. A non-finite state aborts with the offending step index.
pub fn pc_sample<T: Real>(
    sched: &VeSchedule<T>,
    model: &dyn ScoreModel<T>,
    cfg: &SamplerConfig,
    shape: (usize, usize),
) -> Result<Image2D<T>> {
    let mut rng = substream(cfg.seed, "sample");
    pc_sample_with_rng(sched, model, cfg, shape, &mut rng)
}

/// [`pc_sample`] with a caller-provided stream (for ensembles of chains).
pub fn pc_sample_with_rng<T: Real>(
    sched: &VeSchedule<T>,
    model: &dyn ScoreModel<T>,
    cfg: &SamplerConfig,
    shape: (usize, usize),
    rng: &mut impl Rng,
) -> Result<Image2D<T>> {
    cfg.validate()?;
    let sched = sched.with_n_steps(cfg.n_steps)?;
    let (rows, cols) = shape;
    let init = normal_image::<T>(rows, cols, rng).map(|z| sched.sigma_max() * z);
    let mut state = DiffusionState::at_step(&sched, init, cfg.n_steps);
    while state.step_index > 0 {
        for _ in 0..cfg.corrector_iters {
            let (next, _flagged) = corrector_step(model, &state, cfg.snr, rng)?;
            state = next;
        }
        state = predictor_step(&sched, model, &state, rng)?;
        if !state.x.all_finite() {
            return Err(CoreError::Sampler {
                step: state.step_index,
                reason: "non-finite sample state".into(),
            });
        }
    }
    Ok(state.x)
}

/// Evolve an ensemble of chains jointly, with the corrector step size
/// computed from ensemble-mean norms (the batch semantics of the step-size
/// rule: one shared ε per iteration). Chains are otherwise independent;
/// per-chain noise comes from one sequential stream, so the result is
/// deterministic per seed.
pub fn pc_sample_ensemble<T: Real>(
    sched: &VeSchedule<T>,
    model: &dyn ScoreModel<T>,
    cfg: &SamplerConfig,
    shape: (usize, usize),
    n_chains: usize,
) -> Result<Vec<Image2D<T>>> {
    cfg.validate()?;
    let sched = sched.with_n_steps(cfg.n_steps)?;
    let (rows, cols) = shape;
    let mut rng = substream(cfg.seed, "sample-ensemble");
    let mut xs: Vec<Image2D<T>> = (0..n_chains)
        .map(|_| normal_image::<T>(rows, cols, &mut rng).map(|z| sched.sigma_max() * z))
        .collect();
    for level in (1..=cfg.n_steps).rev() {
        let t = sched.grid_t(level);
        for _ in 0..cfg.corrector_iters {
            let scores: Vec<Image2D<T>> = xs.iter().map(|x| model.score(x, t)).collect();
            let noises: Vec<Image2D<T>> =
                (0..n_chains).map(|_| normal_image::<T>(rows, cols, &mut rng)).collect();
            let mean_norm = |imgs: &[Image2D<T>]| {
                imgs.iter().fold(T::zero(), |acc, i| acc + i.norm_l2())
                    / real::<T>(n_chains as f64)
            };
            let score_norm = mean_norm(&scores);
            if score_norm == T::zero() {
                continue;
            }
            let eps = langevin_step_size(cfg.snr, mean_norm(&noises), score_norm);
            let noise_scale = (real::<T>(2.0) * eps).sqrt();
            for ((x, s), z) in xs.iter_mut().zip(&scores).zip(&noises) {
                for ((xv, &sv), &zv) in
                    x.as_mut_slice().iter_mut().zip(s.iter()).zip(z.iter())
                {
                    *xv = *xv + eps * sv + noise_scale * zv;
                }
            }
        }
        let sigma_cur = sched.sigma_at_step(level);
        let sigma_prev = sched.sigma_at_step(level - 1);
        let dvar = sigma_cur * sigma_cur - sigma_prev * sigma_prev;
        let noise_std = (sigma_prev * sigma_prev * dvar / (sigma_cur * sigma_cur)).sqrt();
        for x in xs.iter_mut() {
            let score = model.score(x, t);
            let z = normal_image::<T>(rows, cols, &mut rng);
            for ((xv, &sv), &zv) in x.as_mut_slice().iter_mut().zip(score.iter()).zip(z.iter()) {
                *xv = *xv + dvar * sv + noise_std * zv;
            }
            if !x.all_finite() {
                return Err(CoreError::Sampler {
                    step: level - 1,
                    reason: "non-finite ensemble state".into(),
                });
            }
        }
    }
    Ok(xs)
}
