//! Conditional resampling for inpainting: at every reverse step the known
//! background is re-perturbed from the measurement and fused with the
//! sampled content through the binary mask, so the chain only ever invents
//! the masked pixels.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::image::Image2D;
use crate::rng::{normal_image, substream};
use crate::sampler::{corrector_step, predictor_step, SamplerConfig};
use crate::score::ScoreModel;
use crate::sde::{perturb, DiffusionState, VeSchedule};
use crate::{real, Real};

/// An inpainting job: measurement, mask (ones = known background), schedule
/// and sampler settings.
#[derive(Debug, Clone)]
pub struct InpaintProblem<T> {
    pub y: Image2D<T>,
    pub m: Image2D<T>,
    pub sched: VeSchedule<T>,
    pub cfg: SamplerConfig,
    /// Re-noising repeats per step (1 = the single-pass process).
    pub repeats: usize,
    /// Clamp applied to the sampled (masked) pixels of the final output;
    /// known pixels always pass through untouched.
    pub clamp: Option<(T, T)>,
}

impl<T: Real> InpaintProblem<T> {
    pub fn new(y: Image2D<T>, m: Image2D<T>, sched: VeSchedule<T>, cfg: SamplerConfig) -> Result<Self> {
        if !y.same_shape(&m) {
            return Err(CoreError::Shape(format!(
                "projection {}x{} vs mask {}x{}",
                y.rows(),
                y.cols(),
                m.rows(),
                m.cols()
            )));
        }
        if !m.is_binary() {
            return Err(CoreError::Mask("mask must be binary {0,1}".into()));
        }
        cfg.validate()?;
        Ok(Self {
            y,
            m,
            sched,
            cfg,
            repeats: 1,
            clamp: None,
        })
    }

    pub fn with_clamp(mut self, lo: T, hi: T) -> Self {
        self.clamp = Some((lo, hi));
        self
    }

    pub fn with_repeats(mut self, repeats: usize) -> Self {
        self.repeats = repeats.max(1);
        self
    }
}

/// Known branch: the measurement forward-perturbed to time t,
/// x_t¹ = y + sqrt(σ²(t) − σ²(0))·noise.
pub fn known_branch<T: Real>(problem: &InpaintProblem<T>, t: T, noise: &Image2D<T>) -> Image2D<T> {
    perturb(&problem.sched, &problem.y, t, noise)
}

/// Mask composition x = x1⊙m + x2⊙(1−m). Rejects non-binary masks and
/// shape mismatches.
pub fn compose<T: Real>(x1: &Image2D<T>, x2: &Image2D<T>, m: &Image2D<T>) -> Result<Image2D<T>> {
    if !x1.same_shape(x2) || !x1.same_shape(m) {
        return Err(CoreError::Shape("compose: image shapes differ".into()));
    }
    if !m.is_binary() {
        return Err(CoreError::Mask("compose: mask must be binary".into()));
    }
    let data = x1
        .as_slice()
        .iter()
        .zip(x2.as_slice())
        .zip(m.as_slice())
        .map(|((&a, &b), &mv)| a * mv + b * (T::one() - mv))
        .collect();
    Image2D::from_vec(x1.rows(), x1.cols(), data)
}

/// Run the conditional resampling chain and return the restored image.
///
/// After each corrector+predictor step landing on grid step i−1 the state is
/// replaced by compose(perturb(y, t_{i−1}), x, m); the final composition at
/// t = 0 has zero perturbation std, so the output's known pixels equal y
/// exactly. Deterministic per `cfg.seed`.
pub fn inpaint<T: Real>(
    problem: &InpaintProblem<T>,
    model: &dyn ScoreModel<T>,
) -> Result<Image2D<T>> {
    let mut rng = substream(problem.cfg.seed, "inpaint");
    inpaint_with_rng(problem, model, &mut rng)
}

/// [`inpaint`] with a caller-provided stream, for ensembles and parallel
/// jobs with per-image substreams.
pub fn inpaint_with_rng<T: Real>(
    problem: &InpaintProblem<T>,
    model: &dyn ScoreModel<T>,
    rng: &mut impl Rng,
) -> Result<Image2D<T>> {
    let cfg = &problem.cfg;
    cfg.validate()?;
    let sched = problem.sched.with_n_steps(cfg.n_steps)?;
    let chain_problem = InpaintProblem {
        sched,
        ..problem.clone()
    };
    let (rows, cols) = (problem.y.rows(), problem.y.cols());
    let init = normal_image::<T>(rows, cols, rng).map(|z| sched.sigma_max() * z);
    let mut state = DiffusionState::at_step(&sched, init, cfg.n_steps);

    while state.step_index > 0 {
        let level = state.step_index;
        for rep in 0..problem.repeats.max(1) {
            if rep > 0 {
                // re-noise back to the previous level and redo the step
                let sigma_cur = sched.sigma_at_step(level);
                let sigma_prev = sched.sigma_at_step(level - 1);
                let std = (sigma_cur * sigma_cur - sigma_prev * sigma_prev).sqrt();
                let z = normal_image::<T>(rows, cols, rng);
                let x = state.x.zip_map(&z, |xv, zv| xv + std * zv);
                state = DiffusionState::at_step(&sched, x, level);
            }
            for _ in 0..cfg.corrector_iters {
                let (next, _flagged) = corrector_step(model, &state, cfg.snr, rng)?;
                state = next;
            }
            state = predictor_step(&sched, model, &state, rng)?;
            let noise = normal_image::<T>(rows, cols, rng);
            let known = known_branch(&chain_problem, state.t, &noise);
            let fused = compose(&known, &state.x, &problem.m)?;
            state = DiffusionState::at_step(&sched, fused, state.step_index);
        }
        if !state.x.all_finite() {
            return Err(CoreError::Sampler {
                step: state.step_index,
                reason: "non-finite inpainting state".into(),
            });
        }
    }

    let sampled = match problem.clamp {
        Some((lo, hi)) => state.x.map(|v| v.max(lo).min(hi)),
        None => state.x,
    };
    // final fuse: known pixels come straight from y
    compose(&problem.y, &sampled, &problem.m)
}

/// Interpolation baseline: harmonic (Laplace) fill of the masked region with
/// Dirichlet data from the known pixels and mirror boundaries at the image
/// edge; equivalent to scattered linear interpolation from the mask rim.
/// Known pixels pass through bit-identically. Rejects an all-zero mask.
pub fn interpolate_baseline<T: Real>(y: &Image2D<T>, m: &Image2D<T>) -> Result<Image2D<T>> {
    if !y.same_shape(m) {
        return Err(CoreError::Shape("interpolate: shapes differ".into()));
    }
    if !m.is_binary() {
        return Err(CoreError::Mask("interpolate: mask must be binary".into()));
    }
    if m.iter().all(|&v| v == T::zero()) {
        return Err(CoreError::Mask(
            "interpolate: mask has no known pixels".into(),
        ));
    }
    let (rows, cols) = (y.rows(), y.cols());
    let unknown: Vec<(usize, usize)> = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (r, c)))
        .filter(|&(r, c)| m.get(r, c) == T::zero())
        .collect();
    if unknown.is_empty() {
        return Ok(y.clone());
    }

    // solve in f64; the known pixels are copied from y at the end anyway
    let mut grid: Vec<f64> = y.iter().map(|v| v.as_f64()).collect();
    // start the unknowns from the known-pixel mean
    let known_mean = {
        let mut acc = 0.0;
        let mut n = 0usize;
        for (i, &mv) in m.as_slice().iter().enumerate() {
            if mv == T::one() {
                acc += grid[i];
                n += 1;
            }
        }
        acc / n as f64
    };
    for &(r, c) in &unknown {
        grid[r * cols + c] = known_mean;
    }

    let omega = 2.0 / (1.0 + (std::f64::consts::PI / rows.max(cols) as f64).sin());
    let tol = 1e-12 * grid.iter().fold(1.0f64, |a, &b| a.max(b.abs()));
    let max_sweeps = 50_000;
    for _ in 0..max_sweeps {
        let mut max_delta = 0.0f64;
        for &(r, c) in &unknown {
            let mut acc = 0.0;
            let mut n = 0.0;
            if r > 0 {
                acc += grid[(r - 1) * cols + c];
                n += 1.0;
            }
            if r + 1 < rows {
                acc += grid[(r + 1) * cols + c];
                n += 1.0;
            }
            if c > 0 {
                acc += grid[r * cols + c - 1];
                n += 1.0;
            }
            if c + 1 < cols {
                acc += grid[r * cols + c + 1];
                n += 1.0;
            }
            let idx = r * cols + c;
            let target = acc / n;
            let delta = omega * (target - grid[idx]);
            grid[idx] += delta;
            max_delta = max_delta.max(delta.abs());
        }
        if max_delta < tol {
            break;
        }
    }

    let mut out = y.clone();
    for &(r, c) in &unknown {
        out.set(r, c, real(grid[r * cols + c]));
    }
    Ok(out)
}

/// On-disk description of one inpainting job.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InpaintJobSpec {
    pub projection: std::path::PathBuf,
    pub mask: std::path::PathBuf,
    pub checkpoint: std::path::PathBuf,
    pub sampler: SamplerConfig,
}
