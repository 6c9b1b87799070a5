//! `inpaint`: restore masked test projections with the trained score model
//! and with the interpolation baseline, one output tree per method.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use rayon::prelude::*;

use scorepaint_core::image::Image2D;
use scorepaint_core::inpaint::{inpaint, interpolate_baseline, InpaintProblem};
use scorepaint_core::io::{load_checkpoint, load_image, save_image, save_pgm};
use scorepaint_core::masks::MaskKind;
use scorepaint_core::score::LearnedScore;
use scorepaint_core::sde::VeSchedule;

use super::{mask_path, projection_path, DatasetManifest, OutDir};
use crate::config::ExperimentConfig;

pub fn families_of(arg: &str) -> Result<Vec<MaskKind>> {
    if arg == "all" {
        return Ok(MaskKind::ALL.to_vec());
    }
    MaskKind::parse(arg)
        .map(|k| vec![k])
        .with_context(|| format!("unknown mask family '{arg}' (metal|circle|hrect|vrect|all)"))
}

pub struct InpaintArgs<'a> {
    pub checkpoint: &'a Path,
    pub family: &'a str,
    /// Cap on the number of test projections (None = all).
    pub limit: Option<usize>,
    pub force: bool,
}

pub fn run(config: &ExperimentConfig, args: &InpaintArgs) -> Result<()> {
    let dataset_dir = config.dataset_dir();
    let manifest = DatasetManifest::load(&dataset_dir)?;
    let (net, _optim, ckpt) = load_checkpoint::<f32>(args.checkpoint)?;
    let sched = VeSchedule::new(ckpt.sigma_min as f32, ckpt.sigma_max as f32, ckpt.sde_steps)?;
    let model = LearnedScore { net, sched };
    let families = families_of(args.family)?;

    let stems: Vec<&String> = match args.limit {
        Some(k) => manifest.test_stems.iter().take(k).collect(),
        None => manifest.test_stems.iter().collect(),
    };
    anyhow::ensure!(!stems.is_empty(), "no test projections to inpaint");

    let out = OutDir::claim(&config.inpaint_dir(), args.force)?;
    for method in ["score", "interp"] {
        for family in &families {
            fs::create_dir_all(out.path.join(method).join(family.name()))?;
        }
    }

    struct Job {
        family: MaskKind,
        stem: String,
    }
    let jobs: Vec<Job> = families
        .iter()
        .flat_map(|&family| {
            stems.iter().map(move |s| Job {
                family,
                stem: (*s).clone(),
            })
        })
        .collect();

    let failures: Vec<String> = jobs
        .par_iter()
        .filter_map(|job| {
            let run_one = || -> Result<()> {
                let (y, sidecar) =
                    load_image::<f32>(&projection_path(&dataset_dir, &job.stem))?;
                let (mask, _) = load_image::<f32>(&mask_path(
                    &dataset_dir,
                    job.family.name(),
                    &job.stem,
                ))?;
                let label = format!("sample/{}/{}", job.family.name(), job.stem);
                let problem = InpaintProblem::new(
                    y.clone(),
                    mask.clone(),
                    sched,
                    config.sampler_config(&label),
                )?
                .with_clamp(0.0, 1.0);
                let restored = inpaint(&problem, &model)?;
                let interp = interpolate_baseline(&y, &mask)?;
                for (method, img) in [("score", &restored), ("interp", &interp)] {
                    let path = out
                        .path
                        .join(method)
                        .join(job.family.name())
                        .join(format!("{}.raw", job.stem));
                    save_image::<f32>(&path, img, sidecar.normalization)?;
                    save_pgm(&path.with_extension("pgm"), img)?;
                }
                Ok(())
            };
            match run_one() {
                Ok(()) => None,
                Err(e) => {
                    eprintln!("inpaint {}/{} failed: {e:#}", job.family.name(), job.stem);
                    Some(format!("{}/{}", job.family.name(), job.stem))
                }
            }
        })
        .collect();

    println!(
        "inpaint: {} jobs ({} families x {} projections), {} failed",
        jobs.len(),
        families.len(),
        stems.len(),
        failures.len()
    );
    anyhow::ensure!(
        failures.is_empty(),
        "{} inpainting jobs failed: {}",
        failures.len(),
        failures.join(", ")
    );
    Ok(())
}

/// Shared by `ablate`: inpaint one projection/mask pair with an explicit
/// sampler configuration and return the restored image.
pub fn inpaint_single(
    y: &Image2D<f32>,
    mask: &Image2D<f32>,
    sched: VeSchedule<f32>,
    sampler: scorepaint_core::SamplerConfig,
    model: &LearnedScore<f32>,
) -> Result<Image2D<f32>> {
    let problem = InpaintProblem::new(y.clone(), mask.clone(), sched, sampler)?.with_clamp(0.0, 1.0);
    Ok(inpaint(&problem, model)?)
}
