//! `ablate`: sweep corrector SNR × sampler step count on metal-masked test
//! projections; emit the metric grid and per-image timing.
//!
//! Grid cells run sequentially so cell timings do not contend with each
//! other; images within a cell run in parallel. Metrics land in
//! `metrics.csv` (deterministic); wall-clock timings land in a separate
//! `timing.csv`, since they are inherently not reproducible byte-for-byte.

use std::fs;
use std::time::Instant;

use anyhow::{Context, Result};
use rayon::prelude::*;

use scorepaint_core::eval::{mae_masked, psnr};
use scorepaint_core::image::Image2D;
use scorepaint_core::io::{load_checkpoint, load_image};
use scorepaint_core::rng::derive_seed;
use scorepaint_core::score::LearnedScore;
use scorepaint_core::sde::VeSchedule;
use scorepaint_core::SamplerConfig;

use super::inpaint::inpaint_single;
use super::{mask_path, projection_path, DatasetManifest, OutDir};
use crate::config::ExperimentConfig;

#[derive(Debug, Clone)]
struct Cell {
    snr: f64,
    n_steps: usize,
    mae: Option<f64>,
    psnr: Option<f64>,
    seconds_per_image: Option<f64>,
}

pub fn run(config: &ExperimentConfig, checkpoint: &std::path::Path, force: bool) -> Result<()> {
    let dataset_dir = config.dataset_dir();
    let manifest = DatasetManifest::load(&dataset_dir)?;
    let (net, _optim, ckpt) = load_checkpoint::<f32>(checkpoint)?;
    let sched = VeSchedule::new(ckpt.sigma_min as f32, ckpt.sigma_max as f32, ckpt.sde_steps)?;
    let model = LearnedScore { net, sched };

    let n_images = config.ablate.n_images.max(1);
    let stems: Vec<&String> = manifest.test_stems.iter().take(n_images).collect();
    anyhow::ensure!(!stems.is_empty(), "no test projections for the ablation");

    // load once; cells reuse the same measurements
    let inputs: Vec<(Image2D<f32>, Image2D<f32>)> = stems
        .iter()
        .map(|s| {
            let (y, _) = load_image::<f32>(&projection_path(&dataset_dir, s))?;
            let (m, _) = load_image::<f32>(&mask_path(&dataset_dir, "metal", s))?;
            Ok((y, m))
        })
        .collect::<Result<_>>()
        .context("loading ablation inputs")?;

    let out = OutDir::claim(&config.ablate_dir(), force)?;
    let mut cells = Vec::new();
    let mut any_failed = false;
    for &snr in &config.ablate.snrs {
        for &n_steps in &config.ablate.steps {
            let started = Instant::now();
            let results: Vec<Result<(f64, f64)>> = inputs
                .par_iter()
                .enumerate()
                .map(|(i, (y, m))| {
                    let sampler = SamplerConfig {
                        n_steps,
                        snr,
                        corrector_iters: config.sampler.corrector_iters,
                        seed: derive_seed(
                            config.seed,
                            &format!("ablate/snr:{snr}/n:{n_steps}/img:{i}"),
                        ),
                    };
                    let restored = inpaint_single(y, m, sched, sampler, &model)?;
                    Ok((
                        mae_masked(&restored, y, m)?,
                        psnr(&restored, y, config.eval.psnr_peak),
                    ))
                })
                .collect();
            let elapsed = started.elapsed().as_secs_f64();
            let ok: Vec<&(f64, f64)> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
            if ok.len() != results.len() {
                for e in results.iter().filter_map(|r| r.as_ref().err()) {
                    eprintln!("ablate cell snr={snr} N={n_steps} failure: {e:#}");
                }
                any_failed = true;
                cells.push(Cell {
                    snr,
                    n_steps,
                    mae: None,
                    psnr: None,
                    seconds_per_image: None,
                });
                continue;
            }
            let mean = |f: fn(&(f64, f64)) -> f64| {
                ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64
            };
            cells.push(Cell {
                snr,
                n_steps,
                mae: Some(mean(|r| r.0)),
                psnr: Some(mean(|r| r.1)),
                seconds_per_image: Some(elapsed / ok.len() as f64),
            });
            println!(
                "ablate: snr={snr} N={n_steps} mae={:.4} psnr={:.2} ({:.2} s/image)",
                cells.last().unwrap().mae.unwrap(),
                cells.last().unwrap().psnr.unwrap(),
                elapsed / ok.len() as f64
            );
        }
    }

    let fmt_opt = |v: Option<f64>, digits: usize| match v {
        Some(x) => format!("{x:.digits$}"),
        None => "NA".to_string(),
    };

    let mut metrics = String::from("snr,n_steps,mae_masked,psnr\n");
    let mut timing = String::from("snr,n_steps,seconds_per_image\n");
    for c in &cells {
        metrics.push_str(&format!(
            "{},{},{},{}\n",
            c.snr,
            c.n_steps,
            fmt_opt(c.mae, 6),
            fmt_opt(c.psnr, 4)
        ));
        timing.push_str(&format!(
            "{},{},{}\n",
            c.snr,
            c.n_steps,
            fmt_opt(c.seconds_per_image, 4)
        ));
    }
    fs::write(out.path.join("metrics.csv"), metrics)?;
    fs::write(out.path.join("timing.csv"), timing)?;
    fs::write(out.path.join("table.txt"), render_table(config, &cells))?;

    anyhow::ensure!(!any_failed, "ablation grid has failed cells (marked NA)");
    Ok(())
}

/// Text table shaped like the SNR × step-count ablation layout: one row per
/// SNR with MAE/PSNR per step count, and a trailing time-per-image row.
fn render_table(config: &ExperimentConfig, cells: &[Cell]) -> String {
    let snrs = &config.ablate.snrs;
    let steps = &config.ablate.steps;
    let cell = |snr: f64, n: usize| cells.iter().find(|c| c.snr == snr && c.n_steps == n);
    let mut t = String::new();
    t.push_str(&format!("{:<14}", "metric"));
    for &n in steps {
        t.push_str(&format!("{:<22}", format!("N={n}")));
    }
    t.push('\n');
    t.push_str(&format!("{:<14}", ""));
    for _ in steps {
        t.push_str(&format!("{:<11}{:<11}", "MAE", "PSNR"));
    }
    t.push('\n');
    for &snr in snrs {
        t.push_str(&format!("{:<14}", format!("snr={snr:.2}")));
        for &n in steps {
            match cell(snr, n) {
                Some(c) if c.mae.is_some() => t.push_str(&format!(
                    "{:<11.4}{:<11.2}",
                    c.mae.unwrap(),
                    c.psnr.unwrap()
                )),
                _ => t.push_str(&format!("{:<11}{:<11}", "NA", "NA")),
            }
        }
        t.push('\n');
    }
    t.push_str(&format!("{:<14}", "time/image(s)"));
    for &n in steps {
        // timing is SNR-averaged per column
        let times: Vec<f64> = snrs
            .iter()
            .filter_map(|&snr| cell(snr, n).and_then(|c| c.seconds_per_image))
            .collect();
        if times.is_empty() {
            t.push_str(&format!("{:<22}", "NA"));
        } else {
            let mean = times.iter().sum::<f64>() / times.len() as f64;
            t.push_str(&format!("{:<22.2}", mean));
        }
    }
    t.push('\n');
    t
}
