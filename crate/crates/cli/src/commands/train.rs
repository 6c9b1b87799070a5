//! `train`: fit the denoiser on the training projections, write a
//! resumable checkpoint and the loss trace.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};

use scorepaint_core::image::Image2D;
use scorepaint_core::io::{load_checkpoint, load_image, save_checkpoint, write_loss_csv};
use scorepaint_core::score::{train as train_loop, DenoiserNet, OptimState};

use super::{projection_path, DatasetManifest, OutDir};
use crate::config::ExperimentConfig;

pub fn load_training_set(config: &ExperimentConfig) -> Result<(DatasetManifest, Vec<Image2D<f32>>)> {
    let dataset_dir = config.dataset_dir();
    let manifest = DatasetManifest::load(&dataset_dir)?;
    let images = manifest
        .train_stems
        .iter()
        .map(|s| {
            let (img, _) = load_image::<f32>(&projection_path(&dataset_dir, s))?;
            Ok(img)
        })
        .collect::<Result<Vec<_>>>()
        .context("loading training projections")?;
    anyhow::ensure!(!images.is_empty(), "training split is empty");
    Ok((manifest, images))
}

pub fn run(config: &ExperimentConfig, force: bool, resume: Option<&Path>) -> Result<()> {
    let (manifest, images) = load_training_set(config)?;
    let sched = config.ve_schedule()?;
    let opts = config.train_opts();

    let (mut net, mut optim, mut existing_trace) = match resume {
        Some(base) => {
            let (net, optim, ckpt) = load_checkpoint::<f32>(base)?;
            anyhow::ensure!(
                ckpt.arch == config.net_config(),
                "checkpoint architecture differs from config"
            );
            anyhow::ensure!(
                ckpt.train_seed == opts.seed,
                "checkpoint was trained under a different seed"
            );
            // keep the earlier loss rows so the trace stays complete
            let trace_path = base.with_file_name("loss.csv");
            let trace = read_loss_csv(&trace_path).unwrap_or_default();
            (net, optim, trace)
        }
        None => {
            let net = DenoiserNet::<f32>::new(config.net_config());
            let optim = OptimState::new(net.n_params());
            (net, optim, Vec::new())
        }
    };

    let out = OutDir::claim(&config.train_dir(), force)?;
    anyhow::ensure!(
        optim.steps_done <= config.train.steps,
        "checkpoint already has {} steps, config asks for {}",
        optim.steps_done,
        config.train.steps
    );
    let remaining = config.train.steps - optim.steps_done;
    let run_opts = scorepaint_core::score::TrainOpts {
        steps: remaining,
        ..opts
    };
    let trace = train_loop(&mut net, &sched, &images, &run_opts, &mut optim)?;
    existing_trace.extend(trace);

    let base = out.path.join("checkpoint");
    save_checkpoint(
        &base,
        &net,
        &optim,
        &sched,
        manifest.normalization,
        opts.seed,
        opts.adam,
    )?;
    write_loss_csv(&out.path.join("loss.csv"), &existing_trace)?;
    let last = existing_trace.last().map(|(_, l)| *l).unwrap_or(f64::NAN);
    println!(
        "train: {} steps done (this run: {remaining}), final loss {last:.6}, checkpoint at {}",
        optim.steps_done,
        base.display()
    );
    Ok(())
}

fn read_loss_csv(path: &Path) -> Result<Vec<(usize, f64)>> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for line in text.lines().skip(1) {
        let mut parts = line.split(',');
        let step: usize = parts.next().context("missing step")?.parse()?;
        let loss: f64 = parts.next().context("missing loss")?.parse()?;
        rows.push((step, loss));
    }
    Ok(rows)
}
