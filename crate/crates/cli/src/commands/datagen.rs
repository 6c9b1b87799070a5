//! `datagen`: phantoms → projections + metal masks + synthetic mask
//! families + normalization and split manifests.

use std::fs;

use anyhow::{Context, Result};
use rayon::prelude::*;

use scorepaint_core::geometry::trajectory_angles;
use scorepaint_core::image::Image2D;
use scorepaint_core::io::{save_image, save_pgm};
use scorepaint_core::masks::{synthetic_mask, MaskKind};
use scorepaint_core::phantom::{build_phantom, sample_leg_phantom};
use scorepaint_core::projector::{forward_project, render_mask};
use scorepaint_core::rng::{derive_seed, substream};
use scorepaint_core::volume::Volume3D;

use super::{split_volumes, DatasetManifest, OutDir};
use crate::config::ExperimentConfig;

pub fn stem(vol: usize, view: usize) -> String {
    format!("v{vol:03}_a{view:03}")
}

pub fn run(config: &ExperimentConfig, force: bool) -> Result<()> {
    let out = OutDir::claim(&config.dataset_dir(), force)?;
    let geom = &config.geometry;
    let angles = trajectory_angles(geom)?;
    let (train_vols, test_vols) = split_volumes(config.phantom.n_volumes, config.phantom.test_fraction);

    fs::create_dir_all(out.path.join("proj"))?;
    for family in MaskKind::ALL {
        fs::create_dir_all(out.path.join("masks").join(family.name()))?;
    }

    struct VolumeOutput {
        vol_idx: usize,
        projections: Vec<Image2D<f32>>,
        masks: Vec<Image2D<f32>>,
    }

    // per-volume work is independent; all randomness is keyed by volume index
    let volumes: Vec<VolumeOutput> = (0..config.phantom.n_volumes)
        .into_par_iter()
        .map(|vol_idx| -> Result<VolumeOutput> {
            let mut rng = substream(config.seed, &format!("datagen/vol:{vol_idx}"));
            let n_implants = rand::Rng::gen_range(
                &mut rng,
                config.phantom.implants_min..=config.phantom.implants_max,
            );
            let spec = sample_leg_phantom(
                derive_seed(config.seed, &format!("datagen/phantom:{vol_idx}")),
                config.phantom.volume_dims,
                config.phantom.voxel_mm,
                n_implants,
            );
            let (tissue, metal): (Volume3D<f32>, Volume3D<f32>) = build_phantom(&spec)?;

            let projections: Vec<Image2D<f32>> = angles
                .iter()
                .map(|&a| forward_project(&tissue, geom, a))
                .collect::<scorepaint_core::Result<_>>()?;

            // metal mask threshold: fraction of this volume's max metal integral
            let metal_projs: Vec<Image2D<f32>> = angles
                .iter()
                .map(|&a| forward_project(&metal, geom, a))
                .collect::<scorepaint_core::Result<_>>()?;
            let max_metal = metal_projs
                .iter()
                .map(|p| p.max_value())
                .fold(0.0f32, f32::max);
            let masks: Vec<Image2D<f32>> = if max_metal > 0.0 {
                let threshold = (config.masks.threshold_rel as f32) * max_metal;
                angles
                    .iter()
                    .map(|&a| render_mask(&metal, geom, a, threshold))
                    .collect::<scorepaint_core::Result<_>>()?
            } else {
                metal_projs
                    .iter()
                    .map(|p| Image2D::filled(p.rows(), p.cols(), 1.0f32))
                    .collect()
            };
            Ok(VolumeOutput {
                vol_idx,
                projections,
                masks,
            })
        })
        .collect::<Result<_>>()?;

    // normalization constant: global max over the training projections
    let normalization = volumes
        .iter()
        .filter(|v| train_vols.contains(&v.vol_idx))
        .flat_map(|v| v.projections.iter())
        .map(|p| p.max_value() as f64)
        .fold(0.0f64, f64::max);
    anyhow::ensure!(
        normalization > 0.0,
        "training projections are identically zero; check the phantom configuration"
    );

    let stems_of = |vols: &[usize]| -> Vec<String> {
        vols.iter()
            .flat_map(|&v| (0..angles.len()).map(move |a| stem(v, a)))
            .collect()
    };
    let train_stems = stems_of(&train_vols);
    let test_stems = stems_of(&test_vols);

    for v in &volumes {
        for (view, (proj, mask)) in v.projections.iter().zip(&v.masks).enumerate() {
            let s = stem(v.vol_idx, view);
            let normalized = proj.map(|x| x / normalization as f32);
            let proj_path = out.path.join("proj").join(format!("{s}.raw"));
            save_image(&proj_path, &normalized, Some(normalization))?;
            save_pgm(&proj_path.with_extension("pgm"), &normalized)?;
            let mask_path = out.path.join("masks/metal").join(format!("{s}.raw"));
            save_image(&mask_path, mask, None)?;
            save_pgm(&mask_path.with_extension("pgm"), mask)?;
        }
    }

    // synthetic mask families for the test stems
    let (rows, cols) = geom.detector_px;
    for s in &test_stems {
        for (kind, size) in [
            (MaskKind::Circle, config.masks.circle_px),
            (MaskKind::HRect, config.masks.rect_px),
            (MaskKind::VRect, config.masks.rect_px),
        ] {
            let seed = derive_seed(config.seed, &format!("datagen/mask/{}/{s}", kind.name()));
            let mask = synthetic_mask::<f32>(kind, rows, cols, size, seed)
                .with_context(|| format!("synthetic {} mask for {s}", kind.name()))?;
            let path = out
                .path
                .join("masks")
                .join(kind.name())
                .join(format!("{s}.raw"));
            save_image(&path, &mask, None)?;
            save_pgm(&path.with_extension("pgm"), &mask)?;
        }
    }

    let manifest = DatasetManifest {
        seed: config.seed,
        geometry: geom.clone(),
        phantom: config.phantom.clone(),
        normalization,
        angles_deg: angles.clone(),
        train_stems,
        test_stems,
    };
    fs::write(
        out.path.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    println!(
        "datagen: {} volumes x {} views -> {} projections ({} train / {} test), normalization {:.6}",
        config.phantom.n_volumes,
        angles.len(),
        config.phantom.n_volumes * angles.len(),
        manifest.train_stems.len(),
        manifest.test_stems.len(),
        normalization
    );
    Ok(())
}
