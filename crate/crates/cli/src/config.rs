//! Experiment configuration: one JSON document drives every command.
//! All randomness derives from the single master `seed` through labeled
//! substreams, so re-running any command with the same config reproduces
//! its artifacts byte for byte.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use scorepaint_core::geometry::ProjectionGeometry;
use scorepaint_core::score::{AdamConfig, NetConfig, TrainOpts};
use scorepaint_core::sde::VeSchedule;
use scorepaint_core::SamplerConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSection {
    /// Number of phantom volumes to generate.
    pub n_volumes: usize,
    pub volume_dims: [usize; 3],
    pub voxel_mm: f64,
    /// Implants per volume, drawn uniformly from this inclusive range.
    pub implants_min: usize,
    pub implants_max: usize,
    /// Fraction of volumes held out for test (rounded to whole volumes,
    /// at least one on each side of the split).
    pub test_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub n_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub channels: Vec<usize>,
    pub time_features: usize,
    pub time_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    pub n_steps: usize,
    pub snr: f64,
    pub corrector_iters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskSection {
    /// Metal mask threshold as a fraction of the per-volume max metal
    /// line integral.
    pub threshold_rel: f64,
    /// Circle diameter for the synthetic test masks (px).
    pub circle_px: usize,
    /// Band width for the synthetic rectangle masks (px).
    pub rect_px: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub psnr_peak: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblateSection {
    pub snrs: Vec<f64>,
    pub steps: Vec<usize>,
    /// Test images per grid cell.
    pub n_images: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub geometry: ProjectionGeometry,
    pub phantom: PhantomSection,
    pub schedule: ScheduleSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub sampler: SamplerSection,
    pub masks: MaskSection,
    pub eval: EvalSection,
    pub ablate: AblateSection,
    pub paths: PathsSection,
}

impl ExperimentConfig {
    /// Desk-scale defaults: the full pipeline runs in minutes on a laptop.
    /// The production-scale acquisition (256×256 detector, 1164/622 mm) is
    /// the same configuration scaled by 4.
    pub fn desk_default() -> Self {
        Self {
            seed: 17,
            geometry: ProjectionGeometry {
                sdd: 291.0,
                sid: 155.5,
                detector_px: (64, 64),
                pixel_mm: 1.16,
                angular_range_deg: 360.0,
                angular_step_deg: 6.0,
            },
            phantom: PhantomSection {
                n_volumes: 10,
                volume_dims: [64, 64, 64],
                voxel_mm: 0.5,
                implants_min: 1,
                implants_max: 3,
                test_fraction: 0.1,
            },
            schedule: ScheduleSection {
                sigma_min: 0.01,
                sigma_max: 128.0,
                n_steps: 1000,
            },
            model: ModelSection {
                channels: vec![16, 32, 64],
                time_features: 32,
                time_scale: 16.0,
            },
            train: TrainSection {
                steps: 3000,
                batch: 4,
                lr: 1e-3,
            },
            sampler: SamplerSection {
                n_steps: 200,
                snr: 0.4,
                corrector_iters: 1,
            },
            masks: MaskSection {
                threshold_rel: 1e-3,
                circle_px: 20,
                rect_px: 20,
            },
            eval: EvalSection { psnr_peak: 1.0 },
            ablate: AblateSection {
                snrs: vec![0.2, 0.4, 0.6],
                steps: vec![500, 1000, 2000],
                n_images: 2,
            },
            paths: PathsSection {
                out_dir: PathBuf::from("out"),
            },
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn emit(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        anyhow::ensure!(self.phantom.n_volumes >= 2, "need at least 2 volumes to split");
        anyhow::ensure!(
            (0.0..1.0).contains(&self.phantom.test_fraction),
            "test_fraction must be in [0,1)"
        );
        anyhow::ensure!(
            self.phantom.implants_min <= self.phantom.implants_max,
            "implants_min > implants_max"
        );
        self.ve_schedule()?;
        anyhow::ensure!(!self.model.channels.is_empty(), "model.channels empty");
        anyhow::ensure!(self.sampler.snr > 0.0, "sampler.snr must be > 0");
        anyhow::ensure!(self.sampler.n_steps >= 1, "sampler.n_steps must be >= 1");
        anyhow::ensure!(self.masks.threshold_rel > 0.0, "masks.threshold_rel must be > 0");
        anyhow::ensure!(self.eval.psnr_peak > 0.0, "eval.psnr_peak must be > 0");
        anyhow::ensure!(
            !self.ablate.snrs.is_empty() && !self.ablate.steps.is_empty(),
            "ablate grid empty"
        );
        Ok(())
    }

    pub fn ve_schedule(&self) -> Result<VeSchedule<f32>> {
        Ok(VeSchedule::new(
            self.schedule.sigma_min as f32,
            self.schedule.sigma_max as f32,
            self.schedule.n_steps,
        )?)
    }

    pub fn net_config(&self) -> NetConfig {
        NetConfig {
            channels: self.model.channels.clone(),
            time_features: self.model.time_features,
            time_scale: self.model.time_scale,
            seed: scorepaint_core::rng::derive_seed(self.seed, "model-init"),
        }
    }

    pub fn train_opts(&self) -> TrainOpts {
        TrainOpts {
            steps: self.train.steps,
            batch: self.train.batch,
            seed: scorepaint_core::rng::derive_seed(self.seed, "train"),
            adam: AdamConfig {
                lr: self.train.lr,
                ..AdamConfig::default()
            },
        }
    }

    pub fn sampler_config(&self, job_label: &str) -> SamplerConfig {
        SamplerConfig {
            n_steps: self.sampler.n_steps,
            snr: self.sampler.snr,
            corrector_iters: self.sampler.corrector_iters,
            seed: scorepaint_core::rng::derive_seed(self.seed, job_label),
        }
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.paths.out_dir.join("dataset")
    }

    pub fn train_dir(&self) -> PathBuf {
        self.paths.out_dir.join("train")
    }

    pub fn inpaint_dir(&self) -> PathBuf {
        self.paths.out_dir.join("inpaint")
    }

    pub fn ablate_dir(&self) -> PathBuf {
        self.paths.out_dir.join("ablate")
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.paths.out_dir.join("eval")
    }
}
