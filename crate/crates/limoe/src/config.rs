//! Run configuration and dataset manifests (JSON).

use std::fs;
use std::path::{Path, PathBuf};

use limoe_core::datagen::{CameraModel, SceneConfig, SensorModel};
use limoe_core::encoders::{EncoderConfig, Representation, TeacherConfig};
use limoe_core::losses::{Denominator, SmsWeights, DEFAULT_TEMPERATURE};
use limoe_core::nn::AdamWConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Epochs {
    pub pretrain: usize,
    pub cml: usize,
    pub sms: usize,
    pub probe: usize,
}

impl Default for Epochs {
    fn default() -> Self {
        Self {
            pretrain: 50,
            cml: 50,
            sms: 40,
            probe: 60,
        }
    }
}

/// Peak learning rates of the one-cycle schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningRates {
    pub pretrain: f64,
    pub cml: f64,
    pub sms_backbone: f64,
    pub sms_other: f64,
    pub probe: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            pretrain: 0.01,
            cml: 0.001,
            sms_backbone: 0.001,
            sms_other: 0.01,
            probe: 0.01,
        }
    }
}

/// Where the segmentation stage takes its backbones from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SmsInit {
    /// One contrastive-mixture student per representation.
    #[default]
    CmlStudents,
    /// The image-distilled checkpoints.
    Pretrained,
    /// Fresh weights.
    Random,
}

/// Synthetic dataset recipe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub seed: u64,
    pub train_scans: usize,
    pub val_scans: usize,
    pub scene: SceneConfig,
    pub sensor: SensorModel,
    pub camera: CameraModel,
    /// Superpixel tile edge in pixels.
    pub tile: usize,
    /// Fraction of training scans whose labels the supervised stages may use.
    pub annotation_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            train_scans: 5,
            val_scans: 2,
            scene: SceneConfig::default(),
            sensor: SensorModel::default(),
            camera: CameraModel::default(),
            tile: 16,
            annotation_fraction: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Stage a `pretrain`/`cml`/`sms`/`probe` entry point runs; informational.
    pub stage: Option<String>,
    /// Dataset manifest; when absent the data recipe below is generated in memory.
    pub dataset: Option<PathBuf>,
    pub data: DataConfig,
    /// Seed for initialisation, augmentation and gate noise.
    pub seed: u64,
    pub epochs: Epochs,
    /// Scans per optimiser step.
    pub batch_size: usize,
    #[serde(flatten)]
    pub encoder: EncoderConfig,
    pub teacher: TeacherConfig,
    pub temperature: f64,
    pub contrastive_denominator: Denominator,
    pub lr: LearningRates,
    pub optimizer: AdamWConfig,
    /// Single-representation network distilled by the mixture stage.
    pub student: Representation,
    pub augment: bool,
    pub freeze_experts: bool,
    pub sms_init: SmsInit,
    pub sms_weights: SmsWeights,
    pub depth_tolerance: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            stage: None,
            dataset: None,
            data: DataConfig::default(),
            seed: 0,
            epochs: Epochs::default(),
            batch_size: 1,
            encoder: EncoderConfig::default(),
            teacher: TeacherConfig::default(),
            temperature: DEFAULT_TEMPERATURE,
            contrastive_denominator: Denominator::All,
            lr: LearningRates::default(),
            optimizer: AdamWConfig::default(),
            student: Representation::Voxel,
            augment: true,
            freeze_experts: true,
            sms_init: SmsInit::CmlStudents,
            sms_weights: SmsWeights::default(),
            depth_tolerance: limoe_core::geometry::DEFAULT_DEPTH_TOLERANCE,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Core(limoe_core::Error::Config(m.into())));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.temperature > 0.0) {
            return bad("temperature must be positive");
        }
        if !(self.depth_tolerance >= 0.0) {
            return bad("depth_tolerance must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.data.annotation_fraction) {
            return bad("annotation_fraction must lie in [0, 1]");
        }
        self.encoder.validate()?;
        self.sms_weights.validate()?;
        self.data.sensor.validate()?;
        self.data.camera.validate()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.into(),
            source: e,
        })?;
        if let Some(ds) = &cfg.dataset {
            if ds.is_relative() {
                cfg.dataset = Some(path.parent().unwrap_or(Path::new(".")).join(ds));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical JSON, also the input of the config digest.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn digest(&self) -> String {
        crate::checkpoint::digest(serde_json::to_string(self).expect("config serialises").as_bytes())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanEntry {
    pub id: String,
    pub split: Split,
    /// LPCD (or CSV) point cloud, relative to the manifest.
    pub cloud: PathBuf,
    /// LCAM class image and superpixels, relative to the manifest.
    pub camera: Option<PathBuf>,
    /// Whether supervised stages may read this scan's labels.
    #[serde(default = "yes")]
    pub annotated: bool,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub scans: Vec<ScanEntry>,
    pub train_count: usize,
    pub val_count: usize,
    pub annotation_fraction: f64,
    pub num_classes: usize,
    pub sensor: SensorModel,
    pub camera: CameraModel,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        let count = |s: Split| self.scans.iter().filter(|e| e.split == s).count();
        if count(Split::Train) != self.train_count || count(Split::Val) != self.val_count {
            return Err(Error::format("manifest scan counts do not match its entries"));
        }
        if let Some(e) = self
            .scans
            .iter()
            .find(|e| e.split == Split::Train && e.camera.is_none())
        {
            return Err(Error::format(format!("train scan `{}` has no camera pairing", e.id)));
        }
        self.sensor.validate()?;
        self.camera.validate()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Self = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.into(),
            source: e,
        })?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serialises");
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}
