//! Scans in memory: generation from the synthetic recipe, and manifest IO.

use std::fs;
use std::path::{Path, PathBuf};

use limoe_core::datagen::{
    build_scene, render_camera, simulate_lidar, CameraModel, ClassImage, Primitive, Scene, SensorModel, SuperpixelMap,
};
use limoe_core::{rng, PointCloud};
use serde::{Deserialize, Serialize};

use crate::config::{DataConfig, DatasetManifest, ScanEntry, Split};
use crate::error::{Error, Result};
use crate::{lcam, lpcd};

#[derive(Clone, Debug, PartialEq)]
pub struct Scan {
    pub id: String,
    pub split: Split,
    pub cloud: PointCloud,
    /// Class image and superpixels of the paired camera.
    pub camera: Option<(ClassImage, SuperpixelMap)>,
    pub annotated: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub sensor: SensorModel,
    pub camera: CameraModel,
    pub num_classes: usize,
    pub scans: Vec<Scan>,
}

/// Rounds every stored value to `f32`, so that files round-trip exactly.
fn quantize(cloud: &mut PointCloud, image: &mut ClassImage) {
    for p in &mut cloud.points {
        for v in &mut p.xyz {
            *v = f64::from(*v as f32);
        }
        p.intensity = f64::from(p.intensity as f32);
    }
    for d in &mut image.depth {
        *d = f64::from(*d as f32);
    }
}

/// Renders one scan of `scene`.
pub fn render_scan(scene: &Scene, cfg: &DataConfig, id: String, split: Split) -> Result<Scan> {
    let mut cloud = simulate_lidar(scene, &cfg.sensor)?;
    let (mut image, superpixels) = render_camera(scene, &cfg.camera, cfg.tile)?;
    quantize(&mut cloud, &mut image);
    Ok(Scan {
        id,
        split,
        cloud,
        camera: Some((image, superpixels)),
        annotated: true,
    })
}

impl Dataset {
    /// `train_scans + val_scans` random scenes; scene `i` uses a seed
    /// derived from `(cfg.seed, i)`. The first
    /// `round(annotation_fraction · train_scans)` training scans are annotated.
    pub fn generate(cfg: &DataConfig) -> Result<Self> {
        let total = cfg.train_scans + cfg.val_scans;
        let annotated = (cfg.annotation_fraction * cfg.train_scans as f64).round() as usize;
        let mut scans = Vec::with_capacity(total);
        for i in 0..total {
            let (split, id) = if i < cfg.train_scans {
                (Split::Train, format!("train_{i:03}"))
            } else {
                (Split::Val, format!("val_{:03}", i - cfg.train_scans))
            };
            let scene = build_scene(&cfg.scene, rng::derive(cfg.seed, i as u64))?;
            let mut scan = render_scan(&scene, cfg, id, split)?;
            scan.annotated = split == Split::Val || i < annotated;
            scans.push(scan);
        }
        Ok(Self {
            sensor: cfg.sensor.clone(),
            camera: cfg.camera.clone(),
            num_classes: limoe_core::NUM_CLASSES,
            scans,
        })
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Scan> {
        self.scans.iter().filter(move |s| s.split == split)
    }

    pub fn manifest(&self, annotation_fraction: f64) -> DatasetManifest {
        DatasetManifest {
            scans: self
                .scans
                .iter()
                .map(|s| ScanEntry {
                    id: s.id.clone(),
                    split: s.split,
                    cloud: PathBuf::from(format!("{}.lpcd", s.id)),
                    camera: s.camera.as_ref().map(|_| PathBuf::from(format!("{}.lcam", s.id))),
                    annotated: s.annotated,
                })
                .collect(),
            train_count: self.split(Split::Train).count(),
            val_count: self.split(Split::Val).count(),
            annotation_fraction,
            num_classes: self.num_classes,
            sensor: self.sensor.clone(),
            camera: self.camera.clone(),
        }
    }

    /// Writes every scan plus `manifest.json` into `dir`.
    pub fn save(&self, dir: &Path, annotation_fraction: f64) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = self.manifest(annotation_fraction);
        for (scan, entry) in self.scans.iter().zip(&manifest.scans) {
            lpcd::write(&dir.join(&entry.cloud), &scan.cloud)?;
            if let (Some((image, sp)), Some(path)) = (&scan.camera, &entry.camera) {
                lcam::write(&dir.join(path), image, sp)?;
            }
        }
        let path = dir.join("manifest.json");
        manifest.save(&path)?;
        Ok(path)
    }

    pub fn load(manifest_path: &Path) -> Result<Self> {
        let m = DatasetManifest::load(manifest_path)?;
        let dir = manifest_path.parent().unwrap_or(Path::new("."));
        let mut scans = Vec::with_capacity(m.scans.len());
        for e in &m.scans {
            let cloud = lpcd::read_any(&dir.join(&e.cloud))?;
            let camera = e.camera.as_ref().map(|p| lcam::read(&dir.join(p))).transpose()?;
            if let Some((image, _)) = &camera {
                if image.width != m.camera.width || image.height != m.camera.height {
                    return Err(Error::format(format!(
                        "camera file of `{}` does not match the camera model",
                        e.id
                    )));
                }
            }
            if let Some(p) = cloud.points.iter().find(|p| usize::from(p.beam) >= m.sensor.beam_count) {
                return Err(Error::format(format!(
                    "scan `{}` has beam {} outside the sensor",
                    e.id, p.beam
                )));
            }
            scans.push(Scan {
                id: e.id.clone(),
                split: e.split,
                cloud,
                camera,
                annotated: e.annotated,
            });
        }
        Ok(Self {
            sensor: m.sensor,
            camera: m.camera,
            num_classes: m.num_classes,
            scans,
        })
    }
}

/// A scene with its sensor and camera, as one JSON document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneDocument {
    pub primitives: Vec<Primitive>,
    #[serde(flatten)]
    pub sensor: SensorModel,
    #[serde(flatten)]
    pub camera: CameraModel,
    #[serde(default = "default_classes")]
    pub num_classes: usize,
}

fn default_classes() -> usize {
    limoe_core::NUM_CLASSES
}

impl SceneDocument {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: Self = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.into(),
            source: e,
        })?;
        doc.scene().validate(doc.num_classes)?;
        doc.sensor.validate()?;
        doc.camera.validate()?;
        Ok(doc)
    }

    pub fn scene(&self) -> Scene {
        Scene {
            primitives: self.primitives.clone(),
            seed: 0,
        }
    }
}
