#![allow(dead_code)]

use limoe::config::{Epochs, RunConfig};
use limoe::dataset::Dataset;
use limoe_core::datagen::{CameraModel, SensorModel};
use limoe_core::encoders::EncoderConfig;

/// A run small enough for every stage to finish in about a second.
pub fn tiny_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.data.train_scans = 2;
    cfg.data.val_scans = 1;
    cfg.data.sensor = SensorModel {
        beam_count: 8,
        azimuth_steps: 64,
        range_height: 8,
        range_width: 64,
        ..SensorModel::default()
    };
    cfg.data.camera = CameraModel::forward(40.0, 64, 24);
    cfg.data.tile = 8;
    cfg.encoder = EncoderConfig {
        dim: 8,
        hidden: 8,
        centroids: 16,
        neighbors: 4,
        ..EncoderConfig::default()
    };
    cfg.epochs = Epochs {
        pretrain: 2,
        cml: 2,
        sms: 2,
        probe: 2,
    };
    cfg
}

pub fn tiny_data(cfg: &RunConfig) -> Dataset {
    Dataset::generate(&cfg.data).unwrap()
}
