use alloc::vec::Vec;

#[allow(unused_imports)] // inherent float methods shadow these under std
use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::Scene;
use crate::error::{config_err, Result};
use crate::geometry::{Point, PointCloud};

/// Spinning LiDAR with evenly spaced beams and azimuth steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorModel {
    pub beam_count: usize,
    pub azimuth_steps: usize,
    /// Total vertical field of view φ (radians).
    #[serde(rename = "fov_total_rad")]
    pub fov_total: f64,
    /// Downward part of the field of view φ_down (radians).
    #[serde(rename = "fov_down_rad")]
    pub fov_down: f64,
    #[serde(rename = "max_range_m")]
    pub max_range: f64,
    #[serde(rename = "range_h")]
    pub range_height: usize,
    #[serde(rename = "range_w")]
    pub range_width: usize,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            beam_count: 24,
            azimuth_steps: 256,
            fov_total: 35f64.to_radians(),
            fov_down: 30f64.to_radians(),
            max_range: 50.0,
            range_height: 24,
            range_width: 256,
        }
    }
}

impl SensorModel {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.fov_down && self.fov_down < self.fov_total) {
            return Err(config_err!("need 0 < fov_down < fov_total"));
        }
        if self.range_height == 0 || self.range_width == 0 {
            return Err(config_err!("range image must be at least 1x1"));
        }
        if self.beam_count == 0 || self.azimuth_steps == 0 {
            return Err(config_err!("beam_count and azimuth_steps must be positive"));
        }
        if self.beam_count > usize::from(u16::MAX) {
            return Err(config_err!("beam_count must fit in 16 bits"));
        }
        if !(self.max_range > 0.0) {
            return Err(config_err!("max_range must be positive"));
        }
        Ok(())
    }

    /// Elevation of `beam`; beam 0 is the top beam. Beams sit at the centres
    /// of `beam_count` equal slices of `[−φ_down, φ − φ_down]`.
    pub fn elevation(&self, beam: usize) -> f64 {
        let top = self.fov_total - self.fov_down;
        top - self.fov_total * (beam as f64 + 0.5) / self.beam_count as f64
    }

    /// Azimuth of step `a`, at the centres of equal slices of `[−π, π)`.
    pub fn azimuth(&self, step: usize) -> f64 {
        -core::f64::consts::PI + 2.0 * core::f64::consts::PI * (step as f64 + 0.5) / self.azimuth_steps as f64
    }

    pub fn ray(&self, beam: usize, step: usize) -> [f64; 3] {
        let (se, ce) = self.elevation(beam).sin_cos();
        let (sa, ca) = self.azimuth(step).sin_cos();
        [ce * ca, ce * sa, se]
    }
}

/// Reflectivity of each palette class before range falloff.
pub fn intensity_base(class_id: i32) -> f64 {
    const BASE: [f64; 6] = [0.25, 0.85, 0.5, 0.65, 0.4, 0.75];
    BASE.get(class_id as usize).copied().unwrap_or(0.5)
}

/// Casts one ray per `(beam, azimuth)` pair, in that order. Rays without a
/// hit inside `max_range` produce no point.
pub fn simulate_lidar(scene: &Scene, sensor: &SensorModel) -> Result<PointCloud> {
    sensor.validate()?;
    let mut points = Vec::new();
    for beam in 0..sensor.beam_count {
        for step in 0..sensor.azimuth_steps {
            let dir = sensor.ray(beam, step);
            if let Some((t, cls)) = scene.cast([0.0; 3], dir, sensor.max_range) {
                let intensity = (intensity_base(cls) * (1.0 - t / sensor.max_range)).clamp(0.0, 1.0);
                points.push(Point {
                    xyz: [t * dir[0], t * dir[1], t * dir[2]],
                    intensity,
                    beam: beam as u16,
                    label: cls,
                });
            }
        }
    }
    Ok(PointCloud { points })
}
