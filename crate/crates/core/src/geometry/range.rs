use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent float methods shadow these under std
use num_traits::Float;

use super::PointCloud;
use crate::datagen::SensorModel;

/// Per-cell channels: `x, y, z, intensity, depth`.
pub const RANGE_CHANNELS: usize = 5;

/// Integer cell of a point after flooring and clamping.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PixelCoord {
    pub u: u32,
    pub v: u32,
    /// False when the row index had to be clamped into the image.
    pub valid: bool,
}

/// Spherical projection of a cloud.
#[derive(Clone, Debug, PartialEq)]
pub struct RangeImage {
    pub height: usize,
    pub width: usize,
    /// Kept (minimum-depth) point of each cell, row-major.
    pub kept: Vec<Option<u32>>,
    /// Cell of every point.
    pub pixels: Vec<PixelCoord>,
}

/// Continuous `(u, v)` of a point before flooring.
pub fn range_coords(xyz: [f64; 3], sensor: &SensorModel) -> (f64, f64) {
    let [x, y, z] = xyz;
    let d = (x * x + y * y + z * z).sqrt();
    let elev = if d > 0.0 { (z / d).asin() } else { 0.0 };
    let u = 0.5 * (1.0 - y.atan2(x) / core::f64::consts::PI) * sensor.range_width as f64;
    let v = (1.0 - (elev + sensor.fov_down) / sensor.fov_total) * sensor.range_height as f64;
    (u, v)
}

fn clamp_floor(x: f64, n: usize) -> (u32, bool) {
    let f = x.floor();
    if f < 0.0 {
        (0, false)
    } else if f >= n as f64 {
        (n as u32 - 1, false)
    } else {
        (f as u32, true)
    }
}

pub fn project_to_range(cloud: &PointCloud, sensor: &SensorModel) -> RangeImage {
    let (h, w) = (sensor.range_height, sensor.range_width);
    let mut kept: Vec<Option<u32>> = vec![None; h * w];
    let mut pixels = Vec::with_capacity(cloud.len());
    for (i, p) in cloud.points.iter().enumerate() {
        let (u, v) = range_coords(p.xyz, sensor);
        let (u, _) = clamp_floor(u, w);
        let (v, valid) = clamp_floor(v, h);
        pixels.push(PixelCoord { u, v, valid });
        let cell = &mut kept[v as usize * w + u as usize];
        // ties keep the earlier point
        match *cell {
            Some(j) if cloud.points[j as usize].depth() <= p.depth() => {}
            _ => *cell = Some(i as u32),
        }
    }
    RangeImage {
        height: h,
        width: w,
        kept,
        pixels,
    }
}

impl RangeImage {
    pub fn cells(&self) -> usize {
        self.height * self.width
    }

    /// Row-major cell index of point `i`.
    pub fn cell_of(&self, i: usize) -> usize {
        let p = self.pixels[i];
        p.v as usize * self.width + p.u as usize
    }

    /// `cells × 5` feature rows; empty cells are zero.
    pub fn features(&self, cloud: &PointCloud) -> Vec<[f64; RANGE_CHANNELS]> {
        self.kept
            .iter()
            .map(|k| match k {
                Some(i) => {
                    let p = &cloud.points[*i as usize];
                    [p.xyz[0], p.xyz[1], p.xyz[2], p.intensity, p.depth()]
                }
                None => [0.0; RANGE_CHANNELS],
            })
            .collect()
    }

    /// Label of each cell's kept point, −1 for empty cells.
    pub fn project_labels(&self, labels: &[i32]) -> Vec<i32> {
        self.kept
            .iter()
            .map(|k| k.map_or(crate::IGNORE_LABEL, |i| labels[i as usize]))
            .collect()
    }
}
