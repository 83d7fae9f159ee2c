//! Point clouds and the range, voxel and camera views derived from them.

use alloc::vec::Vec;

#[allow(unused_imports)] // inherent float methods shadow these under std
use num_traits::Float;
use serde::{Deserialize, Serialize};

mod align;
mod calib;
mod range;
mod superpoint;
mod voxel;

pub use align::{align_to_points, group_mean, PointMapping};
pub use calib::{project_point, project_to_image, ImageCoord};
pub use range::{project_to_range, range_coords, PixelCoord, RangeImage, RANGE_CHANNELS};
pub use superpoint::{build_superpoints, SuperpointPartition, DEFAULT_DEPTH_TOLERANCE};
pub use voxel::{project_labels_voxel, voxel_index, voxelize, VoxelGrid};

/// One LiDAR return.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub xyz: [f64; 3],
    pub intensity: f64,
    pub beam: u16,
    /// Class id, or −1 when unlabeled.
    pub label: i32,
}

impl Point {
    /// Distance from the sensor origin.
    pub fn depth(&self) -> f64 {
        let [x, y, z] = self.xyz;
        (x * x + y * y + z * z).sqrt()
    }

    pub fn distance(&self, other: &Point) -> f64 {
        let d: f64 = (0..3).map(|k| (self.xyz[k] - other.xyz[k]).powi(2)).sum();
        d.sqrt()
    }

    /// `(x, y, z, intensity)`.
    pub fn features(&self) -> [f64; 4] {
        [self.xyz[0], self.xyz[1], self.xyz[2], self.intensity]
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Point>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn labels(&self) -> Vec<i32> {
        self.points.iter().map(|p| p.label).collect()
    }

    /// Copy with every label replaced by −1.
    pub fn unlabeled(&self) -> Self {
        let mut out = self.clone();
        for p in &mut out.points {
            p.label = crate::IGNORE_LABEL;
        }
        out
    }
}
