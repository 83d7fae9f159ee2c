//! Synthetic scenes and sensors.
//!
//! A [`Scene`] is a handful of analytic primitives on a ground plane. It is
//! ray-cast into a LiDAR scan by [`simulate_lidar`] and rendered into a
//! per-pixel class/depth image by [`render_camera`], which also tiles the
//! class map into superpixels. [`augment`] and [`corrupt`] derive modified
//! scans for training and robustness evaluation.

mod augment;
mod camera;
mod corrupt;
mod lidar;
mod scene;

pub use augment::{augment, AugmentParams};
pub use camera::{render_camera, CameraModel, ClassImage, SuperpixelMap};
pub use corrupt::{corrupt, drop_beams, jitter, range_cut, Corruption, Severity};
pub use lidar::{intensity_base, simulate_lidar, SensorModel};
pub use scene::{build_scene, Primitive, PrimitiveKind, Scene, SceneConfig};

/// Class ids of the synthetic palette.
pub mod class {
    pub const GROUND: i32 = 0;
    pub const VEHICLE: i32 = 1;
    pub const PEDESTRIAN: i32 = 2;
    pub const POLE: i32 = 3;
    pub const BUILDING: i32 = 4;
    pub const BARRIER: i32 = 5;

    pub const NAMES: [&str; 6] = ["ground", "vehicle", "pedestrian", "pole", "building", "barrier"];
}
