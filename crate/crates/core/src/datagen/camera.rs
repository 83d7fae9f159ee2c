use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent float methods shadow these under std
use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::Scene;
use crate::error::{config_err, Result};

/// Pinhole camera rigidly attached to the LiDAR.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraModel {
    /// Upper-triangular intrinsics `Γ_K` (pixels).
    #[serde(rename = "cam_intrinsics")]
    pub intrinsics: [[f64; 3]; 3],
    /// Rigid LiDAR→camera transform `Γ_{l→c}`.
    #[serde(rename = "cam_extrinsics")]
    pub extrinsics: [[f64; 4]; 4],
    #[serde(rename = "cam_w")]
    pub width: usize,
    #[serde(rename = "cam_h")]
    pub height: usize,
}

impl Default for CameraModel {
    /// Forward-looking 256×96 camera with a 100° horizontal field of view,
    /// centred on the LiDAR origin.
    fn default() -> Self {
        let width = 256;
        let height = 96;
        let f = 0.5 * width as f64 / 50f64.to_radians().tan();
        Self::forward(f, width, height)
    }
}

impl CameraModel {
    /// Camera at the LiDAR origin looking along +x (camera x right, y down,
    /// z forward) with square pixels and a centred principal point.
    pub fn forward(focal: f64, width: usize, height: usize) -> Self {
        Self {
            intrinsics: [
                [focal, 0.0, 0.5 * width as f64],
                [0.0, focal, 0.5 * height as f64],
                [0.0, 0.0, 1.0],
            ],
            extrinsics: [
                [0.0, -1.0, 0.0, 0.0],
                [0.0, 0.0, -1.0, 0.0],
                [1.0, 0.0, 0.0, 0.0],
                [0.0, 0.0, 0.0, 1.0],
            ],
            width,
            height,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = &self.intrinsics;
        if k[1][0] != 0.0 || k[2][0] != 0.0 || k[2][1] != 0.0 {
            return Err(config_err!("intrinsics must be upper triangular"));
        }
        if !(k[0][0] > 0.0 && k[1][1] > 0.0) || k[2][2] == 0.0 {
            return Err(config_err!("focal lengths must be positive"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(config_err!("camera image must be at least 1x1"));
        }
        let r = self.rotation();
        let mut err = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                err += (dot - target) * (dot - target);
            }
        }
        if err.sqrt() >= 1e-6 {
            return Err(config_err!("extrinsic rotation is not orthonormal"));
        }
        Ok(())
    }

    pub fn rotation(&self) -> [[f64; 3]; 3] {
        let e = &self.extrinsics;
        [
            [e[0][0], e[0][1], e[0][2]],
            [e[1][0], e[1][1], e[1][2]],
            [e[2][0], e[2][1], e[2][2]],
        ]
    }

    pub fn translation(&self) -> [f64; 3] {
        [self.extrinsics[0][3], self.extrinsics[1][3], self.extrinsics[2][3]]
    }

    /// LiDAR-frame point in camera coordinates.
    pub fn to_camera(&self, p: [f64; 3]) -> [f64; 3] {
        let r = self.rotation();
        let t = self.translation();
        let mut out = [0.0; 3];
        for i in 0..3 {
            out[i] = r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2] + t[i];
        }
        out
    }

    /// Camera centre in the LiDAR frame.
    pub fn center(&self) -> [f64; 3] {
        let r = self.rotation();
        let t = self.translation();
        let mut c = [0.0; 3];
        for i in 0..3 {
            c[i] = -(r[0][i] * t[0] + r[1][i] * t[1] + r[2][i] * t[2]);
        }
        c
    }

    /// Unit LiDAR-frame direction of the ray through image point `(u, v)`.
    pub fn pixel_ray(&self, u: f64, v: f64) -> [f64; 3] {
        let k = &self.intrinsics;
        // back-substitution through the upper-triangular K
        let z = 1.0 / k[2][2];
        let y = (v - k[1][2] * z) / k[1][1];
        let x = (u - k[0][1] * y - k[0][2] * z) / k[0][0];
        let r = self.rotation();
        let mut d = [0.0; 3];
        for i in 0..3 {
            d[i] = r[0][i] * x + r[1][i] * y + r[2][i] * z;
        }
        let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        [d[0] / n, d[1] / n, d[2] / n]
    }
}

/// Per-pixel class id (−1 for no hit) and hit distance (+∞ for no hit).
#[derive(Clone, Debug, PartialEq)]
pub struct ClassImage {
    pub width: usize,
    pub height: usize,
    pub class_id: Vec<i32>,
    pub depth: Vec<f64>,
}

impl ClassImage {
    pub fn class_at(&self, u: usize, v: usize) -> i32 {
        self.class_id[v * self.width + u]
    }

    pub fn depth_at(&self, u: usize, v: usize) -> f64 {
        self.depth[v * self.width + u]
    }
}

/// Partition of image pixels into single-class superpixels.
#[derive(Clone, Debug, PartialEq)]
pub struct SuperpixelMap {
    pub width: usize,
    pub height: usize,
    pub tile: usize,
    /// Superpixel id of each pixel, dense in `[0, count)`.
    pub ids: Vec<u32>,
    /// Class shared by the pixels of each superpixel.
    pub class_of: Vec<i32>,
}

impl SuperpixelMap {
    pub fn count(&self) -> usize {
        self.class_of.len()
    }

    pub fn id_at(&self, u: usize, v: usize) -> u32 {
        self.ids[v * self.width + u]
    }

    /// Splits `image` into `tile × tile` blocks, then each block by class.
    /// Ids follow row-major tile order, then ascending class inside a tile.
    pub fn from_class_image(image: &ClassImage, tile: usize) -> Result<Self> {
        if tile == 0 {
            return Err(config_err!("superpixel tile size must be positive"));
        }
        let (w, h) = (image.width, image.height);
        let mut ids = vec![0u32; w * h];
        let mut class_of = Vec::new();
        for ty in (0..h).step_by(tile) {
            for tx in (0..w).step_by(tile) {
                let mut classes: Vec<i32> = Vec::new();
                for v in ty..(ty + tile).min(h) {
                    for u in tx..(tx + tile).min(w) {
                        classes.push(image.class_at(u, v));
                    }
                }
                classes.sort_unstable();
                classes.dedup();
                let base = class_of.len() as u32;
                for v in ty..(ty + tile).min(h) {
                    for u in tx..(tx + tile).min(w) {
                        let c = image.class_at(u, v);
                        let k = classes.binary_search(&c).unwrap() as u32;
                        ids[v * w + u] = base + k;
                    }
                }
                class_of.extend_from_slice(&classes);
            }
        }
        Ok(Self {
            width: w,
            height: h,
            tile,
            ids,
            class_of,
        })
    }
}

/// Casts one ray through each pixel centre and tiles the class map into
/// superpixels of `tile × tile` pixels split by class.
pub fn render_camera(scene: &Scene, camera: &CameraModel, tile: usize) -> Result<(ClassImage, SuperpixelMap)> {
    camera.validate()?;
    let (w, h) = (camera.width, camera.height);
    let origin = camera.center();
    let mut class_id = vec![-1; w * h];
    let mut depth = vec![f64::INFINITY; w * h];
    for v in 0..h {
        for u in 0..w {
            let dir = camera.pixel_ray(u as f64 + 0.5, v as f64 + 0.5);
            if let Some((t, c)) = scene.cast(origin, dir, f64::INFINITY) {
                class_id[v * w + u] = c;
                depth[v * w + u] = t;
            }
        }
    }
    let image = ClassImage {
        width: w,
        height: h,
        class_id,
        depth,
    };
    let superpixels = SuperpixelMap::from_class_image(&image, tile)?;
    Ok((image, superpixels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{class, Primitive, PrimitiveKind};

    fn sky_only() -> Scene {
        Scene {
            primitives: vec![],
            seed: 0,
        }
    }

    #[test]
    fn default_camera_is_valid() {
        CameraModel::default().validate().unwrap();
        let mut c = CameraModel::default();
        c.extrinsics[0][0] = 2.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn empty_scene_gives_one_superpixel_per_tile() {
        let cam = CameraModel::forward(40.0, 32, 16);
        let (img, sp) = render_camera(&sky_only(), &cam, 8).unwrap();
        assert!(img.class_id.iter().all(|&c| c == -1));
        assert!(img.depth.iter().all(|d| d.is_infinite()));
        assert_eq!(sp.count(), 4 * 2);
    }

    #[test]
    fn a_box_covering_a_tile_makes_one_superpixel() {
        let cam = CameraModel::forward(40.0, 32, 16);
        let scene = Scene {
            primitives: vec![Primitive {
                kind: PrimitiveKind::Box,
                center: [3.0, 0.0, 0.0],
                extents: [1.0, 40.0, 40.0],
                yaw: 0.0,
                class_id: class::VEHICLE,
            }],
            seed: 0,
        };
        let (img, sp) = render_camera(&scene, &cam, 8).unwrap();
        // brute-force scan of the first tile
        let first = sp.id_at(0, 0);
        for v in 0..8 {
            for u in 0..8 {
                assert_eq!(img.class_at(u, v), class::VEHICLE);
                assert_eq!(sp.id_at(u, v), first);
            }
        }
        assert_eq!(sp.count(), 8);
    }

    #[test]
    fn superpixels_partition_the_image_by_class() {
        let img = ClassImage {
            width: 4,
            height: 2,
            class_id: vec![0, 1, 1, 2, 0, 0, 2, 2],
            depth: vec![1.0; 8],
        };
        let sp = SuperpixelMap::from_class_image(&img, 2).unwrap();
        assert_eq!(sp.count(), 4);
        for (px, &id) in sp.ids.iter().enumerate() {
            assert_eq!(sp.class_of[id as usize], img.class_id[px]);
        }
    }

    #[test]
    fn pixel_ray_inverts_projection() {
        let cam = CameraModel::default();
        let d = cam.pixel_ray(30.25, 70.5);
        let c = cam.to_camera([5.0 * d[0], 5.0 * d[1], 5.0 * d[2]]);
        let k = cam.intrinsics;
        let u = (k[0][0] * c[0] + k[0][1] * c[1] + k[0][2] * c[2]) / c[2];
        let v = (k[1][1] * c[1] + k[1][2] * c[2]) / c[2];
        assert!((u - 30.25).abs() < 1e-9 && (v - 70.5).abs() < 1e-9);
    }
}
