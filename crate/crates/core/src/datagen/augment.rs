#[allow(unused_imports)] // inherent float methods shadow these under std
use num_traits::Float;
use rand::Rng as _;

use crate::geometry::PointCloud;
use crate::rng;

/// One draw of the point-cloud augmentation recipe.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentParams {
    pub flip_x: bool,
    pub flip_y: bool,
    /// Rotation about z, uniform in `[−π, π]`.
    pub theta: f64,
    /// Isotropic scale, uniform in `[0.95, 1.05]`.
    pub scale: f64,
}

impl AugmentParams {
    pub const IDENTITY: Self = Self {
        flip_x: false,
        flip_y: false,
        theta: 0.0,
        scale: 1.0,
    };

    pub fn sample(seed: u64) -> Self {
        let mut r = rng::for_purpose(seed, "augment");
        Self {
            flip_x: r.gen_bool(0.5),
            flip_y: r.gen_bool(0.5),
            theta: r.gen_range(-core::f64::consts::PI..=core::f64::consts::PI),
            scale: r.gen_range(0.95..=1.05),
        }
    }

    /// Flips, then rotates, then scales. Labels, beams and intensities are kept.
    pub fn apply(&self, cloud: &PointCloud) -> PointCloud {
        let (s, c) = self.theta.sin_cos();
        let mut out = cloud.clone();
        for p in &mut out.points {
            let mut x = p.xyz[0];
            let mut y = p.xyz[1];
            if self.flip_x {
                x = -x;
            }
            if self.flip_y {
                y = -y;
            }
            let (rx, ry) = (c * x - s * y, s * x + c * y);
            p.xyz = [self.scale * rx, self.scale * ry, self.scale * p.xyz[2]];
        }
        out
    }
}

/// Random flips (p = 0.5 each), z-rotation and scaling, deterministic per seed.
pub fn augment(cloud: &PointCloud, seed: u64) -> (PointCloud, AugmentParams) {
    let params = AugmentParams::sample(seed);
    (params.apply(cloud), params)
}
