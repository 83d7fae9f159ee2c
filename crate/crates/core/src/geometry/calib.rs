use alloc::vec::Vec;

#[allow(unused_imports)] // inherent float methods shadow these under std
use num_traits::Float;

use super::PointCloud;
use crate::datagen::CameraModel;

/// Pinhole projection of one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImageCoord {
    pub u: f64,
    pub v: f64,
    /// Depth along the optical axis.
    pub z_cam: f64,
    /// Euclidean distance from the camera centre.
    pub range: f64,
    pub in_frustum: bool,
}

impl ImageCoord {
    /// Integer pixel, when inside the frustum.
    pub fn pixel(&self) -> Option<(usize, usize)> {
        self.in_frustum
            .then(|| (self.u.floor() as usize, self.v.floor() as usize))
    }
}

pub fn project_point(camera: &CameraModel, xyz: [f64; 3]) -> ImageCoord {
    let c = camera.to_camera(xyz);
    let k = &camera.intrinsics;
    let range = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
    let z = c[2];
    let hu = k[0][0] * c[0] + k[0][1] * c[1] + k[0][2] * c[2];
    let hv = k[1][1] * c[1] + k[1][2] * c[2];
    let hw = k[2][2] * c[2];
    let (u, v) = if hw != 0.0 {
        (hu / hw, hv / hw)
    } else {
        (f64::NAN, f64::NAN)
    };
    let in_frustum = z > 0.0 && u >= 0.0 && v >= 0.0 && u < camera.width as f64 && v < camera.height as f64;
    ImageCoord {
        u,
        v,
        z_cam: z,
        range,
        in_frustum,
    }
}

pub fn project_to_image(cloud: &PointCloud, camera: &CameraModel) -> Vec<ImageCoord> {
    cloud.points.iter().map(|p| project_point(camera, p.xyz)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_camera(f: f64, cx: f64, cy: f64) -> CameraModel {
        CameraModel {
            intrinsics: [[f, 0.0, cx], [0.0, f, cy], [0.0, 0.0, 1.0]],
            extrinsics: [
                [1.0, 0.0, 0.0, 0.0],
                [0.0, 1.0, 0.0, 0.0],
                [0.0, 0.0, 1.0, 0.0],
                [0.0, 0.0, 0.0, 1.0],
            ],
            width: 64,
            height: 48,
        }
    }

    #[test]
    fn optical_axis_hits_the_principal_point() {
        let c = project_point(&identity_camera(50.0, 32.0, 24.0), [0.0, 0.0, 4.0]);
        assert_eq!((c.u, c.v, c.z_cam), (32.0, 24.0, 4.0));
        assert!(c.in_frustum);
    }

    #[test]
    fn points_behind_the_camera_are_outside() {
        let c = project_point(&identity_camera(50.0, 32.0, 24.0), [0.1, 0.0, -4.0]);
        assert!(!c.in_frustum);
        assert!(c.pixel().is_none());
    }

    #[test]
    fn scaling_along_the_ray_keeps_the_pixel() {
        let cam = CameraModel::default();
        let a = project_point(&cam, [7.0, 1.5, -0.4]);
        let b = project_point(&cam, [14.0, 3.0, -0.8]);
        assert!((a.u - b.u).abs() < 1e-9 && (a.v - b.v).abs() < 1e-9);
        assert!((b.range - 2.0 * a.range).abs() < 1e-9);
    }
}
