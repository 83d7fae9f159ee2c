use alloc::vec;
use alloc::vec::Vec;

use super::ImageCoord;
use crate::datagen::{ClassImage, SuperpixelMap};

pub const DEFAULT_DEPTH_TOLERANCE: f64 = 0.1;

/// Points grouped by the superpixel they see, dropping empty groups.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SuperpointPartition {
    /// Superpoint of every point, or −1.
    pub assignment: Vec<i32>,
    /// Member point ids per superpoint, ascending.
    pub members: Vec<Vec<u32>>,
    /// Superpixel each superpoint came from.
    pub superpixel: Vec<u32>,
}

impl SuperpointPartition {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn assigned(&self) -> usize {
        self.assignment.iter().filter(|&&s| s >= 0).count()
    }
}

/// A point joins the superpoint of its pixel's superpixel when it lies in
/// the frustum and its camera distance matches the pixel depth within
/// `tolerance`. Superpoint ids follow ascending superpixel id.
pub fn build_superpoints(
    coords: &[ImageCoord],
    image: &ClassImage,
    superpixels: &SuperpixelMap,
    tolerance: f64,
) -> SuperpointPartition {
    let mut by_pixel: Vec<Vec<u32>> = vec![Vec::new(); superpixels.count()];
    for (i, c) in coords.iter().enumerate() {
        let Some((u, v)) = c.pixel() else { continue };
        if u >= image.width || v >= image.height {
            continue;
        }
        if (c.range - image.depth_at(u, v)).abs() <= tolerance {
            by_pixel[superpixels.id_at(u, v) as usize].push(i as u32);
        }
    }
    let mut out = SuperpointPartition {
        assignment: vec![-1; coords.len()],
        ..Default::default()
    };
    for (sp, ids) in by_pixel.into_iter().enumerate() {
        if ids.is_empty() {
            continue;
        }
        let s = out.members.len() as i32;
        for &i in &ids {
            out.assignment[i as usize] = s;
        }
        out.members.push(ids);
        out.superpixel.push(sp as u32);
    }
    out
}
