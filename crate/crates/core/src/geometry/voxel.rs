use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent float methods shadow these under std
use num_traits::Float;

use super::PointCloud;
use crate::error::{config_err, Result};

/// Non-empty voxels of a cloud, ordered by integer coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGrid {
    pub sizes: [f64; 3],
    pub coords: Vec<[i64; 3]>,
    /// Member point ids per voxel, ascending.
    pub members: Vec<Vec<u32>>,
    /// Mean `(x, y, z, intensity)` of the members.
    pub pooled: Vec<[f64; 4]>,
    /// Voxel of every point.
    pub point_voxel: Vec<u32>,
    index: BTreeMap<[i64; 3], u32>,
}

pub fn voxel_index(xyz: [f64; 3], sizes: [f64; 3]) -> [i64; 3] {
    [
        (xyz[0] / sizes[0]).floor() as i64,
        (xyz[1] / sizes[1]).floor() as i64,
        (xyz[2] / sizes[2]).floor() as i64,
    ]
}

pub fn voxelize(cloud: &PointCloud, sizes: [f64; 3]) -> Result<VoxelGrid> {
    if !sizes.iter().all(|&s| s > 0.0 && s.is_finite()) {
        return Err(config_err!("voxel sizes must be positive, got {:?}", sizes));
    }
    let mut groups: BTreeMap<[i64; 3], Vec<u32>> = BTreeMap::new();
    for (i, p) in cloud.points.iter().enumerate() {
        groups.entry(voxel_index(p.xyz, sizes)).or_default().push(i as u32);
    }
    let mut point_voxel = vec![0u32; cloud.len()];
    let mut coords = Vec::with_capacity(groups.len());
    let mut members = Vec::with_capacity(groups.len());
    let mut pooled = Vec::with_capacity(groups.len());
    let mut index = BTreeMap::new();
    let mut column = Vec::new();
    for (vid, (c, ids)) in groups.into_iter().enumerate() {
        let mut mean = [0.0; 4];
        for (k, m) in mean.iter_mut().enumerate() {
            // summing in sorted order makes the mean independent of point order
            column.clear();
            column.extend(ids.iter().map(|&i| cloud.points[i as usize].features()[k]));
            column.sort_by(f64::total_cmp);
            *m = column.iter().sum::<f64>() / ids.len() as f64;
        }
        for &i in &ids {
            point_voxel[i as usize] = vid as u32;
        }
        index.insert(c, vid as u32);
        coords.push(c);
        members.push(ids);
        pooled.push(mean);
    }
    Ok(VoxelGrid {
        sizes,
        coords,
        members,
        pooled,
        point_voxel,
        index,
    })
}

impl VoxelGrid {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn find(&self, coord: [i64; 3]) -> Option<u32> {
        self.index.get(&coord).copied()
    }

    /// The voxel itself followed by its existing 6-connected neighbours, in
    /// ascending id order.
    pub fn neighborhood(&self, vid: usize) -> Vec<u32> {
        let c = self.coords[vid];
        let mut out = vec![vid as u32];
        for axis in 0..3 {
            for step in [-1i64, 1] {
                let mut n = c;
                n[axis] += step;
                if let Some(id) = self.find(n) {
                    out.push(id);
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Majority label per voxel over labeled members; ties go to the smaller
/// class id and voxels without labeled members get −1.
pub fn project_labels_voxel(grid: &VoxelGrid, labels: &[i32]) -> Vec<i32> {
    grid.members
        .iter()
        .map(|ids| {
            let mut votes: BTreeMap<i32, usize> = BTreeMap::new();
            for &i in ids {
                let l = labels[i as usize];
                if l >= 0 {
                    *votes.entry(l).or_default() += 1;
                }
            }
            let mut best = (crate::IGNORE_LABEL, 0);
            for (l, n) in votes {
                if n > best.1 {
                    best = (l, n);
                }
            }
            best.0
        })
        .collect()
}
