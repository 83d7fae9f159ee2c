use alloc::vec::Vec;

use super::{RangeImage, SuperpointPartition, VoxelGrid};
use crate::error::{contract_err, Result};
use crate::nn::{Graph, Real, Var};

/// Anything that assigns each point one row of a feature container.
pub trait PointMapping {
    /// Number of rows the container must have.
    fn container_rows(&self) -> usize;
    /// Container row of every point.
    fn point_rows(&self) -> Vec<u32>;
}

impl PointMapping for RangeImage {
    fn container_rows(&self) -> usize {
        self.cells()
    }

    fn point_rows(&self) -> Vec<u32> {
        (0..self.pixels.len()).map(|i| self.cell_of(i) as u32).collect()
    }
}

impl PointMapping for VoxelGrid {
    fn container_rows(&self) -> usize {
        self.len()
    }

    fn point_rows(&self) -> Vec<u32> {
        self.point_voxel.clone()
    }
}

/// Per-point features gathered from per-cell or per-voxel features.
pub fn align_to_points<T: Real, M: PointMapping>(g: &mut Graph<T>, features: Var, mapping: &M) -> Result<Var> {
    let rows = g.shape(features).0;
    if rows != mapping.container_rows() {
        return Err(contract_err!(
            "feature rows {} do not match the mapping's {} rows",
            rows,
            mapping.container_rows()
        ));
    }
    g.gather_rows(features, mapping.point_rows())
}

/// `S×D` matrix of superpoint means of per-point features.
pub fn group_mean<T: Real>(g: &mut Graph<T>, features: Var, partition: &SuperpointPartition) -> Result<Var> {
    let rows = g.shape(features).0;
    if rows != partition.assignment.len() {
        return Err(contract_err!(
            "{} feature rows for {} points",
            rows,
            partition.assignment.len()
        ));
    }
    g.scatter_mean(features, partition.assignment.clone(), partition.len())
}
