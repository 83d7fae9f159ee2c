use alloc::vec::Vec;

use super::{apply_linear, pname, EncoderConfig, Head};
use crate::error::Result;
use crate::geometry::VoxelGrid;
use crate::nn::{Graph, ParameterStore, Real, Tensor, Var};

pub(crate) const VOXEL_INPUT: usize = 4;

/// `M × 4` pooled `(x, y, z, intensity)`, coordinates scaled by `input_scale`.
pub fn voxel_input<T: Real>(grid: &VoxelGrid, cfg: &EncoderConfig) -> Tensor<T> {
    let s = cfg.input_scale;
    let data: Vec<T> = grid
        .pooled
        .iter()
        .flat_map(|f| [f[0] * s, f[1] * s, f[2] * s, f[3]])
        .map(T::of)
        .collect();
    Tensor::matrix(grid.len(), VOXEL_INPUT, data).expect("voxels x channels")
}

/// Mean over each voxel's existing 6-neighbourhood, itself included.
pub(crate) fn neighborhood_mean<T: Real>(g: &mut Graph<T>, x: Var, grid: &VoxelGrid) -> Result<Var> {
    let mut index = Vec::new();
    let mut segment = Vec::new();
    for v in 0..grid.len() {
        for n in grid.neighborhood(v) {
            index.push(n);
            segment.push(v as i32);
        }
    }
    let pairs = g.gather_rows(x, index)?;
    g.scatter_mean(pairs, segment, grid.len())
}

pub(crate) fn backbone<T: Real>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    prefix: &str,
    grid: &VoxelGrid,
    cfg: &EncoderConfig,
) -> Result<Var> {
    if grid.is_empty() {
        return Err(crate::error::contract_err!("voxel encoder needs at least one voxel"));
    }
    let x = g.constant(voxel_input(grid, cfg))?;
    let h = apply_linear(g, store, &pname(prefix, "in"), x)?;
    let h = g.relu(h)?;
    let h = neighborhood_mean(g, h, grid)?;
    let h = apply_linear(g, store, &pname(prefix, "mid"), h)?;
    g.relu(h)
}

/// Per-voxel embeddings (`M × D`).
pub fn encode_voxel<T: Real>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    prefix: &str,
    grid: &VoxelGrid,
    cfg: &EncoderConfig,
) -> Result<Var> {
    let h = backbone(g, store, prefix, grid, cfg)?;
    apply_linear(g, store, &pname(prefix, Head::Embed.key()), h)
}
