use alloc::vec::Vec;

use super::{apply_linear, pname, EncoderConfig, Head};
use crate::error::Result;
use crate::geometry::{PointCloud, RangeImage};
use crate::nn::{Graph, ParameterStore, Real, Tensor, Var};

pub(crate) const RANGE_INPUT: usize = crate::geometry::RANGE_CHANNELS;

/// `cells × 5` network input; coordinates and depth are scaled by
/// `input_scale`, empty cells are zero.
pub fn range_input<T: Real>(cloud: &PointCloud, image: &RangeImage, cfg: &EncoderConfig) -> Tensor<T> {
    let s = cfg.input_scale;
    let data: Vec<T> = image
        .features(cloud)
        .iter()
        .flat_map(|f| [f[0] * s, f[1] * s, f[2] * s, f[3], f[4] * s])
        .map(T::of)
        .collect();
    Tensor::matrix(image.cells(), RANGE_INPUT, data).expect("cells x channels")
}

fn conv_relu<T: Real>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    name: &str,
    x: Var,
    image: &RangeImage,
) -> Result<Var> {
    let w = g.param(store, &alloc::format!("{name}.w"))?;
    let b = g.param(store, &alloc::format!("{name}.b"))?;
    let y = g.conv3x3(x, w, image.height, image.width)?;
    let y = g.add_row(y, b)?;
    g.relu(y)
}

pub(crate) fn backbone<T: Real>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    prefix: &str,
    cloud: &PointCloud,
    image: &RangeImage,
    cfg: &EncoderConfig,
) -> Result<Var> {
    let x = g.constant(range_input(cloud, image, cfg))?;
    let h = conv_relu(g, store, &pname(prefix, "conv1"), x, image)?;
    conv_relu(g, store, &pname(prefix, "conv2"), h, image)
}

/// Per-cell embeddings (`H_r·W_r × D`).
pub fn encode_range<T: Real>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    prefix: &str,
    cloud: &PointCloud,
    image: &RangeImage,
    cfg: &EncoderConfig,
) -> Result<Var> {
    let h = backbone(g, store, prefix, cloud, image, cfg)?;
    apply_linear(g, store, &pname(prefix, Head::Embed.key()), h)
}
