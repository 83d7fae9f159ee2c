use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::datagen::{ClassImage, SuperpixelMap};
use crate::error::{shape_err, Result};
use crate::nn::{init_xavier, ParameterStore, Real, Tensor};
use crate::rng;

#[allow(unused_imports)] // inherent float methods shadow these under std
use num_traits::Float;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TeacherConfig {
    /// Width of the class embedding and of the positional code.
    pub width: usize,
    /// Amplitude of the positional code relative to the class embedding.
    pub position_scale: f64,
    pub code: PositionCode,
    /// Pixel depth mapped to 1 by the depth coordinate; farther pixels and
    /// pixels without a hit are clamped there.
    pub depth_scale: f64,
    pub seed: u64,
}

/// The two coordinates a pixel's positional code is built from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PositionCode {
    /// Column and row.
    Pixel,
    /// Row and hit depth; both survive rotations about the vertical axis.
    #[default]
    RowDepth,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self {
            width: 16,
            position_scale: 1.5,
            code: PositionCode::RowDepth,
            depth_scale: 50.0,
            seed: 0x7ea_c4e5,
        }
    }
}

/// Frozen `teacher.emb` (`C × width`) and `teacher.proj` (`width × D`).
pub fn init_teacher<T: Real>(cfg: &TeacherConfig, num_classes: usize, dim: usize) -> Result<ParameterStore<T>> {
    if cfg.width == 0 || cfg.width % 4 != 0 {
        return Err(crate::error::config_err!(
            "teacher width must be a positive multiple of 4"
        ));
    }
    if !(cfg.depth_scale > 0.0) {
        return Err(crate::error::config_err!("teacher depth_scale must be positive"));
    }
    let mut r = rng::for_purpose(cfg.seed, "teacher");
    let mut store = ParameterStore::new();
    store.insert("teacher.emb", init_xavier(&mut r, num_classes, cfg.width, 1, 1))?;
    store.insert("teacher.proj", init_xavier(&mut r, cfg.width, dim, cfg.width, dim))?;
    store.freeze_all();
    Ok(store)
}

/// Sinusoidal code of two coordinates in `[0, 1]`: `sin`/`cos` of `π·2ᵏ·a`
/// and of `π·2ᵏ·b` for `k < code_width/4`.
pub fn positional_code(fu: f64, fv: f64, code_width: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(code_width);
    for k in 0..code_width / 4 {
        let w = core::f64::consts::PI * f64::from(1u32 << k);
        out.extend([(w * fu).sin(), (w * fu).cos(), (w * fv).sin(), (w * fv).cos()]);
    }
    out
}

/// Superpixel embeddings `Q` (`S × D`): the mean over each superpixel of
/// `(one_hot(class)·emb + position_scale·code)·proj`. Pixels without a hit
/// contribute only the positional term.
pub fn teacher_features<T: Real>(
    image: &ClassImage,
    frozen: &ParameterStore<T>,
    superpixels: &SuperpixelMap,
    cfg: &TeacherConfig,
) -> Result<Tensor<T>> {
    let emb = frozen.tensor("teacher.emb")?;
    let proj = frozen.tensor("teacher.proj")?;
    let (e, d) = (proj.rows(), proj.cols());
    if emb.cols() != e || e != cfg.width {
        return Err(shape_err!("teacher parameters do not match width {}", cfg.width));
    }
    if superpixels.width != image.width || superpixels.height != image.height {
        return Err(shape_err!("superpixel map and class image sizes differ"));
    }
    let s = superpixels.count();
    let mut sums = vec![0.0f64; s * e];
    let mut counts = vec![0u32; s];
    for v in 0..image.height {
        for u in 0..image.width {
            let sp = superpixels.id_at(u, v) as usize;
            counts[sp] += 1;
            let acc = &mut sums[sp * e..(sp + 1) * e];
            let class = image.class_at(u, v);
            if class >= 0 && (class as usize) < emb.rows() {
                for (a, x) in acc.iter_mut().zip(emb.row(class as usize)) {
                    *a += x.as_f64();
                }
            }
            let row = (v as f64 + 0.5) / image.height as f64;
            let (a, b) = match cfg.code {
                PositionCode::Pixel => ((u as f64 + 0.5) / image.width as f64, row),
                PositionCode::RowDepth => (row, (image.depth_at(u, v) / cfg.depth_scale).min(1.0)),
            };
            for (a, c) in acc.iter_mut().zip(positional_code(a, b, e)) {
                *a += cfg.position_scale * c;
            }
        }
    }
    let mut out = Vec::with_capacity(s * d);
    for sp in 0..s {
        let n = f64::from(counts[sp].max(1));
        let mean = &sums[sp * e..(sp + 1) * e];
        for j in 0..d {
            let mut acc = 0.0;
            for (i, &m) in mean.iter().enumerate() {
                acc += m / n * proj.get(i, j).as_f64();
            }
            out.push(T::of(acc));
        }
    }
    Tensor::matrix(s, d, out)
}
