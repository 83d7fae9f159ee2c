//! Miniature range, voxel and point backbones with linear heads, and the
//! frozen image-side teacher.

use alloc::format;
use alloc::string::String;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datagen::SensorModel;
use crate::error::{config_err, Error, Result};
use crate::geometry::{project_to_range, voxelize, PointCloud, RangeImage, VoxelGrid};
use crate::nn::{init_bias, init_xavier, Graph, ParameterStore, Real, Var};

mod point;
mod range;
mod teacher;
mod voxel;

pub use point::{encode_point, group_points, PointGroups};
pub use range::{encode_range, range_input};
pub use teacher::{init_teacher, positional_code, teacher_features, PositionCode, TeacherConfig};
pub use voxel::{encode_voxel, voxel_input};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Range,
    Voxel,
    Point,
}

impl Representation {
    pub const ALL: [Self; 3] = [Self::Range, Self::Voxel, Self::Point];

    pub fn name(self) -> &'static str {
        match self {
            Self::Range => "range",
            Self::Voxel => "voxel",
            Self::Point => "point",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl core::fmt::Display for Representation {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Representation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "range" => Ok(Self::Range),
            "voxel" => Ok(Self::Voxel),
            "point" => Ok(Self::Point),
            other => Err(config_err!("unknown representation `{}`", other)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    /// Embedding width D.
    pub dim: usize,
    /// Backbone channel width.
    pub hidden: usize,
    pub num_classes: usize,
    pub voxel_size: [f64; 3],
    pub centroids: usize,
    pub neighbors: usize,
    /// Multiplier applied to coordinates and depths before they enter a network.
    pub input_scale: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            hidden: 32,
            num_classes: crate::NUM_CLASSES,
            voxel_size: [0.4, 0.4, 0.4],
            centroids: 128,
            neighbors: 16,
            input_scale: 0.1,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.hidden == 0 || self.num_classes == 0 {
            return Err(config_err!("dim, hidden and num_classes must be positive"));
        }
        if self.centroids == 0 || self.neighbors == 0 {
            return Err(config_err!("centroids and neighbors must be positive"));
        }
        if !(self.input_scale > 0.0) {
            return Err(config_err!("input_scale must be positive"));
        }
        Ok(())
    }

    /// Backbone feature width of a representation.
    pub fn backbone_width(&self, repr: Representation) -> usize {
        match repr {
            Representation::Point => 2 * self.hidden,
            _ => self.hidden,
        }
    }
}

/// Every derived structure one cloud needs, computed once.
#[derive(Clone, Debug)]
pub struct Views {
    pub range: RangeImage,
    pub voxels: VoxelGrid,
    pub groups: PointGroups,
}

impl Views {
    pub fn build(cloud: &PointCloud, sensor: &SensorModel, cfg: &EncoderConfig) -> Result<Self> {
        if cloud.is_empty() {
            return Err(crate::error::contract_err!("cannot encode an empty cloud"));
        }
        Ok(Self {
            range: project_to_range(cloud, sensor),
            voxels: voxelize(cloud, cfg.voxel_size)?,
            groups: group_points(cloud, cfg.centroids, cfg.neighbors),
        })
    }
}

/// Which linear head to apply to backbone features.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Head {
    /// Width D, for the contrastive stages.
    Embed,
    /// Width C, for segmentation.
    Logits,
}

impl Head {
    fn key(self) -> &'static str {
        match self {
            Self::Embed => "head",
            Self::Logits => "cls",
        }
    }
}

/// A backbone of one representation whose parameters live under `prefix`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Encoder {
    pub repr: Representation,
    pub prefix: String,
}

pub(crate) fn pname(prefix: &str, part: &str) -> String {
    format!("{prefix}.{part}")
}

pub fn insert_linear<T: Real>(
    store: &mut ParameterStore<T>,
    rng: &mut impl rand::RngCore,
    name: &str,
    fan_in: usize,
    fan_out: usize,
) -> Result<()> {
    store.insert(format!("{name}.w"), init_xavier(rng, fan_in, fan_out, fan_in, fan_out))?;
    store.insert(format!("{name}.b"), init_bias(fan_out))
}

pub fn apply_linear<T: Real>(g: &mut Graph<T>, store: &ParameterStore<T>, name: &str, x: Var) -> Result<Var> {
    let w = g.param(store, &format!("{name}.w"))?;
    let b = g.param(store, &format!("{name}.b"))?;
    g.linear(x, w, b)
}

impl Encoder {
    pub fn new(repr: Representation) -> Self {
        Self {
            repr,
            prefix: repr.name().into(),
        }
    }

    pub fn with_prefix(repr: Representation, prefix: impl Into<String>) -> Self {
        Self {
            repr,
            prefix: prefix.into(),
        }
    }

    /// Adds backbone and both heads under `prefix`.
    pub fn init<T: Real>(
        &self,
        store: &mut ParameterStore<T>,
        cfg: &EncoderConfig,
        rng: &mut impl rand::RngCore,
    ) -> Result<()> {
        cfg.validate()?;
        let p = &self.prefix;
        let h = cfg.hidden;
        match self.repr {
            Representation::Range => {
                let c = range::RANGE_INPUT;
                store.insert(pname(p, "conv1.w"), init_xavier(rng, 9 * c, h, 9 * c, 9 * h))?;
                store.insert(pname(p, "conv1.b"), init_bias(h))?;
                store.insert(pname(p, "conv2.w"), init_xavier(rng, 9 * h, h, 9 * h, 9 * h))?;
                store.insert(pname(p, "conv2.b"), init_bias(h))?;
            }
            Representation::Voxel => {
                insert_linear(store, rng, &pname(p, "in"), voxel::VOXEL_INPUT, h)?;
                insert_linear(store, rng, &pname(p, "mid"), h, h)?;
            }
            Representation::Point => {
                insert_linear(store, rng, &pname(p, "mlp"), point::POINT_INPUT, h)?;
            }
        }
        let width = cfg.backbone_width(self.repr);
        insert_linear(store, rng, &pname(p, Head::Embed.key()), width, cfg.dim)?;
        insert_linear(store, rng, &pname(p, Head::Logits.key()), width, cfg.num_classes)
    }

    /// Backbone features of the representation's own container: cells,
    /// voxels or points.
    pub fn backbone<T: Real>(
        &self,
        g: &mut Graph<T>,
        store: &ParameterStore<T>,
        cloud: &PointCloud,
        views: &Views,
        cfg: &EncoderConfig,
    ) -> Result<Var> {
        match self.repr {
            Representation::Range => range::backbone(g, store, &self.prefix, cloud, &views.range, cfg),
            Representation::Voxel => voxel::backbone(g, store, &self.prefix, &views.voxels, cfg),
            Representation::Point => point::backbone(g, store, &self.prefix, cloud, &views.groups, cfg),
        }
    }

    /// Container rows gathered back to the points.
    pub fn to_points<T: Real>(&self, g: &mut Graph<T>, container: Var, views: &Views) -> Result<Var> {
        match self.repr {
            Representation::Range => crate::geometry::align_to_points(g, container, &views.range),
            Representation::Voxel => crate::geometry::align_to_points(g, container, &views.voxels),
            Representation::Point => Ok(container),
        }
    }

    pub fn head<T: Real>(&self, g: &mut Graph<T>, store: &ParameterStore<T>, head: Head, x: Var) -> Result<Var> {
        apply_linear(g, store, &pname(&self.prefix, head.key()), x)
    }

    /// Per-point head output (`N×D` or `N×C`).
    pub fn point_head<T: Real>(
        &self,
        g: &mut Graph<T>,
        store: &ParameterStore<T>,
        cloud: &PointCloud,
        views: &Views,
        cfg: &EncoderConfig,
        head: Head,
    ) -> Result<Var> {
        let b = self.backbone(g, store, cloud, views, cfg)?;
        let out = self.head(g, store, head, b)?;
        self.to_points(g, out, views)
    }

    /// Head output per container row.
    pub fn container_head<T: Real>(
        &self,
        g: &mut Graph<T>,
        store: &ParameterStore<T>,
        cloud: &PointCloud,
        views: &Views,
        cfg: &EncoderConfig,
        head: Head,
    ) -> Result<Var> {
        let b = self.backbone(g, store, cloud, views, cfg)?;
        self.head(g, store, head, b)
    }
}
