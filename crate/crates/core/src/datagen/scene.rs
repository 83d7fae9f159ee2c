use alloc::vec::Vec;

#[allow(unused_imports)] // inherent float methods shadow these under std
use num_traits::Float;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::class;
use crate::error::{config_err, Result};
use crate::rng;

const HIT_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrimitiveKind {
    GroundPlane,
    Box,
    VerticalCylinder,
    Wall,
}

/// An analytic scene element.
///
/// * boxes and walls: `center` is the box centre, `extents` the full size
///   along the local axes, `yaw` the rotation about z;
/// * cylinders: `center` is the axis midpoint, `extents = [radius, radius, height]`;
/// * the ground plane is `z = center[2]` (its `extents` only need to be positive).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub kind: PrimitiveKind,
    pub center: [f64; 3],
    pub extents: [f64; 3],
    #[serde(default)]
    pub yaw: f64,
    pub class_id: i32,
}

fn to_local(p: [f64; 3], center: [f64; 3], yaw: f64) -> [f64; 3] {
    let (s, c) = yaw.sin_cos();
    let d = [p[0] - center[0], p[1] - center[1], p[2] - center[2]];
    [c * d[0] + s * d[1], -s * d[0] + c * d[1], d[2]]
}

fn dir_to_local(d: [f64; 3], yaw: f64) -> [f64; 3] {
    let (s, c) = yaw.sin_cos();
    [c * d[0] + s * d[1], -s * d[0] + c * d[1], d[2]]
}

impl Primitive {
    /// Distance along the unit direction `dir` from `origin` to the first
    /// surface crossing, if any.
    pub fn intersect(&self, origin: [f64; 3], dir: [f64; 3]) -> Option<f64> {
        match self.kind {
            PrimitiveKind::GroundPlane => {
                if dir[2].abs() < 1e-12 {
                    return None;
                }
                let t = (self.center[2] - origin[2]) / dir[2];
                (t > HIT_EPS).then_some(t)
            }
            PrimitiveKind::Box | PrimitiveKind::Wall => {
                let o = to_local(origin, self.center, self.yaw);
                let d = dir_to_local(dir, self.yaw);
                let mut tmin = f64::NEG_INFINITY;
                let mut tmax = f64::INFINITY;
                for k in 0..3 {
                    let half = 0.5 * self.extents[k];
                    if d[k].abs() < 1e-15 {
                        if o[k].abs() > half {
                            return None;
                        }
                        continue;
                    }
                    let t1 = (-half - o[k]) / d[k];
                    let t2 = (half - o[k]) / d[k];
                    tmin = tmin.max(t1.min(t2));
                    tmax = tmax.min(t1.max(t2));
                }
                if tmax < tmin {
                    return None;
                }
                if tmin > HIT_EPS {
                    Some(tmin)
                } else if tmax > HIT_EPS {
                    Some(tmax)
                } else {
                    None
                }
            }
            PrimitiveKind::VerticalCylinder => {
                let o = to_local(origin, self.center, 0.0);
                let r = self.extents[0];
                let half_h = 0.5 * self.extents[2];
                let mut best = f64::INFINITY;
                let a = dir[0] * dir[0] + dir[1] * dir[1];
                if a > 1e-15 {
                    let b = 2.0 * (o[0] * dir[0] + o[1] * dir[1]);
                    let c = o[0] * o[0] + o[1] * o[1] - r * r;
                    let disc = b * b - 4.0 * a * c;
                    if disc >= 0.0 {
                        let sq = disc.sqrt();
                        for t in [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)] {
                            let z = o[2] + t * dir[2];
                            if t > HIT_EPS && z.abs() <= half_h && t < best {
                                best = t;
                            }
                        }
                    }
                }
                if dir[2].abs() > 1e-15 {
                    for cap in [-half_h, half_h] {
                        let t = (cap - o[2]) / dir[2];
                        let x = o[0] + t * dir[0];
                        let y = o[1] + t * dir[1];
                        if t > HIT_EPS && x * x + y * y <= r * r && t < best {
                            best = t;
                        }
                    }
                }
                best.is_finite().then_some(best)
            }
        }
    }

    /// Unsigned distance from `p` to the primitive surface.
    pub fn surface_distance(&self, p: [f64; 3]) -> f64 {
        self.signed_distance(p).abs()
    }

    /// Signed distance (negative inside).
    pub fn signed_distance(&self, p: [f64; 3]) -> f64 {
        fn sdf(q: &[f64]) -> f64 {
            let outside = q.iter().map(|v| v.max(0.0).powi(2)).sum::<f64>().sqrt();
            let inside = q.iter().copied().fold(f64::NEG_INFINITY, f64::max).min(0.0);
            outside + inside
        }
        match self.kind {
            PrimitiveKind::GroundPlane => p[2] - self.center[2],
            PrimitiveKind::Box | PrimitiveKind::Wall => {
                let l = to_local(p, self.center, self.yaw);
                let q: Vec<f64> = (0..3).map(|k| l[k].abs() - 0.5 * self.extents[k]).collect();
                sdf(&q)
            }
            PrimitiveKind::VerticalCylinder => {
                let l = to_local(p, self.center, 0.0);
                let radial = (l[0] * l[0] + l[1] * l[1]).sqrt() - self.extents[0];
                let axial = l[2].abs() - 0.5 * self.extents[2];
                sdf(&[radial, axial])
            }
        }
    }
}

/// A set of primitives with exactly one ground plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub primitives: Vec<Primitive>,
    #[serde(default)]
    pub seed: u64,
}

impl Scene {
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        let grounds = self
            .primitives
            .iter()
            .filter(|p| p.kind == PrimitiveKind::GroundPlane)
            .count();
        if grounds != 1 {
            return Err(config_err!("scene needs exactly one ground plane, found {}", grounds));
        }
        for (i, p) in self.primitives.iter().enumerate() {
            if p.class_id < 0 || p.class_id as usize >= num_classes {
                return Err(config_err!(
                    "primitive {} has class {} outside [0,{})",
                    i,
                    p.class_id,
                    num_classes
                ));
            }
            if p.extents.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
                return Err(config_err!("primitive {} has non-positive extents", i));
            }
        }
        Ok(())
    }

    /// Nearest surface hit along a ray: `(distance, class)`.
    pub fn cast(&self, origin: [f64; 3], dir: [f64; 3], max_range: f64) -> Option<(f64, i32)> {
        let mut best: Option<(f64, i32)> = None;
        for p in &self.primitives {
            if let Some(t) = p.intersect(origin, dir) {
                if t <= max_range && best.map_or(true, |(bt, _)| t < bt) {
                    best = Some((t, p.class_id));
                }
            }
        }
        best
    }

    /// Distance from `p` to the closest primitive surface.
    pub fn nearest_surface_distance(&self, p: [f64; 3]) -> f64 {
        self.primitives
            .iter()
            .map(|q| q.surface_distance(p))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Counts and placement bounds for random scenes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub ground_z: f64,
    pub boxes: usize,
    pub pedestrians: usize,
    pub poles: usize,
    pub buildings: usize,
    pub barriers: usize,
    /// `[min, max]` for object centres along x.
    pub x_bounds: [f64; 2],
    pub y_bounds: [f64; 2],
    /// Minimum distance between the sensor origin and any object surface.
    pub clearance: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            ground_z: -1.8,
            boxes: 8,
            pedestrians: 8,
            poles: 8,
            buildings: 3,
            barriers: 5,
            x_bounds: [-30.0, 30.0],
            y_bounds: [-30.0, 30.0],
            clearance: 1.5,
        }
    }
}

impl SceneConfig {
    /// An empty street: just the ground plane.
    pub fn empty() -> Self {
        Self {
            boxes: 0,
            pedestrians: 0,
            poles: 0,
            buildings: 0,
            barriers: 0,
            ..Self::default()
        }
    }
}

/// Places the configured objects uniformly inside the bounds. Deterministic
/// for a fixed `(config, seed)`; no object may come within `clearance` of
/// the sensor origin.
pub fn build_scene(config: &SceneConfig, seed: u64) -> Result<Scene> {
    let [x0, x1] = config.x_bounds;
    let [y0, y1] = config.y_bounds;
    if !(x0 <= x1) || !(y0 <= y1) {
        return Err(config_err!("placement bounds need min <= max"));
    }
    if !(config.clearance >= 0.0) {
        return Err(config_err!("clearance must be non-negative"));
    }
    let mut rng = rng::for_purpose(seed, "scene");
    let gz = config.ground_z;
    let mut primitives = alloc::vec![Primitive {
        kind: PrimitiveKind::GroundPlane,
        center: [0.0, 0.0, gz],
        extents: [1.0, 1.0, 1.0],
        yaw: 0.0,
        class_id: class::GROUND,
    }];

    let plan = [
        (config.boxes, class::VEHICLE),
        (config.pedestrians, class::PEDESTRIAN),
        (config.poles, class::POLE),
        (config.buildings, class::BUILDING),
        (config.barriers, class::BARRIER),
    ];
    for (count, cls) in plan {
        for _ in 0..count {
            let mut placed = None;
            for _attempt in 0..256 {
                let cx = if x1 > x0 { rng.gen_range(x0..=x1) } else { x0 };
                let cy = if y1 > y0 { rng.gen_range(y0..=y1) } else { y0 };
                let yaw = rng.gen_range(-core::f64::consts::PI..core::f64::consts::PI);
                let (kind, ext) = match cls {
                    class::VEHICLE => (
                        PrimitiveKind::Box,
                        [
                            rng.gen_range(3.8..5.0),
                            rng.gen_range(1.6..2.0),
                            rng.gen_range(1.4..1.8),
                        ],
                    ),
                    class::PEDESTRIAN => {
                        let r = rng.gen_range(0.25..0.35);
                        (PrimitiveKind::VerticalCylinder, [r, r, rng.gen_range(1.5..1.9)])
                    }
                    class::POLE => {
                        let r = rng.gen_range(0.12..0.2);
                        (PrimitiveKind::VerticalCylinder, [r, r, rng.gen_range(4.0..7.0)])
                    }
                    class::BUILDING => (
                        PrimitiveKind::Wall,
                        [
                            rng.gen_range(8.0..16.0),
                            rng.gen_range(0.6..1.0),
                            rng.gen_range(4.0..8.0),
                        ],
                    ),
                    _ => (
                        PrimitiveKind::Wall,
                        [
                            rng.gen_range(3.0..6.0),
                            rng.gen_range(0.2..0.4),
                            rng.gen_range(0.8..1.2),
                        ],
                    ),
                };
                let prim = Primitive {
                    kind,
                    center: [cx, cy, gz + 0.5 * ext[2]],
                    extents: ext,
                    yaw: if kind == PrimitiveKind::VerticalCylinder {
                        0.0
                    } else {
                        yaw
                    },
                    class_id: cls,
                };
                if prim.signed_distance([0.0, 0.0, 0.0]) > config.clearance {
                    placed = Some(prim);
                    break;
                }
            }
            match placed {
                Some(p) => primitives.push(p),
                None => return Err(config_err!("could not place an object clear of the sensor")),
            }
        }
    }
    Ok(Scene { primitives, seed })
}
