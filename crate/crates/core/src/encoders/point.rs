use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use super::{apply_linear, pname, EncoderConfig, Head};
use crate::error::Result;
use crate::geometry::{Point, PointCloud};
use crate::nn::{Graph, ParameterStore, Real, Tensor, Var};

pub(crate) const POINT_INPUT: usize = 4;

/// Farthest-point centroids, their k-nearest-neighbour groups and the
/// nearest centroid of every point.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointGroups {
    pub centroids: Vec<u32>,
    pub members: Vec<Vec<u32>>,
    /// Index into `centroids` for every point.
    pub nearest: Vec<u32>,
}

/// Orders points by content so sampling does not depend on storage order.
fn content_cmp(a: &Point, b: &Point) -> Ordering {
    a.xyz[0]
        .total_cmp(&b.xyz[0])
        .then(a.xyz[1].total_cmp(&b.xyz[1]))
        .then(a.xyz[2].total_cmp(&b.xyz[2]))
        .then(a.intensity.total_cmp(&b.intensity))
        .then(a.beam.cmp(&b.beam))
        .then(a.label.cmp(&b.label))
}

fn dist2(a: &Point, b: &Point) -> f64 {
    (0..3).map(|k| (a.xyz[k] - b.xyz[k]) * (a.xyz[k] - b.xyz[k])).sum()
}

/// Farthest-point sampling from the content-smallest point (see
/// `content_cmp`), ties broken the same way, then kNN groups of size `k`.
/// Both counts are clipped to the cloud size.
pub fn group_points(cloud: &PointCloud, centroid_count: usize, k: usize) -> PointGroups {
    let pts = &cloud.points;
    let n = pts.len();
    if n == 0 {
        return PointGroups::default();
    }
    let m = centroid_count.clamp(1, n);
    let k = k.clamp(1, n);
    let before = |i: usize, j: usize| content_cmp(&pts[i], &pts[j]).then(i.cmp(&j)) == Ordering::Less;

    let mut first = 0;
    for i in 1..n {
        if before(i, first) {
            first = i;
        }
    }
    let mut centroids = vec![first as u32];
    let mut min_d = vec![f64::INFINITY; n];
    let mut last = first;
    while centroids.len() < m {
        let mut next: Option<usize> = None;
        for i in 0..n {
            let d = dist2(&pts[i], &pts[last]);
            if d < min_d[i] {
                min_d[i] = d;
            }
            next = match next {
                None => Some(i),
                Some(j) => match min_d[i].total_cmp(&min_d[j]) {
                    Ordering::Greater => Some(i),
                    Ordering::Equal if before(i, j) => Some(i),
                    _ => Some(j),
                },
            };
        }
        last = next.expect("non-empty cloud");
        centroids.push(last as u32);
    }

    let by_distance = |c: usize| {
        move |&a: &u32, &b: &u32| {
            let (a, b) = (a as usize, b as usize);
            dist2(&pts[a], &pts[c])
                .total_cmp(&dist2(&pts[b], &pts[c]))
                .then(content_cmp(&pts[a], &pts[b]))
                .then(a.cmp(&b))
        }
    };
    let mut members = Vec::with_capacity(m);
    let mut all: Vec<u32> = (0..n as u32).collect();
    for &c in &centroids {
        let cmp = by_distance(c as usize);
        if k < n {
            all.select_nth_unstable_by(k - 1, cmp);
        }
        let mut group = all[..k].to_vec();
        group.sort_unstable();
        members.push(group);
    }

    let nearest = pts
        .iter()
        .map(|p| {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (j, &c) in centroids.iter().enumerate() {
                let d = dist2(p, &pts[c as usize]);
                if d < best_d {
                    best = j;
                    best_d = d;
                }
            }
            best as u32
        })
        .collect();
    PointGroups {
        centroids,
        members,
        nearest,
    }
}

pub(crate) fn point_input<T: Real>(cloud: &PointCloud, cfg: &EncoderConfig) -> Tensor<T> {
    let s = cfg.input_scale;
    let data: Vec<T> = cloud
        .points
        .iter()
        .flat_map(|p| [p.xyz[0] * s, p.xyz[1] * s, p.xyz[2] * s, p.intensity])
        .map(T::of)
        .collect();
    Tensor::matrix(cloud.len(), POINT_INPUT, data).expect("points x channels")
}

/// `N × 2·hidden`: each point's own MLP feature next to the max-pooled
/// feature of its nearest centroid's group.
pub(crate) fn backbone<T: Real>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    prefix: &str,
    cloud: &PointCloud,
    groups: &PointGroups,
    cfg: &EncoderConfig,
) -> Result<Var> {
    if cloud.is_empty() || groups.nearest.len() != cloud.len() {
        return Err(crate::error::contract_err!("point groups do not match the cloud"));
    }
    let x = g.constant(point_input(cloud, cfg))?;
    let h = apply_linear(g, store, &pname(prefix, "mlp"), x)?;
    let h = g.relu(h)?;
    let pooled = g.segment_max(h, &groups.members)?;
    let near = g.gather_rows(pooled, groups.nearest.clone())?;
    g.concat_cols(&[h, near])
}

/// Per-point embeddings (`N × D`).
pub fn encode_point<T: Real>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    prefix: &str,
    cloud: &PointCloud,
    groups: &PointGroups,
    cfg: &EncoderConfig,
) -> Result<Var> {
    let h = backbone(g, store, prefix, cloud, groups, cfg)?;
    apply_linear(g, store, &pname(prefix, Head::Embed.key()), h)
}
