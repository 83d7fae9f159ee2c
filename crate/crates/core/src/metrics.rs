//! Segmentation, robustness and expert-loading statistics.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, contract_err, Error, Result};
use crate::geometry::PointCloud;
use crate::nn::{Real, Tensor};

#[allow(unused_imports)] // inherent float methods shadow these under std
use num_traits::Float;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub class: usize,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    /// Percent; `None` when the class never occurs in labels or predictions.
    pub iou: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub classes: Vec<ClassScore>,
    /// Percent, over classes with a defined IoU.
    pub miou: f64,
}

/// `IoU = TP / (TP + FP + FN)` in percent.
pub fn iou(tp: u64, fp: u64, fn_: u64) -> Option<f64> {
    let denom = tp + fp + fn_;
    (denom > 0).then(|| 100.0 * tp as f64 / denom as f64)
}

/// Per-class IoU and mIoU; points labelled −1 are skipped.
pub fn compute_miou(predictions: &[i32], labels: &[i32], num_classes: usize) -> Result<MetricReport> {
    if predictions.len() != labels.len() {
        return Err(contract_err!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        ));
    }
    let mut tp = vec![0u64; num_classes];
    let mut fp = vec![0u64; num_classes];
    let mut fn_ = vec![0u64; num_classes];
    let mut counted = 0usize;
    for (&p, &l) in predictions.iter().zip(labels) {
        if l < 0 {
            continue;
        }
        let (p, l) = (p as usize, l as usize);
        if l >= num_classes || p >= num_classes {
            return Err(contract_err!("class id outside [0, {})", num_classes));
        }
        counted += 1;
        if p == l {
            tp[l] += 1;
        } else {
            fp[p] += 1;
            fn_[l] += 1;
        }
    }
    if counted == 0 {
        return Err(contract_err!("no labelled points to evaluate"));
    }
    let classes: Vec<ClassScore> = (0..num_classes)
        .map(|c| ClassScore {
            class: c,
            tp: tp[c],
            fp: fp[c],
            fn_: fn_[c],
            iou: iou(tp[c], fp[c], fn_[c]),
        })
        .collect();
    let defined: Vec<f64> = classes.iter().filter_map(|c| c.iou).collect();
    let miou = defined.iter().sum::<f64>() / defined.len() as f64;
    Ok(MetricReport { classes, miou })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorruptionScore {
    pub corruption: String,
    /// Percent.
    pub ce: f64,
    /// Percent.
    pub rr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub per_corruption: Vec<CorruptionScore>,
    pub mce: f64,
    pub mrr: f64,
}

/// Corruption error and resilience rate from mIoUs in percent:
/// `CE = Σ(100 − IoUᵢ) / Σ(100 − IoUᵢ_base)`, `RR = Σ IoUᵢ / (3·IoU_clean)`,
/// then means over corruption types.
pub fn compute_mce_mrr(
    model: &[(String, [f64; 3])],
    baseline: &[(String, [f64; 3])],
    clean: f64,
) -> Result<RobustnessReport> {
    if !(clean > 0.0) {
        return Err(contract_err!("clean IoU must be positive"));
    }
    if model.is_empty() {
        return Err(contract_err!("no corruptions given"));
    }
    let mut per = Vec::with_capacity(model.len());
    for (name, ious) in model {
        let base = baseline
            .iter()
            .find(|(b, _)| b == name)
            .ok_or_else(|| contract_err!("baseline lacks corruption `{}`", name))?;
        let err: f64 = ious.iter().map(|i| 100.0 - i).sum();
        let base_err: f64 = base.1.iter().map(|i| 100.0 - i).sum();
        if base_err == 0.0 {
            return Err(contract_err!("CE undefined for `{}`: baseline has no error", name));
        }
        per.push(CorruptionScore {
            corruption: name.clone(),
            ce: 100.0 * err / base_err,
            rr: 100.0 * ious.iter().sum::<f64>() / (3.0 * clean),
        });
    }
    let n = per.len() as f64;
    let mce = per.iter().map(|c| c.ce).sum::<f64>() / n;
    let mrr = per.iter().map(|c| c.rr).sum::<f64>() / n;
    Ok(RobustnessReport {
        per_corruption: per,
        mce,
        mrr,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RouteAxis {
    Beam,
    Distance,
    Class,
}

impl RouteAxis {
    pub fn name(self) -> &'static str {
        match self {
            Self::Beam => "beam",
            Self::Distance => "distance",
            Self::Class => "class",
        }
    }
}

impl FromStr for RouteAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "beam" => Ok(Self::Beam),
            "distance" | "distance-bin" => Ok(Self::Distance),
            "class" => Ok(Self::Class),
            other => Err(config_err!("unknown route axis `{}`", other)),
        }
    }
}

pub const DEFAULT_DISTANCE_EDGES: [f64; 5] = [0.0, 10.0, 20.0, 30.0, 40.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RouteRow {
    pub bucket: String,
    pub count: u64,
    /// Mean `(range, voxel, point)` gate weight.
    pub load: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RouteTable {
    pub axis: RouteAxis,
    /// Non-empty buckets in axis order.
    pub rows: Vec<RouteRow>,
}

impl RouteTable {
    /// Count-weighted mean over buckets.
    pub fn global_load(&self) -> [f64; 3] {
        let total: u64 = self.rows.iter().map(|r| r.count).sum();
        let mut out = [0.0; 3];
        for r in &self.rows {
            for k in 0..3 {
                out[k] += r.load[k] * r.count as f64;
            }
        }
        out.map(|v| if total > 0 { v / total as f64 } else { 0.0 })
    }
}

/// Whole-cloud mean gate weight per expert.
pub fn global_load(gates: &[[f64; 3]]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for g in gates {
        for k in 0..3 {
            out[k] += g[k];
        }
    }
    out.map(|v| v / gates.len().max(1) as f64)
}

fn distance_bucket(d: f64, edges: &[f64]) -> usize {
    edges.iter().rposition(|&e| d >= e).unwrap_or(0)
}

fn distance_label(b: usize, edges: &[f64]) -> String {
    match edges.get(b + 1) {
        Some(hi) => format!("{}-{}", edges[b], hi),
        None => format!("{}-max", edges[b]),
    }
}

/// Mean gate load per bucket of `axis`. Distance buckets are
/// `[edges[i], edges[i+1])`, the last one open-ended.
pub fn route_stats(
    gates: &[[f64; 3]],
    cloud: &PointCloud,
    axis: RouteAxis,
    distance_edges: &[f64],
) -> Result<RouteTable> {
    if gates.len() != cloud.len() {
        return Err(contract_err!("{} gate rows for {} points", gates.len(), cloud.len()));
    }
    if axis == RouteAxis::Distance && (distance_edges.is_empty() || distance_edges.windows(2).any(|w| !(w[0] < w[1]))) {
        return Err(config_err!("distance edges must be strictly increasing"));
    }
    let key = |i: usize| -> i64 {
        let p = &cloud.points[i];
        match axis {
            RouteAxis::Beam => i64::from(p.beam),
            RouteAxis::Distance => distance_bucket(p.depth(), distance_edges) as i64,
            RouteAxis::Class => i64::from(p.label),
        }
    };
    let mut buckets: alloc::collections::BTreeMap<i64, (u64, [f64; 3])> = Default::default();
    for (i, g) in gates.iter().enumerate() {
        let e = buckets.entry(key(i)).or_insert((0, [0.0; 3]));
        e.0 += 1;
        for k in 0..3 {
            e.1[k] += g[k];
        }
    }
    let rows = buckets
        .into_iter()
        .map(|(b, (count, sum))| RouteRow {
            bucket: match axis {
                RouteAxis::Distance => distance_label(b as usize, distance_edges),
                _ => b.to_string(),
            },
            count,
            load: sum.map(|s| s / count as f64),
        })
        .collect();
    Ok(RouteTable { axis, rows })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CosineMap {
    /// `cos(f_q, f_i)` per point.
    pub similarity: Vec<f64>,
    /// Rows whose similarity was reported as 0 because a norm vanished.
    pub zero_norm: Vec<bool>,
}

pub fn cosine_map<T: Real>(features: &Tensor<T>, query: usize) -> Result<CosineMap> {
    let n = features.rows();
    if query >= n {
        return Err(contract_err!("query {} out of {} rows", query, n));
    }
    let norm = |r: usize| {
        features
            .row(r)
            .iter()
            .map(|x| x.as_f64() * x.as_f64())
            .sum::<f64>()
            .sqrt()
    };
    let qn = norm(query);
    let q = features.row(query);
    let mut similarity = Vec::with_capacity(n);
    let mut zero_norm = Vec::with_capacity(n);
    for r in 0..n {
        let rn = norm(r);
        if qn == 0.0 || rn == 0.0 {
            similarity.push(0.0);
            zero_norm.push(true);
            continue;
        }
        let dot: f64 = features
            .row(r)
            .iter()
            .zip(q)
            .map(|(a, b)| a.as_f64() * b.as_f64())
            .sum();
        similarity.push((dot / (qn * rn)).clamp(-1.0, 1.0));
        zero_norm.push(false);
    }
    Ok(CosineMap { similarity, zero_norm })
}
