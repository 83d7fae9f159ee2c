//! Contrastive, cross-entropy and Lovász-softmax objectives and the
//! segmentation composite.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{contract_err, shape_err, Result};
use crate::nn::{Graph, Real, Tensor, Var};

#[allow(unused_imports)] // inherent float methods shadow these under std
use num_traits::Float;

/// Which keys enter the contrastive denominator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Denominator {
    /// Every `j`, positive included.
    #[default]
    All,
    /// Every `j ≠ i`.
    ExcludePositive,
}

pub const DEFAULT_TEMPERATURE: f64 = 0.07;

fn row_f64<T: Real>(t: &Tensor<T>, r: usize) -> impl Iterator<Item = f64> + '_ {
    t.row(r).iter().map(|x| x.as_f64())
}

/// `−(1/S)·Σᵢ log(exp(⟨kᵢ,qᵢ⟩/τ) / Σⱼ exp(⟨kᵢ,qⱼ⟩/τ))` on L2-normalised rows.
pub fn info_nce<T: Real>(g: &mut Graph<T>, k: Var, q: Var, tau: f64, mode: Denominator) -> Result<Var> {
    let (s, d) = g.shape(k);
    if g.shape(q) != (s, d) {
        return Err(shape_err!("info_nce: K {:?} vs Q {:?}", g.shape(k), g.shape(q)));
    }
    if s < 2 {
        return Err(contract_err!("info_nce needs at least 2 pairs, got {}", s));
    }
    if !(tau > 0.0) {
        return Err(contract_err!("temperature must be positive"));
    }
    let kn = g.normalize_rows(k)?;
    let qn = g.normalize_rows(q)?;
    let (kt, qt) = (g.value(kn), g.value(qn));
    let kv: Vec<f64> = kt.data().iter().map(|x| x.as_f64()).collect();
    let qv: Vec<f64> = qt.data().iter().map(|x| x.as_f64()).collect();

    let mut loss = 0.0;
    // dL/ds_ij, later pushed through s_ij = ⟨k_i, q_j⟩/τ
    let mut ds = vec![0.0f64; s * s];
    let mut scores = vec![0.0f64; s];
    for i in 0..s {
        let ki = &kv[i * d..(i + 1) * d];
        for (j, sc) in scores.iter_mut().enumerate() {
            let qj = &qv[j * d..(j + 1) * d];
            *sc = ki.iter().zip(qj).map(|(a, b)| a * b).sum::<f64>() / tau;
        }
        let included = |j: usize| mode == Denominator::All || j != i;
        let max = (0..s)
            .filter(|&j| included(j))
            .map(|j| scores[j])
            .fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = (0..s).filter(|&j| included(j)).map(|j| (scores[j] - max).exp()).sum();
        let lse = max + z.ln();
        loss += lse - scores[i];
        for j in 0..s {
            if included(j) {
                ds[i * s + j] += (scores[j] - lse).exp() / s as f64;
            }
        }
        ds[i * s + i] -= 1.0 / s as f64;
    }
    loss /= s as f64;

    let mut gk = vec![T::zero(); s * d];
    let mut gq = vec![T::zero(); s * d];
    for i in 0..s {
        for c in 0..d {
            let mut a = 0.0;
            let mut b = 0.0;
            for j in 0..s {
                a += ds[i * s + j] * qv[j * d + c];
                b += ds[j * s + i] * kv[j * d + c];
            }
            gk[i * d + c] = T::of(a / tau);
            gq[i * d + c] = T::of(b / tau);
        }
    }
    let local = vec![Tensor::matrix(s, d, gk)?, Tensor::matrix(s, d, gq)?];
    g.fused_scalar(vec![kn, qn], loss, local, "info_nce")
}

fn check_labels(labels: &[i32], rows: usize, classes: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(shape_err!("{} labels for {} rows", labels.len(), rows));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l < -1 || l >= classes as i32) {
        return Err(contract_err!("label {} outside [-1, {})", bad, classes));
    }
    Ok(())
}

/// Mean of `−log softmax(logits)[label]` over rows whose label is not −1.
pub fn cross_entropy<T: Real>(g: &mut Graph<T>, logits: Var, labels: &[i32]) -> Result<Var> {
    let (n, c) = g.shape(logits);
    check_labels(labels, n, c)?;
    let valid = labels.iter().filter(|&&l| l >= 0).count();
    if valid == 0 {
        return Err(contract_err!("cross_entropy: every label is ignored"));
    }
    let t = g.value(logits);
    let mut loss = 0.0;
    let mut grad = vec![T::zero(); n * c];
    let mut p = vec![0.0f64; c];
    for (r, &l) in labels.iter().enumerate() {
        if l < 0 {
            continue;
        }
        for (pj, x) in p.iter_mut().zip(row_f64(t, r)) {
            *pj = x;
        }
        let max = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = p.iter().map(|x| (x - max).exp()).sum();
        let lse = max + z.ln();
        loss += lse - p[l as usize];
        for j in 0..c {
            let prob = (p[j] - lse).exp();
            let target = if j == l as usize { 1.0 } else { 0.0 };
            grad[r * c + j] = T::of((prob - target) / valid as f64);
        }
    }
    let local = vec![Tensor::matrix(n, c, grad)?];
    g.fused_scalar(vec![logits], loss / valid as f64, local, "cross_entropy")
}

/// Gradient of the Lovász extension of the Jaccard loss at errors sorted
/// in decreasing order, given the foreground indicator in that order.
pub fn lovasz_grad(fg_sorted: &[bool]) -> Vec<f64> {
    let gts = fg_sorted.iter().filter(|&&f| f).count() as f64;
    let mut out = Vec::with_capacity(fg_sorted.len());
    let (mut cum_fg, mut cum_bg) = (0.0, 0.0);
    let mut prev = 0.0;
    for &f in fg_sorted {
        if f {
            cum_fg += 1.0;
        } else {
            cum_bg += 1.0;
        }
        let jaccard = 1.0 - (gts - cum_fg) / (gts + cum_bg);
        out.push(jaccard - prev);
        prev = jaccard;
    }
    out
}

/// Lovász-softmax over rows of class probabilities, averaged over the
/// classes present among the non-ignored labels. Returns 0 when no label
/// is present.
pub fn lovasz_softmax<T: Real>(g: &mut Graph<T>, probs: Var, labels: &[i32]) -> Result<Var> {
    let (n, c) = g.shape(probs);
    check_labels(labels, n, c)?;
    let t = g.value(probs);
    for r in 0..n {
        let s: f64 = row_f64(t, r).sum();
        if (s - 1.0).abs() > 1e-5 || row_f64(t, r).any(|p| p < 0.0) {
            return Err(contract_err!("row {} is not a probability vector", r));
        }
    }
    let rows: Vec<usize> = (0..n).filter(|&r| labels[r] >= 0).collect();
    let mut present = vec![false; c];
    for &r in &rows {
        present[labels[r] as usize] = true;
    }
    let n_present = present.iter().filter(|&&p| p).count();
    let mut grad = vec![0.0f64; n * c];
    let mut loss = 0.0;
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(rows.len());
    for class in (0..c).filter(|&k| present[k]) {
        order.clear();
        for &r in &rows {
            let p = t.get(r, class).as_f64();
            let err = if labels[r] == class as i32 { 1.0 - p } else { p };
            order.push((err, r));
        }
        order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let fg: Vec<bool> = order.iter().map(|&(_, r)| labels[r] == class as i32).collect();
        let jg = lovasz_grad(&fg);
        for (&(err, r), (&gi, &f)) in order.iter().zip(jg.iter().zip(&fg)) {
            loss += err * gi / n_present as f64;
            let sign = if f { -1.0 } else { 1.0 };
            grad[r * c + class] += sign * gi / n_present as f64;
        }
    }
    let local = vec![Tensor::matrix(n, c, grad.into_iter().map(T::of).collect())?];
    g.fused_scalar(vec![probs], loss, local, "lovasz_softmax")
}

/// Per-term weights of the segmentation objective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmsWeights {
    pub fused_ce: f64,
    pub range_ce: f64,
    pub range_lovasz: f64,
    pub voxel_ce: f64,
    pub voxel_lovasz: f64,
    pub point_ce: f64,
}

impl Default for SmsWeights {
    fn default() -> Self {
        Self {
            fused_ce: 1.0,
            range_ce: 1.0,
            range_lovasz: 2.0,
            voxel_ce: 1.0,
            voxel_lovasz: 2.0,
            point_ce: 1.0,
        }
    }
}

impl SmsWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.fused_ce,
            self.range_ce,
            self.range_lovasz,
            self.voxel_ce,
            self.voxel_lovasz,
            self.point_ce,
        ];
        if all.iter().any(|w| !(*w >= 0.0)) {
            return Err(crate::error::config_err!("loss weights must be non-negative"));
        }
        Ok(())
    }
}

/// Logits and their label spaces for the segmentation objective.
pub struct SmsInputs<'a> {
    /// Per-cell range logits with per-cell labels.
    pub range: (Var, &'a [i32]),
    /// Per-voxel logits with per-voxel labels.
    pub voxel: (Var, &'a [i32]),
    /// Per-point logits of the point branch.
    pub point: Var,
    /// Per-point fused logits.
    pub fused: Var,
    pub point_labels: &'a [i32],
}

/// Weighted terms, each already multiplied by its weight.
pub struct SmsLoss {
    pub total: Var,
    pub terms: Vec<(String, Var)>,
}

/// `CE(X, Y_moe) + [CE + 2·Lovász](X_r, Y_r) + [CE + 2·Lovász](X_v, Y_v) + CE(X, Y_p)`
/// under the default weights. Zero-weight terms are not evaluated.
pub fn sms_total<T: Real>(g: &mut Graph<T>, inputs: &SmsInputs<'_>, weights: &SmsWeights) -> Result<SmsLoss> {
    weights.validate()?;
    let mut terms: Vec<(String, Var)> = Vec::new();
    let mut add = |g: &mut Graph<T>, name: &str, w: f64, v: Var| -> Result<()> {
        let scaled = if w == 1.0 { v } else { g.scale(v, w)? };
        terms.push((name.into(), scaled));
        Ok(())
    };
    if weights.fused_ce > 0.0 {
        let l = cross_entropy(g, inputs.fused, inputs.point_labels)?;
        add(g, "fused_ce", weights.fused_ce, l)?;
    }
    for (name, (logits, labels), wce, wlov) in [
        ("range", inputs.range, weights.range_ce, weights.range_lovasz),
        ("voxel", inputs.voxel, weights.voxel_ce, weights.voxel_lovasz),
    ] {
        if wce > 0.0 {
            let l = cross_entropy(g, logits, labels)?;
            add(g, &alloc::format!("{name}_ce"), wce, l)?;
        }
        if wlov > 0.0 {
            let p = g.softmax_rows(logits)?;
            let l = lovasz_softmax(g, p, labels)?;
            add(g, &alloc::format!("{name}_lovasz"), wlov, l)?;
        }
    }
    if weights.point_ce > 0.0 {
        let l = cross_entropy(g, inputs.point, inputs.point_labels)?;
        add(g, "point_ce", weights.point_ce, l)?;
    }
    let parts: Vec<(Var, f64)> = terms.iter().map(|&(_, v)| (v, 1.0)).collect();
    let total = g.weighted_sum(&parts)?;
    Ok(SmsLoss { total, terms })
}
