mod common;

use common::{random_matrix, rng};
use limoe_core::losses::{cross_entropy, info_nce, lovasz_softmax, sms_total, Denominator, SmsInputs, SmsWeights};
use limoe_core::nn::Graph;
use proptest::prelude::*;
use rand::Rng;

fn nce(k: &[f64], q: &[f64], s: usize, d: usize, tau: f64, mode: Denominator) -> f64 {
    let mut g = Graph::<f64>::new(false, 0);
    let kv = g.constant_f64(s, d, k).unwrap();
    let qv = g.constant_f64(s, d, q).unwrap();
    let l = info_nce(&mut g, kv, qv, tau, mode).unwrap();
    g.scalar(l)
}

/// Double loop straight from the definition.
fn nce_oracle(k: &[f64], q: &[f64], s: usize, d: usize, tau: f64, all: bool) -> f64 {
    let unit = |m: &[f64], i: usize| -> Vec<f64> {
        let r = &m[i * d..(i + 1) * d];
        let n = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        r.iter().map(|x| x / n).collect()
    };
    let mut total = 0.0;
    for i in 0..s {
        let ki = unit(k, i);
        let score = |j: usize| -> f64 { ki.iter().zip(unit(q, j)).map(|(a, b)| a * b).sum::<f64>() / tau };
        let mut denom = 0.0;
        for j in 0..s {
            if all || j != i {
                denom += score(j).exp();
            }
        }
        total += -(score(i).exp() / denom).ln();
    }
    total / s as f64
}

#[test]
fn info_nce_worked_value() {
    let e = [1.0, 0.0, 0.0, 1.0];
    let l = nce(&e, &e, 2, 2, 1.0, Denominator::All);
    let want = (1.0 + (-1.0f64).exp()).ln();
    assert!((l - want).abs() < 1e-12);
    assert!((l - 0.31326).abs() < 1e-5);
}

#[test]
fn info_nce_matches_brute_force() {
    let mut r = rng(4);
    for inst in 0..100 {
        let s = r.gen_range(2..=8);
        let d = r.gen_range(1..=4);
        let tau = r.gen_range(0.05..2.0);
        let k = random_matrix(s, d, 1000 + inst);
        let q = random_matrix(s, d, 2000 + inst);
        for (mode, all) in [(Denominator::All, true), (Denominator::ExcludePositive, false)] {
            let got = nce(&k, &q, s, d, tau, mode);
            let want = nce_oracle(&k, &q, s, d, tau, all);
            assert!(
                (got - want).abs() <= 1e-6 * want.abs().max(1.0),
                "instance {inst}: {got} vs {want}"
            );
        }
    }
}

#[test]
fn info_nce_orderings() {
    let e = [1.0, 0.0, 0.0, 1.0];
    let swapped = [0.0, 1.0, 1.0, 0.0];
    let matched = nce(&e, &e, 2, 2, 1.0, Denominator::All);
    assert!(nce(&e, &swapped, 2, 2, 1.0, Denominator::All) > matched);
    let same = [0.3, 0.4].repeat(5);
    assert!((nce(&same, &same, 5, 2, 0.07, Denominator::All) - 5f64.ln()).abs() < 1e-9);
    let mut prev = f64::INFINITY;
    for tau in [1.0, 0.7, 0.5, 0.3, 0.1] {
        let l = nce(&e, &e, 2, 2, tau, Denominator::All);
        assert!(l < prev);
        prev = l;
    }
}

#[test]
fn info_nce_rejects_single_pair() {
    let mut g = Graph::<f64>::new(false, 0);
    let k = g.constant_f64(1, 2, &[1.0, 0.0]).unwrap();
    assert!(info_nce(&mut g, k, k, 0.1, Denominator::All).is_err());
}

fn ce(logits: &[f64], rows: usize, cols: usize, labels: &[i32]) -> f64 {
    let mut g = Graph::<f64>::new(false, 0);
    let x = g.constant_f64(rows, cols, logits).unwrap();
    let l = cross_entropy(&mut g, x, labels).unwrap();
    g.scalar(l)
}

#[test]
fn cross_entropy_examples() {
    assert!((ce(&[0.0; 6], 1, 6, &[3]) - 6f64.ln()).abs() < 1e-12);
    let mut big = [0.0; 6];
    big[2] = 20.0;
    assert!(ce(&big, 1, 6, &[2]) < 1e-3);
    let x = random_matrix(3, 4, 7);
    let mut padded = x.clone();
    padded.extend(random_matrix(2, 4, 8));
    assert_eq!(ce(&x, 3, 4, &[0, 1, 3]), ce(&padded, 5, 4, &[0, 1, 3, -1, -1]));
    let mut g = Graph::<f64>::new(false, 0);
    let v = g.constant_f64(2, 4, &x[..8]).unwrap();
    assert!(cross_entropy(&mut g, v, &[-1, -1]).is_err());
}

fn softmax(x: &[f64], c: usize) -> Vec<f64> {
    x.chunks(c)
        .flat_map(|r| {
            let m = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = r.iter().map(|v| (v - m).exp()).sum();
            r.iter().map(move |v| (v - m).exp() / z).collect::<Vec<_>>()
        })
        .collect()
}

fn lovasz(probs: &[f64], rows: usize, cols: usize, labels: &[i32]) -> f64 {
    let mut g = Graph::<f64>::new(false, 0);
    let p = g.constant_f64(rows, cols, probs).unwrap();
    let l = lovasz_softmax(&mut g, p, labels).unwrap();
    g.scalar(l)
}

/// Jaccard loss of the set of points counted as errors.
fn jaccard_loss(errors: &[usize], fg: &[bool]) -> f64 {
    let gt = fg.iter().filter(|&&f| f).count();
    let missed = errors.iter().filter(|&&i| fg[i]).count();
    let false_pos = errors.len() - missed;
    1.0 - (gt - missed) as f64 / (gt + false_pos) as f64
}

/// `Σᵢ (m₍ᵢ₎ − m₍ᵢ₊₁₎)·Δ(top-i)`, evaluating the set function on each prefix.
fn lovasz_oracle(probs: &[f64], cols: usize, labels: &[i32]) -> f64 {
    let rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] >= 0).collect();
    let mut per_class = Vec::new();
    for c in 0..cols {
        if !rows.iter().any(|&i| labels[i] == c as i32) {
            continue;
        }
        let fg: Vec<bool> = rows.iter().map(|&i| labels[i] == c as i32).collect();
        let m: Vec<f64> = rows
            .iter()
            .zip(&fg)
            .map(|(&i, &f)| {
                if f {
                    1.0 - probs[i * cols + c]
                } else {
                    probs[i * cols + c]
                }
            })
            .collect();
        let mut order: Vec<usize> = (0..m.len()).collect();
        order.sort_by(|&a, &b| m[b].partial_cmp(&m[a]).unwrap());
        let mut sum = 0.0;
        for i in 0..order.len() {
            let next = order.get(i + 1).map_or(0.0, |&j| m[j]);
            sum += (m[order[i]] - next) * jaccard_loss(&order[..=i], &fg);
        }
        per_class.push(sum);
    }
    per_class.iter().sum::<f64>() / per_class.len() as f64
}

#[test]
fn lovasz_examples() {
    assert_eq!(lovasz(&[1.0, 0.0, 0.0, 1.0], 2, 2, &[0, 1]), 0.0);
    assert!((lovasz(&[0.6, 0.4], 1, 2, &[0]) - 0.4).abs() < 1e-12);
}

#[test]
fn lovasz_matches_direct_extension() {
    let mut r = rng(9);
    for inst in 0..300 {
        let n = r.gen_range(1..=6);
        let c = r.gen_range(2..=3);
        let labels: Vec<i32> = (0..n).map(|_| r.gen_range(-1..c as i32)).collect();
        if labels.iter().all(|&l| l < 0) {
            continue;
        }
        let p = softmax(
            &random_matrix(n, c, 500 + inst)
                .iter()
                .map(|v| 3.0 * v)
                .collect::<Vec<_>>(),
            c,
        );
        let got = lovasz(&p, n, c, &labels);
        let want = lovasz_oracle(&p, c, &labels);
        assert!((got - want).abs() <= 1e-6, "instance {inst}: {got} vs {want}");
    }
}

proptest! {
    #[test]
    fn lovasz_ignores_point_order(seed in 0u64..10_000, n in 2usize..12) {
        let mut r = rng(seed);
        let labels: Vec<i32> = (0..n).map(|_| r.gen_range(0..3)).collect();
        let p = softmax(&random_matrix(n, 3, seed), 3);
        let perm: Vec<usize> = (0..n).rev().collect();
        let pl: Vec<i32> = perm.iter().map(|&i| labels[i]).collect();
        let pp: Vec<f64> = perm.iter().flat_map(|&i| p[i * 3..i * 3 + 3].to_vec()).collect();
        let a = lovasz(&p, n, 3, &labels);
        let b = lovasz(&pp, n, 3, &pl);
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&a));
    }

    #[test]
    fn info_nce_is_non_negative(seed in 0u64..10_000, s in 2usize..8, d in 1usize..5) {
        let k = random_matrix(s, d, seed);
        let q = random_matrix(s, d, seed + 1);
        prop_assert!(nce(&k, &q, s, d, 0.07, Denominator::All) >= 0.0);
    }
}

#[test]
fn sms_total_examples() {
    let labels = [0, 1, 2, -1];
    let cells = [1, -1, 2];
    let perfect = |rows: &[i32]| -> Vec<f64> {
        rows.iter()
            .flat_map(|&l| (0..3).map(move |c| if c == l { 20.0 } else { 0.0 }))
            .collect()
    };
    let mut g = Graph::<f64>::new(false, 0);
    let pts = g.constant_f64(4, 3, &perfect(&labels)).unwrap();
    let cell = g.constant_f64(3, 3, &perfect(&cells)).unwrap();
    let inputs = SmsInputs {
        range: (cell, &cells),
        voxel: (cell, &cells),
        point: pts,
        fused: pts,
        point_labels: &labels,
    };
    let out = sms_total(&mut g, &inputs, &SmsWeights::default()).unwrap();
    assert!(g.scalar(out.total) < 1e-3);

    let noisy = g.constant_f64(4, 3, &random_matrix(4, 3, 3)).unwrap();
    let inputs = SmsInputs {
        fused: noisy,
        point: noisy,
        ..inputs
    };
    let full = sms_total(&mut g, &inputs, &SmsWeights::default()).unwrap();
    let sum: f64 = full.terms.iter().map(|(_, v)| g.scalar(*v)).sum();
    assert!((sum - g.scalar(full.total)).abs() < 1e-6);
    assert_eq!(full.terms.len(), 6);

    let only_fused = SmsWeights {
        range_ce: 0.0,
        range_lovasz: 0.0,
        voxel_ce: 0.0,
        voxel_lovasz: 0.0,
        point_ce: 0.0,
        ..SmsWeights::default()
    };
    let f = sms_total(&mut g, &inputs, &only_fused).unwrap();
    let direct = cross_entropy(&mut g, noisy, &labels).unwrap();
    assert_eq!(g.scalar(f.total), g.scalar(direct));
}
