mod common;

use common::{micro_cloud, random_tensor, rng};
use limoe_core::metrics::{
    compute_mce_mrr, compute_miou, cosine_map, global_load, iou, route_stats, RouteAxis, DEFAULT_DISTANCE_EDGES,
};
use limoe_core::nn::Tensor;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn iou_worked_value() {
    assert_eq!(iou(50, 25, 25), Some(50.0));
    assert_eq!(iou(0, 0, 0), None);
}

#[test]
fn identical_predictions_score_100() {
    let labels = vec![0, 1, 2, 2, -1, 5];
    let r = compute_miou(&labels.iter().map(|&l| l.max(0)).collect::<Vec<_>>(), &labels, 6).unwrap();
    assert_eq!(r.miou, 100.0);
    // classes 3 and 4 never appear and are left out of the mean
    assert_eq!(r.classes.iter().filter(|c| c.iou.is_none()).count(), 2);
}

#[test]
fn three_class_toy_confusion() {
    let labels = [0, 0, 0, 1, 1, 2, 2, 2];
    let preds = [0, 1, 0, 1, 2, 2, 0, 2];
    let r = compute_miou(&preds, &labels, 3).unwrap();
    // hand count: class 0 tp 2 fp 1 fn 1; class 1 tp 1 fp 1 fn 1; class 2 tp 2 fp 1 fn 1
    let want = [(2, 1, 1), (1, 1, 1), (2, 1, 1)];
    for (c, w) in r.classes.iter().zip(want) {
        assert_eq!((c.tp, c.fp, c.fn_), w);
    }
    let mean = (50.0 + 100.0 / 3.0 + 50.0) / 3.0;
    assert!((r.miou - mean).abs() < 1e-12);
}

proptest! {
    #[test]
    fn miou_matches_confusion_oracle(seed in 0u64..100_000, n in 1usize..2000, c in 1usize..7) {
        let mut r = rng(seed);
        let labels: Vec<i32> = (0..n).map(|_| r.gen_range(-1..c as i32)).collect();
        prop_assume!(labels.iter().any(|&l| l >= 0));
        let preds: Vec<i32> = (0..n).map(|_| r.gen_range(0..c as i32)).collect();
        let mut conf = vec![vec![0u64; c]; c];
        for (&p, &l) in preds.iter().zip(&labels) {
            if l >= 0 {
                conf[l as usize][p as usize] += 1;
            }
        }
        let report = compute_miou(&preds, &labels, c).unwrap();
        let mut ious = Vec::new();
        for k in 0..c {
            let tp = conf[k][k];
            let fn_: u64 = conf[k].iter().sum::<u64>() - tp;
            let fp: u64 = (0..c).map(|l| conf[l][k]).sum::<u64>() - tp;
            prop_assert_eq!((report.classes[k].tp, report.classes[k].fp, report.classes[k].fn_), (tp, fp, fn_));
            if tp + fp + fn_ > 0 {
                ious.push(100.0 * tp as f64 / (tp + fp + fn_) as f64);
            }
        }
        let mean = ious.iter().sum::<f64>() / ious.len() as f64;
        prop_assert!((report.miou - mean).abs() < 1e-9);
        prop_assert!(report.classes.iter().filter_map(|k| k.iou).all(|v| (0.0..=100.0).contains(&v)));
    }
}

#[test]
fn corruption_error_and_resilience() {
    let same = vec![("jitter".to_string(), [55.0, 45.0, 35.0])];
    let r = compute_mce_mrr(&same, &same, 60.0).unwrap();
    assert!((r.mce - 100.0).abs() < 1e-12);

    let clean = vec![("jitter".to_string(), [70.0; 3])];
    let r = compute_mce_mrr(&clean, &same, 70.0).unwrap();
    assert!((r.mrr - 100.0).abs() < 1e-12);

    let model = vec![("jitter".to_string(), [60.0, 50.0, 40.0])];
    let base = vec![("jitter".to_string(), [50.0, 40.0, 30.0])];
    let r = compute_mce_mrr(&model, &base, 70.0).unwrap();
    assert!((r.mce - 83.33).abs() < 0.01);
    assert!((r.mrr - 71.43).abs() < 0.01);
    assert!((r.mce - 100.0 * 150.0 / 180.0).abs() < 1e-9);

    let perfect = vec![("jitter".to_string(), [100.0; 3])];
    assert!(compute_mce_mrr(&model, &perfect, 70.0).is_err());
}

fn random_gates(n: usize, seed: u64) -> Vec<[f64; 3]> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let g: [f64; 3] = [r.gen_range(0.0..1.0), r.gen_range(0.0..1.0), r.gen_range(0.0..1.0)];
            let s: f64 = g.iter().sum();
            g.map(|v| v / s)
        })
        .collect()
}

#[test]
fn route_tables_are_normalised() {
    let cloud = micro_cloud(500, 6, 2);
    let gates = random_gates(cloud.len(), 3);
    let direct = global_load(&gates);
    for axis in [RouteAxis::Beam, RouteAxis::Distance, RouteAxis::Class] {
        let t = route_stats(&gates, &cloud, axis, &[0.0, 2.0, 4.0]).unwrap();
        assert_eq!(t.rows.iter().map(|r| r.count).sum::<u64>(), cloud.len() as u64);
        for r in &t.rows {
            assert!((r.load.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
        }
        let g = t.global_load();
        for k in 0..3 {
            assert!((g[k] - direct[k]).abs() <= 1e-6);
        }
    }
}

#[test]
fn forced_one_hot_and_uniform_gates() {
    let cloud = micro_cloud(200, 6, 4);
    let one_hot = vec![[0.0, 1.0, 0.0]; cloud.len()];
    for axis in [RouteAxis::Beam, RouteAxis::Distance, RouteAxis::Class] {
        let t = route_stats(&one_hot, &cloud, axis, &DEFAULT_DISTANCE_EDGES).unwrap();
        assert!(t.rows.iter().all(|r| r.load == [0.0, 1.0, 0.0]));
    }
    let uniform = vec![[1.0 / 3.0; 3]; cloud.len()];
    let t = route_stats(&uniform, &cloud, RouteAxis::Beam, &DEFAULT_DISTANCE_EDGES).unwrap();
    for r in &t.rows {
        for v in r.load {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }
    let mut two = micro_cloud(2, 6, 5);
    two.points[1].beam = two.points[0].beam;
    let t = route_stats(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], &two, RouteAxis::Beam, &[]).unwrap();
    assert_eq!(t.rows.len(), 1);
    assert_eq!(t.rows[0].load, [0.5, 0.5, 0.0]);
    assert!(route_stats(&one_hot[..3], &cloud, RouteAxis::Beam, &[]).is_err());
}

#[test]
fn distance_buckets_follow_the_edges() {
    let cloud = micro_cloud(300, 6, 6);
    let gates = random_gates(cloud.len(), 7);
    let edges = [0.0, 2.0, 4.0];
    let t = route_stats(&gates, &cloud, RouteAxis::Distance, &edges).unwrap();
    let labels: Vec<&str> = t.rows.iter().map(|r| r.bucket.as_str()).collect();
    assert_eq!(labels, ["0-2", "2-4", "4-max"]);
    let near = cloud.points.iter().filter(|p| p.depth() < 2.0).count() as u64;
    assert_eq!(t.rows[0].count, near);
}

#[test]
fn cosine_map_extremes() {
    let f = Tensor::from_rows(&[[1.0f64, 0.0], [0.0, 2.0], [-3.0, 0.0], [0.0, 0.0]]).unwrap();
    let m = cosine_map(&f, 0).unwrap();
    assert_eq!(m.similarity[..3], [1.0, 0.0, -1.0]);
    assert_eq!(m.zero_norm, [false, false, false, true]);
    assert_eq!(m.similarity[3], 0.0);
    assert!(cosine_map(&f, 4).is_err());
    let r = random_tensor(50, 8, 1);
    let m = cosine_map(&r, 3).unwrap();
    assert!(m.similarity.iter().all(|s| (-1.0 - 1e-9..=1.0 + 1e-9).contains(s)));
    assert!((m.similarity[3] - 1.0).abs() < 1e-6);
}
