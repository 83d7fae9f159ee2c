//! End-to-end acceptance checks. Prints one `[PASS]`/`[FAIL]` line per
//! criterion and exits non-zero when any of them fails.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use limoe::config::{RunConfig, SmsInit, Split};
use limoe::dataset::Dataset;
use limoe::pipeline::{
    evaluate, init_encoder, linear_probe, sms_backbones, stage1_pretrain, stage2_cml, stage3_sms, student_backbone,
};
use limoe::report::{route_csv, route_svg};
use limoe::run::{route_tables, routed_points};
use limoe_core::datagen::SensorModel;
use limoe_core::encoders::{Encoder, EncoderConfig, Head, Representation, Views};
use limoe_core::geometry::{project_labels_voxel, project_to_range, range_coords, voxelize};
use limoe_core::losses::{cross_entropy, info_nce, lovasz_softmax, sms_total, Denominator, SmsInputs, SmsWeights};
use limoe_core::metrics::{compute_mce_mrr, global_load, iou, route_stats, RouteAxis, DEFAULT_DISTANCE_EDGES};
use limoe_core::moe::{gate_scores, init_moe, moe_fuse, moe_fuse_logits};
use limoe_core::nn::{grad_check, Graph, Model, ParameterStore, Real, Tensor, Var};
use limoe_core::rng::{self, Rng as ChaCha};
use limoe_core::{Point, PointCloud};
use rand::Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn gen(seed: u64) -> ChaCha {
    rng::for_purpose(seed, "acceptance")
}

fn uniform(rows: usize, cols: usize, seed: u64) -> Vec<f64> {
    let mut r = gen(seed);
    (0..rows * cols).map(|_| r.gen_range(-1.0..1.0)).collect()
}

fn tensor(rows: usize, cols: usize, seed: u64) -> Tensor<f32> {
    Tensor::matrix(
        rows,
        cols,
        uniform(rows, cols, seed).into_iter().map(|v| v as f32).collect(),
    )
    .unwrap()
}

fn probe_loss<T: Real>(g: &mut Graph<T>, x: Var, seed: u64) -> Var {
    let (n, d) = g.shape(x);
    let r = g.constant_f64(n, d, &uniform(n, d, seed)).unwrap();
    let m = g.mul(x, r).unwrap();
    g.sum(m).unwrap()
}

// ---------------------------------------------------------------- gradients

fn micro_sensor() -> SensorModel {
    SensorModel {
        beam_count: 4,
        azimuth_steps: 16,
        range_height: 4,
        range_width: 16,
        ..SensorModel::default()
    }
}

fn micro_config() -> EncoderConfig {
    EncoderConfig {
        dim: 8,
        hidden: 8,
        num_classes: 4,
        voxel_size: [1.0; 3],
        centroids: 6,
        neighbors: 4,
        ..EncoderConfig::default()
    }
}

fn micro_cloud(n: usize, seed: u64) -> PointCloud {
    let s = micro_sensor();
    let mut r = gen(seed);
    let points = (0..n)
        .map(|_| {
            let az: f64 = r.gen_range(-3.1..3.1);
            let el: f64 = r.gen_range(-s.fov_down + 0.01..s.fov_total - s.fov_down - 0.01);
            let d: f64 = r.gen_range(1.0..6.0);
            Point {
                xyz: [d * el.cos() * az.cos(), d * el.cos() * az.sin(), d * el.sin()],
                intensity: r.gen_range(0.0..1.0),
                beam: r.gen_range(0..s.beam_count as u16),
                label: r.gen_range(-1..4),
            }
        })
        .collect();
    PointCloud::new(points)
}

struct EncoderLoss(Representation, Head, PointCloud, Views);

impl Model for EncoderLoss {
    fn loss<T: Real>(&self, g: &mut Graph<T>, p: &ParameterStore<T>) -> limoe_core::Result<Var> {
        let x = Encoder::new(self.0).point_head(g, p, &self.2, &self.3, &micro_config(), self.1)?;
        Ok(probe_loss(g, x, 11))
    }
}

struct MoeLoss(Option<bool>);

impl Model for MoeLoss {
    fn loss<T: Real>(&self, g: &mut Graph<T>, p: &ParameterStore<T>) -> limoe_core::Result<Var> {
        let e = [g.param(p, "x0")?, g.param(p, "x1")?, g.param(p, "x2")?];
        let mix = match self.0 {
            None => moe_fuse(g, p, "m", e, 9)?,
            Some(zeta) => moe_fuse_logits(g, p, "m", e, zeta, 9)?,
        };
        let a = probe_loss(g, mix.output, 13);
        let b = probe_loss(g, mix.gates, 17);
        g.weighted_sum(&[(a, 1.0), (b, 0.5)])
    }
}

enum Single {
    Nce(Denominator),
    Ce(Vec<i32>),
    Lovasz(Vec<i32>),
}

impl Model for Single {
    fn loss<T: Real>(&self, g: &mut Graph<T>, p: &ParameterStore<T>) -> limoe_core::Result<Var> {
        let x = g.param(p, "x")?;
        match self {
            Single::Nce(mode) => {
                let q = g.param(p, "q")?;
                info_nce(g, x, q, 0.5, *mode)
            }
            Single::Ce(labels) => cross_entropy(g, x, labels),
            Single::Lovasz(labels) => {
                let s = g.softmax_rows(x)?;
                lovasz_softmax(g, s, labels)
            }
        }
    }
}

struct SmsLoss(PointCloud, Views);

impl Model for SmsLoss {
    fn loss<T: Real>(&self, g: &mut Graph<T>, p: &ParameterStore<T>) -> limoe_core::Result<Var> {
        let cfg = micro_config();
        let (mut cont, mut pts) = (Vec::new(), Vec::new());
        for repr in Representation::ALL {
            let e = Encoder::new(repr);
            let c = e.container_head(g, p, &self.0, &self.1, &cfg, Head::Logits)?;
            pts.push(e.to_points(g, c, &self.1)?);
            cont.push(c);
        }
        let fused = moe_fuse_logits(g, p, "m", [pts[0], pts[1], pts[2]], true, 3)?.output;
        let labels = self.0.labels();
        let rl = self.1.range.project_labels(&labels);
        let vl = project_labels_voxel(&self.1.voxels, &labels);
        let inputs = SmsInputs {
            range: (cont[0], &rl),
            voxel: (cont[1], &vl),
            point: pts[2],
            fused,
            point_labels: &labels,
        };
        Ok(sms_total(g, &inputs, &SmsWeights::default())?.total)
    }
}

fn gate_store(width: usize, rows: usize) -> ParameterStore<f32> {
    let mut s = ParameterStore::new();
    init_moe(&mut s, "m", width, &mut gen(1)).unwrap();
    s.set("m.zg", tensor(width, 3, 2)).unwrap();
    s.set("m.zn", tensor(width, 3, 3)).unwrap();
    for k in 0..3 {
        if rows > 0 {
            s.insert(format!("x{k}"), tensor(rows, width, 20 + k as u64)).unwrap();
        }
    }
    s
}

fn criterion_gradients() -> Outcome {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    let mut check = |name: &str, err: f64| -> Result<(), String> {
        worst = worst.max(err);
        ensure!(err < 1e-4, "{name}: max relative error {err:e}");
        Ok(())
    };
    let cloud = micro_cloud(48, 3);
    let views = Views::build(&cloud, &micro_sensor(), &micro_config()).unwrap();
    for repr in Representation::ALL {
        let mut store = ParameterStore::new();
        Encoder::new(repr)
            .init(&mut store, &micro_config(), &mut gen(5))
            .unwrap();
        for head in [Head::Embed, Head::Logits] {
            let m = EncoderLoss(repr, head, cloud.clone(), views.clone());
            check(
                &format!("{repr} encoder"),
                grad_check(&m, &store, true, 7, 1e-5).unwrap(),
            )?;
        }
    }
    let s = gate_store(8, 12);
    check("moe_fuse", grad_check(&MoeLoss(None), &s, true, 7, 1e-5).unwrap())?;
    let s = gate_store(4, 12);
    for zeta in [true, false] {
        check(
            "moe_fuse_logits",
            grad_check(&MoeLoss(Some(zeta)), &s, true, 7, 1e-5).unwrap(),
        )?;
    }
    let mut s = ParameterStore::new();
    s.insert("x", tensor(6, 8, 1)).unwrap();
    s.insert("q", tensor(6, 8, 2)).unwrap();
    for mode in [Denominator::All, Denominator::ExcludePositive] {
        check("info_nce", grad_check(&Single::Nce(mode), &s, true, 7, 1e-5).unwrap())?;
    }
    let mut s = ParameterStore::new();
    s.insert("x", tensor(10, 4, 4)).unwrap();
    let labels = vec![0, 1, 2, 1, -1, 0, 3, 2, 2, 0];
    check(
        "cross_entropy",
        grad_check(&Single::Ce(labels.clone()), &s, true, 7, 1e-5).unwrap(),
    )?;
    check(
        "lovasz_softmax",
        grad_check(&Single::Lovasz(labels), &s, true, 7, 1e-5).unwrap(),
    )?;

    let cloud = micro_cloud(40, 8);
    let views = Views::build(&cloud, &micro_sensor(), &micro_config()).unwrap();
    let mut s = gate_store(4, 0);
    for repr in Representation::ALL {
        Encoder::new(repr).init(&mut s, &micro_config(), &mut gen(6)).unwrap();
    }
    check(
        "sms_total",
        grad_check(&SmsLoss(cloud, views), &s, true, 7, 1e-5).unwrap(),
    )?;
    let secs = t.elapsed().as_secs_f64();
    ensure!(secs < 120.0, "took {secs:.1}s");
    Ok(format!("worst relative error {worst:.2e} over 15 graphs in {secs:.1}s"))
}

// ---------------------------------------------------------------- gates

fn criterion_gates() -> Outcome {
    let (n, d) = (10_000, 4);
    let p = gate_store(d, 0).cast::<f64>();
    let mats: Vec<Vec<f64>> = (0..3)
        .map(|k| uniform(n, d, 40 + k).iter().map(|v| 5.0 * v).collect())
        .collect();
    let run = |p: &ParameterStore<f64>, mats: &[Vec<f64>], zeta: Option<bool>, train: bool, seed: u64| {
        let mut g = Graph::new(train, 0);
        let e = [0, 1, 2].map(|k| g.constant_f64(n, d, &mats[k]).unwrap());
        let mix = match zeta {
            None => moe_fuse(&mut g, p, "m", e, seed).unwrap(),
            Some(z) => moe_fuse_logits(&mut g, p, "m", e, z, seed).unwrap(),
        };
        (g.value(mix.output).clone(), gate_scores(&g, mix.gates))
    };
    let mut worst_sum: f64 = 0.0;
    for (zeta, train) in [(None, true), (None, false), (Some(true), true), (Some(false), true)] {
        let (_, gates) = run(&p, &mats, zeta, train, 21);
        for row in &gates {
            ensure!(row.iter().all(|&a| a >= 0.0), "negative gate {row:?}");
            worst_sum = worst_sum.max((row.iter().sum::<f64>() - 1.0).abs());
        }
    }
    ensure!(worst_sum <= 1e-6, "gate row sum off by {worst_sum:e}");

    let same = vec![mats[0].clone(), mats[0].clone(), mats[0].clone()];
    for zeta in [None, Some(true), Some(false)] {
        let (out, _) = run(&p, &same, zeta, true, 3);
        let dev = out
            .data()
            .iter()
            .zip(&mats[0])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        ensure!(dev <= 1e-6, "identical experts moved by {dev:e}");
    }

    let (a, ga) = run(&p, &mats, Some(false), true, 1);
    let (b, gb) = run(&p, &mats, Some(false), true, 2);
    ensure!(
        a.data()
            .iter()
            .map(|v| v.to_bits())
            .eq(b.data().iter().map(|v| v.to_bits()))
            && ga == gb,
        "ζ=0 not bit-identical"
    );

    let mut zero = ParameterStore::<f32>::new();
    init_moe(&mut zero, "m", d, &mut gen(9)).unwrap();
    let zero = zero.cast::<f64>();
    for zeta in [None, Some(false)] {
        let (_, g) = run(&zero, &mats, zeta, false, 4);
        ensure!(
            g.iter().all(|r| r.iter().all(|&v| v == 1.0 / 3.0)),
            "zero-init gates not exactly uniform"
        );
    }
    Ok(format!(
        "10^4 rows, worst |Σ−1| {worst_sum:.1e}; identical-expert, ζ=0 and uniform-init laws hold"
    ))
}

// ---------------------------------------------------------------- projections

fn criterion_projection() -> Outcome {
    let s = SensorModel {
        range_height: 32,
        range_width: 1024,
        ..SensorModel::default()
    };
    let mut r = gen(31);
    let xyz: Vec<[f64; 3]> = (0..100_000)
        .map(|_| {
            let az: f64 = r.gen_range(-PI..PI);
            let el: f64 = r.gen_range(-s.fov_down..s.fov_total - s.fov_down);
            let d: f64 = r.gen_range(0.5..60.0);
            [d * el.cos() * az.cos(), d * el.cos() * az.sin(), d * el.sin()]
        })
        .collect();
    let mut worst: f64 = 0.0;
    for p in &xyz {
        let d = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        let u = 0.5 * (1.0 - p[1].atan2(p[0]) / PI) * s.range_width as f64;
        let v = (1.0 - ((p[2] / d).asin() + s.fov_down) / s.fov_total) * s.range_height as f64;
        let (gu, gv) = range_coords(*p, &s);
        worst = worst
            .max((gu - u).abs() / u.abs().max(1.0))
            .max((gv - v).abs() / v.abs().max(1.0));
    }
    ensure!(worst <= 1e-9, "projection deviates by {worst:e}");
    let cloud = PointCloud::new(
        xyz.iter()
            .enumerate()
            .map(|(i, &p)| Point {
                xyz: p,
                intensity: (i % 11) as f64 / 11.0,
                beam: 0,
                label: 0,
            })
            .collect(),
    );
    let img = project_to_range(&cloud, &s);
    ensure!(
        img.pixels
            .iter()
            .all(|px| (px.u as usize) < s.range_width && (px.v as usize) < s.range_height),
        "pixel out of bounds"
    );
    let sizes = [0.5, 0.5, 0.25];
    let grid = voxelize(&cloud, sizes).unwrap();
    ensure!(grid.len() <= cloud.len(), "M > N");
    let mut worst_pool: f64 = 0.0;
    for (vid, ids) in grid.members.iter().enumerate() {
        for k in 0..3 {
            let mean = ids.iter().map(|&i| xyz[i as usize][k]).sum::<f64>() / ids.len() as f64;
            worst_pool = worst_pool.max((grid.pooled[vid][k] - mean).abs() / mean.abs().max(1.0));
        }
        for &i in ids {
            let c = [0, 1, 2].map(|k| (xyz[i as usize][k] / sizes[k]).floor() as i64);
            ensure!(c == grid.coords[vid], "point {i} in the wrong voxel");
        }
    }
    ensure!(worst_pool <= 1e-9, "voxel mean deviates by {worst_pool:e}");
    Ok(format!(
        "10^5 points, projection error {worst:.1e}, pooling error {worst_pool:.1e}, M={} ≤ N",
        grid.len()
    ))
}

// ---------------------------------------------------------------- losses

fn nce_oracle(k: &[f64], q: &[f64], s: usize, d: usize, tau: f64, all: bool) -> f64 {
    let unit = |m: &[f64], i: usize| -> Vec<f64> {
        let r = &m[i * d..(i + 1) * d];
        let n = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        r.iter().map(|x| x / n).collect()
    };
    let mut total = 0.0;
    for i in 0..s {
        let ki = unit(k, i);
        let score = |j: usize| ki.iter().zip(unit(q, j)).map(|(a, b)| a * b).sum::<f64>() / tau;
        let denom: f64 = (0..s).filter(|&j| all || j != i).map(|j| score(j).exp()).sum();
        total -= (score(i).exp() / denom).ln();
    }
    total / s as f64
}

fn lovasz_oracle(probs: &[f64], cols: usize, labels: &[i32]) -> f64 {
    let mut per_class = Vec::new();
    for c in 0..cols as i32 {
        if !labels.contains(&c) {
            continue;
        }
        let fg: Vec<bool> = labels.iter().map(|&l| l == c).collect();
        let m: Vec<f64> = (0..labels.len())
            .map(|i| {
                if fg[i] {
                    1.0 - probs[i * cols + c as usize]
                } else {
                    probs[i * cols + c as usize]
                }
            })
            .collect();
        let mut order: Vec<usize> = (0..m.len()).collect();
        order.sort_by(|&a, &b| m[b].total_cmp(&m[a]));
        let gt = fg.iter().filter(|&&f| f).count();
        let mut sum = 0.0;
        for i in 0..order.len() {
            let top = &order[..=i];
            let missed = top.iter().filter(|&&j| fg[j]).count();
            let jaccard = 1.0 - (gt - missed) as f64 / (gt + top.len() - missed) as f64;
            let next = order.get(i + 1).map_or(0.0, |&j| m[j]);
            sum += (m[order[i]] - next) * jaccard;
        }
        per_class.push(sum);
    }
    per_class.iter().sum::<f64>() / per_class.len() as f64
}

fn criterion_losses() -> Outcome {
    let nce = |k: &[f64], q: &[f64], s, d, tau, mode| {
        let mut g = Graph::<f64>::new(false, 0);
        let kv = g.constant_f64(s, d, k).unwrap();
        let qv = g.constant_f64(s, d, q).unwrap();
        let l = info_nce(&mut g, kv, qv, tau, mode).unwrap();
        g.scalar(l)
    };
    let e = [1.0, 0.0, 0.0, 1.0];
    let worked = nce(&e, &e, 2, 2, 1.0, Denominator::All);
    ensure!((worked - 0.31326).abs() < 1e-5, "worked value {worked}");
    let mut r = gen(50);
    let mut worst_nce: f64 = 0.0;
    for i in 0..100 {
        let (s, d) = (r.gen_range(2..=8), r.gen_range(1..=4));
        let tau = r.gen_range(0.05..2.0);
        let k = uniform(s, d, 100 + i);
        let q = uniform(s, d, 500 + i);
        for (mode, all) in [(Denominator::All, true), (Denominator::ExcludePositive, false)] {
            let want = nce_oracle(&k, &q, s, d, tau, all);
            worst_nce = worst_nce.max((nce(&k, &q, s, d, tau, mode) - want).abs() / want.abs().max(1.0));
        }
    }
    ensure!(worst_nce <= 1e-6, "info_nce off by {worst_nce:e}");
    let mut worst_lv: f64 = 0.0;
    for i in 0..100 {
        let (n, c) = (r.gen_range(1..=6), r.gen_range(2..=3));
        let raw = uniform(n, c, 900 + i);
        let probs: Vec<f64> = raw
            .chunks(c)
            .flat_map(|row| {
                let z: f64 = row.iter().map(|v| (3.0 * v).exp()).sum();
                row.iter().map(move |v| (3.0 * v).exp() / z).collect::<Vec<_>>()
            })
            .collect();
        let labels: Vec<i32> = (0..n).map(|_| r.gen_range(0..c as i32)).collect();
        let mut g = Graph::<f64>::new(false, 0);
        let p = g.constant_f64(n, c, &probs).unwrap();
        let l = lovasz_softmax(&mut g, p, &labels).unwrap();
        worst_lv = worst_lv.max((g.scalar(l) - lovasz_oracle(&probs, c, &labels)).abs());
    }
    ensure!(worst_lv <= 1e-6, "lovasz off by {worst_lv:e}");
    Ok(format!(
        "worked value {worked:.5}; info_nce error {worst_nce:.1e}; lovasz error {worst_lv:.1e}"
    ))
}

// ---------------------------------------------------------------- metrics

fn criterion_metrics() -> Outcome {
    ensure!(iou(50, 25, 25) == Some(50.0), "IoU(50,25,25) = {:?}", iou(50, 25, 25));
    let same = vec![("jitter".to_string(), [60.0, 50.0, 40.0])];
    let r = compute_mce_mrr(&same, &same, 70.0).map_err(|e| e.to_string())?;
    ensure!((r.mce - 100.0).abs() < 1e-9, "CE vs identical baseline {}", r.mce);
    let clean = vec![("jitter".to_string(), [70.0; 3])];
    let r = compute_mce_mrr(&clean, &same, 70.0).map_err(|e| e.to_string())?;
    ensure!((r.mrr - 100.0).abs() < 1e-9, "RR at clean level {}", r.mrr);
    let base = vec![("jitter".to_string(), [50.0, 40.0, 30.0])];
    let r = compute_mce_mrr(&same, &base, 70.0).map_err(|e| e.to_string())?;
    ensure!(
        (r.mce - 83.33).abs() < 0.01 && (r.mrr - 71.43).abs() < 0.01,
        "CE {} RR {}",
        r.mce,
        r.mrr
    );
    Ok(format!(
        "IoU 50.0, identical CE 100, clean RR 100, worked CE {:.2} RR {:.2}",
        r.mce, r.mrr
    ))
}

// ---------------------------------------------------------------- reference runs

struct SeedRun {
    seed: u64,
    lp_secs: f64,
    lp_cml: f64,
    lp_random: f64,
    fused: f64,
    single: [f64; 3],
    stage1_ratio: [f64; 3],
    cml_ratio: f64,
    routes: Vec<limoe_core::metrics::RouteTable>,
    load: [f64; 3],
}

fn ratio(losses: &[f64]) -> f64 {
    losses[losses.len() - 1] / losses[0]
}

fn reference_run(seed: u64) -> limoe::Result<SeedRun> {
    let cfg = RunConfig {
        seed,
        ..RunConfig::default()
    };
    let data = Dataset::generate(&cfg.data)?;
    let t = Instant::now();
    let s1 = stage1_pretrain(&cfg, &data)?;
    let first = stage2_cml(&cfg, &data, &s1.stores, cfg.student)?;
    let lp_cml = linear_probe(&cfg, &data, &student_backbone(&first)?, cfg.student)?
        .report
        .miou;
    let random = init_encoder(&cfg, cfg.student, cfg.student.name())?;
    let lp_random = linear_probe(&cfg, &data, &random, cfg.student)?.report.miou;
    let lp_secs = t.elapsed().as_secs_f64();

    let stage1_ratio = Representation::ALL.map(|r| ratio(&s1.log.epoch_losses(&format!("pretrain.{r}"))));
    let cml_ratio = ratio(&first.log.epoch_losses(&format!("cml.{}", cfg.student)));
    let routes = route_tables(&data, &first)?;
    let load = global_load(&routed_points(&data, &first).1);

    let mut cml = vec![first];
    if cfg.sms_init == SmsInit::CmlStudents {
        for r in Representation::ALL.into_iter().filter(|r| *r != cfg.student) {
            cml.push(stage2_cml(&cfg, &data, &s1.stores, r)?);
        }
    }
    let sms = stage3_sms(&cfg, &data, &sms_backbones(&cfg, Some(&s1), &cml)?)?;
    let eval = evaluate(&cfg, &data, &sms.store, Split::Val)?;
    let run = SeedRun {
        seed,
        lp_secs,
        lp_cml,
        lp_random,
        fused: eval.fused.miou,
        single: [0, 1, 2].map(|k| eval.single[k].miou),
        stage1_ratio,
        cml_ratio,
        routes,
        load,
    };
    eprintln!(
        "  seed {seed}: LP cml {:.2} random {:.2}; fused {:.2} single {:.2?}; loss ratios stage-1 {:.3?} cml {:.3}",
        run.lp_cml, run.lp_random, run.fused, run.single, run.stage1_ratio, run.cml_ratio
    );
    Ok(run)
}

fn criterion_pretraining(runs: &[SeedRun]) -> Outcome {
    let gain = runs.iter().map(|r| r.lp_cml - r.lp_random).sum::<f64>() / runs.len() as f64;
    let slowest = runs.iter().map(|r| r.lp_secs).fold(0.0, f64::max);
    let detail = format!(
        "mean LP gain {gain:+.2} mIoU over {} seeds, slowest run {slowest:.0}s",
        runs.len()
    );
    ensure!(gain >= 5.0, "{detail}");
    ensure!(slowest < 600.0, "{detail}");
    Ok(detail)
}

fn criterion_fusion(runs: &[SeedRun]) -> Outcome {
    for r in runs {
        let best = r.single.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        ensure!(
            r.fused >= best - 0.5,
            "seed {}: fused {:.2} < best single {best:.2} − 0.5",
            r.seed,
            r.fused
        );
    }
    let n = runs.len() as f64;
    let fused = runs.iter().map(|r| r.fused).sum::<f64>() / n;
    let mean_single = runs.iter().map(|r| r.single.iter().sum::<f64>() / 3.0).sum::<f64>() / n;
    ensure!(
        fused >= mean_single,
        "mean fused {fused:.2} < mean single {mean_single:.2}"
    );
    Ok(format!(
        "mean fused {fused:.2} vs mean single {mean_single:.2}; within 0.5 of the best branch on every seed"
    ))
}

fn criterion_convergence(runs: &[SeedRun]) -> Outcome {
    let mut misses = Vec::new();
    for r in runs {
        for (repr, q) in Representation::ALL.iter().zip(r.stage1_ratio) {
            if q > 0.5 {
                misses.push(format!("seed {} stage-1 {repr} {q:.3}", r.seed));
            }
        }
        if r.cml_ratio > 0.5 {
            misses.push(format!("seed {} cml {:.3}", r.seed, r.cml_ratio));
        }
    }
    ensure!(misses.is_empty(), "final/first loss above 0.5: {}", misses.join(", "));
    Ok("every final-epoch loss ≤ 50% of the first".into())
}

fn criterion_routes(runs: &[SeedRun], dir: &Path) -> Outcome {
    let cfg = RunConfig::default();
    let cloud = &Dataset::generate(&cfg.data).map_err(|e| e.to_string())?.scans[0].cloud;
    let one_hot = vec![[0.0, 0.0, 1.0]; cloud.len()];
    for axis in [RouteAxis::Beam, RouteAxis::Distance, RouteAxis::Class] {
        let t = route_stats(&one_hot, cloud, axis, &DEFAULT_DISTANCE_EDGES).map_err(|e| e.to_string())?;
        ensure!(
            t.rows.iter().all(|r| r.load == [0.0, 0.0, 1.0]),
            "one-hot fixture not one-hot on {axis:?}"
        );
    }
    let run = &runs[0];
    let mut worst: f64 = 0.0;
    for t in &run.routes {
        for r in &t.rows {
            worst = worst.max((r.load.iter().sum::<f64>() - 1.0).abs());
        }
    }
    ensure!(worst <= 1e-6, "route row sum off by {worst:e}");
    std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
    for t in run.routes.iter().filter(|t| t.axis != RouteAxis::Class) {
        let name = t.axis.name();
        std::fs::write(
            dir.join(format!("route_{name}.csv")),
            route_csv(std::slice::from_ref(t)),
        )
        .map_err(|e| e.to_string())?;
        std::fs::write(dir.join(format!("route_{name}.svg")), route_svg(t)).map_err(|e| e.to_string())?;
    }
    let flags = run.load.map(|l| if l >= 0.05 { "ok" } else { "degenerate" });
    Ok(format!(
        "row sums within {worst:.1e}; global load range {:.3} ({}) voxel {:.3} ({}) point {:.3} ({}); tables in {}",
        run.load[0],
        flags[0],
        run.load[1],
        flags[1],
        run.load[2],
        flags[2],
        dir.display()
    ))
}

// ---------------------------------------------------------------- determinism

fn cli_pipeline(dir: &Path) -> Result<(), String> {
    let mut cfg = RunConfig::default();
    cfg.epochs.pretrain = 2;
    cfg.epochs.cml = 2;
    cfg.epochs.sms = 2;
    cfg.epochs.probe = 2;
    std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
    let cfg_path = dir.join("run.json");
    std::fs::write(&cfg_path, cfg.to_json()).map_err(|e| e.to_string())?;
    let out = dir.join("out");
    let manifest = out.join("manifest.json");
    let model = out.join("sms.ckpt");
    let (c, o, m, k) = (
        cfg_path.to_str().unwrap(),
        out.to_str().unwrap(),
        manifest.to_str().unwrap(),
        model.to_str().unwrap(),
    );
    let steps: [&[&str]; 8] = [
        &["datagen"],
        &["pretrain", "--dataset", m],
        &["cml", "--dataset", m, "--student", "range"],
        &["cml", "--dataset", m, "--student", "voxel"],
        &["cml", "--dataset", m, "--student", "point"],
        &["sms", "--dataset", m],
        &["eval", "--dataset", m, "--model", k],
        &["route-stats"],
    ];
    for step in steps {
        let mut args = vec!["--config", c, "--out", o];
        args.extend_from_slice(step);
        let r = Command::new(env!("CARGO_BIN_EXE_limoe"))
            .args(&args)
            .output()
            .map_err(|e| e.to_string())?;
        ensure!(r.status.success(), "{step:?}: {}", String::from_utf8_lossy(&r.stderr));
    }
    Ok(())
}

fn criterion_determinism(dir: &Path) -> Outcome {
    let (a, b) = (dir.join("a"), dir.join("b"));
    let _ = std::fs::remove_dir_all(dir);
    cli_pipeline(&a)?;
    cli_pipeline(&b)?;
    let mut names: Vec<String> = std::fs::read_dir(a.join("out"))
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    let mut compared = 0;
    for n in &names {
        let x = std::fs::read(a.join("out").join(n)).map_err(|e| e.to_string())?;
        let y = std::fs::read(b.join("out").join(n)).map_err(|e| format!("{n}: {e}"))?;
        ensure!(x == y, "{n} differs between runs");
        compared += 1;
    }
    for required in [
        "pretrain_voxel.ckpt",
        "cml_voxel.ckpt",
        "sms.ckpt",
        "metrics.csv",
        "route_beam.csv",
        "route_distance.csv",
    ] {
        ensure!(names.iter().any(|n| n == required), "{required} was not produced");
    }
    Ok(format!("{compared} output files bit-identical across two full runs"))
}

fn main() {
    let tmp = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let mut failed = 0;
    let mut report = |n: usize, what: &str, outcome: Outcome| match &outcome {
        Ok(detail) => println!("[PASS] criterion {n:>2} {what}: {detail}"),
        Err(why) => {
            failed += 1;
            println!("[FAIL] criterion {n:>2} {what}: {why}");
        }
    };
    report(1, "gradient integrity", criterion_gradients());
    report(2, "gate laws", criterion_gates());
    report(3, "projection round trips", criterion_projection());
    report(4, "loss oracles", criterion_losses());
    report(5, "metric formulas", criterion_metrics());

    let t = Instant::now();
    let runs: Result<Vec<SeedRun>, String> = (0..3).map(|s| reference_run(s).map_err(|e| e.to_string())).collect();
    eprintln!("  reference runs took {:.0}s", t.elapsed().as_secs_f64());
    match runs {
        Ok(runs) => {
            report(6, "pretraining helps", criterion_pretraining(&runs));
            report(7, "fusion helps", criterion_fusion(&runs));
            report(8, "convergence", criterion_convergence(&runs));
            report(9, "route analysis", criterion_routes(&runs, &tmp.join("routes")));
        }
        Err(e) => {
            for (n, what) in [
                (6, "pretraining helps"),
                (7, "fusion helps"),
                (8, "convergence"),
                (9, "route analysis"),
            ] {
                report(n, what, Err(format!("reference run failed: {e}")));
            }
        }
    }
    report(
        10,
        "end-to-end determinism",
        criterion_determinism(&tmp.join("determinism")),
    );
    println!("{} of 10 criteria passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
