//! The three training stages, linear probing and evaluation.

use limoe_core::datagen::{augment, corrupt, Corruption, Severity};
use limoe_core::encoders::{init_teacher, teacher_features, Encoder, EncoderConfig, Head, Representation, Views};
use limoe_core::geometry::{
    build_superpoints, group_mean, project_labels_voxel, project_to_image, SuperpointPartition,
};
use limoe_core::losses::{cross_entropy, info_nce, sms_total, SmsInputs};
use limoe_core::metrics::{compute_mce_mrr, compute_miou, MetricReport, RobustnessReport};
use limoe_core::moe::{gate_scores, init_moe, moe_fuse, moe_fuse_logits};
use limoe_core::nn::{AdamW, Gradients, Graph, OneCycle, ParameterStore, Real, Tensor, Var};
use limoe_core::{rng, PointCloud};

use crate::config::{RunConfig, SmsInit, Split};
use crate::dataset::{Dataset, Scan};
use crate::error::{Error, Result};
use crate::log::TrainLog;

pub const CML_MOE: &str = "cml.moe";
pub const SMS_MOE: &str = "sms.moe";
pub const STUDENT: &str = "student";
/// Log stage of the per-epoch validation rows; their `step` is the epoch.
pub const VAL_STAGE: &str = "sms.val";
pub const PROBE: &str = "probe";

fn seed_of(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(seed, |s, &p| rng::derive(s, p))
}

fn config_error(msg: impl Into<String>) -> Error {
    Error::Core(limoe_core::Error::Config(msg.into()))
}

/// A training scan prepared for the contrastive stages: labels stripped,
/// superpoints built and teacher targets computed.
#[derive(Clone, Debug)]
pub struct ContrastiveScan {
    pub index: usize,
    pub cloud: PointCloud,
    pub partition: SuperpointPartition,
    /// Teacher embedding of each superpoint's superpixel.
    pub targets: Tensor<f32>,
}

/// Prepares every paired training scan; scans with fewer than two
/// superpoints are skipped and counted.
pub fn prepare_contrastive(cfg: &RunConfig, data: &Dataset) -> Result<(Vec<ContrastiveScan>, usize)> {
    let teacher = init_teacher::<f32>(&cfg.teacher, data.num_classes, cfg.encoder.dim)?;
    let mut out = Vec::new();
    let mut skipped = 0;
    for (index, scan) in data.scans.iter().enumerate().filter(|(_, s)| s.split == Split::Train) {
        let (image, superpixels) = scan
            .camera
            .as_ref()
            .ok_or_else(|| config_error(format!("train scan `{}` has no camera pairing", scan.id)))?;
        let coords = project_to_image(&scan.cloud, &data.camera);
        let partition = build_superpoints(&coords, image, superpixels, cfg.depth_tolerance);
        if partition.len() < 2 {
            skipped += 1;
            continue;
        }
        let q = teacher_features(image, &teacher, superpixels, &cfg.teacher)?;
        let mut rows = Vec::with_capacity(partition.len() * q.cols());
        for &sp in &partition.superpixel {
            rows.extend_from_slice(q.row(sp as usize));
        }
        let targets = Tensor::matrix(partition.len(), q.cols(), rows)?;
        out.push(ContrastiveScan {
            index,
            cloud: scan.cloud.unlabeled(),
            partition,
            targets,
        });
    }
    Ok((out, skipped))
}

fn views_of(cloud: &PointCloud, data: &Dataset, cfg: &EncoderConfig) -> Result<Views> {
    Ok(Views::build(cloud, &data.sensor, cfg)?)
}

/// Augmented copy of `cloud` (or the cloud itself when augmentation is off).
fn view_cloud(cfg: &RunConfig, cloud: &PointCloud, seed: u64) -> PointCloud {
    if cfg.augment {
        augment(cloud, seed).0
    } else {
        cloud.clone()
    }
}

fn add_grads(acc: &mut Option<Gradients<f32>>, g: Gradients<f32>) {
    match acc {
        None => *acc = Some(g),
        Some(a) => {
            for (name, t) in g {
                let dst = a.get_mut(&name).expect("same parameters every step");
                for (x, y) in dst.data_mut().iter_mut().zip(t.data()) {
                    *x += *y;
                }
            }
        }
    }
}

/// Loss of one item: the scalar to minimise and named terms to log.
pub struct StepLoss {
    pub loss: Var,
    pub terms: Vec<(String, Var)>,
}

type EpochHook<'a> = &'a mut dyn FnMut(&ParameterStore<f32>, usize, &mut TrainLog) -> Result<()>;

/// Runs `epochs` passes over `items` in order, one optimiser step per batch.
/// `build` returns `None` for items that contribute nothing; `after_epoch`
/// sees the parameters at the end of every epoch.
#[allow(clippy::too_many_arguments)]
fn train<F>(
    cfg: &RunConfig,
    stage: &str,
    store: &mut ParameterStore<f32>,
    items: usize,
    epochs: usize,
    peak_lr: &dyn Fn(&str) -> f64,
    log: &mut TrainLog,
    after_epoch: EpochHook<'_>,
    mut build: F,
) -> Result<()>
where
    F: FnMut(&mut Graph<f32>, &ParameterStore<f32>, usize, usize) -> Result<Option<StepLoss>>,
{
    if items == 0 || epochs == 0 {
        return Ok(());
    }
    let batches = items.div_ceil(cfg.batch_size);
    let schedule = OneCycle::new(epochs * batches);
    let mut opt = AdamW::new(cfg.optimizer);
    let mut step = 0;
    for epoch in 0..epochs {
        let mut epoch_sum = 0.0;
        let mut epoch_n = 0usize;
        for b in 0..batches {
            let mut acc: Option<Gradients<f32>> = None;
            let mut count = 0usize;
            let mut terms: Vec<(String, f64)> = Vec::new();
            for item in (b * cfg.batch_size)..((b + 1) * cfg.batch_size).min(items) {
                let mut g = Graph::new(true, seed_of(cfg.seed, &[rng::tag(stage), epoch as u64, item as u64]));
                let Some(l) = build(&mut g, store, epoch, item)? else {
                    continue;
                };
                add_grads(&mut acc, g.backward(l.loss)?);
                count += 1;
                let value = g.scalar(l.loss);
                epoch_sum += value;
                epoch_n += 1;
                for (k, (name, v)) in l.terms.iter().enumerate() {
                    if terms.len() <= k {
                        terms.push((name.clone(), 0.0));
                    }
                    terms[k].1 += g.scalar(*v);
                }
                if l.terms.is_empty() {
                    if terms.is_empty() {
                        terms.push(("loss".into(), 0.0));
                    }
                    terms[0].1 += value;
                }
            }
            let Some(mut grads) = acc else { continue };
            let inv = 1.0 / count as f32;
            for t in grads.values_mut() {
                for x in t.data_mut() {
                    *x *= inv;
                }
            }
            opt.step(store, &grads, &|name| schedule.lr(peak_lr(name), step))?;
            for (name, total) in terms {
                log.push(step, stage, &name, total / count as f64);
            }
            step += 1;
        }
        if epoch_n > 0 {
            log.push_epoch(stage, epoch, epoch_sum / epoch_n as f64);
        }
        after_epoch(store, epoch, log)?;
    }
    Ok(())
}

/// Fresh parameters of one representation, seeded by `(seed, repr)`.
pub fn init_encoder(cfg: &RunConfig, repr: Representation, prefix: &str) -> Result<ParameterStore<f32>> {
    let mut store = ParameterStore::new();
    let mut r = rng::for_purpose(cfg.seed, &format!("init.{}", repr.name()));
    Encoder::with_prefix(repr, prefix).init(&mut store, &cfg.encoder, &mut r)?;
    Ok(store)
}

pub struct Stage1Output {
    /// Range, voxel and point parameters, in that order.
    pub stores: [ParameterStore<f32>; 3],
    pub log: TrainLog,
    pub skipped: usize,
}

/// Image-to-LiDAR distillation of each representation independently.
pub fn stage1_pretrain(cfg: &RunConfig, data: &Dataset) -> Result<Stage1Output> {
    let (scans, skipped) = prepare_contrastive(cfg, data)?;
    let mut log = TrainLog::default();
    let mut stores = Vec::with_capacity(3);
    for repr in Representation::ALL {
        let enc = Encoder::new(repr);
        let mut store = init_encoder(cfg, repr, repr.name())?;
        store.set_trainable(&format!("{repr}.cls."), false);
        let stage = format!("pretrain.{repr}");
        let peak = cfg.lr.pretrain;
        train(
            cfg,
            &stage,
            &mut store,
            scans.len(),
            cfg.epochs.pretrain,
            &|_| peak,
            &mut log,
            &mut |_, _, _| Ok(()),
            |g, p, epoch, item| {
                let s = &scans[item];
                let cloud = view_cloud(
                    cfg,
                    &s.cloud,
                    seed_of(cfg.seed, &[rng::tag(&stage), epoch as u64, item as u64]),
                );
                let views = views_of(&cloud, data, &cfg.encoder)?;
                let e = enc.point_head(g, p, &cloud, &views, &cfg.encoder, Head::Embed)?;
                let k = group_mean(g, e, &s.partition)?;
                let q = g.constant(s.targets.clone())?;
                let loss = info_nce(g, k, q, cfg.temperature, cfg.contrastive_denominator)?;
                Ok(Some(StepLoss {
                    loss,
                    terms: vec![("info_nce".into(), loss)],
                }))
            },
        )?;
        store.set_trainable("", true);
        stores.push(store);
    }
    let stores: [ParameterStore<f32>; 3] = stores.try_into().map_err(|_| Error::format("three experts"))?;
    Ok(Stage1Output { stores, log, skipped })
}

pub struct Stage2Output {
    /// Student parameters under `student.` plus the gate under `cml.moe.`.
    pub store: ParameterStore<f32>,
    pub student: Representation,
    pub log: TrainLog,
    /// Clean (noise-free) gate scores of every training scan after training.
    pub gates: Vec<(usize, Vec<[f64; 3]>)>,
}

fn expert_store(cfg: &RunConfig, experts: &[ParameterStore<f32>; 3]) -> Result<ParameterStore<f32>> {
    let mut store = ParameterStore::new();
    for e in experts {
        store.extend(e)?;
    }
    store.set_trainable("", !cfg.freeze_experts);
    for repr in Representation::ALL {
        store.set_trainable(&format!("{repr}.cls."), false);
    }
    Ok(store)
}

/// Contrastive mixture learning of one student representation against the
/// gated mixture of the three experts.
pub fn stage2_cml(
    cfg: &RunConfig,
    data: &Dataset,
    experts: &[ParameterStore<f32>; 3],
    student: Representation,
) -> Result<Stage2Output> {
    let (scans, _) = prepare_contrastive(cfg, data)?;
    let mut store = expert_store(cfg, experts)?;
    let mut own = experts[student.index()].subset_renamed(&format!("{student}."), &format!("{STUDENT}."))?;
    own.set_trainable("", true);
    own.set_trainable(&format!("{STUDENT}.cls."), false);
    store.extend(&own)?;
    let mut r = rng::for_purpose(cfg.seed, &format!("init.{CML_MOE}.{student}"));
    init_moe(&mut store, CML_MOE, cfg.encoder.dim, &mut r)?;

    let student_enc = Encoder::with_prefix(student, STUDENT);
    let stage = format!("cml.{student}");
    let mut log = TrainLog::default();
    let peak = cfg.lr.cml;
    train(
        cfg,
        &stage,
        &mut store,
        scans.len(),
        cfg.epochs.cml,
        &|_| peak,
        &mut log,
        &mut |_, _, _| Ok(()),
        |g, p, epoch, item| {
            let s = &scans[item];
            let base = seed_of(cfg.seed, &[rng::tag(&stage), epoch as u64, item as u64]);
            let mut experts_out = Vec::with_capacity(3);
            for repr in Representation::ALL {
                let cloud = view_cloud(cfg, &s.cloud, rng::derive(base, repr.index() as u64));
                let views = views_of(&cloud, data, &cfg.encoder)?;
                experts_out.push(Encoder::new(repr).point_head(g, p, &cloud, &views, &cfg.encoder, Head::Embed)?);
            }
            let mix = moe_fuse(
                g,
                p,
                CML_MOE,
                [experts_out[0], experts_out[1], experts_out[2]],
                rng::derive(base, 7),
            )?;
            let k_moe = group_mean(g, mix.output, &s.partition)?;
            let cloud = view_cloud(cfg, &s.cloud, rng::derive(base, 3));
            let views = views_of(&cloud, data, &cfg.encoder)?;
            let e = student_enc.point_head(g, p, &cloud, &views, &cfg.encoder, Head::Embed)?;
            let k = group_mean(g, e, &s.partition)?;
            let loss = info_nce(g, k, k_moe, cfg.temperature, cfg.contrastive_denominator)?;
            Ok(Some(StepLoss {
                loss,
                terms: vec![("info_nce".into(), loss)],
            }))
        },
    )?;

    let mut gates = Vec::with_capacity(scans.len());
    for s in &scans {
        let mut g = Graph::<f32>::new(false, 0);
        let views = views_of(&s.cloud, data, &cfg.encoder)?;
        let mut outs = Vec::with_capacity(3);
        for repr in Representation::ALL {
            outs.push(Encoder::new(repr).point_head(&mut g, &store, &s.cloud, &views, &cfg.encoder, Head::Embed)?);
        }
        let mix = moe_fuse(&mut g, &store, CML_MOE, [outs[0], outs[1], outs[2]], 0)?;
        gates.push((s.index, gate_scores(&g, mix.gates)));
    }

    let mut out = store.subset_renamed(&format!("{STUDENT}."), &format!("{STUDENT}."))?;
    out.extend(&store.subset_renamed(&format!("{CML_MOE}."), &format!("{CML_MOE}."))?)?;
    out.set_trainable("", true);
    Ok(Stage2Output {
        store: out,
        student,
        log,
        gates,
    })
}

/// A CML student's backbone renamed back to its representation prefix.
pub fn student_backbone(cml: &Stage2Output) -> Result<ParameterStore<f32>> {
    Ok(cml
        .store
        .subset_renamed(&format!("{STUDENT}."), &format!("{}.", cml.student))?)
}

/// Labels a supervised stage may read, or `None` for unannotated scans.
fn supervised_labels(scan: &Scan) -> Option<Vec<i32>> {
    (scan.annotated && scan.cloud.points.iter().any(|p| p.label >= 0)).then(|| scan.cloud.labels())
}

/// Per-point outputs of the full segmentation model on one cloud.
pub struct SmsForward {
    /// Range logits per cell, voxel logits per voxel, point logits per point.
    pub container: [Var; 3],
    /// The same logits gathered to the points.
    pub points: [Var; 3],
    pub fused: Var,
    pub gates: Var,
}

pub fn sms_forward<T: Real>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    cfg: &RunConfig,
    cloud: &PointCloud,
    views: &Views,
    zeta: bool,
    seed: u64,
) -> Result<SmsForward> {
    let mut container = Vec::with_capacity(3);
    let mut points = Vec::with_capacity(3);
    for repr in Representation::ALL {
        let enc = Encoder::new(repr);
        let c = enc.container_head(g, store, cloud, views, &cfg.encoder, Head::Logits)?;
        points.push(enc.to_points(g, c, views)?);
        container.push(c);
    }
    let mix = moe_fuse_logits(g, store, SMS_MOE, [points[0], points[1], points[2]], zeta, seed)?;
    Ok(SmsForward {
        container: [container[0], container[1], container[2]],
        points: [points[0], points[1], points[2]],
        fused: mix.output,
        gates: mix.gates,
    })
}

pub struct SmsModel {
    pub store: ParameterStore<f32>,
    pub log: TrainLog,
}

/// Fresh, pretrained or CML-student backbones for the segmentation stage.
pub fn sms_backbones(
    cfg: &RunConfig,
    stage1: Option<&Stage1Output>,
    students: &[Stage2Output],
) -> Result<[ParameterStore<f32>; 3]> {
    let mut out = Vec::with_capacity(3);
    for repr in Representation::ALL {
        let store = match cfg.sms_init {
            SmsInit::Random => init_encoder(cfg, repr, repr.name())?,
            SmsInit::Pretrained => stage1
                .ok_or_else(|| config_error("sms_init = pretrained needs stage-1 checkpoints"))?
                .stores[repr.index()]
            .clone(),
            SmsInit::CmlStudents => match students.iter().find(|s| s.student == repr) {
                Some(s) => student_backbone(s)?,
                None => stage1
                    .ok_or_else(|| config_error(format!("no CML student or stage-1 checkpoint for {repr}")))?
                    .stores[repr.index()]
                .clone(),
            },
        };
        out.push(store);
    }
    out.try_into().map_err(|_| Error::format("three backbones"))
}

/// Supervised fine-tuning of the three backbones with fused logits.
pub fn stage3_sms(cfg: &RunConfig, data: &Dataset, backbones: &[ParameterStore<f32>; 3]) -> Result<SmsModel> {
    let labeled: Vec<(usize, Vec<i32>)> = data
        .scans
        .iter()
        .enumerate()
        .filter(|(_, s)| s.split == Split::Train)
        .filter_map(|(i, s)| supervised_labels(s).map(|l| (i, l)))
        .collect();
    if labeled.is_empty() {
        return Err(config_error("no annotated training scans"));
    }
    let mut store = ParameterStore::new();
    for b in backbones {
        store.extend(b)?;
    }
    store.set_trainable("", true);
    for repr in Representation::ALL {
        store.set_trainable(&format!("{repr}.head."), false);
    }
    let mut r = rng::for_purpose(cfg.seed, &format!("init.{SMS_MOE}"));
    init_moe(&mut store, SMS_MOE, cfg.encoder.num_classes, &mut r)?;

    let (lr_backbone, lr_other) = (cfg.lr.sms_backbone, cfg.lr.sms_other);
    let peak = move |name: &str| {
        if name.starts_with(SMS_MOE) || name.contains(".cls.") {
            lr_other
        } else {
            lr_backbone
        }
    };
    let stage = "sms";
    let mut log = TrainLog::default();
    let epochs = cfg.epochs.sms;
    let items = labeled.len();
    let val: Vec<(usize, PointCloud)> = split_clouds(data, Split::Val)
        .into_iter()
        .filter(|(_, c)| c.points.iter().any(|p| p.label >= 0))
        .collect();
    // noise-free validation after every epoch; skipped when nothing is labelled
    let mut validate = |p: &ParameterStore<f32>, epoch: usize, log: &mut TrainLog| -> Result<()> {
        if val.is_empty() {
            return Ok(());
        }
        let e = evaluate_clouds(cfg, data, p, &val)?;
        log.push(epoch, VAL_STAGE, "miou_fused", e.fused.miou);
        for (repr, r) in Representation::ALL.iter().zip(&e.single) {
            log.push(epoch, VAL_STAGE, &format!("miou_{repr}"), r.miou);
        }
        Ok(())
    };
    train(
        cfg,
        stage,
        &mut store,
        items,
        epochs,
        &peak,
        &mut log,
        &mut validate,
        |g, p, epoch, item| {
            let (idx, labels) = &labeled[item];
            let scan = &data.scans[*idx];
            let base = seed_of(cfg.seed, &[rng::tag(stage), epoch as u64, item as u64]);
            let mut cloud = view_cloud(cfg, &scan.cloud, base);
            for (pt, &l) in cloud.points.iter_mut().zip(labels) {
                pt.label = l;
            }
            let views = views_of(&cloud, data, &cfg.encoder)?;
            let fwd = sms_forward(g, p, cfg, &cloud, &views, true, rng::derive(base, 7))?;
            let range_labels = views.range.project_labels(labels);
            let voxel_labels = project_labels_voxel(&views.voxels, labels);
            let inputs = SmsInputs {
                range: (fwd.container[0], &range_labels),
                voxel: (fwd.container[1], &voxel_labels),
                point: fwd.container[2],
                fused: fwd.fused,
                point_labels: labels,
            };
            let l = sms_total(g, &inputs, &cfg.sms_weights)?;
            Ok(Some(StepLoss {
                loss: l.total,
                terms: l.terms,
            }))
        },
    )?;
    Ok(SmsModel { store, log })
}

fn argmax_rows(t: &Tensor<f32>) -> Vec<i32> {
    (0..t.rows())
        .map(|r| {
            let row = t.row(r);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best as i32
        })
        .collect()
}

/// Per-point predictions and gates of one scan.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanPrediction {
    pub scan: usize,
    pub fused: Vec<i32>,
    /// Range, voxel and point branch predictions.
    pub single: [Vec<i32>; 3],
    pub gates: Vec<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub fused: MetricReport,
    pub single: [MetricReport; 3],
    pub predictions: Vec<ScanPrediction>,
}

pub fn predict_scan(
    cfg: &RunConfig,
    data: &Dataset,
    model: &ParameterStore<f32>,
    cloud: &PointCloud,
    scan: usize,
) -> Result<ScanPrediction> {
    let mut g = Graph::<f32>::new(false, 0);
    let views = views_of(cloud, data, &cfg.encoder)?;
    let fwd = sms_forward(&mut g, model, cfg, cloud, &views, false, 0)?;
    Ok(ScanPrediction {
        scan,
        fused: argmax_rows(g.value(fwd.fused)),
        single: fwd.points.map(|v| argmax_rows(g.value(v))),
        gates: gate_scores(&g, fwd.gates),
    })
}

/// Noise-free evaluation of the fused and per-branch predictions on `clouds`.
pub fn evaluate_clouds(
    cfg: &RunConfig,
    data: &Dataset,
    model: &ParameterStore<f32>,
    clouds: &[(usize, PointCloud)],
) -> Result<Evaluation> {
    if clouds.is_empty() {
        return Err(config_error("nothing to evaluate"));
    }
    let mut predictions = Vec::with_capacity(clouds.len());
    let mut labels = Vec::new();
    for (scan, cloud) in clouds {
        if cloud.is_empty() {
            return Err(config_error(format!("scan {scan} has no points left to evaluate")));
        }
        predictions.push(predict_scan(cfg, data, model, cloud, *scan)?);
        labels.extend(cloud.labels());
    }
    let c = cfg.encoder.num_classes;
    let cat = |f: &dyn Fn(&ScanPrediction) -> &Vec<i32>| -> Vec<i32> {
        predictions.iter().flat_map(|p| f(p).iter().copied()).collect()
    };
    let fused = compute_miou(&cat(&|p| &p.fused), &labels, c)?;
    let single = [
        compute_miou(&cat(&|p| &p.single[0]), &labels, c)?,
        compute_miou(&cat(&|p| &p.single[1]), &labels, c)?,
        compute_miou(&cat(&|p| &p.single[2]), &labels, c)?,
    ];
    Ok(Evaluation {
        fused,
        single,
        predictions,
    })
}

pub fn split_clouds(data: &Dataset, split: Split) -> Vec<(usize, PointCloud)> {
    data.scans
        .iter()
        .enumerate()
        .filter(|(_, s)| s.split == split)
        .map(|(i, s)| (i, s.cloud.clone()))
        .collect()
}

pub fn evaluate(cfg: &RunConfig, data: &Dataset, model: &ParameterStore<f32>, split: Split) -> Result<Evaluation> {
    evaluate_clouds(cfg, data, model, &split_clouds(data, split))
}

pub struct ProbeOutput {
    pub probe: ParameterStore<f32>,
    pub report: MetricReport,
    pub log: TrainLog,
}

/// Trains a linear `D → C` layer on frozen per-point embeddings of
/// `backbone` (parameters under the representation's own prefix).
pub fn linear_probe(
    cfg: &RunConfig,
    data: &Dataset,
    backbone: &ParameterStore<f32>,
    repr: Representation,
) -> Result<ProbeOutput> {
    let mut frozen = backbone.clone();
    frozen.freeze_all();
    let enc = Encoder::new(repr);
    let embed = |cloud: &PointCloud| -> Result<Tensor<f32>> {
        let mut g = Graph::<f32>::new(false, 0);
        let views = views_of(cloud, data, &cfg.encoder)?;
        let e = enc.point_head(&mut g, &frozen, cloud, &views, &cfg.encoder, Head::Embed)?;
        Ok(g.value(e).clone())
    };
    let mut train_set = Vec::new();
    for s in data.split(Split::Train) {
        if let Some(labels) = supervised_labels(s) {
            train_set.push((embed(&s.cloud)?, labels));
        }
    }
    if train_set.is_empty() {
        return Err(config_error("no annotated training scans"));
    }
    let mut val_set = Vec::new();
    for s in data.split(Split::Val) {
        val_set.push((embed(&s.cloud)?, s.cloud.labels()));
    }

    let mut probe = ParameterStore::new();
    let mut r = rng::for_purpose(cfg.seed, &format!("init.{PROBE}.{repr}"));
    limoe_core::encoders::insert_linear(&mut probe, &mut r, PROBE, cfg.encoder.dim, cfg.encoder.num_classes)?;
    let mut log = TrainLog::default();
    let peak = cfg.lr.probe;
    let stage = format!("probe.{repr}");
    train(
        cfg,
        &stage,
        &mut probe,
        train_set.len(),
        cfg.epochs.probe,
        &|_| peak,
        &mut log,
        &mut |_, _, _| Ok(()),
        |g, p, _, item| {
            let (feats, labels) = &train_set[item];
            let x = g.constant(feats.clone())?;
            let y = limoe_core::encoders::apply_linear(g, p, PROBE, x)?;
            let loss = cross_entropy(g, y, labels)?;
            Ok(Some(StepLoss {
                loss,
                terms: vec![("cross_entropy".into(), loss)],
            }))
        },
    )?;

    let mut preds = Vec::new();
    let mut labels = Vec::new();
    for (feats, l) in &val_set {
        let mut g = Graph::<f32>::new(false, 0);
        let x = g.constant(feats.clone())?;
        let y = limoe_core::encoders::apply_linear(&mut g, &probe, PROBE, x)?;
        preds.extend(argmax_rows(g.value(y)));
        labels.extend_from_slice(l);
    }
    let report = compute_miou(&preds, &labels, cfg.encoder.num_classes)?;
    Ok(ProbeOutput { probe, report, log })
}

/// Validation scans under one corruption at one severity.
pub fn corrupted_split(
    data: &Dataset,
    split: Split,
    kind: Corruption,
    severity: Severity,
    seed: u64,
) -> Vec<(usize, PointCloud)> {
    split_clouds(data, split)
        .into_iter()
        .map(|(i, c)| {
            let s = seed_of(seed, &[rng::tag(kind.name()), u64::from(severity.level()), i as u64]);
            (i, corrupt(&c, kind, severity, s))
        })
        .collect()
}

pub struct Robustness {
    pub clean: f64,
    pub baseline_clean: f64,
    /// Fused mIoU per corruption at severities 1, 2 and 3.
    pub model: Vec<(String, [f64; 3])>,
    pub baseline: Vec<(String, [f64; 3])>,
    pub report: RobustnessReport,
}

/// Corruption grid on the validation split. The fused prediction is scored
/// against `baseline`, one single-representation branch of the same model.
pub fn robustness(
    cfg: &RunConfig,
    data: &Dataset,
    model: &ParameterStore<f32>,
    baseline: Representation,
) -> Result<Robustness> {
    let clean = evaluate(cfg, data, model, Split::Val)?;
    let mut fused = Vec::new();
    let mut base = Vec::new();
    for kind in Corruption::ALL {
        let mut f = [0.0; 3];
        let mut b = [0.0; 3];
        for level in 1..=3u8 {
            let clouds = corrupted_split(data, Split::Val, kind, Severity::new(level)?, cfg.seed);
            let e = evaluate_clouds(cfg, data, model, &clouds)?;
            f[usize::from(level - 1)] = e.fused.miou;
            b[usize::from(level - 1)] = e.single[baseline.index()].miou;
        }
        fused.push((kind.name().to_string(), f));
        base.push((kind.name().to_string(), b));
    }
    let report = compute_mce_mrr(&fused, &base, clean.fused.miou)?;
    Ok(Robustness {
        clean: clean.fused.miou,
        baseline_clean: clean.single[baseline.index()].miou,
        model: fused,
        baseline: base,
        report,
    })
}
