//! The `limoe` command line.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use limoe_core::datagen::{corrupt, Corruption, Severity};
use limoe_core::encoders::{Encoder, Head, Representation, Views};
use limoe_core::metrics::{compute_miou, cosine_map, route_stats, RouteAxis, DEFAULT_DISTANCE_EDGES};
use limoe_core::moe::init_moe;
use limoe_core::nn::{Graph, ParameterStore};
use limoe_core::rng;

use crate::checkpoint::Checkpoint;
use crate::config::{DataConfig, RunConfig, SmsInit, Split};
use crate::dataset::{render_scan, Dataset, SceneDocument};
use crate::error::{Error, Result};
use crate::log::TrainLog;
use crate::lpcd;
use crate::pipeline::{self, CML_MOE, SMS_MOE, STUDENT};
use crate::report::{self, write_text};

#[derive(Debug, Parser)]
#[command(
    name = "limoe",
    version,
    about = "Multi-representation LiDAR pretraining and segmentation",
    arg_required_else_help = true
)]
pub struct Cli {
    /// Run configuration (JSON); defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configuration's run seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset manifest; falls back to the config, then to generating the recipe in memory.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic dataset, or render one scene document.
    Datagen {
        /// Scene document (primitives, sensor and camera keys) to render as a single scan.
        #[arg(long)]
        scene: Option<PathBuf>,
        /// Also write CSV mirrors of the point clouds.
        #[arg(long)]
        csv: bool,
    },
    /// Stage 1: image-to-LiDAR distillation of all three representations.
    Pretrain(DataArgs),
    /// Stage 2: contrastive mixture learning into one student.
    Cml {
        #[command(flatten)]
        data: DataArgs,
        /// Directory holding the stage-1 checkpoints (default: --out).
        #[arg(long)]
        experts: Option<PathBuf>,
        #[arg(long, value_parser = parse::<Representation>)]
        student: Option<Representation>,
    },
    /// Stage 3: supervised fine-tuning with fused logits.
    Sms {
        #[command(flatten)]
        data: DataArgs,
        /// Directory holding stage-1 and stage-2 checkpoints (default: --out).
        #[arg(long)]
        checkpoints: Option<PathBuf>,
    },
    /// Linear probe on a frozen backbone.
    Probe {
        #[command(flatten)]
        data: DataArgs,
        /// Encoder checkpoint; a fresh backbone is probed when omitted.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Representation of a fresh backbone (checkpoints record their own).
        #[arg(long, value_parser = parse::<Representation>)]
        repr: Option<Representation>,
    },
    /// Segmentation metrics of a model or of a predictions file.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        /// Segmentation checkpoint (from `sms`).
        #[arg(long)]
        model: Option<PathBuf>,
        /// CSV `point_id,prediction,label`.
        #[arg(long, conflicts_with = "model")]
        predictions: Option<PathBuf>,
        #[arg(long, default_value = "val", value_parser = parse_split)]
        split: Split,
    },
    /// Corrupt one cloud, or score a model over the corruption grid.
    Corrupt {
        #[command(flatten)]
        data: DataArgs,
        /// Segmentation checkpoint to score.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Branch of the same model used as the CE baseline (default: the configured student).
        #[arg(long, value_parser = parse::<Representation>)]
        baseline: Option<Representation>,
        /// Point cloud to corrupt instead of scoring a model.
        #[arg(long, conflicts_with = "model")]
        input: Option<PathBuf>,
        #[arg(long, value_parser = parse::<Corruption>, requires = "input")]
        kind: Option<Corruption>,
        #[arg(long, default_value_t = 1, requires = "input")]
        severity: u8,
    },
    /// Expert-loading tables of per-point gates.
    RouteStats {
        /// CSV `point_id,alpha,beta,gamma` (default: gates.csv in --out).
        #[arg(long)]
        gates: Option<PathBuf>,
        /// Cloud the gates belong to (default: routed.lpcd in --out).
        #[arg(long)]
        cloud: Option<PathBuf>,
        /// `beam`, `distance` or `class`; all three when omitted.
        #[arg(long, value_parser = parse::<RouteAxis>)]
        axis: Vec<RouteAxis>,
        /// Comma-separated distance bin edges in metres.
        #[arg(long)]
        edges: Option<String>,
    },
    /// Cosine similarity of learned point features to a query point.
    CosineMap {
        /// Encoder checkpoint.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long, default_value_t = 0)]
        query: usize,
    },
    /// Charts and a summary of the results in a directory.
    Report {
        /// Directory to summarise (default: --out).
        #[arg(long = "in")]
        input: Option<PathBuf>,
    },
}

fn parse<T: std::str::FromStr<Err = limoe_core::Error>>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|e: limoe_core::Error| e.to_string())
}

fn parse_split(s: &str) -> std::result::Result<Split, String> {
    match s {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        other => Err(format!("unknown split `{other}`")),
    }
}

/// Parses `args` (program name first) and runs the command; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
}

impl Ctx {
    fn data(&self, args: &DataArgs) -> Result<Dataset> {
        match args.dataset.as_ref().or(self.cfg.dataset.as_ref()) {
            Some(path) => Dataset::load(path),
            None => Dataset::generate(&self.cfg.data),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write(&self, name: &str, text: &str) -> Result<()> {
        write_text(&self.path(name), text)
    }

    fn save(&self, name: &str, stage: &str, params: &ParameterStore<f32>, repr: Option<Representation>) -> Result<()> {
        let mut ck = Checkpoint::new(stage, self.cfg.digest(), self.cfg.seed, params.clone());
        if let Some(r) = repr {
            ck.metadata.insert("repr".into(), r.name().into());
        }
        ck.save(&self.path(name))
    }

    fn write_log(&self, name: &str, log: &TrainLog) -> Result<()> {
        self.write(&format!("log_{name}.csv"), &log.to_csv())?;
        self.write(&format!("epochs_{name}.csv"), &log.epochs_csv())
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    fs::create_dir_all(&cli.out).map_err(|e| Error::io(&cli.out, e))?;
    let ctx = Ctx {
        cfg,
        out: cli.out.clone(),
    };
    match &cli.command {
        Command::Datagen { scene, csv } => datagen(&ctx, scene.as_deref(), *csv),
        Command::Pretrain(data) => pretrain(&ctx, data),
        Command::Cml { data, experts, student } => cml(&ctx, data, experts.as_deref(), *student),
        Command::Sms { data, checkpoints } => sms(&ctx, data, checkpoints.as_deref()),
        Command::Probe { data, checkpoint, repr } => probe(&ctx, data, checkpoint.as_deref(), *repr),
        Command::Eval {
            data,
            model,
            predictions,
            split,
        } => eval(&ctx, data, model.as_deref(), predictions.as_deref(), *split),
        Command::Corrupt {
            data,
            model,
            baseline,
            input,
            kind,
            severity,
        } => match (input, model) {
            (Some(input), _) => corrupt_file(&ctx, input, *kind, *severity),
            (None, Some(model)) => robustness(&ctx, data, model, baseline.unwrap_or(ctx.cfg.student)),
            (None, None) => Err(Error::Usage("corrupt needs --model or --input".into())),
        },
        Command::RouteStats {
            gates,
            cloud,
            axis,
            edges,
        } => route(&ctx, gates.as_deref(), cloud.as_deref(), axis, edges.as_deref()),
        Command::CosineMap {
            checkpoint,
            cloud,
            query,
        } => cosine(&ctx, checkpoint, cloud, *query),
        Command::Report { input } => summary(input.as_deref().unwrap_or(&ctx.out)),
    }
}

fn datagen(ctx: &Ctx, scene: Option<&Path>, csv: bool) -> Result<()> {
    let data = match scene {
        Some(path) => {
            let doc = SceneDocument::load(path)?;
            let recipe = DataConfig {
                sensor: doc.sensor.clone(),
                camera: doc.camera.clone(),
                ..ctx.cfg.data.clone()
            };
            let scan = render_scan(&doc.scene(), &recipe, "scene_000".into(), Split::Val)?;
            Dataset {
                sensor: doc.sensor,
                camera: doc.camera,
                num_classes: doc.num_classes,
                scans: vec![scan],
            }
        }
        None => Dataset::generate(&ctx.cfg.data)?,
    };
    let manifest = data.save(&ctx.out, ctx.cfg.data.annotation_fraction)?;
    if csv {
        for s in &data.scans {
            lpcd::write_csv(&ctx.path(&format!("{}.csv", s.id)), &s.cloud)?;
        }
    }
    println!("wrote {} scans and {}", data.scans.len(), manifest.display());
    Ok(())
}

fn pretrain(ctx: &Ctx, args: &DataArgs) -> Result<()> {
    let data = ctx.data(args)?;
    let out = pipeline::stage1_pretrain(&ctx.cfg, &data)?;
    for repr in Representation::ALL {
        ctx.save(
            &format!("pretrain_{repr}.ckpt"),
            &format!("pretrain.{repr}"),
            &out.stores[repr.index()],
            Some(repr),
        )?;
    }
    ctx.write_log("pretrain", &out.log)?;
    println!("pretrained 3 encoders; {} scans skipped", out.skipped);
    Ok(())
}

fn load_encoder(ctx: &Ctx, path: &Path, repr: Representation) -> Result<ParameterStore<f32>> {
    let expected = pipeline::init_encoder(&ctx.cfg, repr, repr.name())?;
    Ok(Checkpoint::load_expecting(path, &expected)?.params)
}

fn load_experts(ctx: &Ctx, dir: &Path) -> Result<[ParameterStore<f32>; 3]> {
    let mut out = Vec::new();
    for repr in Representation::ALL {
        out.push(load_encoder(ctx, &dir.join(format!("pretrain_{repr}.ckpt")), repr)?);
    }
    out.try_into().map_err(|_| Error::format("three experts"))
}

/// Names and shapes of a stage-2 checkpoint for `student`.
fn cml_skeleton(ctx: &Ctx, student: Representation) -> Result<ParameterStore<f32>> {
    let mut store = pipeline::init_encoder(&ctx.cfg, student, STUDENT)?;
    init_moe(
        &mut store,
        CML_MOE,
        ctx.cfg.encoder.dim,
        &mut rng::for_purpose(0, "skeleton"),
    )?;
    Ok(store)
}

fn cml(ctx: &Ctx, args: &DataArgs, experts: Option<&Path>, student: Option<Representation>) -> Result<()> {
    let data = ctx.data(args)?;
    let experts = load_experts(ctx, experts.unwrap_or(&ctx.out))?;
    let student = student.unwrap_or(ctx.cfg.student);
    let out = pipeline::stage2_cml(&ctx.cfg, &data, &experts, student)?;
    ctx.save(
        &format!("cml_{student}.ckpt"),
        &format!("cml.{student}"),
        &out.store,
        Some(student),
    )?;
    ctx.write_log(&format!("cml_{student}"), &out.log)?;
    let (cloud, gates) = crate::run::routed_points(&data, &out);
    ctx.write("gates.csv", &report::gates_csv(&gates))?;
    lpcd::write(&ctx.path("routed.lpcd"), &cloud)?;
    let tables = crate::run::route_tables(&data, &out)?;
    write_routes(ctx, &tables)?;
    println!("trained {student} student over {} routed points", cloud.len());
    Ok(())
}

fn write_routes(ctx: &Ctx, tables: &[limoe_core::metrics::RouteTable]) -> Result<()> {
    for t in tables {
        let name = t.axis.name();
        ctx.write(
            &format!("route_{name}.csv"),
            &report::route_csv(std::slice::from_ref(t)),
        )?;
        ctx.write(&format!("route_{name}.svg"), &report::route_svg(t))?;
    }
    if let Some(t) = tables.first() {
        let load = t.global_load();
        let mut s = String::from("expert,load,non_degenerate\n");
        for r in Representation::ALL {
            let l = load[r.index()];
            s.push_str(&format!("{r},{l},{}\n", l >= 0.05));
        }
        ctx.write("global_load.csv", &s)?;
    }
    Ok(())
}

fn sms(ctx: &Ctx, args: &DataArgs, dir: Option<&Path>) -> Result<()> {
    let data = ctx.data(args)?;
    let dir = dir.unwrap_or(&ctx.out);
    let mut backbones = Vec::new();
    for repr in Representation::ALL {
        let pretrained = dir.join(format!("pretrain_{repr}.ckpt"));
        let student = dir.join(format!("cml_{repr}.ckpt"));
        let store = match ctx.cfg.sms_init {
            SmsInit::Random => pipeline::init_encoder(&ctx.cfg, repr, repr.name())?,
            SmsInit::Pretrained => load_encoder(ctx, &pretrained, repr)?,
            SmsInit::CmlStudents if student.exists() => {
                let ck = Checkpoint::load_expecting(&student, &cml_skeleton(ctx, repr)?)?;
                ck.params.subset_renamed(&format!("{STUDENT}."), &format!("{repr}."))?
            }
            SmsInit::CmlStudents => load_encoder(ctx, &pretrained, repr)?,
        };
        backbones.push(store);
    }
    let backbones: [ParameterStore<f32>; 3] = backbones.try_into().map_err(|_| Error::format("three backbones"))?;
    let model = pipeline::stage3_sms(&ctx.cfg, &data, &backbones)?;
    ctx.save("sms.ckpt", "sms", &model.store, None)?;
    ctx.write_log("sms", &model.log)?;
    let e = pipeline::evaluate(&ctx.cfg, &data, &model.store, Split::Val)?;
    write_evaluation(ctx, &e, &data, Split::Val)?;
    println!("val mIoU {:.2}", e.fused.miou);
    Ok(())
}

fn sms_skeleton(ctx: &Ctx) -> Result<ParameterStore<f32>> {
    let mut store = ParameterStore::new();
    for repr in Representation::ALL {
        store.extend(&pipeline::init_encoder(&ctx.cfg, repr, repr.name())?)?;
    }
    init_moe(
        &mut store,
        SMS_MOE,
        ctx.cfg.encoder.num_classes,
        &mut rng::for_purpose(0, "skeleton"),
    )?;
    Ok(store)
}

fn write_evaluation(ctx: &Ctx, e: &pipeline::Evaluation, data: &Dataset, split: Split) -> Result<()> {
    ctx.write("metrics.csv", &report::metrics_csv(&e.fused))?;
    for repr in Representation::ALL {
        ctx.write(
            &format!("metrics_{repr}.csv"),
            &report::metrics_csv(&e.single[repr.index()]),
        )?;
    }
    let preds: Vec<i32> = e.predictions.iter().flat_map(|p| p.fused.iter().copied()).collect();
    let labels: Vec<i32> = data.split(split).flat_map(|s| s.cloud.labels()).collect();
    ctx.write("predictions.csv", &report::predictions_csv(&preds, &labels))
}

fn probe(ctx: &Ctx, args: &DataArgs, checkpoint: Option<&Path>, repr: Option<Representation>) -> Result<()> {
    let data = ctx.data(args)?;
    let (backbone, repr) = match checkpoint {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            let recorded = ck
                .metadata
                .get("repr")
                .map(|r| r.parse::<Representation>())
                .transpose()?;
            let repr = recorded
                .or(repr)
                .ok_or_else(|| Error::format(format!("{}: no representation recorded", path.display())))?;
            let params = if ck.params.iter().any(|p| p.name.starts_with(&format!("{STUDENT}."))) {
                ck.check_against(&cml_skeleton(ctx, repr)?)?;
                ck.params.subset_renamed(&format!("{STUDENT}."), &format!("{repr}."))?
            } else {
                ck.check_against(&pipeline::init_encoder(&ctx.cfg, repr, repr.name())?)?;
                ck.params
            };
            (params, repr)
        }
        None => {
            let repr = repr.unwrap_or(ctx.cfg.student);
            (pipeline::init_encoder(&ctx.cfg, repr, repr.name())?, repr)
        }
    };
    let out = pipeline::linear_probe(&ctx.cfg, &data, &backbone, repr)?;
    ctx.save(
        &format!("probe_{repr}.ckpt"),
        &format!("probe.{repr}"),
        &out.probe,
        Some(repr),
    )?;
    ctx.write(&format!("metrics_probe_{repr}.csv"), &report::metrics_csv(&out.report))?;
    ctx.write_log(&format!("probe_{repr}"), &out.log)?;
    println!("probe val mIoU {:.2}", out.report.miou);
    Ok(())
}

fn eval(ctx: &Ctx, args: &DataArgs, model: Option<&Path>, predictions: Option<&Path>, split: Split) -> Result<()> {
    match (model, predictions) {
        (_, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let (p, l) = report::read_predictions_csv(&text)?;
            let r = compute_miou(&p, &l, ctx.cfg.encoder.num_classes)?;
            ctx.write("metrics.csv", &report::metrics_csv(&r))?;
            println!("mIoU {:.1}", r.miou);
            Ok(())
        }
        (Some(path), None) => {
            let data = ctx.data(args)?;
            let store = Checkpoint::load_expecting(path, &sms_skeleton(ctx)?)?.params;
            let e = pipeline::evaluate(&ctx.cfg, &data, &store, split)?;
            write_evaluation(ctx, &e, &data, split)?;
            let mut gates = Vec::new();
            for p in &e.predictions {
                gates.extend_from_slice(&p.gates);
            }
            ctx.write("sms_gates.csv", &report::gates_csv(&gates))?;
            println!("mIoU {:.1}", e.fused.miou);
            Ok(())
        }
        (None, None) => Err(Error::Usage("eval needs --model or --predictions".into())),
    }
}

fn corrupt_file(ctx: &Ctx, input: &Path, kind: Option<Corruption>, severity: u8) -> Result<()> {
    let kind = kind.ok_or_else(|| Error::Usage("--input needs --kind".into()))?;
    let severity = Severity::new(severity)?;
    let cloud = lpcd::read_any(input)?;
    let out = corrupt(&cloud, kind, severity, rng::derive(ctx.cfg.seed, rng::tag(kind.name())));
    let name = format!("{}_{}.lpcd", kind.name(), severity.level());
    lpcd::write(&ctx.path(&name), &out)?;
    println!("kept {} of {} points", out.len(), cloud.len());
    Ok(())
}

fn robustness(ctx: &Ctx, args: &DataArgs, model: &Path, baseline: Representation) -> Result<()> {
    let data = ctx.data(args)?;
    let store = Checkpoint::load_expecting(model, &sms_skeleton(ctx)?)?.params;
    let r = pipeline::robustness(&ctx.cfg, &data, &store, baseline)?;
    ctx.write("robustness.csv", &report::robustness_csv(&r.report))?;
    let mut s = String::from("corruption,severity,miou,baseline_miou\n");
    s.push_str(&format!("clean,0,{},{}\n", r.clean, r.baseline_clean));
    for ((name, m), (_, b)) in r.model.iter().zip(&r.baseline) {
        for k in 0..3 {
            s.push_str(&format!("{name},{},{},{}\n", k + 1, m[k], b[k]));
        }
    }
    ctx.write("corruption_miou.csv", &s)?;
    println!("mCE {:.2} mRR {:.2}", r.report.mce, r.report.mrr);
    Ok(())
}

fn route(ctx: &Ctx, gates: Option<&Path>, cloud: Option<&Path>, axes: &[RouteAxis], edges: Option<&str>) -> Result<()> {
    let gates_path = gates.map(PathBuf::from).unwrap_or_else(|| ctx.path("gates.csv"));
    let cloud_path = cloud.map(PathBuf::from).unwrap_or_else(|| ctx.path("routed.lpcd"));
    let text = fs::read_to_string(&gates_path).map_err(|e| Error::io(&gates_path, e))?;
    let gates = report::read_gates_csv(&text)?;
    let cloud = lpcd::read_any(&cloud_path)?;
    let edges: Vec<f64> = match edges {
        Some(s) => s
            .split(',')
            .map(|v| {
                v.trim()
                    .parse()
                    .map_err(|_| Error::Usage(format!("bad distance edge `{v}`")))
            })
            .collect::<Result<_>>()?,
        None => DEFAULT_DISTANCE_EDGES.to_vec(),
    };
    let axes = if axes.is_empty() {
        vec![RouteAxis::Beam, RouteAxis::Distance, RouteAxis::Class]
    } else {
        axes.to_vec()
    };
    let mut tables = Vec::new();
    for axis in axes {
        tables.push(route_stats(&gates, &cloud, axis, &edges)?);
    }
    write_routes(ctx, &tables)?;
    print!("{}", report::route_csv(&tables));
    Ok(())
}

fn cosine(ctx: &Ctx, checkpoint: &Path, cloud_path: &Path, query: usize) -> Result<()> {
    let ck = Checkpoint::load(checkpoint)?;
    let repr: Representation = ck
        .metadata
        .get("repr")
        .ok_or_else(|| Error::format(format!("{}: not an encoder checkpoint", checkpoint.display())))?
        .parse()?;
    let prefix = if ck.params.iter().any(|p| p.name.starts_with(&format!("{STUDENT}."))) {
        STUDENT
    } else {
        repr.name()
    };
    let cloud = lpcd::read_any(cloud_path)?;
    let views = Views::build(&cloud, &ctx.cfg.data.sensor, &ctx.cfg.encoder)?;
    let mut g = Graph::<f32>::new(false, 0);
    let e = Encoder::with_prefix(repr, prefix).point_head(
        &mut g,
        &ck.params,
        &cloud,
        &views,
        &ctx.cfg.encoder,
        Head::Embed,
    )?;
    let map = cosine_map(g.value(e), query)?;
    ctx.write("cosine.csv", &report::cosine_csv(&map, &cloud))?;
    ctx.write(
        "cosine.svg",
        &report::scatter_svg(&format!("cosine similarity to point {query}"), &cloud, &map.similarity),
    )?;
    println!(
        "{} points, {} zero-norm rows",
        cloud.len(),
        map.zero_norm.iter().filter(|z| **z).count()
    );
    Ok(())
}

fn read_csv_table(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(String::from).collect())
        .collect())
}

/// Loss curves and IoU bars for every log and metrics file in `dir`, plus `summary.csv`.
fn summary(dir: &Path) -> Result<()> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    let mut rows = String::from("file,key,value\n");
    for name in &names {
        let path = dir.join(name);
        let stem = name.trim_end_matches(".csv");
        if stem.starts_with("epochs_") {
            let table = read_csv_table(&path)?;
            let mut stages: Vec<&str> = table.iter().filter_map(|r| r.first().map(String::as_str)).collect();
            stages.dedup();
            for s in stages {
                let bars: Vec<(String, f64)> = table
                    .iter()
                    .filter(|r| r.first().map(String::as_str) == Some(s) && r.len() == 3)
                    .filter_map(|r| r[2].parse().ok().map(|v| (format!("epoch {}", r[1]), v)))
                    .collect();
                if let (Some(first), Some(last)) = (bars.first(), bars.last()) {
                    rows.push_str(&format!(
                        "{name},{s}.first_epoch,{}\n{name},{s}.last_epoch,{}\n",
                        first.1, last.1
                    ));
                }
                write_text(
                    &dir.join(format!("loss_{}.svg", s.replace('.', "_"))),
                    &report::bar_svg(&format!("{s} loss per epoch"), &bars),
                )?;
            }
        } else if stem.starts_with("metrics") {
            let table = read_csv_table(&path)?;
            let bars: Vec<(String, f64)> = table
                .iter()
                .filter(|r| r.len() == 5 && r[0] != "miou")
                .filter_map(|r| r[4].parse().ok().map(|v| (format!("class {}", r[0]), v)))
                .collect();
            if let Some(m) = table.iter().find(|r| r.first().map(String::as_str) == Some("miou")) {
                rows.push_str(&format!("{name},miou,{}\n", m.get(4).map(String::as_str).unwrap_or("")));
            }
            write_text(
                &dir.join(format!("iou_{stem}.svg")),
                &report::bar_svg(&format!("{stem} IoU per class"), &bars),
            )?;
        } else if stem == "robustness" || stem == "global_load" {
            for r in read_csv_table(&path)? {
                if r.len() >= 2 {
                    rows.push_str(&format!("{name},{},{}\n", r[0], r[1..].join(";")));
                }
            }
        }
    }
    write_text(&dir.join("summary.csv"), &rows)?;
    print!("{rows}");
    Ok(())
}
