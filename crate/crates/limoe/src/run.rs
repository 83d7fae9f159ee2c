//! A complete three-stage run with probes, evaluation and routing tables.

use limoe_core::encoders::Representation;
use limoe_core::metrics::{route_stats, RouteAxis, RouteTable, DEFAULT_DISTANCE_EDGES};
use limoe_core::nn::ParameterStore;
use limoe_core::PointCloud;

use crate::config::{RunConfig, SmsInit, Split};
use crate::dataset::Dataset;
use crate::error::Result;
use crate::log::TrainLog;
use crate::pipeline::{
    evaluate, init_encoder, linear_probe, sms_backbones, stage1_pretrain, stage2_cml, stage3_sms, student_backbone,
    Evaluation, ProbeOutput, SmsModel, Stage1Output, Stage2Output,
};

pub struct RunOutput {
    pub stage1: Stage1Output,
    /// The configured student first, then any further students SMS needs.
    pub cml: Vec<Stage2Output>,
    pub sms: SmsModel,
    pub eval: Evaluation,
    /// Probe of the configured CML student.
    pub probe_cml: ProbeOutput,
    /// Probe of a freshly initialised backbone of the same representation.
    pub probe_random: ProbeOutput,
    /// Beam, distance and class tables of the student's mixture gates.
    pub routes: Vec<RouteTable>,
    pub log: TrainLog,
}

/// Concatenated training clouds and their gates, in scan order.
pub fn routed_points(data: &Dataset, cml: &Stage2Output) -> (PointCloud, Vec<[f64; 3]>) {
    let mut points = Vec::new();
    let mut gates = Vec::new();
    for (scan, g) in &cml.gates {
        points.extend(data.scans[*scan].cloud.points.iter().cloned());
        gates.extend_from_slice(g);
    }
    (PointCloud::new(points), gates)
}

pub fn route_tables(data: &Dataset, cml: &Stage2Output) -> Result<Vec<RouteTable>> {
    let (cloud, gates) = routed_points(data, cml);
    let mut out = Vec::new();
    for axis in [RouteAxis::Beam, RouteAxis::Distance, RouteAxis::Class] {
        out.push(route_stats(&gates, &cloud, axis, &DEFAULT_DISTANCE_EDGES)?);
    }
    Ok(out)
}

pub fn run_all(cfg: &RunConfig, data: &Dataset) -> Result<RunOutput> {
    cfg.validate()?;
    let mut log = TrainLog::default();
    let stage1 = stage1_pretrain(cfg, data)?;
    log.append(&stage1.log);

    let mut students = vec![cfg.student];
    if cfg.sms_init == SmsInit::CmlStudents {
        students.extend(Representation::ALL.into_iter().filter(|r| *r != cfg.student));
    }
    let mut cml = Vec::with_capacity(students.len());
    for s in students {
        let out = stage2_cml(cfg, data, &stage1.stores, s)?;
        log.append(&out.log);
        cml.push(out);
    }

    let backbones = sms_backbones(cfg, Some(&stage1), &cml)?;
    let sms = stage3_sms(cfg, data, &backbones)?;
    log.append(&sms.log);
    let eval = evaluate(cfg, data, &sms.store, Split::Val)?;

    let probe_cml = linear_probe(cfg, data, &student_backbone(&cml[0])?, cfg.student)?;
    log.append(&probe_cml.log);
    let random: ParameterStore<f32> = init_encoder(cfg, cfg.student, cfg.student.name())?;
    let probe_random = linear_probe(cfg, data, &random, cfg.student)?;
    let routes = route_tables(data, &cml[0])?;

    Ok(RunOutput {
        stage1,
        cml,
        sms,
        eval,
        probe_cml,
        probe_random,
        routes,
        log,
    })
}
