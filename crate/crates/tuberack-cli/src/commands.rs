//! Command implementations shared by the binary and integration tests.
//!
//! Exit-code contract: 0 success, 1 I/O or scenario validation, 2 planning
//! or registration exhausted, 3 recovery budget exhausted.

use crate::logln;
use crate::scenario::{Scenario, ScenarioError};
use serde::Serialize;
use std::path::Path;
use thiserror::Error;
use tuberack::perception::{
    crop_holes, rack_template, register_classifier, synth_cloud, ClassifierModel, RigidTransform,
    SensorParams,
};
use tuberack::seeding::substream;
use tuberack::simexec::{run_with_recovery, PerceptionBundle, Termination};
use tuberack::world::WorldModel;
use tuberack::{CombinedPlan, PlanTrace, PlannerSession};

#[derive(Debug, Error)]
pub enum CmdError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Planning(String),
    #[error("{0}")]
    Recovery(String),
}

impl CmdError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CmdError::Usage(_) => 1,
            CmdError::Planning(_) => 2,
            CmdError::Recovery(_) => 3,
        }
    }
}

impl From<ScenarioError> for CmdError {
    fn from(e: ScenarioError) -> Self {
        CmdError::Usage(e.to_string())
    }
}

impl From<std::io::Error> for CmdError {
    fn from(e: std::io::Error) -> Self {
        CmdError::Usage(format!("io: {e}"))
    }
}

fn write_trace(trace: &PlanTrace, path: Option<&Path>) -> Result<(), CmdError> {
    if let Some(p) = path {
        std::fs::write(p, trace.to_jsonl())?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct PlanSummary {
    pub seed: u64,
    pub steps: usize,
    pub trace_events: usize,
    pub plan: CombinedPlan,
}

pub fn cmd_plan(
    scenario: &Path,
    seed: Option<u64>,
    trace_out: Option<&Path>,
    out: Option<&Path>,
) -> Result<PlanSummary, CmdError> {
    let sc = Scenario::load(scenario)?;
    let seed = seed.unwrap_or(sc.seed);
    logln!("plan: scenario {} seed {seed}", scenario.display());
    let mut rng = substream(seed, "motion");
    let mut session = PlannerSession::new();
    let result = session.plan_combined(&sc.world, &sc.goal, &sc.cfg, &mut rng);
    write_trace(&session.trace, trace_out)?;
    let plan = result.map_err(|e| CmdError::Planning(e.to_string()))?;
    let summary = PlanSummary {
        seed,
        steps: plan.steps.len(),
        trace_events: session.trace.events.len(),
        plan,
    };
    if let Some(p) = out {
        std::fs::write(p, serde_json::to_string_pretty(&summary).expect("serializes"))?;
    }
    Ok(summary)
}

/// Synthesize a labeled capture of the ground-truth rack (rack 0, known
/// pose, scenario sensor model) and fit the hole classifier from it.
pub fn register_model(sc: &Scenario, seed: u64) -> Result<ClassifierModel, CmdError> {
    let layout = sc.world.layouts[0].clone();
    let reg_world = WorldModel {
        layouts: vec![layout.clone()],
        state: sc.ground_truth.clone(),
        table_z_mm: sc.world.table_z_mm,
        gripper: sc.world.gripper.clone(),
        tube_catalog: sc.world.tube_catalog.clone(),
    };
    let sp = SensorParams {
        seed: seed ^ 0x7265676973746572, // "register" sub-stream
        ..sc.sensor.clone()
    };
    let cloud = synth_cloud(&reg_world, &sp);
    let tf = RigidTransform::from_isometry(&layout.base_pose);
    let bins = crop_holes(&cloud, &tf, &layout, sc.perceive.z_cut_mm);
    register_classifier(&bins, &sc.ground_truth, &sc.world.tube_catalog)
        .map_err(|e| CmdError::Planning(format!("registration: {e}")))
}

pub fn cmd_register(
    scenario: &Path,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<ClassifierModel, CmdError> {
    let sc = Scenario::load(scenario)?;
    let seed = seed.unwrap_or(sc.seed);
    let model = register_model(&sc, seed)?;
    logln!("register: {} centroids", model.centroids.len());
    if let Some(p) = out {
        std::fs::write(p, serde_json::to_string_pretty(&model).expect("serializes"))?;
    }
    Ok(model)
}

#[derive(Debug, Serialize)]
pub struct ExecuteSummary {
    pub seed: u64,
    pub success: bool,
    pub replans_used: usize,
    pub termination: Termination,
    pub steps_executed: usize,
}

pub fn cmd_execute(
    scenario: &Path,
    seed: Option<u64>,
    trace_out: Option<&Path>,
    out: Option<&Path>,
) -> Result<ExecuteSummary, CmdError> {
    let sc = Scenario::load(scenario)?;
    let seed = seed.unwrap_or(sc.seed);
    logln!("execute: scenario {} seed {seed}", scenario.display());
    let bundle = PerceptionBundle {
        sensor: sc.sensor.clone(),
        model: register_model(&sc, seed)?,
        params: sc.perceive.clone(),
    };
    let result = run_with_recovery(
        &sc.world, &sc.goal, &sc.cfg, &sc.faults, &sc.recovery, &bundle, seed,
    );
    let (outcome, trace) = match result {
        Ok(pair) => pair,
        Err(e) => return Err(CmdError::Planning(format!("perception: {e}"))),
    };
    write_trace(&trace, trace_out)?;
    let summary = ExecuteSummary {
        seed,
        success: outcome.success,
        replans_used: outcome.replans_used,
        termination: outcome.termination,
        steps_executed: outcome.step_results.len(),
    };
    if let Some(p) = out {
        std::fs::write(p, serde_json::to_string_pretty(&summary).expect("serializes"))?;
    }
    match outcome.termination {
        Termination::Goal => Ok(summary),
        Termination::PlanningExhausted => {
            Err(CmdError::Planning("planning exhausted during execution".into()))
        }
        Termination::RecoveryBudgetExhausted => {
            Err(CmdError::Recovery("recovery budget exhausted".into()))
        }
    }
}

pub fn cmd_bench(
    scenario: &Path,
    seed: Option<u64>,
    lift_heights: &[f64],
    trials: usize,
    out: Option<&Path>,
) -> Result<crate::bench::BenchReport, CmdError> {
    let sc = Scenario::load(scenario)?;
    let seed = seed.unwrap_or(sc.seed);
    if lift_heights.is_empty() {
        return Err(CmdError::Usage("--lift-heights requires at least one value".into()));
    }
    if trials == 0 {
        return Err(CmdError::Usage("--trials must be positive".into()));
    }
    let report = crate::bench::run_bench(&sc, seed, lift_heights, trials);
    if let Some(p) = out {
        std::fs::write(p, serde_json::to_string_pretty(&report).expect("serializes"))?;
    }
    Ok(report)
}

pub fn cmd_render(
    scenario: &Path,
    trace: Option<&Path>,
    out: &Path,
) -> Result<String, CmdError> {
    let sc = Scenario::load(scenario)?;
    let events = match trace {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            let mut events = Vec::new();
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                events.push(serde_json::from_str(line).map_err(|e| {
                    CmdError::Usage(format!("trace line {}: {e}", i + 1))
                })?);
            }
            Some(events)
        }
        None => None,
    };
    let svg = crate::render::render_svg(&sc, events.as_deref());
    std::fs::write(out, &svg)?;
    Ok(svg)
}

/// Build the template for rack 0 — handy for callers that want to run
/// perception directly against scenario worlds.
pub fn scenario_template(sc: &Scenario) -> tuberack::perception::PointCloud {
    rack_template(&sc.world.layouts[0], sc.sensor.points_per_mm2)
}
