//! Simulated execution with fault injection and the perceive/re-plan
//! recovery loop.
//!
//! Faults are step results, not errors: a slip leaves the tube in its source
//! hole, an overload aborts mid-transport with the tube re-seated at the
//! source, and a misplace drops the tube into a random empty neighbor of the
//! destination. The executor never edits the planner's belief directly;
//! divergence is discovered through perception.

use crate::orchestrator::{
    CombinedPlan, EventKind, EventOutcome, Exhausted, PlanStep, PlanTrace, PlannerConfig,
    PlannerSession,
};
use crate::perception::{
    perceive, rack_template, synth_cloud, ClassifierModel, PerceiveParams, PerceptionError,
    PointCloud, SensorParams,
};
use crate::rack::{apply_move, is_goal, GoalPattern, HoleCoord, RackState};
use crate::seeding::substream;
use crate::world::WorldModel;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FaultKind {
    Slip,
    Overload,
    Misplace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultConfig {
    pub p_slip: f64,
    pub p_overload: f64,
    pub p_misplace: f64,
    /// (global step counter, fault) pairs applied deterministically; test
    /// scaffolding that bypasses the sampler.
    pub forced_faults: Vec<(usize, FaultKind)>,
    pub seed: u64,
}

impl Default for FaultConfig {
    fn default() -> Self {
        FaultConfig { p_slip: 0.0, p_overload: 0.0, p_misplace: 0.0, forced_faults: Vec::new(), seed: 0 }
    }
}

impl FaultConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (name, p) in [("p_slip", self.p_slip), ("p_overload", self.p_overload), ("p_misplace", self.p_misplace)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} = {p} outside [0, 1]"));
            }
        }
        let sum = self.p_slip + self.p_overload + self.p_misplace;
        if sum > 1.0 {
            return Err(format!("fault probabilities sum to {sum} > 1"));
        }
        Ok(())
    }
}

/// What actually happened when one planned step ran.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepResult {
    Nominal,
    /// Gripper closed but the tube stayed in the source hole.
    Slip,
    /// Motor supervision (hardware) error mid-transport; tube re-seated at
    /// the source.
    Overload,
    /// Tube landed in this empty neighbor of the destination.
    Misplace(HoleCoord),
    /// Believed source hole was empty (or held the wrong type) in truth.
    PickMissed,
    /// Believed-empty destination was occupied in truth; tube re-seated.
    PlaceBlocked,
}

impl StepResult {
    pub fn is_nominal(&self) -> bool {
        matches!(self, StepResult::Nominal)
    }

    fn reason(&self) -> &'static str {
        match self {
            StepResult::Nominal => "nominal",
            StepResult::Slip => "slip",
            StepResult::Overload => "hardware overload",
            StepResult::Misplace(_) => "misplace",
            StepResult::PickMissed => "pick missed",
            StepResult::PlaceBlocked => "place blocked",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryPolicy {
    pub max_replans: usize,
    pub perceive_on_failure: bool,
}

impl Default for RecoveryPolicy {
    fn default() -> Self {
        RecoveryPolicy { max_replans: 8, perceive_on_failure: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Goal,
    RecoveryBudgetExhausted,
    PlanningExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub step_results: Vec<StepResult>,
    pub final_state: RackState,
    /// True iff the TRUE final state satisfies the goal.
    pub success: bool,
    pub replans_used: usize,
    pub termination: Termination,
}

/// Everything the recovery loop needs to see the world: the sensor model,
/// the registered classifier, and the pipeline tuning.
#[derive(Debug, Clone)]
pub struct PerceptionBundle {
    pub sensor: SensorParams,
    pub model: ClassifierModel,
    pub params: PerceiveParams,
}

fn forced_fault(faults: &FaultConfig, step_index: usize) -> Option<FaultKind> {
    faults.forced_faults.iter().find(|(i, _)| *i == step_index).map(|(_, k)| *k)
}

fn empty_neighbors(state: &RackState, c: HoleCoord) -> Vec<HoleCoord> {
    let mut out = Vec::new();
    for dr in -1i64..=1 {
        for dc in -1i64..=1 {
            if dr == 0 && dc == 0 {
                continue;
            }
            let (r, cc) = (c.row as i64 + dr, c.col as i64 + dc);
            if r < 0 || cc < 0 {
                continue;
            }
            let n = HoleCoord::new(c.rack, r as usize, cc as usize);
            if state.in_bounds(n) && state.get(n).is_none() {
                out.push(n);
            }
        }
    }
    out
}

/// Run one planned step against the true state, sampling (or forcing) a
/// fault. The true tube multiset is conserved under every outcome.
pub fn execute_step(
    true_state: &mut RackState,
    step: &PlanStep,
    faults: &FaultConfig,
    step_index: usize,
    rng: &mut ChaCha8Rng,
) -> StepResult {
    let m = &step.move_action;
    // divergence between belief and truth surfaces here, before any fault
    if true_state.get(m.from) != Some(m.tube) {
        return StepResult::PickMissed;
    }
    if true_state.get(m.to).is_some() {
        return StepResult::PlaceBlocked;
    }

    let fault = forced_fault(faults, step_index).or_else(|| {
        let u: f64 = rng.gen();
        if u < faults.p_slip {
            Some(FaultKind::Slip)
        } else if u < faults.p_slip + faults.p_overload {
            Some(FaultKind::Overload)
        } else if u < faults.p_slip + faults.p_overload + faults.p_misplace {
            Some(FaultKind::Misplace)
        } else {
            None
        }
    });

    match fault {
        None => {
            *true_state = apply_move(true_state, m).expect("checked above");
            StepResult::Nominal
        }
        Some(FaultKind::Slip) => StepResult::Slip,
        Some(FaultKind::Overload) => StepResult::Overload,
        Some(FaultKind::Misplace) => {
            let options = empty_neighbors(true_state, m.to);
            if options.is_empty() {
                // nowhere adjacent to land: the place happens to succeed
                *true_state = apply_move(true_state, m).expect("checked above");
                return StepResult::Nominal;
            }
            let landed = options[rng.gen_range(0..options.len())];
            true_state.set(m.from, None);
            true_state.set(landed, Some(m.tube));
            StepResult::Misplace(landed)
        }
    }
}

/// Estimate every rack of the scene from one synthetic capture. Each rack is
/// perceived from the points near its nominal footprint (rack poses do not
/// drift in this model), then the per-rack estimates are assembled.
pub fn perceive_world(
    world: &WorldModel,
    true_state: &RackState,
    bundle: &PerceptionBundle,
    sensor_seed: u64,
) -> Result<RackState, PerceptionError> {
    let sensed = world.with_state(true_state.clone());
    let sp = SensorParams { seed: sensor_seed, ..bundle.sensor.clone() };
    let cloud = synth_cloud(&sensed, &sp);

    let dims: Vec<(usize, usize)> = (0..true_state.rack_count()).map(|i| true_state.dims(i)).collect();
    let mut believed = RackState::empty(&dims);
    for (rack, layout) in world.layouts.iter().enumerate() {
        // crop the scene around this rack's nominal neighborhood
        let center = layout.base_pose.translation.vector;
        let reach = layout.pitch_mm
            * (layout.rows.max(layout.cols) as f64)
            / 2.0
            + 60.0;
        let near = PointCloud {
            points: cloud
                .points
                .iter()
                .filter(|p| {
                    (p.x - center.x).abs() <= reach && (p.y - center.y).abs() <= reach
                })
                .copied()
                .collect(),
        };
        let template = rack_template(layout, bundle.sensor.points_per_mm2);
        let (est, _tf) = perceive(&near, &template, layout, &bundle.model, &bundle.params)?;
        for r in 0..layout.rows {
            for c in 0..layout.cols {
                believed.set(HoleCoord::new(rack, r, c), est.get(HoleCoord::new(0, r, c)));
            }
        }
    }
    Ok(believed)
}

/// The error-recovery loop: perceive, plan, execute; on any non-nominal step
/// or post-execution divergence, emit a Recovery event, re-perceive, and
/// re-plan with the same weight map, until the goal is reached in truth or
/// the replan budget runs out.
pub fn run_with_recovery(
    world: &WorldModel,
    goal: &GoalPattern,
    cfg: &PlannerConfig,
    faults: &FaultConfig,
    policy: &RecoveryPolicy,
    perception: &PerceptionBundle,
    seed: u64,
) -> Result<(ExecutionOutcome, PlanTrace), PerceptionError> {
    let mut motion_rng = substream(seed, "motion");
    let mut fault_rng = substream(faults.seed, "faults");
    let mut sensor_rng = substream(seed, "perception");

    let mut session = PlannerSession::new();
    let mut true_state = world.state.clone();
    let mut step_results = Vec::new();
    let mut replans_used = 0usize;
    let mut recovery_counter = 0usize;
    let mut global_step = 0usize;
    let mut believed = perceive_world(world, &true_state, perception, sensor_rng.gen())?;

    let termination = 'outer: loop {
        if is_goal(&believed, goal).expect("scenario shapes validated") {
            break Termination::Goal;
        }
        let believed_world = world.with_state(believed.clone());
        let plan: CombinedPlan =
            match session.plan_combined(&believed_world, goal, cfg, &mut motion_rng) {
                Ok(p) => p,
                Err(Exhausted::Unsolvable) | Err(Exhausted::MaxReexplorations) => {
                    break Termination::PlanningExhausted;
                }
            };

        let mut faulted = false;
        for step in &plan.steps {
            let result = execute_step(&mut true_state, step, faults, global_step, &mut fault_rng);
            global_step += 1;
            step_results.push(result);
            if !result.is_nominal() {
                recovery_counter += 1;
                session.trace.push(
                    format!("RC{recovery_counter}"),
                    EventKind::Recovery,
                    EventOutcome::Failure(result.reason().into()),
                    json!({ "step": global_step - 1, "result": result }),
                );
                replans_used += 1;
                if replans_used > policy.max_replans {
                    break 'outer Termination::RecoveryBudgetExhausted;
                }
                if policy.perceive_on_failure {
                    believed = perceive_world(world, &true_state, perception, sensor_rng.gen())?;
                }
                // slip/overload leave the believed state accurate; for the
                // rest, a stale belief just surfaces as the next divergence
                faulted = true;
                break;
            }
            believed = apply_move(&believed, &step.move_action).expect("planned on belief");
        }
        if faulted {
            continue;
        }

        // full plan ran nominally; confirm through perception
        believed = perceive_world(world, &true_state, perception, sensor_rng.gen())?;
        if !is_goal(&believed, goal).expect("scenario shapes validated") {
            recovery_counter += 1;
            session.trace.push(
                format!("RC{recovery_counter}"),
                EventKind::Recovery,
                EventOutcome::Failure("divergence after nominal plan".into()),
                json!({ "step": global_step }),
            );
            replans_used += 1;
            if replans_used > policy.max_replans {
                break Termination::RecoveryBudgetExhausted;
            }
        }
    };

    let success = termination == Termination::Goal
        && is_goal(&true_state, goal).expect("scenario shapes validated");
    let outcome = ExecutionOutcome {
        step_results,
        final_state: true_state,
        success,
        replans_used,
        termination,
    };
    Ok((outcome, session.trace))
}
