//! The combined planner: task search, per-step grasp reasoning, per-pair
//! motion planning, weight-map backward updates, and re-exploration, all
//! logged as a TP/GR/MP event trace.

use crate::grasp::{candidate_grasps, reason_config_pairs, ConfigPair};
use crate::motion::{plan_pick_place, validate_trajectory, MotionParams, Trajectory};
use crate::rack::{apply_move, state_fingerprint, GoalPattern, MoveAction, RackState};
use crate::task::{search, FilterBank, MoveConstraint, SearchOutcome, WeightMap};
use crate::world::WorldModel;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    TaskPlan,
    GraspReason,
    MotionPlan,
    WeightMapUpdate,
    ReExploration,
    Recovery,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason")]
pub enum EventOutcome {
    Success,
    Failure(String),
}

/// One trace line. `wall_ns` is a deterministic logical timestamp (event
/// ordinal) so identical runs serialize to identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub id: String,
    pub kind: EventKind,
    pub outcome: EventOutcome,
    pub payload: serde_json::Value,
    pub wall_ns: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanTrace {
    pub events: Vec<TraceEvent>,
}

impl PlanTrace {
    pub fn push(&mut self, id: String, kind: EventKind, outcome: EventOutcome, payload: serde_json::Value) {
        let wall_ns = self.events.len() as u64;
        self.events.push(TraceEvent { id, kind, outcome, payload, wall_ns });
    }

    /// One JSON object per line, stable field order.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("trace serializes"));
            out.push('\n');
        }
        out
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }
}

/// One fully planned step: the logical move, the grasp configuration pair
/// that survived, and its motion trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub move_action: MoveAction,
    pub pair: ConfigPair,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CombinedPlan {
    pub steps: Vec<PlanStep>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerBudget {
    pub max_reexplorations: usize,
    pub search_expansions: usize,
    pub motion_iters: usize,
}

impl Default for PlannerBudget {
    fn default() -> Self {
        PlannerBudget { max_reexplorations: 64, search_expansions: 1_000_000, motion_iters: 3000 }
    }
}

/// Grasp candidate generation knobs. Heights are fractions of each tube
/// type's protrusion so one setting covers mixed catalogs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspConfig {
    pub n_yaw: usize,
    pub height_fractions: Vec<f64>,
}

impl Default for GraspConfig {
    fn default() -> Self {
        GraspConfig { n_yaw: 8, height_fractions: vec![0.5] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub bank: FilterBank,
    pub constraint: MoveConstraint,
    pub grasp: GraspConfig,
    pub motion: MotionParams,
    pub budget: PlannerBudget,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            bank: FilterBank::default(),
            constraint: MoveConstraint::Arrange,
            grasp: GraspConfig::default(),
            motion: MotionParams::default(),
            budget: PlannerBudget::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Exhausted {
    #[error("task search found no sequence")]
    Unsolvable,
    #[error("re-exploration budget exhausted")]
    MaxReexplorations,
}

/// Mutable planning context carried across re-explorations (and, in the
/// execution loop, across re-plans): the weight map, the trace, and the
/// task-planning counter that keeps TP ids fresh.
#[derive(Debug, Default)]
pub struct PlannerSession {
    pub wm: WeightMap,
    pub trace: PlanTrace,
    pub tp_counter: usize,
    pub reexplorations: usize,
    pub motion_iters_total: u64,
}

impl PlannerSession {
    pub fn new() -> Self {
        Self::default()
    }

    /// Run the combined planner from `world.state` until every logical step
    /// has a collision-free trajectory, re-exploring on grasp or motion
    /// failures, or until a budget runs out.
    pub fn plan_combined(
        &mut self,
        world: &WorldModel,
        goal: &GoalPattern,
        cfg: &PlannerConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<CombinedPlan, Exhausted> {
        'reexplore: loop {
            self.tp_counter += 1;
            let k = self.tp_counter;
            let seq = match search(
                &world.state,
                goal,
                &cfg.bank,
                cfg.constraint,
                &self.wm,
                cfg.budget.search_expansions,
            ) {
                SearchOutcome::Solved(seq) => {
                    self.trace.push(
                        format!("TP{k}"),
                        EventKind::TaskPlan,
                        EventOutcome::Success,
                        json!({ "sequence": seq, "weight_map_records": self.wm.len() }),
                    );
                    seq
                }
                SearchOutcome::Unsolvable | SearchOutcome::BudgetExhausted => {
                    self.trace.push(
                        format!("TP{k}"),
                        EventKind::TaskPlan,
                        EventOutcome::Failure("unsolvable".into()),
                        json!({ "weight_map_records": self.wm.len() }),
                    );
                    return Err(Exhausted::Unsolvable);
                }
            };

            let mut scratch = world.state.clone();
            let mut steps: Vec<PlanStep> = Vec::with_capacity(seq.len());
            for (i, m) in seq.iter().enumerate() {
                let scene = world.with_state(scratch.clone());
                let tube = world.tube_type(m.tube);
                let heights: Vec<f64> = cfg
                    .grasp
                    .height_fractions
                    .iter()
                    .map(|f| f * tube.protrusion_mm)
                    .collect();
                let cands = candidate_grasps(tube, cfg.grasp.n_yaw, &heights)
                    .expect("grasp config validated at load time");
                let pairs = reason_config_pairs(&scene, m, &cands);
                if pairs.is_empty() {
                    self.trace.push(
                        format!("GR{k}.{i}"),
                        EventKind::GraspReason,
                        EventOutcome::Failure("no common free grasp".into()),
                        json!({ "move": m, "candidates": cands.len() }),
                    );
                    self.backward_update(&scratch, m, cfg.budget.max_reexplorations)?;
                    continue 'reexplore;
                }
                self.trace.push(
                    format!("GR{k}.{i}"),
                    EventKind::GraspReason,
                    EventOutcome::Success,
                    json!({ "move": m, "pairs": pairs.len() }),
                );

                let mut planned = None;
                let motion = MotionParams { max_iters: cfg.budget.motion_iters, ..cfg.motion.clone() };
                for (j, pair) in pairs.iter().enumerate() {
                    match plan_pick_place(&scene, m, pair, &motion, rng) {
                        Ok((traj, iters)) => {
                            self.motion_iters_total += iters as u64;
                            debug_assert!(validate_trajectory(&scene, &traj, &motion));
                            self.trace.push(
                                format!("MP{k}.{i}.{j}"),
                                EventKind::MotionPlan,
                                EventOutcome::Success,
                                json!({ "iterations": iters, "transit_length_mm": traj.transit_length_mm() }),
                            );
                            planned = Some((pair.clone(), traj));
                            break;
                        }
                        Err(fail) => {
                            self.trace.push(
                                format!("MP{k}.{i}.{j}"),
                                EventKind::MotionPlan,
                                EventOutcome::Failure(fail.to_string()),
                                json!({}),
                            );
                        }
                    }
                }
                let Some((pair, trajectory)) = planned else {
                    // all configuration pairs invalid: same effect as a
                    // failed grasp reasoning
                    self.backward_update(&scratch, m, cfg.budget.max_reexplorations)?;
                    continue 'reexplore;
                };
                steps.push(PlanStep { move_action: *m, pair, trajectory });
                scratch = apply_move(&scratch, m).expect("sequence moves are legal");
            }
            return Ok(CombinedPlan { steps });
        }
    }

    /// Record the failed (state, move) pair and account one re-exploration.
    fn backward_update(
        &mut self,
        state_at_step: &RackState,
        m: &MoveAction,
        max_reexplorations: usize,
    ) -> Result<(), Exhausted> {
        let fp = state_fingerprint(state_at_step);
        let fresh = self.wm.record_failure(fp, *m);
        self.trace.push(
            format!("WM{}", self.wm.len()),
            EventKind::WeightMapUpdate,
            EventOutcome::Success,
            json!({ "fingerprint": fp, "move": m, "fresh": fresh }),
        );
        self.reexplorations += 1;
        self.trace.push(
            format!("RE{}", self.reexplorations),
            EventKind::ReExploration,
            EventOutcome::Success,
            json!({ "total": self.reexplorations }),
        );
        if self.reexplorations > max_reexplorations {
            return Err(Exhausted::MaxReexplorations);
        }
        Ok(())
    }
}

/// Convenience wrapper: plan once with a fresh session.
pub fn plan_combined(
    world: &WorldModel,
    goal: &GoalPattern,
    cfg: &PlannerConfig,
    rng: &mut ChaCha8Rng,
) -> (Result<CombinedPlan, Exhausted>, PlanTrace) {
    let mut session = PlannerSession::new();
    let result = session.plan_combined(world, goal, cfg, rng);
    (result, session.trace)
}

/// Apply each step's move in order; the verification oracle behind the
/// soundness checks.
pub fn replay(initial: &RackState, plan: &CombinedPlan) -> Result<RackState, crate::rack::RackError> {
    let mut cur = initial.clone();
    for step in &plan.steps {
        cur = apply_move(&cur, &step.move_action)?;
    }
    Ok(cur)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rack::{is_goal, GoalPattern, HoleCoord, HoleGoal, RackLayout, RackState, TubeType};
    use crate::world::GripperModel;
    use nalgebra::Isometry3;
    use rand::{Rng, SeedableRng};
    use std::collections::BTreeSet;

    const PI: f64 = std::f64::consts::PI;

    fn tube() -> TubeType {
        TubeType { id: 1, name: "a".into(), radius_mm: 5.0, height_mm: 75.0, protrusion_mm: 40.0 }
    }

    fn gripper() -> GripperModel {
        GripperModel {
            finger_length_mm: 40.0,
            finger_width_mm: 10.0,
            finger_thickness_mm: 4.0,
            max_open_mm: 30.0,
            palm_clearance_mm: 15.0,
            grasp_clearance_mm: 2.0,
            workspace_min: [-100.0, -100.0, 0.0],
            workspace_max: [300.0, 300.0, 350.0],
            yaw_range: [-PI, PI],
        }
    }

    fn world(rows: usize, cols: usize, pitch: f64, occupied: &[(usize, usize)]) -> WorldModel {
        let layout = RackLayout {
            rows,
            cols,
            pitch_mm: pitch,
            hole_width_mm: pitch - 2.0,
            hole_depth_mm: 40.0,
            wall_thickness_mm: 3.0,
            base_pose: Isometry3::translation(0.0, 0.0, 45.0),
        };
        let mut state = RackState::empty(&[(rows, cols)]);
        for &(r, c) in occupied {
            state.set(HoleCoord::new(0, r, c), Some(1));
        }
        WorldModel {
            layouts: vec![layout],
            state,
            table_z_mm: 0.0,
            gripper: gripper(),
            tube_catalog: vec![tube()],
        }
    }

    fn cfg() -> PlannerConfig {
        PlannerConfig {
            bank: FilterBank::default(),
            constraint: MoveConstraint::Arrange,
            grasp: GraspConfig::default(),
            motion: MotionParams::default(),
            budget: PlannerBudget::default(),
        }
    }

    fn types(ids: &[u8]) -> HoleGoal {
        HoleGoal::Types(ids.iter().copied().collect::<BTreeSet<_>>())
    }

    #[test]
    fn goal_state_yields_empty_plan() {
        let w = world(2, 3, 18.0, &[(0, 0)]);
        let goal = GoalPattern::uniform(&[(2, 3)], HoleGoal::DontCare);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (result, trace) = plan_combined(&w, &goal, &cfg(), &mut rng);
        let plan = result.unwrap();
        assert!(plan.steps.is_empty());
        assert_eq!(trace.events.len(), 1);
        assert_eq!(trace.events[0].id, "TP1");
        assert_eq!(trace.events[0].kind, EventKind::TaskPlan);
        assert_eq!(trace.events[0].outcome, EventOutcome::Success);
        assert_eq!(trace.events[0].payload["sequence"].as_array().unwrap().len(), 0);
        assert_eq!(replay(&w.state, &plan).unwrap(), w.state);
    }

    #[test]
    fn one_move_scene_plans_one_step() {
        // lone tube, generous pitch: every grasp free, straight-line transit
        let w = world(2, 3, 18.0, &[(0, 0)]);
        let mut goal = GoalPattern::uniform(&[(2, 3)], HoleGoal::DontCare);
        goal.set(HoleCoord::new(0, 1, 2), types(&[1]));
        goal.set(HoleCoord::new(0, 0, 0), HoleGoal::MustEmpty);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (result, trace) = plan_combined(&w, &goal, &cfg(), &mut rng);
        let plan = result.unwrap();
        assert_eq!(plan.steps.len(), 1);
        let ids: Vec<&str> = trace.events.iter().map(|e| e.id.as_str()).collect();
        assert_eq!(ids, vec!["TP1", "GR1.0", "MP1.0.0"]);
        assert!(trace.events.iter().all(|e| e.outcome == EventOutcome::Success));
        let end = replay(&w.state, &plan).unwrap();
        assert!(is_goal(&end, &goal).unwrap());
        assert!(validate_trajectory(&w, &plan.steps[0].trajectory, &cfg().motion));
    }

    /// One-row rack at tight pitch with the yaw range narrowed to the
    /// east-west sweep: the tube at (0,0) must leave, but every 1-move
    /// destination sits next to the blocker at (0,4), so the first task
    /// plans die in grasp reasoning and the weight map forces a
    /// re-exploration that relocates the blocker first.
    fn blocked_scene() -> (WorldModel, GoalPattern) {
        let mut w = world(1, 6, 13.0, &[(0, 0), (0, 4)]);
        w.gripper.yaw_range = [-0.1, 0.1];
        let mut goal = GoalPattern::uniform(&[(1, 6)], HoleGoal::DontCare);
        goal.set(HoleCoord::new(0, 0, 0), HoleGoal::MustEmpty);
        goal.set(HoleCoord::new(0, 0, 1), HoleGoal::MustEmpty);
        goal.set(HoleCoord::new(0, 0, 2), HoleGoal::MustEmpty);
        goal.set(HoleCoord::new(0, 0, 3), types(&[1]));
        (w, goal)
    }

    #[test]
    fn grasp_blocked_goal_triggers_reexploration() {
        let (w, goal) = blocked_scene();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (result, trace) = plan_combined(&w, &goal, &cfg(), &mut rng);
        let plan = result.unwrap();

        assert!(trace.count(EventKind::WeightMapUpdate) >= 1, "no backward update recorded");
        assert!(trace.count(EventKind::ReExploration) >= 1);
        assert!(trace.count(EventKind::TaskPlan) >= 2, "never re-planned");

        // the first recorded failure never reappears as the plan's first move
        let first_wm = trace
            .events
            .iter()
            .find(|e| e.kind == EventKind::WeightMapUpdate)
            .unwrap();
        let banned: MoveAction =
            serde_json::from_value(first_wm.payload["move"].clone()).unwrap();
        assert_ne!(plan.steps[0].move_action, banned);

        let end = replay(&w.state, &plan).unwrap();
        assert!(is_goal(&end, &goal).unwrap());
        let mut scratch = w.state.clone();
        for step in &plan.steps {
            let scene = w.with_state(scratch.clone());
            assert!(validate_trajectory(&scene, &step.trajectory, &cfg().motion));
            scratch = apply_move(&scratch, &step.move_action).unwrap();
        }
    }

    #[test]
    fn trace_ids_follow_grammar() {
        let (w, goal) = blocked_scene();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (_, trace) = plan_combined(&w, &goal, &cfg(), &mut rng);

        let mut k = 0usize;
        let mut last_gr: Option<usize> = None;
        for e in &trace.events {
            match e.kind {
                EventKind::TaskPlan => {
                    k += 1;
                    last_gr = None;
                    assert_eq!(e.id, format!("TP{k}"));
                }
                EventKind::GraspReason => {
                    let rest = e.id.strip_prefix(&format!("GR{k}.")).unwrap_or_else(|| {
                        panic!("bad GR id {} under TP{k}", e.id)
                    });
                    let i: usize = rest.parse().unwrap();
                    if e.outcome == EventOutcome::Success {
                        last_gr = Some(i);
                    }
                }
                EventKind::MotionPlan => {
                    let i = last_gr.expect("MP without preceding GR success");
                    assert!(
                        e.id.starts_with(&format!("MP{k}.{i}.")),
                        "bad MP id {} under TP{k} GR{i}",
                        e.id
                    );
                }
                _ => {}
            }
        }
        // wall_ns is the emission ordinal
        for (n, e) in trace.events.iter().enumerate() {
            assert_eq!(e.wall_ns, n as u64);
        }
    }

    #[test]
    fn reexplorations_always_insert_fresh_records() {
        let (w, goal) = blocked_scene();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (_, trace) = plan_combined(&w, &goal, &cfg(), &mut rng);
        let updates: Vec<&TraceEvent> = trace
            .events
            .iter()
            .filter(|e| e.kind == EventKind::WeightMapUpdate)
            .collect();
        assert!(!updates.is_empty());
        for u in updates {
            assert_eq!(u.payload["fresh"], serde_json::Value::Bool(true), "stale record re-inserted");
        }
    }

    #[test]
    fn identical_inputs_identical_trace_bytes() {
        let run = || {
            let (w, goal) = blocked_scene();
            let mut rng = ChaCha8Rng::seed_from_u64(6);
            let (result, trace) = plan_combined(&w, &goal, &cfg(), &mut rng);
            assert!(result.is_ok());
            trace.to_jsonl()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn random_scenes_soundness() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut solved = 0;
        for trial in 0..10 {
            // sparse 3x4 rack at friendly pitch: grasps and motions are easy,
            // the property under test is the logical soundness glue
            let mut cells: Vec<(usize, usize)> = (0..3).flat_map(|r| (0..4).map(move |c| (r, c))).collect();
            for i in (1..cells.len()).rev() {
                cells.swap(i, rng.gen_range(0..=i));
            }
            let occupied = &cells[..3];
            let targets = &cells[3..6];
            let w = world(3, 4, 18.0, occupied);
            let mut goal = GoalPattern::uniform(&[(3, 4)], HoleGoal::MustEmpty);
            for &(r, c) in targets {
                goal.set(HoleCoord::new(0, r, c), types(&[1]));
            }
            let mut prng = ChaCha8Rng::seed_from_u64(100 + trial);
            let (result, _trace) = plan_combined(&w, &goal, &cfg(), &mut prng);
            let plan = match result {
                Ok(p) => p,
                Err(e) => panic!("trial {trial} exhausted: {e}"),
            };
            let end = replay(&w.state, &plan).unwrap();
            assert!(is_goal(&end, &goal).unwrap(), "trial {trial} plan misses goal");
            // trajectories validate in the scene they were planned for
            let mut scratch = w.state.clone();
            for step in &plan.steps {
                let scene = w.with_state(scratch.clone());
                assert!(validate_trajectory(&scene, &step.trajectory, &cfg().motion));
                scratch = apply_move(&scratch, &step.move_action).unwrap();
            }
            solved += 1;
        }
        assert_eq!(solved, 10);
    }

    #[test]
    fn unsolvable_goal_reports_exhausted() {
        // a tube exists but every hole must end empty: no reachable goal
        let w = world(2, 2, 18.0, &[(0, 0)]);
        let goal = GoalPattern::uniform(&[(2, 2)], HoleGoal::MustEmpty);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (result, trace) = plan_combined(&w, &goal, &cfg(), &mut rng);
        assert_eq!(result.unwrap_err(), Exhausted::Unsolvable);
        assert_eq!(trace.events.last().unwrap().outcome, EventOutcome::Failure("unsolvable".into()));
    }

    #[test]
    fn replay_hand_built_plan() {
        let w = world(1, 3, 18.0, &[(0, 0)]);
        let m1 = MoveAction { from: HoleCoord::new(0, 0, 0), to: HoleCoord::new(0, 0, 1), tube: 1 };
        let m2 = MoveAction { from: HoleCoord::new(0, 0, 1), to: HoleCoord::new(0, 0, 2), tube: 1 };
        // only the moves matter to replay; reuse a planned step as a donor
        let mut goal = GoalPattern::uniform(&[(1, 3)], HoleGoal::DontCare);
        goal.set(HoleCoord::new(0, 0, 0), HoleGoal::MustEmpty);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (result, _) = plan_combined(&w, &goal, &cfg(), &mut rng);
        let donor = result.unwrap().steps.remove(0);
        let plan = CombinedPlan {
            steps: vec![
                PlanStep { move_action: m1, ..donor.clone() },
                PlanStep { move_action: m2, ..donor },
            ],
        };
        let end = replay(&w.state, &plan).unwrap();
        let mut expect = RackState::empty(&[(1, 3)]);
        expect.set(HoleCoord::new(0, 0, 2), Some(1));
        assert_eq!(end, expect);
        assert_eq!(replay(&w.state, &CombinedPlan::default()).unwrap(), w.state);
    }
}
