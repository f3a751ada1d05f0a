//! Planning and simulated execution for rearranging test tubes in racks.
//!
//! The stack has three planning layers — heuristic task search over rack
//! states, geometric grasp reasoning, and constrained sampling-based motion
//! planning — glued together by an orchestrator that records failures in a
//! weight map and re-explores. A synthetic perception pipeline
//! (DBSCAN / PCA / ICP) and a fault-injecting executor close the loop.

pub mod geom;
pub mod grasp;
pub mod motion;
pub mod orchestrator;
pub mod perception;
pub mod rack;
pub mod seeding;
pub mod simexec;
pub mod task;
pub mod world;

pub use rack::{
    apply_move, hole_world_pose, is_goal, misplaced_count, state_fingerprint, GoalPattern,
    HoleCoord, HoleGoal, MoveAction, RackError, RackLayout, RackState, TubeType, TubeTypeId,
};
pub use task::{
    enumerate_moves, is_accessible, search, AccessFilter, FilterBank, MoveConstraint,
    SearchOutcome, WeightMap,
};
pub use orchestrator::{
    plan_combined, CombinedPlan, EventKind, EventOutcome, Exhausted, GraspConfig, PlanStep,
    PlanTrace, PlannerBudget, PlannerConfig, PlannerSession, TraceEvent,
};
pub use simexec::{
    execute_step, perceive_world, run_with_recovery, ExecutionOutcome, FaultConfig, FaultKind,
    PerceptionBundle, RecoveryPolicy, StepResult, Termination,
};
pub use world::{Config, GripperModel, HeldTube, WorldModel};
