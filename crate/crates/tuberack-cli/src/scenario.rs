//! Scenario files: a JSON document describing the physical scene, the goal
//! pattern, and every planner/executor knob, validated into runtime types.
//!
//! Occupancy and goal grids are arrays of row strings with
//! whitespace-separated tokens: a tube type name, `.` (empty / must-empty),
//! `*` (don't care, goal only), or `a|b` (admissible type set, goal only).

use nalgebra::Isometry3;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::collections::HashMap;
use std::path::Path;
use thiserror::Error;
use tuberack::motion::MotionParams;
use tuberack::orchestrator::{GraspConfig, PlannerBudget, PlannerConfig};
use tuberack::perception::{PerceiveParams, SensorParams};
use tuberack::rack::{
    GoalPattern, HoleCoord, HoleGoal, RackLayout, RackState, TubeType, TubeTypeId,
};
use tuberack::simexec::{FaultConfig, RecoveryPolicy};
use tuberack::task::{FilterBank, MoveConstraint};
use tuberack::world::{GripperModel, WorldModel};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario: {field}: {reason}")]
    Validation { field: String, reason: String },
}

fn invalid(field: &str, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation { field: field.to_string(), reason: reason.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeTypeSpec {
    pub name: String,
    pub radius_mm: f64,
    pub height_mm: f64,
    pub protrusion_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RackSpec {
    pub rows: usize,
    pub cols: usize,
    pub pitch_mm: f64,
    pub hole_width_mm: f64,
    pub hole_depth_mm: f64,
    pub wall_thickness_mm: f64,
    pub position_mm: [f64; 3],
    #[serde(default)]
    pub yaw_deg: f64,
}

/// The raw JSON document; `Scenario` is its validated runtime form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDoc {
    pub seed: Option<u64>,
    #[serde(default = "default_mode")]
    pub mode: MoveConstraint,
    pub tube_types: Vec<TubeTypeSpec>,
    pub racks: Vec<RackSpec>,
    /// Per rack, one string per row.
    pub initial: Vec<Vec<String>>,
    pub goal: Vec<Vec<String>>,
    pub gripper: GripperModel,
    #[serde(default)]
    pub table_z_mm: f64,
    #[serde(default)]
    pub filter_bank: Option<FilterBank>,
    #[serde(default)]
    pub grasp: Option<GraspConfig>,
    #[serde(default)]
    pub motion: Option<MotionParams>,
    #[serde(default)]
    pub budget: Option<PlannerBudget>,
    #[serde(default)]
    pub faults: Option<FaultConfig>,
    #[serde(default)]
    pub recovery: Option<RecoveryPolicy>,
    #[serde(default)]
    pub sensor: Option<SensorParams>,
    #[serde(default)]
    pub perceive: Option<PerceiveParams>,
    /// Labeled arrangement for classifier registration (rack 0 shape);
    /// defaults to the initial grid of rack 0.
    #[serde(default)]
    pub ground_truth: Option<Vec<String>>,
}

fn default_mode() -> MoveConstraint {
    MoveConstraint::Arrange
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub doc: ScenarioDoc,
    pub seed: u64,
    pub world: WorldModel,
    pub goal: GoalPattern,
    pub cfg: PlannerConfig,
    pub faults: FaultConfig,
    pub recovery: RecoveryPolicy,
    pub sensor: SensorParams,
    pub perceive: PerceiveParams,
    /// Ground-truth single-rack state (rack 0 shape) for registration.
    pub ground_truth: RackState,
}

fn parse_initial_grid(
    field: &str,
    rows: &[String],
    dims: (usize, usize),
    names: &HashMap<String, TubeTypeId>,
) -> Result<Vec<Option<TubeTypeId>>, ScenarioError> {
    if rows.len() != dims.0 {
        return Err(invalid(field, format!("expected {} rows, found {}", dims.0, rows.len())));
    }
    let mut cells = Vec::with_capacity(dims.0 * dims.1);
    for (r, row) in rows.iter().enumerate() {
        let toks: Vec<&str> = row.split_whitespace().collect();
        if toks.len() != dims.1 {
            return Err(invalid(
                field,
                format!("row {r}: expected {} columns, found {}", dims.1, toks.len()),
            ));
        }
        for tok in toks {
            cells.push(match tok {
                "." => None,
                name => Some(*names.get(name).ok_or_else(|| {
                    invalid(field, format!("row {r}: undeclared tube type '{name}'"))
                })?),
            });
        }
    }
    Ok(cells)
}

fn parse_goal_grid(
    field: &str,
    rows: &[String],
    dims: (usize, usize),
    names: &HashMap<String, TubeTypeId>,
) -> Result<Vec<HoleGoal>, ScenarioError> {
    if rows.len() != dims.0 {
        return Err(invalid(field, format!("expected {} rows, found {}", dims.0, rows.len())));
    }
    let mut cells = Vec::with_capacity(dims.0 * dims.1);
    for (r, row) in rows.iter().enumerate() {
        let toks: Vec<&str> = row.split_whitespace().collect();
        if toks.len() != dims.1 {
            return Err(invalid(
                field,
                format!("row {r}: expected {} columns, found {}", dims.1, toks.len()),
            ));
        }
        for tok in toks {
            cells.push(match tok {
                "." => HoleGoal::MustEmpty,
                "*" => HoleGoal::DontCare,
                set => {
                    let mut ids = BTreeSet::new();
                    for name in set.split('|') {
                        ids.insert(*names.get(name).ok_or_else(|| {
                            invalid(field, format!("row {r}: undeclared tube type '{name}'"))
                        })?);
                    }
                    HoleGoal::Types(ids)
                }
            });
        }
    }
    Ok(cells)
}

impl Scenario {
    pub fn from_doc(doc: ScenarioDoc) -> Result<Scenario, ScenarioError> {
        let seed = doc.seed.ok_or_else(|| invalid("seed", "missing (seedless scenarios are rejected)"))?;

        if doc.tube_types.is_empty() {
            return Err(invalid("tube_types", "at least one type required"));
        }
        let mut names = HashMap::new();
        let mut catalog = Vec::new();
        for (i, spec) in doc.tube_types.iter().enumerate() {
            let id = (i + 1) as TubeTypeId;
            if names.insert(spec.name.clone(), id).is_some() {
                return Err(invalid("tube_types", format!("duplicate name '{}'", spec.name)));
            }
            let t = TubeType {
                id,
                name: spec.name.clone(),
                radius_mm: spec.radius_mm,
                height_mm: spec.height_mm,
                protrusion_mm: spec.protrusion_mm,
            };
            t.validate().map_err(|e| invalid("tube_types", e.to_string()))?;
            catalog.push(t);
        }

        if doc.racks.is_empty() || doc.racks.len() > 2 {
            return Err(invalid("racks", "one or two racks supported"));
        }
        if doc.mode == MoveConstraint::Separate && doc.racks.len() != 2 {
            return Err(invalid("mode", "separate mode requires two racks"));
        }
        let mut layouts = Vec::new();
        for (i, r) in doc.racks.iter().enumerate() {
            let [x, y, z] = r.position_mm;
            let layout = RackLayout {
                rows: r.rows,
                cols: r.cols,
                pitch_mm: r.pitch_mm,
                hole_width_mm: r.hole_width_mm,
                hole_depth_mm: r.hole_depth_mm,
                wall_thickness_mm: r.wall_thickness_mm,
                base_pose: Isometry3::new(
                    nalgebra::Vector3::new(x, y, z),
                    nalgebra::Vector3::z() * r.yaw_deg.to_radians(),
                ),
            };
            layout.validate().map_err(|e| invalid(&format!("racks[{i}]"), e.to_string()))?;
            layouts.push(layout);
        }
        let dims: Vec<(usize, usize)> = layouts.iter().map(|l| (l.rows, l.cols)).collect();

        if doc.initial.len() != dims.len() {
            return Err(invalid("initial", format!("expected {} rack grids", dims.len())));
        }
        if doc.goal.len() != dims.len() {
            return Err(invalid("goal", format!("expected {} rack grids", dims.len())));
        }
        let mut state = RackState::empty(&dims);
        for (rack, grid) in doc.initial.iter().enumerate() {
            let cells = parse_initial_grid(&format!("initial[{rack}]"), grid, dims[rack], &names)?;
            for (idx, v) in cells.into_iter().enumerate() {
                let (r, c) = (idx / dims[rack].1, idx % dims[rack].1);
                state.set(HoleCoord::new(rack, r, c), v);
            }
        }
        let mut goal_cells = Vec::new();
        for (rack, grid) in doc.goal.iter().enumerate() {
            goal_cells.push(parse_goal_grid(&format!("goal[{rack}]"), grid, dims[rack], &names)?);
        }
        let goal = GoalPattern::new(&dims, goal_cells)
            .map_err(|e| invalid("goal", e.to_string()))?;

        let ground_truth = match &doc.ground_truth {
            Some(grid) => {
                let cells = parse_initial_grid("ground_truth", grid, dims[0], &names)?;
                let mut gt = RackState::empty(&dims[..1]);
                for (idx, v) in cells.into_iter().enumerate() {
                    let (r, c) = (idx / dims[0].1, idx % dims[0].1);
                    gt.set(HoleCoord::new(0, r, c), v);
                }
                gt
            }
            None => {
                let mut gt = RackState::empty(&dims[..1]);
                for r in 0..dims[0].0 {
                    for c in 0..dims[0].1 {
                        gt.set(HoleCoord::new(0, r, c), state.get(HoleCoord::new(0, r, c)));
                    }
                }
                gt
            }
        };

        let faults = doc.faults.clone().unwrap_or_default();
        faults.validate().map_err(|e| invalid("faults", e))?;
        let grasp = doc.grasp.clone().unwrap_or_default();
        if grasp.n_yaw == 0 || grasp.height_fractions.is_empty() {
            return Err(invalid("grasp", "n_yaw >= 1 and at least one height fraction required"));
        }
        if grasp.height_fractions.iter().any(|f| !(0.0..1.0).contains(f) || *f == 0.0) {
            return Err(invalid("grasp", "height fractions must lie in (0, 1)"));
        }

        let world = WorldModel {
            layouts,
            state,
            table_z_mm: doc.table_z_mm,
            gripper: doc.gripper.clone(),
            tube_catalog: catalog,
        };
        let cfg = PlannerConfig {
            bank: doc.filter_bank.clone().unwrap_or_default(),
            constraint: doc.mode,
            grasp,
            motion: doc.motion.clone().unwrap_or_default(),
            budget: doc.budget.clone().unwrap_or_default(),
        };

        Ok(Scenario {
            seed,
            world,
            goal,
            cfg,
            faults,
            recovery: doc.recovery.unwrap_or_default(),
            sensor: doc.sensor.clone().unwrap_or_default(),
            perceive: doc.perceive.clone().unwrap_or_default(),
            ground_truth,
            doc,
        })
    }

    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path)?;
        let doc: ScenarioDoc = serde_json::from_str(&text)?;
        Scenario::from_doc(doc)
    }

    pub fn save(&self, path: &Path) -> Result<(), ScenarioError> {
        std::fs::write(path, serde_json::to_string_pretty(&self.doc)?)?;
        Ok(())
    }
}
