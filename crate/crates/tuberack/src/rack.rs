//! Rack, tube, and goal data model plus move semantics.

use nalgebra::{Isometry3, Point3, Vector3};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

pub type TubeTypeId = u8;

/// Catalog entry describing one tube kind. `protrusion_mm` is how far the
/// tube sticks out above the rack top when seated in a hole.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeType {
    pub id: TubeTypeId,
    pub name: String,
    pub radius_mm: f64,
    pub height_mm: f64,
    pub protrusion_mm: f64,
}

impl TubeType {
    pub fn validate(&self) -> Result<(), RackError> {
        if self.radius_mm <= 0.0 || self.protrusion_mm <= 0.0 || self.height_mm <= self.protrusion_mm
        {
            return Err(RackError::InvalidTubeType(self.name.clone()));
        }
        Ok(())
    }
}

/// Address of one hole: rack 0 is the original rack, rack 1 the new rack in
/// separation mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HoleCoord {
    pub rack: usize,
    pub row: usize,
    pub col: usize,
}

impl HoleCoord {
    pub fn new(rack: usize, row: usize, col: usize) -> Self {
        HoleCoord { rack, row, col }
    }
}

impl std::fmt::Display for HoleCoord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "r{}({},{})", self.rack, self.row, self.col)
    }
}

/// Grid geometry of one rack and its pose in the world.
#[derive(Debug, Clone)]
pub struct RackLayout {
    pub rows: usize,
    pub cols: usize,
    pub pitch_mm: f64,
    pub hole_width_mm: f64,
    pub hole_depth_mm: f64,
    pub wall_thickness_mm: f64,
    pub base_pose: Isometry3<f64>,
}

impl RackLayout {
    pub fn validate(&self) -> Result<(), RackError> {
        if self.rows == 0 || self.cols == 0 {
            return Err(RackError::InvalidLayout("rows/cols must be positive"));
        }
        if self.hole_width_mm >= self.pitch_mm {
            return Err(RackError::InvalidLayout("hole_width_mm must be < pitch_mm"));
        }
        if self.hole_depth_mm <= 0.0 {
            return Err(RackError::InvalidLayout("hole_depth_mm must be > 0"));
        }
        Ok(())
    }

    /// World z of the rack's top surface directly above a hole (rack frame
    /// origin sits at the top of hole (0,0); the body extends downward).
    pub fn top_z(&self) -> f64 {
        self.base_pose.translation.z
    }
}

/// Position of a hole center on the rack top plus the insertion axis
/// (the rack frame +z direction).
pub fn hole_world_pose(layout: &RackLayout, c: HoleCoord) -> Result<(Point3<f64>, Vector3<f64>), RackError> {
    if c.row >= layout.rows || c.col >= layout.cols {
        return Err(RackError::OutOfBounds(c));
    }
    let local = Point3::new(c.col as f64 * layout.pitch_mm, c.row as f64 * layout.pitch_mm, 0.0);
    let center = layout.base_pose.transform_point(&local);
    let axis = layout.base_pose.transform_vector(&Vector3::z());
    Ok((center, axis))
}

/// Occupancy of every hole across one or two racks. Immutable by
/// convention: `apply_move` returns a new state.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RackState {
    dims: Vec<(usize, usize)>,
    cells: Vec<Vec<Option<TubeTypeId>>>,
}

impl RackState {
    pub fn empty(dims: &[(usize, usize)]) -> Self {
        RackState {
            dims: dims.to_vec(),
            cells: dims.iter().map(|&(r, c)| vec![None; r * c]).collect(),
        }
    }

    pub fn rack_count(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self, rack: usize) -> (usize, usize) {
        self.dims[rack]
    }

    pub fn in_bounds(&self, c: HoleCoord) -> bool {
        c.rack < self.dims.len() && c.row < self.dims[c.rack].0 && c.col < self.dims[c.rack].1
    }

    pub fn get(&self, c: HoleCoord) -> Option<TubeTypeId> {
        let (_, cols) = self.dims[c.rack];
        self.cells[c.rack][c.row * cols + c.col]
    }

    pub fn set(&mut self, c: HoleCoord, v: Option<TubeTypeId>) {
        let (_, cols) = self.dims[c.rack];
        self.cells[c.rack][c.row * cols + c.col] = v;
    }

    /// Row-major iteration over every hole of every rack.
    pub fn holes(&self) -> impl Iterator<Item = HoleCoord> + '_ {
        self.dims.iter().enumerate().flat_map(|(rack, &(rows, cols))| {
            (0..rows).flat_map(move |row| (0..cols).map(move |col| HoleCoord { rack, row, col }))
        })
    }

    pub fn occupied(&self) -> impl Iterator<Item = (HoleCoord, TubeTypeId)> + '_ {
        self.holes().filter_map(|c| self.get(c).map(|t| (c, t)))
    }

    pub fn tube_count(&self) -> usize {
        self.occupied().count()
    }

    /// Sorted multiset of tube ids, used by conservation checks.
    pub fn tube_multiset(&self) -> Vec<TubeTypeId> {
        let mut v: Vec<TubeTypeId> = self.occupied().map(|(_, t)| t).collect();
        v.sort_unstable();
        v
    }
}

/// Per-hole goal semantics: a set of admissible types, a mandatory-empty
/// marker, or "don't care".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum HoleGoal {
    MustEmpty,
    DontCare,
    Types(BTreeSet<TubeTypeId>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalPattern {
    dims: Vec<(usize, usize)>,
    cells: Vec<Vec<HoleGoal>>,
}

impl GoalPattern {
    pub fn new(dims: &[(usize, usize)], cells: Vec<Vec<HoleGoal>>) -> Result<Self, RackError> {
        if cells.len() != dims.len()
            || cells.iter().zip(dims).any(|(g, &(r, c))| g.len() != r * c)
        {
            return Err(RackError::ShapeMismatch);
        }
        Ok(GoalPattern { dims: dims.to_vec(), cells })
    }

    pub fn uniform(dims: &[(usize, usize)], goal: HoleGoal) -> Self {
        GoalPattern {
            dims: dims.to_vec(),
            cells: dims.iter().map(|&(r, c)| vec![goal.clone(); r * c]).collect(),
        }
    }

    pub fn get(&self, c: HoleCoord) -> &HoleGoal {
        let (_, cols) = self.dims[c.rack];
        &self.cells[c.rack][c.row * cols + c.col]
    }

    pub fn set(&mut self, c: HoleCoord, g: HoleGoal) {
        let (_, cols) = self.dims[c.rack];
        self.cells[c.rack][c.row * cols + c.col] = g;
    }

    pub fn dims(&self) -> &[(usize, usize)] {
        &self.dims
    }

    fn shape_matches(&self, state: &RackState) -> bool {
        state.rack_count() == self.dims.len()
            && (0..self.dims.len()).all(|i| state.dims(i) == self.dims[i])
    }

    /// Is the occupant (if any) of hole `c` admissible?
    pub fn admits(&self, c: HoleCoord, occupant: Option<TubeTypeId>) -> bool {
        match (self.get(c), occupant) {
            (HoleGoal::DontCare, _) => true,
            (HoleGoal::MustEmpty, Some(_)) => false,
            (HoleGoal::MustEmpty, None) => true,
            (HoleGoal::Types(_), None) => true,
            (HoleGoal::Types(set), Some(t)) => set.contains(&t),
        }
    }
}

/// One pick-and-place of a single tube.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MoveAction {
    pub from: HoleCoord,
    pub to: HoleCoord,
    pub tube: TubeTypeId,
}

#[derive(Debug, Error, PartialEq)]
pub enum RackError {
    #[error("source hole {0} is empty")]
    SourceEmpty(HoleCoord),
    #[error("destination hole {0} is occupied")]
    DestinationOccupied(HoleCoord),
    #[error("tube type mismatch at {0}: expected {1}, found {2}")]
    TypeMismatch(HoleCoord, TubeTypeId, TubeTypeId),
    #[error("state and goal shapes do not match")]
    ShapeMismatch,
    #[error("hole {0} out of bounds")]
    OutOfBounds(HoleCoord),
    #[error("invalid tube type {0}")]
    InvalidTubeType(String),
    #[error("invalid rack layout: {0}")]
    InvalidLayout(&'static str),
}

/// Move one tube; the input state is untouched on error.
pub fn apply_move(state: &RackState, m: &MoveAction) -> Result<RackState, RackError> {
    if !state.in_bounds(m.from) {
        return Err(RackError::OutOfBounds(m.from));
    }
    if !state.in_bounds(m.to) {
        return Err(RackError::OutOfBounds(m.to));
    }
    let occupant = state.get(m.from).ok_or(RackError::SourceEmpty(m.from))?;
    if occupant != m.tube {
        return Err(RackError::TypeMismatch(m.from, m.tube, occupant));
    }
    if state.get(m.to).is_some() {
        return Err(RackError::DestinationOccupied(m.to));
    }
    let mut next = state.clone();
    next.set(m.from, None);
    next.set(m.to, Some(m.tube));
    debug_assert_eq!(state.tube_multiset(), next.tube_multiset());
    Ok(next)
}

/// Number of occupied holes whose tube is not admissible — h(x).
pub fn misplaced_count(state: &RackState, goal: &GoalPattern) -> Result<usize, RackError> {
    if !goal.shape_matches(state) {
        return Err(RackError::ShapeMismatch);
    }
    Ok(state
        .occupied()
        .filter(|&(c, t)| !goal.admits(c, Some(t)))
        .count())
}

/// Goal test: no misplaced tube and every mandatory-empty hole is empty.
pub fn is_goal(state: &RackState, goal: &GoalPattern) -> Result<bool, RackError> {
    if !goal.shape_matches(state) {
        return Err(RackError::ShapeMismatch);
    }
    Ok(state.holes().all(|c| goal.admits(c, state.get(c))))
}

/// Stable 64-bit FNV-1a over the canonical row-major occupancy encoding.
pub fn state_fingerprint(state: &RackState) -> u64 {
    const OFFSET: u64 = 0xcbf29ce484222325;
    const PRIME: u64 = 0x100000001b3;
    let mut h = OFFSET;
    let mut eat = |byte: u8| {
        h ^= byte as u64;
        h = h.wrapping_mul(PRIME);
    };
    for (rack, &(rows, cols)) in state.dims.iter().enumerate() {
        eat(rack as u8);
        eat(rows as u8);
        eat(cols as u8);
        for row in 0..rows {
            for col in 0..cols {
                match state.get(HoleCoord { rack, row, col }) {
                    None => eat(0),
                    Some(t) => eat(t.wrapping_add(1)),
                }
            }
        }
    }
    h
}
