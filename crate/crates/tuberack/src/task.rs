//! Heuristic task search over rack states.
//!
//! Each rack state is a node. Expansion is gated by simple 3x3-neighborhood
//! emptiness filters (a rough reachability check at the logical layer), the
//! cost is g(x) + h(x) with g the step count and h the misplaced-tube count,
//! and ties break on the smaller h. A weight map of recorded
//! (state fingerprint, move) failures prunes expansions that earlier grasp
//! reasoning or motion planning proved infeasible.

use crate::rack::{
    apply_move, is_goal, misplaced_count, state_fingerprint, GoalPattern, HoleCoord, MoveAction,
    RackState,
};
use serde::{Deserialize, Serialize};
use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};

/// Row/col offset within the 3x3 neighborhood (excluding the center).
pub type NeighborOffset = (i8, i8);

pub const N: NeighborOffset = (-1, 0);
pub const S: NeighborOffset = (1, 0);
pub const E: NeighborOffset = (0, 1);
pub const W: NeighborOffset = (0, -1);
pub const NE: NeighborOffset = (-1, 1);
pub const NW: NeighborOffset = (-1, -1);
pub const SE: NeighborOffset = (1, 1);
pub const SW: NeighborOffset = (1, -1);

/// One emptiness mask. The filter passes when every `mask` neighbor is empty
/// and every `require_oob` neighbor lies outside the rack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessFilter {
    pub mask: Vec<NeighborOffset>,
    #[serde(default)]
    pub require_oob: Vec<NeighborOffset>,
}

impl AccessFilter {
    pub fn new(mask: &[NeighborOffset]) -> Self {
        AccessFilter { mask: mask.to_vec(), require_oob: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterBank {
    pub filters: Vec<AccessFilter>,
    pub oob_is_empty: bool,
}

impl Default for FilterBank {
    /// Four opposing-pair masks plus two single-side masks that apply only
    /// when the opposite side is outside the rack.
    fn default() -> Self {
        FilterBank {
            filters: vec![
                AccessFilter::new(&[E, W]),
                AccessFilter::new(&[N, S]),
                AccessFilter::new(&[NE, SW]),
                AccessFilter::new(&[NW, SE]),
                AccessFilter { mask: vec![E], require_oob: vec![W] },
                AccessFilter { mask: vec![W], require_oob: vec![E] },
            ],
            oob_is_empty: true,
        }
    }
}

fn neighbor(state: &RackState, c: HoleCoord, off: NeighborOffset) -> Option<HoleCoord> {
    let (rows, cols) = state.dims(c.rack);
    let row = c.row as i64 + off.0 as i64;
    let col = c.col as i64 + off.1 as i64;
    if row < 0 || col < 0 || row >= rows as i64 || col >= cols as i64 {
        None
    } else {
        Some(HoleCoord::new(c.rack, row as usize, col as usize))
    }
}

/// Can a gripper (or a carried tube) reach hole `c`? True when any filter in
/// the bank passes; the same predicate gates both picking and placing.
pub fn is_accessible(state: &RackState, c: HoleCoord, bank: &FilterBank) -> bool {
    bank.filters.iter().any(|f| {
        f.require_oob
            .iter()
            .all(|&off| neighbor(state, c, off).is_none())
            && f.mask.iter().all(|&off| match neighbor(state, c, off) {
                None => bank.oob_is_empty,
                Some(n) => state.get(n).is_none(),
            })
    })
}

/// Records of (source-state fingerprint, move) pairs that failed geometric
/// reasoning; the search avoids expanding through them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightMap {
    records: HashSet<(u64, MoveAction)>,
}

impl WeightMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Idempotent insert; returns true when the record is new.
    pub fn record_failure(&mut self, fp: u64, m: MoveAction) -> bool {
        self.records.insert((fp, m))
    }

    pub fn contains(&self, fp: u64, m: &MoveAction) -> bool {
        self.records.contains(&(fp, *m))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Arrange within the existing rack(s) or separate from rack 0 into rack 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MoveConstraint {
    Arrange,
    Separate,
}

impl MoveConstraint {
    fn allows(&self, m: &MoveAction) -> bool {
        match self {
            MoveConstraint::Arrange => true,
            MoveConstraint::Separate => m.from.rack == 0 && m.to.rack == 1,
        }
    }
}

/// All legal moves from `state` in deterministic row-major order
/// (source first, then destination), excluding weight-map records.
///
/// Destination accessibility is evaluated with the source hole emptied,
/// since the tube is already in the gripper at place time.
pub fn enumerate_moves(
    state: &RackState,
    bank: &FilterBank,
    constraint: MoveConstraint,
    wm: &WeightMap,
) -> Vec<MoveAction> {
    let fp = state_fingerprint(state);
    let holes: Vec<HoleCoord> = state.holes().collect();
    let mut moves = Vec::new();
    for &from in &holes {
        let Some(tube) = state.get(from) else { continue };
        if !is_accessible(state, from, bank) {
            continue;
        }
        let mut lifted = state.clone();
        lifted.set(from, None);
        for &to in &holes {
            if to == from || state.get(to).is_some() {
                continue;
            }
            let m = MoveAction { from, to, tube };
            if !constraint.allows(&m) {
                continue;
            }
            if !is_accessible(&lifted, to, bank) {
                continue;
            }
            if wm.contains(fp, &m) {
                continue;
            }
            moves.push(m);
        }
    }
    moves
}

#[derive(Debug, Clone, PartialEq)]
pub enum SearchOutcome {
    Solved(Vec<MoveAction>),
    Unsolvable,
    BudgetExhausted,
}

struct Node {
    state: RackState,
    g: usize,
    parent: Option<usize>,
    via: Option<MoveAction>,
}

/// Best-first search with priority key (g+h, h, insertion order).
///
/// Duplicate states are pruned through a fingerprint-keyed visited set that
/// keeps the lowest g. Because h changes by at most one per move it is
/// consistent, so the first goal pop is a shortest plan on the filtered
/// action graph.
pub fn search(
    initial: &RackState,
    goal: &GoalPattern,
    bank: &FilterBank,
    constraint: MoveConstraint,
    wm: &WeightMap,
    budget: usize,
) -> SearchOutcome {
    assert!(budget >= 1, "budget must be at least 1");
    let mut nodes: Vec<Node> = Vec::new();
    let mut open: BinaryHeap<Reverse<(usize, usize, usize)>> = BinaryHeap::new();
    let mut best_g: HashMap<u64, usize> = HashMap::new();

    let h0 = misplaced_count(initial, goal).expect("state/goal shape mismatch");
    nodes.push(Node { state: initial.clone(), g: 0, parent: None, via: None });
    open.push(Reverse((h0, h0, 0)));
    best_g.insert(state_fingerprint(initial), 0);

    let mut expansions = 0usize;
    while let Some(Reverse((_, _, idx))) = open.pop() {
        let (state, g) = (&nodes[idx].state, nodes[idx].g);
        let fp = state_fingerprint(state);
        if best_g.get(&fp).is_some_and(|&bg| bg < g) {
            continue; // stale entry superseded by a cheaper path
        }
        if is_goal(state, goal).expect("state/goal shape mismatch") {
            let mut seq = Vec::new();
            let mut cur = idx;
            while let Some(m) = nodes[cur].via {
                seq.push(m);
                cur = nodes[cur].parent.unwrap();
            }
            seq.reverse();
            return SearchOutcome::Solved(seq);
        }
        expansions += 1;
        if expansions > budget {
            return SearchOutcome::BudgetExhausted;
        }
        for m in enumerate_moves(state, bank, constraint, wm) {
            let child = apply_move(&nodes[idx].state, &m).expect("enumerated move must be legal");
            let cg = g + 1;
            let cfp = state_fingerprint(&child);
            if best_g.get(&cfp).is_some_and(|&bg| bg <= cg) {
                continue;
            }
            best_g.insert(cfp, cg);
            let ch = misplaced_count(&child, goal).expect("shape");
            let seq = nodes.len();
            nodes.push(Node { state: child, g: cg, parent: Some(idx), via: Some(m) });
            open.push(Reverse((cg + ch, ch, seq)));
        }
    }
    SearchOutcome::Unsolvable
}
