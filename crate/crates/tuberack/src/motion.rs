//! Constrained sampling-based motion planning.
//!
//! Pick-up and place-down are linear segments along the hole axes; the
//! transit in between is planned by a bidirectional RRT (connect variant)
//! over (x, y, z, yaw, pitch, roll). While a tube is held, every sampled and
//! extended config is projected onto the upright constraint
//! (pitch = roll = 0) before the validity check.

use crate::geom::{capsule_capsule_collide, capsule_obb_collide, obb_obb_collide};
use crate::grasp::ConfigPair;
use crate::rack::{hole_world_pose, MoveAction};
use crate::world::{held_capsule, Config, HeldTube, WorldModel};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionParams {
    pub lift_height_mm: f64,
    pub step_mm: f64,
    pub max_iters: usize,
    pub tilt_eps_rad: f64,
    pub shortcut_passes: usize,
}

impl Default for MotionParams {
    fn default() -> Self {
        MotionParams {
            lift_height_mm: 60.0,
            step_mm: 5.0,
            max_iters: 3000,
            tilt_eps_rad: 1e-6,
            shortcut_passes: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum MotionFailure {
    #[error("sampler budget exhausted")]
    BudgetExhausted,
    #[error("lift segment blocked")]
    LiftBlocked,
    #[error("insert segment blocked")]
    InsertBlocked,
}

/// A full pick-and-place motion: vertical lift, transit polyline, vertical
/// insert, all planned while holding `holding`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub move_action: MoveAction,
    pub holding: HeldTube,
    pub pick_lift: [Config; 2],
    pub transit: Vec<Config>,
    pub place_insert: [Config; 2],
}

impl Trajectory {
    pub fn transit_length_mm(&self) -> f64 {
        self.transit
            .windows(2)
            .map(|w| {
                let (a, b) = (&w[0], &w[1]);
                ((a.x - b.x).powi(2) + (a.y - b.y).powi(2) + (a.z - b.z).powi(2)).sqrt()
            })
            .sum()
    }
}

/// Zero the tilt DOFs; idempotent.
pub fn project_upright(q: &Config) -> Config {
    Config { pitch: 0.0, roll: 0.0, ..*q }
}

/// Pure geometric check: gripper volumes (and the held tube, if any) clear
/// of every rack body, resident tube, and the table half-space.
pub fn collision_free(world: &WorldModel, q: &Config, holding: Option<&HeldTube>) -> bool {
    let opening = match holding {
        Some(h) => 2.0 * (world.tube_type(h.tube).radius_mm + world.gripper.grasp_clearance_mm),
        None => world.gripper.max_open_mm,
    };
    let volumes = world.gripper.volumes(q, opening);
    let capsules = world.resident_capsules(None);
    let walls = world.rack_boxes();
    for v in &volumes {
        if v.min_z() < world.table_z_mm {
            return false;
        }
        let bound = v.half_extents.norm();
        for cap in &capsules {
            let center = nalgebra::center(&cap.a, &cap.b);
            let cap_bound = (cap.b - cap.a).norm() / 2.0 + cap.radius;
            if (v.pose.translation.vector - center.coords).norm() > bound + cap_bound {
                continue;
            }
            if capsule_obb_collide(cap, v) {
                return false;
            }
        }
        for wbox in &walls {
            let sep = (v.pose.translation.vector - wbox.pose.translation.vector).norm();
            if sep > bound + wbox.half_extents.norm() {
                continue;
            }
            if obb_obb_collide(wbox, v) {
                return false;
            }
        }
    }
    if let Some(h) = holding {
        let cap = held_capsule(world, q, h);
        if cap.min_z() < world.table_z_mm {
            return false;
        }
        if capsules.iter().any(|c| capsule_capsule_collide(c, &cap)) {
            return false;
        }
        if walls.iter().any(|w| capsule_obb_collide(&cap, w)) {
            return false;
        }
    }
    true
}

/// Weighted configuration distance; angular terms scale by the finger
/// length so one radian costs about one finger length of travel.
fn config_dist(world: &WorldModel, a: &Config, b: &Config) -> f64 {
    let w = world.gripper.finger_length_mm;
    let dp = (a.x - b.x).powi(2) + (a.y - b.y).powi(2) + (a.z - b.z).powi(2);
    let da = (a.yaw - b.yaw).powi(2) + (a.pitch - b.pitch).powi(2) + (a.roll - b.roll).powi(2);
    (dp + w * w * da).sqrt()
}

fn lerp(a: &Config, b: &Config, t: f64) -> Config {
    Config {
        x: a.x + (b.x - a.x) * t,
        y: a.y + (b.y - a.y) * t,
        z: a.z + (b.z - a.z) * t,
        yaw: a.yaw + (b.yaw - a.yaw) * t,
        pitch: a.pitch + (b.pitch - a.pitch) * t,
        roll: a.roll + (b.roll - a.roll) * t,
    }
}

/// Config validity = IK (workspace + yaw range) plus collision freedom,
/// plus the upright tolerance while holding.
fn valid(world: &WorldModel, q: &Config, holding: Option<&HeldTube>, params: &MotionParams) -> bool {
    if !q.is_finite() {
        return false;
    }
    if holding.is_some() && (q.pitch.abs() > params.tilt_eps_rad || q.roll.abs() > params.tilt_eps_rad)
    {
        return false;
    }
    world.gripper.in_workspace(&q.position())
        && world.gripper.yaw_feasible(q.yaw)
        && collision_free(world, q, holding)
}

fn segment_valid(
    world: &WorldModel,
    a: &Config,
    b: &Config,
    holding: Option<&HeldTube>,
    params: &MotionParams,
) -> bool {
    let n = ((config_dist(world, a, b) / (params.step_mm / 2.0)).ceil() as usize).max(1);
    (0..=n).all(|i| valid(world, &lerp(a, b, i as f64 / n as f64), holding, params))
}

struct TreeNode {
    q: Config,
    parent: Option<usize>,
}

fn nearest(world: &WorldModel, tree: &[TreeNode], q: &Config) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, n) in tree.iter().enumerate() {
        let d = config_dist(world, &n.q, q);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

fn steer(world: &WorldModel, from: &Config, to: &Config, step: f64) -> Config {
    let d = config_dist(world, from, to);
    if d <= step {
        *to
    } else {
        lerp(from, to, step / d)
    }
}

fn path_to_root(tree: &[TreeNode], mut idx: usize) -> Vec<Config> {
    let mut out = vec![tree[idx].q];
    while let Some(p) = tree[idx].parent {
        idx = p;
        out.push(tree[idx].q);
    }
    out
}

/// Bidirectional RRT-connect with upright projection. Returns the smoothed
/// polyline and the number of sampler iterations spent.
pub fn plan_transit(
    world: &WorldModel,
    start: &Config,
    goal: &Config,
    holding: Option<&HeldTube>,
    params: &MotionParams,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Config>, usize), MotionFailure> {
    debug_assert!(valid(world, start, holding, params), "start config invalid");
    debug_assert!(valid(world, goal, holding, params), "goal config invalid");
    if config_dist(world, start, goal) < 1e-9 {
        return Ok((vec![*start], 0));
    }
    // easy case first: the straight segment
    if segment_valid(world, start, goal, holding, params) {
        return Ok((vec![*start, *goal], 0));
    }

    let ws_min = world.gripper.workspace_min;
    let ws_max = world.gripper.workspace_max;
    let [yaw_lo, yaw_hi] = world.gripper.yaw_range;
    let sample = |rng: &mut ChaCha8Rng| {
        let mut q = Config {
            x: rng.gen_range(ws_min[0]..=ws_max[0]),
            y: rng.gen_range(ws_min[1]..=ws_max[1]),
            z: rng.gen_range(ws_min[2]..=ws_max[2]),
            yaw: rng.gen_range(yaw_lo..=yaw_hi),
            pitch: rng.gen_range(-0.3..=0.3),
            roll: rng.gen_range(-0.3..=0.3),
        };
        if holding.is_some() {
            q = project_upright(&q);
        }
        q
    };

    let mut tree_a = vec![TreeNode { q: *start, parent: None }];
    let mut tree_b = vec![TreeNode { q: *goal, parent: None }];
    let mut a_is_start = true;
    let mut iters = 0usize;

    while iters < params.max_iters {
        iters += 1;
        let target = sample(rng);
        // extend tree A one step toward the sample
        let near = nearest(world, &tree_a, &target);
        let q_new = {
            let mut q = steer(world, &tree_a[near].q, &target, params.step_mm);
            if holding.is_some() {
                q = project_upright(&q);
            }
            q
        };
        if !segment_valid(world, &tree_a[near].q, &q_new, holding, params) {
            std::mem::swap(&mut tree_a, &mut tree_b);
            a_is_start = !a_is_start;
            continue;
        }
        tree_a.push(TreeNode { q: q_new, parent: Some(near) });
        let new_idx = tree_a.len() - 1;

        // greedily connect tree B toward the new node
        let mut cur = nearest(world, &tree_b, &q_new);
        let connected = loop {
            let q_next = {
                let mut q = steer(world, &tree_b[cur].q, &q_new, params.step_mm);
                if holding.is_some() {
                    q = project_upright(&q);
                }
                q
            };
            if !segment_valid(world, &tree_b[cur].q, &q_next, holding, params) {
                break false;
            }
            tree_b.push(TreeNode { q: q_next, parent: Some(cur) });
            cur = tree_b.len() - 1;
            if config_dist(world, &q_next, &q_new) < 1e-9 {
                break true;
            }
        };

        if connected {
            let mut half_a = path_to_root(&tree_a, new_idx);
            half_a.reverse(); // root .. new
            let half_b = path_to_root(&tree_b, cur); // connect .. root
            let mut path: Vec<Config> = half_a;
            path.extend(half_b.into_iter().skip(1)); // skip duplicated joint
            if !a_is_start {
                path.reverse();
            }
            let path = shortcut(world, path, holding, params, rng);
            return Ok((path, iters));
        }
        std::mem::swap(&mut tree_a, &mut tree_b);
        a_is_start = !a_is_start;
    }
    Err(MotionFailure::BudgetExhausted)
}

/// Random shortcut smoothing: keep a splice when it is valid and shorter.
fn shortcut(
    world: &WorldModel,
    mut path: Vec<Config>,
    holding: Option<&HeldTube>,
    params: &MotionParams,
    rng: &mut ChaCha8Rng,
) -> Vec<Config> {
    for _ in 0..params.shortcut_passes {
        if path.len() < 3 {
            break;
        }
        let i = rng.gen_range(0..path.len() - 2);
        let j = rng.gen_range(i + 2..path.len());
        let direct = config_dist(world, &path[i], &path[j]);
        let via: f64 = (i..j)
            .map(|k| config_dist(world, &path[k], &path[k + 1]))
            .sum();
        if direct < via && segment_valid(world, &path[i], &path[j], holding, params) {
            path.drain(i + 1..j);
        }
    }
    path
}

/// Plan a full pick-and-place for `m` using one grasp configuration pair:
/// lift along the source hole axis, transit, insert along the destination
/// hole axis, all with the tube in hand and the source hole emptied.
/// Returns the trajectory and the sampler iterations spent.
pub fn plan_pick_place(
    world: &WorldModel,
    m: &MoveAction,
    pair: &ConfigPair,
    params: &MotionParams,
    rng: &mut ChaCha8Rng,
) -> Result<(Trajectory, usize), MotionFailure> {
    let holding = HeldTube { tube: m.tube, grip_height_mm: pair.candidate.grip_height_mm };
    let mut lifted_state = world.state.clone();
    lifted_state.set(m.from, None);
    let scene = world.with_state(lifted_state);

    let (_, src_axis) = hole_world_pose(&world.layouts[m.from.rack], m.from)
        .expect("move source in bounds");
    let (_, dst_axis) = hole_world_pose(&world.layouts[m.to.rack], m.to)
        .expect("move destination in bounds");

    let lift_of = |q: &Config, axis: &nalgebra::Vector3<f64>| Config {
        x: q.x + axis.x * params.lift_height_mm,
        y: q.y + axis.y * params.lift_height_mm,
        z: q.z + axis.z * params.lift_height_mm,
        ..*q
    };
    let pick = pair.pick_config;
    let lifted_pick = lift_of(&pick, &src_axis);
    if !segment_valid(&scene, &pick, &lifted_pick, Some(&holding), params) {
        return Err(MotionFailure::LiftBlocked);
    }
    let place = pair.place_config;
    let lifted_place = lift_of(&place, &dst_axis);
    if !segment_valid(&scene, &lifted_place, &place, Some(&holding), params) {
        return Err(MotionFailure::InsertBlocked);
    }
    let (transit, iters) =
        plan_transit(&scene, &lifted_pick, &lifted_place, Some(&holding), params, rng)?;
    Ok((
        Trajectory {
            move_action: *m,
            holding,
            pick_lift: [pick, lifted_pick],
            transit,
            place_insert: [lifted_place, place],
        },
        iters,
    ))
}

/// Re-check every trajectory invariant at `step_mm` resolution: segment
/// continuity, the upright tolerance, and collision freedom throughout.
/// `world` is the scene before the move.
pub fn validate_trajectory(world: &WorldModel, t: &Trajectory, params: &MotionParams) -> bool {
    let mut lifted_state = world.state.clone();
    if lifted_state.get(t.move_action.from) != Some(t.move_action.tube) {
        return false;
    }
    lifted_state.set(t.move_action.from, None);
    let scene = world.with_state(lifted_state);
    let holding = Some(&t.holding);

    if t.transit.is_empty() {
        return false;
    }
    let joined = config_dist(&scene, &t.pick_lift[1], &t.transit[0]) < 1e-9
        && config_dist(&scene, t.transit.last().unwrap(), &t.place_insert[0]) < 1e-9;
    if !joined {
        return false;
    }
    let mut segments: Vec<(Config, Config)> = vec![(t.pick_lift[0], t.pick_lift[1])];
    segments.extend(t.transit.windows(2).map(|w| (w[0], w[1])));
    segments.push((t.place_insert[0], t.place_insert[1]));
    segments
        .iter()
        .all(|(a, b)| segment_valid(&scene, a, b, holding, params))
}
