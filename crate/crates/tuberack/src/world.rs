//! Planning scene: rack layouts, occupancy, table, gripper, and the
//! collision shapes derived from them.

use crate::geom::{Capsule, Obb};
use crate::rack::{hole_world_pose, HoleCoord, RackLayout, RackState, TubeType, TubeTypeId};
use nalgebra::{Point3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

/// Gripper pose: position plus z-y-x Euler angles. Yaw rotates the finger
/// closing axis about vertical; pitch and roll are the tilt DOFs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl Config {
    pub fn new(x: f64, y: f64, z: f64, yaw: f64) -> Self {
        Config { x, y, z, yaw, pitch: 0.0, roll: 0.0 }
    }

    pub fn position(&self) -> Point3<f64> {
        Point3::new(self.x, self.y, self.z)
    }

    pub fn rotation(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_euler_angles(self.roll, self.pitch, self.yaw)
    }

    pub fn is_finite(&self) -> bool {
        [self.x, self.y, self.z, self.yaw, self.pitch, self.roll]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Simulated parallel-jaw hand on a Cartesian gantry. IK feasibility is
/// workspace-box membership plus yaw-range membership (mod the jaw's
/// half-turn symmetry).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GripperModel {
    pub finger_length_mm: f64,
    pub finger_width_mm: f64,
    pub finger_thickness_mm: f64,
    pub max_open_mm: f64,
    pub palm_clearance_mm: f64,
    pub grasp_clearance_mm: f64,
    pub workspace_min: [f64; 3],
    pub workspace_max: [f64; 3],
    pub yaw_range: [f64; 2],
}

impl GripperModel {
    pub fn in_workspace(&self, p: &Point3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.workspace_min[i] && p[i] <= self.workspace_max[i])
    }

    /// Yaw feasibility after exploiting the jaw's pi symmetry.
    pub fn yaw_feasible(&self, yaw: f64) -> bool {
        let [lo, hi] = self.yaw_range;
        for k in [-2.0, -1.0, 0.0, 1.0, 2.0] {
            let y = yaw + k * std::f64::consts::PI;
            if y >= lo - 1e-12 && y <= hi + 1e-12 {
                return true;
            }
        }
        false
    }

    /// Finger and palm boxes for the hand at `q` with the given jaw opening
    /// (distance between the inner finger faces).
    pub fn volumes(&self, q: &Config, opening_mm: f64) -> [Obb; 3] {
        let rot = q.rotation();
        let base = nalgebra::Isometry3::from_parts(q.position().coords.into(), rot);
        let ft = self.finger_thickness_mm;
        let half_finger = Vector3::new(ft / 2.0, self.finger_width_mm / 2.0, self.finger_length_mm / 2.0);
        let fx = opening_mm / 2.0 + ft / 2.0;
        let fz = self.finger_length_mm / 2.0;
        let left = Obb::new(base * nalgebra::Isometry3::translation(-fx, 0.0, fz), half_finger);
        let right = Obb::new(base * nalgebra::Isometry3::translation(fx, 0.0, fz), half_finger);
        let palm_h = self.palm_clearance_mm.max(1.0);
        let palm = Obb::new(
            base * nalgebra::Isometry3::translation(0.0, 0.0, self.finger_length_mm + palm_h / 2.0),
            Vector3::new(opening_mm / 2.0 + ft, self.finger_width_mm / 2.0, palm_h / 2.0),
        );
        [left, right, palm]
    }
}

/// A tube carried by the gripper, grasped `grip_height_mm` above the rack
/// top it was lifted from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeldTube {
    pub tube: TubeTypeId,
    pub grip_height_mm: f64,
}

/// Analytic 3D scene shared by grasp reasoning and motion planning.
#[derive(Debug, Clone)]
pub struct WorldModel {
    pub layouts: Vec<RackLayout>,
    pub state: RackState,
    pub table_z_mm: f64,
    pub gripper: GripperModel,
    pub tube_catalog: Vec<TubeType>,
}

impl WorldModel {
    pub fn tube_type(&self, id: TubeTypeId) -> &TubeType {
        self.tube_catalog
            .iter()
            .find(|t| t.id == id)
            .expect("tube id not in catalog")
    }

    pub fn with_state(&self, state: RackState) -> WorldModel {
        WorldModel { state, ..self.clone() }
    }

    /// Seated-tube capsule for the occupant of hole `c`.
    pub fn tube_capsule(&self, c: HoleCoord) -> Option<Capsule> {
        let id = self.state.get(c)?;
        let t = self.tube_type(id);
        let (center, axis) = hole_world_pose(&self.layouts[c.rack], c).ok()?;
        Some(seated_capsule(&center, &axis, t))
    }

    /// Capsules of every resident tube except `exclude`.
    pub fn resident_capsules(&self, exclude: Option<HoleCoord>) -> Vec<Capsule> {
        self.state
            .occupied()
            .filter(|&(c, _)| Some(c) != exclude)
            .filter_map(|(c, _)| self.tube_capsule(c))
            .collect()
    }

    /// Rack bodies as wall strips between hole cells plus a base plate.
    /// The strip union equals the solid body minus the open hole prisms, so
    /// tubes can travel inside hole cells without phantom contact.
    pub fn rack_boxes(&self) -> Vec<Obb> {
        let mut boxes = Vec::new();
        for layout in &self.layouts {
            let p = layout.pitch_mm;
            let w = layout.hole_width_mm;
            let d = layout.hole_depth_mm;
            let rows = layout.rows as f64;
            let cols = layout.cols as f64;
            let (x_lo, x_hi) = (-p / 2.0, (cols - 1.0) * p + p / 2.0);
            let (y_lo, y_hi) = (-p / 2.0, (rows - 1.0) * p + p / 2.0);
            let mut push = |xa: f64, xb: f64, ya: f64, yb: f64, za: f64, zb: f64| {
                let center = Point3::new((xa + xb) / 2.0, (ya + yb) / 2.0, (za + zb) / 2.0);
                let half = Vector3::new((xb - xa) / 2.0, (yb - ya) / 2.0, (zb - za) / 2.0);
                boxes.push(Obb::new(
                    layout.base_pose
                        * nalgebra::Isometry3::translation(center.x, center.y, center.z),
                    half,
                ));
            };
            // strips running along y, between hole columns
            for k in 0..=layout.cols {
                let (xa, xb) = if k == 0 {
                    (x_lo, -w / 2.0)
                } else if k == layout.cols {
                    ((cols - 1.0) * p + w / 2.0, x_hi)
                } else {
                    ((k as f64 - 1.0) * p + w / 2.0, k as f64 * p - w / 2.0)
                };
                push(xa, xb, y_lo, y_hi, -d, 0.0);
            }
            // strips running along x, between hole rows
            for k in 0..=layout.rows {
                let (ya, yb) = if k == 0 {
                    (y_lo, -w / 2.0)
                } else if k == layout.rows {
                    ((rows - 1.0) * p + w / 2.0, y_hi)
                } else {
                    ((k as f64 - 1.0) * p + w / 2.0, k as f64 * p - w / 2.0)
                };
                push(x_lo, x_hi, ya, yb, -d, 0.0);
            }
            // base plate under the holes
            push(x_lo, x_hi, y_lo, y_hi, -d - layout.wall_thickness_mm, -d);
        }
        boxes
    }
}

/// Capsule for a tube seated in a hole: the segment runs along the hole
/// axis, inset by the radius at both ends.
pub fn seated_capsule(hole_center: &Point3<f64>, axis: &Vector3<f64>, t: &TubeType) -> Capsule {
    let top = hole_center + axis * t.protrusion_mm;
    let bottom = hole_center + axis * (t.protrusion_mm - t.height_mm);
    capsule_between(bottom, top, t.radius_mm)
}

/// Capsule whose swept volume spans `bottom`..`top`; degenerate heights
/// collapse to a sphere at the midpoint.
pub fn capsule_between(bottom: Point3<f64>, top: Point3<f64>, radius: f64) -> Capsule {
    let axis = top - bottom;
    let len = axis.norm();
    if len <= 2.0 * radius {
        let mid = nalgebra::center(&bottom, &top);
        Capsule { a: mid, b: mid, radius }
    } else {
        let dir = axis / len;
        Capsule { a: bottom + dir * radius, b: top - dir * radius, radius }
    }
}

/// Capsule of a held tube hanging in the gripper at config `q`.
pub fn held_capsule(world: &WorldModel, q: &Config, held: &HeldTube) -> Capsule {
    let t = world.tube_type(held.tube);
    let axis = q.rotation() * Vector3::z();
    let tcp = q.position();
    let top = tcp + axis * (t.protrusion_mm - held.grip_height_mm);
    let bottom = tcp - axis * (held.grip_height_mm + t.height_mm - t.protrusion_mm);
    capsule_between(bottom, top, t.radius_mm)
}
