//! Collision primitives shared by grasp reasoning and motion planning.
//!
//! Everything is expressed in millimeters in the world frame. Tubes are
//! modeled as vertical capsules, gripper fingers and rack walls as oriented
//! boxes, and the table as a half-space.

use nalgebra::{Isometry3, Matrix3, Point3, UnitQuaternion, Vector3};

/// Oriented box: a rigid pose plus half-extents along the local axes.
#[derive(Debug, Clone)]
pub struct Obb {
    pub pose: Isometry3<f64>,
    pub half_extents: Vector3<f64>,
}

/// Capsule: segment from `a` to `b` swept by `radius`.
#[derive(Debug, Clone)]
pub struct Capsule {
    pub a: Point3<f64>,
    pub b: Point3<f64>,
    pub radius: f64,
}

impl Obb {
    pub fn new(pose: Isometry3<f64>, half_extents: Vector3<f64>) -> Self {
        Obb { pose, half_extents }
    }

    /// Axis-aligned box given by center and half-extents.
    pub fn axis_aligned(center: Point3<f64>, half_extents: Vector3<f64>) -> Self {
        Obb {
            pose: Isometry3::translation(center.x, center.y, center.z),
            half_extents,
        }
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        let local = self.pose.inverse_transform_point(p);
        local.x.abs() <= self.half_extents.x
            && local.y.abs() <= self.half_extents.y
            && local.z.abs() <= self.half_extents.z
    }

    /// Lowest world-frame z over the box volume.
    pub fn min_z(&self) -> f64 {
        let r = self.pose.rotation.to_rotation_matrix();
        let m: &Matrix3<f64> = r.matrix();
        // support in -z: sum of |R_z row| * half extents
        let drop = m.row(2).iter().zip(self.half_extents.iter()).map(|(a, h)| a.abs() * h).sum::<f64>();
        self.pose.translation.z - drop
    }

    pub fn corners(&self) -> [Point3<f64>; 8] {
        let h = self.half_extents;
        let mut out = [Point3::origin(); 8];
        let mut i = 0;
        for sx in [-1.0, 1.0] {
            for sy in [-1.0, 1.0] {
                for sz in [-1.0, 1.0] {
                    out[i] = self.pose.transform_point(&Point3::new(sx * h.x, sy * h.y, sz * h.z));
                    i += 1;
                }
            }
        }
        out
    }
}

impl Capsule {
    pub fn contains(&self, p: &Point3<f64>) -> bool {
        dist_point_segment(p, &self.a, &self.b) <= self.radius
    }

    pub fn min_z(&self) -> f64 {
        self.a.z.min(self.b.z) - self.radius
    }
}

pub fn dist_point_segment(p: &Point3<f64>, a: &Point3<f64>, b: &Point3<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 <= f64::EPSILON {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Distance from a point to an axis-aligned box centered at the origin.
fn dist_point_aabb(p: &Point3<f64>, h: &Vector3<f64>) -> f64 {
    let dx = (p.x.abs() - h.x).max(0.0);
    let dy = (p.y.abs() - h.y).max(0.0);
    let dz = (p.z.abs() - h.z).max(0.0);
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Distance from a segment to an oriented box (0 if they intersect).
///
/// The segment is mapped into the box frame; the point-to-AABB distance is
/// convex along the segment, so a ternary search converges to the minimum.
pub fn dist_segment_obb(a: &Point3<f64>, b: &Point3<f64>, obb: &Obb) -> f64 {
    let la = obb.pose.inverse_transform_point(a);
    let lb = obb.pose.inverse_transform_point(b);
    let h = obb.half_extents;
    let eval = |t: f64| dist_point_aabb(&(la + (lb - la) * t), &h);
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..80 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if eval(m1) <= eval(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    eval(0.5 * (lo + hi)).min(eval(0.0)).min(eval(1.0))
}

pub fn dist_segment_segment(
    p1: &Point3<f64>,
    q1: &Point3<f64>,
    p2: &Point3<f64>,
    q2: &Point3<f64>,
) -> f64 {
    // closest points between two segments, Ericson-style clamped solve
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.norm_squared();
    let e = d2.norm_squared();
    let f = d2.dot(&r);
    let (s, t);
    if a <= f64::EPSILON && e <= f64::EPSILON {
        return (p1 - p2).norm();
    }
    if a <= f64::EPSILON {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = d1.dot(&r);
        if e <= f64::EPSILON {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            let mut s_ = if denom > f64::EPSILON {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut t_ = (b * s_ + f) / e;
            if t_ < 0.0 {
                t_ = 0.0;
                s_ = (-c / a).clamp(0.0, 1.0);
            } else if t_ > 1.0 {
                t_ = 1.0;
                s_ = ((b - c) / a).clamp(0.0, 1.0);
            }
            s = s_;
            t = t_;
        }
    }
    ((p1 + d1 * s) - (p2 + d2 * t)).norm()
}

pub fn capsule_capsule_collide(c1: &Capsule, c2: &Capsule) -> bool {
    dist_segment_segment(&c1.a, &c1.b, &c2.a, &c2.b) < c1.radius + c2.radius
}

pub fn capsule_obb_collide(c: &Capsule, o: &Obb) -> bool {
    dist_segment_obb(&c.a, &c.b, o) < c.radius
}

/// Penetration-style signed margin: negative means overlap by that depth.
pub fn capsule_obb_clearance(c: &Capsule, o: &Obb) -> f64 {
    dist_segment_obb(&c.a, &c.b, o) - c.radius
}

/// SAT over the 15 candidate axes for a pair of oriented boxes.
pub fn obb_obb_collide(a: &Obb, b: &Obb) -> bool {
    let ra = a.pose.rotation.to_rotation_matrix();
    let rb = b.pose.rotation.to_rotation_matrix();
    let mut axes: Vec<Vector3<f64>> = Vec::with_capacity(15);
    for i in 0..3 {
        axes.push(ra.matrix().column(i).into());
        axes.push(rb.matrix().column(i).into());
    }
    for i in 0..3 {
        for j in 0..3 {
            let ax: Vector3<f64> = ra.matrix().column(i).cross(&rb.matrix().column(j));
            if ax.norm_squared() > 1e-12 {
                axes.push(ax.normalize());
            }
        }
    }
    let ca = a.pose.translation.vector;
    let cb = b.pose.translation.vector;
    for axis in &axes {
        let proj_a: f64 = (0..3)
            .map(|i| (ra.matrix().column(i).dot(axis) * a.half_extents[i]).abs())
            .sum();
        let proj_b: f64 = (0..3)
            .map(|i| (rb.matrix().column(i).dot(axis) * b.half_extents[i]).abs())
            .sum();
        if ((cb - ca).dot(axis)).abs() > proj_a + proj_b {
            return false;
        }
    }
    true
}

/// Build a pose from a position and z-y-x Euler angles (yaw about z first).
pub fn pose_from_xyz_ypr(x: f64, y: f64, z: f64, yaw: f64, pitch: f64, roll: f64) -> Isometry3<f64> {
    Isometry3::from_parts(
        Vector3::new(x, y, z).into(),
        UnitQuaternion::from_euler_angles(roll, pitch, yaw),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn point_segment_distance_basic() {
        let d = dist_point_segment(
            &Point3::new(0.0, 1.0, 0.0),
            &Point3::new(-1.0, 0.0, 0.0),
            &Point3::new(1.0, 0.0, 0.0),
        );
        assert_relative_eq!(d, 1.0);
    }

    #[test]
    fn segment_obb_distance_matches_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let obb = Obb::new(
                pose_from_xyz_ypr(
                    rng.gen_range(-5.0..5.0),
                    rng.gen_range(-5.0..5.0),
                    rng.gen_range(-5.0..5.0),
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ),
                Vector3::new(
                    rng.gen_range(0.5..3.0),
                    rng.gen_range(0.5..3.0),
                    rng.gen_range(0.5..3.0),
                ),
            );
            let a = Point3::new(
                rng.gen_range(-10.0..10.0),
                rng.gen_range(-10.0..10.0),
                rng.gen_range(-10.0..10.0),
            );
            let b = Point3::new(
                rng.gen_range(-10.0..10.0),
                rng.gen_range(-10.0..10.0),
                rng.gen_range(-10.0..10.0),
            );
            let analytic = dist_segment_obb(&a, &b, &obb);
            // brute-force: dense samples along the segment
            let mut best = f64::INFINITY;
            for i in 0..=2000 {
                let t = i as f64 / 2000.0;
                let p = a + (b - a) * t;
                let local = obb.pose.inverse_transform_point(&p);
                best = best.min(dist_point_aabb(&local, &obb.half_extents));
            }
            assert!(
                (analytic - best).abs() < 1e-3,
                "analytic {analytic} vs sampled {best}"
            );
        }
    }

    #[test]
    fn obb_obb_separated_and_overlapping() {
        let a = Obb::axis_aligned(Point3::origin(), Vector3::new(1.0, 1.0, 1.0));
        let b = Obb::axis_aligned(Point3::new(3.0, 0.0, 0.0), Vector3::new(1.0, 1.0, 1.0));
        assert!(!obb_obb_collide(&a, &b));
        let c = Obb::axis_aligned(Point3::new(1.5, 0.0, 0.0), Vector3::new(1.0, 1.0, 1.0));
        assert!(obb_obb_collide(&a, &c));
        // rotated 45 degrees about z, corner reaching into a
        let d = Obb::new(
            pose_from_xyz_ypr(2.2, 0.0, 0.0, std::f64::consts::FRAC_PI_4, 0.0, 0.0),
            Vector3::new(1.0, 1.0, 1.0),
        );
        assert!(obb_obb_collide(&a, &d));
    }

    #[test]
    fn capsule_capsule_distance() {
        let c1 = Capsule {
            a: Point3::new(0.0, 0.0, 0.0),
            b: Point3::new(0.0, 0.0, 5.0),
            radius: 1.0,
        };
        let c2 = Capsule {
            a: Point3::new(2.5, 0.0, 0.0),
            b: Point3::new(2.5, 0.0, 5.0),
            radius: 1.0,
        };
        assert!(!capsule_capsule_collide(&c1, &c2));
        let c3 = Capsule {
            a: Point3::new(1.5, 0.0, 0.0),
            b: Point3::new(1.5, 0.0, 5.0),
            radius: 1.0,
        };
        assert!(capsule_capsule_collide(&c1, &c3));
    }

    #[test]
    fn min_z_of_rotated_box() {
        let o = Obb::new(
            pose_from_xyz_ypr(0.0, 0.0, 10.0, 0.0, std::f64::consts::FRAC_PI_2, 0.0),
            Vector3::new(3.0, 1.0, 1.0),
        );
        // x half-extent now points along -z/+z
        assert_relative_eq!(o.min_z(), 7.0, epsilon = 1e-9);
    }
}
