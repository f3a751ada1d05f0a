//! Point clouds and the synthetic top-down sensor.

use crate::rack::{hole_world_pose, RackLayout};
use crate::world::WorldModel;
use nalgebra::Point3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3<f64>>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Point3<f64> {
        let mut sum = nalgebra::Vector3::zeros();
        for p in &self.points {
            sum += p.coords;
        }
        Point3::from(sum / self.points.len().max(1) as f64)
    }

    /// ASCII XYZ serialization: one "x y z" millimeter triple per line.
    pub fn to_xyz(&self) -> String {
        let mut out = String::with_capacity(self.points.len() * 24);
        for p in &self.points {
            out.push_str(&format!("{} {} {}\n", p.x, p.y, p.z));
        }
        out
    }

    pub fn from_xyz(text: &str) -> Result<PointCloud, String> {
        let mut points = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let mut next = || -> Result<f64, String> {
                it.next()
                    .ok_or_else(|| format!("line {}: missing coordinate", i + 1))?
                    .parse::<f64>()
                    .map_err(|e| format!("line {}: {e}", i + 1))
            };
            points.push(Point3::new(next()?, next()?, next()?));
        }
        Ok(PointCloud { points })
    }
}

/// Synthetic sensor model. Transparent tubes lose `dropout_rate` of their
/// points; `reflective_noise_count` spurious points land anywhere in the
/// sensor frustum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorParams {
    pub points_per_mm2: f64,
    pub gauss_sigma_mm: f64,
    pub dropout_rate: f64,
    pub reflective_noise_count: usize,
    pub seed: u64,
}

impl Default for SensorParams {
    fn default() -> Self {
        SensorParams {
            points_per_mm2: 0.35,
            gauss_sigma_mm: 0.0,
            dropout_rate: 0.0,
            reflective_noise_count: 0,
            seed: 0,
        }
    }
}

fn footprint(layout: &RackLayout) -> (f64, f64, f64, f64) {
    let p = layout.pitch_mm;
    (
        -p / 2.0,
        (layout.cols as f64 - 1.0) * p + p / 2.0,
        -p / 2.0,
        (layout.rows as f64 - 1.0) * p + p / 2.0,
    )
}

/// Fiducial tab next to hole (0,0): breaks the rack's 180-degree symmetry
/// for pose disambiguation (stands in for a label on the physical rack).
fn fiducial_bounds(layout: &RackLayout) -> (f64, f64, f64, f64) {
    let (x_lo, _, y_lo, _) = footprint(layout);
    (x_lo - 8.0, x_lo, y_lo, y_lo + 14.0)
}

fn in_hole_cell(layout: &RackLayout, x: f64, y: f64) -> bool {
    let p = layout.pitch_mm;
    let w = layout.hole_width_mm;
    let col = (x / p).round();
    let row = (y / p).round();
    if col < 0.0 || row < 0.0 || col >= layout.cols as f64 || row >= layout.rows as f64 {
        return false;
    }
    (x - col * p).abs() <= w / 2.0 && (y - row * p).abs() <= w / 2.0
}

/// Rack-frame template cloud of the empty rack top plus the fiducial tab.
/// Deterministic for a given layout and density, so a scene cloud's rack
/// points are an exact rigid transform of the template's.
pub fn rack_template(layout: &RackLayout, points_per_mm2: f64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7261636b); // fixed: template pattern
    let (x_lo, x_hi, y_lo, y_hi) = footprint(layout);
    let area = (x_hi - x_lo) * (y_hi - y_lo);
    let target = (area * points_per_mm2).round() as usize;
    let mut points = Vec::with_capacity(target);
    let mut attempts = 0usize;
    while points.len() < target && attempts < target * 20 {
        attempts += 1;
        let x = rng.gen_range(x_lo..x_hi);
        let y = rng.gen_range(y_lo..y_hi);
        if in_hole_cell(layout, x, y) {
            continue;
        }
        points.push(Point3::new(x, y, 0.0));
    }
    let (fx_lo, fx_hi, fy_lo, fy_hi) = fiducial_bounds(layout);
    let n_fid = ((fx_hi - fx_lo) * (fy_hi - fy_lo) * points_per_mm2).round() as usize;
    for _ in 0..n_fid {
        points.push(Point3::new(
            rng.gen_range(fx_lo..fx_hi),
            rng.gen_range(fy_lo..fy_hi),
            0.0,
        ));
    }
    PointCloud { points }
}

/// Sample the top-down visible surfaces of one world: rack tops (with the
/// fiducial), tube top disks, and tube upper side bands. Deterministic per
/// seed.
pub fn synth_cloud(world: &WorldModel, sp: &SensorParams) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(sp.seed);
    let mut points: Vec<Point3<f64>> = Vec::new();

    for layout in &world.layouts {
        let template = rack_template(layout, sp.points_per_mm2);
        points.extend(template.points.iter().map(|p| layout.base_pose.transform_point(p)));
    }

    // tube tops and upper side bands, with transparency dropout
    for (c, id) in world.state.occupied() {
        let t = world.tube_type(id);
        let layout = &world.layouts[c.rack];
        let (center, axis) = hole_world_pose(layout, c).expect("occupied hole in bounds");
        let r = t.radius_mm;
        let top_area = std::f64::consts::PI * r * r;
        let n_top = (top_area * sp.points_per_mm2).round() as usize;
        for _ in 0..n_top {
            let rad = r * rng.gen_range(0.0f64..1.0).sqrt();
            let ang = rng.gen_range(0.0..std::f64::consts::TAU);
            if rng.gen_bool(sp.dropout_rate.clamp(0.0, 1.0)) {
                continue;
            }
            let p = center
                + axis * t.protrusion_mm
                + layout.base_pose.rotation.transform_vector(&nalgebra::Vector3::new(
                    rad * ang.cos(),
                    rad * ang.sin(),
                    0.0,
                ));
            points.push(p);
        }
        let side_area = std::f64::consts::TAU * r * t.protrusion_mm;
        // grazing view: the sensor sees the side at reduced density
        let n_side = (side_area * sp.points_per_mm2 * 0.35).round() as usize;
        for _ in 0..n_side {
            let h = rng.gen_range(0.0..t.protrusion_mm);
            let ang = rng.gen_range(0.0..std::f64::consts::TAU);
            if rng.gen_bool(sp.dropout_rate.clamp(0.0, 1.0)) {
                continue;
            }
            let p = center
                + axis * h
                + layout.base_pose.rotation.transform_vector(&nalgebra::Vector3::new(
                    r * ang.cos(),
                    r * ang.sin(),
                    0.0,
                ));
            points.push(p);
        }
    }

    // measurement noise
    if sp.gauss_sigma_mm > 0.0 {
        let normal = Normal::new(0.0, sp.gauss_sigma_mm).expect("sigma >= 0");
        for p in &mut points {
            p.x += normal.sample(&mut rng);
            p.y += normal.sample(&mut rng);
            p.z += normal.sample(&mut rng);
        }
    }

    // reflective spurious points across the sensor frustum
    if sp.reflective_noise_count > 0 {
        let (mut lo, mut hi): (Point3<f64>, Point3<f64>) =
            (Point3::new(-50.0, -50.0, 0.0), Point3::new(50.0, 50.0, 100.0));
        for p in &points {
            for i in 0..3 {
                lo[i] = lo[i].min(p[i] - 30.0);
                hi[i] = hi[i].max(p[i] + 30.0);
            }
        }
        for _ in 0..sp.reflective_noise_count {
            points.push(Point3::new(
                rng.gen_range(lo.x..hi.x),
                rng.gen_range(lo.y..hi.y),
                rng.gen_range(lo.z..hi.z),
            ));
        }
    }

    PointCloud { points }
}
