//! Rough pose estimation by PCA and fine adjustment by point-to-point ICP.

use super::cloud::PointCloud;
use nalgebra::{Matrix3, Point3, Vector3};
use std::collections::HashMap;
use thiserror::Error;

/// Proper rigid transform: rotation (orthonormal, det +1) plus translation.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        // self âˆ˜ other: apply `other` first
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform { rotation: rt, translation: -(rt * self.translation) }
    }

    pub fn yaw(&self) -> f64 {
        self.rotation[(1, 0)].atan2(self.rotation[(0, 0)])
    }

    /// Orthonormality and det(+1) within 1e-9.
    pub fn is_valid(&self) -> bool {
        let r = &self.rotation;
        let ortho = (r.transpose() * r - Matrix3::identity()).norm() < 1e-9;
        ortho && (r.determinant() - 1.0).abs() < 1e-9
    }

    pub fn from_isometry(iso: &nalgebra::Isometry3<f64>) -> Self {
        RigidTransform {
            rotation: *iso.rotation.to_rotation_matrix().matrix(),
            translation: iso.translation.vector,
        }
    }

    /// Yaw rotation by pi about the template centroid, composed after self.
    pub fn flipped_about(&self, template_centroid: &Point3<f64>) -> RigidTransform {
        let flip = Matrix3::from_diagonal(&Vector3::new(-1.0, -1.0, 1.0));
        RigidTransform {
            rotation: self.rotation * flip,
            translation: self.rotation * (template_centroid.coords - flip * template_centroid.coords)
                + self.translation,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum RegistrationError {
    #[error("cloud degenerate for PCA (needs 3+ non-collinear points)")]
    DegenerateCloud,
    #[error("degenerate ICP correspondences")]
    DegenerateCorrespondences,
}

fn centroid_and_covariance(points: &[Point3<f64>]) -> (Point3<f64>, Matrix3<f64>) {
    let n = points.len() as f64;
    let mut c = Vector3::zeros();
    for p in points {
        c += p.coords;
    }
    c /= n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p.coords - c;
        cov += d * d.transpose();
    }
    cov /= n;
    (Point3::from(c), cov)
}

/// Descending-eigenvalue principal basis with skewness-based sign fixing:
/// each axis points toward the heavier third-moment side, so the same
/// object yields the same basis in any frame.
fn principal_basis(points: &[Point3<f64>]) -> Result<(Point3<f64>, Matrix3<f64>), RegistrationError> {
    if points.len() < 3 {
        return Err(RegistrationError::DegenerateCloud);
    }
    let (c, cov) = centroid_and_covariance(points);
    let eig = nalgebra::SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    // collinear clouds have (near) zero second eigenvalue
    if eig.eigenvalues[order[1]] < 1e-9 {
        return Err(RegistrationError::DegenerateCloud);
    }
    let mut axes: Vec<Vector3<f64>> = order
        .iter()
        .map(|&i| eig.eigenvectors.column(i).into_owned())
        .collect();
    for axis in axes.iter_mut().take(2) {
        let skew: f64 = points.iter().map(|p| ((p.coords - c.coords).dot(axis)).powi(3)).sum();
        if skew < 0.0 {
            *axis = -*axis;
        }
    }
    // right-handed basis: third axis from the first two
    let z = axes[0].cross(&axes[1]);
    let basis = Matrix3::from_columns(&[axes[0], axes[1], z]);
    Ok((c, basis))
}

/// Rough template-to-cloud alignment of centroids and principal axes.
/// Racks sit upright, so the result is additionally corrected to map the
/// template's up-axis to world up; the remaining half-turn yaw ambiguity is
/// left to the caller's dual-hypothesis ICP.
pub fn pca_align(cloud: &PointCloud, template: &PointCloud) -> Result<RigidTransform, RegistrationError> {
    let (cc, cb) = principal_basis(&cloud.points)?;
    let (tc, tb) = principal_basis(&template.points)?;
    let mut rotation = cb * tb.transpose();
    // upright correction: flip about the template x-axis when upside down
    if (rotation * Vector3::z()).z < 0.0 {
        let flip_x = Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0));
        rotation *= flip_x;
    }
    let translation = cc.coords - rotation * tc.coords;
    let t = RigidTransform { rotation, translation };
    debug_assert!(t.is_valid());
    Ok(t)
}

#[derive(Debug, Clone)]
pub struct IcpResult {
    pub transform: RigidTransform,
    pub residual_mm: f64,
    pub residual_history: Vec<f64>,
    pub iterations: usize,
}

struct NnGrid {
    cell: f64,
    map: HashMap<(i64, i64, i64), Vec<usize>>,
}

impl NnGrid {
    fn build(points: &[Point3<f64>], cell: f64) -> Self {
        let mut map: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            let k = (
                (p.x / cell).floor() as i64,
                (p.y / cell).floor() as i64,
                (p.z / cell).floor() as i64,
            );
            map.entry(k).or_default().push(i);
        }
        NnGrid { cell, map }
    }

    fn nearest(&self, points: &[Point3<f64>], q: &Point3<f64>) -> usize {
        let kx = (q.x / self.cell).floor() as i64;
        let ky = (q.y / self.cell).floor() as i64;
        let kz = (q.z / self.cell).floor() as i64;
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for ring in 0..64i64 {
            for dx in -ring..=ring {
                for dy in -ring..=ring {
                    for dz in -ring..=ring {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                            continue;
                        }
                        if let Some(bucket) = self.map.get(&(kx + dx, ky + dy, kz + dz)) {
                            for &i in bucket {
                                let d = (points[i] - q).norm();
                                if d < best_d {
                                    best_d = d;
                                    best = i;
                                }
                            }
                        }
                    }
                }
            }
            // a hit in ring r guarantees the true nearest is within r+1
            if best != usize::MAX && best_d <= (ring as f64) * self.cell {
                break;
            }
        }
        if best == usize::MAX {
            // sparse fallback
            for (i, p) in points.iter().enumerate() {
                let d = (p - q).norm();
                if d < best_d {
                    best_d = d;
                    best = i;
                }
            }
        }
        best
    }
}

/// Point-to-point ICP: nearest-neighbor correspondences from the
/// transformed template into the cloud, closed-form rigid update via SVD of
/// the cross-covariance, iterated until the RMS residual stops improving by
/// `conv_eps_mm` or `max_iters` is hit. The residual history is
/// non-increasing by construction.
pub fn icp_refine(
    cloud: &PointCloud,
    template: &PointCloud,
    init: &RigidTransform,
    max_iters: usize,
    conv_eps_mm: f64,
) -> Result<IcpResult, RegistrationError> {
    if cloud.is_empty() || template.is_empty() {
        return Err(RegistrationError::DegenerateCorrespondences);
    }
    let grid = NnGrid::build(&cloud.points, 6.0);
    let mut current = init.clone();
    let mut history = Vec::new();
    let mut prev_res = f64::INFINITY;

    for iter in 0..max_iters.max(1) {
        // correspondences under the current transform
        let moved: Vec<Point3<f64>> = template.points.iter().map(|p| current.apply(p)).collect();
        let pairs: Vec<(Point3<f64>, Point3<f64>)> = moved
            .iter()
            .zip(&template.points)
            .map(|(mp, tp)| (*tp, cloud.points[grid.nearest(&cloud.points, mp)]))
            .collect();
        let res = (moved
            .iter()
            .zip(&pairs)
            .map(|(mp, (_, cp))| (mp - cp).norm_squared())
            .sum::<f64>()
            / pairs.len() as f64)
            .sqrt();
        history.push(res);

        if prev_res - res < conv_eps_mm {
            return Ok(IcpResult { transform: current, residual_mm: res, residual_history: history, iterations: iter + 1 });
        }
        prev_res = res;

        // closed-form rigid update for these correspondences
        let n = pairs.len() as f64;
        let mut tc = Vector3::zeros();
        let mut cc = Vector3::zeros();
        for (tp, cp) in &pairs {
            tc += tp.coords;
            cc += cp.coords;
        }
        tc /= n;
        cc /= n;
        let mut cross = Matrix3::zeros();
        for (tp, cp) in &pairs {
            cross += (cp.coords - cc) * (tp.coords - tc).transpose();
        }
        let svd = nalgebra::SVD::new(cross, true, true);
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut d = Matrix3::identity();
        if (u * vt).determinant() < 0.0 {
            d[(2, 2)] = -1.0;
        }
        let rotation = u * d * vt;
        if !rotation.determinant().is_finite() {
            return Err(RegistrationError::DegenerateCorrespondences);
        }
        let translation = cc - rotation * tc;
        let candidate = RigidTransform { rotation, translation };
        // keep the update only if it does not worsen the residual
        let cand_res = (template
            .points
            .iter()
            .zip(&pairs)
            .map(|(tp, (_, cp))| (candidate.apply(tp) - cp).norm_squared())
            .sum::<f64>()
            / pairs.len() as f64)
            .sqrt();
        if cand_res <= res {
            current = candidate;
        } else {
            return Ok(IcpResult { transform: current, residual_mm: res, residual_history: history, iterations: iter + 1 });
        }
    }
    let residual_mm = *history.last().unwrap_or(&f64::INFINITY);
    let iterations = history.len();
    Ok(IcpResult { transform: current, residual_mm, residual_history: history, iterations })
}
