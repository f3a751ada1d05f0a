//! Per-hole cropping and feature-centroid tube classification.

use super::cloud::PointCloud;
use super::dbscan::{dbscan, NOISE};
use super::registration::{icp_refine, pca_align, RegistrationError, RigidTransform};
use crate::rack::{RackLayout, RackState, TubeType, TubeTypeId};
use nalgebra::Point3;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PerceptionError {
    #[error("no cluster large enough to be the rack")]
    RackNotFound,
    #[error("ground truth lacks examples of tube types: {0:?}")]
    MissingTypeExamples(Vec<String>),
    #[error("hole cloud count {got} does not match hole count {want}")]
    HoleCountMismatch { got: usize, want: usize },
    #[error(transparent)]
    Registration(#[from] RegistrationError),
}

/// Tuning knobs for the segmentation / registration stages of `perceive`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceiveParams {
    pub eps_mm: f64,
    pub min_pts: usize,
    /// Largest cluster must have at least this many points to count as the rack.
    pub min_rack_points: usize,
    /// Height band above the cluster floor treated as the rack top plane.
    pub plane_band_mm: f64,
    /// Points below this rack-frame height are excluded from hole bins.
    pub z_cut_mm: f64,
    /// Template is strided down to at most this many points for PCA/ICP.
    pub template_cap: usize,
    pub icp_max_iters: usize,
    pub icp_conv_eps_mm: f64,
}

impl Default for PerceiveParams {
    fn default() -> Self {
        PerceiveParams {
            eps_mm: 4.0,
            min_pts: 5,
            min_rack_points: 200,
            plane_band_mm: 3.0,
            z_cut_mm: 2.0,
            template_cap: 800,
            icp_max_iters: 40,
            icp_conv_eps_mm: 1e-6,
        }
    }
}

/// Features of one hole's cropped cloud, in the rack frame with the bin
/// center at the origin of the top plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoleFeatures {
    /// Highest point above the rack top, mm.
    pub top_height_mm: f64,
    /// RMS horizontal distance from the bin center, mm.
    pub rms_radius_mm: f64,
    pub count: usize,
}

impl HoleFeatures {
    pub fn compute(hole_cloud: &PointCloud) -> HoleFeatures {
        if hole_cloud.is_empty() {
            return HoleFeatures { top_height_mm: 0.0, rms_radius_mm: 0.0, count: 0 };
        }
        let top = hole_cloud.points.iter().map(|p| p.z).fold(f64::NEG_INFINITY, f64::max);
        let ms = hole_cloud.points.iter().map(|p| p.x * p.x + p.y * p.y).sum::<f64>()
            / hole_cloud.len() as f64;
        HoleFeatures { top_height_mm: top, rms_radius_mm: ms.sqrt(), count: hole_cloud.len() }
    }

    fn vector(&self, expected_count: f64) -> [f64; 3] {
        [self.top_height_mm, self.rms_radius_mm, self.count as f64 / expected_count]
    }
}

/// Nearest-centroid classifier over z-normalized hole features, fitted from
/// a ground-truth-arranged rack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub centroids: Vec<(TubeTypeId, [f64; 3])>,
    pub feature_std: [f64; 3],
    /// Holes with fewer points than this are Empty.
    pub empty_count_threshold: f64,
    /// Mean point count of occupied holes at registration time; normalizes
    /// the count feature.
    pub expected_count: f64,
}

impl ClassifierModel {
    pub fn classify(&self, f: &HoleFeatures) -> Option<TubeTypeId> {
        if (f.count as f64) < self.empty_count_threshold {
            return None;
        }
        let v = f.vector(self.expected_count);
        self.centroids
            .iter()
            .map(|(id, c)| {
                let d2: f64 = (0..3)
                    .map(|i| ((v[i] - c[i]) / self.feature_std[i]).powi(2))
                    .sum();
                (d2, *id)
            })
            .min_by(|a, b| a.partial_cmp(b).unwrap())
            .map(|(_, id)| id)
    }
}

/// Transform the scene cloud into the rack frame and bin points per hole:
/// within half a pitch of the hole center horizontally and above `z_cut_mm`.
/// Returned clouds are hole-local (bin center at the origin), row-major.
pub fn crop_holes(
    cloud: &PointCloud,
    rack_transform: &RigidTransform,
    layout: &RackLayout,
    z_cut_mm: f64,
) -> Vec<PointCloud> {
    let inv = rack_transform.inverse();
    let mut bins = vec![PointCloud::default(); layout.rows * layout.cols];
    let half = layout.pitch_mm / 2.0;
    for p in &cloud.points {
        let q = inv.apply(p);
        if q.z <= z_cut_mm {
            continue;
        }
        let col = (q.x / layout.pitch_mm).round();
        let row = (q.y / layout.pitch_mm).round();
        if col < 0.0 || row < 0.0 || col >= layout.cols as f64 || row >= layout.rows as f64 {
            continue;
        }
        let (cx, cy) = (col * layout.pitch_mm, row * layout.pitch_mm);
        if (q.x - cx).abs() <= half && (q.y - cy).abs() <= half {
            bins[row as usize * layout.cols + col as usize]
                .points
                .push(Point3::new(q.x - cx, q.y - cy, q.z));
        }
    }
    bins
}

/// Fit the classifier from labeled hole clouds (row-major, matching the
/// single-rack `ground_truth`). Every catalog type must appear at least once.
pub fn register_classifier(
    hole_clouds: &[PointCloud],
    ground_truth: &RackState,
    catalog: &[TubeType],
) -> Result<ClassifierModel, PerceptionError> {
    let (rows, cols) = ground_truth.dims(0);
    if hole_clouds.len() != rows * cols {
        return Err(PerceptionError::HoleCountMismatch { got: hole_clouds.len(), want: rows * cols });
    }

    let labels: Vec<Option<TubeTypeId>> = ground_truth.holes().map(|c| ground_truth.get(c)).collect();
    let missing: Vec<String> = catalog
        .iter()
        .filter(|t| !labels.contains(&Some(t.id)))
        .map(|t| t.name.clone())
        .collect();
    if !missing.is_empty() {
        return Err(PerceptionError::MissingTypeExamples(missing));
    }

    let feats: Vec<HoleFeatures> = hole_clouds.iter().map(HoleFeatures::compute).collect();
    let occupied: Vec<(TubeTypeId, &HoleFeatures)> = labels
        .iter()
        .zip(&feats)
        .filter_map(|(l, f)| l.map(|id| (id, f)))
        .collect();
    let expected_count =
        occupied.iter().map(|(_, f)| f.count as f64).sum::<f64>() / occupied.len() as f64;

    // Empty cutoff halfway between the busiest empty hole and the sparsest tube
    let max_empty = labels
        .iter()
        .zip(&feats)
        .filter(|(l, _)| l.is_none())
        .map(|(_, f)| f.count as f64)
        .fold(0.0, f64::max);
    let min_occ = occupied.iter().map(|(_, f)| f.count as f64).fold(f64::INFINITY, f64::min);
    let empty_count_threshold =
        if labels.iter().any(|l| l.is_none()) { (max_empty + min_occ) / 2.0 } else { min_occ / 4.0 };

    let mut sums: HashMap<TubeTypeId, ([f64; 3], usize)> = HashMap::new();
    let mut all = Vec::new();
    for (id, f) in &occupied {
        let v = f.vector(expected_count);
        let e = sums.entry(*id).or_insert(([0.0; 3], 0));
        for i in 0..3 {
            e.0[i] += v[i];
        }
        e.1 += 1;
        all.push(v);
    }
    let mut centroids: Vec<(TubeTypeId, [f64; 3])> = sums
        .into_iter()
        .map(|(id, (s, n))| (id, [s[0] / n as f64, s[1] / n as f64, s[2] / n as f64]))
        .collect();
    centroids.sort_by_key(|(id, _)| *id);

    let mean: [f64; 3] = {
        let mut m = [0.0; 3];
        for v in &all {
            for i in 0..3 {
                m[i] += v[i];
            }
        }
        m.map(|x| x / all.len() as f64)
    };
    let mut feature_std = [0.0; 3];
    for v in &all {
        for i in 0..3 {
            feature_std[i] += (v[i] - mean[i]).powi(2);
        }
    }
    // floor keeps normalization sane when a feature is constant at registration
    feature_std = feature_std.map(|s| (s / all.len() as f64).sqrt().max(1e-3));

    Ok(ClassifierModel { centroids, feature_std, empty_count_threshold, expected_count })
}

fn stride_subsample(cloud: &PointCloud, cap: usize) -> PointCloud {
    if cloud.len() <= cap {
        return cloud.clone();
    }
    let stride = cloud.len().div_ceil(cap);
    PointCloud { points: cloud.points.iter().step_by(stride).copied().collect() }
}

/// Segment the scene, pick the largest cluster as the rack, and estimate its
/// pose (template -> world) by PCA followed by dual-yaw-hypothesis ICP.
pub fn locate_rack(
    cloud: &PointCloud,
    template: &PointCloud,
    params: &PerceiveParams,
) -> Result<(RigidTransform, f64), PerceptionError> {
    let labels = dbscan(cloud, params.eps_mm, params.min_pts);
    let mut counts: HashMap<i32, usize> = HashMap::new();
    for &l in &labels {
        if l != NOISE {
            *counts.entry(l).or_default() += 1;
        }
    }
    let (&rack_label, &n) = counts
        .iter()
        .max_by_key(|(&l, &n)| (n, std::cmp::Reverse(l)))
        .ok_or(PerceptionError::RackNotFound)?;
    if n < params.min_rack_points {
        return Err(PerceptionError::RackNotFound);
    }
    let cluster: Vec<Point3<f64>> = cloud
        .points
        .iter()
        .zip(&labels)
        .filter(|(_, &l)| l == rack_label)
        .map(|(p, _)| *p)
        .collect();

    // keep only the cluster's floor band: the rack top plane, shedding the
    // tube points that sit above it
    let mut zs: Vec<f64> = cluster.iter().map(|p| p.z).collect();
    zs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let floor = zs[zs.len() / 20]; // 5th percentile rejects low outliers
    let plane = PointCloud {
        points: cluster.iter().filter(|p| p.z <= floor + params.plane_band_mm).copied().collect(),
    };

    let sub = stride_subsample(template, params.template_cap);
    let init = pca_align(&plane, &sub).map_err(|_| PerceptionError::RackNotFound)?;
    let tc = sub.centroid();
    let mut best: Option<(RigidTransform, f64)> = None;
    for hyp in [init.clone(), init.flipped_about(&tc)] {
        let res = icp_refine(&plane, &sub, &hyp, params.icp_max_iters, params.icp_conv_eps_mm)
            .map_err(|_| PerceptionError::RackNotFound)?;
        if best.as_ref().map_or(true, |(_, r)| res.residual_mm < *r) {
            best = Some((res.transform, res.residual_mm));
        }
    }
    Ok(best.unwrap())
}

/// Full pipeline: segment, register the rack pose, crop per-hole clouds, and
/// classify each hole with the registered model.
pub fn perceive(
    cloud: &PointCloud,
    template: &PointCloud,
    layout: &RackLayout,
    model: &ClassifierModel,
    params: &PerceiveParams,
) -> Result<(RackState, RigidTransform), PerceptionError> {
    let (transform, _residual) = locate_rack(cloud, template, params)?;
    let bins = crop_holes(cloud, &transform, layout, params.z_cut_mm);
    let mut state = RackState::empty(&[(layout.rows, layout.cols)]);
    for (c, bin) in state.holes().collect::<Vec<_>>().into_iter().zip(&bins) {
        state.set(c, model.classify(&HoleFeatures::compute(bin)));
    }
    Ok((state, transform))
}
