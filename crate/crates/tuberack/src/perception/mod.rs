//! Synthetic stand-in for the vision pipeline: generate noisy top-down
//! point clouds from the true world, segment with DBSCAN, roughly align
//! with PCA, refine with ICP, crop per-hole clusters, and classify tube
//! types with a registered feature-centroid model.

mod classify;
mod cloud;
mod dbscan;
mod registration;

pub use classify::{
    crop_holes, locate_rack, perceive, register_classifier, ClassifierModel, HoleFeatures,
    PerceiveParams, PerceptionError,
};
pub use cloud::{rack_template, synth_cloud, PointCloud, SensorParams};
pub use dbscan::{dbscan, dbscan_reference, same_partition, NOISE};
pub use registration::{icp_refine, pca_align, IcpResult, RegistrationError, RigidTransform};
