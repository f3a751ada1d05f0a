use criterion::{black_box, criterion_group, criterion_main, Criterion};
use nalgebra::{Isometry3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tuberack::perception::{dbscan, icp_refine, pca_align, rack_template, PointCloud};
use tuberack::rack::RackLayout;

fn layout() -> RackLayout {
    RackLayout {
        rows: 4,
        cols: 6,
        pitch_mm: 18.0,
        hole_width_mm: 14.0,
        hole_depth_mm: 35.0,
        wall_thickness_mm: 3.0,
        base_pose: Isometry3::new(Vector3::new(0.0, 0.0, 45.0), Vector3::zeros()),
    }
}

fn bench_dbscan(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cloud = PointCloud {
        points: (0..4000)
            .map(|_| {
                nalgebra::Point3::new(
                    rng.gen_range(-60.0..60.0),
                    rng.gen_range(-60.0..60.0),
                    rng.gen_range(0.0..30.0),
                )
            })
            .collect(),
    };
    c.bench_function("dbscan_4000_points", |b| {
        b.iter(|| dbscan(black_box(&cloud), 3.0, 5))
    });
}

fn bench_icp(c: &mut Criterion) {
    let template = rack_template(&layout(), 0.25);
    let truth = nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), 0.05);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let cloud = PointCloud {
        points: template
            .points
            .iter()
            .map(|p| {
                let q = truth * p + Vector3::new(6.0, -3.0, 0.0);
                nalgebra::Point3::new(
                    q.x + rng.gen_range(-0.2..0.2),
                    q.y + rng.gen_range(-0.2..0.2),
                    q.z + rng.gen_range(-0.2..0.2),
                )
            })
            .collect(),
    };
    c.bench_function("icp_refine_rack_template", |b| {
        b.iter(|| {
            let init = pca_align(black_box(&cloud), &template).unwrap();
            icp_refine(&cloud, &template, &init, 30, 1e-6).unwrap()
        })
    });
}

criterion_group!(benches, bench_dbscan, bench_icp);
criterion_main!(benches);
