use criterion::{black_box, criterion_group, criterion_main, Criterion};
use nalgebra::{Isometry3, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;
use tuberack::motion::collision_free;
use tuberack::rack::{GoalPattern, HoleGoal, RackLayout, RackState, TubeType};
use tuberack::seeding::substream;
use tuberack::world::{Config, GripperModel, WorldModel};
use tuberack::{search, MoveConstraint, PlannerConfig, PlannerSession, WeightMap};

fn gripper() -> GripperModel {
    GripperModel {
        finger_length_mm: 40.0,
        finger_width_mm: 10.0,
        finger_thickness_mm: 4.0,
        max_open_mm: 30.0,
        palm_clearance_mm: 15.0,
        grasp_clearance_mm: 2.0,
        workspace_min: [-150.0, -150.0, 0.0],
        workspace_max: [300.0, 300.0, 350.0],
        yaw_range: [-std::f64::consts::PI, std::f64::consts::PI],
    }
}

fn world(rows: usize, cols: usize, tubes: &[(usize, usize)]) -> WorldModel {
    let layout = RackLayout {
        rows,
        cols,
        pitch_mm: 18.0,
        hole_width_mm: 14.0,
        hole_depth_mm: 35.0,
        wall_thickness_mm: 3.0,
        base_pose: Isometry3::new(Vector3::new(0.0, 0.0, 45.0), Vector3::zeros()),
    };
    let mut state = RackState::empty(&[(rows, cols)]);
    for &(r, c) in tubes {
        state.set(tuberack::HoleCoord::new(0, r, c), Some(1));
    }
    WorldModel {
        layouts: vec![layout],
        state,
        table_z_mm: 0.0,
        gripper: gripper(),
        tube_catalog: vec![TubeType {
            id: 1,
            name: "tall".into(),
            radius_mm: 5.0,
            height_mm: 75.0,
            protrusion_mm: 40.0,
        }],
    }
}

fn shuffled_goal(state: &RackState, rng: &mut ChaCha8Rng) -> GoalPattern {
    let dims: Vec<(usize, usize)> = vec![state.dims(0)];
    let mut goal = GoalPattern::uniform(&dims, HoleGoal::MustEmpty);
    let mut holes: Vec<_> = state.holes().collect();
    holes.shuffle(rng);
    let n = state.holes().filter(|h| state.get(*h).is_some()).count();
    for h in holes.into_iter().take(n) {
        goal.set(h, HoleGoal::Types(BTreeSet::from([1u8])));
    }
    goal
}

fn bench_task_search(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let w = world(4, 6, &[(0, 0), (1, 2), (2, 4), (3, 1), (0, 5)]);
    let goal = shuffled_goal(&w.state, &mut rng);
    c.bench_function("task_search_4x6_5_tubes", |b| {
        b.iter(|| {
            search(
                black_box(&w.state),
                black_box(&goal),
                &Default::default(),
                MoveConstraint::Arrange,
                &WeightMap::new(),
                1_000_000,
            )
        })
    });
}

fn bench_combined_plan(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let w = world(3, 4, &[(0, 0), (2, 2), (1, 3)]);
    let goal = shuffled_goal(&w.state, &mut rng);
    let cfg = PlannerConfig::default();
    c.bench_function("combined_plan_3x4_3_tubes", |b| {
        b.iter(|| {
            let mut motion_rng = substream(7, "motion");
            let mut session = PlannerSession::new();
            session.plan_combined(black_box(&w), black_box(&goal), &cfg, &mut motion_rng)
        })
    });
}

fn bench_collision_check(c: &mut Criterion) {
    let w = world(4, 6, &[(0, 0), (1, 2), (2, 4), (3, 1), (0, 5), (2, 1), (3, 5)]);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let configs: Vec<Config> = (0..256)
        .map(|_| {
            Config::new(
                rng.gen_range(-50.0..150.0),
                rng.gen_range(-50.0..120.0),
                rng.gen_range(20.0..200.0),
                rng.gen_range(-3.1..3.1),
            )
        })
        .collect();
    c.bench_function("collision_free_256_configs", |b| {
        b.iter(|| {
            configs
                .iter()
                .filter(|q| collision_free(black_box(&w), q, None))
                .count()
        })
    });
}

criterion_group!(benches, bench_task_search, bench_combined_plan, bench_collision_check);
criterion_main!(benches);
