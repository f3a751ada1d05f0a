//! Lift-height benchmark: replan the same scenario at several transit lift
//! heights and compare sampler effort, transit length, and lift failures.

use crate::scenario::Scenario;
use serde::{Deserialize, Serialize};
use tuberack::motion::MotionParams;
use tuberack::orchestrator::plan_combined;
use tuberack::seeding::substream;
use tuberack::{EventKind, EventOutcome, PlanTrace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub lift_height_mm: f64,
    pub trials: usize,
    pub successes: usize,
    pub mean_iterations: f64,
    pub median_iterations: f64,
    pub mean_transit_mm: f64,
    /// Motion-plan attempts rejected because the vertical lift was blocked.
    pub lift_blocked: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub seed: u64,
    pub rows: Vec<BenchRow>,
}

fn trace_motion_stats(trace: &PlanTrace) -> (u64, f64, usize, usize) {
    let mut iters = 0u64;
    let mut transit = 0.0f64;
    let mut transits = 0usize;
    let mut lift_blocked = 0usize;
    for e in &trace.events {
        if e.kind != EventKind::MotionPlan {
            continue;
        }
        match &e.outcome {
            EventOutcome::Success => {
                iters += e.payload["iterations"].as_u64().unwrap_or(0);
                transit += e.payload["transit_length_mm"].as_f64().unwrap_or(0.0);
                transits += 1;
            }
            EventOutcome::Failure(reason) if reason == "lift segment blocked" => {
                lift_blocked += 1;
            }
            EventOutcome::Failure(_) => {}
        }
    }
    (iters, transit, transits, lift_blocked)
}

pub fn run_bench(sc: &Scenario, seed: u64, lift_heights: &[f64], trials: usize) -> BenchReport {
    let mut rows = Vec::with_capacity(lift_heights.len());
    for &h in lift_heights {
        let mut cfg = sc.cfg.clone();
        cfg.motion = MotionParams { lift_height_mm: h, ..cfg.motion };

        let mut per_trial_iters: Vec<u64> = Vec::with_capacity(trials);
        let mut successes = 0usize;
        let mut transit_sum = 0.0f64;
        let mut transit_n = 0usize;
        let mut lift_blocked = 0usize;
        for t in 0..trials {
            let mut rng = substream(seed, &format!("bench-{h}-{t}"));
            let (result, trace) = plan_combined(&sc.world, &sc.goal, &cfg, &mut rng);
            let (iters, transit, transits, blocked) = trace_motion_stats(&trace);
            per_trial_iters.push(iters);
            transit_sum += transit;
            transit_n += transits;
            lift_blocked += blocked;
            if result.is_ok() {
                successes += 1;
            }
        }

        per_trial_iters.sort_unstable();
        let n = per_trial_iters.len();
        let mean_iterations = per_trial_iters.iter().sum::<u64>() as f64 / n as f64;
        let median_iterations = if n % 2 == 1 {
            per_trial_iters[n / 2] as f64
        } else {
            (per_trial_iters[n / 2 - 1] + per_trial_iters[n / 2]) as f64 / 2.0
        };
        rows.push(BenchRow {
            lift_height_mm: h,
            trials,
            successes,
            mean_iterations,
            median_iterations,
            mean_transit_mm: if transit_n > 0 { transit_sum / transit_n as f64 } else { 0.0 },
            lift_blocked,
        });
    }
    BenchReport { seed, rows }
}
