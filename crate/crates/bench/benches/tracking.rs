use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use focustrack_core::association::{solve_assignment, CostMatrix};
use focustrack_core::dataio::{generate_scene, SceneSpec};
use focustrack_core::kalman::{iterated_update, IteratedUpdateConfig, KalmanState, LogHeightMeasurement, Measurement, NoiseConfig, StateCovariance, StateVector};
use focustrack_core::lifting::{interpolate_se3, se3_exp, se3_log, Twist};
use focustrack_core::lifting::{complete, CompletionConfig, CompletionMethod};
use focustrack_core::pipeline::{detections_by_frame, mot_to_trajectories, run_tracker};
use focustrack_core::TrackerConfig;

fn assignment(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_assignment");
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(1);
    for n in [10, 50, 200] {
        let values: Vec<f64> = (0..n * n).map(|_| rng.random_range(0.0..1.0)).collect();
        let m = CostMatrix::gated(n, n, values, 0.7).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &m, |b, m| b.iter(|| solve_assignment(black_box(m))));
    }
    group.finish();
}

fn kalman(c: &mut Criterion) {
    let x = StateVector::from_column_slice(&[500.0, 400.0, 0.4, 120.0, 2.0, -1.0, 0.0, 0.5]);
    let state = KalmanState::new(x, StateCovariance::identity() * 10.0);
    let model = NoiseConfig::default().model_for_height(120.0);
    let z = Measurement::new(503.0, 398.0, 0.41, 150.0f64.ln());
    let cfg = IteratedUpdateConfig::default();
    c.bench_function("iterated_update/log_height", |b| {
        b.iter(|| iterated_update(black_box(&state), black_box(&z), &model, &LogHeightMeasurement, &cfg).unwrap())
    });
}

fn se3(c: &mut Criterion) {
    let a = se3_exp(&Twist::new(0.1, -0.2, 0.3, 1.0, 2.0, 3.0));
    let b = se3_exp(&Twist::new(-0.4, 0.5, 0.1, 4.0, 1.0, -2.0));
    c.bench_function("se3/exp_log", |bn| bn.iter(|| se3_log(&se3_exp(black_box(&Twist::new(0.3, 0.2, 0.1, 1.0, 2.0, 3.0)))).unwrap()));
    c.bench_function("se3/interpolate", |bn| bn.iter(|| interpolate_se3(black_box(&a), black_box(&b), 0.37).unwrap()));
}

fn pipeline(c: &mut Criterion) {
    let scene = generate_scene(&SceneSpec { noise_std: 1.0, ..Default::default() }).unwrap();
    let frames = detections_by_frame(&scene.detections, Some(&scene.descriptors), false).unwrap();
    let cfg = TrackerConfig::default();
    let mut group = c.benchmark_group("pipeline");
    group.sample_size(20);
    group.bench_function("track_10x100", |b| b.iter(|| run_tracker(black_box(&frames), &cfg).unwrap()));

    let mut gt = scene.gt.clone();
    gt.retain(|l| l.frame % 10 < 6 || l.frame % 10 == 9);
    let trajectories = mot_to_trajectories(&gt).unwrap();
    let completion = CompletionConfig::default();
    for method in [CompletionMethod::Linear2d, CompletionMethod::Se3Linear, CompletionMethod::Se3Kalman] {
        group.bench_function(format!("complete_{}", method.name()), |b| {
            b.iter(|| {
                for t in &trajectories {
                    black_box(complete(&t.boxes, method, &completion).unwrap());
                }
            })
        });
    }
    group.finish();
}

criterion_group!(benches, assignment, kalman, se3, pipeline);
criterion_main!(benches);
