//! End-to-end solver benchmarks at the experiment scale (m = 20).

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use lvggm::{
    calibrate_delta, gen_ground_truth, recover, sample_covariance, sample_data, solve_classic,
    solve_dual, ClassicSpec, ProblemSpec, SolverConfig,
};

fn bench_dual_solve(c: &mut Criterion) {
    let gt = gen_ground_truth(20, 4, 0.1, 7).unwrap();
    let data = sample_data(&gt, 1000, 7).unwrap();
    let ce = sample_covariance(&data).unwrap();
    let cal = calibrate_delta(&ce, 0.95, 200, 7).unwrap();
    let spec = ProblemSpec::new(0.5, cal.delta_alpha).unwrap();
    let cfg = SolverConfig::default();
    c.bench_function("dual_solve_m20", |b| {
        b.iter(|| solve_dual(black_box(&ce), &spec, &cfg, None).unwrap())
    });
    let (p_star, _) = solve_dual(&ce, &spec, &cfg, None).unwrap();
    c.bench_function("recover_m20", |b| {
        b.iter(|| recover(black_box(&p_star), &ce, &spec, &Default::default()).unwrap())
    });
}

fn bench_classic_solve(c: &mut Criterion) {
    let gt = gen_ground_truth(20, 4, 0.1, 7).unwrap();
    let spec = ClassicSpec::default();
    c.bench_function("classic_admm_m20", |b| {
        b.iter(|| solve_classic(black_box(&gt.sigma_m), &spec).unwrap())
    });
}

fn bench_calibration(c: &mut Criterion) {
    let gt = gen_ground_truth(20, 4, 0.1, 7).unwrap();
    let data = sample_data(&gt, 1000, 7).unwrap();
    let ce = sample_covariance(&data).unwrap();
    c.bench_function("calibrate_200_reps_m20", |b| {
        b.iter(|| calibrate_delta(black_box(&ce), 0.95, 200, 7).unwrap())
    });
}

criterion_group! {
    name = solvers;
    config = Criterion::default().sample_size(10);
    targets = bench_dual_solve, bench_classic_solve, bench_calibration
}
criterion_main!(solvers);
