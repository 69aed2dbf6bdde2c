//! Solver benchmarks. The `analog_precoder_sweep` group doubles the BS
//! array size; per-sweep cost should grow roughly 4x per doubling, the
//! O(N_s²R_s²) term that dominates one solver iteration.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use thpmimo_bench::fixture;
use thpmimo_core::bcd::{self, BcdSettings, BlockSet};
use thpmimo_core::objective::mse_sigma;
use thpmimo_core::thp::QamConstellation;
use thpmimo_core::{harness, CMat};

fn analog_precoder_sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("analog_precoder_sweep");
    for tx in [8usize, 16, 32] {
        let (cfg, cs, ordering) = fixture(tx, 7);
        let scaled = cs.scaled();
        let state = bcd::initial_state(&cfg, &scaled, &ordering).unwrap();
        let errs = cs.scaled_error_std();
        group.bench_with_input(BenchmarkId::from_parameter(tx), &tx, |b, _| {
            b.iter(|| bcd::update_t(&state, &scaled, &errs, cfg.power_budget).unwrap())
        });
    }
    group.finish();
}

fn full_iteration(c: &mut Criterion) {
    let mut group = c.benchmark_group("bcd_iteration");
    for tx in [16usize, 32] {
        let (cfg, cs, ordering) = fixture(tx, 7);
        let scaled = cs.scaled();
        let errs = cs.scaled_error_std();
        let state = bcd::initial_state(&cfg, &scaled, &ordering).unwrap();
        let settings = BcdSettings::default().with_max_iterations(1);
        group.bench_with_input(BenchmarkId::from_parameter(tx), &tx, |b, _| {
            b.iter(|| {
                bcd::solve_blocks(
                    state.clone(),
                    &scaled,
                    &errs,
                    cfg.power_budget,
                    BlockSet::all(),
                    &settings,
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

fn objective_evaluation(c: &mut Criterion) {
    let (cfg, cs, ordering) = fixture(16, 7);
    let scaled = cs.scaled();
    let errs = cs.scaled_error_std();
    let state = bcd::initial_state(&cfg, &scaled, &ordering).unwrap();
    c.bench_function("mse_sigma_desk", |b| {
        b.iter(|| mse_sigma(&state, &scaled, &errs, cfg.power_budget).unwrap())
    });
}

fn ser_throughput(c: &mut Criterion) {
    let (cfg, cs, ordering) = fixture(16, 7);
    let (state, _) = bcd::solve(&cfg, &cs, &ordering, &BcdSettings::default()).unwrap();
    let qam = QamConstellation::new(16).unwrap();
    let truth: Vec<&CMat> = cs.true_channels();
    let design: Vec<&CMat> = cs.estimated();
    c.bench_function("simulate_ser_10k_symbols", |b| {
        b.iter(|| {
            harness::simulate_ser(&state, &truth, &design, &cfg.noise_std, &qam, 10_000, 3)
                .unwrap()
        })
    });
}

criterion_group!(
    benches,
    analog_precoder_sweep,
    full_iteration,
    objective_evaluation,
    ser_throughput
);
criterion_main!(benches);
