//! Sweep-level benchmarks: the rayon thread pool against a forced
//! single-thread pool on the two hot paths (free-induction trace
//! sampling and the decoupling spacing sweep), plus a micro-benchmark
//! of the per-schedule mode propagation.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use dephasim::analysis::dd_sweep;
use dephasim::bath::quadrature::QuadTol;
use dephasim::bath::{fit_mode_expansion, BathSpec, ExpansionConfig};
use dephasim::dynamics::{mode_propagated_exponent, ramsey_trace, InitialState};
use dephasim::sequence::PulseSchedule;
use dephasim::ModeExpansion;

fn expansion() -> ModeExpansion {
    fit_mode_expansion(
        &BathSpec::reference(1.0),
        &ExpansionConfig {
            t_max: 50.0,
            ..ExpansionConfig::default()
        },
    )
    .expect("certified expansion")
}

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool")
}

fn bench_ramsey_trace(c: &mut Criterion) {
    let spec = BathSpec::reference(0.5);
    let times: Vec<f64> = (0..=400).map(|i| i as f64 * 0.05).collect();
    let tol = QuadTol::new(1e-10, 1e-8);

    let mut group = c.benchmark_group("ramsey_trace_400pts");
    for threads in [1, num_cpus()] {
        group.bench_with_input(BenchmarkId::from_parameter(threads), &threads, |b, &n| {
            let p = pool(n);
            b.iter(|| {
                p.install(|| ramsey_trace(&spec, InitialState::Factorized, &times, tol).unwrap())
            });
        });
    }
    group.finish();
}

fn bench_dd_sweep(c: &mut Criterion) {
    let exp = expansion();
    let dt_grid: Vec<f64> = (1..=24).map(|i| 0.05 * 1.26f64.powi(i)).collect();

    let mut group = c.benchmark_group("dd_sweep_24spacings");
    for threads in [1, num_cpus()] {
        group.bench_with_input(BenchmarkId::from_parameter(threads), &threads, |b, &n| {
            let p = pool(n);
            b.iter(|| p.install(|| dd_sweep(&exp, &dt_grid, 40.0).unwrap()));
        });
    }
    group.finish();
}

fn bench_mode_propagation(c: &mut Criterion) {
    let exp = expansion();
    let prof = PulseSchedule::CpmgSymmetric {
        n: 100,
        spacing: 0.2,
    }
    .profile()
    .expect("profile");
    c.bench_function("mode_propagated_exponent_cpmg100", |b| {
        b.iter(|| mode_propagated_exponent(&exp, &prof, 40.0).unwrap())
    });
}

fn num_cpus() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

criterion_group!(
    benches,
    bench_ramsey_trace,
    bench_dd_sweep,
    bench_mode_propagation
);
criterion_main!(benches);
