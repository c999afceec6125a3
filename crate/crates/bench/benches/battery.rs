use criterion::{criterion_group, criterion_main, Criterion};
use insilico_bench::{continuous, likert, subscales};
use insilico_core::ingest::Source;
use insilico_core::stats::{ks_two_sample, levene, mann_whitney_u, run_battery, BatteryConfig, Center, MwuMethod};

fn battery(c: &mut Criterion) {
    let real = likert(400, 10, Source::Real);
    let sim = likert(400, 11, Source::Simulated);
    let subs = subscales();
    let cfg = BatteryConfig {
        bootstrap_b: 200,
        ..BatteryConfig::default()
    };
    c.bench_function("battery/b200", |b| b.iter(|| run_battery(&real, &sim, &subs, &cfg).unwrap()));
}

fn tests(c: &mut Criterion) {
    let a = continuous(1000, 12);
    let b = continuous(1000, 13);
    let x: Vec<f64> = a.column(0).iter().copied().collect();
    let y: Vec<f64> = b.column(0).iter().copied().collect();
    let (xs, ys) = (&x[..15], &y[..15]);
    c.bench_function("mwu/exact_15", |bn| bn.iter(|| mann_whitney_u(xs, ys, MwuMethod::Exact).unwrap()));
    c.bench_function("mwu/asymptotic_1000", |bn| bn.iter(|| mann_whitney_u(&x, &y, MwuMethod::Asymptotic).unwrap()));
    c.bench_function("ks/1000", |bn| bn.iter(|| ks_two_sample(&x, &y).unwrap()));
    c.bench_function("levene/1000", |bn| bn.iter(|| levene(&[&x, &y], Center::Median).unwrap()));
}

criterion_group!(benches, battery, tests);
criterion_main!(benches);
