use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use insilico_bench::continuous;
use insilico_core::factor::{
    fit_cfa, fit_efa, fit_multigroup, EfaOptions, Estimator, FitOptions, InvarianceLevel, MeasurementModel,
};

fn cfa(c: &mut Criterion) {
    let model = MeasurementModel::blocks(3, 3);
    let mut group = c.benchmark_group("cfa");
    for n in [300, 2000] {
        let data = continuous(n, 1);
        for (name, est) in [("ml", Estimator::Ml), ("mlr", Estimator::Mlr)] {
            let opts = FitOptions::default().with_estimator(est);
            group.bench_with_input(BenchmarkId::new(name, n), &data, |b, d| {
                b.iter(|| fit_cfa(d, &model, &opts).unwrap())
            });
        }
    }
    group.finish();
}

fn ladder(c: &mut Criterion) {
    let model = MeasurementModel::blocks(3, 3);
    let groups = [continuous(300, 2), continuous(320, 3)];
    let opts = FitOptions::default();
    c.bench_function("ladder/two_groups", |b| {
        b.iter(|| {
            InvarianceLevel::ALL
                .iter()
                .map(|&l| fit_multigroup(&groups, &model, l, &opts).unwrap().chi2)
                .sum::<f64>()
        })
    });
}

fn efa(c: &mut Criterion) {
    let data = continuous(500, 4);
    let opts = EfaOptions::default();
    c.bench_function("efa/three_factors", |b| b.iter(|| fit_efa(&data, 3, &opts).unwrap()));
}

criterion_group!(benches, cfa, ladder, efa);
criterion_main!(benches);
