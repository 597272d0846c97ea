use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use landmark_risk::harness::{
    fit_model, make_splits, run_split, transform_config, Config, ModelKind, ModelSettings, Preprocessor,
};
use landmark_risk::simulation::{simulate, SimConfig};
use landmark_risk::Exec;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn bench_simulate(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate");
    group.sample_size(10);
    for n in [2_000usize, 8_000] {
        let cfg = SimConfig::clinical(n, 7);
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, n), &n, |b, _| {
                b.iter(|| black_box(simulate(&cfg, exec).unwrap().len()))
            });
        }
    }
    group.finish();
}

fn bench_fits(c: &mut Criterion) {
    let table = simulate(&SimConfig::clinical(5_000, 11), Exec::Parallel).unwrap();
    let cfg = Config::default();
    let prep = Preprocessor::fit(
        &table,
        &cfg.experiment.landmarks,
        &transform_config(&cfg, &table),
        &cfg.landmark_features,
    )
    .unwrap();
    let mut group = c.benchmark_group("fit");
    group.sample_size(10);
    for kind in [ModelKind::Cox, ModelKind::CsAc, ModelKind::LmLr, ModelKind::LmMlr] {
        for (name, exec) in MODES {
            let settings = ModelSettings::from_config(&cfg, exec);
            group.bench_with_input(BenchmarkId::new(name, kind.name()), &kind, |b, &k| {
                b.iter(|| black_box(fit_model(k, &table, &prep, &settings, 1).unwrap().fit_counts()))
            });
        }
    }
    group.finish();
}

fn bench_split(c: &mut Criterion) {
    let table = simulate(&SimConfig::clinical(3_000, 5), Exec::Parallel).unwrap();
    let mut cfg = Config::default();
    cfg.experiment.models = vec![ModelKind::Cox, ModelKind::LmCs, ModelKind::LmLr];
    let split = make_splits(&table.admission_ids(), cfg.experiment.train_fraction, 1, 3)
        .unwrap()
        .remove(0);
    let mut group = c.benchmark_group("split");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(name, |b| {
            b.iter(|| black_box(run_split(&cfg, &table, &split, exec).metrics.len()))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_simulate, bench_fits, bench_split);
criterion_main!(benches);
