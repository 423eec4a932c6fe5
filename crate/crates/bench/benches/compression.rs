use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rlftn::blocks::block_factorize;
use rlftn::factorize::{rsvd, tsvd, RsvdParams};
use rlftn::mps::sweep;
use rlftn::{GateForm, Method, Model, RsvdSettings, SectorRankPolicy};
use rlftn_bench::{block_input, dense, tebd_state};

fn dense_factorization(c: &mut Criterion) {
    let mut group = c.benchmark_group("dense");
    group.sample_size(10);
    for dim in [256, 512, 1024] {
        let a = dense(dim, 2.0, 7);
        group.bench_with_input(BenchmarkId::new("tsvd", dim), &a, |b, a| {
            b.iter(|| tsvd(a.view(), 64).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("rsvd", dim), &a, |b, a| {
            b.iter(|| rsvd(a.view(), &RsvdParams::new(64, 3)).unwrap())
        });
    }
    group.finish();
}

fn d_scaling(c: &mut Criterion) {
    let mut group = c.benchmark_group("block_form");
    group.sample_size(10);
    let chi = 64;
    let policy = SectorRankPolicy::estimate(chi, 2);
    for d in [8, 16, 32] {
        let m = block_input(chi, d, d as u64);
        group.bench_with_input(BenchmarkId::new("tsvd", d), &m, |b, m| {
            b.iter(|| block_factorize(m, chi, &policy, &Method::Tsvd).unwrap())
        });
        let method = Method::Rsvd(RsvdSettings::default());
        group.bench_with_input(BenchmarkId::new("rsvd", d), &m, |b, m| {
            b.iter(|| block_factorize(m, chi, &policy, &method).unwrap())
        });
    }
    group.finish();
}

fn tebd_sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("sweep");
    group.sample_size(10);
    let chi = 32;
    let policy = SectorRankPolicy::estimate(chi, 2);
    let model = Model::chain(16, 1.5, 1.0).unwrap();
    for (name, method) in [("tsvd", Method::Tsvd), ("rsvd", Method::Rsvd(RsvdSettings::default()))] {
        for form in [GateForm::Block, GateForm::Product] {
            let (mps, gates) = tebd_state(&model, chi, 0.05, form);
            group.bench_function(BenchmarkId::new(name, format!("{form:?}")), |b| {
                b.iter_batched_ref(
                    || mps.clone(),
                    |state| sweep(state, &gates, chi, &policy, &method).unwrap(),
                    criterion::BatchSize::LargeInput,
                )
            });
        }
    }
    group.finish();
}

criterion_group!(benches, dense_factorization, d_scaling, tebd_sweep);
criterion_main!(benches);
