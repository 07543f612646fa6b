use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use dyadrep::dyadic::{is_bad, Cube, GridShift, Window};
use dyadrep::operators::KernelOp;
use dyadrep::shift::{classify_elements, saturated_shift, shift_norm_estimate, window_elements};
use dyadrep::tables::PairingTables;
use dyadrep::wavelet::{Filter, WaveletSystem};

fn cascade(c: &mut Criterion) {
    let f = Filter::builtin("db6").unwrap();
    c.bench_function("cascade db6 q=12", |b| b.iter(|| WaveletSystem::build_unchecked(black_box(&f), 12).unwrap()));
}

fn badness(c: &mut Criterion) {
    let w = Window::<1>::new(20, -20, 36).unwrap();
    let cube = Cube::new(8, [1 << 27]);
    let mut n = 0u64;
    c.bench_function("is_bad r=24 gaps=28", |b| {
        b.iter(|| {
            n += 1;
            let g = GridShift::random(w, 1, n, 24, 0.25).unwrap();
            is_bad(black_box(&cube), &g).unwrap()
        })
    });
}

fn tables(c: &mut Criterion) {
    let sys = WaveletSystem::build_unchecked(&Filter::builtin("db3").unwrap(), 14).unwrap();
    let w = Window::<1>::new(2, 0, 3).unwrap();
    let op = KernelOp::hilbert(2);
    let mut g = c.benchmark_group("pairing tables");
    g.sample_size(10);
    g.bench_function("db3 depth 4 p=11", |b| b.iter(|| PairingTables::build(&op, &sys, &w, 11, false).unwrap()));
    g.finish();
}

fn classification(c: &mut Criterion) {
    let w = Window::<1>::new(2, 0, 4).unwrap();
    let g = GridShift::random(w, 3, 0, 3, 1.0).unwrap();
    let elems = window_elements(&w, &g);
    c.bench_function("classify all pairs depth 5", |b| b.iter(|| classify_elements(&elems, &elems, &g, 5).unwrap()));
}

fn norms(c: &mut Criterion) {
    let sys = WaveletSystem::build_unchecked(&Filter::builtin("db3").unwrap(), 14).unwrap();
    let w = Window::<1>::new(3, 0, 6).unwrap();
    let g = GridShift::random(w, 2, 0, 24, 1.0).unwrap();
    let s = saturated_shift(&g, 3, 4, sys.m, 0).unwrap();
    let mut grp = c.benchmark_group("shift norm");
    grp.sample_size(10);
    grp.bench_function("saturated (3,4) db3", |b| b.iter(|| shift_norm_estimate(&s, &sys, &g, 13).unwrap()));
    grp.finish();
}

criterion_group!(benches, cascade, badness, tables, classification, norms);
criterion_main!(benches);
