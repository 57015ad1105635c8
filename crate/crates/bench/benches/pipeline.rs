use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use ormlens_bench::{synthetic_app, FIXTURES};
use ormlens_core::afg::Slot;
use ormlens_core::rewrite::Bindings;
use ormlens_core::sim::{execute_query, SimConfig};
use ormlens_core::{analyze_source, generate_data, parse_app, DetectorKind, Value};

fn parse(c: &mut Criterion) {
    let mut g = c.benchmark_group("parse");
    for n in [1, 10, 50] {
        let src = synthetic_app(n);
        g.throughput(Throughput::Bytes(src.len() as u64));
        g.bench_with_input(BenchmarkId::from_parameter(n), &src, |b, src| b.iter(|| parse_app(black_box(src))));
    }
    g.finish();
}

fn analyze(c: &mut Criterion) {
    c.bench_function("analyze/fixtures", |b| {
        b.iter(|| {
            for (_, src) in FIXTURES {
                black_box(analyze_source(src, &DetectorKind::ALL).expect("fixture"));
            }
        })
    });
    let mut g = c.benchmark_group("analyze/synthetic");
    for n in [1, 10, 50] {
        let src = synthetic_app(n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &src, |b, src| {
            b.iter(|| analyze_source(black_box(src), &DetectorKind::ALL).expect("synthetic"))
        });
    }
    g.finish();
}

fn simulate(c: &mut Criterion) {
    let an = analyze_source(&synthetic_app(5), &DetectorKind::ALL).expect("synthetic");
    let mut g = c.benchmark_group("simulate");
    g.sample_size(20);
    for rows in [100, 1_000] {
        let cfg = SimConfig { seed: 1, sessions: 10, rows_per_model: rows, ..SimConfig::default() };
        g.bench_with_input(BenchmarkId::from_parameter(rows), &cfg, |b, cfg| {
            b.iter(|| an.simulate(cfg).expect("simulation"))
        });
    }
    g.finish();
}

fn engine(c: &mut Criterion) {
    let (_, src) = FIXTURES[3];
    let an = analyze_source(src, &DetectorKind::ALL).expect("fix4");
    let afg = an.graph.afgs.values().next().expect("action");
    let join = afg
        .issued_queries()
        .filter_map(|q| q.descriptor())
        .find(|d| d.eager_loads.len() == 2)
        .expect("two-way join")
        .clone();
    let mut bindings = Bindings::default();
    bindings.slots.insert(Slot::Pred(0), Value::Int(2));
    bindings.slots.insert(Slot::Pred(1), Value::Int(8));
    let mut g = c.benchmark_group("engine/join");
    for rows in [1_000, 10_000] {
        let store = generate_data(&an.ir, 3, rows);
        g.throughput(Throughput::Elements(rows as u64));
        g.bench_with_input(BenchmarkId::from_parameter(rows), &store, |b, store| {
            b.iter(|| execute_query(store, &an.ir, &join, &bindings).expect("query"))
        });
    }
    g.finish();
}

criterion_group!(benches, parse, analyze, simulate, engine);
criterion_main!(benches);
