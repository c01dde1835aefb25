use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use protex_bench::{record_pair, reply, text};
use protex_core::corpus::Instrument;
use protex_core::evaluation::{containment, match_excerpts, metrics, normalize, ConfusionCounts, MatchConfig};
use protex_core::parser::parse_response;

fn bench_containment(c: &mut Criterion) {
    let mut g = c.benchmark_group("containment");
    for n in [20usize, 200, 2000] {
        let a = normalize(&text(1, 25));
        let b = normalize(&text(2, n));
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |bench, _| bench.iter(|| containment(black_box(&a), black_box(&b))));
    }
    g.finish();
}

fn bench_matcher(c: &mut Criterion) {
    let mut g = c.benchmark_group("match_excerpts");
    let cfg = MatchConfig::default();
    for per_item in [2usize, 10, 40] {
        let (base, llm) = record_pair(per_item);
        g.bench_with_input(BenchmarkId::from_parameter(per_item * 5), &per_item, |bench, _| {
            bench.iter(|| match_excerpts(black_box(&llm), black_box(&base), &cfg).unwrap())
        });
    }
    g.finish();
}

fn bench_parser(c: &mut Criterion) {
    let inst = Instrument::extraction();
    let mut g = c.benchmark_group("parse_response");
    for per_item in [3usize, 30] {
        let r = reply(per_item);
        g.bench_with_input(BenchmarkId::from_parameter(r.len()), &r, |bench, r| bench.iter(|| parse_response(black_box(r), &inst)));
    }
    g.finish();
}

fn bench_metrics(c: &mut Criterion) {
    let counts = ConfusionCounts::new(21, 0, 1, 83);
    c.bench_function("metrics", |b| b.iter(|| metrics(black_box(&counts))));
}

criterion_group!(benches, bench_containment, bench_matcher, bench_parser, bench_metrics);
criterion_main!(benches);
