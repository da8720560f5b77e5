use std::time::Duration;

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use backreach_core::cfg::{build_cfg_plus, reverse, CfgPlus};
use backreach_core::encoder::{encode, ssa_number};
use backreach_core::engine::{resolve_target, solve, EngineConfig};
use backreach_core::explorer::{precompute_distances, HeuristicRegistry};
use backreach_core::frontend::{extract_targets, parse_contract, TargetSpec};
use backreach_core::ir::lower;
use backreach_core::oracle::Replayer;

const CORPUS: &[(&str, &str)] = &[
    ("overflow", include_str!("../../../corpus/overflow.msol")),
    ("mapping_sample", include_str!("../../../corpus/mapping_sample.msol")),
    ("simple_condition", include_str!("../../../corpus/simple_condition.msol")),
    ("two_tx_overflow", include_str!("../../../corpus/two_tx_overflow.msol")),
    ("token", include_str!("../../../corpus/token.msol")),
];

fn graph(src: &str) -> CfgPlus {
    build_cfg_plus(lower(&parse_contract(src).unwrap()).unwrap())
}

fn target(src: &str) -> TargetSpec {
    extract_targets(src).unwrap().remove(0)
}

fn front_end(c: &mut Criterion) {
    let mut group = c.benchmark_group("front_end");
    for (name, src) in CORPUS {
        group.bench_with_input(BenchmarkId::new("parse_lower_cfg", name), src, |b, src| {
            b.iter(|| graph(black_box(src)))
        });
        let g = graph(src);
        group.bench_with_input(BenchmarkId::new("distances", name), &g, |b, g| {
            b.iter(|| precompute_distances(&reverse(black_box(g))))
        });
    }
    group.finish();
}

/// Numbering and printing the shortest complete walk, without the solver.
fn encoding(c: &mut Criterion) {
    let mut group = c.benchmark_group("encode");
    for (name, src) in CORPUS {
        let g = graph(src);
        let resolved = resolve_target(&g, &target(src)).unwrap();
        let (root, safety) = resolved.roots.iter().next().unwrap();
        let rev = reverse(&g);
        let dist = precompute_distances(&rev);
        let mut walk = vec![*root];
        while *walk.last().unwrap() != g.start {
            let at = *walk.last().unwrap();
            let here = dist.get(at, g.start).unwrap();
            let next = rev.neighbors(at).iter().map(|(n, _)| *n).find(|n| dist.get(*n, g.start) == Some(here - 1));
            walk.push(next.unwrap());
        }
        group.bench_with_input(BenchmarkId::from_parameter(name), &walk, |b, walk| {
            b.iter(|| encode(&ssa_number(&g, black_box(walk), safety.as_ref()).unwrap(), &g.program))
        });
    }
    group.finish();
}

fn replay(c: &mut Criterion) {
    let src = CORPUS.iter().find(|(n, _)| *n == "two_tx_overflow").unwrap().1;
    let g = graph(src);
    let spec = target(src);
    let seq = solve(&g, &spec, &EngineConfig::default(), &HeuristicRegistry::default())
        .unwrap()
        .sequence
        .expect("corpus target is reachable");
    let replayer = Replayer::new(&g.program).with_target(&spec).unwrap();
    c.bench_function("replay/two_tx_overflow", |b| b.iter(|| replayer.run(black_box(&seq.transactions)).unwrap()));
}

/// End to end, including the external solver.
fn search(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve");
    group.sample_size(10).measurement_time(Duration::from_secs(20));
    let registry = HeuristicRegistry::default();
    for (name, src) in CORPUS.iter().filter(|(n, _)| *n != "token") {
        let g = graph(src);
        let spec = target(src);
        group.bench_function(*name, |b| b.iter(|| solve(&g, &spec, &EngineConfig::default(), &registry).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, front_end, encoding, replay, search);
criterion_main!(benches);
