use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sqlstream::clustering::{kmedoids, DistMatrix, KMedoidsConfig};
use sqlstream::corpus::TaskStream;
use sqlstream::distance::{d_combined, HashedInstance, InstanceHasher};
use sqlstream::learner::ReferenceParser;
use sqlstream::metrics::evaluate;
use sqlstream::par::ExecMode;
use sqlstream::sqlrep::{SchemaHashSource, SchemaVocab};
use sqlstream::strategies::{Role, Session, StrategyConfig};
use sqlstream::synth::{synth_stream, SynthConfig};

const MODES: [(&str, ExecMode); 2] = [("sequential", ExecMode::Sequential), ("parallel", ExecMode::Parallel)];

fn stream() -> TaskStream {
    synth_stream(&SynthConfig {
        tasks: 4,
        train: 400,
        labeled: 100,
        test: 400,
        ..SynthConfig::default()
    })
    .unwrap()
}

fn hashed(stream: &TaskStream, n: usize) -> Vec<HashedInstance> {
    let mut vocab = SchemaVocab::new();
    for s in stream.schemas.values() {
        vocab.extend_with_schema(s);
    }
    let hasher = InstanceHasher::new(&stream.schemas, vocab.snapshot(), SchemaHashSource::Query);
    let labeled: Vec<_> = stream.tasks.iter().flat_map(|t| t.labeled.iter().cloned()).take(n).collect();
    hasher.hash_all(ExecMode::Sequential, &labeled).unwrap()
}

fn trained(stream: &TaskStream, cfg: &StrategyConfig) -> ReferenceParser {
    let mut p = ReferenceParser::new(cfg.feature_dim);
    let mut s = Session::new(stream, cfg);
    s.warm_start(&mut p, 1, Role::Learner, 3).unwrap();
    p
}

fn distance_matrix(c: &mut Criterion) {
    let stream = stream();
    let items = hashed(&stream, 300);
    let mut g = c.benchmark_group("distance_matrix_300");
    for (name, mode) in MODES {
        g.bench_function(name, |b| {
            b.iter(|| DistMatrix::from_fn(items.len(), mode, |i, j| d_combined(&items[i], &items[j]).map_err(sqlstream::Error::from)).unwrap())
        });
    }
    g.finish();
}

fn swap_search(c: &mut Criterion) {
    let stream = stream();
    let items = hashed(&stream, 240);
    let m = DistMatrix::from_fn(items.len(), ExecMode::Parallel, |i, j| d_combined(&items[i], &items[j]).map_err(sqlstream::Error::from)).unwrap();
    let mut g = c.benchmark_group("kmedoids_240");
    g.sample_size(10);
    for k in [8, 32] {
        for (name, mode) in MODES {
            let cfg = KMedoidsConfig { mode, ..KMedoidsConfig::default() };
            g.bench_with_input(BenchmarkId::new(name, k), &k, |b, &k| b.iter(|| kmedoids(&m, k, &cfg).unwrap()));
        }
    }
    g.finish();
}

fn pseudo_labeling(c: &mut Criterion) {
    let stream = stream();
    let mut g = c.benchmark_group("pseudo_label_300");
    for (name, mode) in MODES {
        let cfg = StrategyConfig { pseudo_count: 300, exec: mode, ..StrategyConfig::default() };
        let p = trained(&stream, &cfg);
        g.bench_function(name, |b| {
            b.iter(|| {
                let mut s = Session::new(&stream, &cfg);
                black_box(s.pseudo_label(&p, 1, 0).unwrap())
            })
        });
    }
    g.finish();
}

fn evaluation(c: &mut Criterion) {
    let stream = stream();
    let cfg = StrategyConfig::default();
    let p = trained(&stream, &cfg);
    let test: Vec<_> = stream.tasks.iter().flat_map(|t| t.test.iter().cloned()).collect();
    let mut g = c.benchmark_group("evaluate_1600");
    for (name, mode) in MODES {
        g.bench_function(name, |b| b.iter(|| evaluate(&p, &test, &stream.schemas, mode).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, distance_matrix, swap_search, pseudo_labeling, evaluation);
criterion_main!(benches);
