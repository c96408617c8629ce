use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use erag_core::dense::{HnswIndex, HnswParams};
use erag_core::embed::EmbeddingVector;
use erag_core::eval::synth;
use erag_core::sparse::{Bm25Index, Bm25Params};
use erag_core::{Engine, EngineConfig, Profile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit_vectors(n: usize, dims: usize, seed: u64) -> Vec<EmbeddingVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| EmbeddingVector::normalized((0..dims).map(|_| rng.random::<f32>() * 2.0 - 1.0).collect()))
        .collect()
}

fn build_hnsw(data: &[EmbeddingVector], quantized: bool) -> HnswIndex {
    let mut idx = HnswIndex::new(data[0].dims(), HnswParams::with_m(32, 200, 50), quantized).unwrap();
    for (i, v) in data.iter().enumerate() {
        idx.insert(&format!("v{i}"), v).unwrap();
    }
    idx.freeze();
    idx
}

fn hnsw(c: &mut Criterion) {
    let data = unit_vectors(1000, 64, 1);
    let queries = unit_vectors(100, 64, 2);
    let mut g = c.benchmark_group("hnsw");
    g.sample_size(10);
    g.bench_function("build_1000x64", |b| b.iter(|| build_hnsw(&data, false)));
    for quantized in [false, true] {
        let idx = build_hnsw(&data, quantized);
        g.bench_with_input(
            BenchmarkId::new("search_k10", if quantized { "u8" } else { "f32" }),
            &idx,
            |b, idx| {
                b.iter(|| {
                    for q in &queries {
                        idx.search(q, 10, 50).unwrap();
                    }
                })
            },
        );
    }
    g.finish();
}

fn bm25(c: &mut Criterion) {
    let corpus = synth::text_benchmark(7).unwrap();
    let docs: Vec<(&str, &str)> = corpus.files.iter().map(|(p, t)| (p.as_str(), t.as_str())).collect();
    let mut g = c.benchmark_group("bm25");
    g.bench_function("build_200_docs", |b| {
        b.iter(|| Bm25Index::build_from(docs.iter().copied(), Bm25Params::default()).unwrap())
    });
    let idx = Bm25Index::build_from(docs.iter().copied(), Bm25Params::default()).unwrap();
    let queries: Vec<String> = corpus.qrels.iter().map(|(_, e)| e.text.clone()).collect();
    g.bench_function("search_50_queries", |b| {
        b.iter(|| {
            for q in &queries {
                idx.search(q, 50);
            }
        })
    });
    g.finish();
}

fn retrieve(c: &mut Criterion) {
    let corpus = synth::table_benchmark(3).unwrap();
    let engine = Engine::build(&corpus.documents().unwrap(), EngineConfig::default()).unwrap();
    let queries: Vec<String> = corpus.qrels.iter().take(20).map(|(_, e)| e.text.clone()).collect();
    let mut g = c.benchmark_group("retrieve");
    g.sample_size(20);
    for profile in [Profile::Naive, Profile::Advanced] {
        g.bench_function(BenchmarkId::new("ranked_20_queries", profile.name()), |b| {
            b.iter(|| {
                for q in &queries {
                    engine.ranked(q, profile).unwrap();
                }
            })
        });
    }
    g.finish();
}

criterion_group!(benches, hnsw, bm25, retrieve);
criterion_main!(benches);
