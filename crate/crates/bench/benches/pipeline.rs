use std::sync::Arc;

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use formfactor::assign::assign;
use formfactor::candgen::generate_candidates;
use formfactor::docmodel::{Document, Language};
use formfactor::evaluation::{evaluate, EvalConfig};
use formfactor::neighborhood::{extract_neighbors, FeatureConfig};
use formfactor::pipeline::{score_document, ModelScorer};
use formfactor::scorer::{batch_gradient, batch_logits, init_params, Dims, EncodedNeighbors, Example, Vocab};
use formfactor::synthcorpus::{generate_corpus, CorpusSpec, DocType};
use formfactor::training::vocab_from_documents;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn corpus_docs(n: usize) -> (Vec<Document>, formfactor::docmodel::TargetSchema) {
    let c = generate_corpus(&CorpusSpec::new(DocType::Invoice, Language::En, n, 1)).unwrap();
    let docs = c.train.into_iter().chain(c.test).collect();
    (docs, c.schema)
}

/// 256 examples over random neighborhoods, 12 fields, three examples per feature set.
fn batch(vocab_len: usize) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut out = Vec::new();
    while out.len() < 256 {
        let n = rng.gen_range(4..=16);
        let features = Arc::new(EncodedNeighbors {
            token_ids: (0..n).map(|_| rng.gen_range(2..vocab_len as u32)).collect(),
            positions: (0..n)
                .map(|_| {
                    let (x, y) = (rng.gen_range(-0.35..0.35), rng.gen_range(-0.35..0.35));
                    [x, y, f64::hypot(x, y)]
                })
                .collect(),
        });
        for _ in 0..3 {
            out.push(Example { features: features.clone(), field_index: rng.gen_range(0..12), label: rng.gen_range(0..2) as f64 });
        }
    }
    out.truncate(256);
    out
}

fn bench_front_end(c: &mut Criterion) {
    let (docs, schema) = corpus_docs(20);
    let cfg = FeatureConfig::default();
    c.bench_function("candidates/20 docs", |b| {
        b.iter(|| {
            for d in &docs {
                for t in schema.field_types() {
                    black_box(generate_candidates(d, t));
                }
            }
        })
    });
    let cands: Vec<_> = docs.iter().take(5).flat_map(|d| schema.field_types().into_iter().flat_map(move |t| generate_candidates(d, t).into_iter().map(move |c| (d, c)))).collect();
    c.bench_function("neighbors/5 docs", |b| {
        b.iter(|| {
            for (d, cand) in &cands {
                black_box(extract_neighbors(d, cand, &cfg).unwrap());
            }
        })
    });
}

fn bench_scorer(c: &mut Criterion) {
    let vocab = Vocab::new((0..2000).map(|i| format!("w{i}")));
    let names: Vec<String> = (0..12).map(|i| format!("f{i}")).collect();
    let p = init_params(1, &vocab, &names, Dims::default());
    let examples = batch(vocab.len());
    c.bench_function("scorer/forward 256", |b| b.iter(|| black_box(batch_logits(&examples, &p).unwrap())));
    c.bench_function("scorer/gradient 256", |b| b.iter(|| black_box(batch_gradient(&examples, &p).unwrap())));
}

fn bench_end_to_end(c: &mut Criterion) {
    let (docs, schema) = corpus_docs(20);
    let cfg = FeatureConfig::default();
    let vocab = vocab_from_documents(&docs, 2000).unwrap();
    let p = init_params(2, &vocab, &schema.field_names(), Dims::default());
    let scorer = ModelScorer::new(&vocab, &p);
    let scored: Vec<_> = docs.iter().map(|d| score_document(d, &schema, &scorer, &cfg).unwrap()).collect();
    c.bench_function("assign/20 docs", |b| {
        b.iter(|| {
            for (d, s) in docs.iter().zip(&scored) {
                black_box(assign(&d.doc_id, s, &schema));
            }
        })
    });
    let eval = EvalConfig { min_coverage: 0.8, min_ground_truth: 1 };
    let mut group = c.benchmark_group("evaluate");
    group.sample_size(10);
    group.bench_function("20 docs", |b| {
        b.iter(|| black_box(evaluate(&scorer, &docs, &schema, &cfg, &eval).unwrap()))
    });
    group.finish();
}

criterion_group!(benches, bench_front_end, bench_scorer, bench_end_to_end);
criterion_main!(benches);
