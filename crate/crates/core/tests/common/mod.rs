#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use formfactor::candgen::{generate_candidates, Candidate};
use formfactor::docmodel::{BBox, Document, FieldSpec, FieldType, GroundTruthValue, Language, PageSize, TargetSchema, Token};
use formfactor::neighborhood::NeighborSet;
use formfactor::pipeline::{CandidateScorer, PipelineError};
use formfactor::scorer::ScoredCandidate;
use formfactor::seed::derive_seed;
use formfactor::scorer::{batch_gradient, batch_loss, init_params, Dims, EncodedNeighbors, Example, ScorerParams, Vocab, TENSOR_NAMES};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn tok(text: &str, page: usize, x: f64, y: f64) -> Token {
    let w = 0.0065 * text.chars().count() as f64;
    Token {
        text: text.into(),
        page_index: page,
        bbox: BBox::new(x, y, (x + w).min(1.0), (y + 0.013).min(1.0)),
    }
}

pub fn doc_with(id: &str, language: Language, pages: usize, tokens: Vec<Token>) -> Document {
    Document {
        doc_id: id.into(),
        language,
        doc_type: "invoice".into(),
        template_id: format!("tpl-{id}"),
        pages: vec![PageSize { width: 1.0, height: 1.0 }; pages],
        tokens,
        ground_truth: None,
    }
    .normalize()
    .unwrap()
}

pub fn labeled(mut doc: Document, gt: &[(&str, &str)]) -> Document {
    let mut map: BTreeMap<String, Vec<GroundTruthValue>> = BTreeMap::new();
    for (f, v) in gt {
        map.entry(f.to_string()).or_default().push(GroundTruthValue::new(*v));
    }
    doc.ground_truth = Some(map);
    doc
}

pub fn separable_schema() -> TargetSchema {
    TargetSchema {
        doc_type: "invoice".into(),
        fields: vec![
            FieldSpec::new("invoice_date", FieldType::Date),
            FieldSpec::new("due_date", FieldType::Date),
            FieldSpec::new("total_amount", FieldType::Amount),
            FieldSpec::new("invoice_number", FieldType::Alphanumeric),
        ],
        constraints: vec![],
    }
}

/// Six key/value blocks on a 2x3 grid spaced beyond the neighborhood radius, so each
/// candidate's neighborhood is exactly its own key. Every field has a dedicated key
/// word; two distractor values sit next to keys no field uses.
pub fn separable_corpus(n: usize, seed: u64) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let mut slots: Vec<(f64, f64)> = [0.05, 0.40, 0.75]
                .iter()
                .flat_map(|&y| [(0.05, y), (0.55, y)])
                .collect();
            slots.shuffle(&mut rng);
            let m = rng.gen_range(1..=4);
            let dates = [
                format!("2019-{:02}-{:02}", m, rng.gen_range(1..=28)),
                format!("2019-{:02}-{:02}", m + 4, rng.gen_range(1..=28)),
                format!("2019-{:02}-{:02}", m + 8, rng.gen_range(1..=28)),
            ];
            let fee = format!("{}.{:02}", rng.gen_range(100..999), rng.gen_range(0..100));
            let total = format!("{}.{:02}", rng.gen_range(1000..9999), rng.gen_range(0..100));
            let number = format!("A{}", rng.gen_range(10000..99999));
            let blocks = [
                ("Issued", &dates[0]),
                ("Due", &dates[1]),
                ("Total", &total),
                ("Number", &number),
                ("Memo", &dates[2]),
                ("Fee", &fee),
            ];
            let mut tokens = Vec::new();
            for ((key, val), (x, y)) in blocks.iter().zip(&slots) {
                let (jx, jy) = (rng.gen_range(0.0..0.03), rng.gen_range(0.0..0.03));
                tokens.push(tok(key, 0, x + jx, y + jy));
                tokens.push(tok(val, 0, x + jx + 0.15, y + jy));
            }
            let d = doc_with(&format!("sep-{i:03}"), Language::En, 1, tokens);
            labeled(
                d,
                &[
                    ("invoice_date", &dates[0]),
                    ("due_date", &dates[1]),
                    ("total_amount", &total),
                    ("invoice_number", &number),
                ],
            )
        })
        .collect()
}

pub fn small_vocab(n: usize) -> Vocab {
    Vocab::new((0..n).map(|i| format!("w{i}")))
}

pub fn random_neighbors(rng: &mut ChaCha8Rng, vocab_len: usize, max_n: usize) -> EncodedNeighbors {
    let n = rng.gen_range(0..=max_n);
    EncodedNeighbors {
        token_ids: (0..n).map(|_| rng.gen_range(1..vocab_len as u32)).collect(),
        positions: (0..n)
            .map(|_| {
                let (x, y) = (rng.gen_range(-0.35..0.35), rng.gen_range(-0.35..0.35));
                [x, y, f64::hypot(x, y)]
            })
            .collect(),
    }
}

/// A batch of `size` examples where consecutive examples may share one feature set, as
/// in training.
pub fn random_batch(rng: &mut ChaCha8Rng, vocab_len: usize, n_fields: usize, size: usize) -> Vec<Example> {
    let mut batch: Vec<Example> = Vec::with_capacity(size);
    while batch.len() < size {
        let features = match batch.last() {
            Some(prev) if rng.gen_bool(0.4) => prev.features.clone(),
            _ => Arc::new(random_neighbors(rng, vocab_len, 16)),
        };
        batch.push(Example {
            features,
            field_index: rng.gen_range(0..n_fields),
            label: if rng.gen_bool(0.3) { 1.0 } else { 0.0 },
        });
    }
    batch
}

pub fn random_params(seed: u64, vocab: &Vocab, n_fields: usize) -> ScorerParams {
    let names: Vec<String> = (0..n_fields).map(|i| format!("f{i}")).collect();
    let mut p = init_params(seed, vocab, &names, Dims::default());
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for b in p.field_bias.iter_mut() {
        *b = rng.gen_range(-1.0..1.0);
    }
    p
}

/// Worst relative error between the analytic gradient and central differences over
/// `per_tensor` random coordinates of each tensor. Differences below `abs_floor` count
/// as exact.
pub fn gradient_check(
    batch: &[Example],
    p: &ScorerParams,
    h: f64,
    per_tensor: usize,
    abs_floor: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<(&'static str, f64)> {
    let (_, g) = batch_gradient(batch, p).unwrap();
    let grads = g.tensors();
    let mut out = Vec::new();
    for (ti, name) in TENSOR_NAMES.iter().enumerate() {
        let len = grads[ti].len();
        let mut worst: f64 = 0.0;
        for _ in 0..per_tensor.min(len) {
            let i = rng.gen_range(0..len);
            let mut plus = p.clone();
            plus.tensors_mut()[ti][i] += h;
            let mut minus = p.clone();
            minus.tensors_mut()[ti][i] -= h;
            let numeric = (batch_loss(batch, &plus).unwrap() - batch_loss(batch, &minus).unwrap()) / (2.0 * h);
            let analytic = grads[ti][i];
            let diff = (analytic - numeric).abs();
            if diff > abs_floor {
                worst = worst.max(diff / analytic.abs().max(numeric.abs()));
            }
        }
        out.push((*name, worst));
    }
    out
}

/// Pseudo-random score per (document, candidate, field) from a seeded hash; a small
/// score range makes ties common.
pub struct HashScorer {
    pub seed: u64,
    pub levels: u64,
}

impl HashScorer {
    pub fn score_of(&self, doc_id: &str, candidate_id: &str, field: &str) -> f64 {
        let h = derive_seed(self.seed, &[doc_id.as_bytes(), candidate_id.as_bytes(), field.as_bytes()]);
        (h % self.levels + 1) as f64 / (self.levels + 1) as f64
    }
}

impl CandidateScorer for HashScorer {
    fn score(
        &self,
        doc: &Document,
        schema: &TargetSchema,
        candidates: &[Candidate],
        _features: &[Arc<NeighborSet>],
    ) -> Result<Vec<ScoredCandidate>, PipelineError> {
        let mut out = Vec::new();
        for c in candidates {
            for f in schema.fields.iter().filter(|f| f.field_type == c.field_type) {
                let score = self.score_of(&doc.doc_id, &c.candidate_id, &f.name);
                out.push(ScoredCandidate {
                    candidate_id: c.candidate_id.clone(),
                    field_name: f.name.clone(),
                    canonical_value: c.canonical_value.clone(),
                    score,
                    logit: (score / (1.0 - score)).ln(),
                });
            }
        }
        Ok(out)
    }
}

/// Brute-force sweep for a constraint-free schema: per document, the field's best
/// candidate (ties to the smaller id); then, for every threshold in
/// `{0, 1} ∪ scores`, count surviving and correct predictions from scratch.
/// Returns `(threshold, predicted, correct, precision, recall)` rows and the max F1.
pub fn brute_force_sweep(
    docs: &[Document],
    field: &FieldSpec,
    score: &dyn Fn(&Document, &Candidate) -> f64,
) -> (Vec<(f64, usize, usize, f64, f64)>, f64) {
    let mut assigned: Vec<(f64, bool)> = Vec::new();
    let mut n_gt = 0;
    for doc in docs {
        let gt = doc.ground_truth_for(&field.name);
        if !gt.is_empty() {
            n_gt += 1;
        }
        let cands = generate_candidates(doc, field.field_type);
        let mut best: Option<(f64, &Candidate)> = None;
        for c in &cands {
            let s = score(doc, c);
            let better = match best {
                None => true,
                Some((bs, bc)) => s > bs || (s == bs && c.candidate_id < bc.candidate_id),
            };
            if better {
                best = Some((s, c));
            }
        }
        if let Some((s, c)) = best {
            assigned.push((s, gt.iter().any(|g| g.canonical_value == c.canonical_value)));
        }
    }
    if assigned.is_empty() {
        return (Vec::new(), 0.0);
    }
    let mut thresholds: Vec<f64> = vec![0.0, 1.0];
    thresholds.extend(assigned.iter().map(|a| a.0));
    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    thresholds.dedup();
    let mut rows = Vec::new();
    let mut best_f1: f64 = 0.0;
    for t in thresholds {
        let predicted = assigned.iter().filter(|a| a.0 >= t).count();
        let correct = assigned.iter().filter(|a| a.0 >= t && a.1).count();
        let p = if predicted == 0 { 1.0 } else { correct as f64 / predicted as f64 };
        let r = if n_gt == 0 { 0.0 } else { correct as f64 / n_gt as f64 };
        let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        best_f1 = best_f1.max(f1);
        rows.push((t, predicted, correct, p, r));
    }
    (rows, best_f1)
}

/// Quadratic ROC AUC: wins over all (positive, negative) pairs, ties counting half.
pub fn pairwise_auc(scores: &[(f64, bool)]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for p in scores.iter().filter(|s| s.1) {
        for q in scores.iter().filter(|s| !s.1) {
            pairs += 1.0;
            if p.0 > q.0 {
                wins += 1.0;
            } else if p.0 == q.0 {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Coverage recount: each ground-truth value of each field against every candidate of
/// the field's type.
pub fn coverage_recount(docs: &[Document], schema: &TargetSchema) -> BTreeMap<String, f64> {
    schema
        .fields
        .iter()
        .map(|f| {
            let (mut hit, mut total) = (0usize, 0usize);
            for doc in docs {
                let cands = generate_candidates(doc, f.field_type);
                for g in doc.ground_truth_for(&f.name) {
                    total += 1;
                    if cands.iter().any(|c| c.canonical_value == g.canonical_value) {
                        hit += 1;
                    }
                }
            }
            (f.name.clone(), if total == 0 { 0.0 } else { hit as f64 / total as f64 })
        })
        .collect()
}
