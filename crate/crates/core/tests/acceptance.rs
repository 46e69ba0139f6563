//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Deterministic properties (1, 2, 3b, 6, 7) fail the run when they fail. Experimental
//! outcomes (3a, 4, 5) are measured on fixed seeds and reported; they do not fail the
//! run, so a regression there shows up as a FAIL line rather than a red build.

mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use common::*;
use formfactor::assign::assign;
use formfactor::candgen::{candidate_coverage, generate_candidates, Candidate};
use formfactor::config::ExperimentConfig;
use formfactor::docmodel::{Corpus, Document, FieldType, Language};
use formfactor::evaluation::{evaluate, CellMetrics, EvalConfig};
use formfactor::neighborhood::{extract_neighbors, FeatureConfig};
use formfactor::pipeline::{score_document, ModelScorer, OracleScorer};
use formfactor::scorer::{embed_candidate, embed_many, init_params, score_pair, Dims, EncodedNeighbors, Vocab, TENSOR_NAMES};
use formfactor::synthcorpus::{generate_corpus, CorpusSpec, DocType};
use formfactor::training::{
    encode_examples, examples_auc, field_rows, label_documents, roc_auc, split_documents, split_examples, train,
    vocab_from_documents, TrainConfig,
};
use formfactor::transfer::{
    learning_curve, medians, persist_cell, run_regime, run_scratch, target_subsample, DomainPair, Regime,
    RegimeConfig,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

// ---------------------------------------------------------------------------

fn gradients() -> Outcome {
    let start = Instant::now();
    let vocab = small_vocab(40);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    for b in 0..20u64 {
        let p = random_params(b, &vocab, 4);
        let size = rng.gen_range(1..=8);
        let batch = random_batch(&mut rng, vocab.len(), 4, size);
        for (name, err) in gradient_check(&batch, &p, 1e-4, 30, 1e-11, &mut rng) {
            let w = worst.entry(name).or_insert(0.0);
            *w = w.max(err);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let max = worst.values().cloned().fold(0.0, f64::max);
    let pass = worst.len() == TENSOR_NAMES.len() && max <= 1e-3 && secs < 60.0;
    outcome(pass, format!("20 batches, {} tensors, max rel err {max:.2e} (<= 1e-3), {secs:.1}s (< 60s)", worst.len()))
}

/// Ten labeled documents of one-token lines: a handful of dates, amounts and codes per
/// document, ground truth drawn from them or (sometimes) absent from the page.
fn small_instance(rng: &mut ChaCha8Rng, id: u64) -> Vec<Document> {
    (0..10)
        .map(|d| {
            let mut texts: Vec<String> = Vec::new();
            for _ in 0..rng.gen_range(1..12) {
                texts.push(match rng.gen_range(0..4) {
                    0 => format!("{:02}/{:02}/2019", rng.gen_range(1..13), rng.gen_range(1..29)),
                    1 => format!("{}.{:02}", rng.gen_range(1..5000), rng.gen_range(0..100)),
                    2 => format!("A{}", rng.gen_range(100..999)),
                    _ => "memo".to_string(),
                });
            }
            let tokens = texts.iter().enumerate().map(|(k, t)| tok(t, 0, 0.1, 0.05 + 0.07 * k as f64)).collect();
            let doc = doc_with(&format!("i{id}-{d}"), Language::En, 1, tokens);
            let mut gt: Vec<(&str, String)> = Vec::new();
            for (field, ty) in [("invoice_date", FieldType::Date), ("due_date", FieldType::Date), ("total_amount", FieldType::Amount), ("invoice_number", FieldType::Alphanumeric)] {
                let cands = generate_candidates(&doc, ty);
                match rng.gen_range(0..10) {
                    0 => {}
                    1 => gt.push((field, "2031-01-01".into())),
                    _ if !cands.is_empty() => gt.push((field, cands[rng.gen_range(0..cands.len())].canonical_value.clone())),
                    _ => {}
                }
            }
            let pairs: Vec<(&str, &str)> = gt.iter().map(|(f, v)| (*f, v.as_str())).collect();
            labeled(doc, &pairs)
        })
        .collect()
}

fn oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut auc_ok = 0;
    for _ in 0..100 {
        let n = rng.gen_range(2..80);
        let levels = rng.gen_range(2..20);
        let mut scores: Vec<(f64, bool)> =
            (0..n).map(|_| (rng.gen_range(0..levels) as f64 / levels as f64, rng.gen_bool(0.4))).collect();
        scores[0].1 = true;
        scores[1].1 = false;
        if roc_auc(&scores).unwrap() == pairwise_auc(&scores) {
            auc_ok += 1;
        }
    }

    let mut f1_ok = 0;
    let mut max_cands = 0;
    let schema = separable_schema();
    for i in 0..20u64 {
        let docs = small_instance(&mut rng, i);
        for d in &docs {
            for t in schema.field_types() {
                max_cands = max_cands.max(generate_candidates(d, t).len());
            }
        }
        let scorer = HashScorer { seed: i, levels: 9 };
        let cfg = EvalConfig { min_coverage: 0.0, min_ground_truth: 1 };
        let report = evaluate(&scorer, &docs, &schema, &FeatureConfig::default(), &cfg).unwrap();
        let all_match = schema.fields.iter().zip(&report.fields).all(|(f, m)| {
            let name = f.name.clone();
            let (_, best) = brute_force_sweep(&docs, f, &|d: &Document, c: &Candidate| scorer.score_of(&d.doc_id, &c.candidate_id, &name));
            (m.max_f1 - best).abs() <= 1e-12
        });
        f1_ok += all_match as usize;
    }

    let mut cov_ok = 0;
    for (i, noise) in [0.0, 0.1, 0.3].into_iter().enumerate() {
        let mut spec = CorpusSpec::new(DocType::Paystub, Language::Fr, 40, 70 + i as u64);
        spec.noise = noise;
        let c = generate_corpus(&spec).unwrap();
        let got = candidate_coverage(&c.train, &c.schema).unwrap();
        let want = coverage_recount(&c.train, &c.schema);
        cov_ok += got.iter().all(|(k, v)| (v - want[k]).abs() <= 1e-15) as usize;
    }
    let pass = auc_ok == 100 && f1_ok == 20 && cov_ok == 3 && max_cands <= 30;
    outcome(
        pass,
        format!("AUC exact {auc_ok}/100; Max F1 brute force {f1_ok}/20 (max {max_cands} candidates/field); coverage recount {cov_ok}/3"),
    )
}

/// Train ROC AUC after 25 epochs on the separable corpus, over three training seeds.
fn separable_training() -> Outcome {
    let schema = separable_schema();
    let names = schema.field_names();
    let mut aucs = Vec::new();
    for seed in [1u64, 2, 3] {
        let docs = separable_corpus(20, seed);
        let cfg = TrainConfig { seed, ..TrainConfig::default() };
        let vocab = vocab_from_documents(&docs, 2000).unwrap();
        let labeled = label_documents(&docs, &schema, &FeatureConfig::default(), &cfg).unwrap();
        let examples = encode_examples(&labeled, &vocab, &field_rows(&schema, &names).unwrap());
        let run = train(&examples, &vocab, &names, &cfg, None).unwrap();
        let (train_side, _) = split_examples(&examples, cfg.split_fraction, cfg.seed).unwrap();
        aucs.push(examples_auc(&train_side, &run.checkpoint.params).unwrap());
    }
    let worst = aucs.iter().cloned().fold(1.0, f64::min);
    let shown: Vec<String> = aucs.iter().map(|a| format!("{a:.4}")).collect();
    outcome(worst >= 0.95, format!("20-doc separable corpus, 25 epochs, train AUC per seed [{}] (>= 0.95)", shown.join(", ")))
}

fn oracle_pipeline() -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    for (ty, lang) in [(DocType::Invoice, Language::En), (DocType::Paystub, Language::Fr)] {
        let corpus = generate_corpus(&CorpusSpec::new(ty, lang, 100, 17)).unwrap();
        let docs: Vec<Document> = corpus.train.iter().chain(&corpus.test).cloned().collect();
        let report = evaluate(&OracleScorer, &docs, &corpus.schema, &FeatureConfig::default(), &EvalConfig::default()).unwrap();
        let included = report.fields.iter().filter(|f| f.included).count();
        pass &= report.macro_f1 == 1.0 && included == corpus.schema.fields.len();
        lines.push(format!("{} {} macro F1 {:.4} over {included} fields", ty.as_str(), lang, report.macro_f1));
    }
    outcome(pass, format!("oracle scorer: {} (= 1.0)", lines.join("; ")))
}

/// Medians over the config's seeds for both targets.
fn data_efficiency() -> Outcome {
    let mut details = Vec::new();
    let mut pass = true;
    for file in ["en-invoice-to-fr-invoice.toml", "en-invoice-to-paystub.toml"] {
        let cfg = ExperimentConfig::load(&configs_dir().join(file)).unwrap();
        let source = generate_corpus(&cfg.source).unwrap();
        let target = generate_corpus(&cfg.target).unwrap();
        let start = Instant::now();
        let (reports, _) = learning_curve(
            &source,
            &target,
            &cfg.regime_config(),
            &cfg.eval,
            &cfg.regimes,
            &cfg.sizes,
            &cfg.seeds,
            None,
            1,
        )
        .unwrap();
        let m = medians(&reports);
        let get = |r: &str, n: usize| m[&(r.to_string(), n)];
        let mut parts = Vec::new();
        for &n in &cfg.sizes {
            let (md, tr, sc) = (get("multidomain", n), get("transfer", n), get("scratch", n));
            let ordered = md >= tr && tr >= sc;
            pass &= ordered;
            parts.push(format!("n={n} md {md:.3} tr {tr:.3} sc {sc:.3}{}", if ordered { "" } else { " (order broken)" }));
        }
        let n0 = cfg.sizes[0];
        let gap = get("multidomain", n0) - get("scratch", n0);
        pass &= gap >= 0.05;
        details.push(format!(
            "{}: {}; gap at n={n0} {:.1} pts (>= 5); {:.0}s",
            cfg.target.name(),
            parts.join(", "),
            gap * 100.0,
            start.elapsed().as_secs_f64()
        ));
    }
    outcome(pass, details.join(" | "))
}

/// Size-1000 fr-invoice target, scratch vs multidomain over three seeds.
fn convergence() -> Outcome {
    let cfg = ExperimentConfig::load(&configs_dir().join("en-invoice-to-fr-invoice.toml")).unwrap();
    let source = generate_corpus(&cfg.source).unwrap();
    let mut tspec = cfg.target.clone();
    tspec.n_docs = 1100;
    tspec.n_test = Some(100);
    let target = generate_corpus(&tspec).unwrap();
    let start = Instant::now();
    let (reports, _) = learning_curve(
        &source,
        &target,
        &cfg.regime_config(),
        &cfg.eval,
        &[Regime::Scratch, Regime::Multidomain],
        &[1000],
        &[1, 2, 3],
        None,
        1,
    )
    .unwrap();
    let m = medians(&reports);
    let (md, sc) = (m[&("multidomain".to_string(), 1000)], m[&("scratch".to_string(), 1000)]);
    let gap = (md - sc).abs() * 100.0;
    outcome(
        gap <= 3.0,
        format!("fr invoice n=1000, 3 seeds: md {md:.3} sc {sc:.3}, |gap| {gap:.1} pts (<= 3); {:.0}s", start.elapsed().as_secs_f64()),
    )
}

fn files_under(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    walkdir::WalkDir::new(dir)
        .into_iter()
        .map(Result::unwrap)
        .filter(|e| e.file_type().is_file())
        .map(|e| (e.path().strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(e.path()).unwrap()))
        .collect()
}

fn determinism() -> Outcome {
    let mut sspec = CorpusSpec::new(DocType::Invoice, Language::En, 60, 11);
    sspec.n_test = Some(0);
    let source = generate_corpus(&sspec).unwrap();
    let mut tspec = CorpusSpec::new(DocType::Invoice, Language::Fr, 50, 22);
    tspec.n_test = Some(40);
    let target = generate_corpus(&tspec).unwrap();
    let cfg = RegimeConfig { train: TrainConfig::default(), features: FeatureConfig::default(), vocab_size: 2000 };
    let eval = EvalConfig { min_coverage: 0.8, min_ground_truth: 40 };
    let mut identical = 0;
    let mut files = 0;
    for regime in Regime::ALL {
        let snapshots: Vec<BTreeMap<PathBuf, Vec<u8>>> = (0..2)
            .map(|_| {
                let dir = tempfile::tempdir().unwrap();
                let pair = DomainPair { source: &source, target: &target, target_train_size: 10 };
                let run = run_regime(regime, &pair, &cfg, 1).unwrap();
                let report = evaluate(&ModelScorer::from_checkpoint(&run.checkpoint), &target.test, &target.schema, &cfg.features, &eval).unwrap();
                persist_cell(dir.path(), &run, &CellMetrics::new(regime.as_str(), 10, 1, report)).unwrap();
                files_under(dir.path())
            })
            .collect();
        files += snapshots[0].len();
        identical += (snapshots[0] == snapshots[1] && !snapshots[0].is_empty()) as usize;
    }
    outcome(identical == 3, format!("{identical}/3 regimes byte-identical on rerun ({files} files compared)"))
}

fn invariants() -> Outcome {
    let mut checks: Vec<(&str, bool)> = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    // scores ignore the candidate's own text
    let vocab = Vocab::new(["date", "invoice", "total"]);
    let p = init_params(5, &vocab, &["invoice_date".to_string()], Dims::default());
    let fcfg = FeatureConfig::default();
    let score_of = |value: &str| {
        let doc = doc_with(
            "v",
            Language::En,
            1,
            vec![tok("Invoice", 0, 0.20, 0.30), tok("Date", 0, 0.27, 0.30), tok(value, 0, 0.33, 0.30), tok("Total", 0, 0.20, 0.36)],
        );
        let cand = generate_candidates(&doc, FieldType::Date).into_iter().find(|c| c.raw_text == value).unwrap();
        let ns = extract_neighbors(&doc, &cand, &fcfg).unwrap();
        score_pair(embed_many(&[&vocab.encode(&ns)], &p).unwrap().row(0), 0, &p).unwrap().logit
    };
    checks.push(("candidate-value independence", score_of("10/22/18").to_bits() == score_of("03/04/19").to_bits()));

    // permuting neighbors leaves the embedding unchanged
    let pv = small_vocab(30);
    let pp = random_params(3, &pv, 2);
    let perm_ok = (0..50).all(|_| {
        let enc = random_neighbors(&mut rng, pv.len(), 16);
        let mut order: Vec<usize> = (0..enc.token_ids.len()).collect();
        order.shuffle(&mut rng);
        let shuffled = EncodedNeighbors {
            token_ids: order.iter().map(|&i| enc.token_ids[i]).collect(),
            positions: order.iter().map(|&i| enc.positions[i]).collect(),
        };
        let (a, b) = (embed_candidate(&enc, &pp).unwrap(), embed_candidate(&shuffled, &pp).unwrap());
        a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() <= 1e-12 * x.abs().max(1.0))
    });
    checks.push(("neighbor permutation invariance", perm_ok));

    // an increasing map of the scores keeps every assignment
    let corpus = generate_corpus(&CorpusSpec::new(DocType::Invoice, Language::En, 20, 3)).unwrap();
    let scorer = HashScorer { seed: 5, levels: 1000 };
    let argmax_ok = corpus.train.iter().all(|doc| {
        let scored = score_document(doc, &corpus.schema, &scorer, &fcfg).unwrap();
        let mut squashed = scored.clone();
        for s in &mut squashed {
            s.score = 0.05 + 0.9 * s.score.powi(3);
        }
        let (a, b) = (assign(&doc.doc_id, &scored, &corpus.schema), assign(&doc.doc_id, &squashed, &corpus.schema));
        corpus.schema.fields.iter().all(|f| a.get(&f.name).map(|v| &v.candidate_id) == b.get(&f.name).map(|v| &v.candidate_id))
    });
    checks.push(("argmax scale invariance", argmax_ok));

    // one template per document; test templates unseen in training
    let big = generate_corpus(&CorpusSpec::new(DocType::Paystub, Language::Fr, 100, 4)).unwrap();
    let templates: std::collections::BTreeSet<&str> = big.train.iter().chain(&big.test).map(|d| d.template_id.as_str()).collect();
    let train_t: std::collections::BTreeSet<&str> = big.train.iter().map(|d| d.template_id.as_str()).collect();
    checks.push(("template uniqueness", templates.len() == 100));
    checks.push(("train/test template disjointness", big.test.iter().all(|d| !train_t.contains(d.template_id.as_str()))));

    // document split is a partition
    let split_ok = (0..50u64).all(|s| {
        let n = rng.gen_range(2..60);
        let ids: Vec<String> = (0..n).map(|i| format!("d{i}")).collect();
        let (a, b) = split_documents(&ids, 0.8, s).unwrap();
        a.is_disjoint(&b) && a.len() + b.len() == n && !a.is_empty() && !b.is_empty()
    });
    checks.push(("split partition", split_ok));

    // scratch vocabulary comes from the target subsample only
    let source = generate_corpus(&CorpusSpec::new(DocType::Invoice, Language::En, 12, 8)).unwrap();
    let target: Corpus = generate_corpus(&CorpusSpec::new(DocType::Invoice, Language::Fr, 12, 9)).unwrap();
    let quick = RegimeConfig { train: TrainConfig { max_epochs: 1, ..TrainConfig::default() }, features: fcfg, vocab_size: 500 };
    let run = run_scratch(&DomainPair { source: &source, target: &target, target_train_size: 4 }, &quick, 2).unwrap();
    let sub = target_subsample(&target, 4, 2).unwrap();
    checks.push(("vocab provenance", run.checkpoint.vocab == vocab_from_documents(&sub, 500).unwrap()));

    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    let detail = if failed.is_empty() {
        format!("{} invariant checks green", checks.len())
    } else {
        format!("failed: {}", failed.join(", "))
    };
    outcome(failed.is_empty(), detail)
}

// ---------------------------------------------------------------------------

fn main() -> ExitCode {
    // `cargo test -- --list` and filters: this target has no named tests to enumerate
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    type Criterion = (&'static str, &'static str, fn() -> Outcome, bool);
    let criteria: [Criterion; 8] = [
        ("1", "gradient suite", gradients, true),
        ("2", "oracle equivalence", oracles, true),
        ("3a", "separable training", separable_training, false),
        ("3b", "oracle pipeline", oracle_pipeline, true),
        ("4", "data-efficiency ordering", data_efficiency, false),
        ("5", "convergence of curves", convergence, false),
        ("6", "determinism", determinism, true),
        ("7", "invariant suites", invariants, true),
    ];
    // positional arguments select criteria by id, like test-name filters
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut blocking = Vec::new();
    for (id, name, run, required) in criteria {
        if !only.is_empty() && !only.iter().any(|o| id.starts_with(o.as_str())) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        let note = if !o.pass && !required { " [reported]" } else { "" };
        println!("criterion {id:<2} {tag}{note} {name}: {} ({:.0}s)", o.detail, start.elapsed().as_secs_f64());
        if !o.pass && required {
            blocking.push(id);
        }
    }
    if blocking.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("blocking failures: {}", blocking.join(", "));
        ExitCode::FAILURE
    }
}
