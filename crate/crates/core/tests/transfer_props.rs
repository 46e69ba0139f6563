use std::collections::{BTreeMap, BTreeSet, HashMap};

use formfactor::docmodel::{Corpus, Document, Language};
use formfactor::evaluation::{median_over_seeds, CellMetrics, EvalConfig};
use formfactor::neighborhood::FeatureConfig;
use formfactor::scorer::{Vocab, UNK};
use formfactor::synthcorpus::{generate_corpus, CorpusSpec, DocType};
use formfactor::training::{train_corpus, vocab_from_documents, TrainConfig};
use formfactor::transfer::{
    check_test_disjoint, learning_curve, multidomain_vocab, run_id, run_multidomain, run_regime, run_scratch,
    run_transfer, target_subsample, union_fields, DomainPair, Regime, RegimeConfig, TransferError, METRICS_FILE,
};

fn corpus(ty: DocType, lang: Language, n: usize, seed: u64) -> Corpus {
    generate_corpus(&CorpusSpec::new(ty, lang, n, seed)).unwrap()
}

fn quick() -> RegimeConfig {
    RegimeConfig {
        train: TrainConfig { max_epochs: 2, batch_size: 64, ..TrainConfig::default() },
        features: FeatureConfig::default(),
        vocab_size: 300,
    }
}

fn ids(docs: &[Document]) -> Vec<String> {
    docs.iter().map(|d| d.doc_id.clone()).collect()
}

#[test]
fn subsamples_are_nested_and_seeded() {
    let target = corpus(DocType::Invoice, Language::Fr, 25, 1);
    let n = target.train.len();
    for seed in 0..4 {
        let full = ids(&target_subsample(&target, n, seed).unwrap());
        assert_eq!(full.iter().collect::<BTreeSet<_>>(), ids(&target.train).iter().collect());
        for size in 0..=n {
            let sub = ids(&target_subsample(&target, size, seed).unwrap());
            assert_eq!(sub, full[..size]);
            assert_eq!(sub, ids(&target_subsample(&target, size, seed).unwrap()));
        }
    }
    assert_ne!(ids(&target_subsample(&target, n, 0).unwrap()), ids(&target_subsample(&target, n, 1).unwrap()));
    assert!(matches!(target_subsample(&target, n + 1, 0), Err(TransferError::SizeTooLarge { .. })));
}

#[test]
fn vocabularies_come_from_the_right_documents() {
    let source = corpus(DocType::Invoice, Language::En, 20, 2);
    let target = corpus(DocType::Invoice, Language::Fr, 20, 3);
    let cfg = quick();
    let pair = DomainPair { source: &source, target: &target, target_train_size: 6 };
    let sub = target_subsample(&target, 6, 5).unwrap();

    let scratch = run_scratch(&pair, &cfg, 5).unwrap();
    let sub_words: BTreeSet<String> = sub.iter().flat_map(|d| d.tokens.iter().map(|t| t.text.to_lowercase())).collect();
    assert!(scratch.checkpoint.vocab.words().iter().all(|w| sub_words.contains(w)));
    assert_eq!(scratch.subsample, ids(&sub));

    // pooled counts, most frequent first, ties alphabetical
    let mut counts: HashMap<String, usize> = HashMap::new();
    for d in source.train.iter().chain(&sub) {
        for t in &d.tokens {
            *counts.entry(t.text.to_lowercase()).or_default() += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let expected = Vocab::new(ranked.into_iter().take(cfg.vocab_size).map(|r| r.0));
    assert_eq!(multidomain_vocab(&source, &sub, cfg.vocab_size).unwrap(), expected);
    let multi = run_multidomain(&pair, &cfg, 5).unwrap();
    assert_eq!(multi.checkpoint.vocab, expected);

    // the transfer model keeps the source vocabulary, so target-only words are unknown
    let transfer = run_transfer(&pair, &cfg, 5).unwrap();
    assert_eq!(transfer.checkpoint.vocab, vocab_from_documents(&source.train, cfg.vocab_size).unwrap());
    assert!(sub_words.contains("facture"));
    assert!(!transfer.checkpoint.vocab.contains("facture"));
    assert_eq!(transfer.checkpoint.vocab.lookup("facture"), UNK);
    assert!(multi.checkpoint.vocab.contains("facture"));
}

#[test]
fn backbone_shapes_match_and_field_rows_follow_the_regime() {
    let source = corpus(DocType::Invoice, Language::En, 16, 4);
    let target = corpus(DocType::Paystub, Language::En, 16, 5);
    let cfg = quick();
    let pair = DomainPair { source: &source, target: &target, target_train_size: 5 };
    let runs: BTreeMap<Regime, _> = Regime::ALL.iter().map(|&r| (r, run_regime(r, &pair, &cfg, 1).unwrap())).collect();
    let dims: BTreeSet<_> = runs.values().map(|r| format!("{:?}", r.checkpoint.params.dims)).collect();
    assert_eq!(dims.len(), 1);
    for r in runs.values() {
        let p = &r.checkpoint.params;
        assert_eq!(p.w_query.dim(), runs[&Regime::Scratch].checkpoint.params.w_query.dim());
        assert_eq!(p.token_embeddings.nrows(), r.checkpoint.vocab.len());
        assert_eq!(p.field_embeddings.nrows(), p.field_names.len());
    }
    assert_eq!(runs[&Regime::Scratch].checkpoint.params.field_names, target.schema.field_names());
    let mut extended = source.schema.field_names();
    for n in target.schema.field_names() {
        if !extended.contains(&n) {
            extended.push(n);
        }
    }
    assert_eq!(runs[&Regime::Transfer].checkpoint.params.field_names, extended);
    assert_eq!(runs[&Regime::Multidomain].checkpoint.params.field_names, union_fields(&source.schema, &target.schema));
    assert!(runs[&Regime::Scratch].stage1_log.is_empty());
    assert!(!runs[&Regime::Transfer].stage1_log.is_empty());
    assert!(!runs[&Regime::Multidomain].stage1_log.is_empty());
}

#[test]
fn runs_are_reproducible_and_small_targets_rejected() {
    let source = corpus(DocType::Invoice, Language::En, 12, 6);
    let target = corpus(DocType::Invoice, Language::Fr, 12, 7);
    let cfg = quick();
    for regime in Regime::ALL {
        let pair = DomainPair { source: &source, target: &target, target_train_size: 4 };
        let a = run_regime(regime, &pair, &cfg, 9).unwrap();
        let b = run_regime(regime, &pair, &cfg, 9).unwrap();
        assert_eq!(a.checkpoint.to_bytes(), b.checkpoint.to_bytes(), "{regime}");
        for size in [0, 1] {
            let pair = DomainPair { target_train_size: size, ..pair };
            assert!(matches!(run_regime(regime, &pair, &cfg, 9), Err(TransferError::TooFewTargetDocs { .. })), "{regime} {size}");
        }
    }
}

#[test]
fn scratch_on_the_whole_pool_is_plain_training() {
    let source = corpus(DocType::Invoice, Language::En, 8, 8);
    let target = corpus(DocType::Invoice, Language::Fr, 15, 9);
    let cfg = quick();
    let n = target.train.len();
    let run = run_scratch(&DomainPair { source: &source, target: &target, target_train_size: n }, &cfg, 3).unwrap();
    // same documents in the subsample's order
    let reordered = Corpus { train: target_subsample(&target, n, 3).unwrap(), ..target.clone() };
    let vocab = vocab_from_documents(&target.train, cfg.vocab_size).unwrap();
    let tcfg = TrainConfig { seed: 3, ..cfg.train.clone() };
    let plain = train_corpus(&reordered, &vocab, &cfg.features, &tcfg, None).unwrap();
    assert_eq!(run.checkpoint.to_bytes(), plain.checkpoint.to_bytes());
}

#[test]
fn learning_curve_medians_recount_from_disk() {
    let source = corpus(DocType::Invoice, Language::En, 12, 10);
    let mut spec = CorpusSpec::new(DocType::Invoice, Language::Fr, 16, 11);
    spec.n_test = Some(6);
    let target = generate_corpus(&spec).unwrap();
    let cfg = quick();
    let eval = EvalConfig { min_coverage: 0.8, min_ground_truth: 1 };
    let dir = tempfile::tempdir().unwrap();
    let seeds = [0, 1, 2];
    let (reports, cells) =
        learning_curve(&source, &target, &cfg, &eval, &Regime::ALL, &[2, 4], &seeds, Some(dir.path()), 1).unwrap();
    assert_eq!(cells.len(), 3 * 2 * 3);
    assert_eq!(reports.len(), 6);
    let mut by_cell: BTreeMap<(String, usize), Vec<f64>> = BTreeMap::new();
    for regime in Regime::ALL {
        for size in [2, 4] {
            for seed in seeds {
                let path = dir.path().join(run_id(regime, size, seed)).join(METRICS_FILE);
                let m: CellMetrics = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
                assert_eq!((m.regime.as_str(), m.size, m.seed), (regime.as_str(), size, seed));
                by_cell.entry((m.regime.clone(), size)).or_default().push(m.macro_f1);
            }
        }
    }
    for r in &reports {
        let values = &by_cell[&(r.regime.clone(), r.target_train_size)];
        let mut sorted = values.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(r.median, sorted[1]);
        assert_eq!((r.median, r.min, r.max), median_over_seeds(values).unwrap());
    }
    let bad = learning_curve(&source, &target, &cfg, &eval, &Regime::ALL, &[4, 2], &seeds, None, 1);
    assert!(matches!(bad, Err(TransferError::Sizes(_))));
    let bad = learning_curve(&source, &target, &cfg, &eval, &Regime::ALL, &[2], &[], None, 1);
    assert!(matches!(bad, Err(TransferError::NoSeeds)));
}

#[test]
fn leaked_test_documents_are_refused() {
    let target = corpus(DocType::Invoice, Language::Fr, 10, 12);
    check_test_disjoint(&target).unwrap();
    let mut leaky = target.clone();
    leaky.test.push(leaky.train[0].clone());
    assert!(matches!(check_test_disjoint(&leaky), Err(TransferError::Leak(_))));
    let mut same_template = target.clone();
    same_template.test[0].template_id = same_template.train[1].template_id.clone();
    assert!(matches!(check_test_disjoint(&same_template), Err(TransferError::Leak(_))));
}
