use std::collections::BTreeSet;

use formfactor::candgen::{candidate_coverage, generate_candidates};
use formfactor::docmodel::{Corpus, FieldType, Language};
use formfactor::synthcorpus::{generate_corpus, generate_template, render_document, CorpusSpec, DocType, Grouping, Slot};
use regex::Regex;

fn corpus_bytes(c: &Corpus) -> Vec<u8> {
    let dir = tempfile::tempdir().unwrap();
    c.write_to(dir.path()).unwrap();
    let mut out = Vec::new();
    for e in walkdir::WalkDir::new(dir.path()).sort_by_file_name() {
        let e = e.unwrap();
        if e.file_type().is_file() {
            out.extend(e.path().strip_prefix(dir.path()).unwrap().to_string_lossy().as_bytes());
            out.extend(std::fs::read(e.path()).unwrap());
        }
    }
    out
}

#[test]
fn same_spec_gives_identical_bytes() {
    let spec = CorpusSpec::new(DocType::Invoice, Language::En, 10, 3);
    let a = generate_corpus(&spec).unwrap();
    let b = generate_corpus(&spec).unwrap();
    assert_eq!(a, b);
    assert_eq!(corpus_bytes(&a), corpus_bytes(&b));
    let other = generate_corpus(&CorpusSpec::new(DocType::Invoice, Language::En, 10, 4)).unwrap();
    assert_ne!(corpus_bytes(&a), corpus_bytes(&other));
}

#[test]
fn one_template_per_document_and_disjoint_splits() {
    let corpus = generate_corpus(&CorpusSpec::new(DocType::Invoice, Language::Fr, 100, 11)).unwrap();
    assert_eq!((corpus.train.len(), corpus.test.len()), (80, 20));
    let all: Vec<_> = corpus.train.iter().chain(&corpus.test).collect();
    let templates: BTreeSet<&str> = all.iter().map(|d| d.template_id.as_str()).collect();
    assert_eq!(templates.len(), 100);
    let train_t: BTreeSet<&str> = corpus.train.iter().map(|d| d.template_id.as_str()).collect();
    assert!(corpus.test.iter().all(|d| !train_t.contains(d.template_id.as_str())));
    let ids: BTreeSet<&str> = all.iter().map(|d| d.doc_id.as_str()).collect();
    assert_eq!(ids.len(), 100);
}

#[test]
fn languages_share_structure_for_a_seed() {
    for seed in 0..25u64 {
        for ty in [DocType::Invoice, DocType::Paystub] {
            let en = generate_template(&CorpusSpec::new(ty, Language::En, 1, 0), seed);
            let fr = generate_template(&CorpusSpec::new(ty, Language::Fr, 1, 0), seed);
            assert_eq!(en.structure.hash(), fr.structure.hash(), "seed {seed}");
            assert_ne!(en.lexicon.keys, fr.lexicon.keys);
        }
    }
}

#[test]
fn french_amounts_render_natively_and_label_canonically() {
    let grouped = Regex::new(r"^\d{1,3}( \d{3})+,\d{2}$").unwrap();
    let mut seen = 0;
    for seed in 0..60u64 {
        let spec = CorpusSpec::new(DocType::Invoice, Language::Fr, 1, 0);
        let tpl = generate_template(&spec, seed);
        if tpl.structure.amount_style.grouping != Grouping::Native {
            continue;
        }
        let doc = render_document(&tpl, seed).unwrap();
        let gt = &doc.ground_truth_for("total_amount")[0].canonical_value;
        for c in generate_candidates(&doc, FieldType::Amount) {
            let digits = c.raw_text.trim_end_matches(['€', ' ']).trim_end_matches(" EUR");
            if &c.canonical_value == gt && grouped.is_match(digits) {
                let expected = digits.replace(' ', "").replace(',', ".");
                assert_eq!(&expected, gt);
                seen += 1;
            }
        }
    }
    assert!(seen > 0, "no grouped French total in the sample");
}

#[test]
fn every_label_is_reachable_and_schemas_have_their_fields() {
    for (ty, n_fields) in [(DocType::Invoice, 12), (DocType::Paystub, 19)] {
        for lang in [Language::En, Language::Fr] {
            let corpus = generate_corpus(&CorpusSpec::new(ty, lang, 50, 21)).unwrap();
            assert_eq!(corpus.schema.fields.len(), n_fields);
            let docs: Vec<_> = corpus.train.iter().chain(&corpus.test).cloned().collect();
            let cov = candidate_coverage(&docs, &corpus.schema).unwrap();
            for f in &corpus.schema.fields {
                assert_eq!(cov[&f.name], 1.0, "{ty:?} {lang} {}", f.name);
            }
            for d in &docs {
                assert_eq!(d.pages.len(), 1);
                assert!(d.ground_truth.as_ref().unwrap().keys().all(|k| corpus.schema.field(k).is_some()));
            }
        }
    }
}

#[test]
fn noise_lowers_coverage() {
    let mut spec = CorpusSpec::new(DocType::Invoice, Language::En, 60, 2);
    let clean = generate_corpus(&spec).unwrap();
    spec.noise = 0.3;
    let noisy = generate_corpus(&spec).unwrap();
    let mean = |c: &Corpus| {
        let cov = candidate_coverage(&c.train, &c.schema).unwrap();
        cov.values().sum::<f64>() / cov.len() as f64
    };
    assert_eq!(mean(&clean), 1.0);
    assert!(mean(&noisy) < 0.9, "{}", mean(&noisy));
    spec.noise = 0.0;
    assert_eq!(generate_corpus(&spec).unwrap(), clean);
}

#[test]
fn documents_of_one_template_share_keys_and_vary_values() {
    let tpl = generate_template(&CorpusSpec::new(DocType::Paystub, Language::En, 1, 0), 77);
    let a = render_document(&tpl, 1).unwrap();
    let b = render_document(&tpl, 2).unwrap();
    assert_eq!(a.template_id, b.template_id);
    let words = |d: &formfactor::docmodel::Document| -> BTreeSet<String> { d.tokens.iter().map(|t| t.text.clone()).collect() };
    let (wa, wb) = (words(&a), words(&b));
    assert!(!tpl.structure.fields.is_empty());
    for block in tpl.structure.fields.iter().filter(|b| matches!(b.slot, Slot::KeyValue { .. })) {
        for w in tpl.lexicon.keys[&block.field].split_whitespace() {
            assert!(wa.contains(w) || wa.contains(&format!("{w}:")), "{w}");
            assert!(wb.contains(w) || wb.contains(&format!("{w}:")), "{w}");
        }
    }
    let gta = a.ground_truth.as_ref().unwrap();
    let gtb = b.ground_truth.as_ref().unwrap();
    let differing = gta.iter().filter(|(k, v)| gtb.get(*k) != Some(v)).count();
    assert!(differing >= gta.len() / 2, "{differing} of {}", gta.len());
    assert_eq!(render_document(&tpl, 1).unwrap(), a);
}

#[test]
fn bad_specs_are_rejected() {
    assert!(generate_corpus(&CorpusSpec::new(DocType::Invoice, Language::En, 0, 1)).is_err());
    let mut spec = CorpusSpec::new(DocType::Invoice, Language::En, 10, 1);
    spec.n_test = Some(10);
    assert!(generate_corpus(&spec).is_err());
    spec.n_test = Some(4);
    let c = generate_corpus(&spec).unwrap();
    assert_eq!((c.train.len(), c.test.len()), (6, 4));
}
