//! Example labeling, vocabulary construction, document-level splitting, the
//! rectified-Adam optimizer and the epoch loop with ROC-AUC checkpoint selection.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::candgen::{generate_candidates, Candidate};
use crate::docmodel::{Corpus, Document, FieldType, TargetSchema};
use crate::neighborhood::{extract_neighbors, FeatureConfig, NeighborSet, NeighborhoodError};
use crate::scorer::{
    self, batch_gradient, batch_logits, init_params, Dims, EncodedNeighbors, Example,
    ScorerError, ScorerParams, Vocab,
};
use crate::seed::derive_seed;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("no corpora given")]
    EmptyCorpora,
    #[error("vocabulary size must be >= 1")]
    VocabSize,
    #[error("document {0} has no ground truth")]
    Unlabeled(String),
    #[error("need at least 2 documents to split, got {0}")]
    TooFewDocuments(usize),
    #[error("split fraction {0} outside (0,1)")]
    Fraction(f64),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(&'static str),
    #[error("gradient shape does not match parameters")]
    ShapeMismatch,
    #[error("ROC AUC needs both classes: {positives} positives, {negatives} negatives")]
    DegenerateLabels { positives: usize, negatives: usize },
    #[error("initial parameters are incompatible: {0}")]
    Incompatible(String),
    #[error("no training examples")]
    NoExamples,
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Neighborhood(#[from] NeighborhoodError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Rectified steps are taken only while the SMA length exceeds this.
    pub rectify_threshold: f64,
    pub neg_per_pos_cap: usize,
    pub split_fraction: f64,
    pub seed: u64,
    pub dims: Dims,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 256,
            learning_rate: 0.001,
            max_epochs: 25,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            rectify_threshold: 4.0,
            neg_per_pos_cap: 10,
            split_fraction: 0.8,
            seed: 0,
            dims: Dims::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be >= 1".into()));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(TrainError::Fraction(self.split_fraction));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(TrainError::Config("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(TrainError::Config("betas must be in [0,1)".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form; recorded in checkpoints.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialization");
        hex::encode(Sha256::digest(json))
    }
}

// ---------------------------------------------------------------------------
// vocabulary

/// Top-`k` lowercased tokens by frequency over `docs` (ties lexicographic).
pub fn vocab_from_documents<'a, I>(docs: I, k: usize) -> Result<Vocab, TrainError>
where
    I: IntoIterator<Item = &'a Document>,
{
    if k == 0 {
        return Err(TrainError::VocabSize);
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for doc in docs {
        for t in &doc.tokens {
            *counts.entry(t.text.to_lowercase()).or_default() += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(k);
    Ok(Vocab::new(ranked.into_iter().map(|(t, _)| t)))
}

/// Vocabulary over the training documents of every listed corpus, counts pooled.
pub fn build_vocab(corpora: &[&Corpus], k: usize) -> Result<Vocab, TrainError> {
    if corpora.is_empty() {
        return Err(TrainError::EmptyCorpora);
    }
    vocab_from_documents(corpora.iter().flat_map(|c| c.train.iter()), k)
}

// ---------------------------------------------------------------------------
// labeling

#[derive(Debug, Clone)]
pub struct LabeledExample {
    pub features: Arc<NeighborSet>,
    pub field_index: usize,
    pub label: bool,
    pub doc_id: String,
    pub candidate_id: String,
}

/// Pairs each candidate with every schema field of its type and labels it by canonical
/// match with that field's ground truth. Negatives per (document, field) are capped at
/// `neg_per_pos_cap * max(1, positives)` by seeded uniform sampling; positives are
/// always kept. `features[i]` is the neighborhood of `candidates[i]`.
pub fn label_candidates(
    doc: &Document,
    schema: &TargetSchema,
    candidates: &[Candidate],
    features: &[Arc<NeighborSet>],
    neg_per_pos_cap: usize,
    seed: u64,
) -> Result<Vec<LabeledExample>, TrainError> {
    if !doc.is_labeled() {
        return Err(TrainError::Unlabeled(doc.doc_id.clone()));
    }
    assert_eq!(candidates.len(), features.len(), "one neighborhood per candidate");
    let mut out = Vec::new();
    for (fi, field) in schema.fields.iter().enumerate() {
        let gt = doc.ground_truth_for(&field.name);
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for (ci, c) in candidates.iter().enumerate() {
            if c.field_type != field.field_type {
                continue;
            }
            if gt.iter().any(|g| g.canonical_value == c.canonical_value) {
                pos.push(ci);
            } else {
                neg.push(ci);
            }
        }
        let cap = neg_per_pos_cap.saturating_mul(pos.len().max(1));
        if neg.len() > cap {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                seed,
                &[doc.doc_id.as_bytes(), field.name.as_bytes()],
            ));
            let mut keep: Vec<usize> = rand::seq::index::sample(&mut rng, neg.len(), cap).into_vec();
            keep.sort_unstable();
            neg = keep.into_iter().map(|i| neg[i]).collect();
        }
        let mut chosen: Vec<(usize, bool)> = pos
            .into_iter()
            .map(|c| (c, true))
            .chain(neg.into_iter().map(|c| (c, false)))
            .collect();
        chosen.sort_by_key(|&(c, _)| c);
        for (ci, label) in chosen {
            out.push(LabeledExample {
                features: features[ci].clone(),
                field_index: fi,
                label,
                doc_id: doc.doc_id.clone(),
                candidate_id: candidates[ci].candidate_id.clone(),
            });
        }
    }
    Ok(out)
}

/// Candidates of every schema type and their neighborhoods.
pub fn featurize(
    doc: &Document,
    types: &[FieldType],
    feature_cfg: &FeatureConfig,
) -> Result<(Vec<Candidate>, Vec<Arc<NeighborSet>>), TrainError> {
    let candidates: Vec<Candidate> = types
        .iter()
        .flat_map(|&t| generate_candidates(doc, t))
        .collect();
    let features = candidates
        .iter()
        .map(|c| extract_neighbors(doc, c, feature_cfg).map(Arc::new))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((candidates, features))
}

/// Labeled examples for a set of documents sharing `schema`.
pub fn label_documents(
    docs: &[Document],
    schema: &TargetSchema,
    feature_cfg: &FeatureConfig,
    cfg: &TrainConfig,
) -> Result<Vec<LabeledExample>, TrainError> {
    let types = schema.field_types();
    let mut out = Vec::new();
    for doc in docs {
        let (cands, feats) = featurize(doc, &types, feature_cfg)?;
        out.extend(label_candidates(doc, schema, &cands, &feats, cfg.neg_per_pos_cap, cfg.seed)?);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// splitting

/// Seeded document-level split; `round(fraction * n)` documents (clamped to
/// `1..=n-1`) go to the training side.
pub fn split_documents(
    doc_ids: &[String],
    fraction: f64,
    seed: u64,
) -> Result<(BTreeSet<String>, BTreeSet<String>), TrainError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(TrainError::Fraction(fraction));
    }
    let mut ids: Vec<String> = doc_ids.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    if ids.len() < 2 {
        return Err(TrainError::TooFewDocuments(ids.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[b"split"]));
    ids.shuffle(&mut rng);
    let n_train = ((fraction * ids.len() as f64).round() as usize).clamp(1, ids.len() - 1);
    let val = ids.split_off(n_train);
    Ok((ids.into_iter().collect(), val.into_iter().collect()))
}

/// Splits examples so that each document's examples land on one side.
pub fn split_examples<T: HasDocId + Clone>(
    examples: &[T],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>), TrainError> {
    let ids: Vec<String> = examples.iter().map(|e| e.doc_id().to_string()).collect();
    let (train_ids, _) = split_documents(&ids, fraction, seed)?;
    Ok(examples
        .iter()
        .cloned()
        .partition(|e| train_ids.contains(e.doc_id())))
}

pub trait HasDocId {
    fn doc_id(&self) -> &str;
}

impl HasDocId for LabeledExample {
    fn doc_id(&self) -> &str {
        &self.doc_id
    }
}

impl HasDocId for TrainExample {
    fn doc_id(&self) -> &str {
        &self.doc_id
    }
}

// ---------------------------------------------------------------------------
// optimizer

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub first_moment: ScorerParams,
    pub second_moment: ScorerParams,
}

impl OptimizerState {
    pub fn new(p: &ScorerParams) -> Self {
        OptimizerState {
            step: 0,
            first_moment: p.zeros_like(),
            second_moment: p.zeros_like(),
        }
    }
}

/// Rectified-Adam hyperparameters. `rectify = false` drops the variance-rectification
/// multiplier, and a threshold of `-inf` always takes the adaptive step; together they
/// reduce the update to bias-corrected Adam.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RAdam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub threshold: f64,
    pub rectify: bool,
}

impl From<&TrainConfig> for RAdam {
    fn from(c: &TrainConfig) -> Self {
        RAdam {
            learning_rate: c.learning_rate,
            beta1: c.beta1,
            beta2: c.beta2,
            epsilon: c.epsilon,
            threshold: c.rectify_threshold,
            rectify: true,
        }
    }
}

/// Step coefficients shared by all tensors at step `t` (1-based):
/// (first-moment bias correction, second-moment bias correction, rectifier or None for
/// the un-adapted momentum step).
fn radam_coefficients(opt: &RAdam, t: u64) -> (f64, f64, Option<f64>) {
    let t_i = t as i32;
    let b1t = opt.beta1.powi(t_i);
    let b2t = opt.beta2.powi(t_i);
    let rho_inf = 2.0 / (1.0 - opt.beta2) - 1.0;
    let rho_t = rho_inf - 2.0 * t as f64 * b2t / (1.0 - b2t);
    let rect = if rho_t > opt.threshold {
        if opt.rectify {
            Some(
                ((rho_t - 4.0) * (rho_t - 2.0) * rho_inf
                    / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t))
                    .sqrt(),
            )
        } else {
            Some(1.0)
        }
    } else {
        None
    };
    (1.0 - b1t, 1.0 - b2t, rect)
}

/// One rectified-Adam update of every parameter.
pub fn radam_step(
    p: &mut ScorerParams,
    g: &ScorerParams,
    s: &mut OptimizerState,
    opt: &RAdam,
) -> Result<(), TrainError> {
    if p.shapes() != g.shapes() || p.shapes() != s.first_moment.shapes() {
        return Err(TrainError::ShapeMismatch);
    }
    for (name, t) in scorer::TENSOR_NAMES.iter().zip(g.tensors()) {
        if t.iter().any(|v| !v.is_finite()) {
            return Err(TrainError::NonFiniteGradient(name));
        }
    }
    s.step += 1;
    let (bc1, bc2, rect) = radam_coefficients(opt, s.step);
    let (b1, b2) = (opt.beta1, opt.beta2);
    let lr = opt.learning_rate;
    let grads = g.tensors();
    let ms = s.first_moment.tensors_mut();
    let vs = s.second_moment.tensors_mut();
    let ps = p.tensors_mut();
    for (((pt, gt), mt), vt) in ps.into_iter().zip(grads).zip(ms).zip(vs) {
        for i in 0..pt.len() {
            let gi = gt[i];
            mt[i] = b1 * mt[i] + (1.0 - b1) * gi;
            vt[i] = b2 * vt[i] + (1.0 - b2) * gi * gi;
            let m_hat = mt[i] / bc1;
            match rect {
                Some(r) => {
                    let v_hat = (vt[i] / bc2).sqrt();
                    pt[i] -= lr * r * m_hat / (v_hat + opt.epsilon);
                }
                None => pt[i] -= lr * m_hat,
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// ROC AUC

/// Mann–Whitney ROC AUC: probability that a random positive outranks a random negative,
/// ties counting one half.
pub fn roc_auc(scores: &[(f64, bool)]) -> Result<f64, TrainError> {
    let positives = scores.iter().filter(|s| s.1).count();
    let negatives = scores.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(TrainError::DegenerateLabels {
            positives,
            negatives,
        });
    }
    let mut sorted: Vec<(f64, bool)> = scores.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    // sum over positives of (#negatives below + 0.5 #negatives tied)
    let mut wins = 0.0;
    let mut neg_below = 0usize;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        let (mut pos_tie, mut neg_tie) = (0usize, 0usize);
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            if sorted[j].1 {
                pos_tie += 1;
            } else {
                neg_tie += 1;
            }
            j += 1;
        }
        wins += pos_tie as f64 * (neg_below as f64 + 0.5 * neg_tie as f64);
        neg_below += neg_tie;
        i = j;
    }
    Ok(wins / (positives as f64 * negatives as f64))
}

// ---------------------------------------------------------------------------
// training loop

/// A model-ready example tagged with its source document.
#[derive(Debug, Clone)]
pub struct TrainExample {
    pub doc_id: Arc<str>,
    pub example: Example,
}

/// Encodes labeled examples through `vocab`, remapping schema field indices to model
/// rows with `field_rows`. Examples sharing a neighborhood share one encoding.
pub fn encode_examples(
    labeled: &[LabeledExample],
    vocab: &Vocab,
    field_rows: &[usize],
) -> Vec<TrainExample> {
    let mut cache: HashMap<*const NeighborSet, Arc<EncodedNeighbors>> = HashMap::new();
    let mut doc_ids: HashMap<&str, Arc<str>> = HashMap::new();
    labeled
        .iter()
        .map(|l| {
            let enc = cache
                .entry(Arc::as_ptr(&l.features))
                .or_insert_with(|| Arc::new(vocab.encode(&l.features)))
                .clone();
            let doc_id = doc_ids
                .entry(l.doc_id.as_str())
                .or_insert_with(|| Arc::from(l.doc_id.as_str()))
                .clone();
            TrainExample {
                doc_id,
                example: Example {
                    features: enc,
                    field_index: field_rows[l.field_index],
                    label: if l.label { 1.0 } else { 0.0 },
                },
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub vocab: Vocab,
    pub params: ScorerParams,
    pub val_auc: Option<f64>,
    /// 1-based epoch the parameters come from; `None` for untrained parameters.
    pub epoch: Option<usize>,
    pub config_fingerprint: String,
    pub warning: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointMeta {
    val_auc: Option<f64>,
    epoch: Option<usize>,
    config_fingerprint: String,
    warning: Option<String>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = CheckpointMeta {
            val_auc: self.val_auc,
            epoch: self.epoch,
            config_fingerprint: self.config_fingerprint.clone(),
            warning: self.warning.clone(),
        };
        scorer::encode_checkpoint(
            &self.vocab,
            &self.params,
            serde_json::to_value(meta).expect("meta serialization"),
        )
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint, ScorerError> {
        let (vocab, params, meta) = scorer::decode_checkpoint(bytes)?;
        let meta: CheckpointMeta = serde_json::from_value(meta)
            .map_err(|e| ScorerError::Corrupt(format!("checkpoint metadata: {e}")))?;
        Ok(Checkpoint {
            vocab,
            params,
            val_auc: meta.val_auc,
            epoch: meta.epoch,
            config_fingerprint: meta.config_fingerprint,
            warning: meta.warning,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ScorerError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint, ScorerError> {
        Checkpoint::from_bytes(&std::fs::read(path)?)
    }
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochLog>,
}

fn logits_chunked(examples: &[&Example], p: &ScorerParams) -> Result<Vec<f64>, TrainError> {
    let mut out = Vec::with_capacity(examples.len());
    for chunk in examples.chunks(512) {
        let owned: Vec<Example> = chunk.iter().map(|e| (*e).clone()).collect();
        out.extend(batch_logits(&owned, p)?);
    }
    Ok(out)
}

/// ROC AUC of `p` over `examples`, ranking by logit.
pub fn examples_auc(examples: &[TrainExample], p: &ScorerParams) -> Result<f64, TrainError> {
    let refs: Vec<&Example> = examples.iter().map(|e| &e.example).collect();
    let logits = logits_chunked(&refs, p)?;
    let scored: Vec<(f64, bool)> = logits
        .into_iter()
        .zip(examples)
        .map(|(z, e)| (z, e.example.label > 0.5))
        .collect();
    roc_auc(&scored)
}

/// Trains from `initial` (or a fresh seeded init) on a document-level 80/20 split of
/// `examples`, returning the parameters of the epoch with the best validation AUC.
///
/// The epoch shuffle permutes candidates (all examples of one neighborhood stay
/// adjacent) so that a batch evaluates each neighborhood once.
pub fn train(
    examples: &[TrainExample],
    vocab: &Vocab,
    field_names: &[String],
    cfg: &TrainConfig,
    initial: Option<ScorerParams>,
) -> Result<TrainRun, TrainError> {
    cfg.validate()?;
    let params = match initial {
        Some(p) => {
            if p.token_embeddings.nrows() != vocab.len() {
                return Err(TrainError::Incompatible(format!(
                    "{} embedding rows for a vocabulary of {}",
                    p.token_embeddings.nrows(),
                    vocab.len()
                )));
            }
            if p.field_names != field_names {
                return Err(TrainError::Incompatible(format!(
                    "fields {:?} differ from {:?}",
                    p.field_names, field_names
                )));
            }
            p
        }
        None => init_params(cfg.seed, vocab, field_names, cfg.dims),
    };
    let fingerprint = cfg.fingerprint();
    if cfg.max_epochs == 0 {
        return Ok(TrainRun {
            checkpoint: Checkpoint {
                vocab: vocab.clone(),
                params,
                val_auc: None,
                epoch: None,
                config_fingerprint: fingerprint,
                warning: Some("max_epochs is 0; parameters are untrained".into()),
            },
            log: Vec::new(),
        });
    }
    if examples.is_empty() {
        return Err(TrainError::NoExamples);
    }
    let (train_set, val_set) = split_examples(examples, cfg.split_fraction, cfg.seed)?;
    if train_set.is_empty() {
        return Err(TrainError::NoExamples);
    }

    // candidate groups in first-occurrence order
    let mut group_index: HashMap<*const EncodedNeighbors, usize> = HashMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, e) in train_set.iter().enumerate() {
        let g = *group_index
            .entry(Arc::as_ptr(&e.example.features))
            .or_insert_with(|| {
                groups.push(Vec::new());
                groups.len() - 1
            });
        groups[g].push(i);
    }

    let opt = RAdam::from(cfg);
    let mut params = params;
    let mut state = OptimizerState::new(&params);
    let mut log = Vec::with_capacity(cfg.max_epochs);
    let mut best: Option<(f64, usize, ScorerParams)> = None;
    let mut order: Vec<usize> = (0..groups.len()).collect();
    for epoch in 1..=cfg.max_epochs {
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[b"epoch", &epoch.to_le_bytes()]));
        order.shuffle(&mut rng);
        let flat: Vec<&Example> = order
            .iter()
            .flat_map(|&g| groups[g].iter().map(|&i| &train_set[i].example))
            .collect();
        let mut loss_sum = 0.0;
        for chunk in flat.chunks(cfg.batch_size) {
            let batch: Vec<Example> = chunk.iter().map(|e| (*e).clone()).collect();
            let (loss, grad) = batch_gradient(&batch, &params)?;
            loss_sum += loss * batch.len() as f64;
            radam_step(&mut params, &grad, &mut state, &opt)?;
        }
        let train_loss = loss_sum / flat.len() as f64;
        let val_auc = match examples_auc(&val_set, &params) {
            Ok(a) => Some(a),
            Err(TrainError::DegenerateLabels { .. }) => None,
            Err(e) => return Err(e),
        };
        log::debug!("epoch {epoch}: train_loss={train_loss:.5} val_auc={val_auc:?}");
        log.push(EpochLog {
            epoch,
            train_loss,
            val_auc,
        });
        if let Some(auc) = val_auc {
            if best.as_ref().map_or(true, |(b, _, _)| auc > *b) {
                best = Some((auc, epoch, params.clone()));
            }
        }
    }
    let checkpoint = match best {
        Some((auc, epoch, p)) => Checkpoint {
            vocab: vocab.clone(),
            params: p,
            val_auc: Some(auc),
            epoch: Some(epoch),
            config_fingerprint: fingerprint,
            warning: None,
        },
        None => Checkpoint {
            vocab: vocab.clone(),
            params,
            val_auc: None,
            epoch: Some(cfg.max_epochs),
            config_fingerprint: fingerprint,
            warning: Some(
                "validation labels are single-class; returning the final epoch".into(),
            ),
        },
    };
    Ok(TrainRun { checkpoint, log })
}

/// Labels, encodes and trains on the training documents of a single corpus.
pub fn train_corpus(
    corpus: &Corpus,
    vocab: &Vocab,
    feature_cfg: &FeatureConfig,
    cfg: &TrainConfig,
    initial: Option<ScorerParams>,
) -> Result<TrainRun, TrainError> {
    let labeled = label_documents(&corpus.train, &corpus.schema, feature_cfg, cfg)?;
    let names = corpus.schema.field_names();
    let rows: Vec<usize> = (0..names.len()).collect();
    let examples = encode_examples(&labeled, vocab, &rows);
    train(&examples, vocab, &names, cfg, initial)
}

/// Maps schema fields onto rows of `field_names`.
pub fn field_rows(schema: &TargetSchema, field_names: &[String]) -> Result<Vec<usize>, TrainError> {
    schema
        .fields
        .iter()
        .map(|f| {
            field_names
                .iter()
                .position(|n| *n == f.name)
                .ok_or_else(|| TrainError::Incompatible(format!("model has no field {}", f.name)))
        })
        .collect()
}

/// Per-label example counts, handy for logging.
pub fn label_counts(examples: &[TrainExample]) -> BTreeMap<&'static str, usize> {
    let pos = examples.iter().filter(|e| e.example.label > 0.5).count();
    BTreeMap::from([("positive", pos), ("negative", examples.len() - pos)])
}
