//! Scratch, transfer and multi-domain training regimes, and the learning-curve driver
//! that trains and evaluates every (regime, target size, seed) cell.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::docmodel::{Corpus, Document, TargetSchema};
use crate::evaluation::{aggregate, evaluate, CellMetrics, EvalConfig, EvalError, RegimeReport};
use crate::neighborhood::FeatureConfig;
use crate::pipeline::ModelScorer;
use crate::scorer::{ScorerError, Vocab};
use crate::seed::derive_seed;
use crate::training::{
    encode_examples, field_rows, label_documents, train, vocab_from_documents, Checkpoint,
    EpochLog, TrainConfig, TrainError, TrainExample, TrainRun,
};

#[derive(Debug, Error)]
pub enum TransferError {
    #[error("regime needs at least {needed} target training documents, got {got}")]
    TooFewTargetDocs { needed: usize, got: usize },
    #[error("target size {size} exceeds the {available} target training documents")]
    SizeTooLarge { size: usize, available: usize },
    #[error("source corpus has no training documents")]
    EmptySource,
    #[error("sizes must be strictly ascending: {0:?}")]
    Sizes(Vec<usize>),
    #[error("no seeds given")]
    NoSeeds,
    #[error("no regimes given")]
    NoRegimes,
    #[error("test document {0} also appears in the target training pool")]
    Leak(String),
    #[error("unknown regime {0:?} (expected scratch, transfer or multidomain)")]
    UnknownRegime(String),
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TransferError + '_ {
    move |source| TransferError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Scratch,
    Transfer,
    Multidomain,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::Scratch, Regime::Transfer, Regime::Multidomain];

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Scratch => "scratch",
            Regime::Transfer => "transfer",
            Regime::Multidomain => "multidomain",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = TransferError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "scratch" => Ok(Regime::Scratch),
            "transfer" => Ok(Regime::Transfer),
            "multidomain" => Ok(Regime::Multidomain),
            _ => Err(TransferError::UnknownRegime(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DomainPair<'a> {
    pub source: &'a Corpus,
    pub target: &'a Corpus,
    pub target_train_size: usize,
}

/// Everything a regime needs besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeConfig {
    pub train: TrainConfig,
    pub features: FeatureConfig,
    pub vocab_size: usize,
}

/// A trained regime: the final checkpoint plus the logs of each stage.
#[derive(Debug, Clone)]
pub struct RegimeRun {
    pub checkpoint: Checkpoint,
    pub stage1_log: Vec<EpochLog>,
    pub log: Vec<EpochLog>,
    pub subsample: Vec<String>,
}

/// The first `size` documents of a seeded permutation of the target training pool, so
/// subsamples for growing sizes under one seed are nested prefixes.
pub fn target_subsample(target: &Corpus, size: usize, seed: u64) -> Result<Vec<Document>, TransferError> {
    if size > target.train.len() {
        return Err(TransferError::SizeTooLarge {
            size,
            available: target.train.len(),
        });
    }
    let mut order: Vec<usize> = (0..target.train.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[b"subsample"]));
    order.shuffle(&mut rng);
    Ok(order[..size].iter().map(|&i| target.train[i].clone()).collect())
}

fn seeded(cfg: &TrainConfig, seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        ..cfg.clone()
    }
}

fn examples_for(
    docs: &[Document],
    schema: &TargetSchema,
    vocab: &Vocab,
    field_names: &[String],
    features: &FeatureConfig,
    cfg: &TrainConfig,
) -> Result<Vec<TrainExample>, TransferError> {
    let labeled = label_documents(docs, schema, features, cfg)?;
    let rows = field_rows(schema, field_names)?;
    Ok(encode_examples(&labeled, vocab, &rows))
}

/// Source fields followed by target fields the source lacks.
pub fn union_fields(source: &TargetSchema, target: &TargetSchema) -> Vec<String> {
    let mut names = source.field_names();
    for n in target.field_names() {
        if !names.contains(&n) {
            names.push(n);
        }
    }
    names
}

fn need_target(size: usize, needed: usize) -> Result<(), TransferError> {
    if size < needed {
        return Err(TransferError::TooFewTargetDocs { needed, got: size });
    }
    Ok(())
}

/// Trains on the target subsample alone with a vocabulary drawn from it.
pub fn run_scratch(pair: &DomainPair, cfg: &RegimeConfig, seed: u64) -> Result<RegimeRun, TransferError> {
    need_target(pair.target_train_size, 2)?;
    let tcfg = seeded(&cfg.train, seed);
    let sub = target_subsample(pair.target, pair.target_train_size, seed)?;
    let vocab = vocab_from_documents(&sub, cfg.vocab_size)?;
    let names = pair.target.schema.field_names();
    let examples = examples_for(&sub, &pair.target.schema, &vocab, &names, &cfg.features, &tcfg)?;
    let run = train(&examples, &vocab, &names, &tcfg, None)?;
    Ok(RegimeRun {
        checkpoint: run.checkpoint,
        stage1_log: Vec::new(),
        log: run.log,
        subsample: sub.into_iter().map(|d| d.doc_id).collect(),
    })
}

/// Stage 1 of the transfer regime: source-only vocabulary and training. It does not
/// depend on the target, so one run per seed serves every target size.
pub fn transfer_stage_one(source: &Corpus, cfg: &RegimeConfig, seed: u64) -> Result<TrainRun, TransferError> {
    if source.train.is_empty() {
        return Err(TransferError::EmptySource);
    }
    let tcfg = seeded(&cfg.train, seed);
    let vocab = vocab_from_documents(&source.train, cfg.vocab_size)?;
    let names = source.schema.field_names();
    let examples = examples_for(&source.train, &source.schema, &vocab, &names, &cfg.features, &tcfg)?;
    Ok(train(&examples, &vocab, &names, &tcfg, None)?)
}

/// Stage 2 of the transfer regime: adds fresh rows for target fields unseen in the
/// source, then fine-tunes everything on the target subsample. Target tokens outside
/// the source vocabulary map to UNK.
pub fn transfer_stage_two(
    stage1: &Checkpoint,
    pair: &DomainPair,
    cfg: &RegimeConfig,
    seed: u64,
) -> Result<(TrainRun, Vec<Document>), TransferError> {
    need_target(pair.target_train_size, 2)?;
    let tcfg = seeded(&cfg.train, seed);
    let sub = target_subsample(pair.target, pair.target_train_size, seed)?;
    let mut params = stage1.params.clone();
    let new: Vec<String> = pair
        .target
        .schema
        .field_names()
        .into_iter()
        .filter(|n| params.field_index(n).is_none())
        .collect();
    params.extend_fields(&new, derive_seed(seed, &[b"new-fields"]));
    let names = params.field_names.clone();
    let examples = examples_for(&sub, &pair.target.schema, &stage1.vocab, &names, &cfg.features, &tcfg)?;
    let run = train(&examples, &stage1.vocab, &names, &tcfg, Some(params))?;
    Ok((run, sub))
}

pub fn run_transfer(pair: &DomainPair, cfg: &RegimeConfig, seed: u64) -> Result<RegimeRun, TransferError> {
    need_target(pair.target_train_size, 2)?;
    let stage1 = transfer_stage_one(pair.source, cfg, seed)?;
    let (run, sub) = transfer_stage_two(&stage1.checkpoint, pair, cfg, seed)?;
    Ok(RegimeRun {
        checkpoint: run.checkpoint,
        stage1_log: stage1.log,
        log: run.log,
        subsample: sub.into_iter().map(|d| d.doc_id).collect(),
    })
}

/// Vocabulary pooled over source training documents and the target subsample.
pub fn multidomain_vocab(source: &Corpus, sub: &[Document], k: usize) -> Result<Vocab, TransferError> {
    Ok(vocab_from_documents(source.train.iter().chain(sub), k)?)
}

/// Stage 1 trains on source plus target-subsample examples with a common vocabulary and
/// the name-keyed union of both schemas' fields; stage 2 fine-tunes on the target
/// subsample only.
pub fn run_multidomain(pair: &DomainPair, cfg: &RegimeConfig, seed: u64) -> Result<RegimeRun, TransferError> {
    need_target(pair.target_train_size, 2)?;
    if pair.source.train.is_empty() {
        return Err(TransferError::EmptySource);
    }
    let tcfg = seeded(&cfg.train, seed);
    let sub = target_subsample(pair.target, pair.target_train_size, seed)?;
    let vocab = multidomain_vocab(pair.source, &sub, cfg.vocab_size)?;
    let names = union_fields(&pair.source.schema, &pair.target.schema);
    let mut stage1_examples = examples_for(
        &pair.source.train,
        &pair.source.schema,
        &vocab,
        &names,
        &cfg.features,
        &tcfg,
    )?;
    let target_examples = examples_for(&sub, &pair.target.schema, &vocab, &names, &cfg.features, &tcfg)?;
    stage1_examples.extend(target_examples.iter().cloned());
    let stage1 = train(&stage1_examples, &vocab, &names, &tcfg, None)?;
    let run = train(
        &target_examples,
        &vocab,
        &names,
        &tcfg,
        Some(stage1.checkpoint.params),
    )?;
    Ok(RegimeRun {
        checkpoint: run.checkpoint,
        stage1_log: stage1.log,
        log: run.log,
        subsample: sub.into_iter().map(|d| d.doc_id).collect(),
    })
}

pub fn run_regime(
    regime: Regime,
    pair: &DomainPair,
    cfg: &RegimeConfig,
    seed: u64,
) -> Result<RegimeRun, TransferError> {
    match regime {
        Regime::Scratch => run_scratch(pair, cfg, seed),
        Regime::Transfer => run_transfer(pair, cfg, seed),
        Regime::Multidomain => run_multidomain(pair, cfg, seed),
    }
}

// ---------------------------------------------------------------------------
// learning curves

pub fn run_id(regime: Regime, size: usize, seed: u64) -> String {
    format!("{regime}-n{size}-s{seed}")
}

pub const CHECKPOINT_FILE: &str = "best.ckpt";
pub const METRICS_FILE: &str = "metrics.json";
pub const LOG_FILE: &str = "train_log.jsonl";
pub const STAGE1_LOG_FILE: &str = "stage1_log.jsonl";

fn log_jsonl(log: &[EpochLog]) -> String {
    log.iter()
        .map(|e| serde_json::to_string(e).expect("log serialization") + "\n")
        .collect()
}

/// Writes `{dir}/{run_id}/best.ckpt`, the training logs and `metrics.json`.
pub fn persist_cell(dir: &Path, run: &RegimeRun, metrics: &CellMetrics) -> Result<PathBuf, TransferError> {
    let regime: Regime = metrics.regime.parse()?;
    let cell_dir = dir.join(run_id(regime, metrics.size, metrics.seed));
    fs::create_dir_all(&cell_dir).map_err(io_err(&cell_dir))?;
    run.checkpoint.save(&cell_dir.join(CHECKPOINT_FILE))?;
    let log_path = cell_dir.join(LOG_FILE);
    fs::write(&log_path, log_jsonl(&run.log)).map_err(io_err(&log_path))?;
    if !run.stage1_log.is_empty() {
        let p = cell_dir.join(STAGE1_LOG_FILE);
        fs::write(&p, log_jsonl(&run.stage1_log)).map_err(io_err(&p))?;
    }
    let metrics_path = cell_dir.join(METRICS_FILE);
    fs::write(&metrics_path, metrics.to_json()).map_err(io_err(&metrics_path))?;
    Ok(cell_dir)
}

/// Trains, evaluates and (with `out_dir`) persists every cell, then aggregates seeds per
/// (regime, size). Cells run on a pool of `jobs` threads.
#[allow(clippy::too_many_arguments)]
pub fn learning_curve(
    source: &Corpus,
    target: &Corpus,
    cfg: &RegimeConfig,
    eval_cfg: &EvalConfig,
    regimes: &[Regime],
    sizes: &[usize],
    seeds: &[u64],
    out_dir: Option<&Path>,
    jobs: usize,
) -> Result<(Vec<RegimeReport>, Vec<CellMetrics>), TransferError> {
    if regimes.is_empty() {
        return Err(TransferError::NoRegimes);
    }
    if seeds.is_empty() {
        return Err(TransferError::NoSeeds);
    }
    if sizes.is_empty() || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(TransferError::Sizes(sizes.to_vec()));
    }
    check_test_disjoint(target)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| {
        let stage1: HashMap<u64, Checkpoint> = if regimes.contains(&Regime::Transfer) {
            seeds
                .par_iter()
                .map(|&s| Ok((s, transfer_stage_one(source, cfg, s)?.checkpoint)))
                .collect::<Result<_, TransferError>>()?
        } else {
            HashMap::new()
        };
        let cells: Vec<(Regime, usize, u64)> = regimes
            .iter()
            .flat_map(|&r| sizes.iter().flat_map(move |&n| seeds.iter().map(move |&s| (r, n, s))))
            .collect();
        let done = Mutex::new(0usize);
        let metrics = cells
            .par_iter()
            .map(|&(regime, size, seed)| {
                let pair = DomainPair {
                    source,
                    target,
                    target_train_size: size,
                };
                let run = match regime {
                    Regime::Transfer => {
                        let (run, sub) = transfer_stage_two(&stage1[&seed], &pair, cfg, seed)?;
                        RegimeRun {
                            checkpoint: run.checkpoint,
                            stage1_log: Vec::new(),
                            log: run.log,
                            subsample: sub.into_iter().map(|d| d.doc_id).collect(),
                        }
                    }
                    _ => run_regime(regime, &pair, cfg, seed)?,
                };
                let scorer = ModelScorer::from_checkpoint(&run.checkpoint);
                let report = evaluate(&scorer, &target.test, &target.schema, &cfg.features, eval_cfg)?;
                let m = CellMetrics::new(regime.as_str(), size, seed, report);
                if let Some(dir) = out_dir {
                    persist_cell(dir, &run, &m)?;
                }
                let mut n = done.lock().expect("progress counter");
                *n += 1;
                log::info!(
                    "[{}/{}] {} macro_f1={:.4}",
                    *n,
                    cells.len(),
                    run_id(regime, size, seed),
                    m.macro_f1
                );
                Ok(m)
            })
            .collect::<Result<Vec<CellMetrics>, TransferError>>()?;
        let reports = aggregate(&metrics)?;
        Ok((reports, metrics))
    })
}

/// The held-out target test set shares no document or template with the training pool.
pub fn check_test_disjoint(target: &Corpus) -> Result<(), TransferError> {
    let ids: BTreeSet<&str> = target.train.iter().map(|d| d.doc_id.as_str()).collect();
    let templates: BTreeSet<&str> = target.train.iter().map(|d| d.template_id.as_str()).collect();
    match target
        .test
        .iter()
        .find(|d| ids.contains(d.doc_id.as_str()) || templates.contains(d.template_id.as_str()))
    {
        Some(d) => Err(TransferError::Leak(d.doc_id.clone())),
        None => Ok(()),
    }
}

/// Medians per (regime, size), keyed for quick lookup.
pub fn medians(reports: &[RegimeReport]) -> BTreeMap<(String, usize), f64> {
    reports
        .iter()
        .map(|r| ((r.regime.clone(), r.target_train_size), r.median))
        .collect()
}
