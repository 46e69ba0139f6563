//! Form-document field extraction: typed candidate generation, a neighborhood
//! self-attention scorer, constrained assignment, and the scratch / transfer /
//! multi-domain training regimes, plus a synthetic corpus generator for
//! running learning-curve experiments.

pub mod assign;
pub mod candgen;
pub mod config;
pub mod docmodel;
pub mod evaluation;
pub mod neighborhood;
pub mod pipeline;
pub mod scorer;
pub mod seed;
pub mod synthcorpus;
pub mod training;
pub mod transfer;

pub use assign::{assign, Constraint, Extraction};
pub use config::ExperimentConfig;
pub use candgen::{generate_candidates, Candidate};
pub use docmodel::{
    parse_document, validate_schema, BBox, Corpus, Document, FieldSpec, FieldType, Language,
    TargetSchema, Token,
};
pub use evaluation::{evaluate, CellMetrics, EvalConfig, EvalReport, FieldMetrics, RegimeReport};
pub use neighborhood::{extract_neighbors, FeatureConfig, NeighborSet};
pub use pipeline::{extract, CandidateScorer, ModelScorer, OracleScorer};
pub use scorer::{Dims, ScorerParams, Vocab};
pub use synthcorpus::{generate_corpus, CorpusSpec, DocType};
pub use training::{Checkpoint, TrainConfig};
pub use transfer::{learning_curve, DomainPair, Regime, RegimeConfig};
