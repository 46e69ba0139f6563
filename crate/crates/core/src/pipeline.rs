//! End-to-end inference: candidates → neighborhoods → scores → assignment.

use std::sync::Arc;

use thiserror::Error;

use crate::assign::{assign, Extraction};
use crate::candgen::Candidate;
use crate::docmodel::{Document, TargetSchema};
use crate::neighborhood::{FeatureConfig, NeighborSet, NeighborhoodError};
use crate::scorer::{embed_many, score_pair, ScoredCandidate, ScorerError, ScorerParams, Vocab};
use crate::training::{featurize, Checkpoint, TrainError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("document {0} has no ground truth")]
    Unlabeled(String),
    #[error("model has no embedding for field {0}")]
    UnknownField(String),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Neighborhood(#[from] NeighborhoodError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// Scores (field, candidate) pairs of one document. Each candidate is paired with every
/// schema field of its type.
pub trait CandidateScorer: Sync {
    fn score(
        &self,
        doc: &Document,
        schema: &TargetSchema,
        candidates: &[Candidate],
        features: &[Arc<NeighborSet>],
    ) -> Result<Vec<ScoredCandidate>, PipelineError>;
}

fn pairs<'a>(
    schema: &'a TargetSchema,
    candidates: &'a [Candidate],
) -> impl Iterator<Item = (usize, &'a Candidate, &'a str)> + 'a {
    candidates.iter().enumerate().flat_map(move |(i, c)| {
        schema
            .fields
            .iter()
            .filter(move |f| f.field_type == c.field_type)
            .map(move |f| (i, c, f.name.as_str()))
    })
}

fn scored(c: &Candidate, field: &str, score: f64, logit: f64) -> ScoredCandidate {
    ScoredCandidate {
        candidate_id: c.candidate_id.clone(),
        field_name: field.to_string(),
        canonical_value: c.canonical_value.clone(),
        score,
        logit,
    }
}

/// The trained neighborhood model.
pub struct ModelScorer<'a> {
    pub vocab: &'a Vocab,
    pub params: &'a ScorerParams,
}

impl<'a> ModelScorer<'a> {
    pub fn new(vocab: &'a Vocab, params: &'a ScorerParams) -> Self {
        ModelScorer { vocab, params }
    }

    pub fn from_checkpoint(ckpt: &'a Checkpoint) -> Self {
        ModelScorer::new(&ckpt.vocab, &ckpt.params)
    }

    /// Errors unless every schema field has an embedding row.
    pub fn check_schema(&self, schema: &TargetSchema) -> Result<(), PipelineError> {
        match schema.fields.iter().find(|f| self.params.field_index(&f.name).is_none()) {
            Some(f) => Err(PipelineError::UnknownField(f.name.clone())),
            None => Ok(()),
        }
    }
}

impl CandidateScorer for ModelScorer<'_> {
    fn score(
        &self,
        _doc: &Document,
        schema: &TargetSchema,
        candidates: &[Candidate],
        features: &[Arc<NeighborSet>],
    ) -> Result<Vec<ScoredCandidate>, PipelineError> {
        self.check_schema(schema)?;
        if candidates.is_empty() {
            return Ok(Vec::new());
        }
        let encoded: Vec<_> = features.iter().map(|f| self.vocab.encode(f)).collect();
        let refs: Vec<_> = encoded.iter().collect();
        let emb = embed_many(&refs, self.params)?;
        pairs(schema, candidates)
            .map(|(i, c, field)| {
                let row = self.params.field_index(field).expect("checked above");
                let s = score_pair(emb.row(i), row, self.params)?;
                Ok(scored(c, field, s.score, s.logit))
            })
            .collect()
    }
}

/// Scores 1 for candidates matching the field's ground truth and 0 otherwise.
pub struct OracleScorer;

impl CandidateScorer for OracleScorer {
    fn score(
        &self,
        doc: &Document,
        schema: &TargetSchema,
        candidates: &[Candidate],
        _features: &[Arc<NeighborSet>],
    ) -> Result<Vec<ScoredCandidate>, PipelineError> {
        if !doc.is_labeled() {
            return Err(PipelineError::Unlabeled(doc.doc_id.clone()));
        }
        Ok(pairs(schema, candidates)
            .map(|(_, c, field)| {
                let hit = doc
                    .ground_truth_for(field)
                    .iter()
                    .any(|g| g.canonical_value == c.canonical_value);
                let (score, logit) = if hit {
                    (1.0, f64::INFINITY)
                } else {
                    (0.0, f64::NEG_INFINITY)
                };
                scored(c, field, score, logit)
            })
            .collect())
    }
}

/// The same score for every pair.
pub struct ConstantScorer(pub f64);

impl CandidateScorer for ConstantScorer {
    fn score(
        &self,
        _doc: &Document,
        schema: &TargetSchema,
        candidates: &[Candidate],
        _features: &[Arc<NeighborSet>],
    ) -> Result<Vec<ScoredCandidate>, PipelineError> {
        let logit = (self.0 / (1.0 - self.0)).ln();
        Ok(pairs(schema, candidates)
            .map(|(_, c, field)| scored(c, field, self.0, logit))
            .collect())
    }
}

/// All scored pairs of a document.
pub fn score_document(
    doc: &Document,
    schema: &TargetSchema,
    scorer: &dyn CandidateScorer,
    feature_cfg: &FeatureConfig,
) -> Result<Vec<ScoredCandidate>, PipelineError> {
    let (cands, feats) = featurize(doc, &schema.field_types(), feature_cfg)?;
    scorer.score(doc, schema, &cands, &feats)
}

/// Full extraction for one document, honoring the schema's thresholds and constraints.
pub fn extract(
    doc: &Document,
    schema: &TargetSchema,
    scorer: &dyn CandidateScorer,
    feature_cfg: &FeatureConfig,
) -> Result<Extraction, PipelineError> {
    let scored = score_document(doc, schema, scorer, feature_cfg)?;
    Ok(assign(&doc.doc_id, &scored, schema))
}
