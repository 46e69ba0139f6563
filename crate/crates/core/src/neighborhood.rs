//! Candidate neighborhoods: the nearby tokens and their relative positions that form
//! the scorer input. The candidate's own tokens are never part of its neighborhood.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::candgen::Candidate;
use crate::docmodel::Document;

#[derive(Debug, Error)]
pub enum NeighborhoodError {
    #[error("candidate {candidate_id} spans tokens {start}..{end} but document {doc_id} has {n_tokens}")]
    SpanOutOfRange {
        candidate_id: String,
        doc_id: String,
        start: usize,
        end: usize,
        n_tokens: usize,
    },
    #[error("candidate {candidate_id} belongs to document {expected}, not {actual}")]
    WrongDocument {
        candidate_id: String,
        expected: String,
        actual: String,
    },
    #[error("invalid feature config: {0}")]
    Config(String),
}

/// Distance multipliers by the neighbor's direction from the candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZoneWeights {
    pub left: f64,
    pub above: f64,
    pub right: f64,
    pub below: f64,
}

impl Default for ZoneWeights {
    fn default() -> Self {
        ZoneWeights {
            left: 1.0,
            above: 1.0,
            right: 1.5,
            below: 1.5,
        }
    }
}

impl ZoneWeights {
    /// Horizontal zones win when `|dx| >= |dy|`.
    pub fn weight(&self, dx: f64, dy: f64) -> f64 {
        if dx.abs() >= dy.abs() {
            if dx < 0.0 {
                self.left
            } else {
                self.right
            }
        } else if dy < 0.0 {
            self.above
        } else {
            self.below
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub max_neighbors: usize,
    pub radius: f64,
    pub zone_weights: ZoneWeights,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            max_neighbors: 16,
            radius: 0.35,
            zone_weights: ZoneWeights::default(),
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<(), NeighborhoodError> {
        if self.max_neighbors == 0 {
            return Err(NeighborhoodError::Config("max_neighbors must be >= 1".into()));
        }
        if !(self.radius > 0.0 && self.radius <= std::f64::consts::SQRT_2) {
            return Err(NeighborhoodError::Config(format!(
                "radius {} outside (0, sqrt 2]",
                self.radius
            )));
        }
        let w = self.zone_weights;
        if [w.left, w.above, w.right, w.below]
            .iter()
            .any(|v| !(v.is_finite() && *v > 0.0))
        {
            return Err(NeighborhoodError::Config("zone weights must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub token_index: usize,
    pub token_text: String,
    pub rel_x: f64,
    pub rel_y: f64,
    pub distance: f64,
    /// Zone-weighted distance used for ranking.
    pub weighted_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborSet {
    pub candidate_id: String,
    pub neighbors: Vec<Neighbor>,
    pub pad_count: usize,
}

impl NeighborSet {
    pub fn empty(candidate_id: impl Into<String>, max_neighbors: usize) -> Self {
        NeighborSet {
            candidate_id: candidate_id.into(),
            neighbors: Vec::new(),
            pad_count: max_neighbors,
        }
    }

    pub fn capacity(&self) -> usize {
        self.neighbors.len() + self.pad_count
    }
}

/// Selects up to `max_neighbors` same-page tokens whose zone-weighted center distance
/// is within `radius`, ranked by that distance with ties in reading order.
pub fn extract_neighbors(
    doc: &Document,
    cand: &Candidate,
    cfg: &FeatureConfig,
) -> Result<NeighborSet, NeighborhoodError> {
    if cand.doc_id != doc.doc_id {
        return Err(NeighborhoodError::WrongDocument {
            candidate_id: cand.candidate_id.clone(),
            expected: cand.doc_id.clone(),
            actual: doc.doc_id.clone(),
        });
    }
    let span = &cand.token_span;
    if span.is_empty() || span.end > doc.tokens.len() {
        return Err(NeighborhoodError::SpanOutOfRange {
            candidate_id: cand.candidate_id.clone(),
            doc_id: doc.doc_id.clone(),
            start: span.start,
            end: span.end,
            n_tokens: doc.tokens.len(),
        });
    }
    let (cx, cy) = cand.bbox.center();
    let mut picked: Vec<Neighbor> = doc
        .tokens
        .iter()
        .enumerate()
        .filter(|(i, t)| t.page_index == cand.page_index && !span.contains(i))
        .filter_map(|(i, t)| {
            let (tx, ty) = t.bbox.center();
            let (dx, dy) = (tx - cx, ty - cy);
            let distance = dx.hypot(dy);
            let weighted = distance * cfg.zone_weights.weight(dx, dy);
            (weighted <= cfg.radius).then(|| Neighbor {
                token_index: i,
                token_text: t.text.clone(),
                rel_x: dx,
                rel_y: dy,
                distance,
                weighted_distance: weighted,
            })
        })
        .collect();
    picked.sort_by(|a, b| {
        a.weighted_distance
            .total_cmp(&b.weighted_distance)
            .then(a.token_index.cmp(&b.token_index))
    });
    picked.truncate(cfg.max_neighbors);
    let pad_count = cfg.max_neighbors - picked.len();
    Ok(NeighborSet {
        candidate_id: cand.candidate_id.clone(),
        neighbors: picked,
        pad_count,
    })
}
