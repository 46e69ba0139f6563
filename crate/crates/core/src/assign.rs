//! Final assignment: per-field argmax with optional thresholds, then greedy repair of
//! business-constraint violations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::docmodel::{Document, TargetSchema};
use crate::scorer::ScoredCandidate;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Constraint {
    /// `field_a`'s date must not be later than `field_b`'s.
    DatePrecedes { field_a: String, field_b: String },
    DistinctValues { field_a: String, field_b: String },
}

impl Constraint {
    pub fn fields(&self) -> [&str; 2] {
        match self {
            Constraint::DatePrecedes { field_a, field_b }
            | Constraint::DistinctValues { field_a, field_b } => [field_a, field_b],
        }
    }

    pub fn requires_dates(&self) -> bool {
        matches!(self, Constraint::DatePrecedes { .. })
    }

    /// Whether two canonical values satisfy the constraint. Dates are ISO strings, so
    /// lexicographic order is chronological.
    pub fn satisfied(&self, value_a: &str, value_b: &str) -> bool {
        match self {
            Constraint::DatePrecedes { .. } => value_a <= value_b,
            Constraint::DistinctValues { .. } => value_a != value_b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignedValue {
    pub candidate_id: String,
    pub canonical_value: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    pub doc_id: String,
    /// Every schema field; `None` when nothing was assigned.
    pub fields: BTreeMap<String, Option<AssignedValue>>,
}

impl Extraction {
    pub fn get(&self, field: &str) -> Option<&AssignedValue> {
        self.fields.get(field).and_then(Option::as_ref)
    }
}

fn current<'a>(ranked: &[Vec<&'a ScoredCandidate>], pos: &[usize], i: usize) -> Option<&'a ScoredCandidate> {
    ranked[i].get(pos[i]).copied()
}

/// Orders by descending score, then ascending candidate id.
fn rank(a: &ScoredCandidate, b: &ScoredCandidate) -> std::cmp::Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.candidate_id.cmp(&b.candidate_id))
}

/// Greedy constrained assignment.
///
/// Each field takes its best candidate at or above its threshold. While some
/// constraint is violated, the first violated constraint (in schema order) releases
/// its lower-scoring side (ties: the larger candidate id, then `field_b`), which moves
/// on to its next-best candidate or becomes absent. Every release consumes a
/// candidate, so the loop runs at most once per candidate.
pub fn assign(doc_id: &str, scored: &[ScoredCandidate], schema: &TargetSchema) -> Extraction {
    let ranked: Vec<Vec<&ScoredCandidate>> = schema
        .fields
        .iter()
        .map(|f| {
            let threshold = f.threshold.unwrap_or(0.0);
            let mut list: Vec<&ScoredCandidate> = scored
                .iter()
                .filter(|c| c.field_name == f.name && c.score >= threshold)
                .collect();
            list.sort_by(|a, b| rank(a, b));
            list
        })
        .collect();
    let mut pos: Vec<usize> = vec![0; ranked.len()];
    let constraints: Vec<(usize, usize, &Constraint)> = schema
        .constraints
        .iter()
        .filter_map(|c| {
            let [a, b] = c.fields();
            Some((schema.field_index(a)?, schema.field_index(b)?, c))
        })
        .collect();
    let mut budget: usize = ranked.iter().map(Vec::len).sum();
    while budget > 0 {
        let violated = constraints.iter().find_map(|&(a, b, c)| {
            let ca = current(&ranked, &pos, a)?;
            let cb = current(&ranked, &pos, b)?;
            (!c.satisfied(&ca.canonical_value, &cb.canonical_value)).then_some((a, b, ca, cb))
        });
        let Some((a, b, ca, cb)) = violated else {
            break;
        };
        let loser = if ca.score < cb.score {
            a
        } else if cb.score < ca.score {
            b
        } else if ca.candidate_id > cb.candidate_id {
            a
        } else {
            b
        };
        pos[loser] += 1;
        budget -= 1;
    }
    let fields = schema
        .fields
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let v = current(&ranked, &pos, i).map(|c| AssignedValue {
                candidate_id: c.candidate_id.clone(),
                canonical_value: c.canonical_value.clone(),
                score: c.score,
            });
            (f.name.clone(), v)
        })
        .collect();
    Extraction {
        doc_id: doc_id.to_string(),
        fields,
    }
}

/// One point of a precision-recall sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub predicted: usize,
    pub correct: usize,
    /// No predictions at this threshold; precision is reported as 1.0.
    pub precision_undefined: bool,
}

impl PrPoint {
    pub fn f1(&self) -> f64 {
        let s = self.precision + self.recall;
        if s == 0.0 {
            0.0
        } else {
            2.0 * self.precision * self.recall / s
        }
    }
}

/// Per-document outcome of one field: the assigned score and whether it was correct.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldOutcome {
    pub assigned: Option<(f64, bool)>,
    pub has_ground_truth: bool,
}

pub fn field_outcomes(
    extraction: &Extraction,
    doc: &Document,
    field: &str,
) -> FieldOutcome {
    let gt = doc.ground_truth_for(field);
    FieldOutcome {
        assigned: extraction.get(field).map(|v| {
            let correct = gt.iter().any(|g| g.canonical_value == v.canonical_value);
            (v.score, correct)
        }),
        has_ground_truth: !gt.is_empty(),
    }
}

/// PR points over thresholds `{0, 1} ∪ observed scores`, ascending. A prediction
/// survives threshold `t` when its score is `>= t`; recall is relative to the number
/// of documents labeled for the field. Empty when the field has no predictions.
pub fn pr_points(outcomes: &[FieldOutcome]) -> Vec<PrPoint> {
    let mut scored: Vec<(f64, bool)> = outcomes.iter().filter_map(|o| o.assigned).collect();
    if scored.is_empty() {
        return Vec::new();
    }
    let n_gt = outcomes.iter().filter(|o| o.has_ground_truth).count();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut thresholds: Vec<f64> = std::iter::once(0.0)
        .chain(scored.iter().map(|s| s.0))
        .chain(std::iter::once(1.0))
        .collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    // suffix counts over the ascending score list
    let mut points = Vec::with_capacity(thresholds.len());
    let mut idx = 0;
    let total_correct: usize = scored.iter().filter(|s| s.1).count();
    let mut dropped_correct = 0;
    for t in thresholds {
        while idx < scored.len() && scored[idx].0 < t {
            if scored[idx].1 {
                dropped_correct += 1;
            }
            idx += 1;
        }
        let predicted = scored.len() - idx;
        let correct = total_correct - dropped_correct;
        let undefined = predicted == 0;
        points.push(PrPoint {
            threshold: t,
            precision: if undefined {
                1.0
            } else {
                correct as f64 / predicted as f64
            },
            recall: if n_gt == 0 {
                0.0
            } else {
                correct as f64 / n_gt as f64
            },
            predicted,
            correct,
            precision_undefined: undefined,
        });
    }
    points
}

/// Threshold → (precision, recall) table per schema field over a labeled corpus.
pub fn sweep_thresholds(
    extractions: &[Extraction],
    docs: &[Document],
    schema: &TargetSchema,
) -> BTreeMap<String, Vec<PrPoint>> {
    let by_id: BTreeMap<&str, &Document> = docs.iter().map(|d| (d.doc_id.as_str(), d)).collect();
    schema
        .fields
        .iter()
        .map(|f| {
            let outcomes: Vec<FieldOutcome> = extractions
                .iter()
                .filter_map(|e| by_id.get(e.doc_id.as_str()).map(|d| field_outcomes(e, d, &f.name)))
                .collect();
            (f.name.clone(), pr_points(&outcomes))
        })
        .collect()
}
