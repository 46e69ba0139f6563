//! Per-field precision-recall sweeps, Max F1, field filtering, macro averages and
//! learning-curve reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assign::{assign, sweep_thresholds, PrPoint};
use crate::candgen::{candidate_coverage, CandGenError};
use crate::docmodel::{Document, TargetSchema};
use crate::neighborhood::FeatureConfig;
use crate::pipeline::{score_document, CandidateScorer, PipelineError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("test document {0} has no ground truth")]
    Unlabeled(String),
    #[error("no field passes the coverage and label-count filters")]
    NoIncludedFields,
    #[error("median of an empty list")]
    Empty,
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

impl From<CandGenError> for EvalError {
    fn from(e: CandGenError) -> Self {
        match e {
            CandGenError::Unlabeled(id) => EvalError::Unlabeled(id),
        }
    }
}

/// Field filter: coverage strictly above `min_coverage` and at least
/// `min_ground_truth` labeled documents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub min_coverage: f64,
    pub min_ground_truth: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            min_coverage: 0.8,
            min_ground_truth: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldMetrics {
    pub field_name: String,
    pub coverage: f64,
    pub n_ground_truth: usize,
    pub pr_points: Vec<PrPoint>,
    pub max_f1: f64,
    pub included: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub fields: Vec<FieldMetrics>,
    pub macro_f1: f64,
}

pub fn max_f1(points: &[PrPoint]) -> f64 {
    points.iter().map(PrPoint::f1).fold(0.0, f64::max)
}

/// Unweighted mean of `max_f1` over included fields.
pub fn macro_average(metrics: &[FieldMetrics]) -> Result<f64, EvalError> {
    let included: Vec<f64> = metrics.iter().filter(|m| m.included).map(|m| m.max_f1).collect();
    if included.is_empty() {
        return Err(EvalError::NoIncludedFields);
    }
    Ok(included.iter().sum::<f64>() / included.len() as f64)
}

/// (median, min, max); an even-length median is the mean of the middle two.
pub fn median_over_seeds(values: &[f64]) -> Result<(f64, f64, f64), EvalError> {
    if values.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let median = if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    };
    Ok((median, v[0], v[n - 1]))
}

/// Runs the full pipeline over labeled `docs` and sweeps per-field thresholds over the
/// threshold-free assignment (schema thresholds are ignored; constraints apply).
pub fn evaluate(
    scorer: &dyn CandidateScorer,
    docs: &[Document],
    schema: &TargetSchema,
    feature_cfg: &FeatureConfig,
    cfg: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    if let Some(d) = docs.iter().find(|d| !d.is_labeled()) {
        return Err(EvalError::Unlabeled(d.doc_id.clone()));
    }
    let coverage = candidate_coverage(docs, schema)?;
    let mut free = schema.clone();
    for f in &mut free.fields {
        f.threshold = None;
    }
    let extractions = docs
        .par_iter()
        .map(|doc| {
            let scored = score_document(doc, &free, scorer, feature_cfg)?;
            Ok(assign(&doc.doc_id, &scored, &free))
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    let mut sweeps = sweep_thresholds(&extractions, docs, &free);
    let fields: Vec<FieldMetrics> = schema
        .fields
        .iter()
        .map(|f| {
            let pr_points = sweeps.remove(&f.name).unwrap_or_default();
            let n_ground_truth = docs
                .iter()
                .filter(|d| !d.ground_truth_for(&f.name).is_empty())
                .count();
            let cov = coverage[&f.name];
            FieldMetrics {
                field_name: f.name.clone(),
                coverage: cov,
                n_ground_truth,
                max_f1: max_f1(&pr_points),
                pr_points,
                included: cov > cfg.min_coverage && n_ground_truth >= cfg.min_ground_truth,
            }
        })
        .collect();
    let macro_f1 = macro_average(&fields)?;
    Ok(EvalReport { fields, macro_f1 })
}

/// Metrics of one learning-curve cell (or one evaluation run).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub regime: String,
    pub size: usize,
    pub seed: u64,
    pub per_field_f1: BTreeMap<String, f64>,
    pub macro_f1: f64,
    pub fields: Vec<FieldMetrics>,
}

impl CellMetrics {
    pub fn new(regime: &str, size: usize, seed: u64, report: EvalReport) -> Self {
        CellMetrics {
            regime: regime.to_string(),
            size,
            seed,
            per_field_f1: report
                .fields
                .iter()
                .filter(|f| f.included)
                .map(|f| (f.field_name.clone(), f.max_f1))
                .collect(),
            macro_f1: report.macro_f1,
            fields: report.fields,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialization") + "\n"
    }
}

/// Seeds aggregated for one (regime, size).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub regime: String,
    pub target_train_size: usize,
    pub seeds: Vec<u64>,
    pub macro_f1: Vec<f64>,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    /// Per-field metrics of the median seed (the lower middle one for even counts).
    pub fields: Vec<FieldMetrics>,
}

impl RegimeReport {
    /// Aggregates cells that share regime and size.
    pub fn from_cells(cells: &[CellMetrics]) -> Result<RegimeReport, EvalError> {
        let first = cells.first().ok_or(EvalError::Empty)?;
        let values: Vec<f64> = cells.iter().map(|c| c.macro_f1).collect();
        let (median, min, max) = median_over_seeds(&values)?;
        let mut order: Vec<usize> = (0..cells.len()).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(cells[a].seed.cmp(&cells[b].seed)));
        let mid = order[(cells.len() - 1) / 2];
        Ok(RegimeReport {
            regime: first.regime.clone(),
            target_train_size: first.size,
            seeds: cells.iter().map(|c| c.seed).collect(),
            macro_f1: values,
            median,
            min,
            max,
            fields: cells[mid].fields.clone(),
        })
    }
}

/// Groups cells by (regime, size) and aggregates each group; output sorted by regime
/// name then size.
pub fn aggregate(cells: &[CellMetrics]) -> Result<Vec<RegimeReport>, EvalError> {
    let mut groups: BTreeMap<(String, usize), Vec<CellMetrics>> = BTreeMap::new();
    for c in cells {
        groups
            .entry((c.regime.clone(), c.size))
            .or_default()
            .push(c.clone());
    }
    groups
        .into_values()
        .map(|mut g| {
            g.sort_by_key(|c| c.seed);
            RegimeReport::from_cells(&g)
        })
        .collect()
}

pub fn curve_csv(reports: &[RegimeReport]) -> String {
    let mut out = String::from("regime,size,n_seeds,median_macro_f1,min_macro_f1,max_macro_f1\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{:.6},{:.6},{:.6}",
            r.regime,
            r.target_train_size,
            r.seeds.len(),
            r.median,
            r.min,
            r.max
        );
    }
    out
}

const PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

/// Learning curve: median macro F1 against target training size, one line per regime,
/// with min/max error bars. Sizes are spaced logarithmically when they span more than
/// a factor of ten.
pub fn curve_svg(reports: &[RegimeReport], title: &str) -> String {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (60.0, 150.0, 40.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let sizes: Vec<usize> = {
        let mut s: Vec<usize> = reports.iter().map(|r| r.target_train_size).collect();
        s.sort_unstable();
        s.dedup();
        s
    };
    let (lo, hi) = (
        *sizes.first().unwrap_or(&1) as f64,
        *sizes.last().unwrap_or(&1) as f64,
    );
    let log = lo > 0.0 && hi / lo > 10.0;
    let xf = |s: usize| -> f64 {
        let s = s as f64;
        let t = if hi == lo {
            0.5
        } else if log {
            (s.ln() - lo.ln()) / (hi.ln() - lo.ln())
        } else {
            (s - lo) / (hi - lo)
        };
        left + t * pw
    };
    let yf = |v: f64| top + (1.0 - v.clamp(0.0, 1.0)) * ph;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        left + pw / 2.0,
        xml_escape(title)
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{left}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        top + ph,
        left + pw,
        top + ph
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{}" stroke="black"/>"#,
        top + ph
    );
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let y = yf(v);
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{y}" x2="{left}" y2="{y}" stroke="black"/><text x="{}" y="{}" text-anchor="end">{v:.1}</text>"#,
            left - 4.0,
            left - 6.0,
            y + 4.0
        );
    }
    for &s in &sizes {
        let x = xf(s);
        let _ = writeln!(
            svg,
            r#"<line x1="{x}" y1="{}" x2="{x}" y2="{}" stroke="black"/><text x="{x}" y="{}" text-anchor="middle">{s}</text>"#,
            top + ph,
            top + ph + 4.0,
            top + ph + 18.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">labeled target documents</text>"#,
        left + pw / 2.0,
        h - 10.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">macro Max F1</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );
    let mut by_regime: BTreeMap<&str, Vec<&RegimeReport>> = BTreeMap::new();
    for r in reports {
        by_regime.entry(r.regime.as_str()).or_default().push(r);
    }
    for (i, (regime, mut rs)) in by_regime.into_iter().enumerate() {
        rs.sort_by_key(|r| r.target_train_size);
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = rs
            .iter()
            .map(|r| format!("{:.2},{:.2}", xf(r.target_train_size), yf(r.median)))
            .collect();
        if pts.len() > 1 {
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                pts.join(" ")
            );
        }
        for r in &rs {
            let x = xf(r.target_train_size);
            let _ = writeln!(
                svg,
                r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="{color}"/><circle cx="{x:.2}" cy="{:.2}" r="3.5" fill="{color}"/>"#,
                yf(r.min),
                yf(r.max),
                yf(r.median)
            );
        }
        let ly = top + 10.0 + 18.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<rect x="{}" y="{}" width="12" height="12" fill="{color}"/><text x="{}" y="{}">{}</text>"#,
            left + pw + 15.0,
            ly - 10.0,
            left + pw + 32.0,
            ly,
            xml_escape(regime)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}
