//! Document, schema and corpus data model.
//!
//! Documents arrive as tokenized OCR output: word-level tokens with page-normalized
//! bounding boxes (origin top-left, y growing downward). Parsing validates every
//! invariant and puts tokens into reading order.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assign::Constraint;

#[derive(Debug, Error)]
pub enum DocError {
    #[error("malformed input at `{path}`: {message}")]
    Malformed { path: String, message: String },
    #[error("token {token_index}: {message}")]
    InvalidToken { token_index: usize, message: String },
    #[error("invalid document: {0}")]
    Invalid(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl DocError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DocError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Axis-aligned box in page-normalized coordinates.
///
/// Serialized as `[x_min, y_min, x_max, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl From<[f64; 4]> for BBox {
    fn from(v: [f64; 4]) -> Self {
        BBox {
            x_min: v[0],
            y_min: v[1],
            x_max: v[2],
            y_max: v[3],
        }
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x_min, b.y_min, b.x_max, b.y_max]
    }
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        BBox {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn center(&self) -> (f64, f64) {
        (
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        )
    }

    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            x_min: self.x_min.min(other.x_min),
            y_min: self.y_min.min(other.y_min),
            x_max: self.x_max.max(other.x_max),
            y_max: self.y_max.max(other.y_max),
        }
    }

    /// Returns a description of the first violated invariant, if any.
    pub fn check(&self) -> Result<(), String> {
        let coords = [self.x_min, self.y_min, self.x_max, self.y_max];
        let names = ["x_min", "y_min", "x_max", "y_max"];
        for (v, name) in coords.iter().zip(names) {
            if !v.is_finite() || *v < 0.0 || *v > 1.0 {
                return Err(format!("bbox {name}={v} outside [0,1]"));
            }
        }
        if self.x_min > self.x_max {
            return Err(format!("bbox x_min {} > x_max {}", self.x_min, self.x_max));
        }
        if self.y_min > self.y_max {
            return Err(format!("bbox y_min {} > y_max {}", self.y_min, self.y_max));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    #[serde(rename = "page")]
    pub page_index: usize,
    pub bbox: BBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PageSize {
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    En,
    Fr,
}

impl Language {
    /// Whether ambiguous numeric dates read day-first.
    pub fn day_first(self) -> bool {
        matches!(self, Language::Fr)
    }

    /// Whether `,` is the decimal separator.
    pub fn decimal_comma(self) -> bool {
        matches!(self, Language::Fr)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Language::En => "en",
            Language::Fr => "fr",
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthValue {
    #[serde(rename = "value")]
    pub canonical_value: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<BBox>,
}

impl GroundTruthValue {
    pub fn new(canonical_value: impl Into<String>) -> Self {
        GroundTruthValue {
            canonical_value: canonical_value.into(),
            bbox: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub language: Language,
    pub doc_type: String,
    pub template_id: String,
    pub pages: Vec<PageSize>,
    pub tokens: Vec<Token>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<BTreeMap<String, Vec<GroundTruthValue>>>,
}

fn quantized_row(y: f64) -> i64 {
    (y * 100.0).floor() as i64
}

/// Reading-order comparator: page, then `y_min` quantized to 1/100, then `x_min`.
pub fn reading_order(a: &Token, b: &Token) -> Ordering {
    a.page_index
        .cmp(&b.page_index)
        .then_with(|| quantized_row(a.bbox.y_min).cmp(&quantized_row(b.bbox.y_min)))
        .then_with(|| a.bbox.x_min.total_cmp(&b.bbox.x_min))
}

impl Document {
    pub fn is_labeled(&self) -> bool {
        self.ground_truth.is_some()
    }

    pub fn ground_truth_for(&self, field: &str) -> &[GroundTruthValue] {
        self.ground_truth
            .as_ref()
            .and_then(|gt| gt.get(field))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Copy of this document with ground truth removed.
    pub fn unlabeled(&self) -> Document {
        Document {
            ground_truth: None,
            ..self.clone()
        }
    }

    /// Checks invariants and stably sorts tokens into reading order.
    pub fn normalize(mut self) -> Result<Document, DocError> {
        if self.doc_id.is_empty() {
            return Err(DocError::Invalid("empty doc_id".into()));
        }
        if self.template_id.is_empty() {
            return Err(DocError::Invalid("empty template_id".into()));
        }
        for (i, page) in self.pages.iter().enumerate() {
            if !(page.width.is_finite() && page.height.is_finite())
                || page.width <= 0.0
                || page.height <= 0.0
            {
                return Err(DocError::Invalid(format!("page {i} has non-positive size")));
            }
        }
        for (i, tok) in self.tokens.iter().enumerate() {
            if tok.text.is_empty() {
                return Err(DocError::InvalidToken {
                    token_index: i,
                    message: "empty text".into(),
                });
            }
            if tok.text.chars().any(char::is_whitespace) {
                return Err(DocError::InvalidToken {
                    token_index: i,
                    message: format!("text {:?} contains whitespace", tok.text),
                });
            }
            if tok.page_index >= self.pages.len() {
                return Err(DocError::InvalidToken {
                    token_index: i,
                    message: format!(
                        "page {} out of range for {} pages",
                        tok.page_index,
                        self.pages.len()
                    ),
                });
            }
            tok.bbox.check().map_err(|message| DocError::InvalidToken {
                token_index: i,
                message,
            })?;
        }
        if let Some(gt) = &self.ground_truth {
            for (field, values) in gt {
                for v in values {
                    if v.canonical_value.is_empty() {
                        return Err(DocError::Invalid(format!(
                            "empty ground-truth value for field {field}"
                        )));
                    }
                    if let Some(b) = &v.bbox {
                        b.check().map_err(|m| {
                            DocError::Invalid(format!("ground truth for {field}: {m}"))
                        })?;
                    }
                }
            }
        }
        // sort_by is stable, so ties keep input order.
        self.tokens.sort_by(reading_order);
        Ok(self)
    }
}

fn malformed<E: fmt::Display>(err: serde_path_to_error::Error<E>) -> DocError {
    let path = err.path().to_string();
    DocError::Malformed {
        path,
        message: err.into_inner().to_string(),
    }
}

/// Parses a document from its JSON representation.
pub fn parse_document(raw: &[u8]) -> Result<Document, DocError> {
    let de = &mut serde_json::Deserializer::from_slice(raw);
    let doc: Document = serde_path_to_error::deserialize(de).map_err(malformed)?;
    doc.normalize()
}

pub fn serialize_document(doc: &Document) -> String {
    serde_json::to_string(doc).expect("document serialization is infallible")
}

pub fn read_document(path: &Path) -> Result<Document, DocError> {
    let bytes = fs::read(path).map_err(|e| DocError::io(path, e))?;
    parse_document(&bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldType {
    Date,
    Amount,
    Integer,
    Numeric,
    Alphanumeric,
}

impl FieldType {
    pub const ALL: [FieldType; 5] = [
        FieldType::Date,
        FieldType::Amount,
        FieldType::Integer,
        FieldType::Numeric,
        FieldType::Alphanumeric,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FieldType::Date => "date",
            FieldType::Amount => "amount",
            FieldType::Integer => "integer",
            FieldType::Numeric => "numeric",
            FieldType::Alphanumeric => "alphanumeric",
        }
    }

    pub fn from_name(name: &str) -> Option<FieldType> {
        FieldType::ALL.into_iter().find(|t| t.as_str() == name)
    }
}

impl fmt::Display for FieldType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub field_type: FieldType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

impl FieldSpec {
    pub fn new(name: impl Into<String>, field_type: FieldType) -> Self {
        FieldSpec {
            name: name.into(),
            field_type,
            threshold: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSchema {
    pub doc_type: String,
    pub fields: Vec<FieldSpec>,
    #[serde(default)]
    pub constraints: Vec<Constraint>,
}

impl TargetSchema {
    pub fn field(&self, name: &str) -> Option<&FieldSpec> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn field_index(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }

    pub fn field_names(&self) -> Vec<String> {
        self.fields.iter().map(|f| f.name.clone()).collect()
    }

    /// Distinct field types used by the schema, in `FieldType` order.
    pub fn field_types(&self) -> Vec<FieldType> {
        let set: BTreeSet<FieldType> = self.fields.iter().map(|f| f.field_type).collect();
        set.into_iter().collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SchemaViolation {
    NoFields,
    DuplicateField(String),
    UnknownFieldType { field: String, type_name: String },
    DanglingReference { constraint: usize, field: String },
    ConstraintTypeMismatch { constraint: usize, field: String },
    ThresholdOutOfRange { field: String, threshold: f64 },
}

impl fmt::Display for SchemaViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchemaViolation::NoFields => write!(f, "schema has no fields"),
            SchemaViolation::DuplicateField(n) => write!(f, "duplicate field name {n:?}"),
            SchemaViolation::UnknownFieldType { field, type_name } => {
                write!(f, "field {field:?} has unknown type {type_name:?}")
            }
            SchemaViolation::DanglingReference { constraint, field } => {
                write!(f, "constraint {constraint} references unknown field {field:?}")
            }
            SchemaViolation::ConstraintTypeMismatch { constraint, field } => {
                write!(f, "constraint {constraint} requires a date field, {field:?} is not")
            }
            SchemaViolation::ThresholdOutOfRange { field, threshold } => {
                write!(f, "field {field:?} threshold {threshold} outside [0,1]")
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("malformed schema at `{path}`: {message}")]
    Malformed { path: String, message: String },
    #[error("invalid schema: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<SchemaViolation>),
}

impl SchemaError {
    pub fn violations(&self) -> &[SchemaViolation] {
        match self {
            SchemaError::Invalid(v) => v,
            SchemaError::Malformed { .. } => &[],
        }
    }
}

fn collect_violations(schema: &TargetSchema, out: &mut Vec<SchemaViolation>) {
    if schema.fields.is_empty() {
        out.push(SchemaViolation::NoFields);
    }
    let mut seen = BTreeSet::new();
    for f in &schema.fields {
        if !seen.insert(f.name.as_str()) {
            out.push(SchemaViolation::DuplicateField(f.name.clone()));
        }
        if let Some(t) = f.threshold {
            if !(0.0..=1.0).contains(&t) {
                out.push(SchemaViolation::ThresholdOutOfRange {
                    field: f.name.clone(),
                    threshold: t,
                });
            }
        }
    }
    for (i, c) in schema.constraints.iter().enumerate() {
        for name in c.fields() {
            match schema.field(name) {
                None => out.push(SchemaViolation::DanglingReference {
                    constraint: i,
                    field: name.to_string(),
                }),
                Some(spec) if c.requires_dates() && spec.field_type != FieldType::Date => {
                    out.push(SchemaViolation::ConstraintTypeMismatch {
                        constraint: i,
                        field: name.to_string(),
                    })
                }
                Some(_) => {}
            }
        }
    }
}

/// Checks every schema invariant, reporting all violations together.
pub fn validate_schema(schema: &TargetSchema) -> Result<(), SchemaError> {
    let mut violations = Vec::new();
    collect_violations(schema, &mut violations);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(SchemaError::Invalid(violations))
    }
}

#[derive(Deserialize)]
struct RawField {
    name: String,
    #[serde(rename = "type")]
    type_name: String,
    #[serde(default)]
    threshold: Option<f64>,
}

#[derive(Deserialize)]
struct RawSchema {
    doc_type: String,
    fields: Vec<RawField>,
    #[serde(default)]
    constraints: Vec<Constraint>,
}

/// Parses and validates a schema file. Unknown field types are reported
/// alongside the other violations rather than as a parse failure.
pub fn parse_schema(raw: &[u8]) -> Result<TargetSchema, SchemaError> {
    let de = &mut serde_json::Deserializer::from_slice(raw);
    let parsed: RawSchema =
        serde_path_to_error::deserialize(de).map_err(|e| SchemaError::Malformed {
            path: e.path().to_string(),
            message: e.into_inner().to_string(),
        })?;
    let mut violations = Vec::new();
    let mut fields = Vec::with_capacity(parsed.fields.len());
    let mut unknown = Vec::new();
    for f in parsed.fields {
        match FieldType::from_name(&f.type_name) {
            Some(field_type) => fields.push(FieldSpec {
                name: f.name,
                field_type,
                threshold: f.threshold,
            }),
            None => {
                violations.push(SchemaViolation::UnknownFieldType {
                    field: f.name.clone(),
                    type_name: f.type_name,
                });
                unknown.push(f.name);
            }
        }
    }
    let schema = TargetSchema {
        doc_type: parsed.doc_type,
        fields,
        constraints: parsed.constraints,
    };
    let mut rest = Vec::new();
    collect_violations(&schema, &mut rest);
    // A constraint naming a field with an unknown type is not dangling.
    rest.retain(|v| match v {
        SchemaViolation::DanglingReference { field, .. } => !unknown.contains(field),
        SchemaViolation::NoFields => unknown.is_empty(),
        _ => true,
    });
    violations.extend(rest);
    if violations.is_empty() {
        Ok(schema)
    } else {
        Err(SchemaError::Invalid(violations))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub split: Split,
}

/// Documents sharing one schema and one language, split into train and test.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub name: String,
    pub language: Language,
    pub schema: TargetSchema,
    pub train: Vec<Document>,
    pub test: Vec<Document>,
}

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const SCHEMA_FILE: &str = "schema.json";

impl Corpus {
    pub fn train_subset(&self, docs: Vec<Document>) -> Corpus {
        Corpus {
            name: self.name.clone(),
            language: self.language,
            schema: self.schema.clone(),
            train: docs,
            test: Vec::new(),
        }
    }

    /// Writes `schema.json`, one JSON file per document under `docs/`, and the manifest.
    pub fn write_to(&self, dir: &Path) -> Result<(), DocError> {
        let docs_dir = dir.join("docs");
        fs::create_dir_all(&docs_dir).map_err(|e| DocError::io(&docs_dir, e))?;
        let schema_path = dir.join(SCHEMA_FILE);
        let schema_json =
            serde_json::to_string_pretty(&self.schema).expect("schema serialization");
        fs::write(&schema_path, schema_json + "\n").map_err(|e| DocError::io(&schema_path, e))?;
        let mut manifest = String::new();
        let splits = self
            .train
            .iter()
            .map(|d| (d, Split::Train))
            .chain(self.test.iter().map(|d| (d, Split::Test)));
        for (doc, split) in splits {
            let rel = format!("docs/{}.json", doc.doc_id);
            let path = dir.join(&rel);
            fs::write(&path, serialize_document(doc)).map_err(|e| DocError::io(&path, e))?;
            let entry = ManifestEntry { path: rel, split };
            manifest.push_str(&serde_json::to_string(&entry).expect("manifest entry"));
            manifest.push('\n');
        }
        let manifest_path = dir.join(MANIFEST_FILE);
        fs::write(&manifest_path, manifest).map_err(|e| DocError::io(&manifest_path, e))?;
        Ok(())
    }

    pub fn read_from(dir: &Path) -> Result<Corpus, DocError> {
        let schema_path = dir.join(SCHEMA_FILE);
        let schema_bytes = fs::read(&schema_path).map_err(|e| DocError::io(&schema_path, e))?;
        let schema = parse_schema(&schema_bytes)
            .map_err(|e| DocError::Invalid(format!("{}: {e}", schema_path.display())))?;
        let entries = read_manifest(&dir.join(MANIFEST_FILE))?;
        let mut train = Vec::new();
        let mut test = Vec::new();
        for entry in entries {
            let doc = read_document(&dir.join(&entry.path))?;
            match entry.split {
                Split::Train => train.push(doc),
                Split::Test => test.push(doc),
            }
        }
        let language = train
            .first()
            .or(test.first())
            .map(|d| d.language)
            .ok_or_else(|| DocError::Invalid(format!("corpus {} is empty", dir.display())))?;
        if let Some(d) = train.iter().chain(&test).find(|d| d.language != language) {
            return Err(DocError::Invalid(format!(
                "document {} has language {}, corpus is {}",
                d.doc_id, d.language, language
            )));
        }
        let name = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Ok(Corpus {
            name,
            language,
            schema,
            train,
            test,
        })
    }
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>, DocError> {
    let text = fs::read_to_string(path).map_err(|e| DocError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| DocError::Malformed {
                path: format!("{}:{}", path.display(), i + 1),
                message: e.to_string(),
            })
        })
        .collect()
}
