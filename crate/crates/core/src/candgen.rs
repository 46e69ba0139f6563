//! Typed, high-recall candidate generators.
//!
//! Every contiguous same-line span of up to [`MAX_SPAN_TOKENS`] tokens is offered to the
//! parser of the requested type; each span that parses becomes a candidate whose
//! canonical value is a pure function of the span text and the type.

use std::collections::BTreeMap;
use std::io::Write;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::docmodel::{BBox, Document, FieldType, Language, TargetSchema, Token};

pub const MAX_SPAN_TOKENS: usize = 4;

/// Largest horizontal gap (page-normalized) between two tokens of one span.
pub const MAX_SPAN_GAP: f64 = 0.025;

#[derive(Debug, Error)]
pub enum CandGenError {
    #[error("document {0} has no ground truth")]
    Unlabeled(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub candidate_id: String,
    pub doc_id: String,
    pub field_type: FieldType,
    pub token_span: Range<usize>,
    pub raw_text: String,
    pub canonical_value: String,
    pub bbox: BBox,
    pub page_index: usize,
}

// ---------------------------------------------------------------------------
// dates

const MONTHS: &[(&str, u32)] = &[
    ("january", 1),
    ("jan", 1),
    ("janvier", 1),
    ("janv", 1),
    ("february", 2),
    ("feb", 2),
    ("fevrier", 2),
    ("février", 2),
    ("fevr", 2),
    ("févr", 2),
    ("fev", 2),
    ("fév", 2),
    ("march", 3),
    ("mar", 3),
    ("mars", 3),
    ("april", 4),
    ("apr", 4),
    ("avril", 4),
    ("avr", 4),
    ("may", 5),
    ("mai", 5),
    ("june", 6),
    ("jun", 6),
    ("juin", 6),
    ("july", 7),
    ("jul", 7),
    ("juillet", 7),
    ("juil", 7),
    ("august", 8),
    ("aug", 8),
    ("aout", 8),
    ("août", 8),
    ("september", 9),
    ("sep", 9),
    ("sept", 9),
    ("septembre", 9),
    ("october", 10),
    ("oct", 10),
    ("octobre", 10),
    ("november", 11),
    ("nov", 11),
    ("novembre", 11),
    ("december", 12),
    ("dec", 12),
    ("décembre", 12),
    ("decembre", 12),
    ("déc", 12),
];

fn month_number(word: &str) -> Option<u32> {
    let w = word.trim_end_matches('.');
    MONTHS.iter().find(|(name, _)| *name == w).map(|&(_, m)| m)
}

fn is_leap(year: i32) -> bool {
    (year % 4 == 0 && year % 100 != 0) || year % 400 == 0
}

fn days_in_month(year: i32, month: u32) -> u32 {
    match month {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 if is_leap(year) => 29,
        2 => 28,
        _ => 0,
    }
}

fn ymd(year: i32, month: u32, day: u32) -> Option<String> {
    if !(1..=9999).contains(&year) || !(1..=12).contains(&month) {
        return None;
    }
    if day == 0 || day > days_in_month(year, month) {
        return None;
    }
    Some(format!("{year:04}-{month:02}-{day:02}"))
}

fn all_digits(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

/// Two-digit years pivot: 00–68 → 2000s, 69–99 → 1900s.
fn expand_year(s: &str) -> Option<i32> {
    if !all_digits(s) {
        return None;
    }
    let y: i32 = s.parse().ok()?;
    match s.len() {
        2 if y <= 68 => Some(2000 + y),
        2 => Some(1900 + y),
        4 => Some(y),
        _ => None,
    }
}

fn parse_day(s: &str) -> Option<u32> {
    let s = s
        .strip_suffix("er")
        .or_else(|| s.strip_suffix("st"))
        .or_else(|| s.strip_suffix("nd"))
        .or_else(|| s.strip_suffix("rd"))
        .or_else(|| s.strip_suffix("th"))
        .unwrap_or(s);
    if !all_digits(s) || s.len() > 2 {
        return None;
    }
    s.parse().ok()
}

fn parse_numeric_date(s: &str, language: Language) -> Option<String> {
    let sep = s.chars().find(|c| matches!(c, '/' | '-' | '.'))?;
    let parts: Vec<&str> = s.split(sep).collect();
    if parts.len() != 3 || parts.iter().any(|p| !all_digits(p)) {
        return None;
    }
    if parts[0].len() == 4 {
        if parts[1].len() > 2 || parts[2].len() > 2 {
            return None;
        }
        let year = parts[0].parse().ok()?;
        return ymd(year, parts[1].parse().ok()?, parts[2].parse().ok()?);
    }
    if parts[0].len() > 2 || parts[1].len() > 2 {
        return None;
    }
    let year = expand_year(parts[2])?;
    let a: u32 = parts[0].parse().ok()?;
    let b: u32 = parts[1].parse().ok()?;
    let (first, second) = if language.day_first() {
        ((b, a), (a, b))
    } else {
        ((a, b), (b, a))
    };
    ymd(year, first.0, first.1).or_else(|| ymd(year, second.0, second.1))
}

fn parse_month_name_date(s: &str) -> Option<String> {
    let lower = s.to_lowercase();
    let parts: Vec<&str> = lower
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|p| !p.is_empty())
        .collect();
    if parts.len() != 3 {
        return None;
    }
    let year = expand_year(parts[2])?;
    if let Some(month) = month_number(parts[1]) {
        return ymd(year, month, parse_day(parts[0])?);
    }
    let month = month_number(parts[0])?;
    ymd(year, month, parse_day(parts[1])?)
}

/// Parses a date into `YYYY-MM-DD`.
///
/// Numeric forms with a two-digit first component are read month-first for English
/// and day-first for French; if that reading is not a valid date the other order is
/// tried, so only genuinely ambiguous strings depend on the language.
pub fn parse_date(text: &str, language: Language) -> Option<String> {
    let s = text.trim();
    if s.is_empty() {
        return None;
    }
    if !s.contains(char::is_whitespace) {
        if let Some(d) = parse_numeric_date(s, language) {
            return Some(d);
        }
    }
    parse_month_name_date(s)
}

// ---------------------------------------------------------------------------
// numbers

const CURRENCY_SYMBOLS: &[&str] = &["$", "€", "£", "¥"];
const CURRENCY_CODES: &[&str] = &["usd", "eur", "cad", "gbp", "chf"];

fn is_space_sep(c: char) -> bool {
    matches!(c, ' ' | '\u{a0}' | '\u{202f}')
}

fn strip_currency(s: &str) -> &str {
    let mut s = s.trim();
    for sym in CURRENCY_SYMBOLS {
        if let Some(rest) = s.strip_prefix(sym) {
            return rest.trim();
        }
        if let Some(rest) = s.strip_suffix(sym) {
            return rest.trim();
        }
    }
    let lower = s.to_ascii_lowercase();
    for code in CURRENCY_CODES {
        if lower.starts_with(code) && s.is_char_boundary(code.len()) {
            let rest = &s[code.len()..];
            if rest.starts_with(|c: char| c.is_whitespace() || c.is_ascii_digit() || c == '-') {
                return rest.trim();
            }
        }
        if lower.ends_with(code) && s.len() >= code.len() {
            let cut = s.len() - code.len();
            if s.is_char_boundary(cut) {
                let rest = &s[..cut];
                if rest.ends_with(|c: char| c.is_whitespace() || c.is_ascii_digit()) {
                    s = rest.trim();
                    return s;
                }
            }
        }
    }
    s
}

/// Splits off a leading minus sign.
fn strip_sign(s: &str) -> (bool, &str) {
    if let Some(rest) = s.strip_prefix('-').or_else(|| s.strip_prefix('\u{2212}')) {
        (true, rest.trim_start())
    } else if let Some(rest) = s.strip_prefix('+') {
        (false, rest.trim_start())
    } else {
        (false, s)
    }
}

/// Validates digit groups separated by grouping characters: first group 1–3 digits,
/// every following group exactly 3. Returns the concatenated digits.
fn ungroup(int_part: &str, is_group: impl Fn(char) -> bool) -> Option<String> {
    let groups: Vec<&str> = int_part.split(|c| is_group(c)).collect();
    if groups.iter().any(|g| !all_digits(g)) {
        return None;
    }
    if groups.len() > 1 && (groups[0].len() > 3 || groups[1..].iter().any(|g| g.len() != 3)) {
        return None;
    }
    Some(groups.concat())
}

fn strip_leading_zeros(digits: &str) -> &str {
    let t = digits.trim_start_matches('0');
    if t.is_empty() {
        "0"
    } else {
        t
    }
}

/// Decimal split of an amount body: (integer digits, fraction digits).
fn split_decimal(body: &str, language: Language) -> Option<(String, String)> {
    if !body.starts_with(|c: char| c.is_ascii_digit())
        || !body.ends_with(|c: char| c.is_ascii_digit())
    {
        return None;
    }
    if body
        .chars()
        .any(|c| !(c.is_ascii_digit() || c == ',' || c == '.' || c == '\'' || is_space_sep(c)))
    {
        return None;
    }
    let n_comma = body.matches(',').count();
    let n_dot = body.matches('.').count();
    let decimal_sep = if n_comma > 0 && n_dot > 0 {
        let last = body.rfind([',', '.'])?;
        let sep = body[last..].chars().next()?;
        if body.matches(sep).count() != 1 {
            return None;
        }
        Some(sep)
    } else if n_comma + n_dot == 0 {
        None
    } else {
        let sep = if n_comma > 0 { ',' } else { '.' };
        let count = n_comma + n_dot;
        let locale_decimal = if language.decimal_comma() { ',' } else { '.' };
        // a lone '.' is the canonical form's decimal point in every language
        if sep == locale_decimal || (sep == '.' && count == 1) {
            (count == 1).then_some(sep)
        } else {
            let grouped = ungroup(body, |c| c == sep || is_space_sep(c) || c == '\'').is_some();
            if grouped {
                None
            } else {
                let tail = body.rsplit(sep).next()?;
                if count == 1 && (1..=2).contains(&tail.len()) {
                    Some(sep)
                } else {
                    return None;
                }
            }
        }
    };
    let (int_part, frac) = match decimal_sep {
        Some(sep) => {
            let idx = body.rfind(sep)?;
            (&body[..idx], &body[idx + sep.len_utf8()..])
        }
        None => (body, ""),
    };
    if !frac.is_empty() && !all_digits(frac) {
        return None;
    }
    let digits = ungroup(int_part, |c| {
        (c == ',' || c == '.' || c == '\'' || is_space_sep(c)) && Some(c) != decimal_sep
    })?;
    Some((digits, frac.to_string()))
}

/// Parses a monetary amount into a plain decimal string with at least two decimals.
pub fn parse_amount(text: &str, language: Language) -> Option<String> {
    let s = text.trim();
    let (neg_outer, s) = strip_sign(s);
    let s = strip_currency(s);
    let (neg_inner, s) = strip_sign(s);
    if neg_outer && neg_inner {
        return None;
    }
    let (int_digits, frac) = split_decimal(s, language)?;
    let int_digits = strip_leading_zeros(&int_digits);
    let mut frac = frac.trim_end_matches('0').to_string();
    while frac.len() < 2 {
        frac.push('0');
    }
    let zero = int_digits == "0" && frac.bytes().all(|b| b == b'0');
    let sign = if (neg_outer || neg_inner) && !zero { "-" } else { "" };
    Some(format!("{sign}{int_digits}.{frac}"))
}

/// Optional sign and digits, with optional `,` or space grouping.
pub fn parse_integer(text: &str) -> Option<String> {
    let (neg, s) = strip_sign(text.trim());
    let digits = ungroup(s, |c| c == ',' || is_space_sep(c))?;
    let digits = strip_leading_zeros(&digits);
    let sign = if neg && digits != "0" { "-" } else { "" };
    Some(format!("{sign}{digits}"))
}

/// Integer or `.`-decimal number; canonical form drops leading and trailing zeros.
pub fn parse_numeric(text: &str) -> Option<String> {
    let (neg, s) = strip_sign(text.trim());
    let (int_part, frac) = match s.split_once('.') {
        Some((i, f)) => {
            if !all_digits(f) {
                return None;
            }
            (i, f)
        }
        None => (s, ""),
    };
    let digits = ungroup(int_part, |c| c == ',')?;
    let digits = strip_leading_zeros(&digits);
    let frac = frac.trim_end_matches('0');
    let zero = digits == "0" && frac.is_empty();
    let sign = if neg && !zero { "-" } else { "" };
    if frac.is_empty() {
        Some(format!("{sign}{digits}"))
    } else {
        Some(format!("{sign}{digits}.{frac}"))
    }
}

fn is_id_punct(c: char) -> bool {
    matches!(c, '-' | '/' | '_' | '.' | '#')
}

/// Identifier-like token: ASCII letters and digits with internal `-/_.#`, at least one
/// digit, at least three characters. Canonical form is uppercase.
pub fn parse_alphanumeric(text: &str) -> Option<String> {
    let s = text.trim();
    if s.chars().count() < 3 {
        return None;
    }
    if !s.chars().all(|c| c.is_ascii_alphanumeric() || is_id_punct(c)) {
        return None;
    }
    let first = s.chars().next()?;
    let last = s.chars().last()?;
    if !first.is_ascii_alphanumeric() || !last.is_ascii_alphanumeric() {
        return None;
    }
    if !s.chars().any(|c| c.is_ascii_digit()) {
        return None;
    }
    Some(s.to_ascii_uppercase())
}

/// Dispatches to the parser for `field_type`.
pub fn canonicalize(text: &str, field_type: FieldType, language: Language) -> Option<String> {
    match field_type {
        FieldType::Date => parse_date(text, language),
        FieldType::Amount => parse_amount(text, language),
        FieldType::Integer => parse_integer(text),
        FieldType::Numeric => parse_numeric(text),
        FieldType::Alphanumeric => parse_alphanumeric(text),
    }
}

// ---------------------------------------------------------------------------
// span scan

/// Tokens with no letter or digit ("$", "€", ":") never start or end a multi-token span.
fn is_bare_symbol(token: &Token) -> bool {
    !token.text.chars().any(char::is_alphanumeric)
}

fn continues_line(prev: &Token, next: &Token) -> bool {
    prev.page_index == next.page_index
        && next.bbox.y_min <= prev.bbox.y_max
        && prev.bbox.y_min <= next.bbox.y_max
        && next.bbox.x_min >= prev.bbox.x_min
        && next.bbox.x_min - prev.bbox.x_max <= MAX_SPAN_GAP
}

/// Token index ranges eligible as candidate spans, in (start, length) order.
pub fn candidate_spans(doc: &Document) -> Vec<Range<usize>> {
    let toks = &doc.tokens;
    let mut spans = Vec::new();
    for start in 0..toks.len() {
        for end in start + 1..=(start + MAX_SPAN_TOKENS).min(toks.len()) {
            if end - start > 1 && !continues_line(&toks[end - 2], &toks[end - 1]) {
                break;
            }
            if end - start > 1 && (is_bare_symbol(&toks[start]) || is_bare_symbol(&toks[end - 1]))
            {
                continue;
            }
            spans.push(start..end);
        }
    }
    spans
}

pub fn span_text(doc: &Document, span: &Range<usize>) -> String {
    doc.tokens[span.clone()]
        .iter()
        .map(|t| t.text.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

fn candidate_id(field_type: FieldType, span: &Range<usize>) -> String {
    format!("{}-{:05}-{}", field_type, span.start, span.len())
}

/// All candidates of type `field_type` in `doc`, ordered by span start then length.
pub fn generate_candidates(doc: &Document, field_type: FieldType) -> Vec<Candidate> {
    candidate_spans(doc)
        .into_iter()
        .filter_map(|span| {
            let raw_text = span_text(doc, &span);
            let canonical_value = canonicalize(&raw_text, field_type, doc.language)?;
            let first = &doc.tokens[span.start];
            let bbox = doc.tokens[span.clone()]
                .iter()
                .fold(first.bbox, |acc, t| acc.union(&t.bbox));
            Some(Candidate {
                candidate_id: candidate_id(field_type, &span),
                doc_id: doc.doc_id.clone(),
                field_type,
                page_index: first.page_index,
                token_span: span,
                raw_text,
                canonical_value,
                bbox,
            })
        })
        .collect()
}

/// Candidates for every type used by `schema`.
pub fn generate_for_schema(doc: &Document, schema: &TargetSchema) -> Vec<Candidate> {
    schema
        .field_types()
        .into_iter()
        .flat_map(|t| generate_candidates(doc, t))
        .collect()
}

/// Per field: fraction of ground-truth values matched by at least one candidate of the
/// field's type. Fields without any ground truth report 0.
pub fn candidate_coverage(
    docs: &[Document],
    schema: &TargetSchema,
) -> Result<BTreeMap<String, f64>, CandGenError> {
    let mut hit = vec![0usize; schema.fields.len()];
    let mut total = vec![0usize; schema.fields.len()];
    for doc in docs {
        if !doc.is_labeled() {
            return Err(CandGenError::Unlabeled(doc.doc_id.clone()));
        }
        let mut by_type: BTreeMap<FieldType, Vec<Candidate>> = BTreeMap::new();
        for t in schema.field_types() {
            by_type.insert(t, generate_candidates(doc, t));
        }
        for (i, field) in schema.fields.iter().enumerate() {
            let cands = &by_type[&field.field_type];
            for gt in doc.ground_truth_for(&field.name) {
                total[i] += 1;
                if cands.iter().any(|c| c.canonical_value == gt.canonical_value) {
                    hit[i] += 1;
                }
            }
        }
    }
    Ok(schema
        .fields
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let cov = if total[i] == 0 {
                0.0
            } else {
                hit[i] as f64 / total[i] as f64
            };
            (f.name.clone(), cov)
        })
        .collect())
}

/// Writes one JSON object per candidate.
pub fn write_candidates_jsonl<W: Write>(mut out: W, candidates: &[Candidate]) -> std::io::Result<()> {
    for c in candidates {
        serde_json::to_writer(&mut out, c)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
