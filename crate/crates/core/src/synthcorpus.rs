//! Synthetic labeled form corpora: invoices and paystubs in English and French, one
//! distinct template per document.
//!
//! A template is a seeded layout (grid of key/value blocks, tables, distractor blocks,
//! value formats) plus a lexicon draw (key phrases and fixed vendor text). Layout and
//! lexicon come from separate random streams, so an English and a French template
//! generated from the same seed share their layout.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use chrono::{Datelike, Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::assign::Constraint;
use crate::candgen::{generate_candidates, Candidate};
use crate::docmodel::{
    BBox, Corpus, Document, FieldSpec, FieldType, GroundTruthValue, Language, PageSize,
    TargetSchema, Token,
};
use crate::seed::derive_seed;

const CHAR_W: f64 = 0.0065;
const SPACE_W: f64 = 0.006;
const TOKEN_H: f64 = 0.013;
const LINE_H: f64 = 0.021;
const KEY_GAP: f64 = 0.035;
const PAGE_BOTTOM: f64 = 0.975;
const MAX_VALUE_ATTEMPTS: usize = 200;
const MAX_TEMPLATE_ATTEMPTS: usize = 1000;
const LINE_ITEM_ROWS: usize = 5;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid corpus spec: {0}")]
    Spec(String),
    #[error("template {template_id}: layout overflows the page ({detail})")]
    LayoutOverflow { template_id: String, detail: String },
    #[error("template {0}: could not sample collision-free values")]
    Values(String),
    #[error("no collision-free template after {0} attempts")]
    Templates(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocType {
    Invoice,
    Paystub,
}

impl DocType {
    pub fn as_str(self) -> &'static str {
        match self {
            DocType::Invoice => "invoice",
            DocType::Paystub => "paystub",
        }
    }

    pub fn from_name(name: &str) -> Option<DocType> {
        match name {
            "invoice" => Some(DocType::Invoice),
            "paystub" => Some(DocType::Paystub),
            _ => None,
        }
    }

    pub fn default_schema(self) -> TargetSchema {
        match self {
            DocType::Invoice => invoice_schema(),
            DocType::Paystub => paystub_schema(),
        }
    }
}

fn schema(doc_type: &str, fields: &[(&str, FieldType)], constraints: Vec<Constraint>) -> TargetSchema {
    TargetSchema {
        doc_type: doc_type.into(),
        fields: fields.iter().map(|&(n, t)| FieldSpec::new(n, t)).collect(),
        constraints,
    }
}

fn precedes(a: &str, b: &str) -> Constraint {
    Constraint::DatePrecedes {
        field_a: a.into(),
        field_b: b.into(),
    }
}

/// The 12-field invoice schema.
pub fn invoice_schema() -> TargetSchema {
    use FieldType::*;
    schema(
        "invoice",
        &[
            ("invoice_number", Alphanumeric),
            ("purchase_order", Alphanumeric),
            ("customer_number", Alphanumeric),
            ("invoice_date", Date),
            ("due_date", Date),
            ("delivery_date", Date),
            ("subtotal", Amount),
            ("tax_amount", Amount),
            ("freight_amount", Amount),
            ("total_amount", Amount),
            ("amount_due", Amount),
            ("payment_terms", Integer),
        ],
        vec![precedes("invoice_date", "due_date")],
    )
}

/// The 19-field paystub schema.
pub fn paystub_schema() -> TargetSchema {
    use FieldType::*;
    schema(
        "paystub",
        &[
            ("employee_id", Alphanumeric),
            ("check_number", Alphanumeric),
            ("pay_date", Date),
            ("period_start", Date),
            ("period_end", Date),
            ("gross_pay", Amount),
            ("net_pay", Amount),
            ("federal_tax", Amount),
            ("state_tax", Amount),
            ("social_security", Amount),
            ("medicare", Amount),
            ("total_deductions", Amount),
            ("ytd_gross", Amount),
            ("ytd_net", Amount),
            ("regular_hours", Numeric),
            ("overtime_hours", Numeric),
            ("hourly_rate", Amount),
            ("regular_pay", Amount),
            ("overtime_pay", Amount),
        ],
        vec![
            precedes("period_start", "period_end"),
            precedes("period_end", "pay_date"),
        ],
    )
}

// ---------------------------------------------------------------------------
// lexicon

fn key_synonyms(field: &str, language: Language) -> &'static [&'static str] {
    use Language::*;
    match (field, language) {
        ("invoice_number", En) => &["Invoice No.", "Invoice Number", "Invoice #", "Inv No.", "Bill Number", "Reference"],
        ("invoice_number", Fr) => &["N° de facture", "Facture N°", "Numéro de facture", "Référence", "Facture"],
        ("purchase_order", En) => &["PO Number", "P.O. No.", "Purchase Order", "Order No.", "Your Order"],
        ("purchase_order", Fr) => &["Bon de commande", "N° de commande", "Commande", "Réf. commande"],
        ("customer_number", En) => &["Customer No.", "Account Number", "Customer ID", "Client No.", "Acct #"],
        ("customer_number", Fr) => &["N° client", "Code client", "Numéro de client", "Compte client"],
        ("invoice_date", En) => &["Invoice Date", "Date", "Dated", "Date of Invoice"],
        ("invoice_date", Fr) => &["Date de facture", "Date", "Facturé le"],
        ("due_date", En) => &["Due Date", "Payment Due", "Due", "Pay By"],
        ("due_date", Fr) => &["Date d'échéance", "Échéance", "À payer avant le", "Date limite"],
        ("delivery_date", En) => &["Delivery Date", "Ship Date", "Shipped", "Date Shipped"],
        ("delivery_date", Fr) => &["Date de livraison", "Livré le", "Expédié le", "Livraison"],
        ("subtotal", En) => &["Subtotal", "Sub Total", "Net Amount", "Total Before Tax"],
        ("subtotal", Fr) => &["Sous-total", "Total HT", "Montant HT"],
        ("tax_amount", En) => &["Tax", "Sales Tax", "VAT", "Tax Amount"],
        ("tax_amount", Fr) => &["TVA", "Montant TVA", "Taxes", "Total TVA"],
        ("freight_amount", En) => &["Freight", "Shipping", "Shipping & Handling", "Delivery Charge"],
        ("freight_amount", Fr) => &["Frais de port", "Transport", "Port", "Frais de livraison"],
        ("total_amount", En) => &["Total", "Invoice Total", "Total Amount", "Grand Total"],
        ("total_amount", Fr) => &["Total TTC", "Total", "Montant total", "Montant TTC"],
        ("amount_due", En) => &["Amount Due", "Balance Due", "Please Pay", "Total Due"],
        ("amount_due", Fr) => &["Solde dû", "Reste à payer", "Montant dû", "Net à payer"],
        ("payment_terms", En) => &["Terms (days)", "Net Days", "Payment Terms", "Days Net"],
        ("payment_terms", Fr) => &["Délai (jours)", "Jours", "Conditions (jours)", "Paiement à"],
        ("employee_id", En) => &["Employee ID", "Emp No.", "Employee Number", "Badge"],
        ("employee_id", Fr) => &["Matricule", "N° salarié", "Identifiant"],
        ("check_number", En) => &["Check No.", "Cheque #", "Advice Number", "Voucher No."],
        ("check_number", Fr) => &["N° de bulletin", "Bulletin N°", "Référence paie"],
        ("pay_date", En) => &["Pay Date", "Check Date", "Date Paid", "Payment Date"],
        ("pay_date", Fr) => &["Date de paiement", "Payé le", "Date de versement"],
        ("period_start", En) => &["Period Start", "Period Beginning", "From", "Start Date"],
        ("period_start", Fr) => &["Début de période", "Du", "Période du"],
        ("period_end", En) => &["Period End", "Period Ending", "To", "End Date"],
        ("period_end", Fr) => &["Fin de période", "Au", "Jusqu'au"],
        ("gross_pay", En) => &["Gross Pay", "Total Gross", "Gross Earnings", "Gross"],
        ("gross_pay", Fr) => &["Salaire brut", "Brut", "Total brut"],
        ("net_pay", En) => &["Net Pay", "Take Home", "Net Amount", "Net Check"],
        ("net_pay", Fr) => &["Net à payer", "Salaire net", "Net payé"],
        ("federal_tax", En) => &["Federal Income Tax", "Fed Tax", "Federal Withholding", "FIT"],
        ("federal_tax", Fr) => &["Impôt sur le revenu", "Prélèvement à la source", "Impôt"],
        ("state_tax", En) => &["State Income Tax", "State Tax", "SIT", "State Withholding"],
        ("state_tax", Fr) => &["CSG", "CSG déductible", "Contribution sociale"],
        ("social_security", En) => &["Social Security", "OASDI", "Soc Sec", "FICA SS"],
        ("social_security", Fr) => &["Sécurité sociale", "Cotisation maladie", "Assurance vieillesse"],
        ("medicare", En) => &["Medicare", "Medicare Tax", "FICA Med", "Med"],
        ("medicare", Fr) => &["Mutuelle", "Complémentaire santé", "Prévoyance"],
        ("total_deductions", En) => &["Total Deductions", "Deductions", "Total Withheld", "Total Taxes"],
        ("total_deductions", Fr) => &["Total des cotisations", "Total retenues", "Retenues"],
        ("ytd_gross", En) => &["YTD Gross", "Year to Date Gross", "Gross YTD"],
        ("ytd_gross", Fr) => &["Brut cumulé", "Cumul brut", "Brut annuel"],
        ("ytd_net", En) => &["YTD Net", "Year to Date Net", "Net YTD"],
        ("ytd_net", Fr) => &["Net cumulé", "Cumul net", "Net annuel"],
        ("regular_hours", En) => &["Regular Hours", "Reg Hrs", "Hours Worked", "Hours"],
        ("regular_hours", Fr) => &["Heures normales", "Heures travaillées", "Heures"],
        ("overtime_hours", En) => &["Overtime Hours", "OT Hrs", "Overtime Hrs", "Extra Hours"],
        ("overtime_hours", Fr) => &["Heures supplémentaires", "Heures sup.", "HS"],
        ("hourly_rate", En) => &["Hourly Rate", "Rate", "Pay Rate", "Rate/Hr"],
        ("hourly_rate", Fr) => &["Taux horaire", "Taux", "Taux/heure"],
        ("regular_pay", En) => &["Regular Pay", "Regular Earnings", "Reg Pay", "Base Pay"],
        ("regular_pay", Fr) => &["Salaire de base", "Montant base", "Rémunération"],
        ("overtime_pay", En) => &["Overtime Pay", "OT Pay", "Overtime Earnings", "Premium Pay"],
        ("overtime_pay", Fr) => &["Montant HS", "Majoration HS", "Paiement HS"],
        _ => &[],
    }
}

/// Fields the generator knows how to render, with their types.
pub fn known_fields(doc_type: DocType) -> Vec<(String, FieldType)> {
    doc_type
        .default_schema()
        .fields
        .into_iter()
        .map(|f| (f.name, f.field_type))
        .collect()
}

struct Phrases {
    title: &'static [&'static str],
    footer: &'static [&'static str],
    page: &'static [&'static str],
    recipient: &'static [&'static str],
    table_headers: [&'static [&'static str]; 4],
    earn_rows: [&'static [&'static str]; 2],
    earn_cols: [&'static [&'static str]; 3],
    bank: &'static [&'static str],
}

fn phrases(doc_type: DocType, language: Language) -> Phrases {
    use Language::*;
    let (title, recipient): (&[&str], &[&str]) = match (doc_type, language) {
        (DocType::Invoice, En) => (&["INVOICE", "Tax Invoice", "Commercial Invoice"], &["Bill To", "Sold To", "Customer"]),
        (DocType::Invoice, Fr) => (&["FACTURE", "Facture", "Facture commerciale"], &["Facturé à", "Client", "Destinataire"]),
        (DocType::Paystub, En) => (&["EARNINGS STATEMENT", "Pay Stub", "Payroll Advice"], &["Employee", "Pay To", "Employee Name"]),
        (DocType::Paystub, Fr) => (&["BULLETIN DE PAIE", "Bulletin de salaire", "Fiche de paie"], &["Salarié", "Employé", "Bénéficiaire"]),
    };
    match language {
        En => Phrases {
            title,
            footer: &["Thank you for your business", "Questions? Contact our office", "Keep this statement for your records"],
            page: &["Page 1 of 1", "Page 1/1"],
            recipient,
            table_headers: [
                &["Description", "Item", "Product"],
                &["Qty", "Quantity", "Units"],
                &["Unit Price", "Price", "Rate"],
                &["Amount", "Line Total", "Ext. Price"],
            ],
            earn_rows: [&["Regular", "Reg"], &["Overtime", "OT"]],
            earn_cols: [&["Hours", "Hrs"], &["Rate", "Pay Rate"], &["Current", "This Period", "Amount"]],
            bank: &["Bank", "Remit To", "Payment Details"],
        },
        Fr => Phrases {
            title,
            footer: &["Merci de votre confiance", "Pour toute question contactez-nous", "Conservez ce document"],
            page: &["Page 1 sur 1", "Page 1/1"],
            recipient,
            table_headers: [
                &["Désignation", "Article", "Produit"],
                &["Qté", "Quantité", "Unités"],
                &["Prix unitaire", "P.U.", "Prix"],
                &["Montant", "Total ligne", "Montant HT"],
            ],
            earn_rows: [&["Base", "Normal"], &["Heures sup.", "HS"]],
            earn_cols: [&["Heures", "Nb"], &["Taux", "Taux horaire"], &["Montant", "Période"]],
            bank: &["Banque", "Coordonnées bancaires", "Règlement"],
        },
    }
}

const COMPANIES: &[&str] = &[
    "Acme Supply", "Northwind Traders", "Globex Industries", "Initech Services", "Umbrella Logistics",
    "Stark Components", "Wayne Hardware", "Hooli Systems", "Vandelay Imports", "Soylent Foods",
    "Cyberdyne Tools", "Tyrell Materials", "Wonka Confections", "Duff Beverages", "Monarch Paper",
];
const PEOPLE: &[&str] = &[
    "Alex Martin", "Sam Bernard", "Jordan Petit", "Casey Dubois", "Morgan Leroy", "Taylor Moreau",
    "Jamie Laurent", "Robin Simon", "Charlie Michel", "Drew Garcia", "Avery Thomas", "Quinn Robert",
];
const STREETS_EN: &[&str] = &["Main Street", "Oak Avenue", "Industrial Blvd", "Harbor Road", "Elm Drive", "Market Street"];
const STREETS_FR: &[&str] = &["rue de la Paix", "avenue Victor Hugo", "boulevard Voltaire", "rue du Commerce", "quai des Docks"];
const CITIES_EN: &[&str] = &["Springfield, IL", "Riverside, CA", "Fairview, TX", "Madison, WI", "Salem, OR"];
const CITIES_FR: &[&str] = &["Paris", "Lyon", "Marseille", "Toulouse", "Nantes", "Lille"];
const PRODUCTS_EN: &[&str] = &[
    "Steel bolts", "Copper wire", "Office chairs", "Printer paper", "Consulting services", "Pallet wrap",
    "LED panels", "Safety gloves", "Cable ties", "Software license",
];
const PRODUCTS_FR: &[&str] = &[
    "Boulons acier", "Fil de cuivre", "Chaises de bureau", "Papier imprimante", "Prestation de conseil",
    "Film palette", "Panneaux LED", "Gants de sécurité", "Colliers de serrage", "Licence logiciel",
];

// ---------------------------------------------------------------------------
// templates

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DateStyle {
    Numeric2,
    Numeric4,
    Iso,
    Dotted,
    LongMonth,
    ShortMonth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    None,
    /// `,` for English, a separate space-delimited token for French.
    Native,
    /// `.` grouping (French only; English falls back to `,`).
    Dot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Currency {
    None,
    SymbolAttached,
    SymbolSeparate,
    Code,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AmountStyle {
    pub grouping: Grouping,
    pub currency: Currency,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IdStyle {
    pub prefix: String,
    pub digits: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Slot {
    /// Key phrase at `key`; the value sits right of the key or on the next line.
    KeyValue { key: Point, below: bool },
    /// Cell of the earnings table.
    Cell { row: usize, col: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldBlock {
    pub field: String,
    pub slot: Slot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistractorKind {
    Title,
    Vendor,
    Recipient,
    LineItems,
    Bank,
    Footer,
    PageNumber,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistractorBlock {
    pub kind: DistractorKind,
    pub at: Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableLayout {
    /// y of the header row.
    pub y: f64,
    /// x of each column; the first column holds row labels or descriptions.
    pub col_x: Vec<f64>,
}

/// The lexicon-independent part of a template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Structure {
    pub columns: usize,
    pub fields: Vec<FieldBlock>,
    pub distractors: Vec<DistractorBlock>,
    pub line_items: Option<TableLayout>,
    pub earnings: Option<TableLayout>,
    pub date_style: DateStyle,
    pub amount_style: AmountStyle,
    pub hours_two_decimals: bool,
    pub colon: bool,
    pub id_styles: BTreeMap<String, IdStyle>,
}

impl Structure {
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("structure serialization");
        hex::encode(&Sha256::digest(json)[..12])
    }
}

/// Language-specific text fixed for all documents of a template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    pub keys: BTreeMap<String, String>,
    pub title: String,
    pub recipient: String,
    pub footer: String,
    pub page: String,
    pub bank: String,
    pub table_headers: Vec<String>,
    pub earn_rows: Vec<String>,
    pub earn_cols: Vec<String>,
    pub vendor: Vec<String>,
    pub bank_lines: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub template_id: String,
    pub doc_type: DocType,
    pub language: Language,
    pub structure: Structure,
    pub lexicon: Lexicon,
}

fn default_test_fraction() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    #[serde(default)]
    pub name: Option<String>,
    pub doc_type: DocType,
    pub language: Language,
    pub n_docs: usize,
    pub seed: u64,
    /// Defaults to the doc type's schema; must use only fields the generator renders.
    #[serde(default)]
    pub schema: Option<TargetSchema>,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    /// Exact test-set size; overrides `test_fraction`.
    #[serde(default)]
    pub n_test: Option<usize>,
    /// Probability that a value token is dropped or corrupted after labeling.
    #[serde(default)]
    pub noise: f64,
}

impl CorpusSpec {
    pub fn new(doc_type: DocType, language: Language, n_docs: usize, seed: u64) -> Self {
        CorpusSpec {
            name: None,
            doc_type,
            language,
            n_docs,
            seed,
            schema: None,
            test_fraction: default_test_fraction(),
            n_test: None,
            noise: 0.0,
        }
    }

    pub fn name(&self) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| format!("{}-{}", self.doc_type.as_str(), self.language))
    }

    pub fn schema(&self) -> TargetSchema {
        self.schema
            .clone()
            .unwrap_or_else(|| self.doc_type.default_schema())
    }

    pub fn n_test(&self) -> usize {
        self.n_test
            .unwrap_or_else(|| (self.test_fraction * self.n_docs as f64).round() as usize)
            .min(self.n_docs)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_docs == 0 {
            return Err(SynthError::Spec("n_docs must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(SynthError::Spec(format!(
                "test_fraction {} outside [0,1)",
                self.test_fraction
            )));
        }
        if let Some(n) = self.n_test {
            if n >= self.n_docs {
                return Err(SynthError::Spec(format!(
                    "n_test {n} leaves no training documents out of {}",
                    self.n_docs
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(SynthError::Spec(format!("noise {} outside [0,1]", self.noise)));
        }
        let schema = self.schema();
        crate::docmodel::validate_schema(&schema)
            .map_err(|e| SynthError::Spec(e.to_string()))?;
        if schema.doc_type != self.doc_type.as_str() {
            return Err(SynthError::Spec(format!(
                "schema doc_type {} does not match {}",
                schema.doc_type,
                self.doc_type.as_str()
            )));
        }
        let known = known_fields(self.doc_type);
        for f in &schema.fields {
            if !known.iter().any(|(n, t)| *n == f.name && *t == f.field_type) {
                return Err(SynthError::Spec(format!(
                    "the generator cannot render field {} of type {}",
                    f.name, f.field_type
                )));
            }
        }
        Ok(())
    }
}

fn text_width(text: &str) -> f64 {
    let words: Vec<&str> = text.split_whitespace().collect();
    words.iter().map(|w| w.chars().count() as f64 * CHAR_W).sum::<f64>()
        + SPACE_W * words.len().saturating_sub(1) as f64
}

fn max_key_width(field: &str) -> f64 {
    [Language::En, Language::Fr]
        .iter()
        .flat_map(|&l| key_synonyms(field, l))
        .map(|k| text_width(k) + CHAR_W)
        .fold(0.0, f64::max)
}

/// Upper bound on the rendered width of any value of this type.
fn max_value_width(t: FieldType) -> f64 {
    let chars = match t {
        FieldType::Date => 18,
        FieldType::Amount => 15,
        FieldType::Alphanumeric => 13,
        FieldType::Integer => 3,
        FieldType::Numeric => 6,
    };
    chars as f64 * CHAR_W + 2.0 * SPACE_W
}

const EARNINGS_CELLS: [(&str, usize, usize); 5] = [
    ("regular_hours", 0, 0),
    ("hourly_rate", 0, 1),
    ("regular_pay", 0, 2),
    ("overtime_hours", 1, 0),
    ("overtime_pay", 1, 2),
];

fn id_style(field: &str, rng: &mut ChaCha8Rng) -> IdStyle {
    let prefixes: &[&str] = match field {
        "invoice_number" => &["INV-", "", "F", "IN", "2024-"],
        "purchase_order" => &["PO-", "PO", "", "CMD-"],
        "customer_number" => &["C-", "CUST", "", "CL"],
        "employee_id" => &["E", "EMP-", "", "ID"],
        "check_number" => &["", "CHK", "A", "N"],
        _ => &[""],
    };
    IdStyle {
        prefix: prefixes.choose(rng).unwrap().to_string(),
        digits: rng.gen_range(5..=8),
    }
}

/// Lays out blocks in a grid of `columns` cells starting at `y`; returns the y after it.
fn grid(
    blocks: &[(String, FieldType)],
    columns: usize,
    x0: f64,
    width: f64,
    y: f64,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<FieldBlock>,
) -> f64 {
    let cell_w = width / columns as f64;
    let mut y = y;
    for row in blocks.chunks(columns) {
        let mut row_h: f64 = 0.0;
        for (c, (name, t)) in row.iter().enumerate() {
            let fits_right = max_key_width(name) + KEY_GAP + max_value_width(*t) <= cell_w - 0.01;
            let below = !fits_right || rng.gen_bool(0.35);
            let key = Point {
                x: x0 + c as f64 * cell_w,
                y,
            };
            out.push(FieldBlock {
                field: name.clone(),
                slot: Slot::KeyValue { key, below },
            });
            row_h = row_h.max(if below { 2.0 * LINE_H } else { LINE_H });
        }
        y += row_h + rng.gen_range(0.008..0.02);
    }
    y
}

fn generate_structure(
    doc_type: DocType,
    schema: &TargetSchema,
    rng: &mut ChaCha8Rng,
) -> Result<Structure, String> {
    let margin = rng.gen_range(0.04..0.08);
    let width = 1.0 - 2.0 * margin;
    let mut distractors = Vec::new();
    let mut y = rng.gen_range(0.03..0.06);

    let title_x = *[margin, 0.4, 0.6].choose(rng).unwrap();
    distractors.push(DistractorBlock {
        kind: DistractorKind::Title,
        at: Point { x: title_x, y },
    });
    y += 2.0 * LINE_H;
    let vendor_left = rng.gen_bool(0.5);
    let (vx, rx) = if vendor_left {
        (margin, 0.55)
    } else {
        (0.55, margin)
    };
    distractors.push(DistractorBlock {
        kind: DistractorKind::Vendor,
        at: Point { x: vx, y },
    });
    let stacked = rng.gen_bool(0.3);
    let ry = if stacked { y + 4.0 * LINE_H } else { y };
    distractors.push(DistractorBlock {
        kind: DistractorKind::Recipient,
        at: Point {
            x: if stacked { vx } else { rx },
            y: ry,
        },
    });
    y = ry + 4.0 * LINE_H + 0.015;

    let use_earnings = doc_type == DocType::Paystub
        && EARNINGS_CELLS
            .iter()
            .all(|(f, _, _)| schema.field(f).is_some())
        && rng.gen_bool(0.7);
    let mut kv: Vec<(String, FieldType)> = schema
        .fields
        .iter()
        .filter(|f| !(use_earnings && EARNINGS_CELLS.iter().any(|(n, _, _)| *n == f.name)))
        .map(|f| (f.name.clone(), f.field_type))
        .collect();
    kv.shuffle(rng);
    let (mut top, mut bottom): (Vec<_>, Vec<_>) = (Vec::new(), Vec::new());
    for b in kv {
        let p_bottom = if b.1 == FieldType::Amount { 0.8 } else { 0.15 };
        if rng.gen_bool(p_bottom) {
            bottom.push(b);
        } else {
            top.push(b);
        }
    }
    let columns = match doc_type {
        DocType::Invoice => rng.gen_range(2..=3),
        DocType::Paystub => rng.gen_range(3..=4),
    };
    let mut fields = Vec::new();
    y = grid(&top, columns, margin, width, y, rng, &mut fields) + 0.01;

    let mut line_items = None;
    let mut earnings = None;
    match doc_type {
        DocType::Invoice => {
            let col_x = vec![
                margin,
                rng.gen_range(0.40..0.46),
                rng.gen_range(0.52..0.58),
                rng.gen_range(0.72..0.78),
            ];
            distractors.push(DistractorBlock {
                kind: DistractorKind::LineItems,
                at: Point { x: margin, y },
            });
            line_items = Some(TableLayout { y, col_x });
            y += (LINE_ITEM_ROWS + 1) as f64 * LINE_H + 0.02;
        }
        DocType::Paystub if use_earnings => {
            let col_x = vec![
                margin,
                rng.gen_range(0.30..0.36),
                rng.gen_range(0.48..0.54),
                rng.gen_range(0.68..0.74),
            ];
            for &(f, row, col) in &EARNINGS_CELLS {
                fields.push(FieldBlock {
                    field: f.into(),
                    slot: Slot::Cell { row, col },
                });
            }
            earnings = Some(TableLayout { y, col_x });
            y += 3.0 * LINE_H + 0.02;
        }
        DocType::Paystub => {}
    }

    let boxed = rng.gen_bool(0.5) && bottom.len() <= 8;
    y = if boxed {
        grid(&bottom, 1, 0.55, 1.0 - margin - 0.55, y, rng, &mut fields)
    } else {
        grid(&bottom, columns, margin, width, y, rng, &mut fields)
    } + 0.01;

    let mut tail = vec![DistractorKind::Footer];
    if rng.gen_bool(0.6) {
        tail.insert(0, DistractorKind::Bank);
    }
    if rng.gen_bool(0.5) {
        tail.push(DistractorKind::PageNumber);
    }
    for kind in tail {
        let h = if kind == DistractorKind::Bank { 3.0 } else { 1.0 };
        distractors.push(DistractorBlock {
            kind,
            at: Point { x: margin, y },
        });
        y += h * LINE_H + 0.01;
    }
    if y > PAGE_BOTTOM {
        return Err(format!("content ends at y={y:.3}"));
    }

    let date_style = *[
        DateStyle::Numeric2,
        DateStyle::Numeric4,
        DateStyle::Iso,
        DateStyle::Dotted,
        DateStyle::LongMonth,
        DateStyle::ShortMonth,
    ]
    .choose(rng)
    .unwrap();
    let amount_style = AmountStyle {
        grouping: *[Grouping::None, Grouping::Native, Grouping::Dot].choose(rng).unwrap(),
        currency: *[
            Currency::None,
            Currency::SymbolAttached,
            Currency::SymbolSeparate,
            Currency::Code,
        ]
        .choose(rng)
        .unwrap(),
    };
    let id_styles = schema
        .fields
        .iter()
        .filter(|f| f.field_type == FieldType::Alphanumeric)
        .map(|f| (f.name.clone(), id_style(&f.name, rng)))
        .collect();
    Ok(Structure {
        columns,
        fields,
        distractors,
        line_items,
        earnings,
        date_style,
        amount_style,
        hours_two_decimals: rng.gen_bool(0.5),
        colon: rng.gen_bool(0.5),
        id_styles,
    })
}

fn pick(options: &[&str], rng: &mut ChaCha8Rng) -> String {
    options.choose(rng).copied().unwrap_or_default().to_string()
}

fn generate_lexicon(
    doc_type: DocType,
    language: Language,
    schema: &TargetSchema,
    rng: &mut ChaCha8Rng,
) -> Lexicon {
    let ph = phrases(doc_type, language);
    let keys = schema
        .fields
        .iter()
        .map(|f| (f.name.clone(), pick(key_synonyms(&f.name, language), rng)))
        .collect();
    let company = pick(COMPANIES, rng);
    let number = rng.gen_range(1..=999);
    let vendor = match language {
        Language::En => vec![
            company,
            format!("{number} {}", pick(STREETS_EN, rng)),
            format!("{} {}", pick(CITIES_EN, rng), rng.gen_range(10000..99999)),
            format!("Tel 555-{:04}", rng.gen_range(0..10000)),
        ],
        Language::Fr => vec![
            company,
            format!("{number} {}", pick(STREETS_FR, rng)),
            format!("{} {}", rng.gen_range(10..96) * 1000 + rng.gen_range(0..1000), pick(CITIES_FR, rng)),
            format!("Tél 0{} {:02} {:02} {:02} {:02}", rng.gen_range(1..6), rng.gen_range(0..100), rng.gen_range(0..100), rng.gen_range(0..100), rng.gen_range(0..100)),
        ],
    };
    let bank_lines = match language {
        Language::En => vec![
            format!("Account {}", rng.gen_range(10_000_000..99_999_999)),
            format!("Routing {:09}", rng.gen_range(0..1_000_000_000u64)),
        ],
        Language::Fr => vec![
            format!("IBAN FR76 {} {} {}", rng.gen_range(1000..9999), rng.gen_range(1000..9999), rng.gen_range(1000..9999)),
            format!("BIC {}", pick(&["BNPAFRPP", "SOGEFRPP", "CRLYFRPP", "AGRIFRPP"], rng)),
        ],
    };
    Lexicon {
        keys,
        title: pick(ph.title, rng),
        recipient: pick(ph.recipient, rng),
        footer: pick(ph.footer, rng),
        page: pick(ph.page, rng),
        bank: pick(ph.bank, rng),
        table_headers: ph.table_headers.iter().map(|o| pick(o, rng)).collect(),
        earn_rows: ph.earn_rows.iter().map(|o| pick(o, rng)).collect(),
        earn_cols: ph.earn_cols.iter().map(|o| pick(o, rng)).collect(),
        vendor,
        bank_lines,
    }
}

fn template_from_seed(
    doc_type: DocType,
    language: Language,
    schema: &TargetSchema,
    template_seed: u64,
) -> Result<Template, String> {
    let mut srng = ChaCha8Rng::seed_from_u64(derive_seed(template_seed, &[b"structure"]));
    let structure = generate_structure(doc_type, schema, &mut srng)?;
    let mut lrng = ChaCha8Rng::seed_from_u64(derive_seed(
        template_seed,
        &[b"lexicon", language.as_str().as_bytes()],
    ));
    let lexicon = generate_lexicon(doc_type, language, schema, &mut lrng);
    let id_src = serde_json::to_vec(&(doc_type, language, &structure, &lexicon))
        .expect("template serialization");
    let template_id = hex::encode(&Sha256::digest(id_src)[..8]);
    Ok(Template {
        template_id,
        doc_type,
        language,
        structure,
        lexicon,
    })
}

/// Seeded template for `spec`. Seeds whose layout would overflow the page are
/// re-drawn with a salt, so every seed yields a template.
pub fn generate_template(spec: &CorpusSpec, template_seed: u64) -> Template {
    let schema = spec.schema();
    for salt in 0u64.. {
        let seed = if salt == 0 {
            template_seed
        } else {
            derive_seed(template_seed, &[b"relayout", &salt.to_le_bytes()])
        };
        if let Ok(t) = template_from_seed(spec.doc_type, spec.language, &schema, seed) {
            return t;
        }
    }
    unreachable!()
}

// ---------------------------------------------------------------------------
// values

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Date(NaiveDate),
    Amount(i64),
    Integer(i64),
    /// Hundredths.
    Numeric(i64),
    Id(String),
}

impl Value {
    fn canonical(&self) -> String {
        match self {
            Value::Date(d) => d.format("%Y-%m-%d").to_string(),
            Value::Amount(c) => format!("{}.{:02}", c / 100, c % 100),
            Value::Integer(i) => i.to_string(),
            Value::Numeric(h) => {
                let s = format!("{}.{:02}", h / 100, h % 100);
                s.trim_end_matches('0').trim_end_matches('.').to_string()
            }
            Value::Id(s) => s.to_ascii_uppercase(),
        }
    }
}

const MONTHS_EN: [&str; 12] = [
    "January", "February", "March", "April", "May", "June", "July", "August", "September", "October",
    "November", "December",
];
const MONTHS_FR: [&str; 12] = [
    "janvier", "février", "mars", "avril", "mai", "juin", "juillet", "août", "septembre", "octobre",
    "novembre", "décembre",
];
const MONTHS_FR_SHORT: [&str; 12] = [
    "janv.", "févr.", "mars", "avr.", "mai", "juin", "juil.", "août", "sept.", "oct.", "nov.", "déc.",
];

fn render_date(d: NaiveDate, style: DateStyle, language: Language) -> Vec<String> {
    let fr = language == Language::Fr;
    let fmt = |f: &str| vec![d.format(f).to_string()];
    let m = d.month0() as usize;
    match (style, fr) {
        (DateStyle::Numeric2, false) => fmt("%m/%d/%y"),
        (DateStyle::Numeric2, true) => fmt("%d/%m/%y"),
        (DateStyle::Numeric4, false) => fmt("%m/%d/%Y"),
        (DateStyle::Numeric4, true) => fmt("%d/%m/%Y"),
        (DateStyle::Iso, _) => fmt("%Y-%m-%d"),
        (DateStyle::Dotted, false) => fmt("%m-%d-%Y"),
        (DateStyle::Dotted, true) => fmt("%d.%m.%Y"),
        (DateStyle::LongMonth, false) => vec![
            MONTHS_EN[m].into(),
            format!("{},", d.day()),
            d.year().to_string(),
        ],
        (DateStyle::ShortMonth, false) => vec![
            MONTHS_EN[m][..3].into(),
            format!("{},", d.day()),
            d.year().to_string(),
        ],
        (DateStyle::LongMonth | DateStyle::ShortMonth, true) => {
            let day = if d.day() == 1 {
                "1er".to_string()
            } else {
                d.day().to_string()
            };
            let month = if style == DateStyle::LongMonth {
                MONTHS_FR[m]
            } else {
                MONTHS_FR_SHORT[m]
            };
            vec![day, month.into(), d.year().to_string()]
        }
    }
}

fn group_digits(digits: &str, sep: &str) -> String {
    let n = digits.len();
    let mut out = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (n - i) % 3 == 0 {
            out.push_str(sep);
        }
        out.push(ch);
    }
    out
}

fn render_amount(cents: i64, style: AmountStyle, language: Language) -> Vec<String> {
    let int = (cents / 100).to_string();
    let frac = format!("{:02}", cents % 100);
    let fr = language == Language::Fr;
    let body = match (style.grouping, fr) {
        (Grouping::None, false) => format!("{int}.{frac}"),
        (Grouping::None, true) => format!("{int},{frac}"),
        (Grouping::Native | Grouping::Dot, false) => format!("{}.{frac}", group_digits(&int, ",")),
        (Grouping::Native, true) => format!("{},{frac}", group_digits(&int, " ")),
        (Grouping::Dot, true) => format!("{},{frac}", group_digits(&int, ".")),
    };
    let mut tokens: Vec<String> = body.split(' ').map(str::to_string).collect();
    let (symbol, code) = if fr { ("€", "EUR") } else { ("$", "USD") };
    match (style.currency, fr) {
        (Currency::None, _) => {}
        (Currency::SymbolAttached, false) => tokens[0] = format!("{symbol}{}", tokens[0]),
        (Currency::SymbolAttached, true) => {
            let last = tokens.last_mut().unwrap();
            *last = format!("{last}{symbol}");
        }
        (Currency::SymbolSeparate, false) => tokens.insert(0, symbol.into()),
        (Currency::SymbolSeparate, true) => tokens.push(symbol.into()),
        (Currency::Code, _) => tokens.push(code.into()),
    }
    tokens
}

fn render_value(v: &Value, s: &Structure, language: Language) -> Vec<String> {
    match v {
        Value::Date(d) => render_date(*d, s.date_style, language),
        Value::Amount(c) => render_amount(*c, s.amount_style, language),
        Value::Integer(i) => vec![i.to_string()],
        Value::Numeric(h) => {
            if s.hours_two_decimals || h % 100 != 0 {
                vec![format!("{}.{:02}", h / 100, h % 100)]
            } else {
                vec![(h / 100).to_string()]
            }
        }
        Value::Id(id) => vec![id.clone()],
    }
}

fn pct(cents: i64, rate: f64) -> i64 {
    (cents as f64 * rate).round() as i64
}

fn random_id(style: &IdStyle, rng: &mut ChaCha8Rng) -> String {
    let lo = 10i64.pow(style.digits as u32 - 1);
    format!("{}{}", style.prefix, rng.gen_range(lo..lo * 10))
}

fn base_date(rng: &mut ChaCha8Rng) -> NaiveDate {
    NaiveDate::from_ymd_opt(2015, 1, 1).unwrap() + Duration::days(rng.gen_range(0..2900))
}

struct LineItem {
    description: String,
    qty: i64,
    unit: i64,
    total: i64,
}

struct Sample {
    values: BTreeMap<String, Value>,
    items: Vec<LineItem>,
    overtime_rate: i64,
    recipient: Vec<String>,
}

fn sample_invoice(tpl: &Template, rng: &mut ChaCha8Rng) -> Sample {
    let fr = tpl.language == Language::Fr;
    let products = if fr { PRODUCTS_FR } else { PRODUCTS_EN };
    let n_items = rng.gen_range(2..=LINE_ITEM_ROWS);
    let items: Vec<LineItem> = (0..n_items)
        .map(|_| {
            let qty = rng.gen_range(1..=40);
            let unit = rng.gen_range(250..=60_000);
            LineItem {
                description: pick(products, rng),
                qty,
                unit,
                total: qty * unit,
            }
        })
        .collect();
    let subtotal: i64 = items.iter().map(|i| i.total).sum();
    let rate = if fr {
        *[0.055, 0.10, 0.20].choose(rng).unwrap()
    } else {
        *[0.05, 0.07, 0.08, 0.0825, 0.10, 0.13].choose(rng).unwrap()
    };
    let tax = pct(subtotal, rate);
    let freight = rng.gen_range(500..=25_000);
    let total = subtotal + tax + freight;
    let due_amount = total - pct(total, rng.gen_range(0.1..0.6));
    let invoice_date = base_date(rng);
    let terms = *[10, 15, 20, 30, 45, 60, 90].choose(rng).unwrap();
    let shift = rng.gen_range(1..=25) * if rng.gen_bool(0.5) { 1 } else { -1 };
    let delivery = invoice_date + Duration::days(shift);
    let mut values = BTreeMap::new();
    let mut put = |k: &str, v: Value| {
        values.insert(k.to_string(), v);
    };
    put("invoice_date", Value::Date(invoice_date));
    put("due_date", Value::Date(invoice_date + Duration::days(terms)));
    put("delivery_date", Value::Date(delivery));
    put("subtotal", Value::Amount(subtotal));
    put("tax_amount", Value::Amount(tax));
    put("freight_amount", Value::Amount(freight));
    put("total_amount", Value::Amount(total));
    put("amount_due", Value::Amount(due_amount));
    put("payment_terms", Value::Integer(terms));
    for (field, style) in &tpl.structure.id_styles {
        values.insert(field.clone(), Value::Id(random_id(style, rng)));
    }
    Sample {
        values,
        items,
        overtime_rate: 0,
        recipient: party(tpl.language, pick(COMPANIES, rng), rng),
    }
}

fn sample_paystub(tpl: &Template, rng: &mut ChaCha8Rng) -> Sample {
    let rate = rng.gen_range(1500..=8500);
    let hours = *[3500, 3750, 4000, 7500, 8000, 8667].choose(rng).unwrap();
    let ot_hours = 25 * rng.gen_range(1..=64);
    let ot_rate = rate * 3 / 2;
    let regular = (rate * hours + 50) / 100;
    let overtime = (ot_rate * ot_hours + 50) / 100;
    let gross = regular + overtime;
    let federal = pct(gross, rng.gen_range(0.08..0.22));
    let state = pct(gross, rng.gen_range(0.02..0.07));
    let ss = pct(gross, 0.062);
    let medicare = pct(gross, 0.0145);
    let deductions = federal + state + ss + medicare;
    let net = gross - deductions;
    let periods = rng.gen_range(2..=26);
    let start = base_date(rng);
    let end = start + Duration::days(*[6, 13, 14, 15].choose(rng).unwrap());
    let pay = end + Duration::days(rng.gen_range(1..=5));
    let mut values = BTreeMap::new();
    let mut put = |k: &str, v: Value| {
        values.insert(k.to_string(), v);
    };
    put("pay_date", Value::Date(pay));
    put("period_start", Value::Date(start));
    put("period_end", Value::Date(end));
    put("gross_pay", Value::Amount(gross));
    put("net_pay", Value::Amount(net));
    put("federal_tax", Value::Amount(federal));
    put("state_tax", Value::Amount(state));
    put("social_security", Value::Amount(ss));
    put("medicare", Value::Amount(medicare));
    put("total_deductions", Value::Amount(deductions));
    put("ytd_gross", Value::Amount(gross * periods + rng.gen_range(0..5000)));
    put("ytd_net", Value::Amount(net * periods + rng.gen_range(0..5000)));
    put("regular_hours", Value::Numeric(hours));
    put("overtime_hours", Value::Numeric(ot_hours));
    put("hourly_rate", Value::Amount(rate));
    put("regular_pay", Value::Amount(regular));
    put("overtime_pay", Value::Amount(overtime));
    for (field, style) in &tpl.structure.id_styles {
        values.insert(field.clone(), Value::Id(random_id(style, rng)));
    }
    Sample {
        values,
        items: Vec::new(),
        overtime_rate: ot_rate,
        recipient: party(tpl.language, pick(PEOPLE, rng), rng),
    }
}

fn party(language: Language, name: String, rng: &mut ChaCha8Rng) -> Vec<String> {
    let number = rng.gen_range(1..=2500);
    match language {
        Language::En => vec![
            name,
            format!("{number} {}", pick(STREETS_EN, rng)),
            format!("{} {}", pick(CITIES_EN, rng), rng.gen_range(10000..99999)),
        ],
        Language::Fr => vec![
            name,
            format!("{} {}", number % 200 + 1, pick(STREETS_FR, rng)),
            format!("{} {}", rng.gen_range(10..96) * 1000 + rng.gen_range(0..1000), pick(CITIES_FR, rng)),
        ],
    }
}

// ---------------------------------------------------------------------------
// rendering

struct Canvas {
    tokens: Vec<Token>,
    max_y: f64,
}

impl Canvas {
    /// Places whitespace-separated words left to right; returns the token index range
    /// and the x after the last word.
    fn words(&mut self, words: &[String], x: f64, y: f64) -> (std::ops::Range<usize>, f64) {
        let start = self.tokens.len();
        let mut x = x;
        for w in words.iter().filter(|w| !w.is_empty()) {
            let w_width = w.chars().count() as f64 * CHAR_W;
            self.tokens.push(Token {
                text: w.clone(),
                page_index: 0,
                bbox: BBox::new(x, y, x + w_width, y + TOKEN_H),
            });
            x += w_width + SPACE_W;
        }
        self.max_y = self.max_y.max(y + TOKEN_H);
        (start..self.tokens.len(), x - SPACE_W)
    }

    fn text(&mut self, text: &str, x: f64, y: f64) -> (std::ops::Range<usize>, f64) {
        let words: Vec<String> = text.split_whitespace().map(str::to_string).collect();
        self.words(&words, x, y)
    }
}

fn key_words(key: &str, colon: bool) -> Vec<String> {
    let mut words: Vec<String> = key.split_whitespace().map(str::to_string).collect();
    if colon {
        if let Some(last) = words.last_mut() {
            last.push(':');
        }
    }
    words
}

/// Renders the template with sampled values. Returns the tokens and, per field, the
/// token range of its value.
fn layout(tpl: &Template, sample: &Sample) -> Result<(Vec<Token>, BTreeMap<String, std::ops::Range<usize>>), SynthError> {
    let s = &tpl.structure;
    let lx = &tpl.lexicon;
    let lang = tpl.language;
    let mut cv = Canvas {
        tokens: Vec::new(),
        max_y: 0.0,
    };
    let mut spans = BTreeMap::new();
    for d in &s.distractors {
        let Point { x, y } = d.at;
        match d.kind {
            DistractorKind::Title => {
                cv.text(&lx.title, x, y);
            }
            DistractorKind::Vendor => {
                for (i, line) in lx.vendor.iter().enumerate() {
                    cv.text(line, x, y + i as f64 * LINE_H);
                }
            }
            DistractorKind::Recipient => {
                cv.words(&key_words(&lx.recipient, s.colon), x, y);
                for (i, line) in sample.recipient.iter().enumerate() {
                    cv.text(line, x, y + (i + 1) as f64 * LINE_H);
                }
            }
            DistractorKind::LineItems => {
                let t = s.line_items.as_ref().expect("line item layout");
                for (h, &cx) in lx.table_headers.iter().zip(&t.col_x) {
                    cv.text(h, cx, t.y);
                }
                for (r, item) in sample.items.iter().enumerate() {
                    let ry = t.y + (r + 1) as f64 * LINE_H;
                    cv.text(&item.description, t.col_x[0], ry);
                    cv.text(&item.qty.to_string(), t.col_x[1], ry);
                    cv.words(&render_amount(item.unit, s.amount_style, lang), t.col_x[2], ry);
                    cv.words(&render_amount(item.total, s.amount_style, lang), t.col_x[3], ry);
                }
            }
            DistractorKind::Bank => {
                cv.words(&key_words(&lx.bank, s.colon), x, y);
                for (i, line) in lx.bank_lines.iter().enumerate() {
                    cv.text(line, x, y + (i + 1) as f64 * LINE_H);
                }
            }
            DistractorKind::Footer => {
                cv.text(&lx.footer, x, y);
            }
            DistractorKind::PageNumber => {
                cv.text(&lx.page, 0.8, y);
            }
        }
    }
    if let Some(t) = &s.earnings {
        for (h, &cx) in lx.earn_cols.iter().zip(&t.col_x[1..]) {
            cv.text(h, cx, t.y);
        }
        for (r, label) in lx.earn_rows.iter().enumerate() {
            cv.text(label, t.col_x[0], t.y + (r + 1) as f64 * LINE_H);
        }
        let ot = render_amount(sample.overtime_rate, s.amount_style, lang);
        cv.words(&ot, t.col_x[2], t.y + 2.0 * LINE_H);
    }
    for block in &s.fields {
        let value = &sample.values[&block.field];
        let words = render_value(value, s, lang);
        let (vx, vy) = match &block.slot {
            Slot::KeyValue { key, below } => {
                let (_, end) = cv.words(&key_words(&lx.keys[&block.field], s.colon), key.x, key.y);
                if *below {
                    (key.x, key.y + LINE_H)
                } else {
                    (end + KEY_GAP, key.y)
                }
            }
            Slot::Cell { row, col } => {
                let t = s.earnings.as_ref().expect("earnings layout");
                (t.col_x[col + 1], t.y + (row + 1) as f64 * LINE_H)
            }
        };
        let (span, end) = cv.words(&words, vx, vy);
        if end > 0.995 {
            return Err(SynthError::LayoutOverflow {
                template_id: tpl.template_id.clone(),
                detail: format!("{} ends at x={end:.3}", block.field),
            });
        }
        spans.insert(block.field.clone(), span);
    }
    if cv.max_y > 1.0 || cv.tokens.iter().any(|t| t.bbox.x_max > 1.0) {
        return Err(SynthError::LayoutOverflow {
            template_id: tpl.template_id.clone(),
            detail: "content leaves the page".into(),
        });
    }
    Ok((cv.tokens, spans))
}

fn field_types(tpl: &Template) -> BTreeMap<String, FieldType> {
    known_fields(tpl.doc_type).into_iter().collect()
}

/// Every candidate carrying a field's ground-truth value must lie inside that field's
/// own value span, so labels are unambiguous.
fn values_unambiguous(doc: &Document, spans: &BTreeMap<String, std::ops::Range<usize>>, types: &BTreeMap<String, FieldType>) -> bool {
    let mut by_type: BTreeMap<FieldType, Vec<Candidate>> = BTreeMap::new();
    for (field, span) in spans {
        let t = types[field];
        let cands = by_type
            .entry(t)
            .or_insert_with(|| generate_candidates(doc, t));
        let gt = &doc.ground_truth_for(field)[0].canonical_value;
        let ok = cands.iter().filter(|c| &c.canonical_value == gt).all(|c| {
            c.token_span.start >= span.start && c.token_span.end <= span.end
        });
        if !ok {
            return false;
        }
    }
    true
}

fn corrupt(text: &str) -> String {
    let mut done = false;
    text.chars()
        .map(|c| {
            if done || !c.is_ascii_digit() {
                return c;
            }
            done = true;
            match c {
                '0' => 'O',
                '1' => 'l',
                '5' => 'S',
                '8' => 'B',
                _ => 'X',
            }
        })
        .collect()
}

fn render_with_noise(tpl: &Template, value_seed: u64, noise: f64) -> Result<Document, SynthError> {
    let types = field_types(tpl);
    for attempt in 0..MAX_VALUE_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
            value_seed,
            &[b"values", &(attempt as u64).to_le_bytes()],
        ));
        let sample = match tpl.doc_type {
            DocType::Invoice => sample_invoice(tpl, &mut rng),
            DocType::Paystub => sample_paystub(tpl, &mut rng),
        };
        let (tokens, spans) = layout(tpl, &sample)?;
        let mut ground_truth = BTreeMap::new();
        for (field, span) in &spans {
            let value = &sample.values[field];
            let bbox = tokens[span.clone()]
                .iter()
                .fold(tokens[span.start].bbox, |acc, t| acc.union(&t.bbox));
            ground_truth.insert(
                field.clone(),
                vec![GroundTruthValue {
                    canonical_value: value.canonical(),
                    bbox: Some(bbox),
                }],
            );
        }
        let page = match tpl.language {
            Language::En => PageSize { width: 612.0, height: 792.0 },
            Language::Fr => PageSize { width: 595.0, height: 842.0 },
        };
        // value spans are tracked through the reading-order sort by marking tokens
        let n = tokens.len();
        let mut doc = Document {
            doc_id: format!("{}-{:016x}", tpl.template_id, value_seed),
            language: tpl.language,
            doc_type: tpl.doc_type.as_str().into(),
            template_id: tpl.template_id.clone(),
            pages: vec![page],
            tokens,
            ground_truth: Some(ground_truth),
        };
        let order = reading_permutation(&doc);
        doc = doc.normalize().expect("generated documents are valid");
        let mut new_index = vec![0; n];
        for (new, &old) in order.iter().enumerate() {
            new_index[old] = new;
        }
        let spans: BTreeMap<String, std::ops::Range<usize>> = spans
            .into_iter()
            .map(|(f, r)| {
                let idx: Vec<usize> = r.map(|i| new_index[i]).collect();
                let lo = *idx.iter().min().unwrap();
                let hi = *idx.iter().max().unwrap() + 1;
                (f, lo..hi)
            })
            .collect();
        if !values_unambiguous(&doc, &spans, &types) {
            continue;
        }
        if noise > 0.0 {
            apply_noise(&mut doc, &spans, value_seed, noise);
        }
        return Ok(doc);
    }
    Err(SynthError::Values(tpl.template_id.clone()))
}

/// The permutation `normalize` applies (stable sort by reading order).
fn reading_permutation(doc: &Document) -> Vec<usize> {
    let mut order: Vec<usize> = (0..doc.tokens.len()).collect();
    order.sort_by(|&a, &b| {
        crate::docmodel::reading_order(&doc.tokens[a], &doc.tokens[b])
    });
    order
}

fn apply_noise(doc: &mut Document, spans: &BTreeMap<String, std::ops::Range<usize>>, seed: u64, p: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[b"noise"]));
    let value_tokens: BTreeSet<usize> = spans.values().flat_map(|r| r.clone()).collect();
    let mut drop = HashSet::new();
    for &i in &value_tokens {
        if rng.gen_bool(p) {
            let text = &doc.tokens[i].text;
            if rng.gen_bool(0.5) && text.chars().any(|c| c.is_ascii_digit()) {
                doc.tokens[i].text = corrupt(text);
            } else {
                drop.insert(i);
            }
        }
    }
    let tokens = std::mem::take(&mut doc.tokens);
    doc.tokens = tokens
        .into_iter()
        .enumerate()
        .filter(|(i, _)| !drop.contains(i))
        .map(|(_, t)| t)
        .collect();
}

/// Renders one labeled document from `tpl`. Values are re-sampled until every
/// ground-truth value is produced by exactly its own rendered span.
pub fn render_document(tpl: &Template, value_seed: u64) -> Result<Document, SynthError> {
    render_with_noise(tpl, value_seed, 0.0)
}

/// Generates `spec.n_docs` documents, each from its own template with a distinct
/// template id. The last `spec.n_test()` documents form the test split.
pub fn generate_corpus(spec: &CorpusSpec) -> Result<Corpus, SynthError> {
    spec.validate()?;
    let name = spec.name();
    let mut seen = HashSet::new();
    let mut templates = Vec::with_capacity(spec.n_docs);
    let mut attempts = 0;
    for i in 0..spec.n_docs as u64 {
        let mut salt = 0u64;
        loop {
            attempts += 1;
            if attempts > spec.n_docs * MAX_TEMPLATE_ATTEMPTS {
                return Err(SynthError::Templates(attempts));
            }
            let seed = derive_seed(spec.seed, &[b"template", &i.to_le_bytes(), &salt.to_le_bytes()]);
            let tpl = generate_template(spec, seed);
            if seen.insert(tpl.template_id.clone()) {
                templates.push(tpl);
                break;
            }
            salt += 1;
        }
    }
    let docs: Vec<Document> = templates
        .par_iter()
        .enumerate()
        .map(|(i, tpl)| {
            let seed = derive_seed(spec.seed, &[b"document", &(i as u64).to_le_bytes()]);
            let mut doc = render_with_noise(tpl, seed, spec.noise)?;
            doc.doc_id = format!("{name}-{i:05}");
            Ok(doc)
        })
        .collect::<Result<_, SynthError>>()?;
    let n_train = spec.n_docs - spec.n_test();
    let mut train = docs;
    let test = train.split_off(n_train);
    Ok(Corpus {
        name,
        language: spec.language,
        schema: spec.schema(),
        train,
        test,
    })
}
