//! Neighborhood encoder and field scorer.
//!
//! A candidate is encoded from its neighbors alone: each neighbor contributes the
//! concatenation of its token embedding and a linear projection of its relative
//! position `(rel_x, rel_y, distance)`. One head of scaled dot-product self-attention
//! runs over the neighbors, the outputs are mean-pooled and projected into the field
//! space. The logit for a field is the scaled dot product with that field's embedding
//! plus a per-field bias.
//!
//! Gradients are computed by hand in a fixed order so that a batch always reduces to
//! the same bits.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::neighborhood::NeighborSet;

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

const MAGIC: &[u8; 8] = b"FFSCORER";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("field index {index} out of range for {n_fields} fields")]
    FieldIndex { index: usize, n_fields: usize },
    #[error("token id {id} out of range for vocabulary of {size}")]
    TokenId { id: u32, size: usize },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Token vocabulary with reserved `PAD = 0` and `UNK = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    /// Builds a vocabulary from lowercased tokens; reserved entries are prepended and
    /// duplicates dropped.
    pub fn new<I, S>(tokens: I) -> Vocab
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocab {
            tokens: vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()],
            index: HashMap::new(),
        };
        for t in tokens {
            let t = t.into();
            if t == PAD_TOKEN || t == UNK_TOKEN || v.index.contains_key(&t) {
                continue;
            }
            v.index.insert(t.clone(), v.tokens.len() as u32);
            v.tokens.push(t);
        }
        v
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 2
    }

    /// All entries including the reserved ones, in index order.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Non-reserved entries.
    pub fn words(&self) -> &[String] {
        &self.tokens[2..]
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(&token.to_lowercase())
    }

    /// Index of the lowercased token, `UNK` if absent.
    pub fn lookup(&self, token: &str) -> u32 {
        match self.index.get(token) {
            Some(&i) => i,
            None => *self.index.get(&token.to_lowercase()).unwrap_or(&UNK),
        }
    }

    pub fn encode(&self, ns: &NeighborSet) -> EncodedNeighbors {
        EncodedNeighbors {
            token_ids: ns.neighbors.iter().map(|n| self.lookup(&n.token_text)).collect(),
            positions: ns
                .neighbors
                .iter()
                .map(|n| [n.rel_x, n.rel_y, n.distance])
                .collect(),
        }
    }
}

/// Model-ready neighborhood: vocabulary ids and position features of the real
/// (non-pad) neighbors. Padding is implicit; masked positions take no part in
/// attention or pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedNeighbors {
    pub token_ids: Vec<u32>,
    pub positions: Vec<[f64; 3]>,
}

impl EncodedNeighbors {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// Fixed-shape view: ids, positions and mask padded to `max_neighbors`.
    pub fn padded(&self, max_neighbors: usize) -> (Vec<u32>, Vec<[f64; 3]>, Vec<bool>) {
        let mut ids = self.token_ids.clone();
        let mut pos = self.positions.clone();
        let mut mask = vec![true; ids.len()];
        ids.resize(max_neighbors.max(ids.len()), PAD);
        pos.resize(ids.len(), [0.0; 3]);
        mask.resize(ids.len(), false);
        (ids, pos, mask)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub token_dim: usize,
    pub pos_dim: usize,
    pub cand_dim: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Dims {
            token_dim: 64,
            pos_dim: 16,
            cand_dim: 80,
        }
    }
}

impl Dims {
    pub fn input_dim(&self) -> usize {
        self.token_dim + self.pos_dim
    }
}

/// All learnable state. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerParams {
    pub dims: Dims,
    pub field_names: Vec<String>,
    pub token_embeddings: Array2<f64>,
    pub pos_projection: Array2<f64>,
    pub w_query: Array2<f64>,
    pub w_key: Array2<f64>,
    pub w_value: Array2<f64>,
    pub w_out: Array2<f64>,
    pub field_embeddings: Array2<f64>,
    pub field_bias: Array1<f64>,
}

pub const TENSOR_NAMES: [&str; 8] = [
    "token_embeddings",
    "pos_projection",
    "w_query",
    "w_key",
    "w_value",
    "w_out",
    "field_embeddings",
    "field_bias",
];

fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let s = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-s..s))
}

/// Seeded Glorot-uniform initialization; PAD embedding and field biases start at zero.
pub fn init_params(seed: u64, vocab: &Vocab, field_names: &[String], dims: Dims) -> ScorerParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d_in = dims.input_dim();
    let mut token_embeddings = glorot(&mut rng, vocab.len(), dims.token_dim);
    token_embeddings.row_mut(PAD as usize).fill(0.0);
    let pos_projection = glorot(&mut rng, 3, dims.pos_dim);
    let w_query = glorot(&mut rng, d_in, d_in);
    let w_key = glorot(&mut rng, d_in, d_in);
    let w_value = glorot(&mut rng, d_in, d_in);
    let w_out = glorot(&mut rng, d_in, dims.cand_dim);
    let field_embeddings = glorot(&mut rng, field_names.len(), dims.cand_dim);
    ScorerParams {
        dims,
        field_names: field_names.to_vec(),
        token_embeddings,
        pos_projection,
        w_query,
        w_key,
        w_value,
        w_out,
        field_embeddings,
        field_bias: Array1::zeros(field_names.len()),
    }
}

impl ScorerParams {
    pub fn n_fields(&self) -> usize {
        self.field_names.len()
    }

    pub fn field_index(&self, name: &str) -> Option<usize> {
        self.field_names.iter().position(|f| f == name)
    }

    pub fn zeros_like(&self) -> ScorerParams {
        ScorerParams {
            dims: self.dims,
            field_names: self.field_names.clone(),
            token_embeddings: Array2::zeros(self.token_embeddings.raw_dim()),
            pos_projection: Array2::zeros(self.pos_projection.raw_dim()),
            w_query: Array2::zeros(self.w_query.raw_dim()),
            w_key: Array2::zeros(self.w_key.raw_dim()),
            w_value: Array2::zeros(self.w_value.raw_dim()),
            w_out: Array2::zeros(self.w_out.raw_dim()),
            field_embeddings: Array2::zeros(self.field_embeddings.raw_dim()),
            field_bias: Array1::zeros(self.field_bias.raw_dim()),
        }
    }

    /// Row-major views of every tensor, in [`TENSOR_NAMES`] order.
    pub fn tensors(&self) -> [&[f64]; 8] {
        [
            self.token_embeddings.as_slice().expect("standard layout"),
            self.pos_projection.as_slice().expect("standard layout"),
            self.w_query.as_slice().expect("standard layout"),
            self.w_key.as_slice().expect("standard layout"),
            self.w_value.as_slice().expect("standard layout"),
            self.w_out.as_slice().expect("standard layout"),
            self.field_embeddings.as_slice().expect("standard layout"),
            self.field_bias.as_slice().expect("standard layout"),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 8] {
        [
            self.token_embeddings.as_slice_mut().expect("standard layout"),
            self.pos_projection.as_slice_mut().expect("standard layout"),
            self.w_query.as_slice_mut().expect("standard layout"),
            self.w_key.as_slice_mut().expect("standard layout"),
            self.w_value.as_slice_mut().expect("standard layout"),
            self.w_out.as_slice_mut().expect("standard layout"),
            self.field_embeddings.as_slice_mut().expect("standard layout"),
            self.field_bias.as_slice_mut().expect("standard layout"),
        ]
    }

    pub fn shapes(&self) -> [Vec<usize>; 8] {
        [
            self.token_embeddings.shape().to_vec(),
            self.pos_projection.shape().to_vec(),
            self.w_query.shape().to_vec(),
            self.w_key.shape().to_vec(),
            self.w_value.shape().to_vec(),
            self.w_out.shape().to_vec(),
            self.field_embeddings.shape().to_vec(),
            self.field_bias.shape().to_vec(),
        ]
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Appends freshly initialized rows for `names` not already present.
    pub fn extend_fields(&mut self, names: &[String], seed: u64) {
        let new: Vec<&String> = names
            .iter()
            .filter(|n| !self.field_names.contains(n))
            .collect();
        if new.is_empty() {
            return;
        }
        let total = self.field_names.len() + new.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fresh = glorot(&mut rng, total, self.dims.cand_dim);
        let mut emb = Array2::zeros((total, self.dims.cand_dim));
        let old = self.field_names.len();
        emb.slice_mut(s![..old, ..]).assign(&self.field_embeddings);
        emb.slice_mut(s![old.., ..]).assign(&fresh.slice(s![old.., ..]));
        let mut bias = Array1::zeros(total);
        bias.slice_mut(s![..old]).assign(&self.field_bias);
        self.field_embeddings = emb;
        self.field_bias = bias;
        self.field_names.extend(new.into_iter().cloned());
    }

    fn check_token(&self, id: u32) -> Result<(), ScorerError> {
        if (id as usize) < self.token_embeddings.nrows() {
            Ok(())
        } else {
            Err(ScorerError::TokenId {
                id,
                size: self.token_embeddings.nrows(),
            })
        }
    }
}

pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Sigmoid cross-entropy from a logit, `max(z,0) - z*y + ln(1 + e^-|z|)`.
pub fn bce_with_logit(logit: f64, label: f64) -> f64 {
    logit.max(0.0) - logit * label + (-logit.abs()).exp().ln_1p()
}

/// Cached forward quantities of one candidate.
struct Encoded {
    offset: usize,
    n: usize,
    attn: Array2<f64>,
}

/// Forward state for a stack of candidates. Row `r` of the input is
/// `[E[id_r] | pos_r · P]`, so its projection splits into a per-token part computed
/// once per distinct token and a cheap position part.
struct Forward {
    /// Distinct token ids of the stack and, per row, the index into them.
    tokens: Vec<u32>,
    token_of_row: Vec<usize>,
    positions: Array2<f64>,
    w_qkv: Array2<f64>,
    /// `[Q | K | V]` side by side.
    qkv: Array2<f64>,
    cands: Vec<Encoded>,
    pooled: Array2<f64>,
    emb: Array2<f64>,
}

fn softmax_rows(s: &mut Array2<f64>) {
    for mut row in s.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

fn forward(inputs: &[&EncodedNeighbors], p: &ScorerParams) -> Result<Forward, ScorerError> {
    let d = p.dims;
    let d_in = d.input_dim();
    let rows: usize = inputs.iter().map(|e| e.len()).sum();
    let mut slot: HashMap<u32, usize> = HashMap::new();
    let mut tokens = Vec::new();
    let mut token_of_row = Vec::with_capacity(rows);
    let mut positions = Array2::zeros((rows, 3));
    let mut r = 0;
    for enc in inputs {
        for (id, pos) in enc.token_ids.iter().zip(&enc.positions) {
            p.check_token(*id)?;
            token_of_row.push(*slot.entry(*id).or_insert_with(|| {
                tokens.push(*id);
                tokens.len() - 1
            }));
            positions.row_mut(r).assign(&ArrayView1::from(&pos[..]));
            r += 1;
        }
    }
    let w_qkv = concatenate![Axis(1), p.w_query, p.w_key, p.w_value];
    let token_part = p
        .token_embeddings
        .select(Axis(0), &tokens.iter().map(|&t| t as usize).collect::<Vec<_>>())
        .dot(&w_qkv.slice(s![..d.token_dim, ..]));
    let mut qkv = positions.dot(&p.pos_projection.dot(&w_qkv.slice(s![d.token_dim.., ..])));
    for (mut row, &t) in qkv.rows_mut().into_iter().zip(&token_of_row) {
        row += &token_part.row(t);
    }
    let (q, k, v) = (
        qkv.slice(s![.., ..d_in]),
        qkv.slice(s![.., d_in..2 * d_in]),
        qkv.slice(s![.., 2 * d_in..]),
    );
    let scale = 1.0 / (d_in as f64).sqrt();
    let mut pooled = Array2::zeros((inputs.len(), d_in));
    let mut cands = Vec::with_capacity(inputs.len());
    let mut offset = 0;
    for (ci, enc) in inputs.iter().enumerate() {
        let n = enc.len();
        if n == 0 {
            cands.push(Encoded {
                offset,
                n,
                attn: Array2::zeros((0, 0)),
            });
            continue;
        }
        let qc = q.slice(s![offset..offset + n, ..]);
        let kc = k.slice(s![offset..offset + n, ..]);
        let vc = v.slice(s![offset..offset + n, ..]);
        let mut attn = qc.dot(&kc.t()) * scale;
        softmax_rows(&mut attn);
        // mean over rows of attn·V equals (column means of attn)·V
        let weights = attn.sum_axis(Axis(0)) / n as f64;
        pooled.row_mut(ci).assign(&weights.dot(&vc));
        cands.push(Encoded { offset, n, attn });
        offset += n;
    }
    let emb = pooled.dot(&p.w_out);
    Ok(Forward {
        tokens,
        token_of_row,
        positions,
        w_qkv,
        qkv,
        cands,
        pooled,
        emb,
    })
}

/// Candidate embedding in the field space; the zero vector when there are no neighbors.
pub fn embed_candidate(enc: &EncodedNeighbors, p: &ScorerParams) -> Result<Array1<f64>, ScorerError> {
    let f = forward(&[enc], p)?;
    Ok(f.emb.row(0).to_owned())
}

/// Embeddings of many candidates, one row each.
pub fn embed_many(encs: &[&EncodedNeighbors], p: &ScorerParams) -> Result<Array2<f64>, ScorerError> {
    Ok(forward(encs, p)?.emb)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairScore {
    pub logit: f64,
    pub score: f64,
}

pub fn field_logit(emb: ArrayView1<f64>, field_index: usize, p: &ScorerParams) -> f64 {
    let scale = 1.0 / (p.dims.cand_dim as f64).sqrt();
    emb.dot(&p.field_embeddings.row(field_index)) * scale + p.field_bias[field_index]
}

pub fn score_pair(
    cand_emb: ArrayView1<f64>,
    field_index: usize,
    p: &ScorerParams,
) -> Result<PairScore, ScorerError> {
    if field_index >= p.n_fields() {
        return Err(ScorerError::FieldIndex {
            index: field_index,
            n_fields: p.n_fields(),
        });
    }
    let logit = field_logit(cand_emb, field_index, p);
    Ok(PairScore {
        logit,
        score: logistic(logit),
    })
}

/// A scored (field, candidate) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub candidate_id: String,
    pub field_name: String,
    pub canonical_value: String,
    pub score: f64,
    pub logit: f64,
}

/// One binary training example. Examples sharing the same `Arc` share one forward pass.
#[derive(Debug, Clone)]
pub struct Example {
    pub features: Arc<EncodedNeighbors>,
    pub field_index: usize,
    pub label: f64,
}

/// Unique feature sets of a batch (by `Arc` identity, first-occurrence order) and the
/// slot of each example.
fn group_batch(batch: &[Example]) -> (Vec<&EncodedNeighbors>, Vec<usize>) {
    let mut slots: HashMap<*const EncodedNeighbors, usize> = HashMap::new();
    let mut unique = Vec::new();
    let mut slot_of = Vec::with_capacity(batch.len());
    for ex in batch {
        let key = Arc::as_ptr(&ex.features);
        let slot = *slots.entry(key).or_insert_with(|| {
            unique.push(ex.features.as_ref());
            unique.len() - 1
        });
        slot_of.push(slot);
    }
    (unique, slot_of)
}

fn check_batch(batch: &[Example], p: &ScorerParams) -> Result<(), ScorerError> {
    if batch.is_empty() {
        return Err(ScorerError::EmptyBatch);
    }
    if let Some(ex) = batch.iter().find(|e| e.field_index >= p.n_fields()) {
        return Err(ScorerError::FieldIndex {
            index: ex.field_index,
            n_fields: p.n_fields(),
        });
    }
    Ok(())
}

/// Logits for every example of a batch.
pub fn batch_logits(batch: &[Example], p: &ScorerParams) -> Result<Vec<f64>, ScorerError> {
    check_batch(batch, p)?;
    let (unique, slot_of) = group_batch(batch);
    let f = forward(&unique, p)?;
    Ok(batch
        .iter()
        .zip(&slot_of)
        .map(|(ex, &slot)| field_logit(f.emb.row(slot), ex.field_index, p))
        .collect())
}

/// Mean sigmoid cross-entropy over the batch.
pub fn batch_loss(batch: &[Example], p: &ScorerParams) -> Result<f64, ScorerError> {
    let logits = batch_logits(batch, p)?;
    let total: f64 = logits
        .iter()
        .zip(batch)
        .map(|(&z, ex)| bce_with_logit(z, ex.label))
        .sum();
    Ok(total / batch.len() as f64)
}

/// Loss and its exact gradient with respect to every parameter.
pub fn batch_gradient(batch: &[Example], p: &ScorerParams) -> Result<(f64, ScorerParams), ScorerError> {
    check_batch(batch, p)?;
    let d = p.dims;
    let d_in = d.input_dim();
    let (unique, slot_of) = group_batch(batch);
    let f = forward(&unique, p)?;
    let mut g = p.zeros_like();
    let inv_b = 1.0 / batch.len() as f64;
    let field_scale = 1.0 / (d.cand_dim as f64).sqrt();

    let mut loss = 0.0;
    let mut d_emb: Array2<f64> = Array2::zeros(f.emb.raw_dim());
    for (ex, &slot) in batch.iter().zip(&slot_of) {
        let emb = f.emb.row(slot);
        let fi = ex.field_index;
        let z = field_logit(emb, fi, p);
        loss += bce_with_logit(z, ex.label);
        let dz = (logistic(z) - ex.label) * inv_b;
        g.field_bias[fi] += dz;
        g.field_embeddings
            .row_mut(fi)
            .scaled_add(dz * field_scale, &emb);
        d_emb
            .row_mut(slot)
            .scaled_add(dz * field_scale, &p.field_embeddings.row(fi));
    }
    loss *= inv_b;

    g.w_out = f.pooled.t().dot(&d_emb);
    let d_pooled = d_emb.dot(&p.w_out.t());

    let rows = f.qkv.nrows();
    let mut dqkv = Array2::zeros((rows, 3 * d_in));
    let scale = 1.0 / (d_in as f64).sqrt();
    for (ci, c) in f.cands.iter().enumerate() {
        if c.n == 0 {
            continue;
        }
        let range = c.offset..c.offset + c.n;
        // every output row receives d_pooled / n
        let gvec = d_pooled.row(ci).to_owned() / c.n as f64;
        let qc = f.qkv.slice(s![range.clone(), ..d_in]);
        let kc = f.qkv.slice(s![range.clone(), d_in..2 * d_in]);
        let vc = f.qkv.slice(s![range.clone(), 2 * d_in..]);
        let col_sums = c.attn.sum_axis(Axis(0));
        for (j, w) in col_sums.iter().enumerate() {
            dqkv.slice_mut(s![c.offset + j, 2 * d_in..]).scaled_add(*w, &gvec);
        }
        // d attn[i][j] = v_j · g for every row i
        let dattn_row = vc.dot(&gvec);
        let mut ds = Array2::zeros((c.n, c.n));
        for i in 0..c.n {
            let a = c.attn.row(i);
            let inner = a.dot(&dattn_row);
            for j in 0..c.n {
                ds[[i, j]] = a[j] * (dattn_row[j] - inner) * scale;
            }
        }
        dqkv.slice_mut(s![range.clone(), ..d_in]).assign(&ds.dot(&kc));
        dqkv.slice_mut(s![range, d_in..2 * d_in]).assign(&ds.t().dot(&qc));
    }

    let mut d_tokens = Array2::zeros((f.tokens.len(), 3 * d_in));
    for (row, &t) in dqkv.rows().into_iter().zip(&f.token_of_row) {
        d_tokens.row_mut(t).scaled_add(1.0, &row);
    }
    let used = f.tokens.iter().map(|&t| t as usize).collect::<Vec<_>>();
    let e_used = p.token_embeddings.select(Axis(0), &used);
    let w_tok = f.w_qkv.slice(s![..d.token_dim, ..]);
    let w_pos = f.w_qkv.slice(s![d.token_dim.., ..]);
    // positions' · dQKV, from which both W_pos and P gradients follow
    let d_pos = f.positions.t().dot(&dqkv);
    let g_qkv = concatenate![
        Axis(0),
        e_used.t().dot(&d_tokens),
        p.pos_projection.t().dot(&d_pos)
    ];
    g.w_query = g_qkv.slice(s![.., ..d_in]).to_owned();
    g.w_key = g_qkv.slice(s![.., d_in..2 * d_in]).to_owned();
    g.w_value = g_qkv.slice(s![.., 2 * d_in..]).to_owned();
    let d_emb_rows = d_tokens.dot(&w_tok.t());
    for (&id, row) in used.iter().zip(d_emb_rows.rows()) {
        g.token_embeddings.row_mut(id).assign(&row);
    }
    g.pos_projection = d_pos.dot(&w_pos.t());
    g.token_embeddings.row_mut(PAD as usize).fill(0.0);
    Ok((loss, g))
}

// ---------------------------------------------------------------------------
// checkpoint container
//
// Layout (all integers little-endian):
//   8 bytes   magic "FFSCORER"
//   u32       format version
//   u64       header length in bytes
//   header    UTF-8 JSON `CheckpointHeader`
//   payload   every tensor of `tensors` in order, row-major IEEE-754 f64 LE
//
// `payload_sha256` is the hex SHA-256 of the payload bytes.

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub dims: Dims,
    pub vocab: Vec<String>,
    pub fields: Vec<String>,
    pub dtype: String,
    pub tensors: Vec<TensorInfo>,
    pub payload_sha256: String,
    #[serde(default)]
    pub meta: serde_json::Value,
}

pub fn encode_checkpoint(vocab: &Vocab, p: &ScorerParams, meta: serde_json::Value) -> Vec<u8> {
    let mut payload = Vec::with_capacity(p.n_params() * 8);
    for t in p.tensors() {
        for v in t {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let header = CheckpointHeader {
        dims: p.dims,
        vocab: vocab.tokens().to_vec(),
        fields: p.field_names.clone(),
        dtype: "f64le".into(),
        tensors: TENSOR_NAMES
            .iter()
            .zip(p.shapes())
            .map(|(n, shape)| TensorInfo {
                name: n.to_string(),
                shape,
            })
            .collect(),
        payload_sha256: hex::encode(Sha256::digest(&payload)),
        meta,
    };
    let header = serde_json::to_vec(&header).expect("header serialization");
    let mut out = Vec::with_capacity(20 + header.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&payload);
    out
}

fn expected_shapes(dims: Dims, n_vocab: usize, n_fields: usize) -> [Vec<usize>; 8] {
    let d_in = dims.input_dim();
    [
        vec![n_vocab, dims.token_dim],
        vec![3, dims.pos_dim],
        vec![d_in, d_in],
        vec![d_in, d_in],
        vec![d_in, d_in],
        vec![d_in, dims.cand_dim],
        vec![n_fields, dims.cand_dim],
        vec![n_fields],
    ]
}

pub fn decode_checkpoint(
    bytes: &[u8],
) -> Result<(Vocab, ScorerParams, serde_json::Value), ScorerError> {
    let corrupt = |m: &str| ScorerError::Corrupt(m.to_string());
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(corrupt("missing magic"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(ScorerError::VersionMismatch {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
    let header_end = 20usize
        .checked_add(usize::try_from(header_len).map_err(|_| corrupt("header length"))?)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| corrupt("truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[20..header_end])
        .map_err(|e| ScorerError::Corrupt(format!("header: {e}")))?;
    if header.dtype != "f64le" {
        return Err(ScorerError::Corrupt(format!("unknown dtype {}", header.dtype)));
    }
    let payload = &bytes[header_end..];
    if hex::encode(Sha256::digest(payload)) != header.payload_sha256 {
        return Err(corrupt("payload checksum mismatch (truncated or modified)"));
    }
    let vocab = Vocab::new(header.vocab.iter().skip(2).cloned());
    if vocab.tokens() != header.vocab.as_slice() {
        return Err(corrupt("vocabulary entries are not unique or reserved slots differ"));
    }
    let shapes = expected_shapes(header.dims, vocab.len(), header.fields.len());
    let listed: Vec<(&str, &[usize])> = header
        .tensors
        .iter()
        .map(|t| (t.name.as_str(), t.shape.as_slice()))
        .collect();
    let wanted: Vec<(&str, &[usize])> = TENSOR_NAMES
        .iter()
        .copied()
        .zip(shapes.iter().map(Vec::as_slice))
        .collect();
    if listed != wanted {
        return Err(ScorerError::ShapeMismatch(format!(
            "tensor table {listed:?} does not match dims {:?}",
            header.dims
        )));
    }
    let total: usize = shapes.iter().map(|s| s.iter().product::<usize>()).sum();
    if payload.len() != total * 8 {
        return Err(corrupt("payload length does not match tensor table"));
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let mut take2 = |shape: &Vec<usize>| {
        Array2::from_shape_simple_fn((shape[0], shape[1]), || values.next().expect("length checked"))
    };
    let token_embeddings = take2(&shapes[0]);
    let pos_projection = take2(&shapes[1]);
    let w_query = take2(&shapes[2]);
    let w_key = take2(&shapes[3]);
    let w_value = take2(&shapes[4]);
    let w_out = take2(&shapes[5]);
    let field_embeddings = take2(&shapes[6]);
    let field_bias = Array1::from_iter(values);
    let params = ScorerParams {
        dims: header.dims,
        field_names: header.fields,
        token_embeddings,
        pos_projection,
        w_query,
        w_key,
        w_value,
        w_out,
        field_embeddings,
        field_bias,
    };
    Ok((vocab, params, header.meta))
}

pub fn save_params(
    path: &Path,
    vocab: &Vocab,
    p: &ScorerParams,
    meta: serde_json::Value,
) -> Result<(), ScorerError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_checkpoint(vocab, p, meta))?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<(Vocab, ScorerParams, serde_json::Value), ScorerError> {
    decode_checkpoint(&fs::read(path)?)
}

/// Loads a checkpoint and requires its fields to include every name in `fields`.
pub fn load_params_for(
    path: &Path,
    fields: &[String],
) -> Result<(Vocab, ScorerParams, serde_json::Value), ScorerError> {
    let loaded = load_params(path)?;
    let missing: Vec<&String> = fields
        .iter()
        .filter(|f| loaded.1.field_index(f).is_none())
        .collect();
    if !missing.is_empty() {
        return Err(ScorerError::ShapeMismatch(format!(
            "checkpoint has fields {:?}, missing {missing:?}",
            loaded.1.field_names
        )));
    }
    Ok(loaded)
}
