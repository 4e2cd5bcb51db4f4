//! Factorization-machine interaction mechanisms and their exact gradients.
//!
//! All functions operate on one example's slots (one active feature per
//! field, in field order) and only read embedding rows of active features.
//! Backward functions accumulate into a [`SparseRows`] gradient, so rows that
//! were not read receive no entry at all.
//!
//! Field-aware tables store, for every feature `m` and every target field
//! `j`, a vector `v[m, j]`. The pair `(i, j)` of active slots interacts through
//! `v[m_i, j]` and `v[m_j, i]`. Own-field rows `v[m_i, i]` exist but are never
//! read.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Slot;
use crate::nn::{dot, InitPolicy, NnError};
use crate::sparse::SparseRows;

/// One `D`-vector per global feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlainEmbeddings {
    dim: usize,
    table: Vec<f64>,
}

/// One `D`-vector per (global feature, target field).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldAwareEmbeddings {
    num_fields: usize,
    dim: usize,
    table: Vec<f64>,
}

impl PlainEmbeddings {
    pub fn zeros(num_features: usize, dim: usize) -> Self {
        Self {
            dim,
            table: vec![0.0; num_features * dim],
        }
    }

    pub fn init<R: Rng + ?Sized>(num_features: usize, dim: usize, policy: &InitPolicy, rng: &mut R) -> Self {
        let mut e = Self::zeros(num_features, dim);
        policy.fill(&mut e.table, dim, dim, rng);
        e
    }

    pub fn from_table(num_features: usize, dim: usize, table: Vec<f64>) -> Result<Self, NnError> {
        check_len(table.len(), num_features * dim)?;
        Ok(Self { dim, table })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_features(&self) -> usize {
        self.table.len().checked_div(self.dim).unwrap_or(0)
    }

    #[inline]
    pub fn row(&self, feature: usize) -> &[f64] {
        &self.table[feature * self.dim..(feature + 1) * self.dim]
    }

    pub fn row_mut(&mut self, feature: usize) -> &mut [f64] {
        &mut self.table[feature * self.dim..(feature + 1) * self.dim]
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn table_mut(&mut self) -> &mut [f64] {
        &mut self.table
    }
}

impl FieldAwareEmbeddings {
    pub fn zeros(num_features: usize, num_fields: usize, dim: usize) -> Self {
        Self {
            num_fields,
            dim,
            table: vec![0.0; num_features * num_fields * dim],
        }
    }

    pub fn init<R: Rng + ?Sized>(
        num_features: usize,
        num_fields: usize,
        dim: usize,
        policy: &InitPolicy,
        rng: &mut R,
    ) -> Self {
        let mut e = Self::zeros(num_features, num_fields, dim);
        policy.fill(&mut e.table, dim, dim, rng);
        e
    }

    pub fn from_table(num_features: usize, num_fields: usize, dim: usize, table: Vec<f64>) -> Result<Self, NnError> {
        check_len(table.len(), num_features * num_fields * dim)?;
        Ok(Self { num_fields, dim, table })
    }

    /// Every target-field vector of a feature set to that feature's plain vector.
    pub fn tied(plain: &PlainEmbeddings, num_fields: usize) -> Self {
        let n = plain.num_features();
        let mut e = Self::zeros(n, num_fields, plain.dim());
        for m in 0..n {
            for j in 0..num_fields {
                e.row_mut(m, j).copy_from_slice(plain.row(m));
            }
        }
        e
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_fields(&self) -> usize {
        self.num_fields
    }

    pub fn num_features(&self) -> usize {
        self.table.len().checked_div(self.num_fields * self.dim).unwrap_or(0)
    }

    /// Flat row id of `v[feature, target_field]`.
    #[inline]
    pub fn row_id(&self, feature: usize, target_field: usize) -> usize {
        feature * self.num_fields + target_field
    }

    #[inline]
    pub fn row(&self, feature: usize, target_field: usize) -> &[f64] {
        let r = self.row_id(feature, target_field);
        &self.table[r * self.dim..(r + 1) * self.dim]
    }

    pub fn row_mut(&mut self, feature: usize, target_field: usize) -> &mut [f64] {
        let r = self.row_id(feature, target_field);
        &mut self.table[r * self.dim..(r + 1) * self.dim]
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn table_mut(&mut self) -> &mut [f64] {
        &mut self.table
    }
}

fn check_len(found: usize, expected: usize) -> Result<(), NnError> {
    if found != expected {
        return Err(NnError::Shape {
            expected: format!("{expected} table entries"),
            found: format!("{found}"),
        });
    }
    Ok(())
}

/// Number of unordered field pairs, `f (f - 1) / 2`.
pub fn num_pairs(num_fields: usize) -> usize {
    num_fields * num_fields.saturating_sub(1) / 2
}

/// Canonical lexicographic pair order `(0,1), (0,2), ..., (f-2, f-1)`.
pub fn pair_order(num_fields: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(num_pairs(num_fields));
    for i in 0..num_fields {
        for j in i + 1..num_fields {
            pairs.push((i, j));
        }
    }
    pairs
}

/// Width of the concatenated interaction vector.
pub fn concat_width(num_fields: usize, dim: usize) -> usize {
    num_pairs(num_fields) * dim
}

// ---------------------------------------------------------------------------
// FM second-order term

/// `sum_{i<j} <x_i v_i, x_j v_j>` via `1/2 sum_d [(sum_i e_id)^2 - sum_i e_id^2]`.
pub fn fm_pairwise(emb: &PlainEmbeddings, slots: &[Slot]) -> f64 {
    let d = emb.dim();
    let mut total = 0.0;
    for k in 0..d {
        let (mut s, mut sq) = (0.0, 0.0);
        for slot in slots {
            let e = slot.value * emb.row(slot.index)[k];
            s += e;
            sq += e * e;
        }
        total += s * s - sq;
    }
    0.5 * total
}

/// The same term by explicit double loop.
pub fn fm_pairwise_by_pairs(emb: &PlainEmbeddings, slots: &[Slot]) -> f64 {
    let mut total = 0.0;
    for (i, a) in slots.iter().enumerate() {
        for b in &slots[i + 1..] {
            total += dot(emb.row(a.index), emb.row(b.index)) * a.value * b.value;
        }
    }
    total
}

/// `d/dv_i = upstream * x_i (S - x_i v_i)` with `S = sum_j x_j v_j`.
pub fn fm_pairwise_backward(
    emb: &PlainEmbeddings,
    slots: &[Slot],
    upstream: f64,
    grad: &mut SparseRows,
    mut dvalues: Option<&mut [f64]>,
) {
    let sum = embedding_sum(emb, slots);
    for (t, slot) in slots.iter().enumerate() {
        let v = emb.row(slot.index);
        let g = grad.row_mut(slot.index);
        let mut dx = 0.0;
        for k in 0..v.len() {
            let rest = sum[k] - slot.value * v[k];
            g[k] += upstream * slot.value * rest;
            dx += v[k] * rest;
        }
        if let Some(dv) = dvalues.as_deref_mut() {
            dv[t] += upstream * dx;
        }
    }
}

fn embedding_sum(emb: &PlainEmbeddings, slots: &[Slot]) -> Vec<f64> {
    let mut sum = vec![0.0; emb.dim()];
    for slot in slots {
        for (s, v) in sum.iter_mut().zip(emb.row(slot.index)) {
            *s += slot.value * v;
        }
    }
    sum
}

// ---------------------------------------------------------------------------
// FFM second-order term

/// `sum_{i<j} <v[m_i, j], v[m_j, i]> x_i x_j`.
pub fn ffm_pairwise(emb: &FieldAwareEmbeddings, slots: &[Slot]) -> f64 {
    let mut total = 0.0;
    for (i, a) in slots.iter().enumerate() {
        for (j, b) in slots.iter().enumerate().skip(i + 1) {
            total += dot(emb.row(a.index, j), emb.row(b.index, i)) * a.value * b.value;
        }
    }
    total
}

pub fn ffm_pairwise_backward(
    emb: &FieldAwareEmbeddings,
    slots: &[Slot],
    upstream: f64,
    grad: &mut SparseRows,
    mut dvalues: Option<&mut [f64]>,
) {
    for (i, a) in slots.iter().enumerate() {
        for (j, b) in slots.iter().enumerate().skip(i + 1) {
            let (va, vb) = (emb.row(a.index, j), emb.row(b.index, i));
            let scale = upstream * a.value * b.value;
            accumulate(grad.row_mut(emb.row_id(a.index, j)), scale, vb);
            accumulate(grad.row_mut(emb.row_id(b.index, i)), scale, va);
            if let Some(dv) = dvalues.as_deref_mut() {
                let ip = dot(va, vb);
                dv[i] += upstream * b.value * ip;
                dv[j] += upstream * a.value * ip;
            }
        }
    }
}

#[inline]
fn accumulate(dst: &mut [f64], scale: f64, src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += scale * s;
    }
}

// ---------------------------------------------------------------------------
// NFM bi-interaction pooling

/// `sum_{i<j} (x_i v_i) ⊙ (x_j v_j)` written into `out` (length `D`), computed
/// as `1/2 [(sum_i e_i)^2 - sum_i e_i^2]`.
pub fn bi_interaction_pool_into(emb: &PlainEmbeddings, slots: &[Slot], out: &mut [f64]) {
    let d = emb.dim();
    let mut sq = vec![0.0; d];
    out.fill(0.0);
    for slot in slots {
        for (k, v) in emb.row(slot.index).iter().enumerate() {
            let e = slot.value * v;
            out[k] += e;
            sq[k] += e * e;
        }
    }
    for k in 0..d {
        out[k] = 0.5 * (out[k] * out[k] - sq[k]);
    }
}

pub fn bi_interaction_pool(emb: &PlainEmbeddings, slots: &[Slot]) -> Vec<f64> {
    let mut out = vec![0.0; emb.dim()];
    bi_interaction_pool_into(emb, slots, &mut out);
    out
}

/// `d/dv_i = x_i (S - x_i v_i) ⊙ upstream`.
pub fn bi_interaction_pool_backward(
    emb: &PlainEmbeddings,
    slots: &[Slot],
    upstream: &[f64],
    grad: &mut SparseRows,
    mut dvalues: Option<&mut [f64]>,
) {
    let sum = embedding_sum(emb, slots);
    for (t, slot) in slots.iter().enumerate() {
        let v = emb.row(slot.index);
        let g = grad.row_mut(slot.index);
        let mut dx = 0.0;
        for k in 0..v.len() {
            let rest = (sum[k] - slot.value * v[k]) * upstream[k];
            g[k] += slot.value * rest;
            dx += v[k] * rest;
        }
        if let Some(dv) = dvalues.as_deref_mut() {
            dv[t] += dx;
        }
    }
}

// ---------------------------------------------------------------------------
// FNFM bi-interaction concatenation

/// `a_{i,j} = x_i v[m_i, j] ⊙ x_j v[m_j, i]` for every pair in canonical order,
/// concatenated into `out` (length `f (f - 1) / 2 * D`).
pub fn bi_interaction_concat_into(emb: &FieldAwareEmbeddings, slots: &[Slot], out: &mut [f64]) {
    let d = emb.dim();
    let mut seg = 0;
    for (i, a) in slots.iter().enumerate() {
        for (j, b) in slots.iter().enumerate().skip(i + 1) {
            let (va, vb) = (emb.row(a.index, j), emb.row(b.index, i));
            let xx = a.value * b.value;
            let dst = &mut out[seg * d..(seg + 1) * d];
            for k in 0..d {
                dst[k] = xx * va[k] * vb[k];
            }
            seg += 1;
        }
    }
}

pub fn bi_interaction_concat(emb: &FieldAwareEmbeddings, slots: &[Slot]) -> Result<Vec<f64>, NnError> {
    if slots.len() < 2 {
        return Err(NnError::Shape {
            expected: "at least 2 fields".into(),
            found: format!("{} fields", slots.len()),
        });
    }
    let mut out = vec![0.0; concat_width(slots.len(), emb.dim())];
    bi_interaction_concat_into(emb, slots, &mut out);
    Ok(out)
}

/// Gradient of the concatenation given the upstream slice for every segment:
/// `d a_{i,j} / d v[m_i, j] = x_i x_j diag(v[m_j, i])`.
pub fn bi_interaction_concat_backward(
    emb: &FieldAwareEmbeddings,
    slots: &[Slot],
    upstream: &[f64],
    grad: &mut SparseRows,
    mut dvalues: Option<&mut [f64]>,
) {
    let d = emb.dim();
    let mut seg = 0;
    for (i, a) in slots.iter().enumerate() {
        for (j, b) in slots.iter().enumerate().skip(i + 1) {
            let up = &upstream[seg * d..(seg + 1) * d];
            seg += 1;
            if up.iter().all(|&u| u == 0.0) && dvalues.is_none() {
                // still register the rows as touched
                grad.row_mut(emb.row_id(a.index, j));
                grad.row_mut(emb.row_id(b.index, i));
                continue;
            }
            let (va, vb) = (emb.row(a.index, j), emb.row(b.index, i));
            let xx = a.value * b.value;
            let ga = grad.row_mut(emb.row_id(a.index, j));
            for k in 0..d {
                ga[k] += xx * vb[k] * up[k];
            }
            let gb = grad.row_mut(emb.row_id(b.index, i));
            for k in 0..d {
                gb[k] += xx * va[k] * up[k];
            }
            if let Some(dv) = dvalues.as_deref_mut() {
                let s: f64 = (0..d).map(|k| va[k] * vb[k] * up[k]).sum();
                dv[i] += b.value * s;
                dv[j] += a.value * s;
            }
        }
    }
}

/// Segment sum of the concatenation: the `D`-wide field-aware pooling used by
/// the concat-vs-pool ablation.
pub fn field_pool_into(emb: &FieldAwareEmbeddings, slots: &[Slot], out: &mut [f64]) {
    out.fill(0.0);
    for (i, a) in slots.iter().enumerate() {
        for (j, b) in slots.iter().enumerate().skip(i + 1) {
            let (va, vb) = (emb.row(a.index, j), emb.row(b.index, i));
            let xx = a.value * b.value;
            for (k, o) in out.iter_mut().enumerate() {
                *o += xx * va[k] * vb[k];
            }
        }
    }
}

/// Every segment receives the same upstream `D`-vector.
pub fn field_pool_backward(
    emb: &FieldAwareEmbeddings,
    slots: &[Slot],
    upstream: &[f64],
    grad: &mut SparseRows,
    dvalues: Option<&mut [f64]>,
) {
    let tiled: Vec<f64> = upstream
        .iter()
        .copied()
        .cycle()
        .take(num_pairs(slots.len()) * upstream.len())
        .collect();
    bi_interaction_concat_backward(emb, slots, &tiled, grad, dvalues);
}

// ---------------------------------------------------------------------------
// DeepFM deep-side input

/// `x_1 v_1 ⊕ x_2 v_2 ⊕ ... ⊕ x_f v_f`, width `f * D`.
pub fn embed_concat_into(emb: &PlainEmbeddings, slots: &[Slot], out: &mut [f64]) {
    let d = emb.dim();
    for (t, slot) in slots.iter().enumerate() {
        for (o, v) in out[t * d..(t + 1) * d].iter_mut().zip(emb.row(slot.index)) {
            *o = slot.value * v;
        }
    }
}

pub fn embed_concat_backward(
    emb: &PlainEmbeddings,
    slots: &[Slot],
    upstream: &[f64],
    grad: &mut SparseRows,
    mut dvalues: Option<&mut [f64]>,
) {
    let d = emb.dim();
    for (t, slot) in slots.iter().enumerate() {
        let up = &upstream[t * d..(t + 1) * d];
        accumulate(grad.row_mut(slot.index), slot.value, up);
        if let Some(dv) = dvalues.as_deref_mut() {
            dv[t] += dot(emb.row(slot.index), up);
        }
    }
}

// ---------------------------------------------------------------------------
// Uniform dispatch

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionKind {
    /// FM scalar term over plain embeddings.
    FmPairwise,
    /// FFM scalar term over field-aware embeddings.
    FfmPairwise,
    /// NFM `D`-vector over plain embeddings.
    Pool,
    /// FNFM `f (f - 1) / 2 * D` vector over field-aware embeddings.
    Concat,
    /// Segment-summed concatenation, `D`-vector over field-aware embeddings.
    FieldPool,
    /// DeepFM deep input, `f * D` over plain embeddings.
    EmbedConcat,
}

#[derive(Debug, Clone, Copy)]
pub enum EmbeddingsRef<'a> {
    Plain(&'a PlainEmbeddings),
    FieldAware(&'a FieldAwareEmbeddings),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteractionOutput {
    pub kind: InteractionKind,
    pub value: Vec<f64>,
    pub pair_order: Vec<(usize, usize)>,
    pub dim: usize,
}

impl InteractionOutput {
    /// The `a_{i,j}` segment of a concatenation output.
    pub fn segment(&self, i: usize, j: usize) -> Option<&[f64]> {
        if self.kind != InteractionKind::Concat {
            return None;
        }
        let p = self.pair_order.iter().position(|&pr| pr == (i, j))?;
        Some(&self.value[p * self.dim..(p + 1) * self.dim])
    }
}

#[derive(Debug, Clone)]
pub struct InteractionGrad {
    pub rows: SparseRows,
    pub values: Vec<f64>,
}

impl InteractionKind {
    pub fn output_width(self, num_fields: usize, dim: usize) -> usize {
        match self {
            InteractionKind::FmPairwise | InteractionKind::FfmPairwise => 1,
            InteractionKind::Pool | InteractionKind::FieldPool => dim,
            InteractionKind::Concat => concat_width(num_fields, dim),
            InteractionKind::EmbedConcat => num_fields * dim,
        }
    }

    fn embeddings<'a>(self, emb: EmbeddingsRef<'a>) -> Result<EmbeddingsRef<'a>, NnError> {
        let field_aware = matches!(
            self,
            InteractionKind::FfmPairwise | InteractionKind::Concat | InteractionKind::FieldPool
        );
        match (field_aware, emb) {
            (true, EmbeddingsRef::FieldAware(_)) | (false, EmbeddingsRef::Plain(_)) => Ok(emb),
            _ => Err(NnError::Shape {
                expected: format!("{} embeddings for {self:?}", if field_aware { "field-aware" } else { "plain" }),
                found: "the other kind".into(),
            }),
        }
    }

    pub fn forward(self, emb: EmbeddingsRef<'_>, slots: &[Slot]) -> Result<InteractionOutput, NnError> {
        if slots.len() < 2 {
            return Err(NnError::Shape {
                expected: "at least 2 fields".into(),
                found: format!("{} fields", slots.len()),
            });
        }
        let emb = self.embeddings(emb)?;
        let (dim, value) = match (self, emb) {
            (InteractionKind::FmPairwise, EmbeddingsRef::Plain(e)) => (e.dim(), vec![fm_pairwise(e, slots)]),
            (InteractionKind::Pool, EmbeddingsRef::Plain(e)) => (e.dim(), bi_interaction_pool(e, slots)),
            (InteractionKind::EmbedConcat, EmbeddingsRef::Plain(e)) => {
                let mut out = vec![0.0; slots.len() * e.dim()];
                embed_concat_into(e, slots, &mut out);
                (e.dim(), out)
            }
            (InteractionKind::FfmPairwise, EmbeddingsRef::FieldAware(e)) => (e.dim(), vec![ffm_pairwise(e, slots)]),
            (InteractionKind::Concat, EmbeddingsRef::FieldAware(e)) => (e.dim(), bi_interaction_concat(e, slots)?),
            (InteractionKind::FieldPool, EmbeddingsRef::FieldAware(e)) => {
                let mut out = vec![0.0; e.dim()];
                field_pool_into(e, slots, &mut out);
                (e.dim(), out)
            }
            _ => unreachable!("embedding kind checked above"),
        };
        Ok(InteractionOutput {
            kind: self,
            value,
            pair_order: pair_order(slots.len()),
            dim,
        })
    }

    /// Gradients with respect to the touched embedding rows and the slot values.
    pub fn backward(self, emb: EmbeddingsRef<'_>, slots: &[Slot], upstream: &[f64]) -> Result<InteractionGrad, NnError> {
        let emb = self.embeddings(emb)?;
        let dim = match emb {
            EmbeddingsRef::Plain(e) => e.dim(),
            EmbeddingsRef::FieldAware(e) => e.dim(),
        };
        let width = self.output_width(slots.len(), dim);
        if upstream.len() != width {
            return Err(NnError::Shape {
                expected: format!("upstream of length {width}"),
                found: format!("{}", upstream.len()),
            });
        }
        let mut rows = SparseRows::new(dim);
        let mut values = vec![0.0; slots.len()];
        let dv = Some(values.as_mut_slice());
        match (self, emb) {
            (InteractionKind::FmPairwise, EmbeddingsRef::Plain(e)) => fm_pairwise_backward(e, slots, upstream[0], &mut rows, dv),
            (InteractionKind::Pool, EmbeddingsRef::Plain(e)) => bi_interaction_pool_backward(e, slots, upstream, &mut rows, dv),
            (InteractionKind::EmbedConcat, EmbeddingsRef::Plain(e)) => embed_concat_backward(e, slots, upstream, &mut rows, dv),
            (InteractionKind::FfmPairwise, EmbeddingsRef::FieldAware(e)) => {
                ffm_pairwise_backward(e, slots, upstream[0], &mut rows, dv)
            }
            (InteractionKind::Concat, EmbeddingsRef::FieldAware(e)) => {
                bi_interaction_concat_backward(e, slots, upstream, &mut rows, dv)
            }
            (InteractionKind::FieldPool, EmbeddingsRef::FieldAware(e)) => field_pool_backward(e, slots, upstream, &mut rows, dv),
            _ => unreachable!("embedding kind checked above"),
        }
        Ok(InteractionGrad { rows, values })
    }
}
