//! Cosine similarity and transformation-gap signals.
//!
//! All arithmetic happens in `f64` regardless of the stored `f32` features.

use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{Error, Result};
use crate::features::{EmbeddingVec, FeatureRecord, FeatureSet};

/// Per-record scores aligned with the record order of the set they came
/// from. Higher always means more member-like.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub ids: Vec<u64>,
    pub scores: Vec<f64>,
}

impl ScoreVector {
    pub fn new(ids: Vec<u64>, scores: Vec<f64>) -> Result<Self> {
        if ids.len() != scores.len() {
            return Err(Error::DimensionMismatch { expected: ids.len(), actual: scores.len() });
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::Validation("score vector contains non-finite values".into()));
        }
        Ok(Self { ids, scores })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.ids.iter().copied().zip(self.scores.iter().copied())
    }

    /// Concatenates partial vectors computed over consecutive record ranges.
    pub fn concat(parts: impl IntoIterator<Item = ScoreVector>) -> Self {
        let mut out = ScoreVector { ids: Vec::new(), scores: Vec::new() };
        for p in parts {
            out.ids.extend(p.ids);
            out.scores.extend(p.scores);
        }
        out
    }
}

/// `<a, b> / (|a| |b|)` clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &EmbeddingVec, b: &EmbeddingVec) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), actual: b.dim() });
    }
    let (mut ab, mut aa, mut bb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.values().iter().zip(b.values()) {
        let (x, y) = (f64::from(x), f64::from(y));
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((ab / (libm::sqrt(aa) * libm::sqrt(bb))).clamp(-1.0, 1.0))
}

/// CS(img, txt) − CS(transformed[k], txt).
pub fn cs_gap(record: &FeatureRecord, k: usize) -> Result<f64> {
    let channel = record
        .transformed
        .get(k)
        .ok_or(Error::ChannelOutOfRange { index: k, available: record.transformed.len() })?;
    let base = cosine_similarity(&record.img, &record.txt)?;
    Ok(base - cosine_similarity(channel, &record.txt)?)
}

/// CS(img, txt) plus the unweighted sum of all K transformation gaps.
pub fn aea_aggregate(record: &FeatureRecord) -> Result<f64> {
    if record.transformed.is_empty() {
        return Err(Error::NoTransforms);
    }
    let base = cosine_similarity(&record.img, &record.txt)?;
    let mut total = base;
    for channel in &record.transformed {
        total += base - cosine_similarity(channel, &record.txt)?;
    }
    Ok(total)
}

/// Image-text cosine similarity for every record, in set order.
pub fn batch_cs(set: &FeatureSet) -> Result<ScoreVector> {
    batch_cs_range(set, 0..set.len())
}

/// [`batch_cs`] restricted to a contiguous record range; concatenating the
/// results of adjacent ranges reproduces the full vector exactly.
pub fn batch_cs_range(set: &FeatureSet, range: Range<usize>) -> Result<ScoreVector> {
    score_range(set, range, |r| cosine_similarity(&r.img, &r.txt))
}

pub(crate) fn score_range(
    set: &FeatureSet,
    range: Range<usize>,
    mut score: impl FnMut(&FeatureRecord) -> Result<f64>,
) -> Result<ScoreVector> {
    let records = &set.records()[range];
    let mut ids = Vec::with_capacity(records.len());
    let mut scores = Vec::with_capacity(records.len());
    for r in records {
        ids.push(r.id);
        scores.push(score(r).map_err(|e| e.for_record(r.id))?);
    }
    Ok(ScoreVector { ids, scores })
}
