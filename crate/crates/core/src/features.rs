//! Feature-level data model shared by every attack, metric and defense.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// A finite, non-empty embedding as emitted by one tower of the target model.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVec(Vec<f32>);

impl EmbeddingVec {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Validation("embedding must have dim >= 1".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("embedding component {i} is not finite")));
        }
        Ok(Self(values))
    }

    /// Narrows 64-bit values to the stored 32-bit representation.
    pub fn from_f64(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| v as f32).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&v| f64::from(v)).collect()
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum MembershipTag {
    #[default]
    Unknown,
    Member,
    NonMember,
}

impl MembershipTag {
    pub fn as_u8(self) -> u8 {
        match self {
            MembershipTag::Unknown => 0,
            MembershipTag::Member => 1,
            MembershipTag::NonMember => 2,
        }
    }

    pub fn from_u8(byte: u8) -> Option<Self> {
        match byte {
            0 => Some(MembershipTag::Unknown),
            1 => Some(MembershipTag::Member),
            2 => Some(MembershipTag::NonMember),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MembershipTag::Unknown => "unknown",
            MembershipTag::Member => "member",
            MembershipTag::NonMember => "nonmember",
        }
    }
}

impl core::str::FromStr for MembershipTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "unknown" | "0" => Ok(MembershipTag::Unknown),
            "member" | "1" => Ok(MembershipTag::Member),
            "nonmember" | "non-member" | "non_member" | "2" => Ok(MembershipTag::NonMember),
            other => Err(Error::Validation(format!("unknown membership tag {other:?}"))),
        }
    }
}

/// One image-text pair as seen through the target model: the image and text
/// embeddings plus one image embedding per input transformation.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub id: u64,
    pub tag: MembershipTag,
    pub img: EmbeddingVec,
    pub txt: EmbeddingVec,
    pub transformed: Vec<EmbeddingVec>,
}

impl FeatureRecord {
    pub fn new(id: u64, tag: MembershipTag, img: EmbeddingVec, txt: EmbeddingVec) -> Self {
        Self { id, tag, img, txt, transformed: Vec::new() }
    }

    pub fn with_transformed(mut self, transformed: Vec<EmbeddingVec>) -> Self {
        self.transformed = transformed;
        self
    }
}

/// An immutable collection of records sharing dimensions and transformation
/// channels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    d_img: usize,
    d_txt: usize,
    transform_names: Vec<String>,
    records: Vec<FeatureRecord>,
    meta: BTreeMap<String, String>,
}

impl FeatureSet {
    /// Builds a set, checking every record against the declared shape and
    /// rejecting duplicate ids.
    pub fn new(
        d_img: usize,
        d_txt: usize,
        transform_names: Vec<String>,
        records: Vec<FeatureRecord>,
    ) -> Result<Self> {
        if d_img == 0 || d_txt == 0 {
            return Err(Error::Validation("d_img and d_txt must be positive".into()));
        }
        let k = transform_names.len();
        let mut seen = BTreeSet::new();
        let mut dups = Vec::new();
        for (index, r) in records.iter().enumerate() {
            if r.img.dim() != d_img {
                return Err(Error::Validation(format!(
                    "record {index} (id {}): image dim {} != {d_img}",
                    r.id,
                    r.img.dim()
                )));
            }
            if r.txt.dim() != d_txt {
                return Err(Error::Validation(format!(
                    "record {index} (id {}): text dim {} != {d_txt}",
                    r.id,
                    r.txt.dim()
                )));
            }
            if r.transformed.len() != k {
                return Err(Error::Validation(format!(
                    "record {index} (id {}): {} transformed channels, expected {k}",
                    r.id,
                    r.transformed.len()
                )));
            }
            if let Some(c) = r.transformed.iter().position(|t| t.dim() != d_img) {
                return Err(Error::Validation(format!(
                    "record {index} (id {}): transformed channel {c} dim differs from image dim",
                    r.id
                )));
            }
            if !seen.insert(r.id) {
                dups.push(r.id);
            }
        }
        if !dups.is_empty() {
            return Err(Error::DuplicateIds(dups));
        }
        Ok(Self { d_img, d_txt, transform_names, records, meta: BTreeMap::new() })
    }

    pub fn empty(d_img: usize, d_txt: usize, transform_names: Vec<String>) -> Result<Self> {
        Self::new(d_img, d_txt, transform_names, Vec::new())
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.meta.insert(key.into(), value.into());
        self
    }

    pub fn with_meta_map(mut self, meta: BTreeMap<String, String>) -> Self {
        self.meta = meta;
        self
    }

    pub fn d_img(&self) -> usize {
        self.d_img
    }

    pub fn d_txt(&self) -> usize {
        self.d_txt
    }

    pub fn k_transforms(&self) -> usize {
        self.transform_names.len()
    }

    pub fn transform_names(&self) -> &[String] {
        &self.transform_names
    }

    pub fn records(&self) -> &[FeatureRecord] {
        &self.records
    }

    pub fn meta(&self) -> &BTreeMap<String, String> {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.records.iter().map(|r| r.id)
    }

    pub fn into_records(self) -> Vec<FeatureRecord> {
        self.records
    }

    /// A set with the same shape and metadata holding `records`.
    pub fn with_records(&self, records: Vec<FeatureRecord>) -> Result<Self> {
        Ok(Self::new(self.d_img, self.d_txt, self.transform_names.clone(), records)?
            .with_meta_map(self.meta.clone()))
    }

    /// Keeps the records for which `keep` returns true, preserving order.
    pub fn filter(&self, mut keep: impl FnMut(&FeatureRecord) -> bool) -> Self {
        let records = self.records.iter().filter(|r| keep(r)).cloned().collect();
        Self { records, ..self.clone_shape() }
    }

    /// Replaces the transformation channel names; the count must not change.
    pub fn with_transform_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.transform_names.len() {
            return Err(Error::Validation(format!(
                "{} transform names given for {} channels",
                names.len(),
                self.transform_names.len()
            )));
        }
        self.transform_names = names;
        Ok(self)
    }

    /// Same records with every tag replaced.
    pub fn retagged(&self, tag: MembershipTag) -> Self {
        let records = self.records.iter().cloned().map(|mut r| {
            r.tag = tag;
            r
        });
        Self { records: records.collect(), ..self.clone_shape() }
    }

    /// Concatenates sets of identical shape; ids must stay unique.
    pub fn concat(parts: &[&FeatureSet]) -> Result<Self> {
        let first = parts.first().ok_or(Error::Empty("no sets to concatenate"))?;
        let mut records = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
        for p in parts {
            if p.d_img != first.d_img || p.d_txt != first.d_txt || p.transform_names != first.transform_names {
                return Err(Error::Validation("cannot concatenate sets of different shape".into()));
            }
            records.extend(p.records.iter().cloned());
        }
        Ok(Self::new(first.d_img, first.d_txt, first.transform_names.clone(), records)?
            .with_meta_map(first.meta.clone()))
    }

    fn clone_shape(&self) -> Self {
        Self {
            d_img: self.d_img,
            d_txt: self.d_txt,
            transform_names: self.transform_names.clone(),
            records: Vec::new(),
            meta: self.meta.clone(),
        }
    }
}

/// Black-box access to a two-tower model: one embedding per image and per
/// caption. Implementations must be deterministic for a fixed input.
pub trait TargetModel {
    type Image: ?Sized;
    type Text: ?Sized;

    fn embed_image(&self, image: &Self::Image) -> EmbeddingVec;
    fn embed_text(&self, text: &Self::Text) -> EmbeddingVec;
}

#[cfg(test)]
pub(crate) mod test_util {
    use super::*;
    use alloc::vec;

    pub fn emb(values: &[f32]) -> EmbeddingVec {
        EmbeddingVec::new(values.to_vec()).unwrap()
    }

    pub fn record(id: u64, img: &[f32], txt: &[f32]) -> FeatureRecord {
        FeatureRecord::new(id, MembershipTag::Unknown, emb(img), emb(txt))
    }

    pub fn set_of(records: Vec<FeatureRecord>) -> FeatureSet {
        let r0 = &records[0];
        let names = (0..r0.transformed.len()).map(|k| format!("t{k}")).collect();
        FeatureSet::new(r0.img.dim(), r0.txt.dim(), names, records).unwrap()
    }

    pub fn simple_set(n: u64) -> FeatureSet {
        set_of((0..n).map(|i| record(i, &[1.0, i as f32 + 1.0], &[1.0, 0.5])).collect())
    }

    #[test]
    fn rejects_mismatched_channel_dim() {
        let r = record(1, &[1.0, 0.0], &[1.0, 0.0]).with_transformed(vec![emb(&[1.0, 0.0, 0.0])]);
        let err = FeatureSet::new(2, 2, vec!["t".into()], vec![r]).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn rejects_duplicate_ids() {
        let a = record(7, &[1.0], &[1.0]);
        let b = record(7, &[2.0], &[1.0]);
        let err = FeatureSet::new(1, 1, vec![], vec![a, b]).unwrap_err();
        assert_eq!(err, Error::DuplicateIds(vec![7]));
    }

    #[test]
    fn rejects_non_finite_embedding() {
        assert!(EmbeddingVec::new(vec![1.0, f32::NAN]).is_err());
        assert!(EmbeddingVec::new(vec![]).is_err());
    }

    #[test]
    fn tag_byte_mapping() {
        for tag in [MembershipTag::Unknown, MembershipTag::Member, MembershipTag::NonMember] {
            assert_eq!(MembershipTag::from_u8(tag.as_u8()), Some(tag));
            assert_eq!(tag.as_str().parse::<MembershipTag>().unwrap(), tag);
        }
        assert_eq!(MembershipTag::from_u8(3), None);
    }
}
