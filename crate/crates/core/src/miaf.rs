//! MIAF: the little-endian binary container for feature sets.
//!
//! ```text
//! header  "MIAF" | version u32 | d_img u32 | d_txt u32 | k_transforms u32 | n_records u64
//! record  id u64 | tag u8 | d_img × f32 | d_txt × f32 | k_transforms × d_img × f32
//! ```
//!
//! Transformation names are not part of the binary; they travel in the
//! sidecar written by the IO layer. Decoded sets carry placeholder names
//! `t0..t{K-1}` until the caller attaches the sidecar's names.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::features::{EmbeddingVec, FeatureRecord, FeatureSet, MembershipTag};

pub const MAGIC: [u8; 4] = *b"MIAF";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 28;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("bad magic {0:?}, expected \"MIAF\"")]
    BadMagic([u8; 4]),
    #[error("unsupported MIAF version {0}, expected {VERSION}")]
    UnsupportedVersion(u32),
    #[error("truncated header: {0} of {HEADER_LEN} bytes")]
    TruncatedHeader(usize),
    #[error("truncated payload at record {index}")]
    Truncated { index: u64 },
    #[error("record {index}: non-finite value in {field}")]
    NonFinite { index: u64, field: &'static str },
    #[error("record {index}: invalid membership tag byte {value}")]
    BadTag { index: u64, value: u8 },
    #[error("{0} trailing bytes after the last record")]
    TrailingBytes(usize),
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error("record {index}: duplicate id {id}")]
    DuplicateId { index: u64, id: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub version: u32,
    pub d_img: u32,
    pub d_txt: u32,
    pub k_transforms: u32,
    pub n_records: u64,
}

impl Header {
    pub fn for_set(set: &FeatureSet) -> Self {
        Self {
            version: VERSION,
            d_img: set.d_img() as u32,
            d_txt: set.d_txt() as u32,
            k_transforms: set.k_transforms() as u32,
            n_records: set.len() as u64,
        }
    }

    /// Bytes per record on disk.
    pub fn record_len(&self) -> usize {
        let floats = self.d_img as usize * (1 + self.k_transforms as usize) + self.d_txt as usize;
        8 + 1 + 4 * floats
    }

    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[0..4].copy_from_slice(&MAGIC);
        out[4..8].copy_from_slice(&self.version.to_le_bytes());
        out[8..12].copy_from_slice(&self.d_img.to_le_bytes());
        out[12..16].copy_from_slice(&self.d_txt.to_le_bytes());
        out[16..20].copy_from_slice(&self.k_transforms.to_le_bytes());
        out[20..28].copy_from_slice(&self.n_records.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        if bytes.len() < HEADER_LEN {
            return Err(DecodeError::TruncatedHeader(bytes.len()));
        }
        let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(DecodeError::BadMagic(magic));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let version = u32_at(4);
        if version != VERSION {
            return Err(DecodeError::UnsupportedVersion(version));
        }
        let header = Self {
            version,
            d_img: u32_at(8),
            d_txt: u32_at(12),
            k_transforms: u32_at(16),
            n_records: u64::from_le_bytes(bytes[20..28].try_into().unwrap()),
        };
        if header.d_img == 0 || header.d_txt == 0 {
            return Err(DecodeError::InvalidHeader(format!(
                "d_img={} d_txt={} must be positive",
                header.d_img, header.d_txt
            )));
        }
        Ok(header)
    }

    pub fn placeholder_names(&self) -> Vec<String> {
        (0..self.k_transforms).map(|k| format!("t{k}")).collect()
    }
}

pub fn encoded_len(set: &FeatureSet) -> usize {
    HEADER_LEN + set.len() * Header::for_set(set).record_len()
}

/// Appends one record's bytes. The caller guarantees the record matches the
/// header's shape (a validated [`FeatureSet`] always does).
pub fn encode_record(record: &FeatureRecord, out: &mut Vec<u8>) {
    out.extend_from_slice(&record.id.to_le_bytes());
    out.push(record.tag.as_u8());
    let channels = core::iter::once(&record.img)
        .chain(core::iter::once(&record.txt))
        .chain(record.transformed.iter());
    for emb in channels {
        for v in emb.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

pub fn encode(set: &FeatureSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(encoded_len(set));
    out.extend_from_slice(&Header::for_set(set).encode());
    for r in set.records() {
        encode_record(r, &mut out);
    }
    out
}

/// Decodes one record from exactly `header.record_len()` bytes.
pub fn decode_record(bytes: &[u8], header: &Header, index: u64) -> Result<FeatureRecord, DecodeError> {
    if bytes.len() < header.record_len() {
        return Err(DecodeError::Truncated { index });
    }
    let id = u64::from_le_bytes(bytes[0..8].try_into().unwrap());
    let tag = MembershipTag::from_u8(bytes[8]).ok_or(DecodeError::BadTag { index, value: bytes[8] })?;
    let mut offset = 9;
    let mut take = |dim: u32, field: &'static str| -> Result<EmbeddingVec, DecodeError> {
        let n = dim as usize;
        let values: Vec<f32> = bytes[offset..offset + 4 * n]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        offset += 4 * n;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DecodeError::NonFinite { index, field });
        }
        // Finite and non-empty, so construction cannot fail.
        Ok(EmbeddingVec::new(values).expect("validated embedding"))
    };
    let img = take(header.d_img, "image features")?;
    let txt = take(header.d_txt, "text features")?;
    let transformed = (0..header.k_transforms)
        .map(|_| take(header.d_img, "transformed image features"))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FeatureRecord { id, tag, img, txt, transformed })
}

/// Decodes a whole container. Transformation names are placeholders.
pub fn decode(bytes: &[u8]) -> Result<FeatureSet, crate::Error> {
    let header = Header::decode(bytes)?;
    let rec_len = header.record_len();
    let payload = &bytes[HEADER_LEN..];
    let mut records = Vec::with_capacity((payload.len() / rec_len).min(header.n_records as usize));
    let mut seen = alloc::collections::BTreeSet::new();
    for index in 0..header.n_records {
        let start = index as usize * rec_len;
        let chunk = payload
            .get(start..start + rec_len)
            .ok_or(DecodeError::Truncated { index })?;
        let record = decode_record(chunk, &header, index)?;
        if !seen.insert(record.id) {
            return Err(DecodeError::DuplicateId { index, id: record.id }.into());
        }
        records.push(record);
    }
    let used = header.n_records as usize * rec_len;
    if payload.len() > used {
        return Err(DecodeError::TrailingBytes(payload.len() - used).into());
    }
    FeatureSet::new(
        header.d_img as usize,
        header.d_txt as usize,
        header.placeholder_names(),
        records,
    )
}
