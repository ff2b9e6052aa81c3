//! Reading and writing MIAF feature files and their JSON sidecars.
//!
//! A feature file `run/members.miaf` is always accompanied by
//! `run/members.miaf.meta.json`, which carries the dataset and model names,
//! the ordered transformation names and a creation timestamp. Any further
//! metadata entries of the set are kept under `extra`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::{Path, PathBuf};

use mmia_core::miaf::{self, DecodeError, Header, HEADER_LEN};
use mmia_core::{FeatureRecord, FeatureSet, MembershipTag};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DATASET: &str = "dataset";
const MODEL: &str = "model";
const CREATED: &str = "created_utc";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sidecar {
    pub dataset: String,
    pub model: String,
    pub transforms: Vec<String>,
    pub created_utc: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, String>,
}

impl Sidecar {
    fn for_set(set: &FeatureSet) -> Result<Self> {
        let meta = set.meta();
        let get = |k: &str| meta.get(k).cloned().unwrap_or_default();
        let created_utc = match meta.get(CREATED) {
            Some(v) => v.clone(),
            None => timestamp_now()?,
        };
        let extra = meta
            .iter()
            .filter(|(k, _)| ![DATASET, MODEL, CREATED].contains(&k.as_str()))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        Ok(Self { dataset: get(DATASET), model: get(MODEL), transforms: set.transform_names().to_vec(), created_utc, extra })
    }

    /// Metadata map of the set; empty values are left out so that a set
    /// without dataset or model names round-trips unchanged.
    fn into_meta(self) -> BTreeMap<String, String> {
        let mut meta = self.extra;
        for (key, value) in [(DATASET, self.dataset), (MODEL, self.model), (CREATED, self.created_utc)] {
            if !value.is_empty() {
                meta.insert(key.into(), value);
            }
        }
        meta
    }
}

/// Current UTC time as RFC 3339, or the time given by `SOURCE_DATE_EPOCH`
/// when that variable is set (reproducible-build convention).
pub fn timestamp_now() -> Result<String> {
    use time::format_description::well_known::Rfc3339;
    let now = match std::env::var("SOURCE_DATE_EPOCH") {
        Ok(v) => {
            let secs: i64 =
                v.trim().parse().map_err(|_| Error::Usage(format!("SOURCE_DATE_EPOCH is not an integer: {v:?}")))?;
            time::OffsetDateTime::from_unix_timestamp(secs)
                .map_err(|e| Error::Usage(format!("SOURCE_DATE_EPOCH out of range: {e}")))?
        }
        Err(_) => time::OffsetDateTime::now_utc(),
    };
    Ok(now.format(&Rfc3339).expect("RFC 3339 formatting of a valid timestamp"))
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Writes `set` to `path` plus its sidecar. Everything is encoded in memory
/// first so that a set that cannot be represented leaves no partial file.
pub fn write_feature_set(set: &FeatureSet, path: &Path) -> Result<()> {
    check_representable(set)?;
    let sidecar = Sidecar::for_set(set)?;
    let mut json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    json.push('\n');
    let bytes = miaf::encode(set);
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    std::fs::write(&side, json).map_err(|e| Error::io(&side, e))
}

fn check_representable(set: &FeatureSet) -> Result<()> {
    let too_big = |v: usize| u32::try_from(v).is_err();
    if too_big(set.d_img()) || too_big(set.d_txt()) || too_big(set.k_transforms()) {
        return Err(mmia_core::Error::Validation("dimensions exceed the u32 range of the file header".into()).into());
    }
    if let Some(name) = set.transform_names().iter().find(|n| n.is_empty()) {
        return Err(mmia_core::Error::Validation(format!("empty transformation name {name:?}")).into());
    }
    Ok(())
}

/// Reads a feature file. The sidecar is optional; without it the set carries
/// placeholder transformation names and no metadata.
pub fn read_feature_set(path: &Path) -> Result<FeatureSet> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let set = miaf::decode(&bytes).map_err(|source| Error::Format { path: path.to_path_buf(), source })?;
    match read_sidecar(path)? {
        Some(side) => attach_sidecar(set, side, path),
        None => Ok(set),
    }
}

pub fn read_sidecar(path: &Path) -> Result<Option<Sidecar>> {
    let side = sidecar_path(path);
    let text = match std::fs::read_to_string(&side) {
        Ok(t) => t,
        Err(e) if e.kind() == ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(Error::io(&side, e)),
    };
    serde_json::from_str(&text).map(Some).map_err(|e| Error::Sidecar { path: side, message: e.to_string() })
}

fn attach_sidecar(set: FeatureSet, side: Sidecar, path: &Path) -> Result<FeatureSet> {
    if side.transforms.len() != set.k_transforms() {
        return Err(Error::Sidecar {
            path: sidecar_path(path),
            message: format!("{} transformation names for {} channels", side.transforms.len(), set.k_transforms()),
        });
    }
    let names = side.transforms.clone();
    Ok(set.with_transform_names(names)?.with_meta_map(side.into_meta()))
}

/// Record-at-a-time reader that never holds more than one record in memory.
pub struct MiafReader<R> {
    inner: R,
    header: Header,
    next: u64,
    buf: Vec<u8>,
    seen: std::collections::HashSet<u64>,
    done: bool,
}

impl MiafReader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::new(BufReader::new(file)).map_err(|e| match e {
            Error::Core(source) => Error::Format { path: path.to_path_buf(), source },
            other => other,
        })
    }
}

impl<R: Read> MiafReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        let mut head = [0u8; HEADER_LEN];
        let got = read_full(&mut inner, &mut head).map_err(|e| Error::io(Path::new("<stream>"), e))?;
        let header = Header::decode(&head[..got]).map_err(mmia_core::Error::from)?;
        let buf = vec![0u8; header.record_len()];
        Ok(Self { inner, header, next: 0, buf, seen: Default::default(), done: false })
    }

    pub fn header(&self) -> &Header {
        &self.header
    }

    fn step(&mut self) -> std::result::Result<Option<FeatureRecord>, DecodeError> {
        if self.next == self.header.n_records {
            self.done = true;
            let mut probe = [0u8; 1];
            let extra = read_full(&mut self.inner, &mut probe).map_err(|_| DecodeError::Truncated { index: self.next })?;
            if extra > 0 {
                let mut rest = Vec::new();
                let more = self.inner.read_to_end(&mut rest).unwrap_or(0);
                return Err(DecodeError::TrailingBytes(extra + more));
            }
            return Ok(None);
        }
        let index = self.next;
        let got = read_full(&mut self.inner, &mut self.buf).map_err(|_| DecodeError::Truncated { index })?;
        if got < self.buf.len() {
            self.done = true;
            return Err(DecodeError::Truncated { index });
        }
        self.next += 1;
        let rec = miaf::decode_record(&self.buf, &self.header, index)?;
        if !self.seen.insert(rec.id) {
            return Err(DecodeError::DuplicateId { index, id: rec.id });
        }
        Ok(Some(rec))
    }
}

impl<R: Read> Iterator for MiafReader<R> {
    type Item = std::result::Result<FeatureRecord, DecodeError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.step() {
            Ok(rec) => rec.map(Ok),
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// Like `read_exact`, but reports how many bytes were read before EOF.
fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

/// Streaming summary produced by `inspect`.
#[derive(Debug, Clone, PartialEq)]
pub struct Inspection {
    pub header: Header,
    pub sidecar: Option<Sidecar>,
    /// Record counts indexed by tag byte (unknown, member, non-member).
    pub tags: [u64; 3],
    pub cs: Option<CsStats>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsStats {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

pub fn inspect(path: &Path) -> Result<Inspection> {
    let mut reader = MiafReader::open(path)?;
    let header = *reader.header();
    let mut tags = [0u64; 3];
    let (mut min, mut max, mut sum, mut n) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0u64);
    let fmt = |source: DecodeError| Error::Format { path: path.to_path_buf(), source: source.into() };
    for rec in reader.by_ref() {
        let rec = rec.map_err(fmt)?;
        tags[rec.tag.as_u8() as usize] += 1;
        let cs = mmia_core::similarity::cosine_similarity(&rec.img, &rec.txt)
            .map_err(|e| Error::Format { path: path.to_path_buf(), source: e.for_record(rec.id) })?;
        min = min.min(cs);
        max = max.max(cs);
        sum += cs;
        n += 1;
    }
    let cs = (n > 0).then(|| CsStats { min, mean: sum / n as f64, max });
    Ok(Inspection { header, sidecar: read_sidecar(path)?, tags, cs })
}

impl Inspection {
    pub fn render(&self) -> String {
        let h = &self.header;
        let mut out = String::new();
        let mut line = |k: &str, v: String| out.push_str(&format!("{k}: {v}\n"));
        line("version", h.version.to_string());
        line("d_img", h.d_img.to_string());
        line("d_txt", h.d_txt.to_string());
        line("k_transforms", h.k_transforms.to_string());
        line("records", h.n_records.to_string());
        if let Some(side) = &self.sidecar {
            line("dataset", side.dataset.clone());
            line("model", side.model.clone());
            line("transforms", side.transforms.join(","));
            line("created_utc", side.created_utc.clone());
        }
        for (i, count) in self.tags.iter().enumerate() {
            if *count > 0 {
                let tag = MembershipTag::from_u8(i as u8).expect("tag index");
                line(&format!("tag.{}", tag.as_str()), count.to_string());
            }
        }
        if let Some(cs) = self.cs {
            line("cs.min", format!("{:.6}", cs.min));
            line("cs.mean", format!("{:.6}", cs.mean));
            line("cs.max", format!("{:.6}", cs.max));
        }
        out
    }
}

/// Writes `text` to `path`, creating parent directories as needed.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}
