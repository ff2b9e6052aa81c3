//! Data hygiene for audit inputs: caption normalization, removal of entries
//! that overlap a reference manifest, and id-disjointness checks between
//! feature sets that play different roles.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use mmia_core::FeatureSet;
use serde::{Deserialize, Serialize};
use unicode_general_category::{get_general_category, GeneralCategory};

use crate::error::{Error, Result};

/// Fixed English stopword list applied by [`normalize_caption`]. The same
/// list is reproduced in `docs/stopwords.md`.
pub const STOPWORDS: [&str; 50] = [
    "a", "an", "the", "and", "or", "but", "if", "of", "at", "by", //
    "for", "with", "about", "to", "from", "in", "on", "is", "are", "was", //
    "were", "be", "been", "being", "this", "that", "these", "those", "it", "its", //
    "as", "into", "over", "under", "up", "down", "out", "off", "than", "then", //
    "so", "very", "can", "will", "just", "has", "have", "had", "do", "does",
];

/// One line of a JSON Lines manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: u64,
    #[serde(rename = "image")]
    pub image_ref: String,
    pub caption: String,
}

fn is_punctuation(c: char) -> bool {
    use GeneralCategory::*;
    matches!(
        get_general_category(c),
        ConnectorPunctuation
            | DashPunctuation
            | OpenPunctuation
            | ClosePunctuation
            | InitialPunctuation
            | FinalPunctuation
            | OtherPunctuation
    )
}

/// Canonical caption form used for overlap detection. The steps run in a
/// fixed order: collapse whitespace, lowercase, drop decimal digits, drop
/// punctuation, drop stopwords. Surviving tokens are joined by single spaces.
pub fn normalize_caption(text: &str) -> String {
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ");
    let lowered = collapsed.to_lowercase();
    let no_digits: String =
        lowered.chars().filter(|&c| get_general_category(c) != GeneralCategory::DecimalNumber).collect();
    let no_punct: String = no_digits.chars().filter(|&c| !is_punctuation(c)).collect();
    no_punct.split_whitespace().filter(|t| !STOPWORDS.contains(t)).collect::<Vec<_>>().join(" ")
}

/// Image reference in comparable form: trimmed, and for URLs with the
/// scheme and host lowercased. Paths and URL paths keep their case.
pub fn normalize_image_ref(image_ref: &str) -> String {
    let s = image_ref.trim();
    let Some((scheme, rest)) = s.split_once("://") else {
        return s.to_string();
    };
    let host_end = rest.find(['/', '?', '#']).unwrap_or(rest.len());
    let (host, tail) = rest.split_at(host_end);
    format!("{}://{}{}", scheme.to_lowercase(), host.to_lowercase(), tail)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RemovalReason {
    Caption,
    Url,
}

impl RemovalReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RemovalReason::Caption => "caption",
            RemovalReason::Url => "url",
        }
    }
}

/// Why an entry was dropped. `matched_key` is the normalized caption or image
/// reference it shared with the reference manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Removal {
    pub id: u64,
    pub reason: RemovalReason,
    pub matched_key: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DedupOutcome {
    pub kept: Vec<ManifestEntry>,
    pub removed: Vec<Removal>,
}

/// Drops every entry of `a` whose normalized caption or normalized image
/// reference also occurs in `b`. A caption match is reported in preference
/// to a URL match. Input order is preserved.
pub fn dedup(a: &[ManifestEntry], b: &[ManifestEntry]) -> DedupOutcome {
    let captions: HashSet<String> = b.iter().map(|e| normalize_caption(&e.caption)).collect();
    let urls: HashSet<String> = b.iter().map(|e| normalize_image_ref(&e.image_ref)).collect();
    let mut out = DedupOutcome::default();
    for entry in a {
        let caption = normalize_caption(&entry.caption);
        let removal = if captions.contains(&caption) {
            Some((RemovalReason::Caption, caption))
        } else {
            let url = normalize_image_ref(&entry.image_ref);
            urls.contains(&url).then_some((RemovalReason::Url, url))
        };
        match removal {
            Some((reason, matched_key)) => out.removed.push(Removal { id: entry.id, reason, matched_key }),
            None => out.kept.push(entry.clone()),
        }
    }
    out
}

pub fn parse_manifest(text: &str, path: &Path) -> Result<Vec<ManifestEntry>> {
    let mut entries = Vec::new();
    let mut seen = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i as u64 + 1;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        if let Some(first) = seen.insert(entry.id, line_no) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                message: format!("duplicate id {} (first seen on line {first})", entry.id),
            });
        }
        entries.push(entry);
    }
    Ok(entries)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, path)
}

pub fn manifest_jsonl(entries: &[ManifestEntry]) -> String {
    entries.iter().map(|e| serde_json::to_string(e).expect("manifest entry serializes") + "\n").collect()
}

/// An id present in two feature sets, identified by their positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Collision {
    pub set_i: usize,
    pub set_j: usize,
    pub id: u64,
}

/// Succeeds when no id occurs in more than one set. Otherwise returns every
/// pairwise collision, ordered by `(set_i, set_j)` and then by the position
/// of the id in `sets[set_i]`.
pub fn assert_disjoint(sets: &[&FeatureSet]) -> std::result::Result<(), Vec<Collision>> {
    let indexes: Vec<HashSet<u64>> = sets.iter().map(|s| s.ids().collect()).collect();
    let mut collisions = Vec::new();
    for i in 0..sets.len() {
        for j in i + 1..sets.len() {
            collisions.extend(sets[i].ids().filter(|id| indexes[j].contains(id)).map(|id| Collision { set_i: i, set_j: j, id }));
        }
    }
    if collisions.is_empty() {
        Ok(())
    } else {
        Err(collisions)
    }
}
