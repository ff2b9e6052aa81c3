//! CSV artifacts: scores, ROC points, sweeps, training logs and dedup reports.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so a CSV
//! written twice from the same values is byte-identical and reading it back
//! recovers every `f64` exactly.

use std::path::Path;

use mmia_core::attack_net::EpochLog;
use mmia_core::metrics::RocPoint;
use mmia_core::{FeatureSet, MembershipTag, ScoreVector};

use crate::error::{Error, Result};
use crate::ingest::Removal;

fn to_string(build: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    build(&mut w).expect("writing CSV to memory");
    let bytes = w.into_inner().expect("flushing CSV to memory");
    String::from_utf8(bytes).expect("CSV output is UTF-8")
}

/// `id,score` or, when `tags` is the set the scores were computed on,
/// `id,score,tag`.
pub fn scores_csv(scores: &ScoreVector, tags: Option<&FeatureSet>) -> Result<String> {
    if let Some(set) = tags {
        if set.len() != scores.len() || set.ids().zip(&scores.ids).any(|(a, &b)| a != b) {
            return Err(mmia_core::Error::Validation("scores are not aligned with the tagged set".into()).into());
        }
    }
    Ok(to_string(|w| {
        match tags {
            Some(set) => {
                w.write_record(["id", "score", "tag"])?;
                for ((id, s), r) in scores.iter().zip(set.records()) {
                    w.write_record([id.to_string(), s.to_string(), r.tag.as_str().to_string()])?;
                }
            }
            None => {
                w.write_record(["id", "score"])?;
                for (id, s) in scores.iter() {
                    w.write_record([id.to_string(), s.to_string()])?;
                }
            }
        }
        Ok(())
    }))
}

/// Scores read back from a scores CSV, with tags when the file has them.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub scores: ScoreVector,
    pub tags: Option<Vec<MembershipTag>>,
}

pub fn read_scores_csv(path: &Path) -> Result<ScoreTable> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let headers = r.headers().map_err(|e| Error::csv(path, e))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let parse_err = |line: u64, message: String| Error::Parse { path: path.to_path_buf(), line, message };
    let (Some(id_col), Some(score_col)) = (col("id"), col("score")) else {
        return Err(parse_err(1, "header must contain id and score columns".into()));
    };
    let tag_col = col("tag");
    let (mut ids, mut scores, mut tags) = (Vec::new(), Vec::new(), Vec::new());
    for row in r.records() {
        let row = row.map_err(|e| Error::csv(path, e))?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |i: usize| row.get(i).map(str::trim).unwrap_or("");
        ids.push(field(id_col).parse::<u64>().map_err(|e| parse_err(line, format!("id: {e}")))?);
        scores.push(field(score_col).parse::<f64>().map_err(|e| parse_err(line, format!("score: {e}")))?);
        if let Some(c) = tag_col {
            tags.push(field(c).parse::<MembershipTag>().map_err(|e| parse_err(line, e.to_string()))?);
        }
    }
    let scores = ScoreVector::new(ids, scores).map_err(|source| Error::Format { path: path.to_path_buf(), source })?;
    Ok(ScoreTable { scores, tags: tag_col.map(|_| tags) })
}

pub fn roc_csv(points: &[RocPoint]) -> String {
    to_string(|w| {
        w.write_record(["fpr", "tpr", "threshold"])?;
        for p in points {
            w.write_record([p.fpr.to_string(), p.tpr.to_string(), p.threshold.to_string()])?;
        }
        Ok(())
    })
}

/// One row of a combined sweep table. `value` is the swept parameter
/// (sigma, λ or non-member count) and the metrics are empty for failed cells.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub attack: String,
    pub auc: Option<f64>,
    pub tpr_at_1pct_fpr: Option<f64>,
    pub acc: Option<f64>,
    pub pseudo_count: Option<usize>,
    pub error: Option<String>,
}

/// Combined sweep CSV. The first column is named after the swept
/// dimension; λ sweeps add a `pseudo_count` column and any sweep with a
/// failed cell adds an `error` column.
pub fn sweep_csv(dimension: &str, rows: &[SweepRow]) -> String {
    let with_pseudo = rows.iter().any(|r| r.pseudo_count.is_some());
    let with_error = rows.iter().any(|r| r.error.is_some());
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    to_string(|w| {
        let mut header = vec![dimension, "attack", "auc", "tpr_at_1pct_fpr", "acc"];
        if with_pseudo {
            header.push("pseudo_count");
        }
        if with_error {
            header.push("error");
        }
        w.write_record(&header)?;
        for r in rows {
            let mut rec = vec![r.value.to_string(), r.attack.clone(), opt(r.auc), opt(r.tpr_at_1pct_fpr), opt(r.acc)];
            if with_pseudo {
                rec.push(r.pseudo_count.map(|c| c.to_string()).unwrap_or_default());
            }
            if with_error {
                rec.push(r.error.clone().unwrap_or_default());
            }
            w.write_record(&rec)?;
        }
        Ok(())
    })
}

pub fn training_log_csv(log: &[EpochLog]) -> String {
    to_string(|w| {
        w.write_record(["epoch", "train_loss", "holdout_loss", "holdout_acc"])?;
        for e in log {
            w.write_record([
                e.epoch.to_string(),
                e.train_loss.to_string(),
                e.holdout_loss.to_string(),
                e.holdout_acc.to_string(),
            ])?;
        }
        Ok(())
    })
}

pub fn dedup_report_csv(removed: &[Removal]) -> String {
    to_string(|w| {
        w.write_record(["id", "reason", "matched_key"])?;
        for r in removed {
            w.write_record([r.id.to_string(), r.reason.as_str().to_string(), r.matched_key.clone()])?;
        }
        Ok(())
    })
}
