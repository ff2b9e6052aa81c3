//! Multi-threaded scoring over contiguous record ranges.
//!
//! Per-record scores do not depend on each other, so splitting a set into
//! ranges and concatenating the partial vectors in range order gives exactly
//! the sequential result for any thread count.

use std::ops::Range;

use mmia_core::similarity::{self, ScoreVector};
use mmia_core::{FeatureRecord, FeatureSet};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Contiguous ranges covering `0..n`, at most `parts` of them, sizes
/// differing by at most one.
pub fn ranges(n: usize, parts: usize) -> Vec<Range<usize>> {
    let parts = parts.clamp(1, n.max(1));
    let (base, extra) = (n / parts, n % parts);
    let mut start = 0;
    (0..parts)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

pub fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Usage(format!("cannot start {threads} worker threads: {e}")))
}

fn par_scores<F>(set: &FeatureSet, pool: &rayon::ThreadPool, score: F) -> Result<ScoreVector>
where
    F: Fn(&FeatureRecord) -> mmia_core::Result<f64> + Sync,
{
    let records = set.records();
    let parts = pool.current_num_threads() * 4;
    let chunks: Vec<mmia_core::Result<Vec<f64>>> = pool.install(|| {
        ranges(records.len(), parts)
            .into_par_iter()
            .map(|r| records[r].iter().map(|rec| score(rec).map_err(|e| e.for_record(rec.id))).collect())
            .collect()
    });
    let mut scores = Vec::with_capacity(records.len());
    for chunk in chunks {
        scores.extend(chunk?);
    }
    Ok(ScoreVector::new(set.ids().collect(), scores)?)
}

/// Parallel image-text cosine similarity, identical to `similarity::batch_cs`.
pub fn batch_cs(set: &FeatureSet, pool: &rayon::ThreadPool) -> Result<ScoreVector> {
    par_scores(set, pool, |r| similarity::cosine_similarity(&r.img, &r.txt))
}

/// Parallel augmentation-gap scores, identical to `attacks::aea_scores`.
pub fn aea_scores(set: &FeatureSet, pool: &rayon::ThreadPool) -> Result<ScoreVector> {
    if set.k_transforms() == 0 {
        return Err(mmia_core::Error::NoTransforms.into());
    }
    par_scores(set, pool, similarity::aea_aggregate)
}
