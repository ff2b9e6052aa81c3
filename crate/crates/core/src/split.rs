//! Seeded disjoint partitioning of feature sets.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::num::rng_from;

/// Partitions `set` into `fractions.len()` id-disjoint parts.
///
/// Part `i` receives `floor(fractions[i] * n)` records, except the last part,
/// which takes whatever remains. Membership in a part is decided by a seeded
/// shuffle; within each part the input order is kept.
pub fn split_disjoint(set: &FeatureSet, fractions: &[f64], seed: u64) -> Result<Vec<FeatureSet>> {
    if set.is_empty() {
        return Err(Error::Empty("cannot split an empty feature set"));
    }
    validate_fractions(fractions)?;

    let n = set.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from(seed));

    let mut parts = Vec::with_capacity(fractions.len());
    let mut start = 0;
    for (i, &f) in fractions.iter().enumerate() {
        let end = if i + 1 == fractions.len() {
            n
        } else {
            (start + libm::floor(f * n as f64) as usize).min(n)
        };
        let mut idx = order[start..end].to_vec();
        idx.sort_unstable();
        let records = idx.into_iter().map(|j| set.records()[j].clone()).collect();
        parts.push(set.with_records(records)?);
        start = end;
    }
    Ok(parts)
}

fn validate_fractions(fractions: &[f64]) -> Result<()> {
    if fractions.is_empty() {
        return Err(Error::InvalidFractions("no fractions given".into()));
    }
    if let Some(f) = fractions.iter().find(|f| !(f.is_finite() && **f > 0.0)) {
        return Err(Error::InvalidFractions(format!("fraction {f} is not positive")));
    }
    let sum: f64 = fractions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidFractions(format!("fractions sum to {sum}, expected 1")));
    }
    Ok(())
}
