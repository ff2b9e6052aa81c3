//! ROC analysis for membership scores.
//!
//! Every rule here predicts "member" iff `score >= threshold`, and all
//! attacks emit scores where higher means more member-like.

use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};
use crate::features::{FeatureSet, MembershipTag};
use crate::similarity::ScoreVector;

/// `(score, is_member)` pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledScores(pub Vec<(f64, bool)>);

impl LabeledScores {
    pub fn new(pairs: Vec<(f64, bool)>) -> Self {
        Self(pairs)
    }

    pub fn from_parts(members: &[f64], non_members: &[f64]) -> Self {
        let pairs = members
            .iter()
            .map(|&s| (s, true))
            .chain(non_members.iter().map(|&s| (s, false)))
            .collect();
        Self(pairs)
    }

    /// Pairs scores with the ground-truth tags of the set they were computed
    /// on. Records tagged `Unknown` are rejected.
    pub fn from_tagged(scores: &ScoreVector, set: &FeatureSet) -> Result<Self> {
        if scores.len() != set.len() {
            return Err(Error::DimensionMismatch { expected: set.len(), actual: scores.len() });
        }
        let mut pairs = Vec::with_capacity(set.len());
        for ((id, s), r) in scores.iter().zip(set.records()) {
            if id != r.id {
                return Err(Error::Validation(alloc::format!(
                    "score id {id} does not match record id {}",
                    r.id
                )));
            }
            match r.tag {
                MembershipTag::Member => pairs.push((s, true)),
                MembershipTag::NonMember => pairs.push((s, false)),
                MembershipTag::Unknown => {
                    return Err(Error::Validation(alloc::format!(
                        "record {} has unknown membership; evaluation needs ground truth",
                        r.id
                    )))
                }
            }
        }
        Ok(Self(pairs))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn class_counts(&self) -> (usize, usize) {
        let members = self.0.iter().filter(|p| p.1).count();
        (members, self.0.len() - members)
    }

    fn require_both(&self) -> Result<(usize, usize)> {
        let (members, non_members) = self.class_counts();
        if members == 0 || non_members == 0 {
            return Err(Error::SingleClass { members, non_members });
        }
        Ok((members, non_members))
    }

    /// Groups of equal scores in descending score order, as
    /// `(score, members, non_members)`.
    fn descending_groups(&self) -> Vec<(f64, usize, usize)> {
        let mut sorted = self.0.clone();
        sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal));
        let mut groups: Vec<(f64, usize, usize)> = Vec::new();
        for (s, m) in sorted {
            match groups.last_mut() {
                Some(g) if g.0 == s => {
                    if m { g.1 += 1 } else { g.2 += 1 }
                }
                _ => groups.push((s, usize::from(m), usize::from(!m))),
            }
        }
        groups
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Operating point chosen for one FPR budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FprOperatingPoint {
    pub target_fpr: f64,
    pub tpr: f64,
    pub threshold: f64,
}

/// Mann-Whitney AUC: the fraction of (member, non-member) pairs ordered
/// correctly, with ties worth half.
pub fn auc(data: &LabeledScores) -> Result<f64> {
    let (members, non_members) = data.require_both()?;
    // Twice the credited pair count stays an exact integer.
    let mut doubled: u128 = 0;
    let mut non_members_above = 0usize;
    for (_, m, n) in data.descending_groups() {
        doubled += 2 * (m as u128) * ((non_members - non_members_above - n) as u128);
        doubled += (m as u128) * (n as u128);
        non_members_above += n;
    }
    Ok(doubled as f64 / (2.0 * members as f64 * non_members as f64))
}

/// ROC points from the `+inf` sentinel `(0, 0)` down to the lowest score
/// `(1, 1)`, one per distinct score.
pub fn roc_curve(data: &LabeledScores) -> Result<Vec<RocPoint>> {
    let (members, non_members) = data.require_both()?;
    let groups = data.descending_groups();
    let mut points = Vec::with_capacity(groups.len() + 1);
    points.push(RocPoint { fpr: 0.0, tpr: 0.0, threshold: f64::INFINITY });
    let (mut tp, mut fp) = (0usize, 0usize);
    for (score, m, n) in groups {
        tp += m;
        fp += n;
        points.push(RocPoint {
            fpr: fp as f64 / non_members as f64,
            tpr: tp as f64 / members as f64,
            threshold: score,
        });
    }
    Ok(points)
}

/// Area under a piecewise-linear curve through `points`.
pub fn trapezoid_area(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

/// Highest TPR among achievable thresholds whose empirical FPR does not
/// exceed `target_fpr`. No interpolation between operating points.
pub fn tpr_at_fpr(data: &LabeledScores, target_fpr: f64) -> Result<FprOperatingPoint> {
    let roc = roc_curve(data)?;
    Ok(operating_point(&roc, target_fpr))
}

fn operating_point(roc: &[RocPoint], target_fpr: f64) -> FprOperatingPoint {
    // fpr and tpr are non-decreasing along the curve, so the last admissible
    // point has the highest TPR.
    let best = roc
        .iter()
        .take_while(|p| p.fpr <= target_fpr)
        .last()
        .copied()
        .unwrap_or(roc[0]);
    FprOperatingPoint { target_fpr, tpr: best.tpr, threshold: best.threshold }
}

/// Accuracy and confusion counts at a fixed cutoff.
pub fn accuracy(data: &LabeledScores, cutoff: f64) -> Result<(f64, Confusion)> {
    if data.is_empty() {
        return Err(Error::Empty("no scores to evaluate"));
    }
    let mut c = Confusion::default();
    for &(s, member) in &data.0 {
        match (s >= cutoff, member) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(((c.tp + c.tn) as f64 / c.total() as f64, c))
}

/// Default FPR budgets reported alongside AUC.
pub const DEFAULT_FPR_TARGETS: [f64; 3] = [0.001, 0.01, 0.1];

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub auc: f64,
    pub tpr_at_fpr: Vec<FprOperatingPoint>,
    pub acc: Option<f64>,
    pub confusion: Option<Confusion>,
    pub roc_points: Vec<RocPoint>,
    pub n_members: usize,
    pub n_non_members: usize,
}

impl EvalReport {
    /// Full report; accuracy is included when a cutoff is given (probability
    /// scores use 0.5).
    pub fn evaluate(data: &LabeledScores, fpr_targets: &[f64], cutoff: Option<f64>) -> Result<Self> {
        let (n_members, n_non_members) = data.require_both()?;
        let roc_points = roc_curve(data)?;
        let tpr_at_fpr = fpr_targets.iter().map(|&t| operating_point(&roc_points, t)).collect();
        let (acc, confusion) = match cutoff {
            Some(c) => {
                let (a, conf) = accuracy(data, c)?;
                (Some(a), Some(conf))
            }
            None => (None, None),
        };
        Ok(Self { auc: auc(data)?, tpr_at_fpr, acc, confusion, roc_points, n_members, n_non_members })
    }

    /// TPR at the given budget, if that budget was requested.
    pub fn tpr_at(&self, target_fpr: f64) -> Option<f64> {
        self.tpr_at_fpr
            .iter()
            .find(|p| (p.target_fpr - target_fpr).abs() < 1e-12)
            .map(|p| p.tpr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn ls(members: &[f64], non_members: &[f64]) -> LabeledScores {
        LabeledScores::from_parts(members, non_members)
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&ls(&[0.9, 0.8], &[0.1, 0.2])).unwrap(), 1.0);
        assert_eq!(auc(&ls(&[0.5, 0.5], &[0.5, 0.5, 0.5])).unwrap(), 0.5);
        assert_eq!(auc(&ls(&[0.8, 0.3], &[0.5, 0.1])).unwrap(), 0.75);
        assert_eq!(
            auc(&ls(&[0.8], &[])),
            Err(Error::SingleClass { members: 1, non_members: 0 })
        );
    }

    #[test]
    fn roc_four_point_example() {
        let roc = roc_curve(&ls(&[0.8, 0.3], &[0.5, 0.1])).unwrap();
        let pts: Vec<(f64, f64)> = roc.iter().map(|p| (p.fpr, p.tpr)).collect();
        assert_eq!(pts, vec![(0.0, 0.0), (0.0, 0.5), (0.5, 0.5), (0.5, 1.0), (1.0, 1.0)]);
        let th: Vec<f64> = roc.iter().skip(1).map(|p| p.threshold).collect();
        assert_eq!(th, vec![0.8, 0.5, 0.3, 0.1]);
        assert!(roc[0].threshold.is_infinite());
        assert_eq!(trapezoid_area(&roc), 0.75);
    }

    #[test]
    fn roc_perfect_separation_passes_corner() {
        let roc = roc_curve(&ls(&[0.9, 0.8], &[0.1, 0.2])).unwrap();
        assert!(roc.iter().any(|p| p.fpr == 0.0 && p.tpr == 1.0));
    }

    #[test]
    fn tpr_at_fpr_examples() {
        let data = ls(&[0.9, 0.7, 0.4], &[0.8, 0.2, 0.1]);
        let p = tpr_at_fpr(&data, 0.0).unwrap();
        assert_eq!(p.tpr, 1.0 / 3.0);
        assert!(p.threshold > 0.8);

        assert_eq!(tpr_at_fpr(&ls(&[0.9, 0.8], &[0.1, 0.2]), 0.01).unwrap().tpr, 1.0);

        // Members all below 100 non-members: the 1% budget admits only the
        // single highest non-member, still above every member.
        let nm: Vec<f64> = (0..100).map(|i| 1.0 + i as f64).collect();
        let p = tpr_at_fpr(&ls(&[0.1, 0.5], &nm), 0.01).unwrap();
        assert_eq!(p.tpr, 0.0);
    }

    #[test]
    fn accuracy_examples() {
        let (acc, c) = accuracy(&ls(&[0.9, 0.6], &[0.1, 0.4]), 0.5).unwrap();
        assert_eq!(acc, 1.0);
        assert_eq!(c, Confusion { tp: 2, fp: 0, tn: 2, fn_: 0 });

        let (acc, c) = accuracy(&ls(&[0.5, 0.5], &[0.5, 0.5]), 0.5).unwrap();
        assert_eq!(acc, 0.5);
        assert_eq!((c.tp, c.fp), (2, 2));
        assert_eq!(c.total(), 4);
    }

    #[test]
    fn report_collects_everything() {
        let r = EvalReport::evaluate(&ls(&[0.8, 0.3], &[0.5, 0.1]), &[0.0, 0.5], Some(0.4)).unwrap();
        assert_eq!(r.auc, 0.75);
        assert_eq!(r.tpr_at(0.0), Some(0.5));
        assert_eq!(r.tpr_at(0.5), Some(1.0));
        assert_eq!(r.acc, Some(0.5));
        assert_eq!((r.n_members, r.n_non_members), (2, 2));
    }
}
