//! The three membership attacks.
//!
//! * CSA scores a pair by the cosine similarity of its image and text
//!   embeddings.
//! * AEA adds the similarity lost under each input transformation.
//! * WSA fits the cosine-similarity distribution of known non-members,
//!   pseudo-labels unusually well-aligned pairs from an unlabeled pool as
//!   members, and trains a classifier on the resulting noisy labels.
//!
//! All scores follow one convention: higher means more member-like.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};

use crate::attack_net::{self, AttackNet, TrainConfig, TrainOutcome};
use crate::error::{Error, Result};
use crate::features::{FeatureRecord, FeatureSet, MembershipTag};
use crate::num::{mix_seed, rng_from};
use crate::similarity::{aea_aggregate, batch_cs, score_range, ScoreVector};

/// Gaussian summary of non-member cosine similarities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonMemberStats {
    pub mu_no: f64,
    /// Sample standard deviation (n − 1 denominator).
    pub sigma_no: f64,
    pub n: usize,
}

impl NonMemberStats {
    /// `mu_no + lambda · sigma_no`.
    pub fn threshold(&self, lambda: f64) -> f64 {
        self.mu_no + lambda * self.sigma_no
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PseudoStrategy {
    /// Keep pool records with CS ≥ mu_no + λ·sigma_no.
    #[default]
    Threshold,
    /// Label a seeded uniform sample of the pool as members (baseline).
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WsaConfig {
    pub lambda: f64,
    pub pseudo_strategy: PseudoStrategy,
    pub random_count: Option<usize>,
    /// Down-sample the larger class of the attack dataset.
    pub balance: bool,
    pub seed: u64,
}

impl Default for WsaConfig {
    fn default() -> Self {
        Self { lambda: 0.5, pseudo_strategy: PseudoStrategy::Threshold, random_count: None, balance: true, seed: 0 }
    }
}

/// One labeled row of the attack dataset: L2-normalized image features
/// followed by L2-normalized text features.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackExample {
    pub features: Vec<f64>,
    /// 1 for a (pseudo-)member, 0 for a known non-member.
    pub label: u8,
}

pub fn csa_scores(set: &FeatureSet) -> Result<ScoreVector> {
    if set.is_empty() {
        return Err(Error::Empty("no records to score"));
    }
    batch_cs(set)
}

pub fn aea_scores(set: &FeatureSet) -> Result<ScoreVector> {
    if set.k_transforms() == 0 {
        return Err(Error::NoTransforms);
    }
    score_range(set, 0..set.len(), aea_aggregate)
}

pub fn fit_nonmember_stats(cs_no: &ScoreVector) -> Result<NonMemberStats> {
    let n = cs_no.len();
    if n < 2 {
        return Err(Error::TooFewScores { required: 2, actual: n });
    }
    let mean = cs_no.scores.iter().sum::<f64>() / n as f64;
    let var = cs_no.scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1) as f64;
    Ok(NonMemberStats { mu_no: mean, sigma_no: libm::sqrt(var), n })
}

/// Picks the pseudo-member subset of `all`; ids and order are preserved.
pub fn select_pseudo_members(all: &FeatureSet, stats: &NonMemberStats, cfg: &WsaConfig) -> Result<FeatureSet> {
    if all.is_empty() {
        return Err(Error::Empty("unlabeled pool is empty"));
    }
    match cfg.pseudo_strategy {
        PseudoStrategy::Threshold => {
            let cs = batch_cs(all)?;
            select_by_threshold(all, &cs, stats.threshold(cfg.lambda))
        }
        PseudoStrategy::Random => {
            let requested = cfg
                .random_count
                .ok_or_else(|| Error::Config("random strategy requires random_count".into()))?;
            if requested == 0 {
                return Err(Error::Config("random_count must be positive".into()));
            }
            if requested > all.len() {
                return Err(Error::RandomCountTooLarge { requested, available: all.len() });
            }
            let mut picked = index::sample(&mut rng_from(mix_seed(cfg.seed, 11)), all.len(), requested).into_vec();
            picked.sort_unstable();
            all.with_records(picked.into_iter().map(|i| all.records()[i].clone()).collect())
        }
    }
}

/// Threshold selection on precomputed similarities aligned with `all`.
pub fn select_by_threshold(all: &FeatureSet, cs: &ScoreVector, threshold: f64) -> Result<FeatureSet> {
    if cs.len() != all.len() {
        return Err(Error::DimensionMismatch { expected: all.len(), actual: cs.len() });
    }
    let keep: Vec<bool> = cs.scores.iter().map(|&s| s >= threshold).collect();
    if !keep.iter().any(|&k| k) {
        let max_cs = cs.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        return Err(Error::EmptyPseudoMembers { threshold, max_cs });
    }
    let mut i = 0;
    Ok(all.filter(|_| {
        i += 1;
        keep[i - 1]
    }))
}

/// Fraction of a pseudo-member set whose ground-truth tag says non-member.
/// `None` if no record carries ground truth.
pub fn mislabel_ratio(pseudo: &FeatureSet) -> Option<f64> {
    let known: Vec<MembershipTag> =
        pseudo.records().iter().map(|r| r.tag).filter(|t| *t != MembershipTag::Unknown).collect();
    if known.is_empty() {
        return None;
    }
    let wrong = known.iter().filter(|t| **t == MembershipTag::NonMember).count();
    Some(wrong as f64 / known.len() as f64)
}

/// The classifier input for one record.
pub fn attack_features(record: &FeatureRecord) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(record.img.dim() + record.txt.dim());
    for emb in [&record.img, &record.txt] {
        let start = out.len();
        out.extend(emb.values().iter().map(|&v| f64::from(v)));
        let norm = crate::num::norm(&out[start..]);
        if norm == 0.0 {
            return Err(Error::ZeroNorm.for_record(record.id));
        }
        out[start..].iter_mut().for_each(|v| *v /= norm);
    }
    Ok(out)
}

/// Labels every record of `no` with 0 and every record of `pseudo` with 1,
/// non-members first.
pub fn build_attack_dataset(no: &FeatureSet, pseudo: &FeatureSet, cfg: &WsaConfig) -> Result<Vec<AttackExample>> {
    let no_ids: BTreeSet<u64> = no.ids().collect();
    let overlap: Vec<u64> = pseudo.ids().filter(|id| no_ids.contains(id)).collect();
    if !overlap.is_empty() {
        return Err(Error::OverlappingIds(overlap));
    }
    if no.d_img() != pseudo.d_img() || no.d_txt() != pseudo.d_txt() {
        return Err(Error::Validation("non-member and pseudo-member sets differ in dimensions".into()));
    }

    let mut neg: Vec<&FeatureRecord> = no.records().iter().collect();
    let mut pos: Vec<&FeatureRecord> = pseudo.records().iter().collect();
    if cfg.balance {
        let target = neg.len().min(pos.len());
        let mut rng = rng_from(mix_seed(cfg.seed, 12));
        for class in [&mut neg, &mut pos] {
            if class.len() > target {
                let mut keep = index::sample(&mut rng, class.len(), target).into_vec();
                keep.sort_unstable();
                *class = keep.into_iter().map(|i| class[i]).collect();
            }
        }
    }

    let mut out = Vec::with_capacity(neg.len() + pos.len());
    for (records, label) in [(neg, 0u8), (pos, 1u8)] {
        for r in records {
            out.push(AttackExample { features: attack_features(r)?, label });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WsaOutcome {
    pub net: AttackNet,
    pub stats: NonMemberStats,
    pub pseudo_count: usize,
    /// Mislabel ratio of the pseudo set when the pool carries ground truth.
    pub mislabel_ratio: Option<f64>,
    pub training: TrainOutcome,
}

/// Non-member CS → Gaussian fit → pseudo-members → attack dataset → trained
/// classifier.
pub fn wsa_attack(
    no_train: &FeatureSet,
    all: &FeatureSet,
    cfg: &WsaConfig,
    train_cfg: &TrainConfig,
    hidden: &[usize],
) -> Result<WsaOutcome> {
    if no_train.len() < 2 {
        return Err(Error::TooFewScores { required: 2, actual: no_train.len() });
    }
    let stats = fit_nonmember_stats(&batch_cs(no_train)?)?;
    let pseudo = select_pseudo_members(all, &stats, cfg)?;
    let mut examples = build_attack_dataset(no_train, &pseudo, cfg)?;
    // The classifier sees examples in a seeded order rather than grouped by class.
    examples.shuffle(&mut rng_from(mix_seed(cfg.seed, 13)));
    let training = attack_net::train(&examples, train_cfg, hidden)?;
    Ok(WsaOutcome {
        net: training.net.clone(),
        stats,
        pseudo_count: pseudo.len(),
        mislabel_ratio: mislabel_ratio(&pseudo),
        training,
    })
}

/// Member probabilities from a trained attack network.
pub fn wsa_scores(net: &AttackNet, set: &FeatureSet) -> Result<ScoreVector> {
    let d_in = set.d_img() + set.d_txt();
    if net.input_dim() != d_in {
        return Err(Error::DimensionMismatch { expected: net.input_dim(), actual: d_in });
    }
    score_range(set, 0..set.len(), |r| net.forward(&attack_features(r)?))
}
