//! End-to-end evaluation protocol shared by the CLI, sweeps and tests.
//!
//! Ground-truth members and non-members are split into three id-disjoint
//! roles:
//!
//! * `no_train`: known non-members handed to WSA,
//! * `all`: the unlabeled pool WSA draws pseudo-members from (members and
//!   non-members mixed),
//! * `eval`: the tagged evaluation set every attack is scored on.
//!
//! No record used to build an attack dataset is ever evaluated.

use alloc::vec::Vec;

use rand::seq::index;

use crate::attack_net::{TrainConfig, DEFAULT_HIDDEN};
use crate::attacks::{self, WsaConfig, WsaOutcome};
use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::metrics::{EvalReport, LabeledScores, DEFAULT_FPR_TARGETS};
use crate::num::{mix_seed, rng_from};
use crate::similarity::ScoreVector;
use crate::split::split_disjoint;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoleConfig {
    /// Share of members held out for evaluation; the rest join the pool.
    pub member_eval_fraction: f64,
    /// Share of non-members reserved as WSA's known non-members.
    pub nonmember_train_fraction: f64,
    /// Share of non-members placed in the unlabeled pool; the remainder is
    /// evaluated.
    pub nonmember_pool_fraction: f64,
    /// Use only this many of the reserved non-members (random subset).
    pub nonmember_train_size: Option<usize>,
    pub seed: u64,
}

impl Default for RoleConfig {
    fn default() -> Self {
        Self {
            member_eval_fraction: 0.5,
            nonmember_train_fraction: 0.5,
            nonmember_pool_fraction: 0.25,
            nonmember_train_size: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Roles {
    pub no_train: FeatureSet,
    pub all: FeatureSet,
    pub eval: FeatureSet,
}

pub fn assign_roles(members: &FeatureSet, nonmembers: &FeatureSet, cfg: &RoleConfig) -> Result<Roles> {
    let m = split_disjoint(members, &[1.0 - cfg.member_eval_fraction, cfg.member_eval_fraction], mix_seed(cfg.seed, 21))?;
    let eval_fraction = 1.0 - cfg.nonmember_train_fraction - cfg.nonmember_pool_fraction;
    let n = split_disjoint(
        nonmembers,
        &[cfg.nonmember_train_fraction, cfg.nonmember_pool_fraction, eval_fraction],
        mix_seed(cfg.seed, 22),
    )?;
    let no_train = match cfg.nonmember_train_size {
        Some(k) => sample_subset(&n[0], k, mix_seed(cfg.seed, 23))?,
        None => n[0].clone(),
    };
    let all = FeatureSet::concat(&[&m[0], &n[1]])?;
    let eval = FeatureSet::concat(&[&m[1], &n[2]])?;
    Ok(Roles { no_train, all, eval })
}

/// `k` records chosen uniformly without replacement, in input order.
pub fn sample_subset(set: &FeatureSet, k: usize, seed: u64) -> Result<FeatureSet> {
    if k > set.len() {
        return Err(Error::Config(alloc::format!("requested {k} records from a set of {}", set.len())));
    }
    let mut picked = index::sample(&mut rng_from(seed), set.len(), k).into_vec();
    picked.sort_unstable();
    set.with_records(picked.into_iter().map(|i| set.records()[i].clone()).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct WsaRecipe {
    pub wsa: WsaConfig,
    pub train: TrainConfig,
    pub hidden: Vec<usize>,
}

impl Default for WsaRecipe {
    fn default() -> Self {
        Self { wsa: WsaConfig::default(), train: TrainConfig::default(), hidden: DEFAULT_HIDDEN.to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AttackRecipe {
    Csa,
    Aea,
    Wsa(WsaRecipe),
}

impl AttackRecipe {
    pub fn name(&self) -> &'static str {
        match self {
            AttackRecipe::Csa => "csa",
            AttackRecipe::Aea => "aea",
            AttackRecipe::Wsa(_) => "wsa",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackRun {
    pub scores: ScoreVector,
    pub report: EvalReport,
    pub wsa: Option<WsaOutcome>,
}

/// Runs one attack and scores it on `roles.eval`.
pub fn run_attack(recipe: &AttackRecipe, roles: &Roles) -> Result<AttackRun> {
    let (scores, wsa, cutoff) = match recipe {
        AttackRecipe::Csa => (attacks::csa_scores(&roles.eval)?, None, None),
        AttackRecipe::Aea => (attacks::aea_scores(&roles.eval)?, None, None),
        AttackRecipe::Wsa(r) => {
            let outcome = attacks::wsa_attack(&roles.no_train, &roles.all, &r.wsa, &r.train, &r.hidden)?;
            (attacks::wsa_scores(&outcome.net, &roles.eval)?, Some(outcome), Some(0.5))
        }
    };
    let labeled = LabeledScores::from_tagged(&scores, &roles.eval)?;
    let report = EvalReport::evaluate(&labeled, &DEFAULT_FPR_TARGETS, cutoff)?;
    Ok(AttackRun { scores, report, wsa })
}

/// Scores an already-trained WSA network on the evaluation set.
pub fn evaluate_scores(scores: &ScoreVector, eval: &FeatureSet, cutoff: Option<f64>) -> Result<EvalReport> {
    let labeled = LabeledScores::from_tagged(scores, eval)?;
    EvalReport::evaluate(&labeled, &DEFAULT_FPR_TARGETS, cutoff)
}
