//! Output-perturbation defense: Gaussian noise on released embeddings.
//!
//! Training-time mitigations (L2 weight decay, input augmentation) are
//! [`SimConfig`](crate::simulator::SimConfig) knobs rather than functions here.

use alloc::string::String;
use alloc::vec::Vec;

use crate::audit::{self, AttackRecipe, RoleConfig};
use crate::error::Result;
use crate::features::{EmbeddingVec, FeatureRecord, FeatureSet};
use crate::metrics::EvalReport;
use crate::num::{gaussian, mix_seed, rng_from};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbConfig {
    /// Standard deviation of the zero-mean noise added to every component.
    pub sigma: f64,
    pub seed: u64,
    /// Rescale every vector to unit norm after adding noise.
    pub renormalize: bool,
}

impl PerturbConfig {
    pub fn new(sigma: f64, seed: u64) -> Self {
        Self { sigma, seed, renormalize: false }
    }
}

/// Adds independent N(0, sigma²) noise to every image, text and transformed
/// component. Noise for a record depends only on `(seed, record id)`.
pub fn perturb_features(set: &FeatureSet, cfg: &PerturbConfig) -> FeatureSet {
    if cfg.sigma == 0.0 && !cfg.renormalize {
        return set.clone();
    }
    let records: Vec<FeatureRecord> = set
        .records()
        .iter()
        .map(|r| {
            let mut rng = rng_from(mix_seed(cfg.seed, r.id));
            let mut noisy = |e: &EmbeddingVec| -> EmbeddingVec {
                let mut v: Vec<f64> = e.values().iter().map(|&x| f64::from(x) + cfg.sigma * gaussian(&mut rng)).collect();
                if cfg.renormalize {
                    let n = crate::num::norm(&v);
                    if n > 0.0 {
                        v.iter_mut().for_each(|x| *x /= n);
                    }
                }
                EmbeddingVec::from_f64(&v).expect("finite noise")
            };
            let img = noisy(&r.img);
            let txt = noisy(&r.txt);
            let transformed = r.transformed.iter().map(&mut noisy).collect();
            FeatureRecord { id: r.id, tag: r.tag, img, txt, transformed }
        })
        .collect();
    set.with_records(records).expect("perturbation preserves shape")
}

/// One cell of a defense sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub sigma: f64,
    pub attack: &'static str,
    pub outcome: core::result::Result<EvalReport, String>,
}

/// Evaluates `recipe` on features released with each noise level. Every
/// attack computation, including WSA training, sees only perturbed features.
/// A failing cell is recorded and the sweep continues.
pub fn defense_sweep(
    members: &FeatureSet,
    nonmembers: &FeatureSet,
    sigmas: &[f64],
    recipe: &AttackRecipe,
    roles: &RoleConfig,
    noise_seed: u64,
) -> Vec<SweepCell> {
    sigmas
        .iter()
        .enumerate()
        .map(|(i, &sigma)| {
            let cfg = PerturbConfig::new(sigma, mix_seed(noise_seed, i as u64));
            let outcome = perturbed_run(members, nonmembers, &cfg, recipe, roles).map_err(|e| alloc::format!("{e}"));
            SweepCell { sigma, attack: recipe.name(), outcome }
        })
        .collect()
}

fn perturbed_run(
    members: &FeatureSet,
    nonmembers: &FeatureSet,
    cfg: &PerturbConfig,
    recipe: &AttackRecipe,
    roles: &RoleConfig,
) -> Result<EvalReport> {
    let m = perturb_features(members, cfg);
    let n = perturb_features(nonmembers, cfg);
    let split = audit::assign_roles(&m, &n, roles)?;
    Ok(audit::run_attack(recipe, &split)?.report)
}
