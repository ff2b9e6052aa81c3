//! Membership-inference audit primitives for two-tower (image/text) embedding
//! models.
//!
//! Everything in this crate is pure computation over in-memory feature sets:
//! cosine-similarity signals, the three attack strategies (cosine threshold,
//! augmentation gap, weakly supervised classifier), evaluation metrics,
//! feature-noise defenses and a small contrastive target-model simulator.
//! File IO, the CLI and text ingestion live in the `mmia` crate.
#![no_std]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod attack_net;
pub mod attacks;
pub mod audit;
pub mod defenses;
mod error;
pub mod features;
pub mod metrics;
pub mod miaf;
pub(crate) mod num;
pub mod similarity;
pub mod simulator;
pub mod split;

pub use attack_net::{AttackNet, TrainConfig};
pub use attacks::{AttackExample, NonMemberStats, PseudoStrategy, WsaConfig};
pub use error::{Error, Result};
pub use features::{EmbeddingVec, FeatureRecord, FeatureSet, MembershipTag, TargetModel};
pub use metrics::{EvalReport, LabeledScores};
pub use similarity::ScoreVector;
