//! Statistical behaviour of the simulator and the attacks on small runs.

use mmia_core::attacks::{csa_scores, wsa_attack, wsa_scores};
use mmia_core::audit::{assign_roles, run_attack, AttackRecipe, RoleConfig};
use mmia_core::metrics::auc;
use mmia_core::simulator::{generate_with, simulate, Generator, Pool, SimConfig};
use mmia_core::split::split_disjoint;
use mmia_core::{FeatureSet, LabeledScores, MembershipTag, TrainConfig, WsaConfig};

fn small(seed: u64) -> SimConfig {
    SimConfig {
        latent_dim: 8,
        input_dim_img: 32,
        input_dim_txt: 32,
        hidden_dim: 32,
        embed_dim: 16,
        n_train: 400,
        n_nonmember_in: 600,
        n_nonmember_shift: 800,
        epochs: 60,
        k_transforms: 2,
        seed,
        ..SimConfig::default()
    }
}

#[test]
fn shifted_pool_mean_matches_configured_offset() {
    let cfg = SimConfig { n_train: 4000, n_nonmember_shift: 4000, ..SimConfig::default() };
    let gen = Generator::new(&cfg);
    let offset = gen.image_offset();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!((norm(&offset) - cfg.shift_scale * (cfg.input_dim_img as f64).sqrt()).abs() < 1e-9);

    let column_mean = |pool: Pool| -> Vec<f64> {
        let pairs = generate_with(&gen, &cfg, pool);
        let mut acc = vec![0.0; cfg.input_dim_img];
        for p in &pairs {
            acc.iter_mut().zip(&p.x).for_each(|(a, x)| *a += x);
        }
        acc.iter().map(|a| a / pairs.len() as f64).collect()
    };
    let shifted = column_mean(Pool::NonMemberShift);
    let base = column_mean(Pool::Member);
    let diff: Vec<f64> = shifted.iter().zip(&base).zip(&offset).map(|((s, b), o)| s - b - o).collect();
    let rel = norm(&diff) / norm(&offset);
    assert!(rel < 0.1, "empirical offset deviates by {rel}");
}

#[test]
fn trained_model_separates_members_by_similarity() {
    for seed in 0..2 {
        let run = simulate(&small(seed)).unwrap();
        assert!(run.training.final_loss() < run.training.initial_loss);
        let cs = run.cs_summary().unwrap();
        assert!(cs.members > cs.nonmembers_in, "seed {seed}: {cs:?}");
        assert!(cs.members > cs.nonmembers_shift, "seed {seed}: {cs:?}");
    }
}

#[test]
fn untrained_model_gives_chance_level_csa() {
    let run = simulate(&SimConfig { epochs: 0, ..small(5) }).unwrap();
    assert_eq!(run.training.epoch_losses.len(), 0);
    let eval = FeatureSet::concat(&[&run.members, &run.nonmembers_in]).unwrap();
    let scores = csa_scores(&eval).unwrap();
    let a = auc(&LabeledScores::from_tagged(&scores, &eval).unwrap()).unwrap();
    assert!((a - 0.5).abs() <= 0.1, "untrained CSA AUC {a}");
}

#[test]
fn wsa_without_members_in_its_pool_has_no_signal() {
    let run = simulate(&small(6)).unwrap();
    let parts = split_disjoint(&run.nonmembers_in, &[0.5, 0.25, 0.25], 1).unwrap();
    let no_train = &parts[0];
    // The unlabeled pool is a relabelled copy of the known non-members.
    let copy = no_train
        .records()
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.id += 1 << 40;
            r
        })
        .collect();
    let all = no_train.with_records(copy).unwrap();
    let cfg = WsaConfig { seed: 6, ..Default::default() };
    let outcome = wsa_attack(no_train, &all, &cfg, &TrainConfig { seed: 6, ..Default::default() }, &[32, 8]).unwrap();
    assert_eq!(outcome.mislabel_ratio, Some(1.0));

    // Two halves of one non-member population, one of them labelled member.
    let eval = FeatureSet::concat(&[&parts[1].retagged(MembershipTag::Member), &parts[2]]).unwrap();
    let scores = wsa_scores(&outcome.net, &eval).unwrap();
    let a = auc(&LabeledScores::from_tagged(&scores, &eval).unwrap()).unwrap();
    assert!((a - 0.5).abs() <= 0.1, "WSA AUC without signal {a}");
}

#[test]
fn attacks_beat_chance_on_a_small_target() {
    let run = simulate(&small(7)).unwrap();
    let roles = assign_roles(&run.members, &run.nonmembers_shift, &RoleConfig { seed: 7, ..Default::default() }).unwrap();
    let csa = run_attack(&AttackRecipe::Csa, &roles).unwrap().report.auc;
    let aea = run_attack(&AttackRecipe::Aea, &roles).unwrap().report.auc;
    assert!(csa > 0.55 && aea > 0.55, "csa {csa}, aea {aea}");
}

#[test]
fn roles_are_disjoint_and_sized() {
    let run = simulate(&SimConfig { epochs: 1, ..small(8) }).unwrap();
    let roles = assign_roles(&run.members, &run.nonmembers_shift, &RoleConfig { seed: 8, ..Default::default() }).unwrap();
    assert_eq!(roles.no_train.len(), 400);
    assert_eq!(roles.all.len(), 200 + 200);
    assert_eq!(roles.eval.len(), 200 + 200);
    let mut ids: Vec<u64> = roles.no_train.ids().chain(roles.all.ids()).chain(roles.eval.ids()).collect();
    let n = ids.len();
    ids.sort_unstable();
    ids.dedup();
    assert_eq!(ids.len(), n);
    assert!(roles.no_train.records().iter().all(|r| r.tag == MembershipTag::NonMember));

    let sized = RoleConfig { seed: 8, nonmember_train_size: Some(50), ..Default::default() };
    assert_eq!(assign_roles(&run.members, &run.nonmembers_shift, &sized).unwrap().no_train.len(), 50);
    let too_many = RoleConfig { nonmember_train_size: Some(401), ..sized };
    assert!(assign_roles(&run.members, &run.nonmembers_shift, &too_many).is_err());
}
