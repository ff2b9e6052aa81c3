#![allow(dead_code)]

use mmia_core::{EmbeddingVec, FeatureRecord, FeatureSet, MembershipTag};
use proptest::prelude::*;

pub fn emb(values: &[f32]) -> EmbeddingVec {
    EmbeddingVec::new(values.to_vec()).unwrap()
}

/// A small set with a deterministic pattern of values and alternating tags.
pub fn patterned_set(n: u64, d_img: usize, d_txt: usize, k: usize) -> FeatureSet {
    let v = |i: u64, j: usize, salt: f32| ((i as f32 + 1.0) * (j as f32 + salt)).sin();
    let records = (0..n)
        .map(|i| {
            let tag = if i % 2 == 0 { MembershipTag::Member } else { MembershipTag::NonMember };
            let img: Vec<f32> = (0..d_img).map(|j| v(i, j, 0.3)).collect();
            let txt: Vec<f32> = (0..d_txt).map(|j| v(i, j, 0.7)).collect();
            let transformed = (0..k).map(|c| emb(&(0..d_img).map(|j| v(i, j, 1.1 + c as f32)).collect::<Vec<_>>())).collect();
            FeatureRecord::new(i, tag, emb(&img), emb(&txt)).with_transformed(transformed)
        })
        .collect();
    let names = (0..k).map(|c| format!("t{c}")).collect();
    FeatureSet::new(d_img, d_txt, names, records).unwrap()
}

fn finite() -> impl Strategy<Value = f32> {
    prop_oneof![
        -1.0e3f32..1.0e3,
        Just(0.0f32),
        Just(-0.0f32),
        Just(f32::MIN_POSITIVE),
        Just(f32::MAX),
        Just(f32::MIN),
        Just(1.0e-40f32),
    ]
}

fn tag() -> impl Strategy<Value = MembershipTag> {
    prop_oneof![Just(MembershipTag::Unknown), Just(MembershipTag::Member), Just(MembershipTag::NonMember)]
}

/// Arbitrary valid feature sets: shapes up to 6x6 with up to 3 channels,
/// up to 12 records with distinct random ids.
pub fn arb_set() -> impl Strategy<Value = FeatureSet> {
    (1usize..6, 1usize..6, 0usize..4, 0usize..12).prop_flat_map(|(d_img, d_txt, k, n)| {
        let record = (
            tag(),
            prop::collection::vec(finite(), d_img),
            prop::collection::vec(finite(), d_txt),
            prop::collection::vec(prop::collection::vec(finite(), d_img), k),
        );
        (prop::collection::btree_set(any::<u64>(), n), prop::collection::vec(record, n), prop::collection::vec("[a-z]{1,8}", k))
            .prop_map(move |(ids, recs, names)| {
                let records = ids
                    .into_iter()
                    .zip(recs)
                    .map(|(id, (tag, img, txt, tr))| {
                        FeatureRecord::new(id, tag, emb(&img), emb(&txt)).with_transformed(tr.iter().map(|t| emb(t)).collect())
                    })
                    .collect();
                FeatureSet::new(d_img, d_txt, names, records).unwrap()
            })
    })
}
