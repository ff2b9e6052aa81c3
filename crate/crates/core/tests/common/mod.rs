#![allow(dead_code)]

use mmia_core::{EmbeddingVec, FeatureRecord, FeatureSet, MembershipTag};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f32> {
    (0..d).map(|_| rng.random_range(-1.0f32..1.0)).collect()
}

/// A set of `n` random records with alternating member / non-member tags.
pub fn random_set(n: usize, d_img: usize, d_txt: usize, k: usize, seed: u64) -> FeatureSet {
    let mut r = rng(seed);
    let records = (0..n)
        .map(|i| {
            let tag = if i % 2 == 0 { MembershipTag::Member } else { MembershipTag::NonMember };
            let img = EmbeddingVec::new(uniform_vec(&mut r, d_img)).unwrap();
            let txt = EmbeddingVec::new(uniform_vec(&mut r, d_txt)).unwrap();
            let transformed = (0..k).map(|_| EmbeddingVec::new(uniform_vec(&mut r, d_img)).unwrap()).collect();
            FeatureRecord::new(i as u64 * 3 + 1, tag, img, txt).with_transformed(transformed)
        })
        .collect();
    FeatureSet::new(d_img, d_txt, (0..k).map(|i| format!("t{i}")).collect(), records).unwrap()
}

fn arb_vec(d: usize) -> impl Strategy<Value = Vec<f32>> {
    prop::collection::vec(
        prop_oneof![-1e3f32..1e3f32, Just(0.0f32), Just(-0.0f32), Just(f32::MIN_POSITIVE), Just(f32::MAX)],
        d,
    )
}

/// Arbitrary valid feature sets, including empty ones and extreme floats.
pub fn arb_set() -> impl Strategy<Value = FeatureSet> {
    (1usize..6, 1usize..6, 0usize..4, 0usize..12).prop_flat_map(|(d_img, d_txt, k, n)| {
        let record = (any::<u64>(), 0u8..3, arb_vec(d_img), arb_vec(d_txt), prop::collection::vec(arb_vec(d_img), k));
        prop::collection::vec(record, n).prop_map(move |rows| {
            let mut seen = std::collections::HashSet::new();
            let records = rows
                .into_iter()
                .filter(|r| seen.insert(r.0))
                .map(|(id, tag, img, txt, tr)| {
                    FeatureRecord::new(
                        id,
                        MembershipTag::from_u8(tag).unwrap(),
                        EmbeddingVec::new(img).unwrap(),
                        EmbeddingVec::new(txt).unwrap(),
                    )
                    .with_transformed(tr.into_iter().map(|v| EmbeddingVec::new(v).unwrap()).collect())
                })
                .collect();
            FeatureSet::new(d_img, d_txt, (0..k).map(|i| format!("c{i}")).collect(), records).unwrap()
        })
    })
}
