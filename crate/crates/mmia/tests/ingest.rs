mod common;

use std::collections::HashSet;
use std::path::Path;

use common::patterned_set;
use mmia::ingest::*;
use mmia_core::FeatureSet;
use proptest::prelude::*;

fn entry(id: u64, image: &str, caption: &str) -> ManifestEntry {
    ManifestEntry { id, image_ref: image.into(), caption: caption.into() }
}

#[test]
fn normalize_examples() {
    assert_eq!(normalize_caption("The Cat! 123"), "cat");
    assert_eq!(normalize_caption(""), "");
    assert_eq!(normalize_caption("  A   dog\tand\n a  CAT  "), "dog cat");
    assert_eq!(normalize_caption("A dog 7"), normalize_caption("a DOG"));
    assert_eq!(normalize_caption("«Hello», world…"), "hello world");
    // Non-ASCII decimal digits are removed, other numerals are kept.
    assert_eq!(normalize_caption("room ٣ Ⅻ"), "room ⅻ");
}

#[test]
fn normalization_step_order_is_fixed() {
    // Lowercasing precedes stopword removal.
    assert_eq!(normalize_caption("THE end"), "end");
    // Digit removal precedes stopword removal: "the7" becomes a stopword.
    assert_eq!(normalize_caption("the7 end"), "end");
    // Punctuation removal precedes stopword removal and can join tokens.
    assert_eq!(normalize_caption("t-h-e end"), "end");
    assert_eq!(normalize_caption("a-b"), "ab");
    // Symbols are not punctuation.
    assert_eq!(normalize_caption("5 + 5 = ten"), "+ = ten");
}

#[test]
fn stopword_list_matches_docs() {
    assert_eq!(STOPWORDS.len(), 50);
    assert_eq!(STOPWORDS.iter().collect::<HashSet<_>>().len(), 50);
    let docs = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../docs/stopwords.md")).unwrap();
    let block = docs.split("```").nth(1).unwrap();
    let listed: Vec<&str> = block.split_whitespace().collect();
    assert_eq!(listed, STOPWORDS);
}

#[test]
fn image_refs_fold_scheme_and_host_only() {
    assert_eq!(normalize_image_ref("  HTTPS://Example.COM/Path/IMG.jpg "), "https://example.com/Path/IMG.jpg");
    assert_eq!(normalize_image_ref("HTTP://Host.org?Q=1"), "http://host.org?Q=1");
    assert_eq!(normalize_image_ref("/Data/Img.PNG"), "/Data/Img.PNG");
}

#[test]
fn dedup_examples() {
    let a = vec![entry(1, "http://x.org/1.jpg", "A dog 7"), entry(2, "http://X.ORG/2.jpg", "unique"), entry(3, "p/3.jpg", "bird")];
    let b = vec![entry(10, "http://x.org/2.jpg", "a DOG"), entry(11, "q.jpg", "fish")];
    let out = dedup(&a, &b);
    assert_eq!(out.kept, vec![a[2].clone()]);
    assert_eq!(
        out.removed,
        vec![
            Removal { id: 1, reason: RemovalReason::Caption, matched_key: "dog".into() },
            Removal { id: 2, reason: RemovalReason::Url, matched_key: "http://x.org/2.jpg".into() },
        ]
    );

    let same = dedup(&a, &a);
    assert!(same.kept.is_empty());
    assert_eq!(same.removed.len(), 3);

    let disjoint = dedup(&a, &[entry(20, "z.jpg", "zebra")]);
    assert!(disjoint.removed.is_empty());
    assert_eq!(disjoint.kept, a);
}

#[test]
fn manifest_jsonl_round_trip_and_errors() {
    let entries = vec![entry(1, "a.jpg", "x \"quoted\""), entry(2, "b.jpg", "ünïcode")];
    let text = manifest_jsonl(&entries);
    assert_eq!(text.lines().count(), 2);
    assert_eq!(parse_manifest(&text, Path::new("m.jsonl")).unwrap(), entries);

    let with_blank = format!("\n{text}\n");
    assert_eq!(parse_manifest(&with_blank, Path::new("m.jsonl")).unwrap(), entries);

    let dup = format!("{text}{}\n", serde_json::to_string(&entries[0]).unwrap());
    match parse_manifest(&dup, Path::new("m.jsonl")) {
        Err(mmia::Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("expected a parse error, got {other:?}"),
    }
    match parse_manifest("{\"id\": 1}\n", Path::new("m.jsonl")) {
        Err(mmia::Error::Parse { line, .. }) => assert_eq!(line, 1),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

fn with_ids(set: &FeatureSet, ids: &[u64]) -> FeatureSet {
    let records = set
        .records()
        .iter()
        .zip(ids)
        .map(|(r, &id)| {
            let mut r = r.clone();
            r.id = id;
            r
        })
        .collect();
    set.with_records(records).unwrap()
}

#[test]
fn assert_disjoint_examples() {
    let base = patterned_set(3, 2, 2, 0);
    let a = with_ids(&base, &[1, 2, 3]);
    let b = with_ids(&base, &[4, 5, 6]);
    let c = with_ids(&base, &[7, 8, 9]);
    assert_eq!(assert_disjoint(&[&a, &b, &c]), Ok(()));

    let d = with_ids(&base, &[42, 10, 11]);
    let e = with_ids(&base, &[12, 42, 13]);
    assert_eq!(assert_disjoint(&[&d, &e]), Err(vec![Collision { set_i: 0, set_j: 1, id: 42 }]));

    let f = with_ids(&base, &[42, 14, 15]);
    let got = assert_disjoint(&[&d, &e, &f]).unwrap_err();
    assert_eq!(
        got,
        vec![
            Collision { set_i: 0, set_j: 1, id: 42 },
            Collision { set_i: 0, set_j: 2, id: 42 },
            Collision { set_i: 1, set_j: 2, id: 42 },
        ]
    );
}

fn arb_caption() -> impl Strategy<Value = String> {
    let word = prop_oneof![
        prop::sample::select(STOPWORDS.to_vec()).prop_map(String::from),
        prop::sample::select(vec!["Dog", "cat", "BIRD", "tree", "Ünïcode", "ΣΑΣ", "x7", "!?", "…", "a-b", "٣"])
            .prop_map(String::from),
        "\\PC{0,6}",
    ];
    prop::collection::vec((word, prop::sample::select(vec![" ", "  ", "\t", "\n", ".", ""])), 0..6)
        .prop_map(|parts| parts.into_iter().map(|(w, sep)| w + sep).collect())
}

fn arb_manifest(id_base: u64) -> impl Strategy<Value = Vec<ManifestEntry>> {
    let url = prop::sample::select(vec![
        "http://a.org/1.jpg",
        "HTTP://A.org/1.jpg",
        "http://a.org/2.jpg",
        "https://B.net/x.png",
        "https://b.net/X.png",
        "local/path.jpg",
    ]);
    prop::collection::vec((url, arb_caption()), 0..12).prop_map(move |v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (u, c))| ManifestEntry { id: id_base + i as u64, image_ref: u.to_string(), caption: c })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn normalization_is_idempotent(s in "\\PC{0,40}") {
        let once = normalize_caption(&s);
        prop_assert_eq!(normalize_caption(&once), once.clone());
        prop_assert!(!once.contains("  "));
        prop_assert_eq!(once.trim(), once.as_str());
    }

    #[test]
    fn crafted_captions_are_idempotent(s in arb_caption()) {
        let once = normalize_caption(&s);
        prop_assert_eq!(normalize_caption(&once), once);
    }

    #[test]
    fn dedup_postconditions(a in arb_manifest(0), b in arb_manifest(1000)) {
        let out = dedup(&a, &b);
        prop_assert_eq!(out.kept.len() + out.removed.len(), a.len());
        let b_caps: HashSet<String> = b.iter().map(|e| normalize_caption(&e.caption)).collect();
        let b_urls: HashSet<String> = b.iter().map(|e| normalize_image_ref(&e.image_ref)).collect();
        for e in &out.kept {
            prop_assert!(!b_caps.contains(&normalize_caption(&e.caption)));
            prop_assert!(!b_urls.contains(&normalize_image_ref(&e.image_ref)));
        }
        for r in &out.removed {
            let key_set = match r.reason { RemovalReason::Caption => &b_caps, RemovalReason::Url => &b_urls };
            prop_assert!(key_set.contains(&r.matched_key));
        }
        let again = dedup(&out.kept, &b);
        prop_assert!(again.removed.is_empty());
        prop_assert_eq!(again.kept, out.kept);
    }
}
