mod common;

use common::{arb_set, patterned_set};
use mmia::io::{self, MiafReader};
use mmia::Error;
use mmia_core::miaf::{self, DecodeError, HEADER_LEN};
use mmia_core::FeatureSet;
use proptest::prelude::*;

#[test]
fn write_then_read_restores_set_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("set.miaf");
    let set = patterned_set(7, 4, 3, 2)
        .with_meta("dataset", "toy")
        .with_meta("model", "none")
        .with_meta("created_utc", "2024-01-01T00:00:00Z")
        .with_meta("note", "kept under extra");
    io::write_feature_set(&set, &path).unwrap();

    let back = io::read_feature_set(&path).unwrap();
    assert_eq!(back, set);
    let side = io::read_sidecar(&path).unwrap().unwrap();
    assert_eq!(side.dataset, "toy");
    assert_eq!(side.transforms, vec!["t0", "t1"]);
    assert_eq!(side.extra.get("note").map(String::as_str), Some("kept under extra"));

    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(io::sidecar_path(&path)).unwrap()).unwrap();
    for key in ["dataset", "model", "transforms", "created_utc"] {
        assert!(json.get(key).is_some(), "sidecar lacks {key}");
    }
}

#[test]
fn missing_sidecar_gives_placeholder_names() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bare.miaf");
    let set = patterned_set(3, 2, 2, 2);
    std::fs::write(&path, miaf::encode(&set)).unwrap();
    let back = io::read_feature_set(&path).unwrap();
    assert_eq!(back.records(), set.records());
    assert_eq!(back.k_transforms(), 2);
    assert!(back.meta().is_empty());
}

#[test]
fn sidecar_with_wrong_channel_count_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("set.miaf");
    io::write_feature_set(&patterned_set(3, 2, 2, 2), &path).unwrap();
    let side = io::sidecar_path(&path);
    let text = std::fs::read_to_string(&side).unwrap().replace("\"t1\"", "\"t1\", \"t2\"");
    std::fs::write(&side, text).unwrap();
    assert!(matches!(io::read_feature_set(&path), Err(Error::Sidecar { .. })));
}

#[test]
fn created_utc_follows_source_date_epoch() {
    // Only this test in this binary touches the variable.
    std::env::set_var("SOURCE_DATE_EPOCH", "86400");
    let stamp = io::timestamp_now().unwrap();
    std::env::remove_var("SOURCE_DATE_EPOCH");
    assert_eq!(stamp, "1970-01-02T00:00:00Z");
}

#[test]
fn streaming_reader_matches_full_decode() {
    let set = patterned_set(25, 5, 3, 3);
    let bytes = miaf::encode(&set);
    let reader = MiafReader::new(bytes.as_slice()).unwrap();
    assert_eq!(reader.header().n_records, 25);
    let records: Vec<_> = reader.collect::<Result<_, _>>().unwrap();
    assert_eq!(records, set.records());
}

#[test]
fn streaming_reader_reports_truncation_index() {
    let set = patterned_set(10, 4, 4, 1);
    let bytes = miaf::encode(&set);
    let record_len = (bytes.len() - HEADER_LEN) / 10;
    let cut = &bytes[..HEADER_LEN + 6 * record_len + 3];
    let results: Vec<_> = MiafReader::new(cut).unwrap().collect();
    assert_eq!(results.len(), 7);
    assert_eq!(results[6], Err(DecodeError::Truncated { index: 6 }));
}

#[test]
fn streaming_reader_reports_trailing_bytes_and_duplicates() {
    let set = patterned_set(3, 2, 2, 0);
    let mut bytes = miaf::encode(&set);
    bytes.extend_from_slice(&[0, 0]);
    let last = MiafReader::new(bytes.as_slice()).unwrap().last().unwrap();
    assert_eq!(last, Err(DecodeError::TrailingBytes(2)));

    let mut dup = miaf::encode(&set);
    let record_len = (dup.len() - HEADER_LEN) / 3;
    let first_id: [u8; 8] = dup[HEADER_LEN..HEADER_LEN + 8].try_into().unwrap();
    dup[HEADER_LEN + 2 * record_len..HEADER_LEN + 2 * record_len + 8].copy_from_slice(&first_id);
    let last = MiafReader::new(dup.as_slice()).unwrap().last().unwrap();
    assert_eq!(last, Err(DecodeError::DuplicateId { index: 2, id: 0 }));
}

#[test]
fn inspect_summarizes_without_full_load() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("set.miaf");
    let set = patterned_set(9, 3, 3, 1).with_meta("created_utc", "x");
    io::write_feature_set(&set, &path).unwrap();
    let info = io::inspect(&path).unwrap();
    assert_eq!(info.header.n_records, 9);
    assert_eq!(info.header.d_img, 3);
    assert_eq!(info.tags, [0, 5, 4]);
    let cs = mmia_core::similarity::batch_cs(&set).unwrap().scores;
    let stats = info.cs.unwrap();
    assert_eq!(stats.min, cs.iter().copied().fold(f64::INFINITY, f64::min));
    assert_eq!(stats.max, cs.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    assert!((stats.mean - cs.iter().sum::<f64>() / 9.0).abs() < 1e-12);
    let text = info.render();
    assert!(text.contains("records: 9\n"));
    assert!(text.contains("tag.member: 5\n"));
    assert!(text.contains("transforms: t0\n"));
}

#[test]
fn inspect_empty_set() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.miaf");
    io::write_feature_set(&FeatureSet::empty(2, 2, vec![]).unwrap(), &path).unwrap();
    let info = io::inspect(&path).unwrap();
    assert_eq!(info.header.n_records, 0);
    assert_eq!(info.tags, [0, 0, 0]);
    assert_eq!(info.cs, None);
    assert!(!info.render().contains("tag."));
}

#[test]
fn inspect_truncated_file_fails_with_index() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cut.miaf");
    let bytes = miaf::encode(&patterned_set(4, 2, 2, 0));
    std::fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
    let err = io::inspect(&path).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert!(err.to_string().contains("record 3"), "{err}");
}

#[test]
fn read_missing_file_is_io_error() {
    let err = io::read_feature_set(std::path::Path::new("/nonexistent/x.miaf")).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
    assert_eq!(err.exit_code(), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn file_round_trip_is_bit_exact(set in arb_set()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.miaf");
        let set = set.with_meta("created_utc", "fixed");
        io::write_feature_set(&set, &path).unwrap();
        let first = std::fs::read(&path).unwrap();
        let back = io::read_feature_set(&path).unwrap();
        prop_assert_eq!(&back, &set);
        io::write_feature_set(&back, &path).unwrap();
        prop_assert_eq!(std::fs::read(&path).unwrap(), first);
    }
}
