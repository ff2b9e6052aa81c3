mod common;

use common::patterned_set;
use mmia::export::{self, SweepRow};
use mmia::report::{render_report, report_value, without_runtime};
use mmia::snapshot::{self, Snapshot, SnapshotError};
use mmia_core::attack_net::EpochLog;
use mmia_core::{AttackNet, EvalReport, LabeledScores, NonMemberStats, PseudoStrategy, ScoreVector, WsaConfig};

#[test]
fn scores_csv_round_trip() {
    let set = patterned_set(5, 2, 2, 0);
    let scores = ScoreVector::new(set.ids().collect(), vec![0.1, -0.25, 1.0 / 3.0, 1e-300, 7.0]).unwrap();
    let text = export::scores_csv(&scores, Some(&set)).unwrap();
    assert!(text.starts_with("id,score,tag\n0,0.1,member\n1,-0.25,nonmember\n"));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    std::fs::write(&path, &text).unwrap();
    let table = export::read_scores_csv(&path).unwrap();
    assert_eq!(table.scores, scores);
    assert_eq!(table.tags.unwrap(), set.records().iter().map(|r| r.tag).collect::<Vec<_>>());

    let plain = export::scores_csv(&scores, None).unwrap();
    assert!(plain.starts_with("id,score\n"));
    std::fs::write(&path, &plain).unwrap();
    assert_eq!(export::read_scores_csv(&path).unwrap().tags, None);
}

#[test]
fn scores_csv_rejects_misaligned_tags() {
    let set = patterned_set(3, 2, 2, 0);
    let scores = ScoreVector::new(vec![0, 2, 1], vec![0.0; 3]).unwrap();
    assert!(export::scores_csv(&scores, Some(&set)).is_err());
}

#[test]
fn bad_score_rows_report_their_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "id,score\n1,0.5\n2,abc\n").unwrap();
    match export::read_scores_csv(&path) {
        Err(mmia::Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn sweep_csv_layout() {
    let row = |value, attack: &str, auc| SweepRow {
        value,
        attack: attack.into(),
        auc: Some(auc),
        tpr_at_1pct_fpr: Some(0.5),
        acc: None,
        pseudo_count: None,
        error: None,
    };
    let text = export::sweep_csv("sigma", &[row(0.0, "csa", 0.7), row(1.0, "csa", 0.5)]);
    assert_eq!(text, "sigma,attack,auc,tpr_at_1pct_fpr,acc\n0,csa,0.7,0.5,\n1,csa,0.5,0.5,\n");

    let mut failed = row(1.5, "wsa", 0.0);
    failed.auc = None;
    failed.tpr_at_1pct_fpr = None;
    failed.error = Some("no pseudo-members".into());
    let mut ok = row(0.5, "wsa", 0.9);
    ok.pseudo_count = Some(12);
    let text = export::sweep_csv("lambda", &[ok, failed]);
    assert_eq!(
        text,
        "lambda,attack,auc,tpr_at_1pct_fpr,acc,pseudo_count,error\n0.5,wsa,0.9,0.5,,12,\n1.5,wsa,,,,,no pseudo-members\n"
    );
}

#[test]
fn training_log_csv_layout() {
    let log = [EpochLog { epoch: 0, train_loss: 0.7, holdout_loss: 0.69, holdout_acc: 0.5 }];
    assert_eq!(export::training_log_csv(&log), "epoch,train_loss,holdout_loss,holdout_acc\n0,0.7,0.69,0.5\n");
}

#[test]
fn report_text_carries_metrics_and_roc_block() {
    let data = LabeledScores::from_parts(&[0.9, 0.8, 0.4], &[0.1, 0.5]);
    let report = EvalReport::evaluate(&data, &[0.01], Some(0.5)).unwrap();
    let text = render_report(&report, &[("attack".into(), "csa".into()), ("runtime_s".into(), "0.125".into())]);
    assert_eq!(report_value(&text, "attack"), Some("csa"));
    assert_eq!(report_value(&text, "auc").unwrap().parse::<f64>().unwrap(), report.auc);
    assert_eq!(report_value(&text, "tpr_at_fpr.0.01").unwrap().parse::<f64>().unwrap(), report.tpr_at(0.01).unwrap());
    assert_eq!(report_value(&text, "confusion.tp"), Some("2"));
    let roc = text.split("[roc]\n").nth(1).unwrap();
    assert!(roc.starts_with("fpr,tpr,threshold\n0,0,inf\n"));
    assert_eq!(roc.lines().count(), report.roc_points.len() + 1);
    let stable = without_runtime(&text);
    assert!(!stable.contains("runtime_s"));
    assert_eq!(stable.lines().count(), text.lines().count() - 1);
}

fn snapshot() -> Snapshot {
    Snapshot {
        net: AttackNet::init(&[6, 4, 3, 1], 9).unwrap(),
        stats: NonMemberStats { mu_no: 0.125, sigma_no: 0.03, n: 500 },
        config: WsaConfig { lambda: -0.5, pseudo_strategy: PseudoStrategy::Random, random_count: Some(40), balance: false, seed: 77 },
    }
}

#[test]
fn snapshot_round_trip_is_exact() {
    let snap = snapshot();
    let bytes = snapshot::encode(&snap);
    assert_eq!(&bytes[..4], b"MIAN");
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
    let n_params = snap.net.param_count();
    assert_eq!(bytes.len(), 4 + 4 + 4 + 4 * 4 + 8 * n_params + 8 + 8 + 8 + 8 + 1 + 8 + 1 + 8);
    assert_eq!(snapshot::decode(&bytes).unwrap(), snap);

    let default_cfg = Snapshot { config: WsaConfig::default(), ..snapshot() };
    assert_eq!(snapshot::decode(&snapshot::encode(&default_cfg)).unwrap(), default_cfg);
}

#[test]
fn snapshot_decode_errors() {
    let bytes = snapshot::encode(&snapshot());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(snapshot::decode(&bad), Err(SnapshotError::BadMagic(_))));
    let mut bad = bytes.clone();
    bad[4] = 9;
    assert_eq!(snapshot::decode(&bad), Err(SnapshotError::UnsupportedVersion(9)));
    for cut in [3, 10, bytes.len() / 2, bytes.len() - 1] {
        assert!(matches!(snapshot::decode(&bytes[..cut]), Err(SnapshotError::Truncated(_))), "cut at {cut}");
    }
    let mut long = bytes.clone();
    long.push(0);
    assert_eq!(snapshot::decode(&long), Err(SnapshotError::TrailingBytes(1)));
    // A huge declared width must fail cleanly instead of allocating.
    let mut huge = bytes;
    huge[12..16].copy_from_slice(&u32::MAX.to_le_bytes());
    assert!(snapshot::decode(&huge).is_err());
}

#[test]
fn parallel_scores_equal_sequential() {
    let set = patterned_set(103, 8, 8, 3);
    let cs = mmia_core::similarity::batch_cs(&set).unwrap();
    let aea = mmia_core::attacks::aea_scores(&set).unwrap();
    for threads in [1, 2, 3, 4, 7] {
        let pool = mmia::parallel::thread_pool(threads).unwrap();
        assert_eq!(mmia::parallel::batch_cs(&set, &pool).unwrap(), cs);
        assert_eq!(mmia::parallel::aea_scores(&set, &pool).unwrap(), aea);
    }
    let k0 = patterned_set(4, 2, 2, 0);
    let pool = mmia::parallel::thread_pool(2).unwrap();
    assert_eq!(
        mmia::parallel::aea_scores(&k0, &pool).unwrap_err().exit_code(),
        2,
        "missing transformation channels is a usage problem"
    );
}

#[test]
fn ranges_cover_everything_once() {
    for n in [0, 1, 5, 64, 101] {
        for parts in [1, 2, 3, 8, 200] {
            let r = mmia::parallel::ranges(n, parts);
            assert!(r.len() <= parts.max(1));
            assert_eq!(r.first().map(|x| x.start), Some(0));
            assert_eq!(r.last().map(|x| x.end), Some(n));
            assert!(r.windows(2).all(|w| w[0].end == w[1].start));
            let (min, max) = r.iter().fold((usize::MAX, 0), |(a, b), x| (a.min(x.len()), b.max(x.len())));
            assert!(max - min <= 1);
        }
    }
}
