use frailwatch_core::features::{extract_features, read_feature_csv, write_feature_csv};
use frailwatch_core::model::{load_dataset, write_log, Health, LabeledDataset};
use frailwatch_core::pipeline::{
    featurize_dataset, majority_vote, rows_by_participant, run_participant, segment_windows, Level, SelectionOptions,
    WindowingConfig,
};
use frailwatch_core::classifiers::ClassifierSpec;
use frailwatch_core::synth::{generate_study, reference_profiles, StudyConfig};
use proptest::prelude::*;

fn small_study(seed: u64, ids: &[&str], scale: f64) -> LabeledDataset {
    let mut config = StudyConfig::new(seed, reference_profiles());
    config.participants.retain(|p| ids.contains(&p.id.as_str()));
    config.duration_scale = scale;
    generate_study(&config).unwrap()
}

#[test]
fn log_round_trip_preserves_records() {
    let ds = small_study(2, &["P4"], 0.2);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p4.jsonl");
    write_log(&ds, &path).unwrap();
    let back = load_dataset(&path).unwrap();
    assert_eq!(back.records, ds.records);
}

#[test]
fn windows_match_direct_extraction() {
    let ds = small_study(3, &["P2"], 0.2);
    let cfg = WindowingConfig::new(120.0);
    let rows = featurize_dataset(&ds, &cfg).unwrap();
    let mut n = 0;
    for rec in &ds.records {
        let windows = segment_windows(rec.duration, 120.0, cfg.keep_partial).unwrap();
        let mine: Vec<_> = rows.iter().filter(|r| r.record_id == rec.record_id).collect();
        assert_eq!(mine.len(), windows.len());
        for (row, (t0, t1)) in mine.iter().zip(windows) {
            assert_eq!((row.t0, row.t1), (t0, t1));
            assert_eq!(row.features, extract_features(&rec.frames, &rec.env, t0, t1, false).unwrap());
            assert_eq!((row.activity, row.health), (rec.activity, rec.health));
        }
        n += mine.len();
    }
    assert_eq!(n, rows.len());

    let mut csv = Vec::new();
    write_feature_csv(&rows, &mut csv).unwrap();
    assert_eq!(read_feature_csv(csv.as_slice()).unwrap(), rows);
}

#[test]
fn participant_evaluation_is_deterministic() {
    let ds = small_study(5, &["P1"], 0.3);
    let cfg = WindowingConfig::new(300.0);
    let rows = rows_by_participant(featurize_dataset(&ds, &cfg).unwrap()).remove("P1").unwrap();
    let opts = SelectionOptions { search_subsets: false, ..SelectionOptions::default() };
    let a = run_participant(&ClassifierSpec::bayes_net(5), &rows, &opts, &cfg).unwrap();
    let b = run_participant(&ClassifierSpec::bayes_net(5), &rows, &opts, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.level(Level::Window).n, rows.len());
    let records: std::collections::BTreeSet<&str> = rows.iter().map(|r| r.record_id.as_str()).collect();
    assert_eq!(a.level(Level::Record).n, records.len());
    let days: std::collections::BTreeSet<i64> = rows.iter().map(|r| r.day_index).collect();
    assert_eq!(a.level(Level::Day).n, days.len());
    for level in Level::ALL {
        assert!((0.0..=1.0).contains(&a.level(level).f1_micro));
    }
}

proptest! {
    #[test]
    fn majority_vote_counts(labels in prop::collection::vec(0u8..3, 1..40), tie_weak in any::<bool>()) {
        let labels: Vec<Health> = labels.iter().map(|&l| [Health::Normal, Health::Weak, Health::Unknown][l as usize]).collect();
        let tie = if tie_weak { Health::Weak } else { Health::Normal };
        let weak = labels.iter().filter(|h| **h == Health::Weak).count();
        let normal = labels.iter().filter(|h| **h == Health::Normal).count();
        let want = if weak > normal {
            Health::Weak
        } else if normal > weak {
            Health::Normal
        } else if weak == 0 {
            Health::Unknown
        } else {
            tie
        };
        prop_assert_eq!(majority_vote(&labels, tie).unwrap(), want);
    }

    #[test]
    fn windows_tile_the_record(duration in 1.0f64..5000.0, w in 10.0f64..1200.0, keep in 0.1f64..1.0) {
        let windows = segment_windows(duration, w, keep).unwrap();
        prop_assert!(!windows.is_empty());
        prop_assert_eq!(windows[0].0, 0.0);
        for pair in windows.windows(2) {
            prop_assert_eq!(pair[0].1, pair[1].0);
        }
        prop_assert!(windows.last().unwrap().1 <= duration + 1e-9);
        prop_assert!(duration - windows.last().unwrap().1 < w);
    }
}
