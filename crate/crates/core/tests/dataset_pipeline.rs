use std::collections::{BTreeMap, BTreeSet};
use std::fs;

use imu_gesture::ingest::{load_recordings, reject_corrupt};
use imu_gesture::preprocess::{split_by_participant, Preprocessor};
use imu_gesture::synth::{generate_dataset, SynthConfig};
use imu_gesture::GestureLabel;

#[test]
fn synthetic_sessions_ingest_into_one_recording_per_gesture() {
    let dir = tempfile::tempdir().unwrap();
    generate_dataset(&SynthConfig::default(), 2, 2, dir.path()).unwrap();
    let (recordings, report) = load_recordings(dir.path(), 0).unwrap();
    assert!(report.is_empty(), "{report}");
    assert_eq!(recordings.len(), 40);

    let mut per_session: BTreeMap<(String, String), BTreeSet<GestureLabel>> = BTreeMap::new();
    for r in &recordings {
        per_session
            .entry((r.participant.alias.clone(), r.session_id.clone()))
            .or_default()
            .insert(r.label);
        assert!(r.samples.len() > 400, "{} samples", r.samples.len());
        assert!(r.samples.windows(2).all(|w| w[0].t_ms < w[1].t_ms));
    }
    assert_eq!(per_session.len(), 4);
    for labels in per_session.values() {
        assert_eq!(labels.len(), GestureLabel::ALL.len());
    }

    // Default windowing and normalization fitted on the training participant.
    let (train, val) = split_by_participant(&recordings, &BTreeSet::from(["p2".to_string()])).unwrap();
    assert_eq!((train.len(), val.len()), (20, 20));
    let mut pre = Preprocessor::default();
    pre.fit(&train).unwrap();
    let train_set = pre.windows(&train);
    let val_set = pre.windows(&val);
    assert!(train_set.len() > 100 && val_set.len() > 100);
    assert_eq!(train_set.channels(), 6);
    for c in 0..6 {
        let col: Vec<f64> = train_set
            .windows
            .iter()
            .flat_map(|w| (0..w.values.rows()).map(move |r| w.values.get(r, c)))
            .collect();
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        assert!(mean.abs() < 1e-9, "channel {c} mean {mean}");
    }
}

#[test]
fn corrupt_and_unpaired_sessions_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    generate_dataset(&SynthConfig::default(), 1, 3, dir.path()).unwrap();
    let s1 = dir.path().join("p1/s01/sensors.csv");
    fs::write(
        &s1,
        "timestamp_ms,acc_x,acc_y,acc_z,gyro_x,gyro_y,gyro_z\n10,1,2,3,4,5,six\n",
    )
    .unwrap();
    fs::remove_file(dir.path().join("p1/s02/events.csv")).unwrap();

    let (accepted, report) = reject_corrupt(dir.path()).unwrap();
    assert_eq!(accepted.len(), 1);
    assert_eq!(report.rejected.len(), 2);
    assert_eq!(report.rejected[0].path, s1);
    assert!(
        report.rejected[0].reason.contains("sensors.csv:2:"),
        "{}",
        report.rejected[0].reason
    );
    assert!(report.rejected[1].reason.contains("missing pair"));

    let (recordings, _) = load_recordings(dir.path(), 0).unwrap();
    assert_eq!(recordings.len(), 10);
}
