use std::fs;

use nalgebra::DMatrix;
use num_complex::Complex32;
use proptest::prelude::*;

use nearfield::datastore::*;
use nearfield::geometry::{ArrayConfig, FieldLabel, PathGain, UserPos};
use nearfield::Error;

fn spec() -> GenerateSpec {
    GenerateSpec {
        cfg: ArrayConfig::half_wavelength(32, 30e9, 15.0, 0.1).unwrap(),
        path_gain: PathGain::Normalized,
        k_users: 3,
        count: 12,
        seed: 2024,
        first_record_id: 5,
        snr_db: 20.0,
        oracle_budget: 300,
        ..GenerateSpec::default()
    }
}

fn any_f64() -> impl Strategy<Value = f64> {
    any::<u64>().prop_map(f64::from_bits)
}

fn any_f32() -> impl Strategy<Value = f32> {
    any::<u32>().prop_map(f32::from_bits)
}

fn record(n: usize, k: usize) -> impl Strategy<Value = DatasetRecord> {
    let oracle = prop::option::of(
        (
            prop::collection::vec(any_f64(), k),
            prop::collection::vec(any_f64(), k),
            any_f64(),
            any::<bool>(),
        )
            .prop_map(|(duals, powers, sum_se, budget_exhausted)| OracleTarget {
                duals,
                powers,
                sum_se,
                budget_exhausted,
            }),
    );
    (
        any::<u64>(),
        prop::collection::vec((any_f64(), any_f64()), k),
        prop::collection::vec(any::<bool>(), k),
        prop::collection::vec((any_f32(), any_f32()), n * k),
        oracle,
    )
        .prop_map(move |(record_id, users, labels, h, oracle)| DatasetRecord {
            record_id,
            users: users.into_iter().map(|(x_m, h_m)| UserPos { x_m, h_m }).collect(),
            labels: labels
                .into_iter()
                .map(|b| if b { FieldLabel::Near } else { FieldLabel::Far })
                .collect(),
            channels: DMatrix::from_vec(n, k, h.into_iter().map(|(re, im)| Complex32::new(re, im)).collect()),
            oracle,
        })
}

fn dataset() -> impl Strategy<Value = Dataset> {
    (1usize..9, 1usize..5)
        .prop_flat_map(|(n, k)| {
            (
                Just((n, k)),
                any::<u64>(),
                any_f64(),
                any::<bool>(),
                prop::collection::vec(record(n, k), 0..6),
            )
        })
        .prop_map(|((n, k), seed, snr_db, with_oracle, records)| Dataset {
            cfg: ArrayConfig::half_wavelength(n, 28e9, 12.0, -0.2).unwrap(),
            k_users: k,
            seed,
            snr_db,
            with_oracle,
            records,
        })
}

/// Float fields compared by bit pattern, so NaN payloads count too.
fn bits(d: &Dataset) -> Vec<u64> {
    let mut v = vec![d.seed, d.snr_db.to_bits(), d.k_users as u64, d.with_oracle as u64];
    for r in &d.records {
        v.push(r.record_id);
        v.extend(r.users.iter().flat_map(|u| [u.x_m.to_bits(), u.h_m.to_bits()]));
        v.extend(r.labels.iter().map(|l| *l as u64));
        v.extend(r.channels.iter().flat_map(|c| [c.re.to_bits() as u64, c.im.to_bits() as u64]));
        if let Some(o) = &r.oracle {
            v.extend(o.duals.iter().chain(&o.powers).map(|x| x.to_bits()));
            v.extend([o.sum_se.to_bits(), o.budget_exhausted as u64]);
        } else {
            v.push(u64::MAX);
        }
    }
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn round_trip_is_bit_exact(d in dataset()) {
        let blob = encode_dataset(&d).unwrap();
        let (header, records) = decode_dataset(&blob).unwrap();
        prop_assert_eq!(header.count as usize, d.records.len());
        let back = Dataset { records, ..d.clone() };
        prop_assert_eq!(bits(&back), bits(&d));
        prop_assert_eq!(encode_dataset(&back).unwrap(), blob);
    }
}

#[test]
fn file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("train.json");
    let d = generate(&spec()).unwrap();
    let m = write(&d, &path).unwrap();
    assert_eq!(m.count, 12);
    assert!(blob_path(&path).exists());
    let back = read(&path).unwrap();
    assert_eq!(back, d);

    // re-serialising what was read reproduces the same bytes
    let again = dir.path().join("again.json");
    write(&back, &again).unwrap();
    assert_eq!(fs::read(blob_path(&path)).unwrap(), fs::read(blob_path(&again)).unwrap());
}

#[test]
fn same_spec_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let ma = write(&generate(&spec()).unwrap(), &a).unwrap();
    let mb = write(&generate(&spec()).unwrap(), &b).unwrap();
    assert_eq!(ma.blob_sha256, mb.blob_sha256);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn thread_count_does_not_change_bytes() {
    let serial = encode_dataset(&generate_with_threads(&spec(), 1).unwrap()).unwrap();
    for t in [2, 3, 8] {
        let par = encode_dataset(&generate_with_threads(&spec(), t).unwrap()).unwrap();
        assert_eq!(par, serial, "{t} threads");
    }
}

#[test]
fn truncated_blob_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.json");
    write(&generate(&spec()).unwrap(), &path).unwrap();
    let blob = fs::read(blob_path(&path)).unwrap();
    fs::write(blob_path(&path), &blob[..blob.len() - 3]).unwrap();
    assert!(matches!(read(&path), Err(Error::Format { .. })));
}

#[test]
fn tampered_blob_fails_checksum() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.json");
    write(&generate(&spec()).unwrap(), &path).unwrap();
    let mut blob = fs::read(blob_path(&path)).unwrap();
    // flip a low mantissa bit of the first user x coordinate
    blob[32] ^= 1;
    fs::write(blob_path(&path), &blob).unwrap();
    assert!(matches!(read(&path), Err(Error::ChecksumMismatch)));
}

#[test]
fn manifest_version_and_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.json");
    write(&generate(&spec()).unwrap(), &path).unwrap();
    let text = fs::read_to_string(&path).unwrap();

    fs::write(&path, text.replace("\"format_version\": 1", "\"format_version\": 7")).unwrap();
    assert!(matches!(
        read(&path),
        Err(Error::VersionMismatch { found: 7, expected: 1 })
    ));

    fs::write(&path, text.replace("\"seed\"", "\"extra\": 0, \"seed\"")).unwrap();
    assert!(matches!(read(&path), Err(Error::Json(_))));

    fs::write(&path, text.replace("\"k_users\": 3", "\"k_users\": 2")).unwrap();
    assert!(matches!(read(&path), Err(Error::Format { .. })));
}

#[test]
fn oracle_targets_are_reproducible() {
    let d = generate(&spec()).unwrap();
    let preds = PredictionSet::from_truth(&d, Task::Precode).unwrap();
    let report = score(&d, &preds).unwrap().precode.unwrap();
    assert_eq!(report.scored, 12);
    assert!((report.mean_ratio - 1.0).abs() < 1e-9);
    assert!((report.mean_se - report.mean_oracle_se).abs() < 1e-6);
}

#[test]
fn prediction_file_round_trip_and_score() {
    let dir = tempfile::tempdir().unwrap();
    let d = generate(&spec()).unwrap();
    let preds = PredictionSet::from_truth(&d, Task::Classify).unwrap();
    let path = dir.path().join("pred.nfld");
    write_predictions(&preds, &path).unwrap();
    let back = read_predictions(&path).unwrap();
    assert_eq!(back, preds);
    assert_eq!(score(&d, &back).unwrap().classify.unwrap().accuracy, 1.0);
}
