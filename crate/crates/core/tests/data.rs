mod common;

use common::*;
use hypersteal::data::{save_csv, split_indices, Centering, Preprocessing};
use hypersteal::prelude::*;

#[test]
fn fixtures_have_expected_shapes() {
    let d = diabetes_raw();
    assert_eq!((d.n(), d.m()), (442, 10));
    assert_eq!(d.preprocessing(), Preprocessing::Raw);
    let i = iris();
    assert_eq!((i.n(), i.m()), (100, 4));
    assert!(i.is_binary());
}

#[test]
fn centered_data_has_zero_means_and_recentering_is_a_no_op() {
    let ds = diabetes();
    assert_eq!(ds.preprocessing(), Preprocessing::Centered);
    for j in 0..ds.m() {
        assert!(ds.x().column(j).mean().abs() <= 1e-10);
    }
    assert!(ds.y().mean().abs() <= 1e-10);
    let again = Centering::fit(&ds).apply(&ds);
    assert!((again.x() - ds.x()).amax() <= 1e-12);
    assert!((again.y() - ds.y()).amax() <= 1e-12);
}

#[test]
fn normalized_rows_have_unit_length() {
    let ds = iris();
    for i in 0..ds.n() {
        assert!((ds.x().row(i).norm() - 1.0).abs() <= 1e-10);
    }
}

#[test]
fn csv_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    for (ds, task) in [(diabetes(), Task::Regression), (iris(), Task::Classification)] {
        let path = dir.path().join("round.csv");
        save_csv(&ds, &path).unwrap();
        let back = load_csv(&path, &TargetColumn::Last, task).unwrap();
        assert!((back.x() - ds.x()).amax() <= 1e-12);
        assert!((back.y() - ds.y()).amax() <= 1e-12);
    }
}

#[test]
fn diabetes_halves_are_disjoint_and_exhaustive() {
    let (a, b) = split_indices(442, 0.5, 0).unwrap();
    assert_eq!((a.len(), b.len()), (221, 221));
    let mut all: Vec<usize> = a.into_iter().chain(b).collect();
    all.sort_unstable();
    assert_eq!(all, (0..442).collect::<Vec<_>>());
}

#[test]
fn synthetic_sets_are_reproducible() {
    assert_eq!(synth_gaussian(30, 4, 7).unwrap().x(), synth_gaussian(30, 4, 7).unwrap().x());
    assert_eq!(synth_regression(30, 4, 0.1, 7).unwrap().y(), synth_regression(30, 4, 0.1, 7).unwrap().y());
    assert_eq!(synth_logistic(30, 4, 0.1, 7).unwrap().y(), synth_logistic(30, 4, 0.1, 7).unwrap().y());
    assert!(synth_logistic(30, 4, 0.1, 7).unwrap().is_binary());
}

#[test]
fn samples_keep_the_requested_share() {
    let ds = diabetes_raw();
    assert_eq!(sample(&ds, 0.1, 1).unwrap().n(), 44);
    assert_eq!(sample(&ds, 1.0, 1).unwrap().n(), 442);
    assert!(sample(&ds, 0.0, 1).is_err());
}
