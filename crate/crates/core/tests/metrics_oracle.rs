mod common;

use nilm_core::metrics::evaluate_predictions;
use nilm_core::Matrix;

#[test]
fn metrics_match_brute_force_on_random_fixtures() {
    assert_eq!(common::suites::metrics_mismatches(100, 50), 0);
}

#[test]
fn constant_half_predictions() {
    // 10 rows, 4 positives in column 0: everything predicted positive
    let p = Matrix::from_vec(10, 4, vec![0.5; 40]);
    let y = Matrix::from_vec(10, 4, (0..40).map(|k| ((k / 4) < 4 && k % 4 == 0) as u8 as f64).collect());
    let m = evaluate_predictions(&p, &y, 0.5);
    let a = &m.per_appliance[0];
    assert_eq!((a.confusion.true_positives, a.confusion.false_positives), (4, 6));
    assert_eq!(a.recall, 1.0);
    assert_eq!(a.precision, 0.4);
    assert_eq!(a.mae, 0.5);
    assert_eq!(m.per_appliance[1].precision, 0.0);
    assert_eq!(m.per_appliance[1].recall, 1.0);
}

#[test]
fn no_positives_gives_unit_recall() {
    let p = Matrix::from_vec(2, 4, vec![0.1; 8]);
    let y = Matrix::from_vec(2, 4, vec![0.0; 8]);
    let m = evaluate_predictions(&p, &y, 0.5);
    assert!(m.per_appliance.iter().all(|a| a.recall == 1.0 && a.precision == 1.0 && a.accuracy == 1.0));
}
