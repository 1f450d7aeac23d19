mod common;

use attncond::linalg::{condition_number, numerical_rank, svd, Kappa, Matrix, DEFAULT_RANK_TOL};
use attncond::rmt::{
    asymptotic_kappa, full_rank_probability, head_concat_sweep, sample_gaussian, trial_kappas, SweepSpec,
};
use common::*;

#[test]
fn svd_of_seeded_wide_gaussian_reconstructs() {
    let m = sample_gaussian(4, 6, 3).unwrap();
    let s = svd(&m).unwrap();
    let rec = naive_matmul(
        &to_rows(&Matrix::from_fn(4, 4, |r, c| s.left_vectors[(r, c)] * s.singular_values[c])),
        &to_rows(&s.right_vectors.transpose()),
    );
    assert!(max_abs_diff(&m, &rec) <= 1e-10 * s.singular_values[0]);
}

#[test]
fn small_closed_form_cases() {
    assert_eq!(svd(&Matrix::identity(3)).unwrap().singular_values, vec![1.0; 3]);
    assert_eq!(svd(&Matrix::from_diag(&[3.0, 1.0])).unwrap().singular_values, vec![3.0, 1.0]);
    assert_eq!(condition_number(&Matrix::identity(5), DEFAULT_RANK_TOL).unwrap(), Kappa::Finite(1.0));
    assert_eq!(condition_number(&Matrix::from_diag(&[4.0, 2.0]), DEFAULT_RANK_TOL).unwrap(), Kappa::Finite(2.0));
    assert_eq!(condition_number(&Matrix::zeros(3, 3), DEFAULT_RANK_TOL).unwrap(), Kappa::Infinite);
    assert_eq!(numerical_rank(&Matrix::zeros(3, 3), DEFAULT_RANK_TOL).unwrap(), 0);
    assert_eq!(numerical_rank(&Matrix::identity(4), DEFAULT_RANK_TOL).unwrap(), 4);
}

#[test]
fn outer_product_has_rank_one() {
    let mut r = rng(5);
    let u = gaussian(8, 1, &mut r);
    let v = gaussian(1, 8, &mut r);
    let m = u.matmul(&v);
    assert_eq!(numerical_rank(&m, DEFAULT_RANK_TOL).unwrap(), 1);
    assert_eq!(condition_number(&m, DEFAULT_RANK_TOL).unwrap(), Kappa::Infinite);
}

#[test]
fn non_finite_input_is_rejected() {
    let bad = Matrix::from_fn(2, 2, |r, _| if r == 0 { 1.0 } else { f64::INFINITY });
    assert!(svd(&bad).is_err());
    assert!(numerical_rank(&bad, DEFAULT_RANK_TOL).is_err());
    assert!(Matrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
}

#[test]
fn asymptotic_formula_values() {
    assert!((asymptotic_kappa(64, 4096).unwrap() - 9.0 / 7.0).abs() < 1e-15);
    assert_eq!(asymptotic_kappa(1, 4).unwrap(), 3.0);
    assert!(asymptotic_kappa(8, 8).is_err());
    let seq: Vec<f64> = (1..20).map(|h| asymptotic_kappa(16, 32 * h).unwrap()).collect();
    assert!(seq.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn gaussian_sampling_is_seeded_and_centered() {
    assert_eq!(sample_gaussian(2, 2, 7).unwrap(), sample_gaussian(2, 2, 7).unwrap());
    let m = sample_gaussian(100, 100, 11).unwrap();
    let all_mean = m.as_slice().iter().sum::<f64>() / 10_000.0;
    assert!(all_mean.abs() < 0.05, "{all_mean}");
    assert_eq!(numerical_rank(&sample_gaussian(32, 1024, 4).unwrap(), DEFAULT_RANK_TOL).unwrap(), 32);
}

#[test]
fn single_block_sweep_is_the_block_itself() {
    let spec = SweepSpec::new(4, 4, vec![1], 1, 9);
    let stats = head_concat_sweep(&spec).unwrap();
    let k = condition_number(&spec.trial_matrix(1, 0).unwrap(), DEFAULT_RANK_TOL).unwrap();
    assert_eq!(stats[0].mean_kappa, k.to_f64());
}

#[test]
fn narrow_concatenation_below_square_is_still_full_rank() {
    let spec = SweepSpec::new(32, 8, vec![2], 20, 3);
    let ks = trial_kappas(&spec, 2).unwrap();
    assert!(ks.iter().all(|k| k.is_finite()));
    assert_eq!(head_concat_sweep(&spec).unwrap()[0].rank_deficient_count, 0);
}

#[test]
fn full_rank_probabilities_of_small_shapes() {
    assert_eq!(full_rank_probability(1, 1, 10, 0, DEFAULT_RANK_TOL).unwrap(), 1.0);
    assert_eq!(full_rank_probability(8, 8, 500, 1, DEFAULT_RANK_TOL).unwrap(), 1.0);
}

#[test]
fn sweep_rejects_empty_or_unsorted_heads() {
    assert!(head_concat_sweep(&SweepSpec::new(4, 4, vec![], 2, 0)).is_err());
    assert!(head_concat_sweep(&SweepSpec::new(4, 4, vec![2, 2], 2, 0)).is_err());
    assert!(head_concat_sweep(&SweepSpec::new(4, 4, vec![1], 0, 0)).is_err());
}

#[test]
fn empirical_kappa_is_close_to_the_closed_form_when_wide() {
    // D = 8N with 50 trials: the calibrated 10% band.
    let spec = SweepSpec::new(16, 16, vec![8], 50, 2);
    let s = &head_concat_sweep(&spec).unwrap()[0];
    let a = s.asymptotic_kappa.unwrap();
    assert!((s.mean_kappa / a - 1.0).abs() < 0.10, "{} vs {a}", s.mean_kappa);
    assert!(s.min_kappa <= s.mean_kappa && s.mean_kappa <= s.max_kappa && s.min_kappa >= 1.0);
}
