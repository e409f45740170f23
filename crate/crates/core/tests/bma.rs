use evidencer_core::bma::{cv_bma, oos_bma, posterior_probabilities, BetaStack};
use ndarray::{Array1, Array2, Array3};
use proptest::prelude::*;

fn lme_matrix(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-1400.0..0.0, rows * cols).prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

proptest! {
    #[test]
    fn per_voxel_shift_leaves_pp_unchanged(
        lme in lme_matrix(3, 4),
        shifts in prop::collection::vec(prop::sample::select(vec![-1000.0, 1000.0]), 4),
    ) {
        let shifted = Array2::from_shape_fn((3, 4), |(m, v)| lme[[m, v]] + shifts[v]);
        let a = posterior_probabilities(lme.view(), None).unwrap();
        let b = posterior_probabilities(shifted.view(), None).unwrap();
        for (x, y) in a.pp.iter().zip(b.pp.iter()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        for v in 0..4 {
            prop_assert!((a.pp.column(v).sum() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn cv_bma_lies_in_convex_hull(
        beta in prop::collection::vec(-10.0..10.0, 3 * 2 * 5),
        lme in lme_matrix(3, 5),
    ) {
        let stack = BetaStack::new(Array3::from_shape_vec((3, 2, 5), beta).unwrap(), "b").unwrap();
        let pp = posterior_probabilities(lme.view(), None).unwrap();
        let est = cv_bma(&stack, &pp).unwrap();
        let means = stack.session_mean();
        for v in 0..5 {
            let col = means.column(v);
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(est[v] >= lo - 1e-12 && est[v] <= hi + 1e-12);
        }
    }

    #[test]
    fn constant_pps_bridge_oos_to_cv(
        beta in prop::collection::vec(-10.0..10.0, 2 * 4 * 3),
        lme in lme_matrix(2, 3),
    ) {
        let stack = BetaStack::new(Array3::from_shape_vec((2, 4, 3), beta).unwrap(), "b").unwrap();
        let pp = posterior_probabilities(lme.view(), None).unwrap();
        let cv = cv_bma(&stack, &pp).unwrap();
        let oos = oos_bma(&stack, &vec![pp.clone(); 4]).unwrap();
        for v in 0..3 {
            prop_assert!((cv[v] - oos[v]).abs() < 1e-12);
        }
    }
}

#[test]
fn non_uniform_prior_tilts_probabilities() {
    let lme = Array2::<f64>::from_shape_vec((2, 1), vec![0.0, 0.0]).unwrap();
    let pp = posterior_probabilities(lme.view(), Some(&[0.8, 0.2])).unwrap();
    assert!((pp.pp[[0, 0]] - 0.8).abs() < 1e-12);
    assert_eq!(pp.prior, Array1::from(vec![0.8, 0.2]));
}

#[test]
fn single_session_bma_paths_agree() {
    let stack = BetaStack::new(Array3::from_shape_vec((2, 1, 2), vec![1.0, 4.0, 3.0, -2.0]).unwrap(), "b").unwrap();
    let lme = Array2::from_shape_vec((2, 2), vec![-1.0, -3.0, -2.0, -1.0]).unwrap();
    let pp = posterior_probabilities(lme.view(), None).unwrap();
    assert_eq!(cv_bma(&stack, &pp).unwrap(), oos_bma(&stack, std::slice::from_ref(&pp)).unwrap());
}
