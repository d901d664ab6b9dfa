//! Randomized properties over the public API.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;

use onebit_core::bsbl::e_step;
use onebit_core::doa::{debiased_nmse_smv, steering_vector};
use onebit_core::model::{csgn, stack_model, stack_vector, ComplexLinearModel,
    OneBitMeasurements, RealStackedModel};

fn complex_vec(len: usize) -> impl Strategy<Value = Vec<Complex64>> {
    proptest::collection::vec(
        (-10.0f64..10.0, -10.0f64..10.0).prop_map(|(re, im)| Complex64::new(re, im)),
        len,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csgn_is_idempotent(v in complex_vec(6)) {
        let r = DVector::from_vec(v);
        let once = csgn(&r);
        prop_assert_eq!(csgn(&once), once);
    }

    #[test]
    fn stacking_commutes_with_the_product(
        a in complex_vec(12),
        x in complex_vec(4),
    ) {
        let a = DMatrix::from_vec(3, 4, a);
        let x = DVector::from_vec(x);
        let complex_product = &a * &x;

        let model = ComplexLinearModel::with_isotropic_noise(a, 0.0).unwrap();
        let stacked = stack_model(&model);
        let real_product = stacked.a_bar() * stack_vector(&x);

        let want = stack_vector(&complex_product);
        for i in 0..want.len() {
            prop_assert!((real_product[i] - want[i]).abs() <= 1e-9 * want.norm().max(1.0));
        }
    }

    #[test]
    fn debiased_nmse_is_scale_invariant_and_nonpositive(
        x in complex_vec(5),
        x_hat in complex_vec(5),
        c in (0.1f64..10.0, -3.0f64..3.0).prop_map(|(m, p)| Complex64::from_polar(m, p)),
    ) {
        let x = DVector::from_vec(x);
        let x_hat = DVector::from_vec(x_hat);
        prop_assume!(x.norm() > 1e-6 && x_hat.norm() > 1e-6);

        let base = debiased_nmse_smv(&x, &x_hat).unwrap();
        let scaled = debiased_nmse_smv(&x, &(x_hat * c)).unwrap();
        prop_assert!(base <= 1e-9);
        // both may sit on the -inf floor; otherwise they agree in dB
        prop_assert!((base - scaled).abs() <= 1e-6 * base.abs().max(1.0));
    }

    #[test]
    fn sign_covariance_is_a_unit_diagonal_correlation(
        seed_entries in proptest::collection::vec(-1.0f64..1.0, 8),
        alpha_entries in proptest::collection::vec(0.1f64..10.0, 4),
        noise in 0.05f64..2.0,
    ) {
        let a_bar = DMatrix::from_vec(2, 4, seed_entries);
        let model = RealStackedModel::new(a_bar, DMatrix::identity(2, 2) * noise).unwrap();
        let alpha = DVector::from_vec(alpha_entries);
        let y = OneBitMeasurements::new(DMatrix::from_element(2, 1, 1.0)).unwrap();
        let out = e_step(&model, &alpha, &y).unwrap();
        for i in 0..2 {
            prop_assert_eq!(out.c_y_bar[(i, i)], 1.0);
            for j in 0..2 {
                prop_assert!(out.c_y_bar[(i, j)].abs() <= 1.0);
            }
        }
    }

    #[test]
    fn steering_vectors_have_unit_norm(
        theta in -90.0f64..90.0,
        sensors in 1usize..64,
    ) {
        let a = steering_vector(theta, sensors, 0.5);
        prop_assert!((a.norm() - 1.0).abs() <= 1e-12);
    }
}
