//! Built-in numerical smoke checks. These duplicate a few closed-form
//! oracles from the library test suite so a deployed binary can vouch for
//! itself without the test harness.

use nalgebra::{DMatrix, DVector};
use onebit_core::bsbl::{e_step, run_mmv, run_smv, SolverConfig};
use onebit_core::model::{OneBitMeasurements, RealStackedModel};

type Check = (&'static str, fn() -> Result<(), String>);

pub fn run() -> i32 {
    let checks: &[Check] = &[
        ("scalar-oracle", scalar_oracle),
        ("arcsine", arcsine),
        ("rescaling", rescaling),
        ("mmv-degenerates-to-smv", mmv_degenerates_to_smv),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        match check() {
            Ok(()) => println!("selftest {name}: ok"),
            Err(why) => {
                println!("selftest {name}: FAILED ({why})");
                failed += 1;
            }
        }
    }
    if failed > 0 {
        1
    } else {
        0
    }
}

fn close(label: &str, got: f64, want: f64, tol: f64) -> Result<(), String> {
    if (got - want).abs() <= tol {
        Ok(())
    } else {
        Err(format!("{label}: got {got}, want {want} within {tol}"))
    }
}

fn plus_ones(rows: usize) -> OneBitMeasurements {
    OneBitMeasurements::new(DMatrix::from_element(rows, 1, 1.0)).unwrap()
}

/// Unit-variance sign observation of a standard Gaussian: the posterior is
/// a half-Gaussian with mean 1/sqrt(pi) and variance 1 - 1/pi.
fn scalar_oracle() -> Result<(), String> {
    let model = RealStackedModel::new(DMatrix::identity(2, 2), DMatrix::identity(2, 2))
        .map_err(|e| e.to_string())?;
    let out = e_step(&model, &DVector::from_element(2, 1.0), &plus_ones(2))
        .map_err(|e| e.to_string())?;
    let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
    close("mean", out.mu_post[(0, 0)], inv_sqrt_pi, 1e-12)?;
    close(
        "variance",
        out.sigma_post[(0, 0)],
        1.0 - 1.0 / std::f64::consts::PI,
        1e-12,
    )
}

/// Input correlation 1/2 must map to sign correlation (2/pi) asin(1/2) = 1/3.
fn arcsine() -> Result<(), String> {
    let c_w = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]);
    let model =
        RealStackedModel::new(DMatrix::identity(2, 2), c_w).map_err(|e| e.to_string())?;
    let out = e_step(&model, &DVector::from_element(2, 2.0), &plus_ones(2))
        .map_err(|e| e.to_string())?;
    close("diag", out.c_y_bar[(0, 0)], 1.0, 1e-14)?;
    close("offdiag", out.c_y_bar[(0, 1)], 1.0 / 3.0, 1e-12)
}

/// Scaling the noise covariance by 1/s and the initial precisions by s must
/// rescale the posterior means by exactly 1/sqrt(s) when b = 0.
fn rescaling() -> Result<(), String> {
    let a_bar = DMatrix::from_fn(6, 8, |i, j| ((i * 8 + j) as f64 * 0.41).sin());
    let y = DMatrix::from_fn(6, 1, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 });
    let config = SolverConfig {
        iters: 20,
        ..SolverConfig::default()
    };
    let s = 4.0;
    let base = RealStackedModel::new(a_bar.clone(), DMatrix::identity(6, 6) * 0.3)
        .map_err(|e| e.to_string())?;
    let scaled = RealStackedModel::new(a_bar, DMatrix::identity(6, 6) * (0.3 / s))
        .map_err(|e| e.to_string())?;
    let scaled_config = SolverConfig {
        alpha_init: Some(DVector::from_element(8, s)),
        ..config.clone()
    };
    let meas = OneBitMeasurements::new(y).unwrap();
    let (x1, _) = run_mmv(&base, &meas, &config).map_err(|e| e.to_string())?;
    let (x2, _) = run_mmv(&scaled, &meas, &scaled_config).map_err(|e| e.to_string())?;
    for i in 0..x1.nrows() {
        let want = x1[(i, 0)] / s.sqrt();
        let got = x2[(i, 0)];
        if (got - want).norm() > 1e-8 * want.norm().max(1e-12) {
            return Err(format!("component {i}: got {got}, want {want}"));
        }
    }
    Ok(())
}

/// The multiple-snapshot driver at L = 1 must agree with the
/// single-snapshot driver bitwise-closely on a fixed instance.
fn mmv_degenerates_to_smv() -> Result<(), String> {
    let a_bar = DMatrix::from_fn(4, 6, |i, j| ((i * 6 + j) as f64 * 0.73).cos());
    let model =
        RealStackedModel::new(a_bar, DMatrix::identity(4, 4) * 0.5).map_err(|e| e.to_string())?;
    let y = DVector::from_vec(vec![1.0, -1.0, -1.0, 1.0]);
    let config = SolverConfig {
        iters: 30,
        ..SolverConfig::default()
    };
    let (x_smv, _) = run_smv(&model, &y, &config).map_err(|e| e.to_string())?;
    let meas = OneBitMeasurements::new(DMatrix::from_column_slice(4, 1, y.as_slice())).unwrap();
    let (x_mmv, _) = run_mmv(&model, &meas, &config).map_err(|e| e.to_string())?;
    for i in 0..x_smv.len() {
        if (x_smv[i] - x_mmv[(i, 0)]).norm() > 1e-12 {
            return Err(format!(
                "component {i}: smv {} vs mmv {}",
                x_smv[i],
                x_mmv[(i, 0)]
            ));
        }
    }
    Ok(())
}
