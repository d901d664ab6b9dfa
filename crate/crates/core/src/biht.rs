//! Binary iterative hard thresholding baseline for one-bit recovery.
//!
//! Gradient step on the one-bit consistency objective followed by hard
//! thresholding to the `K` largest complex components. One-bit data fixes
//! the signal only up to scale, so the final iterate is normalized to unit
//! norm.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{sgn, unstack_vector, RealStackedModel};

#[derive(Debug, Clone)]
pub struct BihtConfig {
    /// Sparsity level, counted in complex components.
    pub k: usize,
    /// Gradient step size.
    pub tau: f64,
    pub iters: usize,
}

impl BihtConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            tau: 1.0,
            iters: 100,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("sparsity must be at least 1".into()));
        }
        if self.tau.is_nan() || self.tau <= 0.0 {
            return Err(Error::InvalidConfig("step size must be positive".into()));
        }
        if self.iters == 0 {
            return Err(Error::InvalidConfig("iteration count must be at least 1".into()));
        }
        Ok(())
    }
}

/// Run BIHT on stacked one-bit measurements. Returns a unit-norm complex
/// estimate with exactly `K` nonzero components.
///
/// The iteration is `x <- eta_K(x + (tau/2) A^T (y - sgn(A x)))` where
/// `eta_K` keeps the `K` complex components of largest magnitude, zeroing
/// both real and imaginary halves of the rest. The default start vector is
/// zero except for a unit first component, which breaks the all-zero sign
/// degeneracy.
pub fn biht_run(
    model: &RealStackedModel,
    y_bar: &DVector<f64>,
    config: &BihtConfig,
    x0: Option<DVector<f64>>,
) -> Result<DVector<Complex64>> {
    config.validate()?;
    let a_bar = model.a_bar();
    let two_m = model.stacked_measurements();
    let two_n = model.stacked_unknowns();
    let n = two_n / 2;
    if y_bar.len() != two_m {
        return Err(Error::DimensionMismatch(format!(
            "measurements have length {}, expected {}",
            y_bar.len(),
            two_m
        )));
    }
    if y_bar.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::InvalidInput(
            "one-bit measurements must be exactly +/-1".into(),
        ));
    }
    if config.k > n {
        return Err(Error::InvalidConfig(format!(
            "sparsity {} exceeds the {} complex components",
            config.k, n
        )));
    }

    let mut x = match x0 {
        Some(v) => {
            if v.len() != two_n {
                return Err(Error::DimensionMismatch(format!(
                    "start vector has length {}, expected {}",
                    v.len(),
                    two_n
                )));
            }
            v
        }
        None => {
            let mut v = DVector::zeros(two_n);
            v[0] = 1.0;
            v
        }
    };

    let half_tau = 0.5 * config.tau;
    for _ in 0..config.iters {
        let z = a_bar * &x;
        let residual = DVector::from_fn(two_m, |i, _| y_bar[i] - sgn(z[i]));
        // x += (tau/2) A^T residual
        x.gemv_tr(half_tau, a_bar, &residual, 1.0);
        hard_threshold_complex(&mut x, config.k);
    }

    let norm = x.norm();
    if norm > 0.0 {
        x /= norm;
    }
    unstack_vector(&x)
}

/// Keep the `k` complex components of largest magnitude, zeroing real and
/// imaginary halves of the rest.
fn hard_threshold_complex(x: &mut DVector<f64>, k: usize) {
    let n = x.len() / 2;
    let mut mags: Vec<(usize, f64)> = (0..n)
        .map(|i| (i, x[i] * x[i] + x[i + n] * x[i + n]))
        .collect();
    // descending magnitude, ties broken by lower index
    mags.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for &(i, _) in &mags[k..] {
        x[i] = 0.0;
        x[i + n] = 0.0;
    }
}
