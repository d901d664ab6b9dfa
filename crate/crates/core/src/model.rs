//! Complex one-bit observation model and its real-stacked equivalent.
//!
//! The measurement model is `y = csgn(A x + w)` with `csgn` applying the
//! sign separately to real and imaginary parts. Every solver in this crate
//! works on the equivalent real form obtained by stacking real parts on top
//! of imaginary parts, which doubles both dimensions.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

const HERMITIAN_TOL: f64 = 1e-12;

/// Sign with the zero case fixed to +1, so measurement synthesis is
/// deterministic.
#[inline]
pub fn sgn(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Componentwise complex sign: `sgn(Re r) + j sgn(Im r)`.
pub fn csgn(r: &DVector<Complex64>) -> DVector<Complex64> {
    r.map(|v| Complex64::new(sgn(v.re), sgn(v.im)))
}

/// Complex linear measurement model: known matrix `A` and circularly
/// symmetric Gaussian noise with Hermitian PSD covariance `C_w`.
#[derive(Debug, Clone)]
pub struct ComplexLinearModel {
    a: DMatrix<Complex64>,
    c_w: DMatrix<Complex64>,
}

impl ComplexLinearModel {
    pub fn new(a: DMatrix<Complex64>, c_w: DMatrix<Complex64>) -> Result<Self> {
        let m = a.nrows();
        if c_w.nrows() != m || c_w.ncols() != m {
            return Err(Error::DimensionMismatch(format!(
                "A is {}x{} but C_w is {}x{}",
                m,
                a.ncols(),
                c_w.nrows(),
                c_w.ncols()
            )));
        }
        let herm_err = (&c_w - c_w.adjoint()).iter().map(|v| v.norm()).fold(0.0, f64::max);
        if herm_err > HERMITIAN_TOL {
            return Err(Error::NotHermitian);
        }
        Ok(Self { a, c_w })
    }

    /// Isotropic noise `C_w = sigma_w2 * I`.
    pub fn with_isotropic_noise(a: DMatrix<Complex64>, sigma_w2: f64) -> Result<Self> {
        let m = a.nrows();
        Self::new(a, DMatrix::from_diagonal_element(m, m, Complex64::new(sigma_w2, 0.0)))
    }

    pub fn measurement_matrix(&self) -> &DMatrix<Complex64> {
        &self.a
    }

    pub fn noise_covariance(&self) -> &DMatrix<Complex64> {
        &self.c_w
    }

    pub fn measurements(&self) -> usize {
        self.a.nrows()
    }

    pub fn unknowns(&self) -> usize {
        self.a.ncols()
    }
}

/// Real-stacked form of a [`ComplexLinearModel`]: `A_bar` is
/// `[[Re A, -Im A], [Im A, Re A]]` and `C_w_bar` is half the analogous
/// block matrix of `C_w`, so that real and imaginary noise parts each carry
/// half the complex variance.
#[derive(Debug, Clone)]
pub struct RealStackedModel {
    a_bar: DMatrix<f64>,
    c_w_bar: DMatrix<f64>,
}

impl RealStackedModel {
    /// Build directly from the stacked parts. `a_bar` must be 2M x 2N and
    /// `c_w_bar` a symmetric 2M x 2M matrix.
    pub fn new(a_bar: DMatrix<f64>, c_w_bar: DMatrix<f64>) -> Result<Self> {
        let two_m = a_bar.nrows();
        if !a_bar.ncols().is_multiple_of(2) || !two_m.is_multiple_of(2) {
            return Err(Error::DimensionMismatch(
                "stacked model dimensions must be even".into(),
            ));
        }
        if c_w_bar.nrows() != two_m || c_w_bar.ncols() != two_m {
            return Err(Error::DimensionMismatch(format!(
                "A_bar has {} rows but C_w_bar is {}x{}",
                two_m,
                c_w_bar.nrows(),
                c_w_bar.ncols()
            )));
        }
        let sym_err = (&c_w_bar - c_w_bar.transpose())
            .iter()
            .map(|v| v.abs())
            .fold(0.0, f64::max);
        if sym_err > HERMITIAN_TOL {
            return Err(Error::NotHermitian);
        }
        Ok(Self { a_bar, c_w_bar })
    }

    pub fn a_bar(&self) -> &DMatrix<f64> {
        &self.a_bar
    }

    pub fn c_w_bar(&self) -> &DMatrix<f64> {
        &self.c_w_bar
    }

    /// 2M, the stacked measurement dimension.
    pub fn stacked_measurements(&self) -> usize {
        self.a_bar.nrows()
    }

    /// 2N, the stacked unknown dimension.
    pub fn stacked_unknowns(&self) -> usize {
        self.a_bar.ncols()
    }
}

/// One-bit measurements in stacked real form: every entry is exactly +/-1,
/// one column per snapshot.
#[derive(Debug, Clone)]
pub struct OneBitMeasurements {
    y_bar: DMatrix<f64>,
}

impl OneBitMeasurements {
    pub fn new(y_bar: DMatrix<f64>) -> Result<Self> {
        if y_bar.ncols() == 0 {
            return Err(Error::InvalidInput("need at least one snapshot".into()));
        }
        if y_bar.iter().any(|&v| v != 1.0 && v != -1.0) {
            return Err(Error::InvalidInput(
                "one-bit measurements must be exactly +/-1".into(),
            ));
        }
        Ok(Self { y_bar })
    }

    pub fn y_bar(&self) -> &DMatrix<f64> {
        &self.y_bar
    }

    pub fn snapshots(&self) -> usize {
        self.y_bar.ncols()
    }

    pub fn snapshot(&self, l: usize) -> DVector<f64> {
        self.y_bar.column(l).into_owned()
    }
}

/// Complex -> real block stacking of the measurement matrix and noise
/// covariance.
pub fn stack_model(m: &ComplexLinearModel) -> RealStackedModel {
    let a_bar = stack_matrix_blocks(m.measurement_matrix(), 1.0);
    let c_w_bar = stack_matrix_blocks(m.noise_covariance(), 0.5);
    RealStackedModel { a_bar, c_w_bar }
}

fn stack_matrix_blocks(a: &DMatrix<Complex64>, scale: f64) -> DMatrix<f64> {
    let (m, n) = a.shape();
    DMatrix::from_fn(2 * m, 2 * n, |i, j| {
        let v = a[(i % m, j % n)];
        let entry = match (i >= m, j >= n) {
            (false, false) | (true, true) => v.re,
            (false, true) => -v.im,
            (true, false) => v.im,
        };
        scale * entry
    })
}

/// `[Re x; Im x]` stacking of a complex vector.
pub fn stack_vector(x: &DVector<Complex64>) -> DVector<f64> {
    let n = x.len();
    DVector::from_fn(2 * n, |i, _| if i < n { x[i].re } else { x[i - n].im })
}

/// Inverse of [`stack_vector`]. Fails on odd-length input.
pub fn unstack_vector(x_bar: &DVector<f64>) -> Result<DVector<Complex64>> {
    if !x_bar.len().is_multiple_of(2) {
        return Err(Error::DimensionMismatch(
            "stacked vector must have even length".into(),
        ));
    }
    let n = x_bar.len() / 2;
    Ok(DVector::from_fn(n, |i, _| Complex64::new(x_bar[i], x_bar[i + n])))
}

/// Draw one-bit measurements `y_l = csgn(A x_l + w_l)` for each column of
/// `x`, with noise drawn independently per snapshot from the model's
/// covariance. Deterministic for a fixed RNG state.
pub fn synthesize<R: Rng + ?Sized>(
    m: &ComplexLinearModel,
    x: &DMatrix<Complex64>,
    rng: &mut R,
) -> Result<OneBitMeasurements> {
    if x.nrows() != m.unknowns() {
        return Err(Error::DimensionMismatch(format!(
            "signal has {} rows, model expects {}",
            x.nrows(),
            m.unknowns()
        )));
    }
    let stacked = stack_model(m);
    let two_m = stacked.stacked_measurements();
    let l = x.ncols();

    let noise_chol = noise_factor(stacked.c_w_bar())?;

    let mut y_bar = DMatrix::zeros(two_m, l);
    for snap in 0..l {
        let xs = stack_vector(&x.column(snap).into_owned());
        let mut z = stacked.a_bar() * xs;
        if let Some(factor) = &noise_chol {
            let white: DVector<f64> =
                DVector::from_fn(two_m, |_, _| rng.sample::<f64, _>(StandardNormal));
            z += factor * white;
        }
        for (out, &v) in y_bar.column_mut(snap).iter_mut().zip(z.iter()) {
            *out = sgn(v);
        }
    }
    OneBitMeasurements::new(y_bar)
}

/// Lower Cholesky factor of the stacked noise covariance, or `None` for the
/// noiseless (all-zero) case. A tiny ridge retry admits PSD-singular
/// covariances before declaring the matrix non-PSD.
fn noise_factor(c_w_bar: &DMatrix<f64>) -> Result<Option<DMatrix<f64>>> {
    if c_w_bar.iter().all(|&v| v == 0.0) {
        return Ok(None);
    }
    if let Some(chol) = nalgebra::Cholesky::new(c_w_bar.clone()) {
        return Ok(Some(chol.unpack()));
    }
    let mean_diag = c_w_bar.diagonal().mean();
    if mean_diag > 0.0 {
        let n = c_w_bar.nrows();
        let ridged = c_w_bar + DMatrix::from_diagonal_element(n, n, 1e-12 * mean_diag);
        if let Some(chol) = nalgebra::Cholesky::new(ridged) {
            return Ok(Some(chol.unpack()));
        }
    }
    Err(Error::NotPsd)
}
