//! Bussgang-linearized sparse Bayesian learning for one-bit measurements.
//!
//! Each EM iteration treats the sign nonlinearity through its second-order
//! statistics: the sign-output covariance follows the arcsine (Van Vleck)
//! law and the input/output cross-covariance is the Bussgang gain, which
//! together yield closed-form Gaussian posterior moments for the stacked
//! unknowns. The M-step then re-estimates the per-component precisions from
//! the damped posterior moments. Single-snapshot and multi-snapshot drivers
//! share the same E-step; with several snapshots the covariance work is done
//! once and reused for every snapshot mean.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{unstack_vector, OneBitMeasurements, RealStackedModel};

/// Solver settings. `a` and `b` are the Gamma hyperprior shape and rate;
/// `a = 1, b = 0` is the uninformative choice.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Gamma hyperprior shape.
    pub a: f64,
    /// Gamma hyperprior rate.
    pub b: f64,
    /// Damping factor in (0, 1]; 1 disables damping.
    pub gamma: f64,
    /// Number of EM iterations.
    pub iters: usize,
    /// Initial precisions; `None` means all ones.
    pub alpha_init: Option<DVector<f64>>,
    /// Precision ceiling; components hitting it are effectively pruned.
    pub alpha_max: f64,
    /// Ridge factor (relative to the mean diagonal) added once when the
    /// sign-covariance factorization fails.
    pub jitter: f64,
    /// Optional relative-change threshold on the damped means for early
    /// termination. Disabled by default.
    pub early_stop_tol: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            a: 1.0,
            b: 0.0,
            gamma: 0.6,
            iters: 500,
            alpha_init: None,
            alpha_max: 1e12,
            jitter: 1e-9,
            early_stop_tol: None,
        }
    }
}

impl SolverConfig {
    fn validate(&self, two_n: usize, snapshots: usize) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidConfig("damping factor must be in (0, 1]".into()));
        }
        if self.iters == 0 {
            return Err(Error::InvalidConfig("iteration count must be at least 1".into()));
        }
        if let Some(init) = &self.alpha_init {
            if init.len() != two_n {
                return Err(Error::InvalidConfig(format!(
                    "alpha_init has length {}, expected {}",
                    init.len(),
                    two_n
                )));
            }
            if init.iter().any(|&v| v <= 0.0 || !v.is_finite()) {
                return Err(Error::InvalidConfig("alpha_init must be positive".into()));
            }
        }
        // With b = 0 the precision update numerator must stay nonnegative.
        let numerator = snapshots as f64 + 2.0 * self.a - 2.0;
        if self.b == 0.0 && numerator < 0.0 {
            return Err(Error::InvalidConfig(
                "shape hyperparameter too small: precision update numerator is negative".into(),
            ));
        }
        if self.alpha_max <= 0.0 {
            return Err(Error::InvalidConfig("alpha_max must be positive".into()));
        }
        Ok(())
    }

    fn initial_alpha(&self, two_n: usize) -> DVector<f64> {
        self.alpha_init
            .clone()
            .unwrap_or_else(|| DVector::from_element(two_n, 1.0))
    }
}

/// Full E-step output: posterior moments plus the linearization statistics
/// they were computed from.
#[derive(Debug, Clone)]
pub struct EStepOutput {
    /// Posterior means, one column per snapshot (2N x L).
    pub mu_post: DMatrix<f64>,
    /// Posterior covariance, shared across snapshots (2N x 2N).
    pub sigma_post: DMatrix<f64>,
    /// Covariance of the unquantized stacked measurement (2M x 2M).
    pub c_z_bar: DMatrix<f64>,
    /// Arcsine-law covariance of the sign outputs (2M x 2M, unit diagonal).
    pub c_y_bar: DMatrix<f64>,
    /// Bussgang cross matrix between sign outputs and unknowns (2M x 2N).
    pub e: DMatrix<f64>,
}

/// Per-iteration diagnostics recorded by the drivers.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationStats {
    pub iteration: usize,
    /// Frobenius norm of the damped posterior means.
    pub mu_norm: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    /// Expected complete-data log likelihood at the current precisions.
    pub q: f64,
}

/// Diagnostics for a whole run.
#[derive(Debug, Clone, Default)]
pub struct SolveTrace {
    pub iterations: Vec<IterationStats>,
}

/// One EM iteration's worth of linearized posterior moments.
///
/// `C_z = A C_x A^T + C_w` is the covariance of the unquantized
/// measurement; normalizing by its diagonal gives the sign-output
/// covariance through the arcsine law, `C_y = (2/pi) asin(corr(C_z))`, and
/// the cross matrix `E = sqrt(2/pi) D^-1/2 A C_x`. The posterior moments
/// follow as in a linear-Gaussian model with `C_y` as the output
/// covariance. `C_y` is factorized, never inverted.
pub fn e_step(
    model: &RealStackedModel,
    alpha: &DVector<f64>,
    measurements: &OneBitMeasurements,
) -> Result<EStepOutput> {
    let ws = EStepWorkspace::compute(model, alpha, measurements.y_bar(), None)?;
    let two_n = model.stacked_unknowns();

    // Sigma_post = C_x - G^T G with G = L^-1 E.
    let mut sigma_post = DMatrix::from_diagonal(&ws.c_x_diag);
    sigma_post.gemm_tr(-1.0, &ws.g, &ws.g, 1.0);
    // symmetry can drift in the last few ulps of the gemm
    for j in 0..two_n {
        for i in 0..j {
            let v = 0.5 * (sigma_post[(i, j)] + sigma_post[(j, i)]);
            sigma_post[(i, j)] = v;
            sigma_post[(j, i)] = v;
        }
    }

    Ok(EStepOutput {
        mu_post: ws.mu_post,
        sigma_post,
        c_z_bar: ws.c_z_bar,
        c_y_bar: ws.c_y_bar,
        e: ws.e,
    })
}

/// Shared E-step computation. The drivers only need the posterior means and
/// the covariance diagonal, so the full 2N x 2N posterior covariance is
/// assembled only by [`e_step`].
struct EStepWorkspace {
    c_x_diag: DVector<f64>,
    c_z_bar: DMatrix<f64>,
    c_y_bar: DMatrix<f64>,
    e: DMatrix<f64>,
    /// `L^-1 E` where `L` is the Cholesky factor of `C_y`.
    g: DMatrix<f64>,
    mu_post: DMatrix<f64>,
    sigma_diag: DVector<f64>,
}

impl EStepWorkspace {
    fn compute(
        model: &RealStackedModel,
        alpha: &DVector<f64>,
        y_bar: &DMatrix<f64>,
        jitter: Option<f64>,
    ) -> Result<Self> {
        let a_bar = model.a_bar();
        let two_m = model.stacked_measurements();
        let two_n = model.stacked_unknowns();
        if alpha.len() != two_n {
            return Err(Error::DimensionMismatch(format!(
                "alpha has length {}, expected {}",
                alpha.len(),
                two_n
            )));
        }
        if y_bar.nrows() != two_m {
            return Err(Error::DimensionMismatch(format!(
                "measurements have {} rows, expected {}",
                y_bar.nrows(),
                two_m
            )));
        }
        if alpha.iter().any(|&v| v <= 0.0 || !v.is_finite()) {
            return Err(Error::InvalidInput("precisions must be positive".into()));
        }

        let c_x_diag = alpha.map(|v| 1.0 / v);

        // B = A C_x (column scaling by the prior variances)
        let mut b_mat = a_bar.clone();
        for (j, mut col) in b_mat.column_iter_mut().enumerate() {
            col *= c_x_diag[j];
        }

        // C_z = B A^T + C_w
        let a_bar_t = a_bar.transpose();
        let mut c_z_bar = model.c_w_bar().clone();
        c_z_bar.gemm(1.0, &b_mat, &a_bar_t, 1.0);

        let mut d_inv_sqrt = DVector::zeros(two_m);
        for i in 0..two_m {
            let d = c_z_bar[(i, i)];
            if d <= 0.0 || !d.is_finite() {
                return Err(Error::NumericalBreakdown {
                    iteration: 0,
                    detail: format!("nonpositive sign-input variance {d} at row {i}"),
                });
            }
            d_inv_sqrt[i] = 1.0 / d.sqrt();
        }

        // C_y = (2/pi) asin(D^-1/2 C_z D^-1/2), clipped and symmetrized. The
        // diagonal is exactly 1 by construction; setting it directly avoids
        // asin's unbounded slope amplifying the rounding in D^-1/2.
        let two_over_pi = 2.0 / PI;
        let mut c_y_bar = DMatrix::zeros(two_m, two_m);
        for j in 0..two_m {
            c_y_bar[(j, j)] = 1.0;
            for i in (j + 1)..two_m {
                let rho = (c_z_bar[(i, j)] * d_inv_sqrt[i] * d_inv_sqrt[j]).clamp(-1.0, 1.0);
                let v = two_over_pi * rho.asin();
                c_y_bar[(i, j)] = v;
                c_y_bar[(j, i)] = v;
            }
        }
        if let Some(eps) = jitter {
            for i in 0..two_m {
                c_y_bar[(i, i)] += eps;
            }
        }

        // E = sqrt(2/pi) D^-1/2 B (row scaling)
        let scale = two_over_pi.sqrt();
        let mut e = b_mat;
        for i in 0..two_m {
            let f = scale * d_inv_sqrt[i];
            for j in 0..two_n {
                e[(i, j)] *= f;
            }
        }

        let chol = match linalg::cholesky_lower(&c_y_bar) {
            Some(l) => l,
            None => {
                return Err(Error::NumericalBreakdown {
                    iteration: 0,
                    detail: format!(
                        "sign-covariance factorization failed (condition estimate {:.3e})",
                        condition_estimate(&c_y_bar)
                    ),
                })
            }
        };

        let mut g = e.clone();
        linalg::solve_lower_inplace(&chol, &mut g);

        let mut sigma_diag = DVector::zeros(two_n);
        for j in 0..two_n {
            sigma_diag[j] = c_x_diag[j] - g.column(j).norm_squared();
        }

        // mu_l = E^T C_y^-1 y_l = G^T (L^-1 y_l)
        let mut v = y_bar.clone();
        linalg::solve_lower_inplace(&chol, &mut v);
        let mu_post = g.tr_mul(&v);

        Ok(Self {
            c_x_diag,
            c_z_bar,
            c_y_bar,
            e,
            g,
            mu_post,
            sigma_diag,
        })
    }

    /// Retry with a small diagonal ridge on `C_y` before giving up.
    fn compute_with_retry(
        model: &RealStackedModel,
        alpha: &DVector<f64>,
        y_bar: &DMatrix<f64>,
        jitter: f64,
    ) -> Result<Self> {
        match Self::compute(model, alpha, y_bar, None) {
            Err(Error::NumericalBreakdown { .. }) => {
                // unit arcsine diagonal, so the mean diagonal is 1
                Self::compute(model, alpha, y_bar, Some(jitter))
            }
            other => other,
        }
    }
}

fn condition_estimate(m: &DMatrix<f64>) -> f64 {
    let eig = m.clone().symmetric_eigenvalues();
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if min.abs() < f64::MIN_POSITIVE {
        f64::INFINITY
    } else {
        (max / min).abs()
    }
}

/// Convex combination of new and previous posterior moments. The first
/// iteration bypasses this (there is nothing meaningful to damp against).
pub fn damp(
    new_mu: &DMatrix<f64>,
    new_sigma: &DMatrix<f64>,
    prev_mu: &DMatrix<f64>,
    prev_sigma: &DMatrix<f64>,
    gamma: f64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let mu = gamma * new_mu + (1.0 - gamma) * prev_mu;
    let sigma = gamma * new_sigma + (1.0 - gamma) * prev_sigma;
    (mu, sigma)
}

/// Single-snapshot precision update:
/// `alpha_i = (2a - 1) / (2b + Sigma_ii + mu_i^2)`, capped at `alpha_max`.
pub fn m_step_smv(
    mu_bar: &DVector<f64>,
    sigma_bar: &DMatrix<f64>,
    a: f64,
    b: f64,
    alpha_max: f64,
) -> DVector<f64> {
    let sigma_diag = sigma_bar.diagonal();
    m_step_smv_diag(mu_bar, &sigma_diag, a, b, alpha_max)
}

fn m_step_smv_diag(
    mu_bar: &DVector<f64>,
    sigma_diag: &DVector<f64>,
    a: f64,
    b: f64,
    alpha_max: f64,
) -> DVector<f64> {
    let numerator = 2.0 * a - 1.0;
    DVector::from_fn(mu_bar.len(), |i, _| {
        let denom = 2.0 * b + sigma_diag[i] + mu_bar[i] * mu_bar[i];
        cap_alpha(numerator / denom, alpha_max)
    })
}

/// Multi-snapshot precision update:
/// `alpha_i = (L + 2a - 2) / (2b + L Sigma_ii + sum_l mu_{l,i}^2)`.
/// Reduces exactly to the single-snapshot rule at `L = 1`.
pub fn m_step_mmv(
    mu_bars: &DMatrix<f64>,
    sigma_bar: &DMatrix<f64>,
    a: f64,
    b: f64,
    alpha_max: f64,
) -> DVector<f64> {
    let sigma_diag = sigma_bar.diagonal();
    m_step_mmv_diag(mu_bars, &sigma_diag, a, b, alpha_max)
}

fn m_step_mmv_diag(
    mu_bars: &DMatrix<f64>,
    sigma_diag: &DVector<f64>,
    a: f64,
    b: f64,
    alpha_max: f64,
) -> DVector<f64> {
    let l = mu_bars.ncols() as f64;
    let numerator = l + 2.0 * a - 2.0;
    DVector::from_fn(mu_bars.nrows(), |i, _| {
        let mu_sq: f64 = mu_bars.row(i).iter().map(|&v| v * v).sum();
        let denom = 2.0 * b + l * sigma_diag[i] + mu_sq;
        cap_alpha(numerator / denom, alpha_max)
    })
}

fn cap_alpha(v: f64, alpha_max: f64) -> f64 {
    if !v.is_finite() || v <= 0.0 || v > alpha_max {
        alpha_max
    } else {
        v
    }
}

/// Expected complete-data log likelihood of the precisions given frozen
/// damped posterior moments, up to an additive constant. The precision
/// update is its exact per-component maximizer.
pub fn q_value(
    alpha: &DVector<f64>,
    mu_bars: &DMatrix<f64>,
    sigma_bar: &DMatrix<f64>,
    a: f64,
    b: f64,
) -> f64 {
    let sigma_diag = sigma_bar.diagonal();
    q_value_diag(alpha, mu_bars, &sigma_diag, a, b)
}

fn q_value_diag(
    alpha: &DVector<f64>,
    mu_bars: &DMatrix<f64>,
    sigma_diag: &DVector<f64>,
    a: f64,
    b: f64,
) -> f64 {
    let l = mu_bars.ncols() as f64;
    let mut q = 0.0;
    for i in 0..alpha.len() {
        let mu_sq: f64 = mu_bars.row(i).iter().map(|&v| v * v).sum();
        let second_moment = l * sigma_diag[i] + mu_sq;
        let log_a = alpha[i].ln();
        q += -0.5 * alpha[i] * second_moment + 0.5 * l * log_a + (a - 1.0) * log_a
            - b * alpha[i];
    }
    q
}

/// Single-snapshot driver. Returns the unstacked complex estimate together
/// with per-iteration diagnostics.
pub fn run_smv(
    model: &RealStackedModel,
    y_bar: &DVector<f64>,
    config: &SolverConfig,
) -> Result<(DVector<Complex64>, SolveTrace)> {
    let y = DMatrix::from_column_slice(y_bar.len(), 1, y_bar.as_slice());
    let (mu_bar, trace) = run_stacked(model, &y, config)?;
    let x_hat = unstack_vector(&mu_bar.column(0).into_owned())?;
    Ok((x_hat, trace))
}

/// Multi-snapshot driver. All snapshots share the measurement matrix and
/// noise covariance; the covariance half of the E-step is computed once per
/// iteration and reused for every snapshot mean.
pub fn run_mmv(
    model: &RealStackedModel,
    measurements: &OneBitMeasurements,
    config: &SolverConfig,
) -> Result<(DMatrix<Complex64>, SolveTrace)> {
    let (mu_bar, trace) = run_stacked(model, measurements.y_bar(), config)?;
    let n = model.stacked_unknowns() / 2;
    let l = mu_bar.ncols();
    let mut x_hat = DMatrix::zeros(n, l);
    for snap in 0..l {
        let col = unstack_vector(&mu_bar.column(snap).into_owned())?;
        x_hat.set_column(snap, &col);
    }
    Ok((x_hat, trace))
}

fn run_stacked(
    model: &RealStackedModel,
    y_bar: &DMatrix<f64>,
    config: &SolverConfig,
) -> Result<(DMatrix<f64>, SolveTrace)> {
    let two_n = model.stacked_unknowns();
    let snapshots = y_bar.ncols();
    config.validate(two_n, snapshots)?;
    if y_bar.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::InvalidInput(
            "one-bit measurements must be exactly +/-1".into(),
        ));
    }

    let mut alpha = config.initial_alpha(two_n);
    let mut mu_bar = DMatrix::zeros(two_n, snapshots);
    let mut sigma_diag_bar = DVector::zeros(two_n);
    let mut trace = SolveTrace::default();

    for t in 1..=config.iters {
        let ws = EStepWorkspace::compute_with_retry(model, &alpha, y_bar, config.jitter)
            .map_err(|e| match e {
                Error::NumericalBreakdown { detail, .. } => {
                    Error::NumericalBreakdown { iteration: t, detail }
                }
                other => other,
            })?;

        let prev_norm = mu_bar.norm();
        if t == 1 {
            // Nothing to damp against yet; anchor at the first E-step.
            mu_bar = ws.mu_post;
            sigma_diag_bar = ws.sigma_diag;
        } else {
            let g = config.gamma;
            mu_bar.zip_apply(&ws.mu_post, |old, new| *old = g * new + (1.0 - g) * *old);
            sigma_diag_bar
                .zip_apply(&ws.sigma_diag, |old, new| *old = g * new + (1.0 - g) * *old);
        }

        alpha = if snapshots == 1 {
            m_step_smv_diag(
                &mu_bar.column(0).into_owned(),
                &sigma_diag_bar,
                config.a,
                config.b,
                config.alpha_max,
            )
        } else {
            m_step_mmv_diag(&mu_bar, &sigma_diag_bar, config.a, config.b, config.alpha_max)
        };

        trace
            .iterations
            .push(iteration_stats(t, &mu_bar, &sigma_diag_bar, &alpha, config));

        if let Some(tol) = config.early_stop_tol {
            if t > 1 {
                let scale = mu_bar.norm().max(f64::MIN_POSITIVE);
                if (mu_bar.norm() - prev_norm).abs() / scale < tol {
                    break;
                }
            }
        }
    }

    Ok((mu_bar, trace))
}

fn iteration_stats(
    t: usize,
    mu_bar: &DMatrix<f64>,
    sigma_diag_bar: &DVector<f64>,
    alpha: &DVector<f64>,
    config: &SolverConfig,
) -> IterationStats {
    IterationStats {
        iteration: t,
        mu_norm: mu_bar.norm(),
        alpha_min: alpha.iter().cloned().fold(f64::INFINITY, f64::min),
        alpha_max: alpha.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        q: q_value_diag(alpha, mu_bar, sigma_diag_bar, config.a, config.b),
    }
}
