//! Pointwise and uniform inference for the coefficient process.
//!
//! Variance estimation follows the sandwich form: with `ψ_i(τ) = τ −
//! 1{r_i(τ) ≤ 0}` the score covariance is
//!
//! ```text
//! Σ̂(τ, τ') = (1/n) Σ_i ψ_i(τ) ψ_i(τ') x_i x_i' ,
//! ```
//!
//! and the asymptotic covariance of `√n(β̂(τ) − β(τ))` is
//! `V(τ) = J(τ)⁻¹ Σ̂(τ, τ) J(τ)⁻¹` with the kernel-smoothed Jacobian `J`.
//!
//! Tests and bands calibrate against bootstrap draws of the process:
//!
//! * [`pointwise_test`] — a studentized normal test of one coefficient at
//!   one grid point, with the standard error taken from the bootstrap
//!   spread.
//! * [`functional_test`] — sup-type (Kolmogorov–Smirnov) and mean-square
//!   (Cramér–von Mises) statistics of the standardized deviation process
//!   across the whole grid, with critical values from the bootstrap order
//!   statistics.
//! * [`uniform_bands`] — confidence bands with joint coverage across all
//!   grid points and coefficients.

use crate::bootstrap::BootstrapDraws;
use crate::data::Dataset;
use crate::error::Error;
use crate::linalg::Cholesky;
use crate::model::CoefProcess;
use crate::normal;
use crate::onestep::{hall_sheather_bandwidth, powell_jacobian, JacobianEstimate};
use crate::Result;
use ndarray::{Array1, Array2};
use serde::Serialize;

/// Sandwich variance of the process at every grid point.
#[derive(Debug, Clone, Serialize)]
pub struct ProcessVariance {
    /// Grid the estimates align to.
    pub taus: Vec<f64>,
    /// Covariance of `√n(β̂(τ) − β(τ))` at each grid point.
    pub covariances: Vec<Array2<f64>>,
    /// Standard errors of `β̂_j(τ)` (the `1/√n` is already applied),
    /// `(grid point × coefficient)`.
    pub std_errors: Array2<f64>,
}

/// Score covariance `Σ̂(τ_a, τ_b)` between two grid points of a fitted
/// process.
pub fn score_covariance(
    ds: &Dataset,
    proc: &CoefProcess,
    grid_a: usize,
    grid_b: usize,
) -> Result<Array2<f64>> {
    let fits = proc.fits();
    if grid_a >= fits.len() || grid_b >= fits.len() {
        return Err(Error::InvalidArgument(format!(
            "grid index out of range: {} and {} with {} grid points",
            grid_a,
            grid_b,
            fits.len()
        )));
    }
    let psi_a = psi_values(ds, proc, grid_a);
    let psi_b = psi_values(ds, proc, grid_b);
    let (n, k) = (ds.n(), ds.k());
    // Σ = (1/n) X' diag(ψ_a ψ_b) X via a scaled-row product.
    let mut left = Array2::<f64>::zeros((n, k));
    for i in 0..n {
        let w = psi_a[i] * psi_b[i];
        for j in 0..k {
            left[[i, j]] = w * ds.x()[[i, j]];
        }
    }
    let mut sigma = left.t().dot(ds.x());
    sigma.mapv_inplace(|v| v / n as f64);
    Ok(sigma)
}

fn psi_values(ds: &Dataset, proc: &CoefProcess, j: usize) -> Array1<f64> {
    let fit = &proc.fits()[j];
    let r = ds.residuals(&fit.beta);
    r.mapv(|u| if u <= 0.0 { fit.tau - 1.0 } else { fit.tau })
}

/// Sandwich variance at every grid point.  Jacobians are taken from the
/// process when attached, otherwise estimated at level `alpha`'s bandwidth.
pub fn process_variance(ds: &Dataset, proc: &CoefProcess, alpha: f64) -> Result<ProcessVariance> {
    let n_grid = proc.grid().len();
    let k = proc.k();
    let owned: Vec<JacobianEstimate>;
    let jacobians: &[JacobianEstimate] = match proc.jacobians.as_ref() {
        Some(jacs) => jacs,
        None => {
            let mut out = Vec::with_capacity(n_grid);
            for fit in proc.fits() {
                let h = hall_sheather_bandwidth(fit.tau, ds.n(), alpha)?;
                out.push(powell_jacobian(ds, &fit.beta, h, fit.tau)?);
            }
            owned = out;
            &owned
        }
    };

    let mut covariances = Vec::with_capacity(n_grid);
    let mut std_errors = Array2::<f64>::zeros((n_grid, k));
    for j in 0..n_grid {
        let jac = &jacobians[j];
        if jac.is_singular() {
            return Err(Error::SingularJacobian {
                tau: jac.tau,
                min_eigenvalue: jac.min_eigenvalue,
                threshold: jac.singular_threshold(),
            });
        }
        let sigma = score_covariance(ds, proc, j, j)?;
        let chol = Cholesky::factor(&jac.j_hat.view(), "sandwich variance Jacobian")?;
        // V = J⁻¹ Σ J⁻¹, built by solving on both sides.
        let inner = chol.solve_mat(&sigma.view());
        let v = chol.solve_mat(&inner.t().to_owned().view());
        for c in 0..k {
            std_errors[[j, c]] = (v[[c, c]].max(0.0) / ds.n() as f64).sqrt();
        }
        covariances.push(v);
    }
    Ok(ProcessVariance {
        taus: proc.grid().taus().to_vec(),
        covariances,
        std_errors,
    })
}

/// Which functional of the deviation process a test is built on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestKind {
    /// Studentized statistic at a single grid point.
    Pointwise,
    /// Supremum of the absolute standardized deviations over the grid.
    KolmogorovSmirnov,
    /// Grid average of the squared standardized deviations.
    CramerVonMises,
}

/// The hypothesized value of one coefficient across the grid.
#[derive(Debug, Clone)]
pub enum NullValue {
    /// The same value at every grid point (e.g. 0 for an exclusion test).
    Constant(f64),
    /// A separate value per grid point, aligned with the grid.
    Curve(Vec<f64>),
}

impl NullValue {
    fn at(&self, j: usize) -> f64 {
        match self {
            NullValue::Constant(c) => *c,
            NullValue::Curve(v) => v[j],
        }
    }

    fn check_len(&self, n_grid: usize) -> Result<()> {
        if let NullValue::Curve(v) = self {
            if v.len() != n_grid {
                return Err(Error::DimensionMismatch {
                    context: "null curve length vs grid points",
                    expected: n_grid,
                    got: v.len(),
                });
            }
        }
        Ok(())
    }
}

/// Outcome of a hypothesis test.
#[derive(Debug, Clone, Serialize)]
pub struct TestResult {
    pub kind: TestKind,
    /// Index of the tested coefficient.
    pub coefficient: usize,
    /// Test statistic on the standardized scale.
    pub statistic: f64,
    /// Bootstrap (or normal) critical value at level `alpha`.
    pub critical_value: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
}

/// Studentized test of `β_c(τ) = null` at a single grid point, with the
/// standard error estimated from the bootstrap draw spread and normal
/// critical values.
pub fn pointwise_test(
    proc: &CoefProcess,
    draws: &BootstrapDraws,
    tau: f64,
    coefficient: usize,
    null_value: f64,
    alpha: f64,
) -> Result<TestResult> {
    check_alignment(proc, draws, coefficient, alpha)?;
    let j = proc.grid().index_of(tau).ok_or(Error::OutsideGrid {
        tau,
        lo: proc.grid().taus()[0],
        hi: *proc.grid().taus().last().unwrap(),
    })?;
    let b_reps = draws.n_draws();
    if b_reps < 2 {
        return Err(Error::InvalidArgument(
            "pointwise test needs at least two bootstrap draws".to_string(),
        ));
    }
    let values: Vec<f64> = (0..b_reps).map(|b| draws.draws()[[b, j, coefficient]]).collect();
    let mean = values.iter().sum::<f64>() / b_reps as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b_reps - 1) as f64;
    let se = var.sqrt();
    if !(se > 0.0) {
        return Err(Error::InvalidArgument(
            "bootstrap draws are degenerate: zero spread at the tested point".to_string(),
        ));
    }
    let statistic = (proc.fits()[j].beta[coefficient] - null_value).abs() / se;
    let critical_value = normal::inv_cdf(1.0 - alpha / 2.0);
    let p_value = 2.0 * (1.0 - normal::cdf(statistic));
    Ok(TestResult {
        kind: TestKind::Pointwise,
        coefficient,
        statistic,
        critical_value,
        p_value,
        alpha,
        reject: p_value <= alpha,
    })
}

/// Kolmogorov–Smirnov or Cramér–von Mises test of one coefficient's path
/// against a null curve, calibrated by the bootstrap.
///
/// The observed statistic aggregates the standardized deviations
/// `(β̂_c(τ) − null(τ))/ŝ_c(τ)` over the grid; each bootstrap replicate
/// contributes the same functional of `(β*_c(τ) − β̂_c(τ))/ŝ_c(τ)`.  The
/// critical value is the `⌈(1−α)(B+1)⌉`-th order statistic of the replicate
/// statistics (`+∞` when there are too few replicates to resolve the
/// level), and the p-value is `(1 + #{T_b ≥ T_obs}) / (B + 1)`.
pub fn functional_test(
    proc: &CoefProcess,
    variance: &ProcessVariance,
    draws: &BootstrapDraws,
    coefficient: usize,
    null_value: &NullValue,
    kind: TestKind,
    alpha: f64,
) -> Result<TestResult> {
    if kind == TestKind::Pointwise {
        return Err(Error::InvalidArgument(
            "pointwise tests are run with pointwise_test, not functional_test".to_string(),
        ));
    }
    check_alignment(proc, draws, coefficient, alpha)?;
    check_variance_alignment(proc, variance)?;
    let n_grid = proc.grid().len();
    null_value.check_len(n_grid)?;

    let ses: Vec<f64> = (0..n_grid)
        .map(|j| variance.std_errors[[j, coefficient]])
        .collect();
    if ses.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::InvalidArgument(
            "a zero standard error makes the standardized deviation process ill-defined"
                .to_string(),
        ));
    }

    let aggregate = |devs: &dyn Fn(usize) -> f64| -> f64 {
        match kind {
            TestKind::KolmogorovSmirnov => (0..n_grid)
                .map(|j| devs(j).abs())
                .fold(0.0_f64, f64::max),
            TestKind::CramerVonMises => {
                (0..n_grid).map(|j| devs(j).powi(2)).sum::<f64>() / n_grid as f64
            }
            TestKind::Pointwise => unreachable!(),
        }
    };

    let observed = {
        let dev = |j: usize| (proc.fits()[j].beta[coefficient] - null_value.at(j)) / ses[j];
        aggregate(&dev)
    };
    let b_reps = draws.n_draws();
    let mut replicated: Vec<f64> = (0..b_reps)
        .map(|b| {
            let dev = |j: usize| {
                (draws.draws()[[b, j, coefficient]] - proc.fits()[j].beta[coefficient]) / ses[j]
            };
            aggregate(&dev)
        })
        .collect();

    let critical_value = order_statistic_quantile(&mut replicated, alpha);
    let exceed = replicated.iter().filter(|&&t| t >= observed).count();
    let p_value = (1 + exceed) as f64 / (b_reps + 1) as f64;
    Ok(TestResult {
        kind,
        coefficient,
        statistic: observed,
        critical_value,
        p_value,
        alpha,
        reject: p_value <= alpha,
    })
}

/// `⌈(1−α)(B+1)⌉`-th order statistic (ascending), `+∞` when it exceeds `B`.
fn order_statistic_quantile(values: &mut [f64], alpha: f64) -> f64 {
    let b = values.len();
    let rank = ((1.0 - alpha) * (b + 1) as f64).ceil() as usize;
    if rank == 0 {
        return f64::NEG_INFINITY;
    }
    if rank > b {
        return f64::INFINITY;
    }
    let (_, v, _) = values.select_nth_unstable_by(rank - 1, |x, y| x.total_cmp(y));
    *v
}

/// Confidence bands with joint coverage across every grid point and every
/// coefficient.
#[derive(Debug, Clone, Serialize)]
pub struct UniformBands {
    pub taus: Vec<f64>,
    /// Lower limits, `(grid point × coefficient)`.
    pub lower: Array2<f64>,
    /// Upper limits, `(grid point × coefficient)`.
    pub upper: Array2<f64>,
    /// Half-width multiplier applied to the standard errors.
    pub critical_value: f64,
    pub alpha: f64,
}

/// Uniform bands `β̂_j(τ) ± c·ŝ_j(τ)` where `c` is the bootstrap
/// `⌈(1−α)(B+1)⌉`-th order statistic of
/// `max over grid points and coefficients of |β*_j(τ) − β̂_j(τ)|/ŝ_j(τ)`,
/// giving simultaneous coverage over the whole grid and all coefficients.
pub fn uniform_bands(
    proc: &CoefProcess,
    variance: &ProcessVariance,
    draws: &BootstrapDraws,
    alpha: f64,
) -> Result<UniformBands> {
    check_alignment(proc, draws, 0, alpha)?;
    check_variance_alignment(proc, variance)?;
    let n_grid = proc.grid().len();
    let k = proc.k();
    if variance.std_errors.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::InvalidArgument(
            "a zero standard error makes the standardized deviation process ill-defined"
                .to_string(),
        ));
    }

    let mut max_stats: Vec<f64> = (0..draws.n_draws())
        .map(|b| {
            let mut m = 0.0_f64;
            for j in 0..n_grid {
                for c in 0..k {
                    let dev = (draws.draws()[[b, j, c]] - proc.fits()[j].beta[c]).abs()
                        / variance.std_errors[[j, c]];
                    m = m.max(dev);
                }
            }
            m
        })
        .collect();
    let critical_value = order_statistic_quantile(&mut max_stats, alpha);

    let mut lower = Array2::<f64>::zeros((n_grid, k));
    let mut upper = Array2::<f64>::zeros((n_grid, k));
    for j in 0..n_grid {
        for c in 0..k {
            let center = proc.fits()[j].beta[c];
            let half = critical_value * variance.std_errors[[j, c]];
            lower[[j, c]] = center - half;
            upper[[j, c]] = center + half;
        }
    }
    Ok(UniformBands {
        taus: proc.grid().taus().to_vec(),
        lower,
        upper,
        critical_value,
        alpha,
    })
}

fn check_alignment(
    proc: &CoefProcess,
    draws: &BootstrapDraws,
    coefficient: usize,
    alpha: f64,
) -> Result<()> {
    if draws.grid().len() != proc.grid().len()
        || draws
            .grid()
            .taus()
            .iter()
            .zip(proc.grid().taus())
            .any(|(a, b)| (a - b).abs() > crate::grid::GRID_SNAP_TOL)
    {
        return Err(Error::InvalidArgument(
            "bootstrap draws were computed on a different grid than the process".to_string(),
        ));
    }
    if draws.k() != proc.k() {
        return Err(Error::DimensionMismatch {
            context: "bootstrap draw coefficients vs process coefficients",
            expected: proc.k(),
            got: draws.k(),
        });
    }
    if coefficient >= proc.k() {
        return Err(Error::InvalidArgument(format!(
            "coefficient index {} out of range for {} coefficients",
            coefficient,
            proc.k()
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test level must lie in (0, 1), got {alpha}"
        )));
    }
    Ok(())
}

fn check_variance_alignment(proc: &CoefProcess, variance: &ProcessVariance) -> Result<()> {
    if variance.taus.len() != proc.grid().len() || variance.std_errors.nrows() != proc.grid().len()
    {
        return Err(Error::DimensionMismatch {
            context: "variance grid points vs process grid points",
            expected: proc.grid().len(),
            got: variance.taus.len(),
        });
    }
    if variance.std_errors.ncols() != proc.k() {
        return Err(Error::DimensionMismatch {
            context: "variance coefficients vs process coefficients",
            expected: proc.k(),
            got: variance.std_errors.ncols(),
        });
    }
    Ok(())
}
