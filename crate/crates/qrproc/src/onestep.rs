//! One-step (Newton) traversal of the quantile coefficient process.
//!
//! Solving one grid point exactly and updating neighbors by a single Newton
//! step on the quantile moment condition gives estimates that are
//! first-order equivalent to the exact solution, at a per-point cost of one
//! weighted Gram matrix instead of an interior-point solve.  The moment
//! condition at quantile index `τ` is
//!
//! ```text
//! M(τ, β) = (1/n) Σ_i (τ − 1{y_i − x_i'β ≤ 0}) x_i ,
//! ```
//!
//! its derivative in `β` is `−J(τ)` with `J` the density-weighted design
//! matrix `E[f(x'β) x x']`, estimated here by the kernel-smoothed
//! [`powell_jacobian`].  The Newton step from a neighboring solution is
//! `β ← β + J⁻¹ M(τ, β)`.
//!
//! [`fit_process_onestep`] anchors the traversal with one exact fit at the
//! grid point nearest the median (where the moment condition is best
//! conditioned), then marches outward in both directions, re-estimating the
//! Jacobian at every step.  The per-point Jacobians are retained on the
//! returned process for downstream variance estimation.

use crate::data::Dataset;
use crate::error::Error;
use crate::grid::QuantileGrid;
use crate::linalg::{sym_eigenvalues, Cholesky};
use crate::model::{self, CoefProcess, Engine, QrFit};
use crate::normal;
use crate::preprocess::{fit_single_pk, PreprocessConfig};
use crate::solver::SolverOptions;
use crate::Result;
use ndarray::{Array1, Array2};

/// Relative eigenvalue floor below which a Jacobian estimate is treated as
/// singular: `λ_min ≤ JACOBIAN_EIG_RTOL · trace/k`.
pub const JACOBIAN_EIG_RTOL: f64 = 1e-12;

/// Kernel argument beyond which Gaussian weights fall under the double
/// precision resolution of the weighted sum (`φ(8.6)/φ(0) ≈ 8.5·10⁻¹⁷`),
/// so rows with `|residual| > 8.6·h` are skipped without visible effect.
const KERNEL_CUTOFF: f64 = 8.6;

/// A kernel-smoothed estimate of the moment-condition Jacobian at one
/// quantile index.
#[derive(Debug, Clone)]
pub struct JacobianEstimate {
    /// Quantile index the estimate belongs to.
    pub tau: f64,
    /// Kernel bandwidth in response units.
    pub bandwidth: f64,
    /// The `k×k` matrix `(1/nh) Σ_i φ(r_i/h) x_i x_i'`.
    pub j_hat: Array2<f64>,
    /// Smallest eigenvalue of `j_hat` (it is symmetric by construction).
    pub min_eigenvalue: f64,
}

impl JacobianEstimate {
    /// Singularity threshold for this estimate: `JACOBIAN_EIG_RTOL·trace/k`.
    pub fn singular_threshold(&self) -> f64 {
        let k = self.j_hat.nrows() as f64;
        JACOBIAN_EIG_RTOL * self.j_hat.diag().sum() / k
    }

    /// Whether the estimate is too close to singular to invert reliably.
    pub fn is_singular(&self) -> bool {
        self.min_eigenvalue <= self.singular_threshold()
    }

    /// A copy with `ridge·trace/k` added to the diagonal.  Adding a multiple
    /// of the identity shifts every eigenvalue by exactly that amount.
    pub fn regularized(&self, ridge: f64) -> JacobianEstimate {
        let k = self.j_hat.nrows() as f64;
        let shift = ridge * self.j_hat.diag().sum() / k;
        let mut j_hat = self.j_hat.clone();
        for i in 0..self.j_hat.nrows() {
            j_hat[[i, i]] += shift;
        }
        JacobianEstimate {
            tau: self.tau,
            bandwidth: self.bandwidth,
            j_hat,
            min_eigenvalue: self.min_eigenvalue + shift,
        }
    }

    fn solve(&self, rhs: &Array1<f64>) -> Result<Array1<f64>> {
        let chol = Cholesky::factor(&self.j_hat.view(), "moment Jacobian")?;
        Ok(chol.solve(&rhs.view()))
    }
}

/// Controls for the one-step traversal engine.
#[derive(Debug, Clone)]
pub struct OneStepConfig {
    /// Nominal two-sided level used by the bandwidth rule.
    pub alpha: f64,
    /// Optional ridge added to near-singular Jacobians (as a fraction of
    /// `trace/k`) instead of failing.  `None` makes singularity a hard
    /// error naming the quantile index.
    pub ridge: Option<f64>,
    /// Controls for the exact anchor fit.
    pub start: PreprocessConfig,
}

impl Default for OneStepConfig {
    fn default() -> Self {
        OneStepConfig {
            alpha: 0.05,
            ridge: None,
            start: PreprocessConfig::single_tau(),
        }
    }
}

/// The Hall–Sheather bandwidth for quantile density estimation,
///
/// ```text
/// h(τ) = n^{-1/3} · z_{1-α/2}^{2/3} · [ 1.5 φ(Φ⁻¹(τ))² / (2 Φ⁻¹(τ)² + 1) ]^{1/3}
/// ```
///
/// with `z_p = Φ⁻¹(p)`.  The rate `n^{-1/3}` targets one-step coverage
/// rather than density-estimation risk.
pub fn hall_sheather_bandwidth(tau: f64, n: usize, alpha: f64) -> Result<f64> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::TauOutOfRange { tau });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "bandwidth level must lie in (0, 1), got {alpha}"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidArgument(
            "bandwidth needs a positive sample size".to_string(),
        ));
    }
    let z_a = normal::inv_cdf(1.0 - alpha / 2.0);
    let z_t = normal::inv_cdf(tau);
    let num = 1.5 * normal::pdf(z_t).powi(2);
    let den = 2.0 * z_t * z_t + 1.0;
    Ok((z_a * z_a).cbrt() * (num / den).cbrt() / (n as f64).cbrt())
}

/// Kernel-smoothed Jacobian of the quantile moment condition at `beta`:
/// `(1/nh) Σ_i φ(r_i/h) x_i x_i'` with `r = y − Xβ` and Gaussian kernel
/// `φ`.  Rows with `|r_i| > 8.6·h` contribute below double-precision
/// resolution and are skipped.
pub fn powell_jacobian(
    ds: &Dataset,
    beta: &Array1<f64>,
    bandwidth: f64,
    tau: f64,
) -> Result<JacobianEstimate> {
    if beta.len() != ds.k() {
        return Err(Error::DimensionMismatch {
            context: "coefficient length vs design columns",
            expected: ds.k(),
            got: beta.len(),
        });
    }
    if !(bandwidth.is_finite() && bandwidth > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "kernel bandwidth must be positive and finite, got {bandwidth}"
        )));
    }
    let (n, k) = (ds.n(), ds.k());
    let residuals = ds.residuals(beta);
    let cutoff = KERNEL_CUTOFF * bandwidth;

    let active: Vec<usize> = (0..n).filter(|&i| residuals[i].abs() <= cutoff).collect();
    let mut scaled = Array2::<f64>::zeros((active.len(), k));
    for (row, &i) in active.iter().enumerate() {
        let w = normal::pdf(residuals[i] / bandwidth).sqrt();
        for j in 0..k {
            scaled[[row, j]] = w * ds.x()[[i, j]];
        }
    }
    let mut j_hat = scaled.t().dot(&scaled);
    j_hat.mapv_inplace(|v| v / (n as f64 * bandwidth));

    let min_eigenvalue = if k == 1 {
        j_hat[[0, 0]]
    } else {
        sym_eigenvalues(&j_hat.view())[0]
    };
    Ok(JacobianEstimate {
        tau,
        bandwidth,
        j_hat,
        min_eigenvalue,
    })
}

/// One Newton step on the moment condition: `β + J⁻¹ M(τ_next, β)`.
/// A singular Jacobian is a hard error naming the quantile index it was
/// estimated at.
pub fn onestep_update(
    ds: &Dataset,
    tau_next: f64,
    beta_prev: &Array1<f64>,
    jacobian: &JacobianEstimate,
) -> Result<Array1<f64>> {
    if !(tau_next > 0.0 && tau_next < 1.0) {
        return Err(Error::TauOutOfRange { tau: tau_next });
    }
    if beta_prev.len() != ds.k() || jacobian.j_hat.nrows() != ds.k() {
        return Err(Error::DimensionMismatch {
            context: "one-step operand length vs design columns",
            expected: ds.k(),
            got: beta_prev.len().min(jacobian.j_hat.nrows()),
        });
    }
    if jacobian.is_singular() {
        return Err(Error::SingularJacobian {
            tau: jacobian.tau,
            min_eigenvalue: jacobian.min_eigenvalue,
            threshold: jacobian.singular_threshold(),
        });
    }
    let m = model::moment_unchecked(ds, beta_prev, tau_next);
    let step = jacobian.solve(&m)?;
    Ok(beta_prev + &step)
}

/// Derivative of the coefficient path in `τ` implied by the moment
/// condition: `dβ/dτ = J(τ)⁻¹ x̄` with `x̄` the covariate mean.
pub fn beta_derivative(ds: &Dataset, jacobian: &JacobianEstimate) -> Result<Array1<f64>> {
    if jacobian.is_singular() {
        return Err(Error::SingularJacobian {
            tau: jacobian.tau,
            min_eigenvalue: jacobian.min_eigenvalue,
            threshold: jacobian.singular_threshold(),
        });
    }
    let xbar = ds.x().mean_axis(ndarray::Axis(0)).expect("non-empty design");
    jacobian.solve(&xbar)
}

/// Estimate and check the Jacobian at one traversal point, applying the
/// configured ridge fallback when the estimate is near singular.
fn traversal_jacobian(
    ds: &Dataset,
    beta: &Array1<f64>,
    tau: f64,
    n: usize,
    cfg: &OneStepConfig,
) -> Result<JacobianEstimate> {
    let h = hall_sheather_bandwidth(tau, n, cfg.alpha)?;
    let jac = powell_jacobian(ds, beta, h, tau)?;
    if jac.is_singular() {
        match cfg.ridge {
            Some(lambda) => {
                let ridged = jac.regularized(lambda);
                if ridged.is_singular() {
                    return Err(Error::SingularJacobian {
                        tau,
                        min_eigenvalue: ridged.min_eigenvalue,
                        threshold: ridged.singular_threshold(),
                    });
                }
                Ok(ridged)
            }
            None => Err(Error::SingularJacobian {
                tau,
                min_eigenvalue: jac.min_eigenvalue,
                threshold: jac.singular_threshold(),
            }),
        }
    } else {
        Ok(jac)
    }
}

/// Coefficient process by one-step Newton traversal.
///
/// One exact fit anchors the grid — at `start_tau` if given (it must be a
/// grid point), otherwise at the point nearest 0.5 — and every other point
/// is a single Newton step from its inner neighbor.  The returned process
/// carries a Jacobian estimate at every grid point, evaluated at that
/// point's own coefficients.
pub fn fit_process_onestep(
    ds: &Dataset,
    grid: &QuantileGrid,
    start_tau: Option<f64>,
    cfg: &OneStepConfig,
    opts: &SolverOptions,
) -> Result<CoefProcess> {
    let taus = grid.taus();
    let n_grid = taus.len();
    let j_start = match start_tau {
        Some(t) => grid.index_of(t).ok_or_else(|| {
            Error::InvalidArgument(format!("start quantile {t} is not a grid point"))
        })?,
        None => grid.nearest_index(0.5),
    };

    let anchor = fit_single_pk(ds, taus[j_start], &cfg.start, opts)?;

    let mut betas: Vec<Option<Array1<f64>>> = vec![None; n_grid];
    let mut jacobians: Vec<Option<JacobianEstimate>> = vec![None; n_grid];
    betas[j_start] = Some(anchor.beta.clone());

    // March upward from the anchor.
    for j in j_start..n_grid.saturating_sub(1) {
        let beta_j = betas[j].as_ref().expect("traversal order");
        let jac = traversal_jacobian(ds, beta_j, taus[j], ds.n(), cfg)?;
        let next = beta_j + &jac.solve(&model::moment_unchecked(ds, beta_j, taus[j + 1]))?;
        betas[j + 1] = Some(next);
        jacobians[j] = Some(jac);
    }
    // March downward, reusing the anchor's Jacobian when already estimated.
    for j in (1..=j_start).rev() {
        let beta_j = betas[j].as_ref().expect("traversal order").clone();
        let jac = match jacobians[j].take() {
            Some(jac) => jac,
            None => traversal_jacobian(ds, &beta_j, taus[j], ds.n(), cfg)?,
        };
        let prev = &beta_j + &jac.solve(&model::moment_unchecked(ds, &beta_j, taus[j - 1]))?;
        betas[j - 1] = Some(prev);
        jacobians[j] = Some(jac);
    }
    // Endpoints (and a single-point grid) still need their own Jacobians so
    // the process is fully equipped for variance estimation.
    for j in 0..n_grid {
        if jacobians[j].is_none() {
            let beta_j = betas[j].as_ref().expect("traversal complete");
            jacobians[j] = Some(traversal_jacobian(ds, beta_j, taus[j], ds.n(), cfg)?);
        }
    }

    let mut fits = Vec::with_capacity(n_grid);
    for (j, beta_opt) in betas.into_iter().enumerate() {
        let beta = beta_opt.expect("traversal complete");
        if j == j_start {
            fits.push(anchor.clone());
        } else {
            fits.push(QrFit {
                tau: taus[j],
                objective: model::objective_unchecked(ds, &beta, taus[j]),
                moment_inf_norm: model::moment_inf_norm(ds, &beta, taus[j]),
                beta,
                engine: Engine::Onestep,
                iterations: 0,
                fixups: 0,
            });
        }
    }
    let mut proc = CoefProcess::new(grid.clone(), fits)?;
    proc.jacobians = Some(jacobians.into_iter().map(|j| j.expect("filled")).collect());
    Ok(proc)
}

/// Estimate and attach per-grid-point Jacobians to an existing process
/// (for processes produced by the exact engines, which do not need
/// Jacobians to fit but do need them for analytic variance estimation).
pub fn attach_jacobians(ds: &Dataset, proc: &mut CoefProcess, alpha: f64) -> Result<()> {
    let mut jacobians = Vec::with_capacity(proc.grid().len());
    for fit in proc.fits() {
        let h = hall_sheather_bandwidth(fit.tau, ds.n(), alpha)?;
        jacobians.push(powell_jacobian(ds, &fit.beta, h, fit.tau)?);
    }
    proc.jacobians = Some(jacobians);
    Ok(())
}
