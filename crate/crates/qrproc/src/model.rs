//! Core quantile regression quantities: check loss, objective, moment
//! vector, fit and process containers, and process interpolation.

use crate::data::Dataset;
use crate::error::Error;
use crate::grid::{QuantileGrid, GRID_SNAP_TOL};
use crate::onestep::JacobianEstimate;
use crate::Result;
use ndarray::Array1;
use serde::Serialize;

/// Which estimation path produced a fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    /// Full-data interior point solve.
    Baseline,
    /// Preprocessed solve on a reduced set of rows (exact).
    Preprocess,
    /// Single Newton step from a neighboring quantile index.
    Onestep,
    /// Direct solve of a globbed (aggregated-row) problem.
    Globbed,
}

impl std::fmt::Display for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Engine::Baseline => "baseline",
            Engine::Preprocess => "preprocess",
            Engine::Onestep => "onestep",
            Engine::Globbed => "globbed",
        };
        f.write_str(s)
    }
}

/// A fitted quantile regression at a single quantile index, with solver
/// diagnostics.
#[derive(Debug, Clone)]
pub struct QrFit {
    /// Quantile index the fit targets.
    pub tau: f64,
    /// Estimated coefficients, in design column order.
    pub beta: Array1<f64>,
    /// Check-loss objective of `beta` on the full data.
    pub objective: f64,
    /// Sup norm of the moment vector at `beta` on the full data.
    pub moment_inf_norm: f64,
    /// Estimation path that produced the fit.
    pub engine: Engine,
    /// Interior point iterations of the final solve (0 for one-step fits).
    pub iterations: usize,
    /// Corrective re-solves and restarts performed by the preprocessing
    /// engine (0 elsewhere).
    pub fixups: usize,
}

/// The estimated coefficient process on a quantile grid.
#[derive(Debug, Clone)]
pub struct CoefProcess {
    grid: QuantileGrid,
    fits: Vec<QrFit>,
    /// Kernel Jacobian estimates per grid point, when the producing engine
    /// computed them (always for one-step processes, on demand otherwise).
    pub jacobians: Option<Vec<JacobianEstimate>>,
}

impl CoefProcess {
    /// Assemble a process from per-point fits; fit order must match the
    /// grid.
    pub fn new(grid: QuantileGrid, fits: Vec<QrFit>) -> Result<Self> {
        if fits.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                context: "fits per grid point",
                expected: grid.len(),
                got: fits.len(),
            });
        }
        for (t, f) in grid.taus().iter().zip(&fits) {
            if (t - f.tau).abs() > GRID_SNAP_TOL {
                return Err(Error::InvalidArgument(format!(
                    "fit at tau = {} does not match grid point {}",
                    f.tau, t
                )));
            }
        }
        Ok(CoefProcess {
            grid,
            fits,
            jacobians: None,
        })
    }

    /// The quantile grid.
    pub fn grid(&self) -> &QuantileGrid {
        &self.grid
    }

    /// Per-point fits in grid order.
    pub fn fits(&self) -> &[QrFit] {
        &self.fits
    }

    /// Number of coefficients.
    pub fn k(&self) -> usize {
        self.fits[0].beta.len()
    }

    /// Coefficient estimates as a `grid.len() × k` matrix.
    pub fn coef_matrix(&self) -> ndarray::Array2<f64> {
        let j = self.grid.len();
        let k = self.k();
        let mut m = ndarray::Array2::zeros((j, k));
        for (row, fit) in self.fits.iter().enumerate() {
            m.row_mut(row).assign(&fit.beta);
        }
        m
    }
}

/// The check (pinball) loss `ρ_τ(u) = u·(τ − 1{u ≤ 0})`.
pub fn check_loss(u: f64, tau: f64) -> Result<f64> {
    require_tau(tau)?;
    Ok(check_loss_unchecked(u, tau))
}

#[inline]
pub(crate) fn check_loss_unchecked(u: f64, tau: f64) -> f64 {
    if u <= 0.0 {
        u * (tau - 1.0)
    } else {
        u * tau
    }
}

/// The total check loss `Σ_i ρ_τ(y_i − x_i'β)` of `beta` at `tau`.
pub fn objective(ds: &Dataset, beta: &Array1<f64>, tau: f64) -> Result<f64> {
    require_tau(tau)?;
    require_beta_len(ds, beta)?;
    Ok(objective_unchecked(ds, beta, tau))
}

pub(crate) fn objective_unchecked(ds: &Dataset, beta: &Array1<f64>, tau: f64) -> f64 {
    let r = ds.residuals(beta);
    r.iter().map(|&u| check_loss_unchecked(u, tau)).sum()
}

/// The (negative) subgradient of the average objective: the moment vector
/// `M(τ, β) = (1/n) Σ_i (τ − 1{y_i ≤ x_i'β}) x_i`.
///
/// At an exact solution its sup norm is at most `k·max|x_ij|/n`.
pub fn moment(ds: &Dataset, beta: &Array1<f64>, tau: f64) -> Result<Array1<f64>> {
    require_tau(tau)?;
    require_beta_len(ds, beta)?;
    Ok(moment_unchecked(ds, beta, tau))
}

pub(crate) fn moment_unchecked(ds: &Dataset, beta: &Array1<f64>, tau: f64) -> Array1<f64> {
    let r = ds.residuals(beta);
    let psi = r.mapv(|u| if u <= 0.0 { tau - 1.0 } else { tau });
    let mut m = ds.x().t().dot(&psi);
    m.mapv_inplace(|v| v / ds.n() as f64);
    m
}

/// Sup norm of the moment vector.
pub(crate) fn moment_inf_norm(ds: &Dataset, beta: &Array1<f64>, tau: f64) -> f64 {
    moment_unchecked(ds, beta, tau)
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Coefficients at an arbitrary `tau` inside the fitted span, linearly
/// interpolated between neighboring grid points (exact at the points
/// themselves).
pub fn interpolate_process(proc: &CoefProcess, tau: f64) -> Result<Array1<f64>> {
    let taus = proc.grid().taus();
    let lo = taus[0];
    let hi = taus[taus.len() - 1];
    if tau < lo - GRID_SNAP_TOL || tau > hi + GRID_SNAP_TOL {
        return Err(Error::OutsideGrid { tau, lo, hi });
    }
    if let Some(j) = proc.grid().index_of(tau) {
        return Ok(proc.fits()[j].beta.clone());
    }
    // tau is strictly between two grid points: find the upper neighbor.
    let hi_idx = taus.partition_point(|&t| t < tau);
    let lo_idx = hi_idx - 1;
    let (t0, t1) = (taus[lo_idx], taus[hi_idx]);
    let w = (tau - t0) / (t1 - t0);
    let b0 = &proc.fits()[lo_idx].beta;
    let b1 = &proc.fits()[hi_idx].beta;
    Ok(b0 * (1.0 - w) + b1 * w)
}

fn require_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau < 1.0) || !tau.is_finite() {
        return Err(Error::TauOutOfRange { tau });
    }
    Ok(())
}

fn require_beta_len(ds: &Dataset, beta: &Array1<f64>) -> Result<()> {
    if beta.len() != ds.k() {
        return Err(Error::DimensionMismatch {
            context: "coefficient length vs design columns",
            expected: ds.k(),
            got: beta.len(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn intercept_only(y: &[f64]) -> Dataset {
        let n = y.len();
        Dataset::new(
            Array1::from(y.to_vec()),
            Array2::from_elem((n, 1), 1.0),
            vec!["intercept".into()],
        )
        .unwrap()
    }

    #[test]
    fn check_loss_known_values() {
        assert_eq!(check_loss(2.0, 0.25).unwrap(), 0.5);
        assert_eq!(check_loss(-2.0, 0.25).unwrap(), 1.5);
        assert_eq!(check_loss(0.0, 0.7).unwrap(), 0.0);
    }

    #[test]
    fn check_loss_rejects_bad_tau() {
        assert!(matches!(
            check_loss(1.0, 1.2),
            Err(Error::TauOutOfRange { .. })
        ));
        assert!(check_loss(1.0, 0.0).is_err());
        assert!(check_loss(1.0, 1.0).is_err());
    }

    #[test]
    fn objective_known_values() {
        let ds = intercept_only(&[1.0, 2.0, 3.0]);
        // Residuals at beta = 2: (-1, 0, 1); each contributes 0.5 at tau = .5.
        let v = objective(&ds, &array![2.0], 0.5).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
        // beta = 1 at tau = .25: residuals (0, 1, 2) -> .25·(1 + 2) = 0.75.
        let v = objective(&ds, &array![1.0], 0.25).unwrap();
        assert!((v - 0.75).abs() < 1e-15);
    }

    #[test]
    fn objective_zero_when_interpolating() {
        let y = array![1.0, 2.0, 4.0];
        let x = array![[1.0, 0.0], [1.0, 1.0], [1.0, 3.0]];
        let ds = Dataset::new(y, x, vec!["intercept".into(), "x".into()]).unwrap();
        let v = objective(&ds, &array![1.0, 1.0], 0.5).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn objective_rejects_wrong_beta_length() {
        let ds = intercept_only(&[1.0, 2.0]);
        assert!(matches!(
            objective(&ds, &array![1.0, 2.0], 0.5),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn moment_known_values() {
        // Intercept only, y = (1,2,3), beta = 2, tau = .5:
        // psi = (-.5 for y=1? no: residuals (-1, 0, 1) -> indicators (1,1,0))
        // psi = (-0.5, -0.5, 0.5); mean = -1/6.
        let ds = intercept_only(&[1.0, 2.0, 3.0]);
        let m = moment(&ds, &array![2.0], 0.5).unwrap();
        assert!((m[0] - (-1.0 / 6.0)).abs() < 1e-15);
        // beta below every observation: all indicators 0 -> mean tau.
        let m = moment(&ds, &array![0.0], 0.5).unwrap();
        assert!((m[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn interpolation_is_exact_at_knots_and_linear_between() {
        let grid = QuantileGrid::new(vec![0.25, 0.75]).unwrap();
        let fits = vec![
            QrFit {
                tau: 0.25,
                beta: array![1.0, -2.0],
                objective: 0.0,
                moment_inf_norm: 0.0,
                engine: Engine::Baseline,
                iterations: 0,
                fixups: 0,
            },
            QrFit {
                tau: 0.75,
                beta: array![3.0, 6.0],
                objective: 0.0,
                moment_inf_norm: 0.0,
                engine: Engine::Baseline,
                iterations: 0,
                fixups: 0,
            },
        ];
        let proc = CoefProcess::new(grid, fits).unwrap();
        assert_eq!(interpolate_process(&proc, 0.25).unwrap(), array![1.0, -2.0]);
        assert_eq!(interpolate_process(&proc, 0.5).unwrap(), array![2.0, 2.0]);
        assert!(matches!(
            interpolate_process(&proc, 0.1),
            Err(Error::OutsideGrid { .. })
        ));
    }

    #[test]
    fn process_rejects_misaligned_fits() {
        let grid = QuantileGrid::new(vec![0.25, 0.75]).unwrap();
        let fit = QrFit {
            tau: 0.5,
            beta: array![0.0],
            objective: 0.0,
            moment_inf_norm: 0.0,
            engine: Engine::Baseline,
            iterations: 0,
            fixups: 0,
        };
        assert!(CoefProcess::new(grid, vec![fit.clone(), fit]).is_err());
    }
}
