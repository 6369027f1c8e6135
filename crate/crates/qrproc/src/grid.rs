//! Quantile index grids.

use crate::error::Error;
use crate::Result;

/// Absolute tolerance used when matching or snapping grid endpoints.
pub const GRID_SNAP_TOL: f64 = 1e-12;

/// A strictly increasing grid of quantile indices inside the open unit
/// interval.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileGrid {
    taus: Vec<f64>,
}

impl QuantileGrid {
    /// Build a grid from explicit points, validating order and range.
    pub fn new(taus: Vec<f64>) -> Result<Self> {
        if taus.is_empty() {
            return Err(Error::InvalidGrid {
                reason: "grid is empty".to_string(),
            });
        }
        for &t in &taus {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::InvalidGrid {
                    reason: format!("grid point {t} is outside the open interval (0, 1)"),
                });
            }
        }
        for w in taus.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidGrid {
                    reason: format!("grid is not strictly increasing at {} -> {}", w[0], w[1]),
                });
            }
        }
        Ok(QuantileGrid { taus })
    }

    /// Single-point grid.
    pub fn single(tau: f64) -> Result<Self> {
        QuantileGrid::new(vec![tau])
    }

    /// Inclusive arithmetic grid `start, start+step, …, stop`.
    ///
    /// When `stop` lies within [`GRID_SNAP_TOL`] of a whole number of steps
    /// the final point is snapped to exactly `stop`, so spans like
    /// `0.05..=0.95` by `0.01` land on clean endpoints despite binary
    /// rounding.
    pub fn from_range(start: f64, stop: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) {
            return Err(Error::InvalidGrid {
                reason: format!("step must be positive, got {step}"),
            });
        }
        if stop < start {
            return Err(Error::InvalidGrid {
                reason: format!("range start {start} exceeds stop {stop}"),
            });
        }
        let mut taus = Vec::new();
        let mut i = 0_usize;
        loop {
            let t = start + i as f64 * step;
            if t > stop + GRID_SNAP_TOL {
                break;
            }
            taus.push(if (t - stop).abs() <= GRID_SNAP_TOL { stop } else { t });
            i += 1;
        }
        QuantileGrid::new(taus)
    }

    /// The default estimation grid: 0.05 to 0.95 in steps of 0.01.
    pub fn default_grid() -> Self {
        QuantileGrid::from_range(0.05, 0.95, 0.01).expect("default grid is valid")
    }

    /// Grid points in increasing order.
    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    /// Number of grid points.
    pub fn len(&self) -> usize {
        self.taus.len()
    }

    /// Whether the grid is empty (never true for a constructed grid).
    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }

    /// Index of the grid point equal to `tau` up to [`GRID_SNAP_TOL`].
    pub fn index_of(&self, tau: f64) -> Option<usize> {
        self.taus
            .iter()
            .position(|&t| (t - tau).abs() <= GRID_SNAP_TOL)
    }

    /// Index of the grid point closest to `tau` (ties go to the smaller
    /// index).
    pub fn nearest_index(&self, tau: f64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, &t) in self.taus.iter().enumerate() {
            let d = (t - tau).abs();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }
}

/// Validate a prospective grid against a sample size: hard errors for
/// malformed grids, warnings for quantile indices so extreme that fewer than
/// ~15 observations per parameter lie in the tail.
///
/// The warning threshold is `15·k/n` on each side.  Extreme indices are
/// allowed — estimates there are simply fragile — so this never rejects a
/// well-formed grid.
pub fn validate_grid(taus: &[f64], n_obs: usize, k: usize) -> Result<Vec<String>> {
    let grid = QuantileGrid::new(taus.to_vec())?;
    let threshold = 15.0 * k as f64 / n_obs as f64;
    let mut warnings = Vec::new();
    for &tau in grid.taus() {
        if tau < threshold || 1.0 - tau < threshold {
            warnings.push(format!(
                "tau = {tau} is extreme for n = {n_obs}, k = {k}: fewer than \
                 ~15 observations per parameter in the tail (threshold {threshold:.4})"
            ));
        }
    }
    Ok(warnings)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_grid_hits_exact_endpoints() {
        let g = QuantileGrid::from_range(0.05, 0.95, 0.01).unwrap();
        assert_eq!(g.len(), 91);
        assert_eq!(g.taus()[0], 0.05);
        assert_eq!(*g.taus().last().unwrap(), 0.95);
        let g2 = QuantileGrid::from_range(0.1, 0.9, 0.01).unwrap();
        assert_eq!(g2.len(), 81);
        assert_eq!(*g2.taus().last().unwrap(), 0.9);
    }

    #[test]
    fn range_grid_without_exact_multiple_stops_short() {
        let g = QuantileGrid::from_range(0.1, 0.25, 0.06).unwrap();
        assert_eq!(g.taus(), &[0.1, 0.16, 0.22]);
    }

    #[test]
    fn single_point_range() {
        let g = QuantileGrid::from_range(0.5, 0.5, 0.01).unwrap();
        assert_eq!(g.taus(), &[0.5]);
    }

    #[test]
    fn non_monotone_grid_is_rejected() {
        assert!(matches!(
            validate_grid(&[0.2, 0.1], 100, 2),
            Err(Error::InvalidGrid { .. })
        ));
    }

    #[test]
    fn boundary_point_is_rejected() {
        assert!(QuantileGrid::new(vec![0.0, 0.5]).is_err());
        assert!(QuantileGrid::new(vec![0.5, 1.0]).is_err());
    }

    #[test]
    fn extreme_tau_warns_for_small_samples() {
        // 15·k/n = 15·10/1000 = 0.15 > 0.05: warn.
        let w = validate_grid(&[0.05, 0.5], 1000, 10).unwrap();
        assert_eq!(w.len(), 1);
        assert!(w[0].contains("0.05"));
        // 15·20/50000 = 0.006 < 0.01: no warning.
        let w = validate_grid(&[0.01, 0.5], 50000, 20).unwrap();
        assert!(w.is_empty());
    }

    #[test]
    fn nearest_index_prefers_smaller_on_ties() {
        let g = QuantileGrid::new(vec![0.4, 0.6]).unwrap();
        assert_eq!(g.nearest_index(0.5), 0);
        assert_eq!(g.nearest_index(0.59), 1);
    }
}
