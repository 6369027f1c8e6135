//! Globbed (row-aggregated) quantile regression problems.
//!
//! When a preliminary estimate predicts that a block of observations will
//! end up with negative residuals at the final solution (and another block
//! positive), each block can be collapsed into a single aggregate
//! pseudo-observation whose design row is the *exact* sum of the block's
//! rows.  As long as the predicted signs hold at the new optimum, the
//! aggregate rows contribute the same subgradient as the original rows, so
//! the reduced problem has the same solution as the full one.  The
//! pseudo-responses are placed far enough out that their residual signs
//! cannot flip.

use crate::data::Dataset;
use crate::model::{self, Engine, QrFit};
use crate::solver::{interior, SolverOptions};
use crate::Result;
use ndarray::{Array1, Array2};

/// Multiplier applied to the response spread when placing pseudo-responses.
/// It only needs to dominate the movement of the aggregate fitted value
/// between the preliminary and final coefficients (a small fraction of the
/// spread per row); anything much larger degrades the numerical scale of
/// the reduced problem without buying extra sign safety.
const PSEUDO_OFFSET_FACTOR: f64 = 10.0;

/// A reduced quantile regression problem: kept rows plus up to two
/// aggregate pseudo-rows standing in for the trimmed blocks.
#[derive(Debug, Clone)]
pub struct GlobbedProblem {
    /// Assembled response: kept rows first, then low/high pseudo-rows.
    y: Array1<f64>,
    /// Assembled design, same row order.
    x: Array2<f64>,
    /// Original indices of the kept rows.
    pub kept: Vec<usize>,
    /// Original indices aggregated into the low-side pseudo-row.
    pub j_low: Vec<usize>,
    /// Original indices aggregated into the high-side pseudo-row.
    pub j_high: Vec<usize>,
    /// Number of pseudo-rows appended (0, 1, or 2).
    pub n_pseudo: usize,
    /// Sum of absolute kept-row residuals at the preliminary estimate;
    /// anchors the solver's convergence criterion to the informative part
    /// of the objective rather than the pseudo-row constants.
    objective_anchor: f64,
}

impl GlobbedProblem {
    /// Build the reduced problem from a row partition and a preliminary
    /// coefficient estimate.  Empty blocks contribute no pseudo-row, so with
    /// both blocks empty the problem is identical to the full one.
    pub fn new(
        ds: &Dataset,
        j_low: &[usize],
        j_high: &[usize],
        kept: &[usize],
        prelim: &Array1<f64>,
    ) -> Self {
        let k = ds.k();
        let n_pseudo = usize::from(!j_low.is_empty()) + usize::from(!j_high.is_empty());
        let rows = kept.len() + n_pseudo;
        let mut y = Array1::<f64>::zeros(rows);
        let mut x = Array2::<f64>::zeros((rows, k));
        let mut objective_anchor = 0.0;
        for (row, &i) in kept.iter().enumerate() {
            y[row] = ds.y()[i];
            x.row_mut(row).assign(&ds.x().row(i));
            objective_anchor += (ds.y()[i] - ds.x().row(i).dot(prelim)).abs();
        }

        // Placement scale for pseudo-responses: far outside the observed
        // response range, inflated further when the aggregate row is large
        // relative to a typical row.
        let (y_min, y_max) = ds
            .y()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let spread = if y_max > y_min { y_max - y_min } else { 1.0 };
        let mean_row_norm = ds
            .x()
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
            .sum::<f64>()
            / ds.n() as f64;

        let mut row = kept.len();
        if !j_low.is_empty() {
            let (xg, offset) = aggregate(ds, j_low, spread, mean_row_norm);
            y[row] = xg.dot(prelim) - offset;
            x.row_mut(row).assign(&xg);
            row += 1;
        }
        if !j_high.is_empty() {
            let (xg, offset) = aggregate(ds, j_high, spread, mean_row_norm);
            y[row] = xg.dot(prelim) + offset;
            x.row_mut(row).assign(&xg);
        }

        GlobbedProblem {
            y,
            x,
            kept: kept.to_vec(),
            j_low: j_low.to_vec(),
            j_high: j_high.to_vec(),
            n_pseudo,
            objective_anchor,
        }
    }

    /// Rows in the reduced problem (kept + pseudo).
    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    /// Residuals of the reduced problem at `beta`; pseudo-row residuals are
    /// the trailing `n_pseudo` entries.
    pub fn residuals(&self, beta: &Array1<f64>) -> Array1<f64> {
        let mut r = self.x.dot(beta);
        for (ri, yi) in r.iter_mut().zip(self.y.iter()) {
            *ri = yi - *ri;
        }
        r
    }
}

/// Exact sum of the block's design rows, plus the response offset keeping
/// the pseudo-row's residual sign fixed.
fn aggregate(ds: &Dataset, block: &[usize], spread: f64, mean_row_norm: f64) -> (Array1<f64>, f64) {
    let mut xg = Array1::<f64>::zeros(ds.k());
    for &i in block {
        xg += &ds.x().row(i);
    }
    let norm = xg.iter().map(|v| v * v).sum::<f64>().sqrt();
    let offset = PSEUDO_OFFSET_FACTOR * spread * (norm / mean_row_norm).max(1.0);
    (xg, offset)
}

/// Solve the reduced problem with the interior point core.
///
/// The returned fit's objective and moment norm refer to the reduced
/// problem itself; exactness with respect to the full problem holds when
/// the residual signs of all aggregated rows are confirmed, which is the
/// preprocessing driver's job.
pub fn solve_globbed(
    gp: &GlobbedProblem,
    tau: f64,
    opts: &SolverOptions,
    warm_start: Option<&Array1<f64>>,
) -> Result<QrFit> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(crate::error::Error::TauOutOfRange { tau });
    }
    let sol = interior::solve_scaled(
        &gp.x.view(),
        &gp.y.view(),
        tau,
        opts,
        warm_start,
        Some(gp.objective_anchor),
    )?;
    let objective = gp
        .residuals(&sol.beta)
        .iter()
        .map(|&u| model::check_loss_unchecked(u, tau))
        .sum();
    let psi = gp.residuals(&sol.beta).mapv(|u| if u <= 0.0 { tau - 1.0 } else { tau });
    let m = gp.x.t().dot(&psi) / gp.n_rows() as f64;
    let moment_inf_norm = m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    Ok(QrFit {
        tau,
        beta: sol.beta,
        objective,
        moment_inf_norm,
        engine: Engine::Globbed,
        iterations: sol.iterations,
        fixups: 0,
    })
}
