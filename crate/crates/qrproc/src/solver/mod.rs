//! Exact quantile regression solvers.

mod bruteforce;
mod glob;
pub(crate) mod interior;

pub use bruteforce::{solve_qr_bruteforce, BRUTEFORCE_MAX_K, BRUTEFORCE_MAX_N};
pub use glob::{solve_globbed, GlobbedProblem};

use crate::data::Dataset;
use crate::error::Error;
use crate::model::{self, Engine, QrFit};
use crate::Result;
use ndarray::Array1;

/// Interior point solver controls.
#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Relative duality gap at which an iterate counts as optimal.
    pub duality_gap_tol: f64,
    /// Iteration cap; exceeding it is a convergence error.
    pub max_iter: usize,
    /// Fraction of the distance to the boundary taken each step.
    pub step_fraction: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            // Tight enough that the reported objective agrees with the exact
            // vertex to better than one part in 10⁹; the predictor-corrector
            // converges superlinearly, so the margin over 1e-8 costs at most
            // an iteration or two.
            duality_gap_tol: 1e-10,
            max_iter: 50,
            step_fraction: 0.99995,
        }
    }
}

/// Solve one quantile regression on the full data.
///
/// `warm_start` seeds the solver with a coefficient guess (typically the
/// solution at a neighboring quantile index); it can change the iteration
/// count but never the solution.
pub fn solve_qr(
    ds: &Dataset,
    tau: f64,
    opts: &SolverOptions,
    warm_start: Option<&Array1<f64>>,
) -> Result<QrFit> {
    if !(tau > 0.0 && tau < 1.0) || !tau.is_finite() {
        return Err(Error::TauOutOfRange { tau });
    }
    if let Some(ws) = warm_start {
        if ws.len() != ds.k() {
            return Err(Error::DimensionMismatch {
                context: "warm start length vs design columns",
                expected: ds.k(),
                got: ws.len(),
            });
        }
    }
    let sol = interior::solve(&ds.x().view(), &ds.y().view(), tau, opts, warm_start)?;
    debug_assert!(sol.gap.is_finite() && sol.gap < opts.duality_gap_tol);
    Ok(QrFit {
        tau,
        objective: model::objective_unchecked(ds, &sol.beta, tau),
        moment_inf_norm: model::moment_inf_norm(ds, &sol.beta, tau),
        beta: sol.beta,
        engine: Engine::Baseline,
        iterations: sol.iterations,
        fixups: 0,
    })
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

    use crate::testutil::random_instance;

    #[test]
    fn median_of_three_observations() {
        let ds = intercept_only(&[1.0, 2.0, 3.0]);
        let fit = solve_qr(&ds, 0.5, &SolverOptions::default(), None).unwrap();
        assert!((fit.beta[0] - 2.0).abs() < 1e-6, "beta = {}", fit.beta[0]);
        assert!((fit.objective - 1.0).abs() < 1e-8);
        assert_eq!(fit.engine, Engine::Baseline);
    }

    #[test]
    fn first_quartile_of_three_observations() {
        let ds = intercept_only(&[1.0, 2.0, 3.0]);
        let fit = solve_qr(&ds, 0.25, &SolverOptions::default(), None).unwrap();
        assert!((fit.beta[0] - 1.0).abs() < 1e-6, "beta = {}", fit.beta[0]);
    }

    #[test]
    fn rejects_tau_outside_unit_interval() {
        let ds = intercept_only(&[1.0, 2.0, 3.0]);
        assert!(matches!(
            solve_qr(&ds, 0.0, &SolverOptions::default(), None),
            Err(Error::TauOutOfRange { .. })
        ));
    }

    #[test]
    fn matches_bruteforce_on_small_instances() {
        for seed in 0..20 {
            let ds = random_instance(14, 2, 1000 + seed);
            for &tau in &[0.2, 0.5, 0.8] {
                let exact = solve_qr_bruteforce(&ds, tau).unwrap();
                let ip = solve_qr(&ds, tau, &SolverOptions::default(), None).unwrap();
                let denom = 1.0 + exact.objective.abs();
                assert!(
                    (ip.objective - exact.objective).abs() / denom < 1e-9,
                    "seed {seed} tau {tau}: ip obj {} vs exact {}",
                    ip.objective,
                    exact.objective
                );
            }
        }
    }

    #[test]
    fn moment_bound_holds_at_solution() {
        for seed in 0..10 {
            let ds = random_instance(300, 4, 2000 + seed);
            for &tau in &[0.1, 0.5, 0.9] {
                let fit = solve_qr(&ds, tau, &SolverOptions::default(), None).unwrap();
                assert!(
                    fit.moment_inf_norm <= ds.moment_bound(),
                    "seed {seed} tau {tau}: moment {} vs bound {}",
                    fit.moment_inf_norm,
                    ds.moment_bound()
                );
            }
        }
    }

    #[test]
    fn warm_start_does_not_change_solution() {
        let ds = random_instance(400, 3, 99);
        let cold = solve_qr(&ds, 0.3, &SolverOptions::default(), None).unwrap();
        let neighbor = solve_qr(&ds, 0.29, &SolverOptions::default(), None).unwrap();
        let warm = solve_qr(&ds, 0.3, &SolverOptions::default(), Some(&neighbor.beta)).unwrap();
        for j in 0..ds.k() {
            assert!(
                (cold.beta[j] - warm.beta[j]).abs() < 1e-6,
                "coefficient {j}: cold {} vs warm {}",
                cold.beta[j],
                warm.beta[j]
            );
        }
    }

    #[test]
    fn solution_is_equivariant_to_affine_response_maps() {
        let ds = random_instance(200, 3, 7);
        let tau = 0.35;
        let base = solve_qr(&ds, tau, &SolverOptions::default(), None).unwrap();
        // y -> 2.5·y + X·(1, -1, 0.5)' shifts beta by the same rule.
        let shift = array![1.0, -1.0, 0.5];
        let y2 = ds.y() * 2.5 + ds.x().dot(&shift);
        let ds2 = Dataset::new(y2, ds.x().clone(), ds.column_names().to_vec()).unwrap();
        let mapped = solve_qr(&ds2, tau, &SolverOptions::default(), None).unwrap();
        for j in 0..3 {
            let expect = 2.5 * base.beta[j] + shift[j];
            assert!(
                (mapped.beta[j] - expect).abs() < 2e-5,
                "coefficient {j}: got {}, expected {expect}",
                mapped.beta[j]
            );
        }
    }

    #[test]
    fn solution_depends_on_sign_pattern_only() {
        // Pushing a clearly-positive residual further up cannot move the fit.
        let ds = random_instance(150, 2, 31);
        let tau = 0.5;
        let fit = solve_qr(&ds, tau, &SolverOptions::default(), None).unwrap();
        let r = ds.residuals(&fit.beta);
        let (imax, _) = r
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        let mut y2 = ds.y().clone();
        y2[imax] += 100.0;
        let ds2 = Dataset::new(y2, ds.x().clone(), ds.column_names().to_vec()).unwrap();
        let fit2 = solve_qr(&ds2, tau, &SolverOptions::default(), None).unwrap();
        for j in 0..ds.k() {
            assert!(
                (fit.beta[j] - fit2.beta[j]).abs() < 1e-6,
                "coefficient {j} moved: {} -> {}",
                fit.beta[j],
                fit2.beta[j]
            );
        }
    }

    #[test]
    fn iteration_cap_is_a_convergence_error() {
        let ds = random_instance(120, 3, 5);
        let opts = SolverOptions {
            max_iter: 1,
            ..SolverOptions::default()
        };
        match solve_qr(&ds, 0.5, &opts, None) {
            Err(Error::Convergence {
                iterations,
                last_beta,
                ..
            }) => {
                assert_eq!(iterations, 1);
                assert_eq!(last_beta.len(), 3);
            }
            other => panic!("expected convergence error, got {other:?}"),
        }
    }

    #[test]
    fn perturbing_any_coefficient_does_not_improve_the_objective() {
        let ds = random_instance(250, 3, 404);
        for &tau in &[0.25, 0.6] {
            let fit = solve_qr(&ds, tau, &SolverOptions::default(), None).unwrap();
            let scale = ds.y().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            for j in 0..ds.k() {
                for dir in [-1.0, 1.0] {
                    let mut beta = fit.beta.clone();
                    beta[j] += dir * 1e-4 * scale.max(1.0);
                    let obj = model::objective(&ds, &beta, tau).unwrap();
                    assert!(
                        obj >= fit.objective - 1e-10 * (1.0 + fit.objective.abs()),
                        "tau {tau}, coefficient {j}, direction {dir}: {obj} < {}",
                        fit.objective
                    );
                }
            }
        }
    }

    #[test]
    fn solution_interpolates_k_observations() {
        let ds = random_instance(200, 3, 11);
        let fit = solve_qr(&ds, 0.4, &SolverOptions::default(), None).unwrap();
        let r = ds.residuals(&fit.beta);
        let y_scale = ds.y().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let near_zero = r.iter().filter(|v| v.abs() <= 1e-8 * y_scale.max(1.0)).count();
        assert!(
            near_zero >= ds.k(),
            "only {near_zero} interpolated rows for k = {}",
            ds.k()
        );
    }

    #[test]
    fn globbed_problem_with_empty_blocks_matches_full_solve() {
        let ds = random_instance(120, 3, 77);
        let tau = 0.45;
        let all: Vec<usize> = (0..ds.n()).collect();
        let gp = GlobbedProblem::new(&ds, &[], &[], &all, &Array1::zeros(3));
        let full = solve_qr(&ds, tau, &SolverOptions::default(), None).unwrap();
        let red = solve_globbed(&gp, tau, &SolverOptions::default(), None).unwrap();
        assert_eq!(gp.n_pseudo, 0);
        assert!((full.objective - red.objective).abs() < 1e-9 * (1.0 + full.objective));
        assert_eq!(red.engine, Engine::Globbed);
    }

    #[test]
    fn globbed_problem_with_correct_signs_matches_full_solve() {
        // Partition rows by the residual signs of the *exact* solution; the
        // reduced problem must then reproduce it.
        let ds = random_instance(400, 4, 55);
        let tau = 0.3;
        let full = solve_qr(&ds, tau, &SolverOptions::default(), None).unwrap();
        let r = ds.residuals(&full.beta);
        let margin = 0.1; // keep a safety band of rows around the fit
        let mut j_low = Vec::new();
        let mut j_high = Vec::new();
        let mut kept = Vec::new();
        for i in 0..ds.n() {
            if r[i] < -margin {
                j_low.push(i);
            } else if r[i] > margin {
                j_high.push(i);
            } else {
                kept.push(i);
            }
        }
        assert!(!j_low.is_empty() && !j_high.is_empty());
        let gp = GlobbedProblem::new(&ds, &j_low, &j_high, &kept, &full.beta);
        let red = solve_globbed(&gp, tau, &SolverOptions::default(), Some(&full.beta)).unwrap();
        for j in 0..ds.k() {
            assert!(
                (red.beta[j] - full.beta[j]).abs() < 1e-6,
                "coefficient {j}: reduced {} vs full {}",
                red.beta[j],
                full.beta[j]
            );
        }
        // All aggregated rows must keep their predicted residual signs.
        let r_red = ds.residuals(&red.beta);
        assert!(j_low.iter().all(|&i| r_red[i] < 0.0));
        assert!(j_high.iter().all(|&i| r_red[i] > 0.0));
    }

    #[test]
    fn rng_instance_generator_is_deterministic() {
        let a = random_instance(50, 3, 42);
        let b = random_instance(50, 3, 42);
        assert_eq!(a.y(), b.y());
        assert_eq!(a.x(), b.x());
    }
}
