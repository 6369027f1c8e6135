//! Exhaustive vertex enumeration oracle for tiny problems.
//!
//! Some optimal quantile regression coefficient vector interpolates k
//! observations exactly (a basic solution of the underlying LP), so on tiny
//! instances the solution can be found by trying every k-subset of rows.
//! This is the independent oracle the iterative solver is validated
//! against; it is deliberately limited to instances where `C(n, k)` stays
//! small.

use crate::data::Dataset;
use crate::error::Error;
use crate::model::{self, Engine, QrFit};
use crate::Result;
use ndarray::{Array1, Array2};

/// Largest instance the oracle accepts.
pub const BRUTEFORCE_MAX_N: usize = 30;
pub const BRUTEFORCE_MAX_K: usize = 4;

/// Solve a quantile regression by enumerating all k-point interpolation
/// candidates.  Ties between optima are broken toward the lexicographically
/// smallest row subset.
pub fn solve_qr_bruteforce(ds: &Dataset, tau: f64) -> Result<QrFit> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::TauOutOfRange { tau });
    }
    let (n, k) = (ds.n(), ds.k());
    if n > BRUTEFORCE_MAX_N || k > BRUTEFORCE_MAX_K {
        return Err(Error::InvalidArgument(format!(
            "brute force enumeration is limited to n <= {BRUTEFORCE_MAX_N}, \
             k <= {BRUTEFORCE_MAX_K}; got n = {n}, k = {k}"
        )));
    }

    let mut best: Option<(f64, Array1<f64>)> = None;
    let mut subset: Vec<usize> = (0..k).collect();
    loop {
        if let Some(beta) = interpolate_subset(ds, &subset) {
            let obj = model::objective_unchecked(ds, &beta, tau);
            let better = match &best {
                None => true,
                // Strict improvement beyond rounding keeps the first
                // (lexicographically smallest) optimal subset on ties.
                Some((best_obj, _)) => obj < best_obj - 1e-12 * (1.0 + best_obj.abs()),
            };
            if better {
                best = Some((obj, beta));
            }
        }
        if !advance(&mut subset, n) {
            break;
        }
    }

    let (objective, beta) = best.ok_or_else(|| {
        Error::InvalidArgument("no nonsingular k-subset of rows exists".to_string())
    })?;
    let moment_inf_norm = model::moment_inf_norm(ds, &beta, tau);
    Ok(QrFit {
        tau,
        beta,
        objective,
        moment_inf_norm,
        engine: Engine::Baseline,
        iterations: 0,
        fixups: 0,
    })
}

/// Coefficients interpolating the rows in `subset`, or `None` if the
/// subsystem is singular.
fn interpolate_subset(ds: &Dataset, subset: &[usize]) -> Option<Array1<f64>> {
    let k = subset.len();
    let mut a = Array2::<f64>::zeros((k, k));
    let mut b = Array1::<f64>::zeros(k);
    for (row, &i) in subset.iter().enumerate() {
        a.row_mut(row).assign(&ds.x().row(i));
        b[row] = ds.y()[i];
    }
    gauss_solve(a, b)
}

/// Dense Gaussian elimination with partial pivoting; `None` on (near)
/// singular systems.
fn gauss_solve(mut a: Array2<f64>, mut b: Array1<f64>) -> Option<Array1<f64>> {
    let k = a.nrows();
    let scale = a.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-300);
    for col in 0..k {
        let mut pivot_row = col;
        let mut pivot_val = a[[col, col]].abs();
        for r in (col + 1)..k {
            if a[[r, col]].abs() > pivot_val {
                pivot_val = a[[r, col]].abs();
                pivot_row = r;
            }
        }
        if pivot_val <= 1e-12 * scale {
            return None;
        }
        if pivot_row != col {
            for c in 0..k {
                a.swap([col, c], [pivot_row, c]);
            }
            b.swap(col, pivot_row);
        }
        for r in (col + 1)..k {
            let f = a[[r, col]] / a[[col, col]];
            if f == 0.0 {
                continue;
            }
            for c in col..k {
                a[[r, c]] -= f * a[[col, c]];
            }
            b[r] -= f * b[col];
        }
    }
    for i in (0..k).rev() {
        let mut s = b[i];
        for j in (i + 1)..k {
            s -= a[[i, j]] * b[j];
        }
        b[i] = s / a[[i, i]];
    }
    Some(b)
}

/// Advance `subset` to the next k-combination of `0..n` in lexicographic
/// order; `false` when exhausted.
fn advance(subset: &mut [usize], n: usize) -> bool {
    let k = subset.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if subset[i] < n - k + i {
            subset[i] += 1;
            for j in (i + 1)..k {
                subset[j] = subset[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn single_observation_is_its_own_quantile() {
        let ds = Dataset::new(array![5.0], array![[1.0]], vec!["intercept".into()]).unwrap();
        let fit = solve_qr_bruteforce(&ds, 0.5).unwrap();
        assert_eq!(fit.beta[0], 5.0);
        assert_eq!(fit.objective, 0.0);
    }

    #[test]
    fn exact_line_is_recovered() {
        // y = x without noise, no intercept: slope 1 at any tau.
        let ds = Dataset::new(
            array![1.0, 2.0, 3.0, 4.0],
            array![[1.0], [2.0], [3.0], [4.0]],
            vec!["x".into()],
        )
        .unwrap();
        let fit = solve_qr_bruteforce(&ds, 0.3).unwrap();
        assert!((fit.beta[0] - 1.0).abs() < 1e-12);
        assert_eq!(fit.objective, 0.0);
    }

    #[test]
    fn median_of_three() {
        let ds = Dataset::new(
            array![1.0, 2.0, 3.0],
            array![[1.0], [1.0], [1.0]],
            vec!["intercept".into()],
        )
        .unwrap();
        let fit = solve_qr_bruteforce(&ds, 0.5).unwrap();
        assert_eq!(fit.beta[0], 2.0);
    }

    #[test]
    fn guard_rejects_large_instances() {
        let n = 40;
        let y = Array1::linspace(0.0, 1.0, n);
        let x = Array2::from_elem((n, 1), 1.0);
        let ds = Dataset::new(y, x, vec!["intercept".into()]).unwrap();
        assert!(matches!(
            solve_qr_bruteforce(&ds, 0.5),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn combination_enumeration_is_lexicographic_and_complete() {
        let mut subset = vec![0, 1];
        let mut seen = vec![subset.clone()];
        while advance(&mut subset, 4) {
            seen.push(subset.clone());
        }
        assert_eq!(
            seen,
            vec![
                vec![0, 1],
                vec![0, 2],
                vec![0, 3],
                vec![1, 2],
                vec![1, 3],
                vec![2, 3]
            ]
        );
    }
}
