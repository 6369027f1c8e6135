//! Dense linear algebra for small symmetric systems.
//!
//! Everything the solvers need operates on k×k matrices where k is the
//! number of regression coefficients (tens, not thousands), so simple
//! textbook implementations are both adequate and dependency-free:
//! Cholesky factorization for positive definite solves, cyclic Jacobi
//! iteration for symmetric eigenvalues, and a one-sided Jacobi SVD used for
//! the rank check on the (tall) design matrix.  The SVD works on the design
//! matrix itself rather than its Gram matrix because forming X'X squares
//! the condition number and makes small singular-value ratios unresolvable
//! in double precision.

use crate::error::Error;
use crate::Result;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Array2<f64>,
}

impl Cholesky {
    /// Factor a symmetric positive definite matrix; only the lower triangle
    /// of `a` is read.  `context` labels the failure if `a` is not positive
    /// definite.
    pub fn factor(a: &ArrayView2<f64>, context: &'static str) -> Result<Self> {
        let k = a.nrows();
        if a.ncols() != k {
            return Err(Error::DimensionMismatch {
                context: "cholesky of non-square matrix",
                expected: k,
                got: a.ncols(),
            });
        }
        let mut l = Array2::<f64>::zeros((k, k));
        for j in 0..k {
            let mut d = a[[j, j]];
            for m in 0..j {
                d -= l[[j, m]] * l[[j, m]];
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { context });
            }
            let dj = d.sqrt();
            l[[j, j]] = dj;
            for i in (j + 1)..k {
                let mut s = a[[i, j]];
                for m in 0..j {
                    s -= l[[i, m]] * l[[j, m]];
                }
                l[[i, j]] = s / dj;
            }
        }
        Ok(Cholesky { l })
    }

    /// Dimension of the factored matrix.
    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// Solve `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut Array1<f64>) {
        let k = self.dim();
        debug_assert_eq!(b.len(), k);
        // Forward substitution: L y = b.
        for i in 0..k {
            let mut s = b[i];
            for j in 0..i {
                s -= self.l[[i, j]] * b[j];
            }
            b[i] = s / self.l[[i, i]];
        }
        // Back substitution: L' x = y.
        for i in (0..k).rev() {
            let mut s = b[i];
            for j in (i + 1)..k {
                s -= self.l[[j, i]] * b[j];
            }
            b[i] = s / self.l[[i, i]];
        }
    }

    /// Solve `A x = b`.
    pub fn solve(&self, b: &ArrayView1<f64>) -> Array1<f64> {
        let mut x = b.to_owned();
        self.solve_in_place(&mut x);
        x
    }

    /// Solve `A X = B` column by column.
    pub fn solve_mat(&self, b: &ArrayView2<f64>) -> Array2<f64> {
        let mut out = b.to_owned();
        for mut col in out.columns_mut() {
            let mut v = col.to_owned();
            self.solve_in_place(&mut v);
            col.assign(&v);
        }
        out
    }

    /// Inverse of the factored matrix.
    pub fn inverse(&self) -> Array2<f64> {
        let k = self.dim();
        self.solve_mat(&Array2::eye(k).view())
    }
}

/// Solve the symmetric positive definite system `A x = b` in one call.
pub fn solve_spd(a: &ArrayView2<f64>, b: &ArrayView1<f64>, context: &'static str) -> Result<Array1<f64>> {
    Ok(Cholesky::factor(a, context)?.solve(b))
}

/// Eigenvalues of a symmetric matrix in ascending order, by cyclic Jacobi
/// rotations.  Only the lower triangle of `a` is read.
pub fn sym_eigenvalues(a: &ArrayView2<f64>) -> Array1<f64> {
    let k = a.nrows();
    debug_assert_eq!(a.ncols(), k);
    let mut m = Array2::<f64>::zeros((k, k));
    for i in 0..k {
        for j in 0..=i {
            m[[i, j]] = a[[i, j]];
            m[[j, i]] = a[[i, j]];
        }
    }
    let scale: f64 = m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())).max(1.0);
    for _sweep in 0..60 {
        let mut off = 0.0_f64;
        for i in 0..k {
            for j in (i + 1)..k {
                off = off.max(m[[i, j]].abs());
            }
        }
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..k {
            for q in (p + 1)..k {
                let apq = m[[p, q]];
                if apq.abs() <= 1e-18 * scale {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..k {
                    let mip = m[[i, p]];
                    let miq = m[[i, q]];
                    m[[i, p]] = c * mip - s * miq;
                    m[[i, q]] = s * mip + c * miq;
                }
                for i in 0..k {
                    let mpi = m[[p, i]];
                    let mqi = m[[q, i]];
                    m[[p, i]] = c * mpi - s * mqi;
                    m[[q, i]] = s * mpi + c * mqi;
                }
            }
        }
    }
    let mut eigs: Vec<f64> = (0..k).map(|i| m[[i, i]]).collect();
    eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Array1::from(eigs)
}

/// Singular values of a (tall or square) matrix in descending order, by
/// one-sided Jacobi orthogonalization of the columns.
pub fn singular_values(a: &ArrayView2<f64>) -> Array1<f64> {
    let (n, k) = a.dim();
    let mut m = a.to_owned();
    // Orthogonalize column pairs until all are numerically orthogonal.
    for _sweep in 0..40 {
        let mut rotated = false;
        for p in 0..k {
            for q in (p + 1)..k {
                let mut app = 0.0;
                let mut aqq = 0.0;
                let mut apq = 0.0;
                for i in 0..n {
                    let xp = m[[i, p]];
                    let xq = m[[i, q]];
                    app += xp * xp;
                    aqq += xq * xq;
                    apq += xp * xq;
                }
                if apq.abs() <= 1e-16 * (app * aqq).sqrt() || apq == 0.0 {
                    continue;
                }
                rotated = true;
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..n {
                    let xp = m[[i, p]];
                    let xq = m[[i, q]];
                    m[[i, p]] = c * xp - s * xq;
                    m[[i, q]] = s * xp + c * xq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut svs: Vec<f64> = (0..k)
        .map(|j| m.column(j).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    svs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Array1::from(svs)
}

/// Index of the first column (0-based) that is numerically dependent on the
/// columns before it, by modified Gram–Schmidt with relative tolerance
/// `rtol`.  Returns `None` when all columns are independent at that
/// tolerance.
pub fn first_dependent_column(a: &ArrayView2<f64>, rtol: f64) -> Option<usize> {
    let (n, k) = a.dim();
    let mut basis: Vec<Array1<f64>> = Vec::with_capacity(k);
    for j in 0..k {
        let mut v = a.column(j).to_owned();
        let norm0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for b in &basis {
            let proj: f64 = v.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
            for i in 0..n {
                v[i] -= proj * b[i];
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm <= rtol * norm0.max(1e-300) {
            return Some(j);
        }
        let inv = 1.0 / norm;
        v.mapv_inplace(|x| x * inv);
        basis.push(v);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn cholesky_solves_small_system() {
        let a = array![[4.0, 2.0, 0.6], [2.0, 5.0, 1.5], [0.6, 1.5, 3.0]];
        let b = array![1.0, -2.0, 3.0];
        let x = solve_spd(&a.view(), &b.view(), "test").unwrap();
        let r = a.dot(&x) - &b;
        assert!(r.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn cholesky_rejects_indefinite_matrix() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(matches!(
            Cholesky::factor(&a.view(), "test"),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn cholesky_inverse_matches_identity() {
        let a = array![[3.0, 1.0], [1.0, 2.0]];
        let inv = Cholesky::factor(&a.view(), "test").unwrap().inverse();
        let id = a.dot(&inv);
        assert!((id[[0, 0]] - 1.0).abs() < 1e-13);
        assert!((id[[1, 1]] - 1.0).abs() < 1e-13);
        assert!(id[[0, 1]].abs() < 1e-13);
        assert!(id[[1, 0]].abs() < 1e-13);
    }

    #[test]
    fn jacobi_eigenvalues_of_known_matrix() {
        // Eigenvalues of [[2,1],[1,2]] are 1 and 3.
        let a = array![[2.0, 1.0], [1.0, 2.0]];
        let e = sym_eigenvalues(&a.view());
        assert!((e[0] - 1.0).abs() < 1e-12);
        assert!((e[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn jacobi_eigenvalues_match_trace_and_det() {
        let a = array![[5.0, 1.0, 0.3], [1.0, 4.0, -0.5], [0.3, -0.5, 3.0]];
        let e = sym_eigenvalues(&a.view());
        let trace: f64 = e.sum();
        let det: f64 = e.iter().product();
        assert!((trace - 12.0).abs() < 1e-10);
        // det by cofactor expansion.
        let det_ref = 5.0 * (4.0 * 3.0 - 0.25) - 1.0 * (1.0 * 3.0 + 0.5 * 0.3)
            + 0.3 * (-0.5 - 4.0 * 0.3);
        assert!((det - det_ref).abs() < 1e-10);
    }

    #[test]
    fn singular_values_of_diagonal_matrix() {
        let a = array![[3.0, 0.0], [0.0, 0.5], [0.0, 0.0]];
        let s = singular_values(&a.view());
        assert!((s[0] - 3.0).abs() < 1e-12);
        assert!((s[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn singular_values_detect_duplicate_column() {
        // Two identical columns: smallest singular value must vanish exactly,
        // not just fall to sqrt(machine epsilon).
        let n = 50;
        let mut a = Array2::<f64>::zeros((n, 3));
        for i in 0..n {
            let x = (i as f64) * 0.1 - 2.5;
            a[[i, 0]] = 1.0;
            a[[i, 1]] = x;
            a[[i, 2]] = x;
        }
        let s = singular_values(&a.view());
        assert!(s[2] / s[0] < 1e-14, "ratio {}", s[2] / s[0]);
        assert_eq!(first_dependent_column(&a.view(), 1e-10), Some(2));
    }

    #[test]
    fn independent_columns_pass_dependence_scan() {
        let a = array![[1.0, 0.1], [1.0, 0.7], [1.0, -0.3]];
        assert_eq!(first_dependent_column(&a.view(), 1e-10), None);
    }
}
