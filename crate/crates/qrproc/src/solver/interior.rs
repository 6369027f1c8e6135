//! Primal-dual interior point core for quantile regression.
//!
//! The quantile regression problem `min_β Σ ρ_τ(y_i − x_i'β)` is solved
//! through its bounded-variable dual linear program
//!
//! ```text
//!     max  y'a    subject to   X'a = (1 − τ)·X'1,   a ∈ [0, 1]^n ,
//! ```
//!
//! written below in minimization form with `c = −y`.  The equality
//! multiplier at the optimum is the negative of the regression coefficient
//! vector.  Iterations are Mehrotra predictor-corrector steps; the only
//! factorization per iteration is a dense Cholesky of the k×k normal matrix
//! `X' D X`, so one iteration costs `O(n k²)`.

use crate::error::Error;
use crate::linalg::Cholesky;
use crate::solver::SolverOptions;
use crate::Result;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Zip};

/// Output of the interior point core.
pub struct IpSolution {
    pub beta: Array1<f64>,
    pub iterations: usize,
    /// Relative duality gap at termination.
    pub gap: f64,
}

/// Solve the quantile regression LP for coefficient vector `β`.
///
/// `warm_start` is an optional coefficient guess; it can only change the
/// number of iterations, never the solution.
pub fn solve(
    x: &ArrayView2<f64>,
    y: &ArrayView1<f64>,
    tau: f64,
    opts: &SolverOptions,
    warm_start: Option<&Array1<f64>>,
) -> Result<IpSolution> {
    solve_scaled(x, y, tau, opts, warm_start, None)
}

/// [`solve`] with an explicit objective scale anchoring the duality-gap
/// criterion: convergence requires `gap ≤ tol·(1 + scale)` instead of the
/// default scale taken from the iterate's own objective values.  Reduced
/// problems use this because their pseudo-observations inflate the LP
/// objective by a large constant that says nothing about the accuracy of
/// the coefficients.
pub fn solve_scaled(
    x: &ArrayView2<f64>,
    y: &ArrayView1<f64>,
    tau: f64,
    opts: &SolverOptions,
    warm_start: Option<&Array1<f64>>,
    objective_scale: Option<f64>,
) -> Result<IpSolution> {
    let (n, k) = x.dim();
    debug_assert_eq!(y.len(), n);
    let nf = n as f64;
    let eta = opts.step_fraction;
    let tol = opts.duality_gap_tol;
    let feas_tol = 1e-8_f64.min(tol * 10.0);

    // Right-hand side of the equality constraints.
    let col_sums = x.sum_axis(ndarray::Axis(0));
    let b = col_sums.mapv(|v| (1.0 - tau) * v);
    let b_scale = 1.0 + b.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let y_scale = 1.0 + y.iter().fold(0.0_f64, |m, v| m.max(v.abs()));

    // Primal-feasible start: a = (1-τ)·1 satisfies X'a = b exactly.
    let mut a = Array1::from_elem(n, 1.0 - tau);
    let mut s = Array1::from_elem(n, tau);

    // Multiplier start: warm coefficients if given, else least squares.
    let beta0 = match warm_start {
        Some(bw) => bw.clone(),
        None => least_squares(x, y).unwrap_or_else(|| Array1::zeros(k)),
    };
    let mut nu = beta0.mapv(|v| -v);
    // Dual slack start from residual signs: z - w = Xβ - y exactly, with a
    // floor keeping both components interior.
    let mut z = Array1::<f64>::zeros(n);
    let mut w = Array1::<f64>::zeros(n);
    {
        let fitted = x.dot(&beta0);
        let mean_abs_r = y
            .iter()
            .zip(fitted.iter())
            .map(|(yi, fi)| (yi - fi).abs())
            .sum::<f64>()
            / nf;
        let floor = 1e-4 * (1.0 + mean_abs_r);
        Zip::from(&mut z).and(&mut w).and(y).and(&fitted).for_each(
            |zi, wi, &yi, &fi| {
                let q = fi - yi; // c - A'ν component: Xβ - y
                *zi = q.max(0.0) + floor;
                *wi = (-q).max(0.0) + floor;
            },
        );
    }

    // Reusable work buffers.
    let mut xd = Array2::<f64>::zeros((n, k));
    let mut r_d = Array1::<f64>::zeros(n);
    let mut r_u = Array1::<f64>::zeros(n);
    let mut d = Array1::<f64>::zeros(n);
    let mut xi = Array1::<f64>::zeros(n);
    let mut xi_c = Array1::<f64>::zeros(n);
    let mut da = Array1::<f64>::zeros(n);
    let mut ds_ = Array1::<f64>::zeros(n);
    let mut dz = Array1::<f64>::zeros(n);
    let mut dw = Array1::<f64>::zeros(n);

    let mut iterations = 0usize;
    let mut rel_gap = f64::INFINITY;

    while iterations < opts.max_iter {
        // Residuals and gap.
        let xnu = x.dot(&nu);
        Zip::from(&mut r_d)
            .and(y)
            .and(&xnu)
            .and(&z)
            .and(&w)
            .for_each(|rd, &yi, &xn, &zi, &wi| *rd = -yi - xn - zi + wi);
        let r_p = &b - &x.t().dot(&a);
        Zip::from(&mut r_u).and(&a).and(&s).for_each(|ru, &ai, &si| *ru = 1.0 - ai - si);

        let gap = a.dot(&z) + s.dot(&w);
        let denom = match objective_scale {
            Some(scale) => 1.0 + scale,
            None => {
                let primal_obj = -y.dot(&a);
                let dual_obj = b.dot(&nu) - w.sum();
                1.0 + primal_obj.abs() + dual_obj.abs()
            }
        };
        rel_gap = gap / denom;
        let r_p_inf = r_p.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let r_u_inf = r_u.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let r_d_inf = r_d.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if !gap.is_finite() {
            break;
        }
        if rel_gap < tol
            && r_p_inf <= feas_tol * b_scale
            && r_u_inf <= feas_tol
            && r_d_inf <= feas_tol * y_scale
        {
            return Ok(IpSolution {
                beta: nu.mapv(|v| -v),
                iterations,
                gap: rel_gap,
            });
        }

        // Scaling matrix D = (Z/A + W/S)^{-1}.
        Zip::from(&mut d)
            .and(&a)
            .and(&s)
            .and(&z)
            .and(&w)
            .for_each(|di, &ai, &si, &zi, &wi| *di = 1.0 / (zi / ai + wi / si));

        // Normal matrix X' D X, factored once per iteration.
        Zip::from(xd.rows_mut())
            .and(x.rows())
            .and(&d)
            .for_each(|mut out, row, &di| {
                Zip::from(&mut out).and(&row).for_each(|o, &v| *o = v * di);
            });
        let m = x.t().dot(&xd);
        let chol = factor_with_ridge(m)?;

        // Predictor (affine scaling) direction.
        Zip::from(&mut xi)
            .and(&r_d)
            .and(&z)
            .and(&w)
            .and(&s)
            .and(&r_u)
            .for_each(|xv, &rd, &zi, &wi, &si, &ru| *xv = rd + zi - wi - wi / si * ru);
        let dnu_aff = {
            let mut rhs = r_p.clone();
            let dxi = Zip::from(&d).and(&xi).map_collect(|&di, &xv| di * xv);
            rhs += &x.t().dot(&dxi);
            chol.solve(&rhs.view())
        };
        let xdnu = x.dot(&dnu_aff);
        Zip::from(&mut da)
            .and(&d)
            .and(&xdnu)
            .and(&xi)
            .for_each(|dai, &di, &xv, &xiv| *dai = di * (xv - xiv));
        Zip::from(&mut ds_).and(&r_u).and(&da).for_each(|dsi, &ru, &dai| *dsi = ru - dai);
        Zip::from(&mut dz)
            .and(&z)
            .and(&a)
            .and(&da)
            .for_each(|dzi, &zi, &ai, &dai| *dzi = -zi - zi / ai * dai);
        Zip::from(&mut dw)
            .and(&w)
            .and(&s)
            .and(&ds_)
            .for_each(|dwi, &wi, &si, &dsi| *dwi = -wi - wi / si * dsi);

        let alpha_p_aff = max_step(&a, &da).min(max_step(&s, &ds_)).min(1.0);
        let alpha_d_aff = max_step(&z, &dz).min(max_step(&w, &dw)).min(1.0);

        let mu = gap / (2.0 * nf);
        let mut gap_aff = 0.0;
        for i in 0..n {
            gap_aff += (a[i] + alpha_p_aff * da[i]) * (z[i] + alpha_d_aff * dz[i])
                + (s[i] + alpha_p_aff * ds_[i]) * (w[i] + alpha_d_aff * dw[i]);
        }
        let mu_aff = gap_aff / (2.0 * nf);
        let sigma = ((mu_aff / mu).powi(3)).clamp(0.0, 1.0);
        let target = sigma * mu;

        // Corrector direction, reusing the factorization.
        for i in 0..n {
            xi_c[i] = xi[i] - (target - da[i] * dz[i]) / a[i] + (target - ds_[i] * dw[i]) / s[i];
        }
        let dnu = {
            let mut rhs = r_p.clone();
            let dxi = Zip::from(&d).and(&xi_c).map_collect(|&di, &xv| di * xv);
            rhs += &x.t().dot(&dxi);
            chol.solve(&rhs.view())
        };
        let xdnu_c = x.dot(&dnu);
        // Overwrite the affine direction with the corrected one, keeping the
        // affine products needed for the z/w updates.
        for i in 0..n {
            let da_c = d[i] * (xdnu_c[i] - xi_c[i]);
            let ds_c = r_u[i] - da_c;
            let dz_c = (target - da[i] * dz[i]) / a[i] - z[i] - z[i] / a[i] * da_c;
            let dw_c = (target - ds_[i] * dw[i]) / s[i] - w[i] - w[i] / s[i] * ds_c;
            da[i] = da_c;
            ds_[i] = ds_c;
            dz[i] = dz_c;
            dw[i] = dw_c;
        }

        let alpha_p = (eta * max_step(&a, &da).min(max_step(&s, &ds_))).min(1.0);
        let alpha_d = (eta * max_step(&z, &dz).min(max_step(&w, &dw))).min(1.0);

        for i in 0..n {
            a[i] += alpha_p * da[i];
            s[i] += alpha_p * ds_[i];
            z[i] += alpha_d * dz[i];
            w[i] += alpha_d * dw[i];
        }
        nu.scaled_add(alpha_d, &dnu);
        iterations += 1;
    }

    Err(Error::Convergence {
        tau,
        iterations,
        gap: rel_gap,
        last_beta: nu.mapv(|v| -v),
    })
}

/// Largest step α ≥ 0 with `v + α·dv ≥ 0` (∞ when no component decreases).
fn max_step(v: &Array1<f64>, dv: &Array1<f64>) -> f64 {
    let mut alpha = f64::INFINITY;
    for (vi, dvi) in v.iter().zip(dv.iter()) {
        if *dvi < 0.0 {
            alpha = alpha.min(-vi / dvi);
        }
    }
    alpha
}

/// Cholesky with escalating ridge jitter for nearly rank-deficient scaled
/// normal matrices (possible under extreme complementarity or degenerate
/// resamples).
fn factor_with_ridge(mut m: Array2<f64>) -> Result<Cholesky> {
    let k = m.nrows();
    let trace: f64 = (0..k).map(|i| m[[i, i]]).sum();
    let base = 1e-14 * (trace / k as f64).max(f64::MIN_POSITIVE);
    let mut ridge = 0.0;
    for attempt in 0..4 {
        if attempt > 0 {
            let add = base * 100f64.powi(attempt - 1) - ridge;
            for i in 0..k {
                m[[i, i]] += add;
            }
            ridge += add;
        }
        if let Ok(c) = Cholesky::factor(&m.view(), "interior point normal equations") {
            return Ok(c);
        }
    }
    Err(Error::NotPositiveDefinite {
        context: "interior point normal equations",
    })
}

/// Least squares coefficients, or `None` when the Gram matrix is too
/// ill-conditioned to factor (the caller falls back to zeros).
fn least_squares(x: &ArrayView2<f64>, y: &ArrayView1<f64>) -> Option<Array1<f64>> {
    let g = x.t().dot(x);
    let rhs = x.t().dot(y);
    Cholesky::factor(&g.view(), "least squares start").ok().map(|c| c.solve(&rhs.view()))
}
