//! Preprocessed (reduced-row) exact quantile regression.
//!
//! A preliminary coefficient estimate predicts which observations will fall
//! well below / well above the fitted quantile plane at the final solution.
//! Those rows are aggregated into two pseudo-observations and the solver
//! only works on the band of rows near the plane — roughly `m·(k·n)^e`
//! of them — plus the two aggregates.  After solving, the predicted
//! residual signs are verified against the actual solution; misclassified
//! rows are moved back into the kept band and the reduced problem is
//! re-solved (a *fixup*), or, if too many signs were wrong, the whole
//! attempt restarts with a wider band.  The final accepted fit is exactly
//! the full-data solution, not an approximation.
//!
//! Two entry points share this machinery:
//!
//! * [`fit_single_pk`] — one quantile index from scratch: the preliminary
//!   estimate comes from a random subsample of `(k·n)^{2/3}` rows and the
//!   band exponent is `2/3`.
//! * [`fit_process_preprocess`] — a whole grid: each grid point uses the
//!   previous point's solution as the preliminary estimate with the thinner
//!   `√(k·n)` band, so the marginal cost per additional grid point is far
//!   below a full solve.

use crate::data::Dataset;
use crate::error::Error;
use crate::grid::QuantileGrid;
use crate::linalg::Cholesky;
use crate::model::{self, CoefProcess, Engine, QrFit};
use crate::rng::{stream_rng, StreamDomain};
use crate::solver::{solve_globbed, solve_qr, GlobbedProblem, SolverOptions};
use crate::Result;
use ndarray::Array1;
use rand::seq::index::sample as sample_indices;

/// Exponent of `k·n` that sets the kept-band size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeptSizeExponent {
    /// `(k·n)^{2/3}` — single quantile index from a subsample preliminary.
    TwoThirds,
    /// `(k·n)^{1/2}` — grid traversal from a neighboring solution.
    OneHalf,
}

impl KeptSizeExponent {
    fn value(self) -> f64 {
        match self {
            KeptSizeExponent::TwoThirds => 2.0 / 3.0,
            KeptSizeExponent::OneHalf => 0.5,
        }
    }
}

/// Controls for the preprocessing engine.
#[derive(Debug, Clone)]
pub struct PreprocessConfig {
    /// Band-width multiplier `m` in the kept-row target `m·(k·n)^e`.
    pub m: f64,
    /// Residual sign violations tolerated before corrective action.
    pub allowed_bad_signs: usize,
    /// Restart budget before falling back to a full solve.
    pub max_rounds: usize,
    /// Band size exponent `e`.
    pub kept_size_exponent: KeptSizeExponent,
}

impl PreprocessConfig {
    /// Defaults for a one-off quantile index ([`fit_single_pk`]).
    pub fn single_tau() -> Self {
        PreprocessConfig {
            m: 0.8,
            allowed_bad_signs: 0,
            max_rounds: 10,
            kept_size_exponent: KeptSizeExponent::TwoThirds,
        }
    }

    /// Defaults for grid traversal and bootstrap replicates.
    pub fn process() -> Self {
        PreprocessConfig {
            m: 3.0,
            allowed_bad_signs: 0,
            max_rounds: 10,
            kept_size_exponent: KeptSizeExponent::OneHalf,
        }
    }
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig::process()
    }
}

/// A three-way row split by predicted residual sign.
#[derive(Debug, Clone)]
pub struct Partition {
    /// Rows predicted below the fitted plane (negative residuals).
    pub j_low: Vec<usize>,
    /// Rows predicted above the fitted plane (positive residuals).
    pub j_high: Vec<usize>,
    /// Rows kept for the reduced problem.
    pub kept: Vec<usize>,
    /// Lower standardized-residual threshold (−∞ when nothing is trimmed).
    pub q_low: f64,
    /// Upper standardized-residual threshold (+∞ when nothing is trimmed).
    pub q_high: f64,
}

/// Per-call diagnostics from the preprocessing driver.
#[derive(Debug, Clone, Default)]
pub struct PreprocessDiag {
    /// Kept-band row target `M` of the first attempt.
    pub initial_kept_target: usize,
    /// Band-doubling restarts performed.
    pub restarts: usize,
    /// Sign-violation evictions performed.
    pub evictions: usize,
    /// Kept rows in the accepted attempt (0 when fully falling back).
    pub final_kept: usize,
    /// Preliminary-estimate subsample size (single-index path only).
    pub subsample_size: Option<usize>,
    /// Whether the call gave up on reduction and solved the full problem.
    pub fell_back_to_full: bool,
}

/// Standardization scale `z_i = sqrt(x_i'(X'X/n)^{-1}x_i)` for each row.
///
/// Residuals are divided by this leverage-like scale before ranking, so the
/// trimming quantiles adapt to design outliers.  The solution does not
/// depend on this choice — the sign-check loop guarantees exactness — it
/// only affects how often fixups are needed.
pub fn residual_scale(ds: &Dataset) -> Result<Array1<f64>> {
    let n = ds.n() as f64;
    let mut gram = ds.x().t().dot(ds.x());
    gram.mapv_inplace(|v| v / n);
    let chol = Cholesky::factor(&gram.view(), "residual scale gram matrix")?;
    let mut z = Array1::<f64>::zeros(ds.n());
    for (i, row) in ds.x().rows().into_iter().enumerate() {
        let v = chol.solve(&row);
        z[i] = row.dot(&v).max(0.0).sqrt().max(1e-300);
    }
    Ok(z)
}

/// Split rows by the `τ ± M/2n` type-1 sample quantiles of the
/// standardized residuals.  Quantile indices that fall at or outside 0 / 1
/// trim nothing on that side, and a target of `M ≥ n` keeps every row.
pub fn partition(
    residuals: &Array1<f64>,
    scale: &Array1<f64>,
    tau: f64,
    m_target: usize,
) -> Result<Partition> {
    let n = residuals.len();
    if scale.len() != n {
        return Err(Error::DimensionMismatch {
            context: "residual scale length vs residuals",
            expected: n,
            got: scale.len(),
        });
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::TauOutOfRange { tau });
    }
    if m_target == 0 {
        return Err(Error::InvalidArgument(
            "kept-band target must be positive".to_string(),
        ));
    }
    let ratios: Vec<f64> = residuals
        .iter()
        .zip(scale.iter())
        .map(|(&r, &z)| r / z)
        .collect();
    let half_window = m_target as f64 / (2.0 * n as f64);
    let p_low = tau - half_window;
    let p_high = tau + half_window;
    let q_low = if m_target >= n || p_low <= 0.0 {
        f64::NEG_INFINITY
    } else {
        type1_quantile(&ratios, p_low)
    };
    let q_high = if m_target >= n || p_high >= 1.0 {
        f64::INFINITY
    } else {
        type1_quantile(&ratios, p_high)
    };

    let mut j_low = Vec::new();
    let mut j_high = Vec::new();
    let mut kept = Vec::new();
    for (i, &v) in ratios.iter().enumerate() {
        if v < q_low {
            j_low.push(i);
        } else if v > q_high {
            j_high.push(i);
        } else {
            kept.push(i);
        }
    }
    Ok(Partition {
        j_low,
        j_high,
        kept,
        q_low,
        q_high,
    })
}

/// Type-1 (left-continuous inverse ECDF) sample quantile, `p ∈ (0, 1)`.
fn type1_quantile(values: &[f64], p: f64) -> f64 {
    let n = values.len();
    let idx = ((p * n as f64).ceil() as usize).clamp(1, n) - 1;
    let mut work = values.to_vec();
    let (_, v, _) = work.select_nth_unstable_by(idx, |a, b| a.total_cmp(b));
    *v
}

/// Outcome of a single partition-solve-check attempt.
enum Attempt {
    /// All predicted signs verified: exact solution found.
    Accepted(QrFit, usize),
    /// Too many sign violations: widen the band and retry.
    NeedsRestart,
    /// The partition trimmed nothing; caller should solve in full.
    Trivial,
}

/// One partition → glob → solve → verify cycle with the eviction loop.
fn preprocess_attempt(
    ds: &Dataset,
    tau: f64,
    scale: &Array1<f64>,
    prelim: &Array1<f64>,
    m_target: usize,
    cfg: &PreprocessConfig,
    opts: &SolverOptions,
    diag: &mut PreprocessDiag,
) -> Result<Attempt> {
    let residuals = ds.residuals(prelim);
    let part = partition(&residuals, scale, tau, m_target)?;
    if part.j_low.is_empty() && part.j_high.is_empty() {
        return Ok(Attempt::Trivial);
    }

    let mut j_low = part.j_low;
    let mut j_high = part.j_high;
    let mut kept = part.kept;
    let mut warm = prelim.clone();
    let restart_threshold = (0.1 * m_target as f64).max(1.0);

    loop {
        let gp = GlobbedProblem::new(ds, &j_low, &j_high, &kept, prelim);
        let reduced = solve_globbed(&gp, tau, opts, Some(&warm))?;

        // Verify predicted residual signs of every aggregated row, and of
        // the pseudo-rows themselves.
        let mut bad_low: Vec<usize> = Vec::new();
        let mut bad_high: Vec<usize> = Vec::new();
        for &i in &j_low {
            let r = ds.y()[i] - ds.x().row(i).dot(&reduced.beta);
            if r >= 0.0 {
                bad_low.push(i);
            }
        }
        for &i in &j_high {
            let r = ds.y()[i] - ds.x().row(i).dot(&reduced.beta);
            if r <= 0.0 {
                bad_high.push(i);
            }
        }
        let pseudo_r = gp.residuals(&reduced.beta);
        let pseudo_ok = {
            let mut ok = true;
            let mut idx = gp.kept.len();
            if !j_low.is_empty() {
                ok &= pseudo_r[idx] < 0.0;
                idx += 1;
            }
            if !j_high.is_empty() {
                ok &= pseudo_r[idx] > 0.0;
            }
            ok
        };

        let bad = bad_low.len() + bad_high.len();
        if bad <= cfg.allowed_bad_signs && pseudo_ok {
            let fit = QrFit {
                tau,
                objective: model::objective_unchecked(ds, &reduced.beta, tau),
                moment_inf_norm: model::moment_inf_norm(ds, &reduced.beta, tau),
                beta: reduced.beta,
                engine: Engine::Preprocess,
                iterations: reduced.iterations,
                fixups: diag.evictions + diag.restarts,
            };
            return Ok(Attempt::Accepted(fit, kept.len()));
        }
        if !pseudo_ok || (bad as f64) >= restart_threshold {
            return Ok(Attempt::NeedsRestart);
        }
        // Eviction fixup: move misclassified rows into the kept band.
        j_low.retain(|i| !bad_low.contains(i));
        j_high.retain(|i| !bad_high.contains(i));
        kept.extend(bad_low);
        kept.extend(bad_high);
        diag.evictions += 1;
        warm = reduced.beta;
    }
}

/// Kept-band target for given data size and config.
fn kept_target(n: usize, k: usize, m: f64, exponent: KeptSizeExponent) -> usize {
    ((m * ((k * n) as f64).powf(exponent.value())).round() as usize).max(1)
}

/// Exact quantile regression through the reduced problem, given a
/// preliminary coefficient estimate (for grid traversal: the previous grid
/// point's solution).  Returns diagnostics alongside the fit.
///
/// Never fails outright for lack of a good preliminary estimate: after
/// `max_rounds` band-doubling restarts it solves the full problem and
/// reports `fixups = max_rounds`.
pub fn solve_preprocessed_diag(
    ds: &Dataset,
    tau: f64,
    prelim: &Array1<f64>,
    cfg: &PreprocessConfig,
    opts: &SolverOptions,
) -> Result<(QrFit, PreprocessDiag)> {
    let scale = residual_scale(ds)?;
    solve_preprocessed_with_scale(ds, tau, prelim, &scale, cfg, opts)
}

/// [`solve_preprocessed_diag`] with a caller-cached residual scale, so grid
/// and bootstrap drivers do not recompute the Gram factorization per call.
pub fn solve_preprocessed_with_scale(
    ds: &Dataset,
    tau: f64,
    prelim: &Array1<f64>,
    scale: &Array1<f64>,
    cfg: &PreprocessConfig,
    opts: &SolverOptions,
) -> Result<(QrFit, PreprocessDiag)> {
    if prelim.len() != ds.k() {
        return Err(Error::DimensionMismatch {
            context: "preliminary estimate length vs design columns",
            expected: ds.k(),
            got: prelim.len(),
        });
    }
    let mut diag = PreprocessDiag::default();
    let mut m_mult = cfg.m;
    diag.initial_kept_target = kept_target(ds.n(), ds.k(), m_mult, cfg.kept_size_exponent);

    for round in 0..cfg.max_rounds {
        let m_target = kept_target(ds.n(), ds.k(), m_mult, cfg.kept_size_exponent);
        if m_target >= ds.n() {
            break;
        }
        match preprocess_attempt(ds, tau, scale, prelim, m_target, cfg, opts, &mut diag)? {
            Attempt::Accepted(fit, kept) => {
                diag.final_kept = kept;
                return Ok((fit, diag));
            }
            Attempt::Trivial => break,
            Attempt::NeedsRestart => {
                diag.restarts = round + 1;
                m_mult *= 2.0;
            }
        }
    }

    // Fall back to the full problem.
    diag.fell_back_to_full = true;
    let exhausted = diag.restarts >= cfg.max_rounds;
    let mut fit = solve_qr(ds, tau, opts, Some(prelim))?;
    fit.fixups = if exhausted { cfg.max_rounds } else { diag.restarts + diag.evictions };
    Ok((fit, diag))
}

/// Exact quantile regression through the reduced problem.  See
/// [`solve_preprocessed_diag`] for the mechanics.
pub fn solve_preprocessed(
    ds: &Dataset,
    tau: f64,
    prelim: &Array1<f64>,
    cfg: &PreprocessConfig,
    opts: &SolverOptions,
) -> Result<QrFit> {
    solve_preprocessed_diag(ds, tau, prelim, cfg, opts).map(|(fit, _)| fit)
}

/// Exact single-index fit: preliminary estimate from a `(k·n)^{2/3}`-row
/// random subsample, then the reduced problem with a `m·(k·n)^{2/3}` band.
/// Restarts double the subsample; small problems fall through to a plain
/// full solve.  Returns diagnostics alongside the fit.
///
/// The subsample is drawn from a generator seeded deterministically from
/// `(n, k, τ)`, so repeated calls are reproducible.
pub fn fit_single_pk_diag(
    ds: &Dataset,
    tau: f64,
    cfg: &PreprocessConfig,
    opts: &SolverOptions,
) -> Result<(QrFit, PreprocessDiag)> {
    let (n, k) = (ds.n(), ds.k());
    let mut subsample_size = ((k * n) as f64).powf(2.0 / 3.0).ceil() as usize;
    let mut diag = PreprocessDiag::default();

    if subsample_size >= n {
        let fit = solve_qr(ds, tau, opts, None)?;
        diag.fell_back_to_full = true;
        return Ok((fit, diag));
    }

    let scale = residual_scale(ds)?;
    let subsample_seed = (n as u64)
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(k as u64)
        .wrapping_add(tau.to_bits());

    for round in 0..cfg.max_rounds {
        diag.subsample_size = Some(subsample_size);
        let mut rng = stream_rng(subsample_seed, StreamDomain::Subsample, round as u64);
        let idx = sample_indices(&mut rng, n, subsample_size).into_vec();
        let sub = ds.resample(&idx);
        let prelim = match solve_qr(&sub, tau, opts, None) {
            Ok(fit) => fit.beta,
            // A degenerate subsample (for instance a rank-deficient draw of
            // indicator covariates) is handled like a failed sign check:
            // double the subsample and try again.
            Err(_) => {
                subsample_size = (2 * subsample_size).min(n);
                diag.restarts = round + 1;
                if subsample_size >= n {
                    break;
                }
                continue;
            }
        };

        let m_target = kept_target(n, k, cfg.m, KeptSizeExponent::TwoThirds);
        if m_target >= n {
            break;
        }
        match preprocess_attempt(ds, tau, &scale, &prelim, m_target, cfg, opts, &mut diag)? {
            Attempt::Accepted(fit, kept) => {
                diag.initial_kept_target = m_target;
                diag.final_kept = kept;
                return Ok((fit, diag));
            }
            Attempt::Trivial => break,
            Attempt::NeedsRestart => {
                diag.restarts = round + 1;
                subsample_size = (2 * subsample_size).min(n);
                if subsample_size >= n {
                    break;
                }
            }
        }
    }

    diag.fell_back_to_full = true;
    let exhausted = diag.restarts >= cfg.max_rounds;
    let mut fit = solve_qr(ds, tau, opts, None)?;
    fit.fixups = if exhausted { cfg.max_rounds } else { diag.restarts + diag.evictions };
    Ok((fit, diag))
}

/// Exact single-index fit through subsample preliminary + reduced solve.
pub fn fit_single_pk(
    ds: &Dataset,
    tau: f64,
    cfg: &PreprocessConfig,
    opts: &SolverOptions,
) -> Result<QrFit> {
    fit_single_pk_diag(ds, tau, cfg, opts).map(|(fit, _)| fit)
}

/// Exact coefficient process on a grid: the first point through
/// [`fit_single_pk`] (with its own single-index defaults for the band), the
/// rest by preprocessing from the previous point's solution under `cfg`.
pub fn fit_process_preprocess(
    ds: &Dataset,
    grid: &QuantileGrid,
    cfg: &PreprocessConfig,
    opts: &SolverOptions,
) -> Result<CoefProcess> {
    let taus = grid.taus();
    let mut fits: Vec<QrFit> = Vec::with_capacity(taus.len());

    let single_cfg = PreprocessConfig {
        allowed_bad_signs: cfg.allowed_bad_signs,
        max_rounds: cfg.max_rounds,
        ..PreprocessConfig::single_tau()
    };
    fits.push(fit_single_pk(ds, taus[0], &single_cfg, opts)?);

    if taus.len() > 1 {
        let scale = residual_scale(ds)?;
        for &tau in &taus[1..] {
            let prelim = fits.last().unwrap().beta.clone();
            let (fit, _) =
                solve_preprocessed_with_scale(ds, tau, &prelim, &scale, cfg, opts)?;
            fits.push(fit);
        }
    }
    CoefProcess::new(grid.clone(), fits)
}
