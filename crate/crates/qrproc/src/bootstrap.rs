//! Bootstrap schemes for the quantile coefficient process.
//!
//! Three resampling strategies, in decreasing order of per-replicate cost:
//!
//! * [`bootstrap_qr_preprocessed`] — the empirical bootstrap with the exact
//!   reduced-row engine: each replicate resamples rows with replacement and
//!   refits the whole process, chaining grid points exactly like the sample
//!   fit did, with the sample solution as the preliminary estimate.
//! * [`bootstrap_onestep`] — the empirical bootstrap where each replicate
//!   anchors one exact fit near the median and traverses the rest of the
//!   grid with Newton updates.
//! * [`score_multiplier_bootstrap`] — no refitting at all: replicates
//!   perturb the fitted score `Σ_i ξ_i ψ_i(τ) x_i` with random multipliers
//!   `ξ` and map it through the inverse Jacobian, which is asymptotically
//!   equivalent and runs in `O(n·k)` per grid point and replicate.
//!
//! All replicates draw their randomness from counter-based streams keyed by
//! `(base_seed, replicate)`, so results are reproducible regardless of
//! thread scheduling, and a failed replicate never perturbs the stream of
//! any other.

use crate::data::Dataset;
use crate::error::Error;
use crate::grid::QuantileGrid;
use crate::linalg::Cholesky;
use crate::model::CoefProcess;
use crate::onestep::{hall_sheather_bandwidth, powell_jacobian, OneStepConfig};
use crate::preprocess::{residual_scale, solve_preprocessed_with_scale, PreprocessConfig};
use crate::rng::{stream_rng, StreamDomain};
use crate::solver::SolverOptions;
use crate::Result;
use ndarray::{Array1, Array2, Array3};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use std::io::{Read as IoRead, Write as IoWrite};
use std::path::Path;

/// Multiplier distributions for the weighted bootstrap.
///
/// Mean-one schemes act like random observation weights, mean-zero schemes
/// like score perturbations; both are valid because the fitted score sums
/// to (numerically) zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightScheme {
    /// Standard exponential weights (mean 1, variance 1).
    BayesianExponential,
    /// Standard normal multipliers (mean 0, variance 1).
    Gaussian,
    /// Two-point wild multipliers with unit variance and unit third moment
    /// (the golden-ratio two-point law).
    Wild,
    /// Resampling counts: how often each row appears in an `n`-out-of-`n`
    /// draw with replacement (mean 1, variance ≈ 1).
    Multinomial,
    /// All-zero weights; every draw degenerates to the sample estimate.
    /// Only useful for testing plumbing.
    Zero,
}

/// Sign convention for the multiplier-bootstrap perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScoreSign {
    /// Add the perturbation to the estimate (the influence-function
    /// direction of the first-order expansion).
    #[default]
    Plus,
    /// Subtract it, mirroring every draw around the estimate.  With
    /// symmetric multipliers the two conventions agree in distribution.
    Minus,
}

/// Controls shared by the bootstrap drivers.
#[derive(Debug, Clone)]
pub struct BootstrapConfig {
    /// Reduced-problem controls for replicate refits.
    pub preprocess: PreprocessConfig,
    /// Interior point controls for replicate refits.
    pub solver: SolverOptions,
    /// Traversal controls (bandwidth level, ridge) for one-step replicates
    /// and for Jacobians in the multiplier bootstrap.
    pub onestep: OneStepConfig,
    /// Replicate failure rate above which the whole run is an error.
    pub max_failure_rate: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            preprocess: PreprocessConfig::process(),
            solver: SolverOptions::default(),
            onestep: OneStepConfig::default(),
            max_failure_rate: 0.05,
        }
    }
}

/// Coefficient draws from a bootstrap run.
#[derive(Debug, Clone)]
pub struct BootstrapDraws {
    grid: QuantileGrid,
    /// Successful draws, `(replicate, grid point, coefficient)`.
    draws: Array3<f64>,
    /// Replicates that failed and were dropped.
    pub failed: usize,
    /// Base seed the streams were keyed by.
    pub seed: u64,
}

impl BootstrapDraws {
    /// Grid the draws are aligned to.
    pub fn grid(&self) -> &QuantileGrid {
        &self.grid
    }

    /// Number of successful replicates.
    pub fn n_draws(&self) -> usize {
        self.draws.shape()[0]
    }

    /// Coefficients per grid point.
    pub fn k(&self) -> usize {
        self.draws.shape()[2]
    }

    /// All draws, `(replicate, grid point, coefficient)`.
    pub fn draws(&self) -> &Array3<f64> {
        &self.draws
    }

    /// One replicate's coefficient process, `(grid point, coefficient)`.
    pub fn draw(&self, b: usize) -> ndarray::ArrayView2<'_, f64> {
        self.draws.index_axis(ndarray::Axis(0), b)
    }

    /// Write draws as CSV with columns `replicate,tau,coefficient,value`.
    /// Values round-trip bit-exactly through the shortest-representation
    /// float format.
    pub fn write_csv<W: IoWrite>(&self, writer: W, names: &[String]) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["replicate", "tau", "coefficient", "value"])
            .map_err(csv_io_error)?;
        let taus = self.grid.taus();
        for b in 0..self.n_draws() {
            for (j, &tau) in taus.iter().enumerate() {
                for c in 0..self.k() {
                    let name = names
                        .get(c)
                        .map(String::as_str)
                        .unwrap_or("coefficient");
                    w.write_record([
                        b.to_string(),
                        format!("{tau}"),
                        name.to_string(),
                        format!("{}", self.draws[[b, j, c]]),
                    ])
                    .map_err(csv_io_error)?;
                }
            }
        }
        w.flush().map_err(|e| Error::Io {
            path: "<csv writer>".into(),
            source: e,
        })?;
        Ok(())
    }

    /// Write draws in the compact binary layout: magic `QRBD`, then
    /// little-endian `u64` counts (replicates, grid points, coefficients,
    /// seed), then all draws as little-endian `f64` in replicate-major
    /// order.
    pub fn write_binary<W: IoWrite>(&self, mut writer: W) -> Result<()> {
        let io_err = |e| Error::Io {
            path: "<binary writer>".into(),
            source: e,
        };
        writer.write_all(b"QRBD").map_err(io_err)?;
        for v in [
            self.n_draws() as u64,
            self.grid.len() as u64,
            self.k() as u64,
            self.seed,
        ] {
            writer.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
        for &v in self.draws.iter() {
            writer.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
        Ok(())
    }

    /// Write the binary layout to a file path.
    pub fn save_binary<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        self.write_binary(std::io::BufWriter::new(file))
    }

    /// Read the binary layout back.  The caller supplies the grid the draws
    /// were computed on; its length must match the stored grid-point count.
    pub fn read_binary<R: IoRead>(mut reader: R, grid: QuantileGrid) -> Result<BootstrapDraws> {
        let parse_err = |reason: String| Error::ParseError {
            path: "<binary reader>".into(),
            reason,
        };
        let mut magic = [0u8; 4];
        reader
            .read_exact(&mut magic)
            .map_err(|e| parse_err(format!("missing magic bytes: {e}")))?;
        if &magic != b"QRBD" {
            return Err(parse_err(format!(
                "bad magic bytes {:?}, expected \"QRBD\"",
                magic
            )));
        }
        let mut word = [0u8; 8];
        let mut header = [0u64; 4];
        for h in header.iter_mut() {
            reader
                .read_exact(&mut word)
                .map_err(|e| parse_err(format!("truncated header: {e}")))?;
            *h = u64::from_le_bytes(word);
        }
        let (b, j, k, seed) = (
            header[0] as usize,
            header[1] as usize,
            header[2] as usize,
            header[3],
        );
        if j != grid.len() {
            return Err(Error::DimensionMismatch {
                context: "stored grid points vs supplied grid",
                expected: grid.len(),
                got: j,
            });
        }
        let mut draws = Array3::<f64>::zeros((b, j, k));
        for v in draws.iter_mut() {
            reader
                .read_exact(&mut word)
                .map_err(|e| parse_err(format!("truncated draw data: {e}")))?;
            *v = f64::from_le_bytes(word);
        }
        Ok(BootstrapDraws {
            grid,
            draws,
            failed: 0,
            seed,
        })
    }

    /// Read the binary layout from a file path.
    pub fn load_binary<P: AsRef<Path>>(path: P, grid: QuantileGrid) -> Result<BootstrapDraws> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::read_binary(std::io::BufReader::new(file), grid)
    }
}

fn csv_io_error(e: csv::Error) -> Error {
    Error::ParseError {
        path: "<csv writer>".into(),
        reason: e.to_string(),
    }
}

/// `n` row indices drawn with replacement.
pub fn resample_indices<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    (0..n).map(|_| rng.gen_range(0..n)).collect()
}

/// One vector of bootstrap multipliers under the given scheme.
pub fn draw_weights<R: Rng>(scheme: WeightScheme, n: usize, rng: &mut R) -> Array1<f64> {
    match scheme {
        WeightScheme::BayesianExponential => {
            Array1::from_iter((0..n).map(|_| Exp1.sample(rng)))
        }
        WeightScheme::Gaussian => Array1::from_iter((0..n).map(|_| {
            let v: f64 = StandardNormal.sample(rng);
            v
        })),
        WeightScheme::Wild => {
            // Two-point law at (1±√5)/2: mean 0, variance 1, third moment 1.
            let sqrt5 = 5.0_f64.sqrt();
            let low = (1.0 - sqrt5) / 2.0;
            let high = (1.0 + sqrt5) / 2.0;
            let p_low = (sqrt5 + 1.0) / (2.0 * sqrt5);
            Array1::from_iter((0..n).map(|_| {
                if rng.gen::<f64>() < p_low {
                    low
                } else {
                    high
                }
            }))
        }
        WeightScheme::Multinomial => {
            let mut counts = vec![0.0_f64; n];
            for _ in 0..n {
                counts[rng.gen_range(0..n)] += 1.0;
            }
            Array1::from(counts)
        }
        WeightScheme::Zero => Array1::zeros(n),
    }
}

/// Check the failure budget and assemble the draw container.
fn collect_draws(
    grid: &QuantileGrid,
    k: usize,
    results: Vec<Option<Array2<f64>>>,
    max_failure_rate: f64,
    seed: u64,
) -> Result<BootstrapDraws> {
    let total = results.len();
    let successes: Vec<Array2<f64>> = results.into_iter().flatten().collect();
    let failed = total - successes.len();
    if (failed as f64) > max_failure_rate * (total as f64) {
        return Err(Error::BootstrapFailure {
            failed,
            total,
            max_rate: max_failure_rate,
        });
    }
    let mut draws = Array3::<f64>::zeros((successes.len(), grid.len(), k));
    for (b, rep) in successes.iter().enumerate() {
        draws.index_axis_mut(ndarray::Axis(0), b).assign(rep);
    }
    Ok(BootstrapDraws {
        grid: grid.clone(),
        draws,
        failed,
        seed,
    })
}

/// Empirical bootstrap of the whole coefficient process with the exact
/// reduced-row engine.
///
/// Each replicate resamples `n` rows with replacement and refits every grid
/// point, using the sample process (`proc`) for its first preliminary
/// estimate and then chaining along the grid.  The sample's standardization
/// scale is reused (gathered through the resampling indices) instead of
/// being refactorized per replicate; it only steers the row partition, so
/// replicate fits remain exact.
///
/// Replicates that fail to converge are dropped and counted; a failure
/// rate above `cfg.max_failure_rate` is an error.
pub fn bootstrap_qr_preprocessed(
    ds: &Dataset,
    proc: &CoefProcess,
    replicates: usize,
    cfg: &BootstrapConfig,
    base_seed: u64,
) -> Result<BootstrapDraws> {
    check_process_alignment(ds, proc)?;
    check_failure_rate(cfg.max_failure_rate)?;
    let scale = residual_scale(ds)?;
    let taus = proc.grid().taus();
    let k = ds.k();

    let results: Vec<Option<Array2<f64>>> = (0..replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(base_seed, StreamDomain::Resample, b as u64);
            let idx = resample_indices(ds.n(), &mut rng);
            let rep_ds = ds.resample(&idx);
            let rep_scale = Array1::from_iter(idx.iter().map(|&i| scale[i]));

            let mut rep_draws = Array2::<f64>::zeros((taus.len(), k));
            let mut prelim = proc.fits()[0].beta.clone();
            for (j, &tau) in taus.iter().enumerate() {
                match solve_preprocessed_with_scale(
                    &rep_ds,
                    tau,
                    &prelim,
                    &rep_scale,
                    &cfg.preprocess,
                    &cfg.solver,
                ) {
                    Ok((fit, _)) => {
                        rep_draws.row_mut(j).assign(&fit.beta);
                        prelim = fit.beta;
                    }
                    Err(_) => return None,
                }
            }
            Some(rep_draws)
        })
        .collect();

    collect_draws(proc.grid(), k, results, cfg.max_failure_rate, base_seed)
}

/// Empirical bootstrap where each replicate refits one grid point exactly
/// (the one nearest the median, preprocessed from the sample solution) and
/// reaches every other grid point with one-step Newton updates.
pub fn bootstrap_onestep(
    ds: &Dataset,
    proc: &CoefProcess,
    replicates: usize,
    cfg: &BootstrapConfig,
    base_seed: u64,
) -> Result<BootstrapDraws> {
    check_process_alignment(ds, proc)?;
    check_failure_rate(cfg.max_failure_rate)?;
    let scale = residual_scale(ds)?;
    let taus = proc.grid().taus();
    let k = ds.k();
    let anchor = proc.grid().nearest_index(0.5);
    // Bandwidths depend only on (τ, n, level): compute once.
    let bandwidths: Vec<f64> = taus
        .iter()
        .map(|&t| hall_sheather_bandwidth(t, ds.n(), cfg.onestep.alpha))
        .collect::<Result<_>>()?;

    let results: Vec<Option<Array2<f64>>> = (0..replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(base_seed, StreamDomain::Resample, b as u64);
            let idx = resample_indices(ds.n(), &mut rng);
            let rep_ds = ds.resample(&idx);
            let rep_scale = Array1::from_iter(idx.iter().map(|&i| scale[i]));

            let anchor_fit = solve_preprocessed_with_scale(
                &rep_ds,
                taus[anchor],
                &proc.fits()[anchor].beta,
                &rep_scale,
                &cfg.preprocess,
                &cfg.solver,
            );
            let anchor_beta = match anchor_fit {
                Ok((fit, _)) => fit.beta,
                Err(_) => return None,
            };

            let mut rep_draws = Array2::<f64>::zeros((taus.len(), k));
            rep_draws.row_mut(anchor).assign(&anchor_beta);
            // March up, then down, exactly like the sample traversal.
            let walk = |range: Box<dyn Iterator<Item = (usize, usize)>>,
                            rep_draws: &mut Array2<f64>|
             -> Option<()> {
                for (from, to) in range {
                    let beta_from = rep_draws.row(from).to_owned();
                    let jac =
                        powell_jacobian(&rep_ds, &beta_from, bandwidths[from], taus[from]).ok()?;
                    let jac = if jac.is_singular() {
                        match cfg.onestep.ridge {
                            Some(lambda) => jac.regularized(lambda),
                            None => return None,
                        }
                    } else {
                        jac
                    };
                    let beta_to =
                        crate::onestep::onestep_update(&rep_ds, taus[to], &beta_from, &jac).ok()?;
                    rep_draws.row_mut(to).assign(&beta_to);
                }
                Some(())
            };
            let up = (anchor..taus.len().saturating_sub(1)).map(|j| (j, j + 1));
            let down = (1..=anchor).rev().map(|j| (j, j - 1));
            walk(Box::new(up), &mut rep_draws)?;
            walk(Box::new(down), &mut rep_draws)?;
            Some(rep_draws)
        })
        .collect();

    collect_draws(proc.grid(), k, results, cfg.max_failure_rate, base_seed)
}

/// Multiplier (weighted-score) bootstrap: no refitting.
///
/// The fitted score vectors `ψ_i(τ) x_i` with `ψ_i(τ) = τ − 1{r_i(τ) ≤ 0}`
/// and the per-grid-point Jacobian factorizations are precomputed once;
/// each replicate then draws multipliers `ξ` and produces
///
/// ```text
/// β*(τ) = β̂(τ) ± J(τ)⁻¹ · (1/n) Σ_i ξ_i ψ_i(τ) x_i
/// ```
///
/// with the sign chosen by `sign`.  Jacobians are taken from the process
/// when attached (the one-step engine attaches them) and estimated
/// otherwise.
pub fn score_multiplier_bootstrap(
    ds: &Dataset,
    proc: &CoefProcess,
    replicates: usize,
    scheme: WeightScheme,
    sign: ScoreSign,
    cfg: &BootstrapConfig,
    base_seed: u64,
) -> Result<BootstrapDraws> {
    check_process_alignment(ds, proc)?;
    check_failure_rate(cfg.max_failure_rate)?;
    let (n, k) = (ds.n(), ds.k());
    let taus = proc.grid().taus();
    let n_grid = taus.len();

    // ψ matrix, (grid point × observation).
    let mut psi = Array2::<f64>::zeros((n_grid, n));
    for (j, fit) in proc.fits().iter().enumerate() {
        let r = ds.residuals(&fit.beta);
        let tau = fit.tau;
        for i in 0..n {
            psi[[j, i]] = if r[i] <= 0.0 { tau - 1.0 } else { tau };
        }
    }

    // Per-grid-point Jacobian factorizations.
    let factorizations: Vec<Cholesky> = match proc.jacobians.as_ref() {
        Some(jacs) => jacs
            .iter()
            .map(|jac| factor_jacobian(jac, cfg))
            .collect::<Result<_>>()?,
        None => {
            let mut out = Vec::with_capacity(n_grid);
            for fit in proc.fits() {
                let h = hall_sheather_bandwidth(fit.tau, n, cfg.onestep.alpha)?;
                let jac = powell_jacobian(ds, &fit.beta, h, fit.tau)?;
                out.push(factor_jacobian(&jac, cfg)?);
            }
            out
        }
    };

    let results: Vec<Option<Array2<f64>>> = (0..replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(base_seed, StreamDomain::Weights, b as u64);
            let xi = draw_weights(scheme, n, &mut rng);
            let mut rep_draws = Array2::<f64>::zeros((n_grid, k));
            let mut weighted = Array1::<f64>::zeros(n);
            for j in 0..n_grid {
                for i in 0..n {
                    weighted[i] = xi[i] * psi[[j, i]];
                }
                let mut g = ds.x().t().dot(&weighted);
                g.mapv_inplace(|v| v / n as f64);
                let step = factorizations[j].solve(&g.view());
                let base = &proc.fits()[j].beta;
                let draw = match sign {
                    ScoreSign::Plus => base + &step,
                    ScoreSign::Minus => base - &step,
                };
                rep_draws.row_mut(j).assign(&draw);
            }
            Some(rep_draws)
        })
        .collect();

    collect_draws(proc.grid(), k, results, cfg.max_failure_rate, base_seed)
}

fn factor_jacobian(jac: &crate::onestep::JacobianEstimate, cfg: &BootstrapConfig) -> Result<Cholesky> {
    let usable = if jac.is_singular() {
        match cfg.onestep.ridge {
            Some(lambda) => jac.regularized(lambda),
            None => {
                return Err(Error::SingularJacobian {
                    tau: jac.tau,
                    min_eigenvalue: jac.min_eigenvalue,
                    threshold: jac.singular_threshold(),
                })
            }
        }
    } else {
        jac.clone()
    };
    Cholesky::factor(&usable.j_hat.view(), "multiplier bootstrap Jacobian")
}

fn check_process_alignment(ds: &Dataset, proc: &CoefProcess) -> Result<()> {
    if proc.k() != ds.k() {
        return Err(Error::DimensionMismatch {
            context: "process coefficients vs design columns",
            expected: ds.k(),
            got: proc.k(),
        });
    }
    Ok(())
}

fn check_failure_rate(rate: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!(
            "max failure rate must lie in [0, 1], got {rate}"
        )));
    }
    Ok(())
}
