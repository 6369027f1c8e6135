//! Shared generators for the unit-test suites.

use crate::data::Dataset;
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

/// Random instance with an intercept, continuous covariates, and
/// heteroskedastic noise.
pub(crate) fn random_instance(n: usize, k: usize, seed: u64) -> Dataset {
    let mut rng = crate::rng::base_rng(seed);
    let mut x = Array2::<f64>::zeros((n, k));
    let mut y = Array1::<f64>::zeros(n);
    for i in 0..n {
        x[[i, 0]] = 1.0;
        for j in 1..k {
            x[[i, j]] = rng.sample::<f64, _>(StandardNormal);
        }
        let noise: f64 = rng.sample(StandardNormal);
        let scale = 0.5 + 0.2 * x[[i, k.min(2) - 1]].abs();
        y[i] = x.row(i).sum() * 0.3 + scale * noise;
    }
    let names = (0..k).map(|j| format!("x{j}")).collect();
    Dataset::new(y, x, names).unwrap()
}
