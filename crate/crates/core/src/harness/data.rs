//! Synthetic data: random correlation matrices, Gaussian features and
//! responses with a planted non-null set.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CorrelationMatrix, Matrix};
use crate::rng::rng_from_seed;

/// `B Bᵀ + 0.05·d·I` with standard normal `B`, rescaled to unit diagonal.
pub fn gen_random_correlation(d: usize, seed: u64) -> Result<CorrelationMatrix> {
    if d < 2 {
        return Err(Error::Domain(format!("random correlation needs d >= 2, got {d}")));
    }
    let mut rng = rng_from_seed(seed);
    let b = Matrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
    let mut cov = &b * b.transpose();
    for i in 0..d {
        cov[(i, i)] += 0.05 * d as f64;
    }
    CorrelationMatrix::from_covariance(&cov)
}

/// `n` rows drawn from N(0, Σ); row-major `n × d`.
pub fn sample_gaussian(sigma: &CorrelationMatrix, n: usize, seed: u64) -> Matrix {
    let d = sigma.dim();
    let l = sigma.cholesky_factor();
    let mut rng = rng_from_seed(seed);
    let z = Matrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng));
    z * l.transpose()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseKind {
    Logistic,
    Linear,
}

/// `k` distinct indices out of `0..d`, uniformly.
pub fn draw_nonnulls(d: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng_from_seed(seed);
    let mut idx = sample_indices(&mut rng, d, k.min(d)).into_vec();
    idx.sort_unstable();
    idx
}

/// Response from `signal · Σ_{j∈H} ε_j x_j / √|H|` with random signs ε.
///
/// Logistic responses are Bernoulli(sigmoid(·)); linear responses add
/// standard normal noise.
pub fn gen_response(
    x0: &Matrix,
    nonnull: &[usize],
    signal: f64,
    kind: ResponseKind,
    seed: u64,
) -> Result<(Vec<f64>, Vec<usize>)> {
    if nonnull.is_empty() && signal != 0.0 {
        return Err(Error::Domain("nonzero signal needs a nonempty non-null set".into()));
    }
    if let Some(j) = nonnull.iter().find(|j| **j >= x0.ncols()) {
        return Err(Error::Dimension(format!("non-null index {j} out of range")));
    }
    let mut rng = rng_from_seed(seed);
    let signs: Vec<f64> = nonnull
        .iter()
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect();
    let scale = if nonnull.is_empty() { 0.0 } else { signal / (nonnull.len() as f64).sqrt() };
    let y = (0..x0.nrows())
        .map(|r| {
            let eta: f64 = nonnull
                .iter()
                .zip(&signs)
                .map(|(&j, e)| e * x0[(r, j)])
                .sum::<f64>()
                * scale;
            match kind {
                ResponseKind::Logistic => {
                    let p = 1.0 / (1.0 + (-eta).exp());
                    if rng.random::<f64>() < p {
                        1.0
                    } else {
                        0.0
                    }
                }
                ResponseKind::Linear => {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    eta + noise
                }
            }
        })
        .collect();
    let truth = if signal == 0.0 { Vec::new() } else { nonnull.to_vec() };
    Ok((y, truth))
}
