//! Gaussian multi-knockoffs sampled from the conditional law of
//! `(X¹, …, X^κ)` given `X⁰`.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diag::{solve_diag, DiagMethod};
use crate::error::{Error, Result};
use crate::linalg::{
    assemble_joint_covariance, is_feasible, psd_factor, CorrelationMatrix, GaussianModel, Matrix,
    Vector,
};
use crate::rng::{derive_seed, label, rng_from_seed, substream};
use crate::swap::SwapFamily;

/// Law of the κ knockoff blocks given `X⁰ = x`:
/// mean `gain·x + offset` in every block, covariance `Σ̃`.
#[derive(Clone, Debug)]
pub struct ConditionalLaw {
    pub kappa: usize,
    pub diag: Vec<f64>,
    /// `I − D Σ⁻¹`
    pub gain: Matrix,
    /// `D Σ⁻¹ μ`
    pub offset: Vector,
    /// `F` with `F Fᵀ = Σ̃`, `(κd) × rank`.
    pub cond_cov_factor: Matrix,
    pub rank: usize,
}

impl ConditionalLaw {
    pub fn dim(&self) -> usize {
        self.gain.nrows()
    }

    /// `Σ̃ = F Fᵀ`.
    pub fn conditional_covariance(&self) -> Matrix {
        &self.cond_cov_factor * self.cond_cov_factor.transpose()
    }
}

/// `Σ̃` with `C = 2D − DΣ⁻¹D` on the diagonal blocks and `C − D` elsewhere.
pub fn conditional_covariance(sigma: &CorrelationMatrix, s: &[f64], kappa: usize) -> Matrix {
    let d = sigma.dim();
    let dm = Matrix::from_diagonal(&Vector::from_column_slice(s));
    let sinv_d = sigma.solve(&dm);
    let c = &dm * 2.0 - &dm * &sinv_d;
    let c = (&c + c.transpose()) * 0.5;
    let mut out = Matrix::zeros(kappa * d, kappa * d);
    for a in 0..kappa {
        for b in 0..kappa {
            let mut block = out.view_mut((a * d, b * d), (d, d));
            block.copy_from(&c);
            if a != b {
                for i in 0..d {
                    block[(i, i)] -= s[i];
                }
            }
        }
    }
    out
}

pub fn build_conditional(model: &GaussianModel, s: &[f64], kappa: usize) -> Result<ConditionalLaw> {
    let sigma = model.covariance();
    let d = sigma.dim();
    if !is_feasible(sigma, s, kappa)? {
        return Err(Error::Infeasible(format!(
            "diagonal is not feasible for kappa = {kappa}"
        )));
    }
    let dm = Matrix::from_diagonal(&Vector::from_column_slice(s));
    // Σ⁻¹D, transposed to DΣ⁻¹ (both factors symmetric).
    let d_sinv = sigma.solve(&dm).transpose();
    let gain = Matrix::identity(d, d) - &d_sinv;
    let offset = &d_sinv * model.mean();
    let tilde = conditional_covariance(sigma, s, kappa);
    let psd = psd_factor(&tilde)?;
    Ok(ConditionalLaw {
        kappa,
        diag: s.to_vec(),
        gain,
        offset,
        cond_cov_factor: psd.factor.columns(0, psd.rank).into_owned(),
        rank: psd.rank,
    })
}

/// `N × (κ+1)d` design with columns grouped as `[X⁰ | X¹ | … | X^κ]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiKnockoffSample {
    pub n: usize,
    pub d: usize,
    pub kappa: usize,
    pub data: Matrix,
}

impl MultiKnockoffSample {
    pub fn new(data: Matrix, d: usize, kappa: usize) -> Result<Self> {
        if d == 0 || data.ncols() != (kappa + 1) * d {
            return Err(Error::Dimension(format!(
                "design has {} columns, expected (kappa + 1) * d = {}",
                data.ncols(),
                (kappa + 1) * d
            )));
        }
        Ok(Self { n: data.nrows(), d, kappa, data })
    }

    pub fn column_index(&self, copy: usize, feature: usize) -> usize {
        copy * self.d + feature
    }

    pub fn copy(&self, k: usize) -> Matrix {
        self.data.columns(k * self.d, self.d).into_owned()
    }

    /// `[X⁰, …, X^κ]_{swap(σ)}`: slot `k` of dimension `i` takes `X^{σ_i(k)}_i`.
    pub fn swapped(&self, family: &SwapFamily) -> Result<Self> {
        check_family(family, self.d, self.kappa)?;
        let sources = family.column_sources();
        let data = Matrix::from_fn(self.n, self.data.ncols(), |r, c| self.data[(r, sources[c])]);
        Ok(Self { data, ..*self })
    }

    pub fn header(&self) -> Vec<String> {
        (0..=self.kappa)
            .flat_map(|k| (1..=self.d).map(move |i| format!("x{k}_{i}")))
            .collect()
    }
}

pub(crate) fn check_family(family: &SwapFamily, d: usize, kappa: usize) -> Result<()> {
    if family.dim() != d || family.kappa() != kappa {
        return Err(Error::Dimension(format!(
            "swap family is for d = {}, kappa = {}; data has d = {d}, kappa = {kappa}",
            family.dim(),
            family.kappa()
        )));
    }
    Ok(())
}

/// Draw κ knockoffs for every row of `x0`. Row `r` uses substream
/// `(seed, r)`, so the output does not depend on the thread count.
pub fn sample_knockoffs(law: &ConditionalLaw, x0: &Matrix, seed: u64) -> Result<MultiKnockoffSample> {
    let d = law.dim();
    if x0.ncols() != d {
        return Err(Error::Dimension(format!(
            "features have {} columns, law has dimension {d}",
            x0.ncols()
        )));
    }
    let kappa = law.kappa;
    let n = x0.nrows();
    let width = (kappa + 1) * d;
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(seed, r as u64);
            let x = x0.row(r).transpose();
            let mean = &law.gain * &x + &law.offset;
            let z = Vector::from_fn(law.rank, |_, _| StandardNormal.sample(&mut rng));
            let noise = &law.cond_cov_factor * z;
            let mut row = Vec::with_capacity(width);
            row.extend(x.iter());
            for k in 0..kappa {
                row.extend((0..d).map(|i| mean[i] + noise[k * d + i]));
            }
            row
        })
        .collect();
    let data = Matrix::from_fn(n, width, |r, c| rows[r][c]);
    MultiKnockoffSample::new(data, d, kappa)
}

/// Solve for the diagonal, build the conditional law and sample in one go.
pub fn knockoffs_for(
    model: &GaussianModel,
    x0: &Matrix,
    kappa: usize,
    method: DiagMethod,
    seed: u64,
) -> Result<MultiKnockoffSample> {
    let diag = solve_diag(model.covariance(), kappa, method)?;
    let law = build_conditional(model, &diag.s, kappa)?;
    sample_knockoffs(&law, x0, seed)
}

/// Column means and the (N−1)-normalised covariance.
pub fn empirical_moments(data: &Matrix) -> (Vector, Matrix) {
    let n = data.nrows();
    let mean = data.row_mean().transpose();
    let mut centered = data.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    let cov = centered.transpose() * &centered / (n.max(2) - 1) as f64;
    (mean, cov)
}

/// Moment-level exchangeability diagnostics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExchangeabilityReport {
    pub n_swaps: usize,
    /// max |cov(sample) − Σ_κ|
    pub baseline_cov_error: f64,
    /// max over swaps of max |mean(swapped) − mean(sample)|
    pub max_mean_gap: f64,
    /// max over swaps of max |cov(swapped) − cov(sample)|
    pub max_cov_gap: f64,
    /// max over swaps of max |cov(swapped) − Σ_κ|
    pub max_target_error: f64,
}

impl ExchangeabilityReport {
    pub fn worst(&self) -> f64 {
        self.baseline_cov_error
            .max(self.max_mean_gap)
            .max(self.max_cov_gap)
            .max(self.max_target_error)
    }
}

/// Compare moments of `n_swaps` random swaps of the sample with the
/// unswapped moments and with Σ_κ. Swapping only permutes columns, so the
/// swapped moments are read off the unswapped ones.
pub fn exchangeability_check(
    sample: &MultiKnockoffSample,
    sigma: &CorrelationMatrix,
    s: &[f64],
    n_swaps: usize,
    seed: u64,
) -> Result<ExchangeabilityReport> {
    let families: Vec<SwapFamily> = {
        let mut rng = rng_from_seed(derive_seed(seed, label::SWAPS));
        (0..n_swaps)
            .map(|_| SwapFamily::random(sample.d, sample.kappa, &mut rng))
            .collect()
    };
    exchangeability_check_with(sample, sigma, s, &families)
}

pub fn exchangeability_check_with(
    sample: &MultiKnockoffSample,
    sigma: &CorrelationMatrix,
    s: &[f64],
    families: &[SwapFamily],
) -> Result<ExchangeabilityReport> {
    let target = assemble_joint_covariance(sigma, s, sample.kappa)?.entries;
    let (mean, cov) = empirical_moments(&sample.data);
    let width = cov.nrows();
    let max_abs_diff = |f: &dyn Fn(usize, usize) -> f64| {
        (0..width)
            .flat_map(|a| (0..width).map(move |b| (a, b)))
            .map(|(a, b)| f(a, b).abs())
            .fold(0.0, f64::max)
    };
    let baseline_cov_error = max_abs_diff(&|a, b| cov[(a, b)] - target[(a, b)]);
    let mut report = ExchangeabilityReport {
        n_swaps: families.len(),
        baseline_cov_error,
        max_mean_gap: 0.0,
        max_cov_gap: 0.0,
        max_target_error: 0.0,
    };
    for family in families {
        check_family(family, sample.d, sample.kappa)?;
        let src = family.column_sources();
        let mean_gap = (0..width).map(|a| (mean[src[a]] - mean[a]).abs()).fold(0.0, f64::max);
        let cov_gap = max_abs_diff(&|a, b| cov[(src[a], src[b])] - cov[(a, b)]);
        let target_error = max_abs_diff(&|a, b| cov[(src[a], src[b])] - target[(a, b)]);
        report.max_mean_gap = report.max_mean_gap.max(mean_gap);
        report.max_cov_gap = report.max_cov_gap.max(cov_gap);
        report.max_target_error = report.max_target_error.max(target_error);
    }
    Ok(report)
}
