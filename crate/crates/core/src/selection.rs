//! Multi-knockoff selection: `(κ_i, τ_i)` statistics, the FDP estimate with
//! offset `1/κ`, and the single-knockoff W-statistic filter.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diag::DiagMethod;
use crate::error::{Error, Result};
use crate::gaussian::knockoffs_for;
use crate::harness::data::{draw_nonnulls, gen_random_correlation, gen_response, sample_gaussian, ResponseKind};
use crate::importance::{fit_importance, ImportanceScores, LambdaChoice, ModelKind};
use crate::linalg::{GaussianModel, Matrix};
use crate::rng::{derive_seed, label, rng_from_seed, substream};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TieMode {
    /// Uniform choice among tied maxima.
    #[default]
    Random,
    /// Smallest copy index among tied maxima.
    First,
}

impl FromStr for TieMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(TieMode::Random),
            "first" => Ok(TieMode::First),
            other => Err(Error::Config(format!("unknown tie mode '{other}'"))),
        }
    }
}

impl fmt::Display for TieMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TieMode::Random => "random",
            TieMode::First => "first",
        })
    }
}

/// `κ_i`: index of the largest entry of each row; `τ_i`: gap between the
/// largest and second-largest entries.
pub fn compute_kappa_tau(scores: &ImportanceScores, seed: u64, tie_mode: TieMode) -> (Vec<usize>, Vec<f64>) {
    kappa_tau_from_table(&scores.scores, seed, tie_mode)
}

pub fn kappa_tau_from_table(table: &Matrix, seed: u64, tie_mode: TieMode) -> (Vec<usize>, Vec<f64>) {
    let key = derive_seed(seed, label::TIES);
    let mut kappa_i = Vec::with_capacity(table.nrows());
    let mut tau_i = Vec::with_capacity(table.nrows());
    for (i, row) in table.row_iter().enumerate() {
        let top = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tied: Vec<usize> = (0..row.len()).filter(|&k| row[k] == top).collect();
        let second = if tied.len() > 1 {
            top
        } else {
            (0..row.len())
                .filter(|&k| k != tied[0])
                .map(|k| row[k])
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let pick = match tie_mode {
            TieMode::First => tied[0],
            TieMode::Random if tied.len() == 1 => tied[0],
            TieMode::Random => tied[substream(key, i as u64).random_range(0..tied.len())],
        };
        kappa_i.push(pick);
        tau_i.push(if second.is_finite() { top - second } else { 0.0 });
    }
    (kappa_i, tau_i)
}

mod threshold_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Finite(f64),
        Sentinel(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            Repr::Finite(*v).serialize(s)
        } else {
            Repr::Sentinel("infinity".into()).serialize(s)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Finite(v) => Ok(v),
            Repr::Sentinel(s) if s == "infinity" => Ok(f64::INFINITY),
            Repr::Sentinel(s) => Err(serde::de::Error::custom(format!("bad threshold '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub kappa_i: Vec<usize>,
    pub tau_i: Vec<f64>,
    /// `+∞` (serialised as `"infinity"`) when nothing qualifies.
    #[serde(with = "threshold_serde")]
    pub tau_hat: f64,
    /// 0-based indices, ascending.
    pub selected: Vec<usize>,
    /// `(t, FDP̂(t))` over the candidate thresholds, ascending in `t`.
    pub fdp_trace: Vec<(f64, f64)>,
    pub offset: f64,
    pub q: f64,
}

impl SelectionResult {
    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }
}

fn check_q(q: f64) -> Result<()> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Config(format!("q must lie in (0, 1), got {q}")));
    }
    Ok(())
}

/// Distinct positive values, ascending.
fn candidates(tau: &[f64]) -> Vec<f64> {
    let mut c: Vec<f64> = tau.iter().copied().filter(|t| *t > 0.0).collect();
    c.sort_by(f64::total_cmp);
    c.dedup();
    c
}

/// `(1/κ)(1 + #{κ_i ≥ 1, τ_i ≥ t}) / max(#{κ_i = 0, τ_i ≥ t}, 1)`.
pub fn fdp_estimate(kappa_i: &[usize], tau_i: &[f64], kappa: usize, t: f64) -> f64 {
    let mut losers = 0usize;
    let mut winners = 0usize;
    for (k, tau) in kappa_i.iter().zip(tau_i) {
        if *tau >= t {
            if *k == 0 {
                winners += 1;
            } else {
                losers += 1;
            }
        }
    }
    (1.0 + losers as f64) / (kappa as f64 * winners.max(1) as f64)
}

pub fn multiknockoff_select(kappa_i: &[usize], tau_i: &[f64], q: f64, kappa: usize) -> Result<SelectionResult> {
    check_q(q)?;
    if kappa == 0 {
        return Err(Error::Config("kappa must be at least 1".into()));
    }
    if kappa_i.len() != tau_i.len() {
        return Err(Error::Dimension("kappa_i and tau_i lengths differ".into()));
    }
    if let Some(k) = kappa_i.iter().find(|k| **k > kappa) {
        return Err(Error::Domain(format!("copy index {k} exceeds kappa = {kappa}")));
    }
    let fdp_trace: Vec<(f64, f64)> = candidates(tau_i)
        .into_iter()
        .map(|t| (t, fdp_estimate(kappa_i, tau_i, kappa, t)))
        .collect();
    let tau_hat = fdp_trace
        .iter()
        .find(|(_, f)| *f <= q)
        .map_or(f64::INFINITY, |(t, _)| *t);
    let selected = (0..kappa_i.len())
        .filter(|&i| kappa_i[i] == 0 && tau_i[i] >= tau_hat)
        .collect();
    Ok(SelectionResult {
        kappa_i: kappa_i.to_vec(),
        tau_i: tau_i.to_vec(),
        tau_hat,
        selected,
        fdp_trace,
        offset: 1.0 / kappa as f64,
        q,
    })
}

/// Scores → statistics → selection.
pub fn select_from_scores(scores: &ImportanceScores, q: f64, seed: u64, tie_mode: TieMode) -> Result<SelectionResult> {
    let (kappa_i, tau_i) = compute_kappa_tau(scores, seed, tie_mode);
    multiknockoff_select(&kappa_i, &tau_i, q, scores.kappa())
}

/// Knockoff filter on antisymmetric statistics `W`: the smallest
/// `t ∈ {|W_i| > 0}` with `(offset + #{W ≤ −t}) / max(#{W ≥ t}, 1) ≤ q`.
pub fn single_knockoff_select(w: &[f64], q: f64, offset: u8) -> Result<SelectionResult> {
    check_q(q)?;
    if offset > 1 {
        return Err(Error::Config(format!("offset must be 0 or 1, got {offset}")));
    }
    let off = offset as f64;
    let abs: Vec<f64> = w.iter().map(|v| v.abs()).collect();
    let fdp_trace: Vec<(f64, f64)> = candidates(&abs)
        .into_iter()
        .map(|t| {
            let neg = w.iter().filter(|v| **v <= -t).count() as f64;
            let pos = w.iter().filter(|v| **v >= t).count().max(1) as f64;
            (t, (off + neg) / pos)
        })
        .collect();
    let tau_hat = fdp_trace
        .iter()
        .find(|(_, f)| *f <= q)
        .map_or(f64::INFINITY, |(t, _)| *t);
    let selected = (0..w.len()).filter(|&i| w[i] >= tau_hat).collect();
    Ok(SelectionResult {
        kappa_i: w.iter().map(|v| usize::from(*v <= 0.0)).collect(),
        tau_i: abs,
        tau_hat,
        selected,
        fdp_trace,
        offset: off,
        q,
    })
}

/// `⌈1/(qκ)⌉`: smallest possible nonempty selection.
pub fn detection_threshold(q: f64, kappa: usize) -> usize {
    // guard against 1/(0.1·1) evaluating to 10.000000000000002
    let x = 1.0 / (q * kappa as f64);
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r as usize
    } else {
        x.ceil() as usize
    }
}

/// One-bit p-values: `1/(κ+1)` when the original wins, `1` otherwise.
pub fn one_bit_pvalues(kappa_i: &[usize], kappa: usize) -> Vec<f64> {
    kappa_i
        .iter()
        .map(|&k| if k == 0 { 1.0 / (kappa as f64 + 1.0) } else { 1.0 })
        .collect()
}

/// Pearson chi-square test of uniformity over `{0, …, κ}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformityTest {
    pub counts: Vec<u64>,
    pub expected: f64,
    /// `(observed − expected)² / expected` per copy index.
    pub contributions: Vec<f64>,
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

pub fn chi_square_uniformity(counts: &[u64]) -> UniformityTest {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    let contributions: Vec<f64> = counts
        .iter()
        .map(|&c| {
            let diff = c as f64 - expected;
            if expected > 0.0 {
                diff * diff / expected
            } else {
                0.0
            }
        })
        .collect();
    let statistic: f64 = contributions.iter().sum();
    let df = counts.len().saturating_sub(1).max(1);
    let p_value = ChiSquared::new(df as f64)
        .map(|dist| dist.sf(statistic))
        .unwrap_or(f64::NAN);
    UniformityTest { counts: counts.to_vec(), expected, contributions, statistic, df, p_value }
}

pub fn count_copies(kappa_i: &[usize], kappa: usize) -> Vec<u64> {
    let mut counts = vec![0u64; kappa + 1];
    for &k in kappa_i {
        counts[k] += 1;
    }
    counts
}

/// Source of the per-feature copy indices in a null-model audit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditScorer {
    /// Gaussian knockoffs, lasso scores and argmax.
    Pipeline,
    /// `κ_i` drawn uniformly, bypassing the pipeline.
    FairCoin,
    /// Pipeline with the original's score multiplied by `factor`.
    Upweighted { factor: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NullModelSpec {
    pub d: usize,
    pub n: usize,
    pub kappa: usize,
    pub method: DiagMethod,
    pub model: ModelKind,
    pub scorer: AuditScorer,
    pub tie_mode: TieMode,
}

impl Default for NullModelSpec {
    fn default() -> Self {
        Self {
            d: 30,
            n: 500,
            kappa: 2,
            method: DiagMethod::Entropy,
            model: ModelKind::LogisticLasso,
            scorer: AuditScorer::Pipeline,
            tie_mode: TieMode::Random,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditResult {
    pub n_reps: usize,
    pub test: UniformityTest,
    /// Share of one-bit p-values equal to `1/(κ+1)`; about `1/(κ+1)` under the null.
    pub small_pvalue_share: f64,
}

fn audit_replicate(spec: &NullModelSpec, seed: u64) -> Result<Vec<usize>> {
    if let AuditScorer::FairCoin = spec.scorer {
        let mut rng = rng_from_seed(seed);
        return Ok((0..spec.d).map(|_| rng.random_range(0..=spec.kappa)).collect());
    }
    let sigma = gen_random_correlation(spec.d, derive_seed(seed, label::COVARIANCE))?;
    let x0 = sample_gaussian(&sigma, spec.n, derive_seed(seed, label::FEATURES));
    let nonnull = draw_nonnulls(spec.d, 1, derive_seed(seed, label::NONNULLS));
    let response = match spec.model {
        ModelKind::LogisticLasso => ResponseKind::Logistic,
        ModelKind::LinearLasso => ResponseKind::Linear,
    };
    let (y, _) = gen_response(&x0, &nonnull, 0.0, response, derive_seed(seed, label::RESPONSE))?;
    let sample = knockoffs_for(&GaussianModel::centered(sigma), &x0, spec.kappa, spec.method, derive_seed(seed, label::KNOCKOFFS))?;
    let mut scores = fit_importance(&sample, &y, spec.model, &LambdaChoice::Default, derive_seed(seed, label::SCORES))?;
    if let AuditScorer::Upweighted { factor } = spec.scorer {
        scores.scores.column_mut(0).scale_mut(factor);
    }
    Ok(compute_kappa_tau(&scores, seed, spec.tie_mode).0)
}

/// Pools `κ_i` over replicates of a signal-free model and tests uniformity
/// over `{0, …, κ}`.
pub fn null_uniformity_audit(n_reps: usize, spec: &NullModelSpec, seed: u64) -> Result<AuditResult> {
    use rayon::prelude::*;
    if n_reps == 0 || spec.d == 0 || spec.kappa == 0 {
        return Err(Error::Config("audit needs positive n_reps, d and kappa".into()));
    }
    let per_rep: Vec<Vec<usize>> = (0..n_reps)
        .into_par_iter()
        .map(|rep| audit_replicate(spec, derive_seed(seed, rep as u64)))
        .collect::<Result<_>>()?;
    let pooled: Vec<usize> = per_rep.into_iter().flatten().collect();
    let pvalues = one_bit_pvalues(&pooled, spec.kappa);
    let small = 1.0 / (spec.kappa as f64 + 1.0);
    Ok(AuditResult {
        n_reps,
        test: chi_square_uniformity(&count_copies(&pooled, spec.kappa)),
        small_pvalue_share: pvalues.iter().filter(|p| **p == small).count() as f64 / pvalues.len() as f64,
    })
}
