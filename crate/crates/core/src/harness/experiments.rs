//! End-to-end synthetic studies.

use std::collections::BTreeSet;
use std::time::Instant;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};

use crate::diag::{diag_summary, solve_diag, DiagMethod, DiagonalS, Log10Histogram, UNDISCOVERABLE};
use crate::error::{Error, Result};
use crate::gaussian::{build_conditional, empirical_moments, sample_knockoffs};
use crate::harness::config::{ExperimentConfig, ExperimentKind};
use crate::harness::data::{draw_nonnulls, gen_random_correlation, gen_response, sample_gaussian, ResponseKind};
use crate::importance::{fit_importance, ModelKind};
use crate::linalg::{CorrelationMatrix, GaussianModel, Matrix};
use crate::rng::{derive_seed, label};
use crate::selection::{compute_kappa_tau, detection_threshold, multiknockoff_select};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Metadata {
    pub experiment: ExperimentKind,
    pub version: String,
    pub wall_time_secs: f64,
    pub config: ExperimentConfig,
}

impl Metadata {
    fn new(config: &ExperimentConfig, started: Instant) -> Self {
        Self {
            experiment: config.experiment,
            version: version_string(),
            wall_time_secs: started.elapsed().as_secs_f64(),
            config: config.clone(),
        }
    }
}

pub fn version_string() -> String {
    format!("multiknockoff {}", env!("CARGO_PKG_VERSION"))
}

/// Per-replicate records plus aggregates recomputable from them.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentReport<R, A> {
    pub metadata: Metadata,
    pub records: Vec<R>,
    pub aggregates: A,
}

impl<R, A> ExperimentReport<R, A> {
    pub fn failures(&self) -> usize
    where
        R: HasError,
    {
        self.records.iter().filter(|r| r.error().is_some()).count()
    }
}

pub trait HasError {
    fn error(&self) -> Option<&str>;
}

fn model_for(response: ResponseKind) -> ModelKind {
    match response {
        ResponseKind::Logistic => ModelKind::LogisticLasso,
        ResponseKind::Linear => ModelKind::LinearLasso,
    }
}

/// Reads the `null` that serde_json writes for NaN back as NaN.
fn nan_or_f64<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

/// Mean and standard error (sample standard deviation over √n).
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// `|Ŝ ∩ H₀| / max(|Ŝ|, 1)`.
pub fn false_discovery_proportion(selected: &[usize], truth: &[usize]) -> f64 {
    let truth: BTreeSet<usize> = truth.iter().copied().collect();
    let false_hits = selected.iter().filter(|i| !truth.contains(i)).count();
    false_hits as f64 / selected.len().max(1) as f64
}

/// `|Ŝ ∩ H| / |H|`, zero when `H` is empty.
pub fn power(selected: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let sel: BTreeSet<usize> = selected.iter().copied().collect();
    truth.iter().filter(|i| sel.contains(i)).count() as f64 / truth.len() as f64
}

/// Indices of the `k` largest |corr(x_j, y)|, in decreasing order.
pub fn run_top_correlation_baseline(x: &Matrix, y: &[f64], k: usize) -> Vec<usize> {
    let n = x.nrows() as f64;
    let ym = y.iter().sum::<f64>() / n;
    let yss: f64 = y.iter().map(|v| (v - ym) * (v - ym)).sum();
    let mut scored: Vec<(f64, usize)> = x
        .column_iter()
        .enumerate()
        .map(|(j, col)| {
            let xm = col.iter().sum::<f64>() / n;
            let xss: f64 = col.iter().map(|v| (v - xm) * (v - xm)).sum();
            let cross: f64 = col.iter().zip(y).map(|(a, b)| (a - xm) * (b - ym)).sum();
            let denom = (xss * yss).sqrt();
            (if denom > 0.0 { (cross / denom).abs() } else { 0.0 }, j)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.into_iter().take(k.min(x.ncols())).map(|(_, j)| j).collect()
}

// ---------------------------------------------------------------- power / FDR

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerRecord {
    pub rep: usize,
    pub kappa: usize,
    pub n_nonnull: usize,
    pub selected: Vec<usize>,
    #[serde(deserialize_with = "nan_or_f64")]
    pub fdp: f64,
    #[serde(deserialize_with = "nan_or_f64")]
    pub power: f64,
    #[serde(deserialize_with = "nan_or_f64")]
    pub lambda: f64,
    pub baseline_fdp: Option<f64>,
    pub error: Option<String>,
}

impl HasError for PowerRecord {
    fn error(&self) -> Option<&str> {
        self.error.as_deref()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerCell {
    pub kappa: usize,
    pub n_nonnull: usize,
    pub detection_threshold: usize,
    pub reps: usize,
    pub failures: usize,
    #[serde(deserialize_with = "nan_or_f64")]
    pub fdr: f64,
    #[serde(deserialize_with = "nan_or_f64")]
    pub fdr_se: f64,
    #[serde(deserialize_with = "nan_or_f64")]
    pub power: f64,
    #[serde(deserialize_with = "nan_or_f64")]
    pub power_se: f64,
    pub baseline_fdr: Option<f64>,
}

impl PowerCell {
    /// Empirical FDR ≤ q + 2·SE.
    pub fn controls_fdr(&self, q: f64) -> bool {
        self.fdr <= q + 2.0 * self.fdr_se
    }
}

pub fn aggregate_power(records: &[PowerRecord], q: f64) -> Vec<PowerCell> {
    let keys: BTreeSet<(usize, usize)> = records.iter().map(|r| (r.kappa, r.n_nonnull)).collect();
    keys.into_iter()
        .map(|(kappa, n_nonnull)| {
            let cell: Vec<&PowerRecord> = records
                .iter()
                .filter(|r| r.kappa == kappa && r.n_nonnull == n_nonnull)
                .collect();
            let ok: Vec<&&PowerRecord> = cell.iter().filter(|r| r.error.is_none()).collect();
            let fdps: Vec<f64> = ok.iter().map(|r| r.fdp).collect();
            let powers: Vec<f64> = ok.iter().map(|r| r.power).collect();
            let baseline: Vec<f64> = ok.iter().filter_map(|r| r.baseline_fdp).collect();
            let (fdr, fdr_se) = mean_se(&fdps);
            let (power, power_se) = mean_se(&powers);
            PowerCell {
                kappa,
                n_nonnull,
                detection_threshold: detection_threshold(q, kappa),
                reps: ok.len(),
                failures: cell.len() - ok.len(),
                fdr,
                fdr_se,
                power,
                power_se,
                baseline_fdr: (!baseline.is_empty()).then(|| mean_se(&baseline).0),
            }
        })
        .collect()
}

pub type PowerReport = ExperimentReport<PowerRecord, Vec<PowerCell>>;

struct Replicate {
    sigma: CorrelationMatrix,
    x0: Matrix,
}

fn replicate_features(cfg: &ExperimentConfig, rep_seed: u64) -> Result<Replicate> {
    let sigma = gen_random_correlation(cfg.d, derive_seed(rep_seed, label::COVARIANCE))?;
    let x0 = sample_gaussian(&sigma, cfg.n, derive_seed(rep_seed, label::FEATURES));
    Ok(Replicate { sigma, x0 })
}

/// Knockoffs, scores and selection for one `(X⁰, y)` pair.
struct Pipeline<'a> {
    cfg: &'a ExperimentConfig,
    model: GaussianModel,
    x0: &'a Matrix,
}

impl Pipeline<'_> {
    fn diag(&self, kappa: usize) -> Result<DiagonalS> {
        solve_diag(self.model.covariance(), kappa, self.cfg.method)
    }

    fn select(&self, diag: &DiagonalS, y: &[f64], seed: u64) -> Result<(Vec<usize>, f64)> {
        let kappa = diag.kappa;
        let law = build_conditional(&self.model, &diag.s, kappa)?;
        let sample = sample_knockoffs(&law, self.x0, derive_seed(seed, label::KNOCKOFFS))?;
        let scores = fit_importance(&sample, y, model_for(self.cfg.response), &self.cfg.lambda, derive_seed(seed, label::SCORES))?;
        let (kappa_i, tau_i) = compute_kappa_tau(&scores, seed, self.cfg.tie_mode);
        let result = multiknockoff_select(&kappa_i, &tau_i, self.cfg.q, kappa)?;
        Ok((result.selected, scores.lambda_used))
    }
}

fn failed_record(rep: usize, kappa: usize, n_nonnull: usize, e: &Error) -> PowerRecord {
    warn!("replicate {rep}, kappa {kappa}, {n_nonnull} non-nulls failed: {e}");
    PowerRecord {
        rep,
        kappa,
        n_nonnull,
        selected: Vec::new(),
        fdp: f64::NAN,
        power: f64::NAN,
        lambda: f64::NAN,
        baseline_fdp: None,
        error: Some(e.to_string()),
    }
}

fn power_replicate(cfg: &ExperimentConfig, rep: usize) -> Vec<PowerRecord> {
    let rep_seed = derive_seed(cfg.seed, rep as u64);
    let features = match replicate_features(cfg, rep_seed) {
        Ok(f) => f,
        Err(e) => {
            return cfg
                .kappa_list
                .iter()
                .flat_map(|&k| cfg.n_nonnull.iter().map(move |&m| (k, m)))
                .map(|(k, m)| failed_record(rep, k, m, &e))
                .collect()
        }
    };
    let pipeline = Pipeline {
        cfg,
        model: GaussianModel::centered(features.sigma.clone()),
        x0: &features.x0,
    };
    let mut out = Vec::new();
    for &kappa in &cfg.kappa_list {
        let diag = pipeline.diag(kappa);
        for (idx, &m) in cfg.n_nonnull.iter().enumerate() {
            let cell_seed = derive_seed(rep_seed, (idx as u64) << 8 | kappa as u64);
            let outcome = diag.as_ref().map_err(clone_error).and_then(|diag| {
                let nonnull = draw_nonnulls(cfg.d, m, derive_seed(rep_seed, label::NONNULLS ^ (idx as u64) << 16));
                let (y, truth) = gen_response(&features.x0, &nonnull, cfg.signal, cfg.response, derive_seed(rep_seed, label::RESPONSE ^ (idx as u64) << 16))?;
                let (selected, lambda) = pipeline.select(diag, &y, cell_seed)?;
                let baseline_fdp = cfg.baseline.then(|| {
                    let top = run_top_correlation_baseline(&features.x0, &y, selected.len());
                    false_discovery_proportion(&top, &truth)
                });
                Ok(PowerRecord {
                    rep,
                    kappa,
                    n_nonnull: m,
                    fdp: false_discovery_proportion(&selected, &truth),
                    power: power(&selected, &truth),
                    selected,
                    lambda,
                    baseline_fdp,
                    error: None,
                })
            });
            out.push(outcome.unwrap_or_else(|e| failed_record(rep, kappa, m, &e)));
        }
    }
    out
}

fn clone_error(e: &Error) -> Error {
    match e {
        Error::Convergence { solver, iterations, last_iterate } => Error::Convergence {
            solver,
            iterations: *iterations,
            last_iterate: last_iterate.clone(),
        },
        other => Error::Domain(other.to_string()),
    }
}

/// Fresh Σ, X and y per replicate; one knockoff draw per κ.
pub fn run_power_fdr(cfg: &ExperimentConfig) -> Result<PowerReport> {
    cfg.validate()?;
    let started = Instant::now();
    let records: Vec<PowerRecord> = (0..cfg.n_reps)
        .into_par_iter()
        .flat_map_iter(|rep| power_replicate(cfg, rep))
        .collect();
    let aggregates = aggregate_power(&records, cfg.q);
    Ok(ExperimentReport { metadata: Metadata::new(cfg, started), records, aggregates })
}

// ---------------------------------------------------------------- stability

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityRecord {
    pub kappa: usize,
    pub rep: usize,
    pub selected: Vec<usize>,
    pub error: Option<String>,
}

impl HasError for StabilityRecord {
    fn error(&self) -> Option<&str> {
        self.error.as_deref()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilitySummary {
    pub kappa: usize,
    pub draws: usize,
    pub nonnull: Vec<usize>,
    /// Selection frequency of each non-null, aligned with `nonnull`.
    pub nonnull_frequencies: Vec<f64>,
    /// Counts of non-null frequencies in ten equal bins over [0, 1].
    pub histogram: Vec<usize>,
    #[serde(deserialize_with = "nan_or_f64")]
    pub mean_null_frequency: f64,
}

impl StabilitySummary {
    pub fn share_at_least(&self, f: f64) -> f64 {
        if self.nonnull.is_empty() {
            return 0.0;
        }
        self.nonnull_frequencies.iter().filter(|v| **v >= f).count() as f64 / self.nonnull.len() as f64
    }
}

pub type StabilityReport = ExperimentReport<StabilityRecord, Vec<StabilitySummary>>;

pub fn aggregate_stability(records: &[StabilityRecord], d: usize, truth: &[usize]) -> Vec<StabilitySummary> {
    let kappas: BTreeSet<usize> = records.iter().map(|r| r.kappa).collect();
    kappas
        .into_iter()
        .map(|kappa| {
            let ok: Vec<&StabilityRecord> = records.iter().filter(|r| r.kappa == kappa && r.error.is_none()).collect();
            let draws = ok.len();
            let mut counts = vec![0usize; d];
            for r in &ok {
                for &i in &r.selected {
                    counts[i] += 1;
                }
            }
            let freq = |i: usize| if draws == 0 { 0.0 } else { counts[i] as f64 / draws as f64 };
            let nonnull_frequencies: Vec<f64> = truth.iter().map(|&i| freq(i)).collect();
            let mut histogram = vec![0usize; 10];
            for f in &nonnull_frequencies {
                histogram[((f * 10.0) as usize).min(9)] += 1;
            }
            let nulls: Vec<f64> = (0..d).filter(|i| !truth.contains(i)).map(freq).collect();
            StabilitySummary {
                kappa,
                draws,
                nonnull: truth.to_vec(),
                nonnull_frequencies,
                histogram,
                mean_null_frequency: mean_se(&nulls).0,
            }
        })
        .collect()
}

/// One fixed `(Σ, X, y)`; knockoffs redrawn `n_reps` times per κ.
pub fn run_stability(cfg: &ExperimentConfig) -> Result<StabilityReport> {
    cfg.validate()?;
    let started = Instant::now();
    let features = replicate_features(cfg, cfg.seed)?;
    let nonnull = draw_nonnulls(cfg.d, cfg.n_nonnull[0], derive_seed(cfg.seed, label::NONNULLS));
    let (y, truth) = gen_response(&features.x0, &nonnull, cfg.signal, cfg.response, derive_seed(cfg.seed, label::RESPONSE))?;
    let pipeline = Pipeline {
        cfg,
        model: GaussianModel::centered(features.sigma.clone()),
        x0: &features.x0,
    };
    let mut records = Vec::new();
    for &kappa in &cfg.kappa_list {
        let diag = pipeline.diag(kappa)?;
        let batch: Vec<StabilityRecord> = (0..cfg.n_reps)
            .into_par_iter()
            .map(|rep| {
                let seed = derive_seed(cfg.seed, (kappa as u64) << 32 | rep as u64);
                match pipeline.select(&diag, &y, seed) {
                    Ok((selected, _)) => StabilityRecord { kappa, rep, selected, error: None },
                    Err(e) => {
                        warn!("stability draw {rep} (kappa {kappa}) failed: {e}");
                        StabilityRecord { kappa, rep, selected: Vec::new(), error: Some(e.to_string()) }
                    }
                }
            })
            .collect();
        records.extend(batch);
    }
    let aggregates = aggregate_stability(&records, cfg.d, &truth);
    Ok(ExperimentReport { metadata: Metadata::new(cfg, started), records, aggregates })
}

// ---------------------------------------------------------------- diagonal density

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagDrawRecord {
    pub d: usize,
    pub draw: usize,
    pub method: DiagMethod,
    #[serde(deserialize_with = "nan_or_f64")]
    pub min: f64,
    #[serde(deserialize_with = "nan_or_f64")]
    pub max: f64,
    #[serde(deserialize_with = "nan_or_f64")]
    pub geometric_mean: f64,
    pub undiscoverable: usize,
    pub log10_s: Vec<f64>,
    pub error: Option<String>,
}

impl HasError for DiagDrawRecord {
    fn error(&self) -> Option<&str> {
        self.error.as_deref()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagDensitySummary {
    pub d: usize,
    pub method: DiagMethod,
    pub draws: usize,
    pub failures: usize,
    /// Share of draws with at least one entry below 1e-10.
    pub share_with_undiscoverable: f64,
    #[serde(deserialize_with = "nan_or_f64")]
    pub mean_log10_min: f64,
    #[serde(deserialize_with = "nan_or_f64")]
    pub median_log10_s: f64,
    pub histogram: Log10Histogram,
}

pub type DiagDensityReport = ExperimentReport<DiagDrawRecord, Vec<DiagDensitySummary>>;

pub fn aggregate_diag_density(records: &[DiagDrawRecord]) -> Vec<DiagDensitySummary> {
    let keys: BTreeSet<(usize, &'static str)> = records.iter().map(|r| (r.d, r.method.name())).collect();
    keys.into_iter()
        .map(|(d, name)| {
            let cell: Vec<&DiagDrawRecord> = records.iter().filter(|r| r.d == d && r.method.name() == name).collect();
            let ok: Vec<&&DiagDrawRecord> = cell.iter().filter(|r| r.error.is_none()).collect();
            let mut histogram = Log10Histogram::empty();
            let mut all_logs = Vec::new();
            for r in &ok {
                let values: Vec<f64> = r.log10_s.iter().map(|l| 10f64.powf(*l)).collect();
                histogram.extend(&values);
                all_logs.extend(r.log10_s.iter().copied());
            }
            all_logs.sort_by(f64::total_cmp);
            let median = if all_logs.is_empty() { f64::NAN } else { all_logs[all_logs.len() / 2] };
            let with = ok.iter().filter(|r| r.undiscoverable > 0).count();
            let mins: Vec<f64> = ok.iter().map(|r| r.min.max(1e-300).log10()).collect();
            DiagDensitySummary {
                d,
                method: cell[0].method,
                draws: ok.len(),
                failures: cell.len() - ok.len(),
                share_with_undiscoverable: with as f64 / ok.len().max(1) as f64,
                mean_log10_min: mean_se(&mins).0,
                median_log10_s: median,
                histogram,
            }
        })
        .collect()
}

fn diag_record(d: usize, draw: usize, method: DiagMethod, outcome: Result<DiagonalS>) -> DiagDrawRecord {
    match outcome {
        Ok(diag) => {
            let summary = diag_summary(&diag);
            DiagDrawRecord {
                d,
                draw,
                method,
                min: summary.min,
                max: summary.max,
                geometric_mean: summary.geometric_mean,
                undiscoverable: summary.undiscoverable,
                log10_s: diag.s.iter().map(|v| v.max(1e-300).log10()).collect(),
                error: None,
            }
        }
        Err(e) => {
            warn!("diag draw {draw} (d = {d}, {method}) failed: {e}");
            DiagDrawRecord {
                d,
                draw,
                method,
                min: f64::NAN,
                max: f64::NAN,
                geometric_mean: f64::NAN,
                undiscoverable: 0,
                log10_s: Vec::new(),
                error: Some(e.to_string()),
            }
        }
    }
}

/// `n_draws` random correlation matrices per dimension, all three methods.
pub fn diag_density_records(d_list: &[usize], n_draws: usize, kappa: usize, seed: u64) -> Vec<DiagDrawRecord> {
    let jobs: Vec<(usize, usize)> = d_list.iter().flat_map(|&d| (0..n_draws).map(move |r| (d, r))).collect();
    jobs.into_par_iter()
        .flat_map_iter(|(d, draw)| {
            let sigma = gen_random_correlation(d, derive_seed(derive_seed(seed, d as u64), draw as u64));
            DiagMethod::ALL.into_iter().map(move |method| {
                let outcome = sigma.as_ref().map_err(clone_error).and_then(|s| solve_diag(s, kappa, method));
                diag_record(d, draw, method, outcome)
            }).collect::<Vec<_>>()
        })
        .collect()
}

pub fn run_diag_density(cfg: &ExperimentConfig) -> Result<DiagDensityReport> {
    cfg.validate()?;
    let started = Instant::now();
    let records = diag_density_records(&cfg.d_list, cfg.n_reps, cfg.kappa_list[0], cfg.seed);
    let aggregates = aggregate_diag_density(&records);
    Ok(ExperimentReport { metadata: Metadata::new(cfg, started), records, aggregates })
}

// ---------------------------------------------------------------- Jaccard

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JaccardRecord {
    pub n: usize,
    pub repeat: usize,
    /// Undiscoverable set of each batch.
    pub sets: Vec<Vec<usize>>,
    #[serde(deserialize_with = "nan_or_f64")]
    pub mean_jaccard: f64,
    pub error: Option<String>,
}

impl HasError for JaccardRecord {
    fn error(&self) -> Option<&str> {
        self.error.as_deref()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JaccardSummary {
    pub n: usize,
    pub repeats: usize,
    pub failures: usize,
    #[serde(deserialize_with = "nan_or_f64")]
    pub mean_jaccard: f64,
    #[serde(deserialize_with = "nan_or_f64")]
    pub se: f64,
    #[serde(deserialize_with = "nan_or_f64")]
    pub mean_set_size: f64,
}

pub type JaccardReport = ExperimentReport<JaccardRecord, Vec<JaccardSummary>>;

/// `|A ∩ B| / |A ∪ B|`, one for two empty sets.
pub fn jaccard(a: &[usize], b: &[usize]) -> f64 {
    let a: BTreeSet<_> = a.iter().collect();
    let b: BTreeSet<_> = b.iter().collect();
    let union = a.union(&b).count();
    if union == 0 {
        1.0
    } else {
        a.intersection(&b).count() as f64 / union as f64
    }
}

pub fn mean_pairwise_jaccard(sets: &[Vec<usize>]) -> f64 {
    let mut values = Vec::new();
    for i in 0..sets.len() {
        for j in (i + 1)..sets.len() {
            values.push(jaccard(&sets[i], &sets[j]));
        }
    }
    mean_se(&values).0
}

pub fn undiscoverable_set(s: &[f64]) -> Vec<usize> {
    (0..s.len()).filter(|&i| s[i] < UNDISCOVERABLE).collect()
}

/// Empirical correlation matrix of the rows of `x`.
pub fn empirical_correlation(x: &Matrix) -> Result<CorrelationMatrix> {
    CorrelationMatrix::from_covariance(&empirical_moments(x).1)
}

pub fn aggregate_jaccard(records: &[JaccardRecord]) -> Vec<JaccardSummary> {
    let sizes: BTreeSet<usize> = records.iter().map(|r| r.n).collect();
    sizes
        .into_iter()
        .map(|n| {
            let cell: Vec<&JaccardRecord> = records.iter().filter(|r| r.n == n).collect();
            let ok: Vec<&&JaccardRecord> = cell.iter().filter(|r| r.error.is_none()).collect();
            let (mean_jaccard, se) = mean_se(&ok.iter().map(|r| r.mean_jaccard).collect::<Vec<_>>());
            let sizes: Vec<f64> = ok.iter().flat_map(|r| r.sets.iter().map(|s| s.len() as f64)).collect();
            JaccardSummary {
                n,
                repeats: ok.len(),
                failures: cell.len() - ok.len(),
                mean_jaccard,
                se,
                mean_set_size: mean_se(&sizes).0,
            }
        })
        .collect()
}

/// One Σ; for each batch size, `n_reps` repeats of `batches` independent
/// batches, each giving an undiscoverable set from the estimated Σ.
pub fn run_jaccard(cfg: &ExperimentConfig) -> Result<JaccardReport> {
    cfg.validate()?;
    let started = Instant::now();
    let kappa = cfg.kappa_list[0];
    let sigma = gen_random_correlation(cfg.d, derive_seed(cfg.seed, label::COVARIANCE))?;
    let jobs: Vec<(usize, usize)> = cfg
        .sample_sizes
        .iter()
        .flat_map(|&n| (0..cfg.n_reps).map(move |r| (n, r)))
        .collect();
    let records: Vec<JaccardRecord> = jobs
        .into_par_iter()
        .map(|(n, repeat)| {
            let outcome: Result<Vec<Vec<usize>>> = (0..cfg.batches)
                .map(|b| {
                    let seed = derive_seed(cfg.seed, label::BATCH ^ ((n as u64) << 40 | (repeat as u64) << 16 | b as u64));
                    let estimate = if cfg.exact_covariance {
                        sigma.clone()
                    } else {
                        empirical_correlation(&sample_gaussian(&sigma, n, seed))?
                    };
                    Ok(undiscoverable_set(&solve_diag(&estimate, kappa, cfg.method)?.s))
                })
                .collect();
            match outcome {
                Ok(sets) => JaccardRecord { n, repeat, mean_jaccard: mean_pairwise_jaccard(&sets), sets, error: None },
                Err(e) => {
                    warn!("jaccard repeat {repeat} at n = {n} failed: {e}");
                    JaccardRecord { n, repeat, sets: Vec::new(), mean_jaccard: f64::NAN, error: Some(e.to_string()) }
                }
            }
        })
        .collect();
    let aggregates = aggregate_jaccard(&records);
    Ok(ExperimentReport { metadata: Metadata::new(cfg, started), records, aggregates })
}

// ---------------------------------------------------------------- block design

/// `[[1, a, 0], [a, 1, a], [0, a, 1]]`; positive definite iff `a < 1/√2`.
pub fn block_matrix(a: f64) -> Result<CorrelationMatrix> {
    if !(0.0..std::f64::consts::FRAC_1_SQRT_2).contains(&a) {
        return Err(Error::Infeasible(format!(
            "block parameter a = {a} must lie in [0, 1/sqrt(2))"
        )));
    }
    CorrelationMatrix::new(Matrix::from_row_slice(3, 3, &[1.0, a, 0.0, a, 1.0, a, 0.0, a, 1.0]))
}

pub fn block_diagonal(a: f64, n_blocks: usize) -> Result<CorrelationMatrix> {
    let block = block_matrix(a)?;
    let mut m = Matrix::zeros(3 * n_blocks, 3 * n_blocks);
    for b in 0..n_blocks {
        m.view_mut((3 * b, 3 * b), (3, 3)).copy_from(block.matrix());
    }
    CorrelationMatrix::new(m)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockCurvePoint {
    pub a: f64,
    pub sdp_s1: f64,
    pub sdp_s2: f64,
    pub entropy_s1: f64,
    pub entropy_s2: f64,
}

pub fn block_curve(a_grid: &[f64], kappa: usize) -> Result<Vec<BlockCurvePoint>> {
    a_grid
        .iter()
        .map(|&a| {
            let sigma = block_matrix(a)?;
            let sdp = solve_diag(&sigma, kappa, DiagMethod::Sdp)?;
            let ent = solve_diag(&sigma, kappa, DiagMethod::Entropy)?;
            Ok(BlockCurvePoint { a, sdp_s1: sdp.s[0], sdp_s2: sdp.s[1], entropy_s1: ent.s[0], entropy_s2: ent.s[1] })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockPowerRecord {
    pub rep: usize,
    pub method: DiagMethod,
    pub selected: Vec<usize>,
    #[serde(deserialize_with = "nan_or_f64")]
    pub fdp: f64,
    #[serde(deserialize_with = "nan_or_f64")]
    pub power: f64,
    pub error: Option<String>,
}

impl HasError for BlockPowerRecord {
    fn error(&self) -> Option<&str> {
        self.error.as_deref()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockDesignSummary {
    pub a: f64,
    pub curve: Vec<BlockCurvePoint>,
    pub s_sdp: Vec<f64>,
    pub s_entropy: Vec<f64>,
    #[serde(deserialize_with = "nan_or_f64")]
    pub sdp_power: f64,
    #[serde(deserialize_with = "nan_or_f64")]
    pub entropy_power: f64,
    #[serde(deserialize_with = "nan_or_f64")]
    pub sdp_fdr: f64,
    #[serde(deserialize_with = "nan_or_f64")]
    pub entropy_fdr: f64,
}

pub type BlockDesignReport = ExperimentReport<BlockPowerRecord, BlockDesignSummary>;

/// Middle coordinate of every block: `{3i + 1}` (0-based).
pub fn block_nonnulls(n_blocks: usize) -> Vec<usize> {
    (0..n_blocks).map(|i| 3 * i + 1).collect()
}

pub fn run_block_design(cfg: &ExperimentConfig) -> Result<BlockDesignReport> {
    cfg.validate()?;
    let started = Instant::now();
    let kappa = cfg.kappa_list[0];
    let curve = block_curve(&cfg.a_grid, kappa)?;
    let block = block_matrix(cfg.block_a)?;
    let sigma = block_diagonal(cfg.block_a, cfg.n_blocks)?;
    let tile = |d: DiagonalS| d.s.repeat(cfg.n_blocks);
    let s_sdp = tile(solve_diag(&block, kappa, DiagMethod::Sdp)?);
    let s_entropy = tile(solve_diag(&block, kappa, DiagMethod::Entropy)?);
    let truth = block_nonnulls(cfg.n_blocks);
    let model = GaussianModel::centered(sigma.clone());
    let records: Vec<BlockPowerRecord> = (0..cfg.n_reps)
        .into_par_iter()
        .flat_map_iter(|rep| {
            let rep_seed = derive_seed(cfg.seed, rep as u64);
            let x0 = sample_gaussian(&sigma, cfg.n, derive_seed(rep_seed, label::FEATURES));
            let response = gen_response(&x0, &truth, cfg.signal, cfg.response, derive_seed(rep_seed, label::RESPONSE));
            [(DiagMethod::Sdp, &s_sdp), (DiagMethod::Entropy, &s_entropy)]
                .into_iter()
                .map(|(method, s)| {
                    let outcome = response.as_ref().map_err(clone_error).and_then(|(y, _)| {
                        let diag = DiagonalS { s: s.clone(), ..DiagonalS::zeros(s.len(), kappa, method) };
                        let pipeline = Pipeline { cfg, model: model.clone(), x0: &x0 };
                        pipeline.select(&diag, y, derive_seed(rep_seed, method as u64 + 1))
                    });
                    match outcome {
                        Ok((selected, _)) => BlockPowerRecord {
                            rep,
                            method,
                            fdp: false_discovery_proportion(&selected, &truth),
                            power: power(&selected, &truth),
                            selected,
                            error: None,
                        },
                        Err(e) => {
                            warn!("block design replicate {rep} ({method}) failed: {e}");
                            BlockPowerRecord { rep, method, selected: Vec::new(), fdp: f64::NAN, power: f64::NAN, error: Some(e.to_string()) }
                        }
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let mean_of = |method: DiagMethod, f: fn(&BlockPowerRecord) -> f64| {
        mean_se(
            &records
                .iter()
                .filter(|r| r.method == method && r.error.is_none())
                .map(f)
                .collect::<Vec<_>>(),
        )
        .0
    };
    let aggregates = BlockDesignSummary {
        a: cfg.block_a,
        curve,
        sdp_power: mean_of(DiagMethod::Sdp, |r| r.power),
        entropy_power: mean_of(DiagMethod::Entropy, |r| r.power),
        sdp_fdr: mean_of(DiagMethod::Sdp, |r| r.fdp),
        entropy_fdr: mean_of(DiagMethod::Entropy, |r| r.fdp),
        s_sdp,
        s_entropy,
    };
    Ok(ExperimentReport { metadata: Metadata::new(cfg, started), records, aggregates })
}
