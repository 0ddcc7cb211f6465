use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize};

use crate::diag::DiagMethod;
use crate::error::{Error, Result};
use crate::harness::data::ResponseKind;
use crate::importance::LambdaChoice;
use crate::selection::TieMode;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    PowerFdr,
    Stability,
    DiagDensity,
    Jaccard,
    BlockDesign,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::PowerFdr => "power-fdr",
            ExperimentKind::Stability => "stability",
            ExperimentKind::DiagDensity => "diag-density",
            ExperimentKind::Jaccard => "jaccard",
            ExperimentKind::BlockDesign => "block-design",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.replace('_', "-").as_str() {
            "power-fdr" => Ok(ExperimentKind::PowerFdr),
            "stability" => Ok(ExperimentKind::Stability),
            "diag-density" => Ok(ExperimentKind::DiagDensity),
            "jaccard" => Ok(ExperimentKind::Jaccard),
            "block-design" => Ok(ExperimentKind::BlockDesign),
            other => Err(Error::Config(format!("unknown experiment '{other}'"))),
        }
    }
}

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<usize>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(usize),
        Many(Vec<usize>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(v) => vec![v],
        OneOrMany::Many(v) => v,
    })
}

/// Settings shared by all experiments; fields an experiment does not use
/// are ignored by it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub d: usize,
    pub n: usize,
    pub kappa_list: Vec<usize>,
    pub q: f64,
    #[serde(deserialize_with = "one_or_many")]
    pub n_nonnull: Vec<usize>,
    pub signal: f64,
    pub n_reps: usize,
    pub method: DiagMethod,
    pub seed: u64,
    pub response: ResponseKind,
    pub lambda: LambdaChoice,
    pub tie_mode: TieMode,
    /// Also run the top-correlation baseline in power/FDR runs.
    pub baseline: bool,
    /// Dimensions for the diagonal-density study.
    pub d_list: Vec<usize>,
    /// Batch sizes for the Jaccard study.
    pub sample_sizes: Vec<usize>,
    /// Batches per repeat in the Jaccard study.
    pub batches: usize,
    /// Use the true Σ instead of the batch estimate (Jaccard sanity limit).
    pub exact_covariance: bool,
    pub a_grid: Vec<f64>,
    pub block_a: f64,
    pub n_blocks: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentKind::PowerFdr,
            d: 100,
            n: 1000,
            kappa_list: vec![1, 2, 3],
            q: 0.1,
            n_nonnull: vec![5],
            signal: 5.0,
            n_reps: 50,
            method: DiagMethod::Entropy,
            seed: 0,
            response: ResponseKind::Logistic,
            lambda: LambdaChoice::Default,
            tie_mode: TieMode::Random,
            baseline: true,
            d_list: vec![60],
            sample_sizes: vec![100, 400, 1600],
            batches: 5,
            exact_covariance: false,
            a_grid: (0..28).map(|i| i as f64 * 0.025).collect(),
            block_a: 0.6,
            n_blocks: 10,
        }
    }
}

impl ExperimentConfig {
    pub fn for_experiment(experiment: ExperimentKind) -> Self {
        let mut cfg = Self { experiment, ..Self::default() };
        match experiment {
            ExperimentKind::Stability => cfg.n_reps = 200,
            ExperimentKind::BlockDesign => {
                cfg.kappa_list = vec![1];
                cfg.n = 5000;
                cfg.n_reps = 10;
            }
            ExperimentKind::DiagDensity | ExperimentKind::Jaccard => {
                cfg.kappa_list = vec![1];
                cfg.d = 60;
                cfg.method = DiagMethod::Sdp;
            }
            ExperimentKind::PowerFdr => {}
        }
        cfg
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.q > 0.0 && self.q < 1.0) {
            return fail(format!("q must lie in (0, 1), got {}", self.q));
        }
        if self.d == 0 || self.n == 0 || self.n_reps == 0 {
            return fail("d, n and n_reps must be positive".into());
        }
        if self.kappa_list.is_empty() || self.kappa_list.contains(&0) {
            return fail("kappa_list must be nonempty with entries >= 1".into());
        }
        if self.n_nonnull.is_empty() {
            return fail("n_nonnull must be nonempty".into());
        }
        if let Some(k) = self.n_nonnull.iter().find(|&&k| k > self.d) {
            return fail(format!("n_nonnull {k} exceeds d = {}", self.d));
        }
        if !(self.signal.is_finite()) {
            return fail("signal must be finite".into());
        }
        match self.experiment {
            ExperimentKind::DiagDensity if self.d_list.is_empty() || self.d_list.iter().any(|&d| d < 2) => {
                fail("d_list entries must be >= 2".into())
            }
            ExperimentKind::Jaccard if self.sample_sizes.is_empty() || self.batches < 2 => {
                fail("jaccard needs sample sizes and at least 2 batches".into())
            }
            ExperimentKind::BlockDesign if self.n_blocks == 0 => fail("n_blocks must be positive".into()),
            _ => Ok(()),
        }
    }
}
