//! Running an experiment by kind and writing its outputs.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::harness::config::{ExperimentConfig, ExperimentKind};
use crate::harness::experiments::*;
use crate::harness::io::write_jsonl;
use crate::harness::plot::{histogram, line_chart, Series};

pub enum AnyReport {
    PowerFdr(PowerReport),
    Stability(StabilityReport),
    DiagDensity(DiagDensityReport),
    Jaccard(JaccardReport),
    BlockDesign(BlockDesignReport),
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<AnyReport> {
    Ok(match cfg.experiment {
        ExperimentKind::PowerFdr => AnyReport::PowerFdr(run_power_fdr(cfg)?),
        ExperimentKind::Stability => AnyReport::Stability(run_stability(cfg)?),
        ExperimentKind::DiagDensity => AnyReport::DiagDensity(run_diag_density(cfg)?),
        ExperimentKind::Jaccard => AnyReport::Jaccard(run_jaccard(cfg)?),
        ExperimentKind::BlockDesign => AnyReport::BlockDesign(run_block_design(cfg)?),
    })
}

#[derive(Serialize)]
struct Summary<'a, A> {
    metadata: &'a Metadata,
    failures: usize,
    aggregates: &'a A,
}

fn write_all<R: Serialize + HasError, A: Serialize>(
    report: &ExperimentReport<R, A>,
    plots: Vec<(&str, String)>,
    dir: &Path,
) -> Result<()> {
    fs::create_dir_all(dir.join("plots"))?;
    let summary = Summary { metadata: &report.metadata, failures: report.failures(), aggregates: &report.aggregates };
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(&summary)?)?;
    write_jsonl(&dir.join("records.jsonl"), &report.records)?;
    for (name, svg) in plots {
        fs::write(dir.join("plots").join(format!("{name}.svg")), svg)?;
    }
    Ok(())
}

fn power_plots(cells: &[PowerCell]) -> Vec<(&'static str, String)> {
    let kappas: Vec<usize> = {
        let mut k: Vec<usize> = cells.iter().map(|c| c.kappa).collect();
        k.dedup();
        k.sort_unstable();
        k.dedup();
        k
    };
    let series = |f: fn(&PowerCell) -> f64| -> Vec<Series> {
        kappas
            .iter()
            .map(|&k| {
                let points = cells.iter().filter(|c| c.kappa == k).map(|c| (c.n_nonnull as f64, f(c))).collect();
                Series::new(format!("kappa = {k}"), points)
            })
            .collect()
    };
    vec![
        ("power", line_chart("Power", "non-nulls", "mean power", &series(|c| c.power))),
        ("fdr", line_chart("FDR", "non-nulls", "empirical FDR", &series(|c| c.fdr))),
    ]
}

fn stability_plots(summaries: &[StabilitySummary]) -> Vec<(&'static str, String)> {
    let series: Vec<Series> = summaries
        .iter()
        .map(|s| {
            let total = s.nonnull.len().max(1) as f64;
            let points = s
                .histogram
                .iter()
                .enumerate()
                .map(|(b, c)| (0.05 + 0.1 * b as f64, *c as f64 / total))
                .collect();
            Series::new(format!("kappa = {}", s.kappa), points)
        })
        .collect();
    vec![("frequency", histogram("Non-null selection frequency", "frequency", "share of non-nulls", &series, 0.1))]
}

fn diag_plots(summaries: &[DiagDensitySummary]) -> Vec<(&'static str, String)> {
    let series: Vec<Series> = summaries
        .iter()
        .map(|s| {
            let total = s.histogram.total().max(1) as f64;
            let points = s
                .histogram
                .bin_centers()
                .into_iter()
                .zip(&s.histogram.counts)
                .map(|(c, n)| (c, *n as f64 / total))
                .collect();
            Series::new(format!("{} (d = {})", s.method, s.d), points)
        })
        .collect();
    let width = summaries.first().map_or(0.25, |s| s.histogram.bin_width);
    vec![("diag_density", histogram("Diagonal terms", "log10 s", "share", &series, width))]
}

fn jaccard_plots(summaries: &[JaccardSummary]) -> Vec<(&'static str, String)> {
    let points = summaries.iter().map(|s| (s.n as f64, s.mean_jaccard)).collect();
    vec![("jaccard", line_chart("Undiscoverable-set stability", "batch size", "mean Jaccard", &[Series::new("sdp", points)]))]
}

fn block_plots(summary: &BlockDesignSummary) -> Vec<(&'static str, String)> {
    let pick = |f: fn(&BlockCurvePoint) -> f64| summary.curve.iter().map(|p| (p.a, f(p))).collect::<Vec<_>>();
    let series = vec![
        Series::new("sdp s1", pick(|p| p.sdp_s1)),
        Series::new("sdp s2", pick(|p| p.sdp_s2)),
        Series::new("entropy s1", pick(|p| p.entropy_s1)),
        Series::new("entropy s2", pick(|p| p.entropy_s2)),
    ];
    vec![("block_curve", line_chart("Block design", "a", "s", &series))]
}

impl AnyReport {
    pub fn metadata(&self) -> &Metadata {
        match self {
            AnyReport::PowerFdr(r) => &r.metadata,
            AnyReport::Stability(r) => &r.metadata,
            AnyReport::DiagDensity(r) => &r.metadata,
            AnyReport::Jaccard(r) => &r.metadata,
            AnyReport::BlockDesign(r) => &r.metadata,
        }
    }

    pub fn failures(&self) -> usize {
        match self {
            AnyReport::PowerFdr(r) => r.failures(),
            AnyReport::Stability(r) => r.failures(),
            AnyReport::DiagDensity(r) => r.failures(),
            AnyReport::Jaccard(r) => r.failures(),
            AnyReport::BlockDesign(r) => r.failures(),
        }
    }

    /// `report.json`, `records.jsonl` and `plots/*.svg` under `dir`.
    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        match self {
            AnyReport::PowerFdr(r) => write_all(r, power_plots(&r.aggregates), dir),
            AnyReport::Stability(r) => write_all(r, stability_plots(&r.aggregates), dir),
            AnyReport::DiagDensity(r) => write_all(r, diag_plots(&r.aggregates), dir),
            AnyReport::Jaccard(r) => write_all(r, jaccard_plots(&r.aggregates), dir),
            AnyReport::BlockDesign(r) => write_all(r, block_plots(&r.aggregates), dir),
        }
    }

    /// Short human-readable digest of the aggregates.
    pub fn summary_lines(&self) -> Vec<String> {
        match self {
            AnyReport::PowerFdr(r) => r
                .aggregates
                .iter()
                .map(|c| {
                    format!(
                        "kappa={} nonnull={} fdr={:.3}±{:.3} power={:.3}±{:.3} failures={}",
                        c.kappa, c.n_nonnull, c.fdr, c.fdr_se, c.power, c.power_se, c.failures
                    )
                })
                .collect(),
            AnyReport::Stability(r) => r
                .aggregates
                .iter()
                .map(|s| format!("kappa={} draws={} share>=0.8: {:.3}", s.kappa, s.draws, s.share_at_least(0.8)))
                .collect(),
            AnyReport::DiagDensity(r) => r
                .aggregates
                .iter()
                .map(|s| {
                    format!(
                        "d={} {} share_with_undiscoverable={:.2} mean_log10_min={:.2}",
                        s.d, s.method, s.share_with_undiscoverable, s.mean_log10_min
                    )
                })
                .collect(),
            AnyReport::Jaccard(r) => r
                .aggregates
                .iter()
                .map(|s| format!("n={} jaccard={:.3}±{:.3} mean_size={:.2}", s.n, s.mean_jaccard, s.se, s.mean_set_size))
                .collect(),
            AnyReport::BlockDesign(r) => {
                let a = &r.aggregates;
                vec![format!(
                    "a={} sdp s2={:.2e} power={:.3}; entropy s2={:.3} power={:.3}",
                    a.a, a.s_sdp[1], a.sdp_power, a.s_entropy[1], a.entropy_power
                )]
            }
        }
    }
}
