use std::path::PathBuf;

use multiknockoff::diag::DiagMethod;
use multiknockoff::harness::config::{ExperimentConfig, ExperimentKind};
use multiknockoff::harness::experiments::*;
use multiknockoff::harness::io::*;
use multiknockoff::harness::report::{run_experiment, AnyReport};
use multiknockoff::linalg::Matrix;
use multiknockoff::Error;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("multiknockoff-harness-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn small_power() -> ExperimentConfig {
    ExperimentConfig {
        d: 12,
        n: 150,
        kappa_list: vec![1, 2],
        n_nonnull: vec![3, 5],
        n_reps: 3,
        seed: 4,
        ..ExperimentConfig::for_experiment(ExperimentKind::PowerFdr)
    }
}

#[test]
fn config_file_parses_and_validates() {
    let dir = scratch("config");
    let path = dir.join("cfg.json");
    std::fs::write(&path, r#"{"experiment":"jaccard","d":20,"sample_sizes":[50,100],"method":"sdp","n_reps":2}"#).unwrap();
    let cfg = ExperimentConfig::from_json_file(&path).unwrap();
    assert_eq!(cfg.experiment, ExperimentKind::Jaccard);
    assert_eq!(cfg.method, DiagMethod::Sdp);
    assert_eq!(cfg.sample_sizes, vec![50, 100]);
    cfg.validate().unwrap();

    std::fs::write(&path, r#"{"experiment":"jaccard","batches":1}"#).unwrap();
    let cfg = ExperimentConfig::from_json_file(&path).unwrap();
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    std::fs::write(&path, r#"{"experiment":"nope"}"#).unwrap();
    assert!(matches!(ExperimentConfig::from_json_file(&path), Err(Error::Config(_))));
    assert!("power_fdr".parse::<ExperimentKind>().is_ok());
    assert!("power".parse::<ExperimentKind>().is_err());

    let bad = ExperimentConfig { kappa_list: vec![0], ..Default::default() };
    assert!(matches!(run_power_fdr(&bad), Err(Error::Config(_))));
}

#[test]
fn config_serializes_back_to_itself() {
    let cfg = small_power();
    let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn csv_and_json_matrix_roundtrips() {
    let dir = scratch("io");
    let m = Matrix::from_fn(4, 3, |r, c| (r as f64 + 1.0) / (c as f64 + 3.0) - 0.3);
    let csv = dir.join("m.csv");
    write_csv_matrix(&csv, &m, None).unwrap();
    assert_eq!(read_csv_matrix(&csv).unwrap(), m);

    let header: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    write_csv_matrix(&csv, &m, Some(&header)).unwrap();
    let (h, back) = parse_csv(std::fs::File::open(&csv).unwrap()).unwrap();
    assert_eq!(h.unwrap(), header);
    assert_eq!(back, m);

    let sq = Matrix::from_fn(3, 3, |r, c| if r == c { 1.0 } else { 0.25 });
    let json = dir.join("m.json");
    write_json_matrix(&json, &sq).unwrap();
    assert_eq!(read_matrix(&json).unwrap(), sq);
    assert_eq!(read_matrix(&csv).unwrap(), m);

    let v = vec![0.1, -2.5e-12, 3.0];
    let vp = dir.join("v.csv");
    write_csv_vector(&vp, &v).unwrap();
    assert_eq!(read_csv_vector(&vp).unwrap(), v);
    std::fs::write(&vp, "1,2,3\n").unwrap();
    assert_eq!(read_csv_vector(&vp).unwrap(), vec![1.0, 2.0, 3.0]);
    assert!(matches!(read_csv_vector(&csv), Err(Error::Dimension(_))));

    std::fs::write(&json, r#"{"dim":2,"entries":[[1.0,0.0]]}"#).unwrap();
    assert!(read_json_matrix(&json).is_err());
}

#[test]
fn jsonl_roundtrip() {
    let dir = scratch("jsonl");
    let records = vec![
        JaccardRecord { n: 10, repeat: 0, sets: vec![vec![1, 2], vec![]], mean_jaccard: 0.0, error: None },
        JaccardRecord { n: 10, repeat: 1, sets: vec![], mean_jaccard: f64::NAN, error: Some("boom".into()) },
    ];
    let path = dir.join("r.jsonl");
    write_jsonl(&path, &records).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 2);
    let back: Vec<JaccardRecord> = read_jsonl(&path).unwrap();
    assert_eq!(back[0], records[0]);
    assert_eq!(back[1].error.as_deref(), Some("boom"));
    assert!(back[1].mean_jaccard.is_nan());
}

#[test]
fn power_aggregates_recompute_from_records() {
    let cfg = small_power();
    let report = run_power_fdr(&cfg).unwrap();
    assert_eq!(report.records.len(), 3 * 2 * 2);
    assert_eq!(report.failures(), 0);
    let dir = scratch("power");
    let path = dir.join("records.jsonl");
    write_jsonl(&path, &report.records).unwrap();
    let records: Vec<PowerRecord> = read_jsonl(&path).unwrap();
    let again = aggregate_power(&records, cfg.q);
    assert_eq!(again, report.aggregates);
    for cell in &report.aggregates {
        assert_eq!(cell.reps, 3);
        assert!((0.0..=1.0).contains(&cell.fdr) && (0.0..=1.0).contains(&cell.power));
        assert!(cell.baseline_fdr.is_some());
    }
    for r in &report.records {
        assert!(r.selected.windows(2).all(|w| w[0] < w[1]));
        assert!(r.selected.iter().all(|&i| i < cfg.d));
    }
}

#[test]
fn experiments_are_deterministic() {
    let cfg = small_power();
    let a = run_power_fdr(&cfg).unwrap();
    let b = run_power_fdr(&cfg).unwrap();
    assert_eq!(a.records, b.records);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(2).build().unwrap();
    let c = pool.install(|| run_power_fdr(&cfg).unwrap());
    assert_eq!(a.records, c.records);
    let other = run_power_fdr(&ExperimentConfig { seed: 5, ..cfg }).unwrap();
    assert_ne!(a.records, other.records);
}

#[test]
fn stability_aggregates_recompute() {
    let cfg = ExperimentConfig {
        d: 10,
        n: 150,
        kappa_list: vec![1, 2],
        n_nonnull: vec![3],
        n_reps: 6,
        seed: 2,
        ..ExperimentConfig::for_experiment(ExperimentKind::Stability)
    };
    let report = run_stability(&cfg).unwrap();
    assert_eq!(report.records.len(), 12);
    let truth = report.aggregates[0].nonnull.clone();
    assert_eq!(truth.len(), 3);
    assert_eq!(aggregate_stability(&report.records, cfg.d, &truth), report.aggregates);
    for s in &report.aggregates {
        assert_eq!(s.histogram.iter().sum::<usize>(), 3);
        assert_eq!(s.draws, 6);
    }
}

#[test]
fn diag_density_and_jaccard_aggregates_recompute() {
    let records = diag_density_records(&[8, 12], 3, 1, 5);
    assert_eq!(records.len(), 2 * 3 * 3);
    let agg = aggregate_diag_density(&records);
    assert_eq!(agg.len(), 6);
    assert!(agg.iter().all(|s| s.draws == 3 && s.failures == 0));
    assert_eq!(aggregate_diag_density(&records), agg);

    let cfg = ExperimentConfig {
        d: 10,
        sample_sizes: vec![60, 200],
        n_reps: 2,
        batches: 3,
        ..ExperimentConfig::for_experiment(ExperimentKind::Jaccard)
    };
    let report = run_jaccard(&cfg).unwrap();
    assert_eq!(report.records.len(), 4);
    assert!(report.records.iter().all(|r| r.sets.len() == 3));
    for r in &report.records {
        assert_eq!(r.mean_jaccard, mean_pairwise_jaccard(&r.sets));
    }
    assert_eq!(aggregate_jaccard(&report.records), report.aggregates);
}

#[test]
fn exact_covariance_gives_identical_sets() {
    let cfg = ExperimentConfig {
        d: 10,
        sample_sizes: vec![50],
        n_reps: 2,
        batches: 3,
        exact_covariance: true,
        ..ExperimentConfig::for_experiment(ExperimentKind::Jaccard)
    };
    let report = run_jaccard(&cfg).unwrap();
    assert!(report.aggregates.iter().all(|s| s.mean_jaccard == 1.0));
}

#[test]
fn block_design_rejects_large_a() {
    for a in [0.71, 0.75, 1.0] {
        let cfg = ExperimentConfig { block_a: a, ..ExperimentConfig::for_experiment(ExperimentKind::BlockDesign) };
        assert!(matches!(run_block_design(&cfg), Err(Error::Infeasible(_))), "a = {a}");
    }
    assert!(block_matrix(-0.1).is_err());
    let sigma = block_diagonal(0.5, 3).unwrap();
    assert_eq!(sigma.dim(), 9);
    assert_eq!(sigma.matrix()[(3, 4)], 0.5);
    assert_eq!(sigma.matrix()[(2, 3)], 0.0);
}

#[test]
fn block_design_small_run() {
    let cfg = ExperimentConfig {
        n_blocks: 4,
        n: 400,
        n_reps: 2,
        a_grid: vec![0.0, 0.3, 0.6],
        response: multiknockoff::harness::data::ResponseKind::Linear,
        ..ExperimentConfig::for_experiment(ExperimentKind::BlockDesign)
    };
    let report = run_block_design(&cfg).unwrap();
    assert_eq!(report.records.len(), 4);
    assert_eq!(report.aggregates.curve.len(), 3);
    assert_eq!(report.aggregates.s_sdp.len(), 12);
    let first = &report.aggregates.curve[0];
    assert!((first.sdp_s1 - 1.0).abs() < 1e-6 && (first.entropy_s2 - 1.0).abs() < 1e-6);
}

#[test]
fn top_correlation_baseline_examples() {
    let n = 40;
    let x = Matrix::from_fn(n, 4, |r, c| match c {
        0 => r as f64,
        1 => ((r * 17) % 7) as f64,
        2 => -(r as f64) + ((r % 3) as f64),
        _ => 5.0,
    });
    let y: Vec<f64> = (0..n).map(|r| 2.0 * r as f64 + 1.0).collect();
    assert_eq!(run_top_correlation_baseline(&x, &y, 2), vec![0, 2]);
    // a constant column scores zero and comes last
    assert_eq!(run_top_correlation_baseline(&x, &y, 10).len(), 4);
    assert_eq!(*run_top_correlation_baseline(&x, &y, 4).last().unwrap(), 3);
    assert_eq!(false_discovery_proportion(&[0, 2], &[0]), 0.5);
}

#[test]
fn outputs_are_written() {
    let cfg = small_power();
    let report = run_experiment(&cfg).unwrap();
    assert!(matches!(report, AnyReport::PowerFdr(_)));
    assert_eq!(report.metadata().experiment, ExperimentKind::PowerFdr);
    let dir = scratch("outputs");
    report.write_outputs(&dir).unwrap();
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(summary["failures"], 0);
    assert_eq!(summary["metadata"]["config"]["d"], 12);
    assert!(summary["metadata"]["version"].as_str().unwrap().starts_with("multiknockoff"));
    let records: Vec<PowerRecord> = read_jsonl(&dir.join("records.jsonl")).unwrap();
    assert_eq!(records.len(), 12);
    for plot in ["power", "fdr"] {
        let svg = std::fs::read_to_string(dir.join("plots").join(format!("{plot}.svg"))).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }
    assert_eq!(report.summary_lines().len(), 4);
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn diag_density_outputs() {
    let cfg = ExperimentConfig {
        d_list: vec![8],
        n_reps: 2,
        ..ExperimentConfig::for_experiment(ExperimentKind::DiagDensity)
    };
    let report = run_experiment(&cfg).unwrap();
    let dir = scratch("density");
    report.write_outputs(&dir).unwrap();
    assert!(dir.join("plots/diag_density.svg").exists());
    assert_eq!(report.failures(), 0);
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn summary_statistics() {
    assert!(mean_se(&[]).0.is_nan());
    assert_eq!(mean_se(&[4.0]), (4.0, 0.0));
    assert_eq!(power(&[3, 4], &[4]), 1.0);
    assert_eq!(jaccard(&[1], &[]), 0.0);
    assert_eq!(undiscoverable_set(&[0.5, 1e-12, 0.0, 1e-9]), vec![1, 2]);
}
