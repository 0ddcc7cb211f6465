//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use multiknockoff::diag::*;
use multiknockoff::harness::config::{ExperimentConfig, ExperimentKind};
use multiknockoff::harness::data::gen_random_correlation;
use multiknockoff::harness::experiments::*;
use multiknockoff::linalg::*;
use multiknockoff::scip::*;
use multiknockoff::selection::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::*;

type Check = fn() -> (bool, String);

fn power_report() -> &'static PowerReport {
    static REPORT: std::sync::OnceLock<PowerReport> = std::sync::OnceLock::new();
    REPORT.get_or_init(|| {
        let cfg = ExperimentConfig {
            experiment: ExperimentKind::PowerFdr,
            d: 60,
            n: 800,
            kappa_list: vec![1, 2, 3],
            q: 0.1,
            n_nonnull: vec![4, 5, 10, 12, 20],
            signal: 5.0,
            n_reps: 50,
            method: DiagMethod::Entropy,
            baseline: false,
            ..ExperimentConfig::default()
        };
        run_power_fdr(&cfg).expect("power/FDR experiment")
    })
}

fn cell(kappa: usize, n_nonnull: usize) -> &'static PowerCell {
    power_report()
        .aggregates
        .iter()
        .find(|c| c.kappa == kappa && c.n_nonnull == n_nonnull)
        .expect("cell present")
}

fn fdr_control() -> (bool, String) {
    let report = power_report();
    let secs = report.metadata.wall_time_secs;
    let mut ok = secs < 900.0;
    let mut worst = f64::NEG_INFINITY;
    for kappa in 1..=3 {
        for k in [4, 10, 20] {
            let c = cell(kappa, k);
            worst = worst.max(c.fdr - (0.1 + 2.0 * c.fdr_se));
            ok &= c.failures == 0 && c.fdr <= 0.1 + 2.0 * c.fdr_se;
        }
    }
    (ok, format!("worst fdr - (q + 2se) = {worst:.3}, {} failed fits, {secs:.0}s", report.failures()))
}

fn detection_power() -> (bool, String) {
    let (p1, p3, p12) = (cell(1, 5).power, cell(3, 5).power, cell(1, 12).power);
    (
        p1 < 0.1 && p3 > 0.5 && p12 > 0.5,
        format!("5 nonnulls: kappa1 {p1:.3} (< 0.1), kappa3 {p3:.3} (> 0.5); 12 nonnulls: kappa1 {p12:.3} (> 0.5)"),
    )
}

fn structural_threshold() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut nonempty = 0;
    let mut violations = 0;
    for _ in 0..10_000 {
        let d = rng.random_range(1..80);
        let kappa = rng.random_range(1..=5);
        let q = rng.random_range(0.02..0.5);
        let win = rng.random_range(0.0..1.0);
        let k: Vec<usize> = (0..d)
            .map(|_| if rng.random_bool(win) { 0 } else { rng.random_range(1..=kappa) })
            .collect();
        let t: Vec<f64> = (0..d).map(|_| rng.random_range(0..20) as f64 * 0.25).collect();
        let res = multiknockoff_select(&k, &t, q, kappa).unwrap();
        if !res.is_empty() {
            nonempty += 1;
            let bound = (1.0 / (q * kappa as f64) - 1e-9).ceil() as usize;
            if res.selected.len() < bound {
                violations += 1;
            }
        }
    }
    (violations == 0 && nonempty > 1000, format!("{nonempty} nonempty selections, {violations} below the bound"))
}

fn null_audit() -> (bool, String) {
    let spec = NullModelSpec::default();
    let audit = null_uniformity_audit(50, &spec, 11).unwrap();
    let control_spec = NullModelSpec { scorer: AuditScorer::Upweighted { factor: 1.1 }, ..spec };
    let control = null_uniformity_audit(500, &control_spec, 12).unwrap();
    (
        audit.test.p_value > 0.001 && control.test.p_value < 0.001,
        format!(
            "pipeline p = {:.3} (> 0.001) counts {:?}; upweighted control p = {:.1e} (< 0.001)",
            audit.test.p_value, audit.test.counts, control.test.p_value
        ),
    )
}

fn scip_exchangeability() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_exact: f64 = 0.0;
    let mut worst_mc: f64 = 0.0;
    let mut joints = 0;
    let mut mc_runs = 0;
    for d in 1..=3usize {
        for a in 2..=3usize {
            for kappa in 1..=2usize {
                let sizes = vec![a; d];
                let total = a.pow(d as u32);
                let raw: Vec<f64> = (0..total).map(|_| rng.random_range(0.05..1.0)).collect();
                let sum: f64 = raw.iter().sum();
                let joint = DiscreteJoint::new(sizes, raw.iter().map(|v| v / sum).collect()).unwrap();
                let law = exact_joint_law(&joint, kappa).unwrap();
                worst_exact = worst_exact.max(exchangeability_tv(&law).unwrap());
                joints += 1;
                // sampling error of the empirical TV grows with the table size
                if law.pmf.len() <= 100 {
                    let emp = empirical_joint_law(&joint, kappa, 500_000, 7 + mc_runs as u64).unwrap();
                    worst_mc = worst_mc.max(tv_distance(&emp.pmf, &law.pmf));
                    mc_runs += 1;
                }
            }
        }
    }
    (
        worst_exact <= 1e-12 && worst_mc < 0.01,
        format!("{joints} joints: max swap TV {worst_exact:.1e}; {mc_runs} Monte Carlo runs: max TV {worst_mc:.4}"),
    )
}

fn linalg_algebra() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut feas_checked, mut feas_bad) = (0, 0);
    while feas_checked < 100 {
        let d = rng.random_range(2..=6);
        let kappa = rng.random_range(1..=3);
        let sigma = gen_random_correlation(d, rng.random()).unwrap();
        let top = 2.0 * min_symmetric_eigenvalue(sigma.matrix()) * (kappa as f64 + 1.0) / kappa as f64;
        let s: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..top)).collect();
        let joint = assemble_joint_covariance(&sigma, &s, kappa).unwrap();
        let joint_min = min_symmetric_eigenvalue(&joint.entries);
        if joint_min.abs() < 1e-8 {
            continue;
        }
        feas_checked += 1;
        if is_feasible(&sigma, &s, kappa).unwrap() != (joint_min > 0.0) {
            feas_bad += 1;
        }
    }
    let (mut det_worst, mut det_worst_k1): (f64, f64) = (0.0, 0.0);
    for _ in 0..100 {
        let d = rng.random_range(2..=6);
        let kappa = rng.random_range(1..=3);
        let sigma = gen_random_correlation(d, rng.random()).unwrap();
        let lmin = min_symmetric_eigenvalue(sigma.matrix()) * (kappa as f64 + 1.0) / kappa as f64;
        let s: Vec<f64> = (0..d).map(|_| lmin * rng.random_range(0.05..0.95)).collect();
        let joint = assemble_joint_covariance(&sigma, &s, kappa).unwrap();
        let predicted = (kappa as f64).powi(d as i32)
            * s.iter().product::<f64>().powi(kappa as i32)
            * lu_det(&scaled_slack(sigma.matrix(), &s, kappa));
        let rel = (lu_det(&joint.entries) - predicted).abs() / predicted.abs();
        det_worst = det_worst.max(rel);
        if kappa == 1 {
            det_worst_k1 = det_worst_k1.max(rel);
        }
    }
    (
        feas_bad == 0 && det_worst < 1e-6 && det_worst_k1 < 1e-8,
        format!(
            "feasibility mismatches {feas_bad}/100; det identity max rel error {det_worst:.1e} (kappa 1: {det_worst_k1:.1e})"
        ),
    )
}

fn solver_correctness() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut grad_worst, mut equi_worst): (f64, f64) = (0.0, 0.0);
    for _ in 0..30 {
        let d = rng.random_range(2..=10);
        let kappa = rng.random_range(1..=3);
        let sigma = gen_random_correlation(d, rng.random()).unwrap();
        let s = entropy_diag(&sigma, kappa).unwrap().pre_backoff();
        let h = 1e-6;
        for j in 0..d {
            let (mut up, mut down) = (s.clone(), s.clone());
            up[j] += h;
            down[j] -= h;
            let fd = (entropy_reference(sigma.matrix(), &up, kappa) - entropy_reference(sigma.matrix(), &down, kappa)) / (2.0 * h);
            grad_worst = grad_worst.max(fd.abs());
        }
        let e = equi_diag(&sigma, kappa, false).unwrap().pre_backoff();
        equi_worst = equi_worst.max(min_symmetric_eigenvalue(&scaled_slack(sigma.matrix(), &e, kappa)).abs());
    }
    let mut problems: Vec<(CorrelationMatrix, usize)> = Vec::new();
    for rho in [0.3, 0.7, -0.5] {
        for kappa in 1..=3 {
            problems.push((CorrelationMatrix::pair(rho).unwrap(), kappa));
        }
    }
    for seed in 0..4 {
        problems.push((gen_random_correlation(3, 900 + seed).unwrap(), 1 + seed as usize % 3));
    }
    problems.push((block_matrix(0.6).unwrap(), 1));
    let mut sdp_worst: f64 = 0.0;
    for (sigma, kappa) in &problems {
        let ours = sdp_objective(&sdp_diag(sigma, *kappa).unwrap().pre_backoff());
        sdp_worst = sdp_worst.max((ours - sdp_reference(sigma.matrix(), *kappa)).abs());
    }
    (
        grad_worst < 1e-6 && equi_worst < 1e-8 && sdp_worst < 1e-6,
        format!(
            "entropy fd gradient {grad_worst:.1e}; equi boundary eigenvalue {equi_worst:.1e}; sdp vs grid {sdp_worst:.1e} over {} problems",
            problems.len()
        ),
    )
}

fn block_design() -> (bool, String) {
    let cfg = ExperimentConfig { n_reps: 20, ..ExperimentConfig::for_experiment(ExperimentKind::BlockDesign) };
    let report = run_block_design(&cfg).unwrap();
    let a = &report.aggregates;
    let (sdp_s2, ent_s2) = (a.s_sdp[1], a.s_entropy[1]);
    (
        report.failures() == 0 && sdp_s2 <= 1e-6 && ent_s2 > 0.05 && a.sdp_power < 0.05 && a.entropy_power > 0.9,
        format!(
            "sdp s2 {sdp_s2:.1e}, entropy s2 {ent_s2:.3}; power sdp {:.3}, entropy {:.3}; {} failed fits",
            a.sdp_power,
            a.entropy_power,
            report.failures()
        ),
    )
}

fn diag_density() -> (bool, String) {
    let records = diag_density_records(&[60], 50, 1, 0);
    let mins = |m: DiagMethod| -> Vec<f64> { records.iter().filter(|r| r.method == m).map(|r| r.min).collect() };
    let (ent, sdp, equi) = (mins(DiagMethod::Entropy), mins(DiagMethod::Sdp), mins(DiagMethod::Equicorrelated));
    let n = ent.len() as f64;
    let share = |f: &dyn Fn(usize) -> bool| (0..ent.len()).filter(|&i| f(i)).count() as f64 / n;
    let sdp_zero = share(&|i| sdp[i] < 1e-10);
    let ent_clear = share(&|i| ent[i] >= 1e-6);
    let ent_over_equi = share(&|i| ent[i] > equi[i]);
    let ent_over_sdp = share(&|i| ent[i] > sdp[i]);
    let failures = records.iter().filter(|r| r.error.is_some()).count();
    (
        failures == 0 && sdp_zero >= 0.6 && ent_clear == 1.0 && ent_over_equi >= 0.9 && ent_over_sdp >= 0.95,
        format!(
            "sdp near-zero {sdp_zero:.2} (>= 0.6); entropy clear {ent_clear:.2} (= 1); entropy min > equi {ent_over_equi:.2} (>= 0.9); entropy min > sdp min {ent_over_sdp:.2} (>= 0.95)"
        ),
    )
}

fn jaccard_instability() -> (bool, String) {
    let cfg = ExperimentConfig::for_experiment(ExperimentKind::Jaccard);
    let report = run_jaccard(&cfg).unwrap();
    let means: Vec<(usize, f64)> = report.aggregates.iter().map(|s| (s.n, s.mean_jaccard)).collect();
    let at_100 = means.iter().find(|(n, _)| *n == 100).map(|p| p.1).unwrap_or(f64::NAN);
    let rising = means.windows(2).all(|w| w[1].1 >= w[0].1);
    (
        report.failures() == 0 && at_100 < 0.5 && rising,
        format!("mean jaccard by N: {means:?}"),
    )
}

fn main() {
    let checks: [(&str, Check); 10] = [
        ("FDR control", fdr_control),
        ("detection-threshold power", detection_power),
        ("structural detection threshold", structural_threshold),
        ("null uniformity audit", null_audit),
        ("SCIP exchangeability", scip_exchangeability),
        ("joint covariance algebra", linalg_algebra),
        ("diagonal solver correctness", solver_correctness),
        ("block-design pathology", block_design),
        ("diagonal density ordering", diag_density),
        ("Jaccard instability", jaccard_instability),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in checks.iter().enumerate() {
        let started = Instant::now();
        let (pass, detail) = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        });
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {:>2} {verdict} {name}: {detail} [{:.1}s]",
            i + 1,
            started.elapsed().as_secs_f64()
        );
        if !pass {
            failed.push(i + 1);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
