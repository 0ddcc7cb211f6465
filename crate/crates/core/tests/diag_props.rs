use multiknockoff::diag::*;
use multiknockoff::harness::data::gen_random_correlation;
use multiknockoff::harness::experiments::block_matrix;
use multiknockoff::linalg::*;
use proptest::prelude::*;

mod common;
use common::*;

#[test]
fn sdp_matches_reference_on_small_problems() {
    let mut problems: Vec<(Matrix, usize)> = Vec::new();
    for &rho in &[0.2, 0.5, 0.8, -0.6] {
        for kappa in 1..=3 {
            problems.push((CorrelationMatrix::pair(rho).unwrap().matrix().clone(), kappa));
        }
    }
    for seed in 0..6 {
        for d in 2..=3 {
            problems.push((gen_random_correlation(d, 100 + seed).unwrap().matrix().clone(), 1 + seed as usize % 3));
        }
    }
    problems.push((block_matrix(0.6).unwrap().matrix().clone(), 1));
    problems.push((block_matrix(0.3).unwrap().matrix().clone(), 2));
    for (sigma, kappa) in problems {
        let corr = CorrelationMatrix::new(sigma.clone()).unwrap();
        let sol = sdp_diag(&corr, kappa).unwrap();
        let ours = sdp_objective(&sol.pre_backoff());
        let reference = sdp_reference(&sigma, kappa);
        assert!(
            (ours - reference).abs() < 1e-6,
            "kappa {kappa}: objective {ours} vs reference {reference} for {sigma}"
        );
    }
}

#[test]
fn sdp_block_pattern() {
    let sigma = block_matrix(0.6).unwrap();
    let sol = sdp_diag(&sigma, 1).unwrap();
    assert!(sol.s[1] <= 1e-6, "s2 = {}", sol.s[1]);
    assert!((sol.s[0] - sol.s[2]).abs() < 1e-6);
    // with s2 = 0 the reference for s1 = s3 is the largest t with 2A − diag(t, 0, t) ⪰ 0
    let f = |t: &[f64]| {
        let m = scaled_slack(sigma.matrix(), &[t[0], 0.0, t[0]], 1);
        if m.symmetric_eigen().eigenvalues.min() >= -1e-14 { -t[0] } else { f64::INFINITY }
    };
    let (t, _) = zoom_minimize(&f, &[0.0], &[1.0], 101, 12);
    assert!((sol.pre_backoff()[0] - t[0]).abs() < 1e-6, "s1 {} vs {}", sol.s[0], t[0]);
    let ent = entropy_diag(&sigma, 1).unwrap();
    assert!(ent.s[1] > 0.05, "entropy s2 = {}", ent.s[1]);
}

#[test]
fn entropy_matches_grid_search_pair() {
    let sigma = CorrelationMatrix::pair(0.5).unwrap();
    let f = |s: &[f64]| entropy_reference(sigma.matrix(), s, 1);
    let (best, _) = zoom_minimize(&f, &[1e-6, 1e-6], &[1.5, 1.5], 61, 25);
    let sol = entropy_diag(&sigma, 1).unwrap();
    for j in 0..2 {
        assert!((sol.pre_backoff()[j] - best[j]).abs() < 1e-4, "{:?} vs {:?}", sol.s, best);
    }
}

#[test]
fn identity_short_circuits_for_all_methods() {
    let sigma = CorrelationMatrix::identity(4);
    for kappa in 1..=3 {
        for method in [DiagMethod::Entropy, DiagMethod::Sdp] {
            let sol = solve_diag(&sigma, kappa, method).unwrap();
            assert!(sol.s.iter().all(|v| (v - 1.0).abs() < 1e-5), "{method} kappa {kappa}: {:?}", sol.s);
        }
    }
    let equi = equi_diag(&sigma, 1, false).unwrap();
    assert!((equi.pre_backoff()[0] - 2.0).abs() < 1e-12);
    let clamped = equi_diag(&sigma, 3, true).unwrap();
    assert!((clamped.pre_backoff()[0] - 1.0).abs() < 1e-12);
}

#[test]
fn equi_pair_value() {
    let sol = equi_diag(&CorrelationMatrix::pair(0.5).unwrap(), 2, true).unwrap();
    assert!((sol.pre_backoff()[0] - 0.75).abs() < 1e-12);
    assert!(sol.s.iter().all(|v| *v == sol.s[0]));
}

#[test]
fn summary_of_degenerate_diagonal() {
    let mut sol = DiagonalS::zeros(3, 1, DiagMethod::Sdp);
    sol.s = vec![1.0, 0.0, 1.0];
    let summary = diag_summary(&sol);
    assert_eq!(summary.undiscoverable, 1);
    sol.s = vec![1.0; 3];
    let summary = diag_summary(&sol);
    assert_eq!((summary.min, summary.max, summary.undiscoverable), (1.0, 1.0, 0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn every_method_returns_a_feasible_diagonal(seed in any::<u64>(), d in 2usize..=10, kappa in 1usize..=3) {
        let sigma = gen_random_correlation(d, seed).unwrap();
        for method in DiagMethod::ALL {
            let sol = solve_diag(&sigma, kappa, method).unwrap();
            prop_assert!(is_feasible(&sigma, &sol.s, kappa).unwrap(), "{} infeasible", method);
            prop_assert!(sol.s.iter().all(|v| *v >= 0.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn equicorrelated_point_touches_the_boundary(seed in any::<u64>(), d in 2usize..=12, kappa in 1usize..=3) {
        let sigma = gen_random_correlation(d, seed).unwrap();
        let sol = equi_diag(&sigma, kappa, false).unwrap();
        let eig = scaled_slack(sigma.matrix(), &sol.pre_backoff(), kappa).symmetric_eigen().eigenvalues.min();
        prop_assert!(eig.abs() < 1e-8, "boundary eigenvalue {}", eig);
    }

    #[test]
    fn equicorrelated_shrinks_with_kappa(seed in any::<u64>(), d in 2usize..=8) {
        let sigma = gen_random_correlation(d, seed).unwrap();
        let values: Vec<f64> = (1..=4).map(|k| equi_diag(&sigma, k, false).unwrap().s[0]).collect();
        prop_assert!(values.windows(2).all(|w| w[1] < w[0]));
        let clamped: Vec<f64> = (1..=4).map(|k| equi_diag(&sigma, k, true).unwrap().s[0]).collect();
        prop_assert!(clamped.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn entropy_beats_equicorrelated_and_is_stationary(seed in any::<u64>(), d in 2usize..=8, kappa in 1usize..=3) {
        let sigma = gen_random_correlation(d, seed).unwrap();
        let sol = entropy_diag(&sigma, kappa).unwrap();
        let s = sol.pre_backoff();
        let equi = equi_diag(&sigma, kappa, true).unwrap();
        let m = sigma.matrix();
        prop_assert!(entropy_reference(m, &s, kappa) <= entropy_reference(m, &equi.s, kappa) + 1e-12);
        let h = 1e-6;
        for j in 0..d {
            let (mut up, mut down) = (s.clone(), s.clone());
            up[j] += h;
            down[j] -= h;
            let fd = (entropy_reference(m, &up, kappa) - entropy_reference(m, &down, kappa)) / (2.0 * h);
            prop_assert!(fd.abs() < 1e-6, "finite-difference gradient {} at coordinate {}", fd, j);
        }
        prop_assert!(sol.kkt_residual.unwrap() <= 1e-8);
    }
}
