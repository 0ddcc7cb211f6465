use multiknockoff::harness::data::gen_random_correlation;
use multiknockoff::linalg::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::lu_det;

fn random_diag(sigma: &CorrelationMatrix, kappa: usize, seed: u64) -> Vec<f64> {
    // random point strictly inside the feasible set: scale below the
    // boundary along a random direction
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lmin = min_eigenvalue(sigma.matrix()).unwrap() * feasibility_scale(kappa);
    (0..sigma.dim()).map(|_| lmin * rng.random_range(0.05..0.95)).collect()
}

/// Eigenvalues of a symmetric 3×3 matrix from its characteristic cubic.
fn cubic_min_eigenvalue(m: &Matrix) -> f64 {
    let p1 = m[(0, 1)].powi(2) + m[(0, 2)].powi(2) + m[(1, 2)].powi(2);
    let q = m.trace() / 3.0;
    let p2 = (0..3).map(|i| (m[(i, i)] - q).powi(2)).sum::<f64>() + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let b = (m - Matrix::identity(3, 3) * q) / p;
    let r = (lu_det(&b) / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn feasibility_matches_joint_positive_definiteness(
        seed in any::<u64>(), d in 2usize..=6, kappa in 1usize..=3, stretch in 0.2f64..2.0
    ) {
        let sigma = gen_random_correlation(d, seed).unwrap();
        let s: Vec<f64> = random_diag(&sigma, kappa, seed ^ 1).iter().map(|v| v * stretch).collect();
        let slack_min = min_eigenvalue(&slack_matrix(&sigma, &s, kappa).unwrap()).unwrap();
        prop_assume!(slack_min.abs() > 1e-6);
        let joint = assemble_joint_covariance(&sigma, &s, kappa).unwrap();
        let joint_pd = joint.entries.clone().symmetric_eigen().eigenvalues.min() > 0.0;
        prop_assert_eq!(is_feasible(&sigma, &s, kappa).unwrap(), joint_pd);
    }

    #[test]
    fn determinant_identity(seed in any::<u64>(), d in 2usize..=6, kappa in 1usize..=3) {
        let sigma = gen_random_correlation(d, seed).unwrap();
        let ratio = |s: &[f64]| {
            let joint = assemble_joint_covariance(&sigma, s, kappa).unwrap();
            let det_d: f64 = s.iter().product();
            lu_det(&joint.entries) / (det_d.powi(kappa as i32) * lu_det(&slack_matrix(&sigma, s, kappa).unwrap()))
        };
        let a = ratio(&random_diag(&sigma, kappa, seed ^ 2));
        let b = ratio(&random_diag(&sigma, kappa, seed ^ 3));
        let expected = (kappa as f64).powi(d as i32);
        prop_assert!(((a - b) / b).abs() < 1e-6, "ratio varies: {} vs {}", a, b);
        prop_assert!(((a - expected) / expected).abs() < 1e-6);
        if kappa == 1 {
            prop_assert!((a - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn cholesky_reconstructs(seed in any::<u64>(), d in 2usize..=8) {
        let sigma = gen_random_correlation(d, seed).unwrap();
        let l = cholesky(sigma.matrix()).unwrap().unwrap();
        prop_assert!((&l * l.transpose() - sigma.matrix()).abs().max() < 1e-12);
        for i in 0..d {
            for j in (i + 1)..d {
                prop_assert_eq!(l[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn min_eigenvalue_matches_characteristic_polynomial(seed in any::<u64>()) {
        let sigma = gen_random_correlation(3, seed).unwrap();
        let m = sigma.matrix() * 1.5 - Matrix::from_diagonal(&Vector::from_vec(vec![0.3, 0.1, 0.2]));
        prop_assert!((min_eigenvalue(&m).unwrap() - cubic_min_eigenvalue(&m)).abs() < 1e-10);
    }

    #[test]
    fn min_eigenvalue_two_by_two(rho in -0.99f64..0.99) {
        let sigma = CorrelationMatrix::pair(rho).unwrap();
        prop_assert!((min_eigenvalue(sigma.matrix()).unwrap() - (1.0 - rho.abs())).abs() < 1e-12);
    }

    #[test]
    fn psd_factor_reproduces_singular_matrices(seed in any::<u64>(), d in 2usize..=6) {
        let sigma = gen_random_correlation(d, seed).unwrap();
        // rank-deficient: duplicate the first block
        let mut m = Matrix::zeros(2 * d, 2 * d);
        for a in 0..2 {
            for b in 0..2 {
                m.view_mut((a * d, b * d), (d, d)).copy_from(sigma.matrix());
            }
        }
        let f = psd_factor(&m).unwrap();
        prop_assert_eq!(f.rank, d);
        prop_assert!((&f.factor * f.factor.transpose() - &m).abs().max() < 1e-10);
    }
}

#[test]
fn boundary_point_is_infeasible() {
    let sigma = CorrelationMatrix::pair(0.5).unwrap();
    // λ_min(2Σ) = 1 at κ = 1, so s = (1, 1) sits on the boundary
    assert!(!is_feasible(&sigma, &[1.0, 1.0], 1).unwrap());
    assert!(is_feasible(&sigma, &[0.99, 0.99], 1).unwrap());
    assert!(!is_feasible(&sigma, &[-0.1, 0.5], 1).unwrap());
}

#[test]
fn joint_covariance_blocks() {
    let sigma = CorrelationMatrix::pair(0.3).unwrap();
    let j = assemble_joint_covariance(&sigma, &[0.4, 0.2], 2).unwrap();
    assert_eq!(j.entries.shape(), (6, 6));
    assert_eq!(j.entries[(0, 2)], 0.6);
    assert_eq!(j.entries[(1, 5)], 0.8);
    assert_eq!(j.entries[(0, 3)], 0.3);
    assert_eq!(j.entries[(4, 4)], 1.0);
}

#[test]
fn correlation_matrix_rejects_bad_input() {
    assert!(CorrelationMatrix::new(Matrix::from_row_slice(2, 2, &[1.0, 0.2, 0.3, 1.0])).is_err());
    assert!(CorrelationMatrix::new(Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0])).is_err());
    assert!(CorrelationMatrix::new(Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0])).is_err());
    let cov = Matrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 1.0]);
    let c = CorrelationMatrix::from_covariance(&cov).unwrap();
    assert!((c.matrix()[(0, 1)] - 0.5).abs() < 1e-15);
}
