//! Reference computations shared by the integration tests.
#![allow(dead_code)]

use multiknockoff::linalg::Matrix;

pub fn scaled_slack(sigma: &Matrix, s: &[f64], kappa: usize) -> Matrix {
    let c = (kappa as f64 + 1.0) / kappa as f64;
    let mut m = sigma * c;
    for (i, v) in s.iter().enumerate() {
        m[(i, i)] -= v;
    }
    m
}

/// Entropy objective evaluated through an LU determinant.
pub fn entropy_reference(sigma: &Matrix, s: &[f64], kappa: usize) -> f64 {
    let det = scaled_slack(sigma, s, kappa).lu().determinant();
    if det <= 0.0 || s.iter().any(|v| *v <= 0.0) {
        return f64::INFINITY;
    }
    -det.ln() - kappa as f64 * s.iter().map(|v| v.ln()).sum::<f64>()
}

/// Minimise a convex function on a box by repeatedly refined grids.
pub fn zoom_minimize(f: &dyn Fn(&[f64]) -> f64, lo: &[f64], hi: &[f64], points: usize, rounds: usize) -> (Vec<f64>, f64) {
    let dim = lo.len();
    let (mut lo, mut hi) = (lo.to_vec(), hi.to_vec());
    let mut best = (lo.clone(), f64::INFINITY);
    for _ in 0..rounds {
        let total = points.pow(dim as u32);
        for idx in 0..total {
            let mut rest = idx;
            let x: Vec<f64> = (0..dim)
                .map(|k| {
                    let i = rest % points;
                    rest /= points;
                    lo[k] + (hi[k] - lo[k]) * i as f64 / (points - 1) as f64
                })
                .collect();
            let v = f(&x);
            if v < best.1 {
                best = (x, v);
            }
        }
        for k in 0..dim {
            let step = (hi[k] - lo[k]) / (points - 1) as f64;
            let (a, b) = (lo[k], hi[k]);
            lo[k] = (best.0[k] - 2.0 * step).max(a);
            hi[k] = (best.0[k] + 2.0 * step).min(b);
        }
    }
    best
}

/// Largest feasible last coordinate given the others, by Schur complement.
pub fn max_last(sigma: &Matrix, head: &[f64], kappa: usize) -> Option<f64> {
    let d = sigma.nrows();
    let c = (kappa as f64 + 1.0) / kappa as f64;
    let mut full = head.to_vec();
    full.push(0.0);
    let m = scaled_slack(sigma, &full, kappa);
    let k = d - 1;
    let a = m.view((0, 0), (k, k)).into_owned();
    let chol = a.clone().cholesky()?;
    let b = m.view((0, k), (k, 1)).into_owned();
    let schur = c - (b.transpose() * chol.solve(&b))[(0, 0)];
    Some(schur)
}

/// SDP reference on d ≤ 3 with `s ∈ [0, 1]`: optimise over all but the last
/// coordinate, which is pushed to its feasibility limit.
pub fn sdp_reference(sigma: &Matrix, kappa: usize) -> f64 {
    let d = sigma.nrows();
    let f = |head: &[f64]| -> f64 {
        match max_last(sigma, head, kappa) {
            Some(last) if last >= 0.0 => head.iter().map(|v| 1.0 - v).sum::<f64>() + 1.0 - last.min(1.0),
            _ => f64::INFINITY,
        }
    };
    zoom_minimize(&f, &vec![0.0; d - 1], &vec![1.0; d - 1], 41, 30).1
}

pub fn lu_det(m: &Matrix) -> f64 {
    m.clone().lu().determinant()
}

pub fn min_symmetric_eigenvalue(m: &Matrix) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.min()
}
