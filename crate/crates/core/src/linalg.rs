//! Dense symmetric linear algebra: Cholesky factorizations, minimum
//! eigenvalue, feasibility of a knockoff diagonal, and assembly of the
//! multi-knockoff joint covariance.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative (Frobenius) asymmetry accepted by the general-purpose routines.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Relative asymmetry and diagonal deviation accepted for correlation matrices.
pub const CORRELATION_TOL: f64 = 1e-12;
/// Smallest Cholesky pivot accepted as "strictly" positive definite.
pub const FEASIBILITY_PIVOT_TOL: f64 = 1e-10;
/// Pivots below this (relative to the largest diagonal) are zeroed by [`psd_factor`].
pub const PSD_ZERO_TOL: f64 = 1e-12;
/// Negative pivots below `-PSD_NEGATIVE_TOL` make [`psd_factor`] fail.
pub const PSD_NEGATIVE_TOL: f64 = 1e-8;

fn check_square(m: &Matrix, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() == 0 {
        return Err(Error::Dimension(format!("{what} is empty")));
    }
    Ok(())
}

/// Largest |m_ij - m_ji| relative to the Frobenius norm.
pub fn relative_asymmetry(m: &Matrix) -> f64 {
    let n = m.nrows();
    let norm = m.norm().max(f64::MIN_POSITIVE);
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst / norm
}

fn check_symmetric(m: &Matrix, tol: f64, what: &str) -> Result<()> {
    check_square(m, what)?;
    let asym = relative_asymmetry(m);
    if !(asym <= tol) {
        return Err(Error::Dimension(format!(
            "{what} is not symmetric (relative asymmetry {asym:e})"
        )));
    }
    Ok(())
}

/// Plain Cholesky; fails at the first pivot that is not strictly above `floor`.
fn cholesky_with_floor(m: &Matrix, floor: f64) -> std::result::Result<Matrix, (usize, f64)> {
    let n = m.nrows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut pivot = m[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if !(pivot > floor) {
            return Err((j, pivot));
        }
        let diag = pivot.sqrt();
        l[(j, j)] = diag;
        for i in (j + 1)..n {
            let mut v = m[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / diag;
        }
    }
    Ok(l)
}

/// Lower-triangular `L` with `L Lᵀ = m`, or `None` when `m` is not positive definite.
pub fn cholesky(m: &Matrix) -> Result<Option<Matrix>> {
    check_symmetric(m, SYMMETRY_TOL, "cholesky input")?;
    Ok(cholesky_with_floor(m, 0.0).ok())
}

/// Cholesky that reports the offending pivot instead of a bare flag.
pub fn cholesky_strict(m: &Matrix, floor: f64) -> Result<Matrix> {
    check_symmetric(m, SYMMETRY_TOL, "cholesky input")?;
    cholesky_with_floor(m, floor).map_err(|(pivot, value)| Error::NotPositiveDefinite { pivot, value })
}

/// Positive definite with every Cholesky pivot strictly above `floor`.
pub fn is_positive_definite(m: &Matrix, floor: f64) -> Result<bool> {
    check_symmetric(m, SYMMETRY_TOL, "matrix")?;
    Ok(cholesky_with_floor(m, floor).is_ok())
}

/// Solve `L Lᵀ X = B` given the lower Cholesky factor.
pub fn cholesky_solve(l: &Matrix, b: &Matrix) -> Matrix {
    let y = l
        .solve_lower_triangular(b)
        .expect("cholesky factor has a nonzero diagonal");
    l.tr_solve_lower_triangular(&y)
        .expect("cholesky factor has a nonzero diagonal")
}

pub fn cholesky_inverse(l: &Matrix) -> Matrix {
    let n = l.nrows();
    cholesky_solve(l, &Matrix::identity(n, n))
}

pub fn log_det_from_cholesky(l: &Matrix) -> f64 {
    2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// Smallest eigenvalue of a symmetric matrix (full symmetric eigendecomposition).
pub fn min_eigenvalue(m: &Matrix) -> Result<f64> {
    check_symmetric(m, SYMMETRY_TOL, "eigenvalue input")?;
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    Ok(eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Semidefinite-tolerant factor `F` with `F Fᵀ ≈ m`.
///
/// Uses Cholesky with complete diagonal pivoting. Once every remaining
/// pivot is below `PSD_ZERO_TOL` (scaled by the largest diagonal entry) the
/// remaining columns are zero, so degenerate directions carry no noise.
#[derive(Clone, Debug)]
pub struct PsdFactor {
    pub factor: Matrix,
    pub rank: usize,
}

pub fn psd_factor(m: &Matrix) -> Result<PsdFactor> {
    check_symmetric(m, SYMMETRY_TOL, "covariance")?;
    let n = m.nrows();
    let scale = (0..n).map(|i| m[(i, i)].abs()).fold(1.0_f64, f64::max);
    let zero_tol = PSD_ZERO_TOL * scale;
    let neg_tol = PSD_NEGATIVE_TOL * scale;

    let mut perm: Vec<usize> = (0..n).collect();
    let mut residual: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    // l is stored in pivoted row order: row k corresponds to perm[k].
    let mut l = Matrix::zeros(n, n);
    let mut rank = 0;
    for k in 0..n {
        let (p, &best) = residual[k..]
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, v)| (i + k, v))
            .expect("nonempty");
        if best <= zero_tol {
            if let Some((i, &worst)) = residual[k..]
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
            {
                if worst < -neg_tol {
                    return Err(Error::NotPositiveDefinite {
                        pivot: perm[i + k],
                        value: worst,
                    });
                }
            }
            break;
        }
        perm.swap(k, p);
        residual.swap(k, p);
        l.swap_rows(k, p);
        let diag = best.sqrt();
        l[(k, k)] = diag;
        let pk = perm[k];
        for i in (k + 1)..n {
            let pi = perm[i];
            let mut v = m[(pi, pk)];
            for j in 0..k {
                v -= l[(i, j)] * l[(k, j)];
            }
            let lik = v / diag;
            l[(i, k)] = lik;
            residual[i] -= lik * lik;
        }
        rank += 1;
    }
    let mut factor = Matrix::zeros(n, n);
    for (k, &orig) in perm.iter().enumerate() {
        for j in 0..rank {
            factor[(orig, j)] = l[(k, j)];
        }
    }
    Ok(PsdFactor { factor, rank })
}

/// Symmetric positive-definite matrix with unit diagonal.
#[derive(Clone, Debug)]
pub struct CorrelationMatrix {
    entries: Matrix,
    chol: Matrix,
}

impl CorrelationMatrix {
    pub fn new(entries: Matrix) -> Result<Self> {
        check_symmetric(&entries, CORRELATION_TOL, "correlation matrix")?;
        for i in 0..entries.nrows() {
            let v = entries[(i, i)];
            if !((v - 1.0).abs() <= CORRELATION_TOL) {
                return Err(Error::Domain(format!(
                    "correlation matrix diagonal entry {i} is {v}, expected 1"
                )));
            }
        }
        let chol = cholesky_with_floor(&entries, 0.0)
            .map_err(|(pivot, value)| Error::NotPositiveDefinite { pivot, value })?;
        Ok(Self { entries, chol })
    }

    /// Rescale a covariance matrix to unit diagonal.
    pub fn from_covariance(cov: &Matrix) -> Result<Self> {
        check_symmetric(cov, SYMMETRY_TOL, "covariance")?;
        let n = cov.nrows();
        let mut inv_sd = Vec::with_capacity(n);
        for i in 0..n {
            let v = cov[(i, i)];
            if !(v > 0.0) {
                return Err(Error::Domain(format!("variance {i} is {v}")));
            }
            inv_sd.push(1.0 / v.sqrt());
        }
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
            for j in 0..i {
                let c = 0.5 * (cov[(i, j)] + cov[(j, i)]) * inv_sd[i] * inv_sd[j];
                m[(i, j)] = c;
                m[(j, i)] = c;
            }
        }
        Self::new(m)
    }

    pub fn identity(d: usize) -> Self {
        let m = Matrix::identity(d, d);
        Self {
            chol: m.clone(),
            entries: m,
        }
    }

    /// 2×2 correlation with off-diagonal `rho`.
    pub fn pair(rho: f64) -> Result<Self> {
        Self::new(Matrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]))
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.entries
    }

    /// Lower Cholesky factor of the matrix.
    pub fn cholesky_factor(&self) -> &Matrix {
        &self.chol
    }

    pub fn is_identity(&self) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..n).all(|j| i == j || self.entries[(i, j)] == 0.0))
    }

    /// `Σ⁻¹ B` through the stored factor.
    pub fn solve(&self, b: &Matrix) -> Matrix {
        cholesky_solve(&self.chol, b)
    }
}

/// Feature law N(μ, Σ).
#[derive(Clone, Debug)]
pub struct GaussianModel {
    mean: Vector,
    covariance: CorrelationMatrix,
}

impl GaussianModel {
    pub fn new(mean: Vector, covariance: CorrelationMatrix) -> Result<Self> {
        if mean.len() != covariance.dim() {
            return Err(Error::Dimension(format!(
                "mean has length {}, covariance is {}x{}",
                mean.len(),
                covariance.dim(),
                covariance.dim()
            )));
        }
        Ok(Self { mean, covariance })
    }

    pub fn centered(covariance: CorrelationMatrix) -> Self {
        Self {
            mean: Vector::zeros(covariance.dim()),
            covariance,
        }
    }

    pub fn mean(&self) -> &Vector {
        &self.mean
    }

    pub fn covariance(&self) -> &CorrelationMatrix {
        &self.covariance
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Covariance of `(X⁰, X¹, …, X^κ)`: Σ on diagonal blocks, Σ − D(s) elsewhere.
#[derive(Clone, Debug)]
pub struct JointCovariance {
    pub kappa: usize,
    pub base: CorrelationMatrix,
    pub diag: Vec<f64>,
    pub entries: Matrix,
}

fn check_diag(sigma: &CorrelationMatrix, s: &[f64]) -> Result<()> {
    if s.len() != sigma.dim() {
        return Err(Error::Dimension(format!(
            "diagonal has length {}, covariance dimension is {}",
            s.len(),
            sigma.dim()
        )));
    }
    Ok(())
}

fn check_kappa(kappa: usize) -> Result<()> {
    if kappa == 0 {
        return Err(Error::Domain("kappa must be at least 1".into()));
    }
    Ok(())
}

pub fn assemble_joint_covariance(
    sigma: &CorrelationMatrix,
    s: &[f64],
    kappa: usize,
) -> Result<JointCovariance> {
    check_diag(sigma, s)?;
    check_kappa(kappa)?;
    if let Some(v) = s.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::Domain(format!("diagonal entries must be nonnegative, got {v}")));
    }
    let d = sigma.dim();
    let blocks = kappa + 1;
    let base = sigma.matrix();
    let mut entries = Matrix::zeros(blocks * d, blocks * d);
    for a in 0..blocks {
        for b in 0..blocks {
            for i in 0..d {
                for j in 0..d {
                    let mut v = base[(i, j)];
                    if a != b && i == j {
                        v -= s[i];
                    }
                    entries[(a * d + i, b * d + j)] = v;
                }
            }
        }
    }
    Ok(JointCovariance {
        kappa,
        base: sigma.clone(),
        diag: s.to_vec(),
        entries,
    })
}

/// `(κ+1)/κ`: the scaling of Σ in the multi-knockoff feasibility constraint.
pub fn feasibility_scale(kappa: usize) -> f64 {
    (kappa as f64 + 1.0) / kappa as f64
}

/// `((κ+1)/κ) Σ − D(s)`.
pub fn slack_matrix(sigma: &CorrelationMatrix, s: &[f64], kappa: usize) -> Result<Matrix> {
    check_diag(sigma, s)?;
    check_kappa(kappa)?;
    let mut r = sigma.matrix() * feasibility_scale(kappa);
    for (i, v) in s.iter().enumerate() {
        r[(i, i)] -= v;
    }
    Ok(r)
}

/// `s ≥ 0` and `((κ+1)/κ) Σ − D(s)` strictly positive definite.
pub fn is_feasible(sigma: &CorrelationMatrix, s: &[f64], kappa: usize) -> Result<bool> {
    let r = slack_matrix(sigma, s, kappa)?;
    if s.iter().any(|v| !(*v >= 0.0)) {
        return Ok(false);
    }
    Ok(cholesky_with_floor(&r, FEASIBILITY_PIVOT_TOL).is_ok())
}
