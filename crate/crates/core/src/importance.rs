//! Importance scores from L1-penalised regression on `[X⁰, X¹, …, X^κ]`.
//!
//! Columns are standardised and fitted by coordinate descent. Within each
//! dimension the copies are visited in an order keyed on column content and
//! the seed, never on copy index, so relabelling the copies relabels the
//! coefficients and nothing else.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{check_family, MultiKnockoffSample};
use crate::linalg::Matrix;
use crate::rng::{derive_seed, label, mix64};
use crate::swap::SwapFamily;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[serde(alias = "linear")]
    LinearLasso,
    #[serde(alias = "logistic")]
    LogisticLasso,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::LinearLasso => "linear_lasso",
            ModelKind::LogisticLasso => "logistic_lasso",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" | "linear_lasso" | "linear-lasso" => Ok(ModelKind::LinearLasso),
            "logistic" | "logistic_lasso" | "logistic-lasso" => Ok(ModelKind::LogisticLasso),
            other => Err(Error::Config(format!("unknown model kind '{other}'"))),
        }
    }
}

/// How the penalty is picked.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaChoice {
    /// Log-spaced grid from `λ_max` down to `grid_ratio · λ_max`.
    Default,
    /// Explicit grid, searched from the largest value down.
    Grid(Vec<f64>),
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub grid_len: usize,
    pub grid_ratio: f64,
    pub max_sweeps: usize,
    pub cd_tol: f64,
    /// Relative duality gap accepted once coefficient changes stall, as they
    /// do along the flat directions of nearly collinear columns.
    pub gap_tol: f64,
    pub max_outer: usize,
    pub outer_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            grid_len: 50,
            grid_ratio: 1e-3,
            max_sweeps: 20_000,
            cd_tol: 1e-8,
            gap_tol: 1e-5,
            max_outer: 100,
            outer_tol: 1e-7,
        }
    }
}

/// `T^k_i = |β̂_{(k,i)}|` on the standardised scale, stored `d × (κ+1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceScores {
    pub scores: Matrix,
    pub lambda_used: f64,
    pub model_kind: ModelKind,
    pub nonzeros: usize,
}

impl ImportanceScores {
    pub fn from_table(scores: Matrix, model_kind: ModelKind) -> Result<Self> {
        if let Some(v) = scores.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::Domain(format!("scores must be finite and nonnegative, got {v}")));
        }
        let nonzeros = scores.iter().filter(|v| **v > 0.0).count();
        Ok(Self { scores, lambda_used: f64::NAN, model_kind, nonzeros })
    }

    pub fn dim(&self) -> usize {
        self.scores.nrows()
    }

    pub fn kappa(&self) -> usize {
        self.scores.ncols() - 1
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.scores.row(i).iter().copied().collect()
    }
}

/// Centred, unit-variance columns (population scaling), stored column-major.
#[derive(Clone, Debug)]
pub struct Standardized {
    pub n: usize,
    pub p: usize,
    pub data: Vec<f64>,
    pub means: Vec<f64>,
    /// Zero for constant columns, which are left at zero.
    pub scales: Vec<f64>,
}

impl Standardized {
    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.n..(j + 1) * self.n]
    }
}

pub fn standardize(x: &Matrix) -> Standardized {
    let (n, p) = x.shape();
    let mut data = Vec::with_capacity(n * p);
    let mut means = Vec::with_capacity(p);
    let mut scales = Vec::with_capacity(p);
    for col in x.column_iter() {
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        if sd > 1e-12 * (1.0 + mean.abs()) {
            data.extend(col.iter().map(|v| (v - mean) / sd));
            scales.push(sd);
        } else {
            data.extend(std::iter::repeat_n(0.0, n));
            scales.push(0.0);
        }
        means.push(mean);
    }
    Standardized { n, p, data, means, scales }
}

fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Coordinate descent on `(1/2N) Σ w_i (r_i)² + λ‖β‖₁` where `r` is the
/// current residual; unit weights when `w` is `None`.
struct Cd<'a> {
    x: &'a Standardized,
    order: &'a [usize],
    w: Option<&'a [f64]>,
    h: Vec<f64>,
}

impl<'a> Cd<'a> {
    fn new(x: &'a Standardized, order: &'a [usize], w: Option<&'a [f64]>) -> Self {
        let n = x.n as f64;
        let h = (0..x.p)
            .map(|j| {
                if x.scales[j] == 0.0 {
                    return 0.0;
                }
                match w {
                    None => 1.0,
                    Some(w) => x.col(j).iter().zip(w).map(|(v, w)| w * v * v).sum::<f64>() / n,
                }
            })
            .collect();
        Self { x, order, w, h }
    }

    fn update(&self, j: usize, r: &mut [f64], beta: &mut [f64], lambda: f64) -> f64 {
        let h = self.h[j];
        if h == 0.0 {
            return 0.0;
        }
        let col = self.x.col(j);
        let g = match self.w {
            None => dot(col, r),
            Some(w) => col.iter().zip(r.iter()).zip(w).map(|((x, r), w)| w * x * r).sum(),
        } / self.x.n as f64
            + h * beta[j];
        let new = soft_threshold(g, lambda) / h;
        let delta = new - beta[j];
        if delta != 0.0 {
            r.iter_mut().zip(col).for_each(|(r, x)| *r -= delta * x);
            beta[j] = new;
        }
        delta.abs()
    }

    fn update_intercept(&self, r: &mut [f64], b0: &mut f64) -> f64 {
        let w = self.w.expect("intercept updates are weighted");
        let delta = dot(w, r) / w.iter().sum::<f64>();
        r.iter_mut().for_each(|r| *r -= delta);
        *b0 += delta;
        delta.abs()
    }

    fn weighted_dot(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.w {
            None => dot(a, b),
            Some(w) => a.iter().zip(b).zip(w).map(|((a, b), w)| w * a * b).sum(),
        }
    }

    /// Cyclic descent restricted to `active` using Gram updates, so a sweep
    /// costs `O(|A|²)` rather than `O(N|A|)`. The residual is brought up to
    /// date once at the end.
    #[allow(clippy::too_many_arguments)]
    fn active_phase(
        &self,
        active: &[usize],
        r: &mut [f64],
        beta: &mut [f64],
        mut b0: Option<&mut f64>,
        lambda: f64,
        sweeps: &mut usize,
        opts: &FitOptions,
    ) -> Result<bool> {
        let n = self.x.n as f64;
        let m = active.len();
        let ones = vec![1.0; self.x.n];
        // slot m is the intercept column when present
        let cols: Vec<&[f64]> = active
            .iter()
            .map(|&j| self.x.col(j))
            .chain(b0.is_some().then_some(ones.as_slice()))
            .collect();
        let size = cols.len();
        let mut gram = vec![0.0; size * size];
        for a in 0..size {
            let wa: Vec<f64> = match self.w {
                None => cols[a].to_vec(),
                Some(w) => cols[a].iter().zip(w).map(|(x, w)| x * w).collect(),
            };
            for b in a..size {
                let v = dot(&wa, cols[b]) / n;
                gram[a * size + b] = v;
                gram[b * size + a] = v;
            }
        }
        let mut grad: Vec<f64> = cols.iter().map(|c| self.weighted_dot(c, r) / n).collect();
        let start: Vec<f64> = active.iter().map(|&j| beta[j]).collect();
        let start_b0 = b0.as_deref().copied().unwrap_or(0.0);
        let scale = self.weighted_dot(r, r) / (2.0 * n) + lambda * start.iter().map(|b| b.abs()).sum::<f64>();
        let mut stalled = false;
        let mut phase_sweeps = 0;
        loop {
            *sweeps += 1;
            phase_sweeps += 1;
            if *sweeps > opts.max_sweeps {
                return Err(Error::Convergence {
                    solver: "coordinate descent",
                    iterations: *sweeps - 1,
                    last_iterate: beta.to_vec(),
                });
            }
            let mut change: f64 = 0.0;
            for a in 0..m {
                let j = active[a];
                let h = self.h[j];
                if h == 0.0 {
                    continue;
                }
                let new = soft_threshold(grad[a] + h * beta[j], lambda) / h;
                let delta = new - beta[j];
                if delta != 0.0 {
                    beta[j] = new;
                    let row = &gram[a * size..(a + 1) * size];
                    grad.iter_mut().zip(row).for_each(|(g, q)| *g -= delta * q);
                    change = change.max(delta.abs());
                }
            }
            if let Some(b0) = b0.as_deref_mut() {
                let delta = grad[m] / gram[m * size + m];
                *b0 += delta;
                let row = &gram[m * size..(m + 1) * size];
                grad.iter_mut().zip(row).for_each(|(g, q)| *g -= delta * q);
                change = change.max(delta.abs());
            }
            if change < opts.cd_tol {
                break;
            }
            if phase_sweeps % STALL_CHECK == 0 {
                // complementary slackness over the active set
                let gap: f64 = active
                    .iter()
                    .enumerate()
                    .map(|(a, &j)| lambda * beta[j].abs() - beta[j] * grad[a])
                    .sum();
                if gap.abs() <= opts.gap_tol * scale {
                    stalled = true;
                    break;
                }
            }
        }
        for (a, &j) in active.iter().enumerate() {
            let delta = beta[j] - start[a];
            if delta != 0.0 {
                r.iter_mut().zip(self.x.col(j)).for_each(|(r, x)| *r -= delta * x);
            }
        }
        if let Some(b0) = b0 {
            let delta = *b0 - start_b0;
            r.iter_mut().for_each(|r| *r -= delta);
        }
        Ok(stalled)
    }

    /// `(gap, primal)` for the weighted least-squares subproblem, with the
    /// dual point obtained by rescaling the residual into the feasible set.
    fn duality_gap(&self, r: &[f64], beta: &[f64], lambda: f64) -> (f64, f64) {
        let n = self.x.n as f64;
        let c = self
            .order
            .iter()
            .filter(|&&j| self.h[j] > 0.0)
            .map(|&j| self.weighted_dot(self.x.col(j), r).abs() / n)
            .fold(0.0, f64::max);
        let s = if c > lambda { lambda / c } else { 1.0 };
        let mut fitted = vec![0.0; self.x.n];
        let mut l1 = 0.0;
        for &j in self.order {
            if beta[j] != 0.0 {
                fitted.iter_mut().zip(self.x.col(j)).for_each(|(f, v)| *f += beta[j] * v);
                l1 += beta[j].abs();
            }
        }
        let (mut rr, mut zv, mut vv) = (0.0, 0.0, 0.0);
        for i in 0..self.x.n {
            let w = self.w.map_or(1.0, |w| w[i]);
            let z = r[i] + fitted[i];
            let nu = s * r[i];
            rr += w * r[i] * r[i];
            zv += w * z * nu;
            vv += w * nu * nu;
        }
        let primal = rr / (2.0 * n) + lambda * l1;
        let dual = (2.0 * zv - vv) / (2.0 * n);
        (primal - dual, primal)
    }

    fn run(
        &self,
        r: &mut [f64],
        beta: &mut [f64],
        mut b0: Option<&mut f64>,
        lambda: f64,
        opts: &FitOptions,
    ) -> Result<bool> {
        let mut sweeps = 0;
        let mut stalled = false;
        loop {
            sweeps += 1;
            if sweeps > opts.max_sweeps {
                return Err(Error::Convergence {
                    solver: "coordinate descent",
                    iterations: sweeps - 1,
                    last_iterate: beta.to_vec(),
                });
            }
            let mut change: f64 = 0.0;
            for &j in self.order {
                change = change.max(self.update(j, r, beta, lambda));
            }
            if let Some(b0) = b0.as_deref_mut() {
                change = change.max(self.update_intercept(r, b0));
            }
            if change < opts.cd_tol {
                return Ok(false);
            }
            if stalled {
                let (gap, primal) = self.duality_gap(r, beta, lambda);
                if gap <= opts.gap_tol * primal {
                    return Ok(true);
                }
            }
            let active: Vec<usize> = self.order.iter().copied().filter(|&j| beta[j] != 0.0).collect();
            stalled = self.active_phase(&active, r, beta, b0.as_deref_mut(), lambda, &mut sweeps, opts)?;
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LassoFit {
    pub intercept: f64,
    /// Coefficients on the standardised columns.
    pub beta: Vec<f64>,
    pub lambda: f64,
}

impl LassoFit {
    pub fn nonzeros(&self) -> usize {
        self.beta.iter().filter(|b| **b != 0.0).count()
    }
}

/// `max_j |x_jᵀ (y − ȳ)| / N` on standardised columns.
pub fn lambda_max(x: &Standardized, y: &[f64]) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let yc: Vec<f64> = y.iter().map(|v| v - mean).collect();
    (0..x.p)
        .map(|j| dot(x.col(j), &yc).abs() / x.n as f64)
        .fold(0.0, f64::max)
}

pub fn lambda_grid(lmax: f64, len: usize, ratio: f64) -> Vec<f64> {
    if len <= 1 {
        return vec![lmax];
    }
    (0..len)
        .map(|k| lmax * ratio.powf(k as f64 / (len - 1) as f64))
        .collect()
}

struct LinearState {
    beta: Vec<f64>,
    r: Vec<f64>,
    mean: f64,
}

impl LinearState {
    fn new(y: &[f64], p: usize) -> Self {
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        Self { beta: vec![0.0; p], r: y.iter().map(|v| v - mean).collect(), mean }
    }

    fn fit(&mut self, x: &Standardized, order: &[usize], lambda: f64, opts: &FitOptions) -> Result<LassoFit> {
        Cd::new(x, order, None).run(&mut self.r, &mut self.beta, None, lambda, opts)?;
        Ok(LassoFit { intercept: self.mean, beta: self.beta.clone(), lambda })
    }
}

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

const MIN_WEIGHT: f64 = 1e-5;

/// Active-phase sweeps between stall checks.
const STALL_CHECK: usize = 100;

struct LogisticState {
    beta: Vec<f64>,
    b0: f64,
}

impl LogisticState {
    fn new(y: &[f64], p: usize) -> Self {
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let mean = mean.clamp(1e-10, 1.0 - 1e-10);
        Self { beta: vec![0.0; p], b0: (mean / (1.0 - mean)).ln() }
    }

    fn linear_predictor(x: &Standardized, beta: &[f64], b0: f64) -> Vec<f64> {
        let mut eta = vec![b0; x.n];
        for (j, b) in beta.iter().enumerate() {
            if *b != 0.0 {
                eta.iter_mut().zip(x.col(j)).for_each(|(e, v)| *e += b * v);
            }
        }
        eta
    }

    fn objective(x: &Standardized, y: &[f64], beta: &[f64], b0: f64, lambda: f64) -> f64 {
        let eta = Self::linear_predictor(x, beta, b0);
        let loss: f64 = eta.iter().zip(y).map(|(e, y)| softplus(*e) - y * e).sum::<f64>() / x.n as f64;
        loss + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
    }

    /// Iteratively reweighted coordinate descent with a step-halving guard.
    fn fit(&mut self, x: &Standardized, y: &[f64], order: &[usize], lambda: f64, opts: &FitOptions) -> Result<LassoFit> {
        let mut current = Self::objective(x, y, &self.beta, self.b0, lambda);
        for _ in 0..opts.max_outer {
            let eta = Self::linear_predictor(x, &self.beta, self.b0);
            let mut w = Vec::with_capacity(x.n);
            let mut r = Vec::with_capacity(x.n);
            for (e, yi) in eta.iter().zip(y) {
                let p = sigmoid(*e);
                let wi = (p * (1.0 - p)).max(MIN_WEIGHT);
                w.push(wi);
                r.push((yi - p) / wi);
            }
            let mut beta = self.beta.clone();
            let mut b0 = self.b0;
            let stalled = Cd::new(x, order, Some(&w)).run(&mut r, &mut beta, Some(&mut b0), lambda, opts)?;

            let mut step = 1.0;
            let (mut cand_beta, mut cand_b0, mut cand_obj);
            loop {
                cand_beta = self.beta.iter().zip(&beta).map(|(a, b)| a + step * (b - a)).collect::<Vec<_>>();
                cand_b0 = self.b0 + step * (b0 - self.b0);
                cand_obj = Self::objective(x, y, &cand_beta, cand_b0, lambda);
                if cand_obj <= current + 1e-12 * current.abs() || step < 1e-6 {
                    break;
                }
                step *= 0.5;
            }
            let change = self
                .beta
                .iter()
                .zip(&cand_beta)
                .map(|(a, b)| (a - b).abs())
                .fold((self.b0 - cand_b0).abs(), f64::max);
            let settled = stalled && (current - cand_obj).abs() <= opts.gap_tol * cand_obj.abs();
            self.beta = cand_beta;
            self.b0 = cand_b0;
            current = cand_obj;
            if change < opts.outer_tol || settled {
                return Ok(LassoFit { intercept: self.b0, beta: self.beta.clone(), lambda });
            }
        }
        Err(Error::Convergence {
            solver: "logistic lasso",
            iterations: opts.max_outer,
            last_iterate: self.beta.clone(),
        })
    }
}

fn natural_order(p: usize) -> Vec<usize> {
    (0..p).collect()
}

/// Linear lasso `(1/2N)‖y − ȳ − Xβ‖² + λ‖β‖₁` on standardised columns.
pub fn fit_linear_lasso(x: &Standardized, y: &[f64], lambda: f64, opts: &FitOptions) -> Result<LassoFit> {
    LinearState::new(y, x.p).fit(x, &natural_order(x.p), lambda, opts)
}

/// Logistic lasso `−(1/N) loglik + λ‖β‖₁` with free intercept.
pub fn fit_logistic_lasso(x: &Standardized, y: &[f64], lambda: f64, opts: &FitOptions) -> Result<LassoFit> {
    check_binary(y)?;
    LogisticState::new(y, x.p).fit(x, y, &natural_order(x.p), lambda, opts)
}

fn check_binary(y: &[f64]) -> Result<()> {
    if y.iter().any(|v| *v != 0.0 && *v != 1.0) {
        return Err(Error::Domain("logistic response must be 0/1".into()));
    }
    Ok(())
}

/// Dimension-major visiting order; copies within a dimension sorted by a
/// seeded hash of their column content.
pub fn canonical_order(design: &MultiKnockoffSample, seed: u64) -> Vec<usize> {
    let key = derive_seed(seed, label::SCORES);
    let (d, kappa) = (design.d, design.kappa);
    let mut order = Vec::with_capacity((kappa + 1) * d);
    for i in 0..d {
        let mut copies: Vec<(u64, usize)> = (0..=kappa)
            .map(|k| {
                let col = design.data.column(design.column_index(k, i));
                let h = col.iter().fold(key, |h, v| mix64(h ^ v.to_bits()));
                (h, k)
            })
            .collect();
        copies.sort_unstable();
        order.extend(copies.into_iter().map(|(_, k)| design.column_index(k, i)));
    }
    order
}

pub fn fit_importance(
    design: &MultiKnockoffSample,
    y: &[f64],
    kind: ModelKind,
    lambda: &LambdaChoice,
    seed: u64,
) -> Result<ImportanceScores> {
    fit_importance_with(design, y, kind, lambda, seed, &FitOptions::default())
}

pub fn fit_importance_with(
    design: &MultiKnockoffSample,
    y: &[f64],
    kind: ModelKind,
    lambda: &LambdaChoice,
    seed: u64,
    opts: &FitOptions,
) -> Result<ImportanceScores> {
    let (n, d, kappa) = (design.n, design.d, design.kappa);
    if y.len() != n {
        return Err(Error::Dimension(format!("response has length {}, design has {n} rows", y.len())));
    }
    if n < 10 {
        return Err(Error::Domain(format!("need at least 10 samples, got {n}")));
    }
    if kind == ModelKind::LogisticLasso {
        check_binary(y)?;
    }
    let x = standardize(&design.data);
    let order = canonical_order(design, seed);
    let lmax = lambda_max(&x, y);
    let zero = |lambda_used| ImportanceScores {
        scores: Matrix::zeros(d, kappa + 1),
        lambda_used,
        model_kind: kind,
        nonzeros: 0,
    };
    if lmax == 0.0 {
        // constant response: the intercept explains everything
        return Ok(zero(0.0));
    }
    let grid = match lambda {
        LambdaChoice::Default => lambda_grid(lmax, opts.grid_len, opts.grid_ratio),
        LambdaChoice::Grid(g) => {
            let mut g = g.clone();
            g.sort_by(|a, b| b.total_cmp(a));
            g
        }
        LambdaChoice::Fixed(l) => vec![*l],
    };
    if grid.is_empty() || grid.iter().any(|l| !(*l >= 0.0)) {
        return Err(Error::Config("lambda values must be nonnegative and nonempty".into()));
    }
    let target = (2 * d).min(n / 2);
    let mut chosen = None;
    match kind {
        ModelKind::LinearLasso => {
            let mut state = LinearState::new(y, x.p);
            for &l in &grid {
                let fit = state.fit(&x, &order, l, opts)?;
                let done = fit.nonzeros() >= target;
                chosen = Some(fit);
                if done {
                    break;
                }
            }
        }
        ModelKind::LogisticLasso => {
            let mut state = LogisticState::new(y, x.p);
            for &l in &grid {
                let fit = state.fit(&x, y, &order, l, opts)?;
                let done = fit.nonzeros() >= target;
                chosen = Some(fit);
                if done {
                    break;
                }
            }
        }
    }
    let fit = chosen.expect("grid is nonempty");
    let scores = Matrix::from_fn(d, kappa + 1, |i, k| fit.beta[design.column_index(k, i)].abs());
    Ok(ImportanceScores {
        scores,
        lambda_used: fit.lambda,
        model_kind: kind,
        nonzeros: fit.nonzeros(),
    })
}

/// Undo a swap on a score table: slot `k` of dimension `i` was copy `σ_i(k)`.
pub fn unswap_scores(scores: &Matrix, family: &SwapFamily) -> Matrix {
    let mut out = scores.clone();
    for i in 0..scores.nrows() {
        for k in 0..scores.ncols() {
            out[(i, family.source(i, k))] = scores[(i, k)];
        }
    }
    out
}

/// Max |T̄(swapped design) swapped back − T̄(design)|.
pub fn swap_equivariance_test(
    design: &MultiKnockoffSample,
    y: &[f64],
    family: &SwapFamily,
    kind: ModelKind,
    lambda: &LambdaChoice,
    seed: u64,
) -> Result<f64> {
    check_family(family, design.d, design.kappa)?;
    let plain = fit_importance(design, y, kind, lambda, seed)?;
    let swapped = fit_importance(&design.swapped(family)?, y, kind, lambda, seed)?;
    let back = unswap_scores(&swapped.scores, family);
    Ok((back - plain.scores).abs().max())
}
