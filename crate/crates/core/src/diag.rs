//! Diagonal constructions D(s) for κ multi-knockoffs.
//!
//! Three programs share the feasible set `((κ+1)/κ) Σ − D(s) ≻ 0, s ≥ 0`:
//!
//! * equicorrelated: largest common `s`, closed form `((κ+1)/κ) λ_min(Σ)`;
//! * SDP: minimise `Σ |1 − s_i|`, solved with a log-barrier Newton method;
//! * entropy: minimise `−log det(((κ+1)/κ) Σ − D(s)) − κ Σ log s_i`, solved
//!   with damped Newton.
//!
//! Every solution is shrunk by the factor `1 − BACKOFF` so that downstream
//! conditional covariances factor cleanly.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    cholesky_inverse, cholesky_solve, cholesky_strict, feasibility_scale, is_feasible,
    log_det_from_cholesky, min_eigenvalue, slack_matrix, CorrelationMatrix, Matrix,
};

pub const BACKOFF: f64 = 1e-6;
/// Entries below this are "undiscoverable": the knockoff equals the original.
pub const UNDISCOVERABLE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiagMethod {
    Entropy,
    Sdp,
    #[serde(alias = "equi")]
    Equicorrelated,
}

impl DiagMethod {
    pub const ALL: [DiagMethod; 3] = [DiagMethod::Entropy, DiagMethod::Sdp, DiagMethod::Equicorrelated];

    pub fn name(self) -> &'static str {
        match self {
            DiagMethod::Entropy => "entropy",
            DiagMethod::Sdp => "sdp",
            DiagMethod::Equicorrelated => "equi",
        }
    }
}

impl fmt::Display for DiagMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DiagMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "entropy" => Ok(DiagMethod::Entropy),
            "sdp" => Ok(DiagMethod::Sdp),
            "equi" | "equicorrelated" => Ok(DiagMethod::Equicorrelated),
            other => Err(Error::Config(format!("unknown diagonal method `{other}`"))),
        }
    }
}

/// Solved diagonal `s` together with how it was obtained.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiagonalS {
    pub s: Vec<f64>,
    pub kappa: usize,
    pub method: DiagMethod,
    /// Objective of the method's program at the solution (before backoff).
    pub objective_value: f64,
    /// Entropy only: max_j |∂objective/∂s_j| at the solution (before backoff).
    pub kkt_residual: Option<f64>,
    pub backoff_applied: bool,
    /// Multiplicative factor applied to the raw optimum.
    pub backoff_factor: f64,
    pub iterations: usize,
}

impl DiagonalS {
    pub fn dim(&self) -> usize {
        self.s.len()
    }

    /// The optimiser's output before the backoff factor was applied.
    pub fn pre_backoff(&self) -> Vec<f64> {
        self.s.iter().map(|v| v / self.backoff_factor).collect()
    }

    /// `D(s) = 0`: a degenerate diagonal where every knockoff copies its original.
    pub fn zeros(d: usize, kappa: usize, method: DiagMethod) -> Self {
        Self {
            s: vec![0.0; d],
            kappa,
            method,
            objective_value: f64::NAN,
            kkt_residual: None,
            backoff_applied: false,
            backoff_factor: 1.0,
            iterations: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolverOptions {
    pub max_newton_iterations: usize,
    /// Entropy stops once max |gradient| falls below this.
    pub entropy_grad_tol: f64,
    /// SDP stops once the barrier duality-gap bound falls below this.
    pub sdp_gap_tol: f64,
    /// Drop the `s ≤ 1` restriction for SDP and use the epigraph of |1 − s|.
    pub sdp_allow_above_one: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_newton_iterations: 500,
            entropy_grad_tol: 1e-8,
            sdp_gap_tol: 1e-10,
            sdp_allow_above_one: false,
        }
    }
}

pub fn solve_diag(sigma: &CorrelationMatrix, kappa: usize, method: DiagMethod) -> Result<DiagonalS> {
    solve_diag_with(sigma, kappa, method, &SolverOptions::default())
}

pub fn solve_diag_with(
    sigma: &CorrelationMatrix,
    kappa: usize,
    method: DiagMethod,
    opts: &SolverOptions,
) -> Result<DiagonalS> {
    match method {
        DiagMethod::Entropy => entropy_diag_with(sigma, kappa, opts),
        DiagMethod::Sdp => sdp_diag_with(sigma, kappa, opts),
        DiagMethod::Equicorrelated => equi_diag(sigma, kappa, true),
    }
}

fn check_kappa(kappa: usize) -> Result<()> {
    if kappa == 0 {
        Err(Error::Domain("kappa must be at least 1".into()))
    } else {
        Ok(())
    }
}

/// Shrink `raw` until it is strictly feasible. The first attempt uses the
/// nominal factor; a few stronger shrinks cover near-singular Σ.
fn back_off(sigma: &CorrelationMatrix, raw: &[f64], kappa: usize) -> Result<(Vec<f64>, f64)> {
    let mut eps = BACKOFF;
    while eps <= 1e-2 {
        let factor = 1.0 - eps;
        let s: Vec<f64> = raw.iter().map(|v| v * factor).collect();
        if is_feasible(sigma, &s, kappa)? {
            return Ok((s, factor));
        }
        eps *= 10.0;
    }
    Err(Error::Infeasible(
        "solution remains infeasible after backing off by 1e-2".into(),
    ))
}

/// Closed-form equicorrelated diagonal `s* = ((κ+1)/κ) λ_min(Σ)`.
pub fn equi_diag(sigma: &CorrelationMatrix, kappa: usize, clamp_to_one: bool) -> Result<DiagonalS> {
    check_kappa(kappa)?;
    let lambda = min_eigenvalue(sigma.matrix())?;
    let mut star = feasibility_scale(kappa) * lambda;
    if clamp_to_one {
        star = star.min(1.0);
    }
    let raw = vec![star; sigma.dim()];
    let (s, factor) = back_off(sigma, &raw, kappa)?;
    Ok(DiagonalS {
        s,
        kappa,
        method: DiagMethod::Equicorrelated,
        objective_value: star,
        kkt_residual: None,
        backoff_applied: true,
        backoff_factor: factor,
        iterations: 0,
    })
}

/// Strictly feasible starting point: half the (clamped) equicorrelated value.
fn initial_point(sigma: &CorrelationMatrix, kappa: usize) -> Result<Vec<f64>> {
    let lambda = min_eigenvalue(sigma.matrix())?;
    let star = (feasibility_scale(kappa) * lambda).min(1.0);
    Ok(vec![0.5 * star; sigma.dim()])
}

/// Objective of the entropy program, or `None` outside the domain.
pub fn entropy_objective(sigma: &CorrelationMatrix, s: &[f64], kappa: usize) -> Option<f64> {
    if s.iter().any(|v| !(*v > 0.0)) {
        return None;
    }
    let r = slack_matrix(sigma, s, kappa).ok()?;
    let l = cholesky_strict(&r, 0.0).ok()?;
    let logs: f64 = s.iter().map(|v| v.ln()).sum();
    Some(-log_det_from_cholesky(&l) - kappa as f64 * logs)
}

/// Gradient of the entropy objective: `(R⁻¹)_jj − κ / s_j`.
pub fn entropy_gradient(sigma: &CorrelationMatrix, s: &[f64], kappa: usize) -> Option<Vec<f64>> {
    let r = slack_matrix(sigma, s, kappa).ok()?;
    let l = cholesky_strict(&r, 0.0).ok()?;
    let rinv = cholesky_inverse(&l);
    Some(
        s.iter()
            .enumerate()
            .map(|(j, v)| rinv[(j, j)] - kappa as f64 / v)
            .collect(),
    )
}

/// Provable lower bound `κ λ_min(R(s))` on `min_j s_j` at the entropy optimum,
/// from stationarity `s_j = κ / (R⁻¹)_jj` and `(R⁻¹)_jj ≤ 1/λ_min(R)`.
pub fn entropy_lower_bound(sigma: &CorrelationMatrix, s: &[f64], kappa: usize) -> Result<f64> {
    let r = slack_matrix(sigma, s, kappa)?;
    Ok(kappa as f64 * min_eigenvalue(&r)?)
}

pub fn sdp_objective(s: &[f64]) -> f64 {
    s.iter().map(|v| (1.0 - v).abs()).sum()
}

/// Smooth convex function `cᵀx + φ(x)` on an open domain, for the Newton
/// driver below. `value` returns `φ` only; `derivatives` cover the whole
/// function. Keeping the (possibly huge) linear term apart lets the line
/// search compare values without cancellation.
trait Smooth {
    fn linear_term(&self) -> Option<&[f64]> {
        None
    }
    fn value(&self, x: &[f64]) -> Option<f64>;
    fn derivatives(&self, x: &[f64]) -> Option<(Vec<f64>, Matrix)>;
}

enum Stop {
    Gradient(f64),
    Decrement(f64),
}

struct NewtonOutcome {
    x: Vec<f64>,
    grad: Vec<f64>,
}

/// Newton direction for `H Δ = −g` with Jacobi scaling.
fn newton_step(h: &Matrix, g: &[f64]) -> Option<Vec<f64>> {
    let n = g.len();
    let scale: Vec<f64> = (0..n).map(|i| 1.0 / h[(i, i)].max(f64::MIN_POSITIVE).sqrt()).collect();
    let mut hs = h.clone();
    for i in 0..n {
        for j in 0..n {
            hs[(i, j)] *= scale[i] * scale[j];
        }
    }
    // round-off can make a barrier Hessian lose definiteness near the
    // boundary; retry with a growing diagonal shift
    let mut shift = 0.0;
    let l = loop {
        let mut m = hs.clone();
        for i in 0..n {
            m[(i, i)] += shift;
        }
        if let Ok(l) = cholesky_strict(&m, 0.0) {
            break l;
        }
        shift = if shift == 0.0 { 1e-14 } else { shift * 100.0 };
        if shift > 1e-4 {
            return None;
        }
    };
    let rhs = Matrix::from_iterator(n, 1, (0..n).map(|i| -g[i] * scale[i]));
    let y = cholesky_solve(&l, &rhs);
    Some((0..n).map(|i| y[(i, 0)] * scale[i]).collect())
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

const STALL_ITERATIONS: usize = 12;
const STALL_DECREMENT: f64 = 0.05;

/// Damped Newton with backtracking; iterates never leave the domain.
fn newton_minimize<P: Smooth>(
    problem: &P,
    mut x: Vec<f64>,
    stop: Stop,
    used: &mut usize,
    budget: usize,
    solver: &'static str,
) -> Result<NewtonOutcome> {
    if problem.value(&x).is_none() {
        return Err(Error::Infeasible(format!("{solver}: starting point outside the domain")));
    }
    let mut stage_iterations = 0;
    loop {
        let (grad, hess) = problem.derivatives(&x).ok_or_else(|| {
            Error::Infeasible(format!("{solver}: iterate left the domain"))
        })?;
        if let Stop::Gradient(tol) = stop {
            if max_abs(&grad) <= tol {
                return Ok(NewtonOutcome { x, grad });
            }
        }
        let step = newton_step(&hess, &grad).ok_or(Error::Convergence {
            solver,
            iterations: *used,
            last_iterate: x.clone(),
        })?;
        let slope: f64 = grad.iter().zip(&step).map(|(g, d)| g * d).sum();
        let decrement_sq = -slope;
        if let Stop::Decrement(tol) = stop {
            // Near a singular slack matrix the decrement bottoms out at a
            // round-off floor; a stalled iterate that close is centered.
            let stalled = stage_iterations >= STALL_ITERATIONS && decrement_sq <= STALL_DECREMENT;
            if decrement_sq * 0.5 <= tol || stalled {
                return Ok(NewtonOutcome { x, grad });
            }
        }
        if *used >= budget {
            return Err(Error::Convergence {
                solver,
                iterations: *used,
                last_iterate: x,
            });
        }
        *used += 1;
        stage_iterations += 1;

        // Accept on sufficient decrease, or when the directional derivative
        // at the trial point is still non-positive (by convexity the step
        // then cannot increase the objective). The second test survives the
        // cancellation that swamps value comparisons near the boundary.
        let fx = problem.value(&x).unwrap_or(f64::INFINITY);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..80 {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, d)| a + alpha * d).collect();
            if let Some(ft) = problem.value(&trial) {
                let linear_change = problem
                    .linear_term()
                    .map_or(0.0, |c| alpha * c.iter().zip(&step).map(|(c, d)| c * d).sum::<f64>());
                if linear_change + (ft - fx) <= 0.25 * alpha * slope {
                    accepted = Some(trial);
                    break;
                }
                if let Some((g, _)) = problem.derivatives(&trial) {
                    let dd: f64 = g.iter().zip(&step).map(|(g, d)| g * d).sum();
                    if dd <= 0.0 {
                        accepted = Some(trial);
                        break;
                    }
                }
            }
            alpha *= 0.5;
        }
        match accepted {
            Some(trial) => {
                if trial == x {
                    return Ok(NewtonOutcome { x, grad });
                }
                x = trial;
            }
            None => {
                return Err(Error::Convergence {
                    solver,
                    iterations: *used,
                    last_iterate: x,
                })
            }
        }
    }
}

struct EntropyProblem<'a> {
    sigma: &'a CorrelationMatrix,
    kappa: usize,
}

impl Smooth for EntropyProblem<'_> {
    fn value(&self, x: &[f64]) -> Option<f64> {
        entropy_objective(self.sigma, x, self.kappa)
    }

    fn derivatives(&self, x: &[f64]) -> Option<(Vec<f64>, Matrix)> {
        let d = x.len();
        let k = self.kappa as f64;
        let r = slack_matrix(self.sigma, x, self.kappa).ok()?;
        let rinv = cholesky_inverse(&cholesky_strict(&r, 0.0).ok()?);
        let grad = (0..d).map(|j| rinv[(j, j)] - k / x[j]).collect();
        let mut hess = rinv.component_mul(&rinv);
        for j in 0..d {
            hess[(j, j)] += k / (x[j] * x[j]);
        }
        Some((grad, hess))
    }
}

pub fn entropy_diag(sigma: &CorrelationMatrix, kappa: usize) -> Result<DiagonalS> {
    entropy_diag_with(sigma, kappa, &SolverOptions::default())
}

pub fn entropy_diag_with(
    sigma: &CorrelationMatrix,
    kappa: usize,
    opts: &SolverOptions,
) -> Result<DiagonalS> {
    check_kappa(kappa)?;
    let d = sigma.dim();
    if sigma.is_identity() {
        let s = vec![1.0; d];
        return Ok(DiagonalS {
            objective_value: entropy_objective(sigma, &s, kappa).unwrap_or(f64::NAN),
            kkt_residual: Some(0.0),
            s,
            kappa,
            method: DiagMethod::Entropy,
            backoff_applied: false,
            backoff_factor: 1.0,
            iterations: 0,
        });
    }
    let problem = EntropyProblem { sigma, kappa };
    let mut used = 0;
    let out = newton_minimize(
        &problem,
        initial_point(sigma, kappa)?,
        Stop::Gradient(opts.entropy_grad_tol),
        &mut used,
        opts.max_newton_iterations,
        "entropy solver",
    )?;
    let objective_value = problem.value(&out.x).unwrap_or(f64::NAN);
    let (s, factor) = back_off(sigma, &out.x, kappa)?;
    Ok(DiagonalS {
        s,
        kappa,
        method: DiagMethod::Entropy,
        objective_value,
        kkt_residual: Some(max_abs(&out.grad)),
        backoff_applied: true,
        backoff_factor: factor,
        iterations: used,
    })
}

/// Barrier for `max Σ s_i` over `s ∈ (0,1)^d`, `R(s) ≻ 0`.
struct SdpBoxBarrier<'a> {
    sigma: &'a CorrelationMatrix,
    kappa: usize,
    t: f64,
    linear: Vec<f64>,
}

impl<'a> SdpBoxBarrier<'a> {
    fn new(sigma: &'a CorrelationMatrix, kappa: usize, t: f64) -> Self {
        Self { sigma, kappa, t, linear: vec![-t; sigma.dim()] }
    }
}

impl Smooth for SdpBoxBarrier<'_> {
    fn linear_term(&self) -> Option<&[f64]> {
        Some(&self.linear)
    }

    fn value(&self, x: &[f64]) -> Option<f64> {
        if x.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
            return None;
        }
        let r = slack_matrix(self.sigma, x, self.kappa).ok()?;
        let l = cholesky_strict(&r, 0.0).ok()?;
        let box_term: f64 = x.iter().map(|v| v.ln() + (1.0 - v).ln()).sum();
        Some(-log_det_from_cholesky(&l) - box_term)
    }

    fn derivatives(&self, x: &[f64]) -> Option<(Vec<f64>, Matrix)> {
        let d = x.len();
        let r = slack_matrix(self.sigma, x, self.kappa).ok()?;
        let rinv = cholesky_inverse(&cholesky_strict(&r, 0.0).ok()?);
        let grad = (0..d)
            .map(|j| -self.t + rinv[(j, j)] - 1.0 / x[j] + 1.0 / (1.0 - x[j]))
            .collect();
        let mut hess = rinv.component_mul(&rinv);
        for j in 0..d {
            let (lo, hi) = (x[j], 1.0 - x[j]);
            hess[(j, j)] += 1.0 / (lo * lo) + 1.0 / (hi * hi);
        }
        Some((grad, hess))
    }
}

/// Barrier for the epigraph form `min Σ u_i`, `u_i ≥ |1 − s_i|`, `s > 0`,
/// `R(s) ≻ 0`; variables are laid out as `[s; u]`.
struct SdpEpigraphBarrier<'a> {
    sigma: &'a CorrelationMatrix,
    kappa: usize,
    t: f64,
    linear: Vec<f64>,
}

impl<'a> SdpEpigraphBarrier<'a> {
    fn new(sigma: &'a CorrelationMatrix, kappa: usize, t: f64) -> Self {
        let d = sigma.dim();
        let mut linear = vec![0.0; 2 * d];
        linear[d..].iter_mut().for_each(|c| *c = t);
        Self { sigma, kappa, t, linear }
    }


    fn split<'x>(&self, x: &'x [f64]) -> (&'x [f64], &'x [f64]) {
        x.split_at(self.sigma.dim())
    }
}

impl Smooth for SdpEpigraphBarrier<'_> {
    fn linear_term(&self) -> Option<&[f64]> {
        Some(&self.linear)
    }

    fn value(&self, x: &[f64]) -> Option<f64> {
        let (s, u) = self.split(x);
        let mut barrier = 0.0;
        for (si, ui) in s.iter().zip(u) {
            let (a, b) = (ui - 1.0 + si, ui + 1.0 - si);
            if !(*si > 0.0 && a > 0.0 && b > 0.0) {
                return None;
            }
            barrier -= si.ln() + a.ln() + b.ln();
        }
        let r = slack_matrix(self.sigma, s, self.kappa).ok()?;
        let l = cholesky_strict(&r, 0.0).ok()?;
        Some(-log_det_from_cholesky(&l) + barrier)
    }

    fn derivatives(&self, x: &[f64]) -> Option<(Vec<f64>, Matrix)> {
        let d = self.sigma.dim();
        let (s, u) = self.split(x);
        let r = slack_matrix(self.sigma, s, self.kappa).ok()?;
        let rinv = cholesky_inverse(&cholesky_strict(&r, 0.0).ok()?);
        let mut grad = vec![0.0; 2 * d];
        let mut hess = Matrix::zeros(2 * d, 2 * d);
        let rr = rinv.component_mul(&rinv);
        hess.view_mut((0, 0), (d, d)).copy_from(&rr);
        for j in 0..d {
            let (a, b) = (u[j] - 1.0 + s[j], u[j] + 1.0 - s[j]);
            grad[j] = rinv[(j, j)] - 1.0 / s[j] - 1.0 / a + 1.0 / b;
            grad[d + j] = self.t - 1.0 / a - 1.0 / b;
            hess[(j, j)] += 1.0 / (s[j] * s[j]) + 1.0 / (a * a) + 1.0 / (b * b);
            let cross = 1.0 / (a * a) - 1.0 / (b * b);
            hess[(j, d + j)] = cross;
            hess[(d + j, j)] = cross;
            hess[(d + j, d + j)] = 1.0 / (a * a) + 1.0 / (b * b);
        }
        Some((grad, hess))
    }
}

const BARRIER_GROWTH: f64 = 20.0;
const CENTERING_TOL: f64 = 1e-4;

pub fn sdp_diag(sigma: &CorrelationMatrix, kappa: usize) -> Result<DiagonalS> {
    sdp_diag_with(sigma, kappa, &SolverOptions::default())
}

pub fn sdp_diag_with(sigma: &CorrelationMatrix, kappa: usize, opts: &SolverOptions) -> Result<DiagonalS> {
    check_kappa(kappa)?;
    let d = sigma.dim();
    if sigma.is_identity() {
        let s = vec![1.0; d];
        return Ok(DiagonalS {
            objective_value: 0.0,
            s,
            kappa,
            method: DiagMethod::Sdp,
            kkt_residual: None,
            backoff_applied: false,
            backoff_factor: 1.0,
            iterations: 0,
        });
    }
    let start = initial_point(sigma, kappa)?;
    let mut used = 0;
    let mut t = 1.0;
    let raw = if opts.sdp_allow_above_one {
        let barrier_weight = 4.0 * d as f64;
        let mut x: Vec<f64> = start.clone();
        x.extend(start.iter().map(|s| (1.0 - s).abs() + 1.0));
        loop {
            let problem = SdpEpigraphBarrier::new(sigma, kappa, t);
            x = newton_minimize(&problem, x, Stop::Decrement(CENTERING_TOL), &mut used, opts.max_newton_iterations, "sdp solver")?.x;
            if barrier_weight / t <= opts.sdp_gap_tol {
                break;
            }
            t *= BARRIER_GROWTH;
        }
        x.truncate(d);
        x
    } else {
        let barrier_weight = 3.0 * d as f64;
        let mut x = start;
        loop {
            let problem = SdpBoxBarrier::new(sigma, kappa, t);
            x = newton_minimize(&problem, x, Stop::Decrement(CENTERING_TOL), &mut used, opts.max_newton_iterations, "sdp solver")?.x;
            if barrier_weight / t <= opts.sdp_gap_tol {
                break;
            }
            t *= BARRIER_GROWTH;
        }
        x
    };
    let objective_value = sdp_objective(&raw);
    let (s, factor) = back_off(sigma, &raw, kappa)?;
    Ok(DiagonalS {
        s,
        kappa,
        method: DiagMethod::Sdp,
        objective_value,
        kkt_residual: None,
        backoff_applied: true,
        backoff_factor: factor,
        iterations: used,
    })
}

/// Histogram of `log10(s_i)` on fixed bins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Log10Histogram {
    pub lower: f64,
    pub bin_width: f64,
    pub counts: Vec<usize>,
    /// Entries below `10^lower`, including exact zeros.
    pub underflow: usize,
    pub overflow: usize,
}

impl Log10Histogram {
    pub const LOWER: f64 = -20.0;
    pub const UPPER: f64 = 1.0;
    pub const BIN_WIDTH: f64 = 0.25;

    pub fn empty() -> Self {
        let bins = ((Self::UPPER - Self::LOWER) / Self::BIN_WIDTH).round() as usize;
        Self {
            lower: Self::LOWER,
            bin_width: Self::BIN_WIDTH,
            counts: vec![0; bins],
            underflow: 0,
            overflow: 0,
        }
    }

    pub fn from_values(values: &[f64]) -> Self {
        let mut h = Self::empty();
        h.extend(values);
        h
    }

    pub fn extend(&mut self, values: &[f64]) {
        for &v in values {
            if !(v > 0.0) {
                self.underflow += 1;
                continue;
            }
            let pos = (v.log10() - self.lower) / self.bin_width;
            if pos < 0.0 {
                self.underflow += 1;
            } else if pos as usize >= self.counts.len() {
                self.overflow += 1;
            } else {
                self.counts[pos as usize] += 1;
            }
        }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum::<usize>() + self.underflow + self.overflow
    }

    /// Count of entries strictly below `10^exponent` (bin resolution).
    pub fn count_below(&self, exponent: f64) -> usize {
        let bins = ((exponent - self.lower) / self.bin_width).floor().max(0.0) as usize;
        self.underflow + self.counts.iter().take(bins).sum::<usize>()
    }

    pub fn bin_centers(&self) -> Vec<f64> {
        (0..self.counts.len())
            .map(|i| self.lower + (i as f64 + 0.5) * self.bin_width)
            .collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiagSummary {
    pub method: DiagMethod,
    pub kappa: usize,
    pub min: f64,
    pub max: f64,
    pub geometric_mean: f64,
    pub undiscoverable: usize,
    pub histogram: Log10Histogram,
}

pub fn diag_summary(diag: &DiagonalS) -> DiagSummary {
    let s = &diag.s;
    let min = s.iter().copied().fold(f64::INFINITY, f64::min);
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let geometric_mean = if min > 0.0 {
        (s.iter().map(|v| v.ln()).sum::<f64>() / s.len() as f64).exp()
    } else {
        0.0
    };
    DiagSummary {
        method: diag.method,
        kappa: diag.kappa,
        min,
        max,
        geometric_mean,
        undiscoverable: s.iter().filter(|v| **v < UNDISCOVERABLE).count(),
        histogram: Log10Histogram::from_values(s),
    }
}
