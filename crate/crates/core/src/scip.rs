//! Sequential conditional independent multi-knockoffs for small, fully
//! tabulated discrete distributions.
//!
//! Configurations of `(X⁰, X¹, …, X^κ)` are laid out copy-major
//! (`[X⁰_1..X⁰_d, X¹_1..X¹_d, …]`) and flattened row-major, first coordinate
//! most significant.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::substream;
use crate::swap::all_permutations;

pub const MAX_FEATURES: usize = 6;
pub const MAX_ALPHABET: usize = 4;
pub const MAX_TABLE: usize = 1_000_000;
pub const MAX_FAMILIES: usize = 10_000;
const PMF_TOL: f64 = 1e-12;

#[derive(Deserialize)]
struct RawJoint {
    support_sizes: Vec<usize>,
    pmf: Vec<f64>,
}

impl TryFrom<RawJoint> for DiscreteJoint {
    type Error = Error;
    fn try_from(raw: RawJoint) -> Result<Self> {
        DiscreteJoint::new(raw.support_sizes, raw.pmf)
    }
}

/// Probability table over `Π_i {0, …, support_sizes[i] − 1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawJoint")]
pub struct DiscreteJoint {
    support_sizes: Vec<usize>,
    pmf: Vec<f64>,
}

impl DiscreteJoint {
    pub fn new(support_sizes: Vec<usize>, pmf: Vec<f64>) -> Result<Self> {
        let d = support_sizes.len();
        if d == 0 || d > MAX_FEATURES {
            return Err(Error::Dimension(format!("need 1..={MAX_FEATURES} features, got {d}")));
        }
        if let Some(a) = support_sizes.iter().find(|&&a| a == 0 || a > MAX_ALPHABET) {
            return Err(Error::Dimension(format!("alphabet size {a} outside 1..={MAX_ALPHABET}")));
        }
        let size: usize = support_sizes.iter().product();
        if pmf.len() != size {
            return Err(Error::Dimension(format!("pmf has {} entries, expected {size}", pmf.len())));
        }
        if let Some(p) = pmf.iter().find(|p| !(**p >= 0.0 && p.is_finite())) {
            return Err(Error::Domain(format!("negative or non-finite probability {p}")));
        }
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > PMF_TOL {
            return Err(Error::Domain(format!("probabilities sum to {total}")));
        }
        Ok(Self { support_sizes, pmf })
    }

    /// Product of independent marginals.
    pub fn independent(marginals: &[Vec<f64>]) -> Result<Self> {
        let sizes: Vec<usize> = marginals.iter().map(Vec::len).collect();
        let size: usize = sizes.iter().product();
        let pmf = (0..size)
            .map(|idx| {
                decode(idx, &sizes)
                    .iter()
                    .zip(marginals)
                    .map(|(&v, m)| m[v])
                    .product()
            })
            .collect();
        Self::new(sizes, pmf)
    }

    pub fn dim(&self) -> usize {
        self.support_sizes.len()
    }

    pub fn support_sizes(&self) -> &[usize] {
        &self.support_sizes
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn prob(&self, x: &[usize]) -> f64 {
        self.pmf[encode(x, &self.support_sizes)]
    }

    fn check_config(&self, x: &[usize]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "configuration has {} coordinates, expected {}",
                x.len(),
                self.dim()
            )));
        }
        if x.iter().zip(&self.support_sizes).any(|(v, a)| v >= a) {
            return Err(Error::Domain(format!("configuration {x:?} outside the alphabet")));
        }
        Ok(())
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        decode(draw_index(&self.pmf, rng), &self.support_sizes)
    }
}

fn encode(x: &[usize], sizes: &[usize]) -> usize {
    x.iter().zip(sizes).fold(0, |acc, (v, a)| acc * a + v)
}

fn decode(mut idx: usize, sizes: &[usize]) -> Vec<usize> {
    let mut x = vec![0; sizes.len()];
    for (slot, a) in x.iter_mut().zip(sizes).rev() {
        *slot = idx % a;
        idx /= a;
    }
    x
}

fn draw_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.iter().enumerate() {
        if *w > 0.0 {
            acc += w;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Joint weight of `(x0, knock[.][..i])` under the sequential procedure,
/// computed by fresh recursive summation over the table.
fn prefix_weight(joint: &DiscreteJoint, x0: &mut [usize], knock: &[Vec<usize>], i: usize) -> f64 {
    if i == 0 {
        return joint.prob(x0);
    }
    let j = i - 1;
    let vals = step_weights(joint, x0, knock, j);
    let norm: f64 = vals.iter().sum();
    if norm == 0.0 {
        return 0.0;
    }
    let mut w = vals[x0[j]];
    for copy in knock {
        w *= vals[copy[j]] / norm;
    }
    w
}

/// `v ↦ f_j(x0[j := v], knock[.][..j])`: unnormalised conditional of
/// coordinate `j` given everything sampled before it.
fn step_weights(joint: &DiscreteJoint, x0: &mut [usize], knock: &[Vec<usize>], j: usize) -> Vec<f64> {
    let keep = x0[j];
    let vals = (0..joint.support_sizes[j])
        .map(|v| {
            x0[j] = v;
            prefix_weight(joint, x0, knock, j)
        })
        .collect();
    x0[j] = keep;
    vals
}

/// One run of the sequential sampler: returns `κ` knockoff vectors.
pub fn scip_sample<R: Rng + ?Sized>(
    joint: &DiscreteJoint,
    x0: &[usize],
    kappa: usize,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    joint.check_config(x0)?;
    if joint.prob(x0) == 0.0 {
        return Err(Error::Domain(format!("configuration {x0:?} has probability zero")));
    }
    let d = joint.dim();
    let mut x = x0.to_vec();
    let mut knock = vec![vec![0; d]; kappa];
    for i in 0..d {
        let vals = step_weights(joint, &mut x, &knock, i);
        if vals.iter().sum::<f64>() == 0.0 {
            return Err(Error::Domain(format!("conditioning event at coordinate {i} has probability zero")));
        }
        for copy in knock.iter_mut() {
            copy[i] = draw_index(&vals, rng);
        }
    }
    Ok(knock)
}

pub fn scip_sample_seeded(joint: &DiscreteJoint, x0: &[usize], kappa: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    scip_sample(joint, x0, kappa, &mut substream(seed, 0))
}

/// Law over the `(κ+1)d` coordinates of `(X⁰, X¹, …, X^κ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointLaw {
    pub d: usize,
    pub kappa: usize,
    pub support_sizes: Vec<usize>,
    pub pmf: Vec<f64>,
}

impl JointLaw {
    pub fn coordinate_sizes(&self) -> Vec<usize> {
        self.support_sizes.repeat(self.kappa + 1)
    }

    /// Marginal of coordinate `(copy, feature)`.
    pub fn marginal(&self, copy: usize, feature: usize) -> Vec<f64> {
        let sizes = self.coordinate_sizes();
        let c = copy * self.d + feature;
        let mut out = vec![0.0; sizes[c]];
        for (idx, p) in self.pmf.iter().enumerate() {
            out[decode(idx, &sizes)[c]] += p;
        }
        out
    }
}

fn table_size(joint: &DiscreteJoint, kappa: usize) -> Result<usize> {
    let mut size: usize = 1;
    for _ in 0..=kappa {
        for &a in joint.support_sizes() {
            size = size
                .checked_mul(a)
                .filter(|s| *s <= MAX_TABLE)
                .ok_or_else(|| Error::Capacity(format!("product space exceeds {MAX_TABLE} configurations")))?;
        }
    }
    Ok(size)
}

/// Exact law of the sequential sampler's output, by dynamic programming
/// over coordinates.
pub fn exact_joint_law(joint: &DiscreteJoint, kappa: usize) -> Result<JointLaw> {
    let size = table_size(joint, kappa)?;
    let d = joint.dim();
    let sizes = joint.support_sizes().repeat(kappa + 1);
    let strides: Vec<usize> = (0..sizes.len())
        .map(|c| sizes[c + 1..].iter().product())
        .collect();

    // Knockoff coordinates not yet sampled are held at 0.
    let mut table = vec![0.0; size];
    for (idx, p) in joint.pmf().iter().enumerate() {
        let x0 = decode(idx, joint.support_sizes());
        let full: usize = x0.iter().enumerate().map(|(i, v)| v * strides[i]).sum();
        table[full] = *p;
    }
    for i in 0..d {
        let a = joint.support_sizes()[i];
        let combos = a.pow(kappa as u32);
        let mut next = vec![0.0; size];
        for (idx, &w) in table.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let current = decode(idx, &sizes)[i];
            let base = idx - current * strides[i];
            let vals: Vec<f64> = (0..a).map(|v| table[base + v * strides[i]]).collect();
            let norm: f64 = vals.iter().sum();
            for combo in 0..combos {
                let mut c = combo;
                let mut weight = w;
                let mut target = idx;
                for k in 1..=kappa {
                    let v = c % a;
                    c /= a;
                    weight *= vals[v] / norm;
                    target += v * strides[k * d + i];
                }
                next[target] += weight;
            }
        }
        table = next;
    }
    Ok(JointLaw {
        d,
        kappa,
        support_sizes: joint.support_sizes().to_vec(),
        pmf: table,
    })
}

/// Every coordinate-wise permutation family, as per-dimension permutations.
fn all_families(d: usize, kappa: usize) -> Result<Vec<Vec<Vec<usize>>>> {
    let perms = all_permutations(kappa + 1);
    let count = (perms.len() as f64).powi(d as i32);
    if count > MAX_FAMILIES as f64 {
        return Err(Error::Capacity(format!(
            "{count} permutation families exceed the limit of {MAX_FAMILIES}"
        )));
    }
    let mut families: Vec<Vec<Vec<usize>>> = vec![Vec::new()];
    for _ in 0..d {
        families = families
            .into_iter()
            .flat_map(|f| {
                perms.iter().map(move |p| {
                    let mut g = f.clone();
                    g.push(p.clone());
                    g
                })
            })
            .collect();
    }
    Ok(families)
}

/// Total-variation distance between `law` and `law ∘ swap(σ)`.
pub fn swap_tv(law: &JointLaw, family: &[Vec<usize>]) -> f64 {
    let sizes = law.coordinate_sizes();
    let d = law.d;
    let mut tv = 0.0;
    for (idx, p) in law.pmf.iter().enumerate() {
        let x = decode(idx, &sizes);
        let mut swapped = vec![0; x.len()];
        for i in 0..d {
            for k in 0..=law.kappa {
                swapped[k * d + i] = x[family[i][k] * d + i];
            }
        }
        tv += (p - law.pmf[encode(&swapped, &sizes)]).abs();
    }
    0.5 * tv
}

/// Largest swap TV over all `((κ+1)!)^d` permutation families.
pub fn exchangeability_tv(law: &JointLaw) -> Result<f64> {
    if law.pmf.len() > MAX_TABLE {
        return Err(Error::Capacity(format!("table exceeds {MAX_TABLE} configurations")));
    }
    let families = all_families(law.d, law.kappa)?;
    Ok(families
        .par_iter()
        .map(|f| swap_tv(law, f))
        .reduce(|| 0.0, f64::max))
}

pub fn tv_distance(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Empirical law of `(X⁰, knockoffs)` over `n_draws` independent runs,
/// each drawing `X⁰` from the table and then running the sampler. Draw `r`
/// uses substream `(seed, r)`.
pub fn empirical_joint_law(joint: &DiscreteJoint, kappa: usize, n_draws: usize, seed: u64) -> Result<JointLaw> {
    let size = table_size(joint, kappa)?;
    let d = joint.dim();
    let sizes = joint.support_sizes().repeat(kappa + 1);
    let counts = (0..n_draws)
        .into_par_iter()
        .fold(
            || vec![0u64; size],
            |mut acc, r| {
                let mut rng = substream(seed, r as u64);
                let x0 = joint.draw(&mut rng);
                let knock = scip_sample(joint, &x0, kappa, &mut rng).expect("x0 drawn from the support");
                let mut config = x0;
                for copy in knock {
                    config.extend(copy);
                }
                acc[encode(&config, &sizes)] += 1;
                acc
            },
        )
        .reduce(
            || vec![0u64; size],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let pmf = counts.iter().map(|&c| c as f64 / n_draws.max(1) as f64).collect();
    Ok(JointLaw {
        d,
        kappa,
        support_sizes: joint.support_sizes().to_vec(),
        pmf,
    })
}

/// Diagnostics emitted by `scip-check`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScipCheck {
    pub kappa: usize,
    pub table_size: usize,
    pub families: usize,
    pub max_swap_tv: f64,
    pub max_marginal_gap: f64,
    pub monte_carlo_draws: usize,
    pub monte_carlo_tv: Option<f64>,
}

pub fn scip_check(joint: &DiscreteJoint, kappa: usize, draws: usize, seed: u64) -> Result<ScipCheck> {
    let law = exact_joint_law(joint, kappa)?;
    let max_swap_tv = exchangeability_tv(&law)?;
    let mut max_marginal_gap: f64 = 0.0;
    for i in 0..law.d {
        let reference = law.marginal(0, i);
        for k in 1..=kappa {
            max_marginal_gap = max_marginal_gap.max(tv_distance(&reference, &law.marginal(k, i)));
        }
    }
    let monte_carlo_tv = if draws > 0 {
        let emp = empirical_joint_law(joint, kappa, draws, seed)?;
        Some(tv_distance(&emp.pmf, &law.pmf))
    } else {
        None
    };
    Ok(ScipCheck {
        kappa,
        table_size: law.pmf.len(),
        families: (1..=kappa + 1).product::<usize>().pow(law.d as u32),
        max_swap_tv,
        max_marginal_gap,
        monte_carlo_draws: draws,
        monte_carlo_tv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_decode_roundtrip() {
        let sizes = [2, 3, 4];
        for idx in 0..24 {
            assert_eq!(encode(&decode(idx, &sizes), &sizes), idx);
        }
        assert_eq!(decode(5, &sizes), vec![0, 1, 1]);
    }

    #[test]
    fn validation() {
        assert!(DiscreteJoint::new(vec![2], vec![0.5, 0.6]).is_err());
        assert!(DiscreteJoint::new(vec![5], vec![0.2; 5]).is_err());
        assert!(DiscreteJoint::new(vec![2], vec![-0.5, 1.5]).is_err());
        assert!(DiscreteJoint::new(vec![2, 2], vec![0.25; 4]).is_ok());
    }

    #[test]
    fn json_roundtrip() {
        let j: DiscreteJoint =
            serde_json::from_str(r#"{"support_sizes":[2],"pmf":[0.3,0.7]}"#).unwrap();
        assert_eq!(j.support_sizes(), &[2]);
        let back: DiscreteJoint = serde_json::from_str(&serde_json::to_string(&j).unwrap()).unwrap();
        assert_eq!(back, j);
        assert!(serde_json::from_str::<DiscreteJoint>(r#"{"support_sizes":[2],"pmf":[0.3]}"#).is_err());
    }

    #[test]
    fn capacity_limits() {
        let j = DiscreteJoint::new(vec![4; 6], vec![1.0 / 4096.0; 4096]).unwrap();
        assert!(matches!(exact_joint_law(&j, 1), Err(Error::Capacity(_))));
    }

    #[test]
    fn out_of_support_is_a_domain_error() {
        let j = DiscreteJoint::new(vec![2, 2], vec![0.5, 0.0, 0.0, 0.5]).unwrap();
        assert!(matches!(scip_sample_seeded(&j, &[0, 1], 1, 0), Err(Error::Domain(_))));
        assert!(matches!(scip_sample_seeded(&j, &[0, 2], 1, 0), Err(Error::Domain(_))));
    }
}
