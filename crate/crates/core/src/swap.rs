//! Coordinate-wise permutation families `σ = (σ_1, …, σ_d)`, each `σ_i` a
//! permutation of the copy indices `{0, …, κ}`.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwapFamily {
    kappa: usize,
    perms: Vec<Vec<usize>>,
}

impl SwapFamily {
    pub fn new(kappa: usize, perms: Vec<Vec<usize>>) -> Result<Self> {
        for (i, p) in perms.iter().enumerate() {
            let mut seen = vec![false; kappa + 1];
            if p.len() != kappa + 1 {
                return Err(Error::Dimension(format!(
                    "permutation {i} has length {}, expected {}",
                    p.len(),
                    kappa + 1
                )));
            }
            for &k in p {
                if k > kappa || std::mem::replace(&mut seen[k], true) {
                    return Err(Error::Domain(format!("entry {i} is not a permutation: {p:?}")));
                }
            }
        }
        Ok(Self { kappa, perms })
    }

    pub fn identity(d: usize, kappa: usize) -> Self {
        Self { kappa, perms: vec![(0..=kappa).collect(); d] }
    }

    /// Swap copies `a` and `b` in every dimension.
    pub fn transposition(d: usize, kappa: usize, a: usize, b: usize) -> Self {
        let mut p: Vec<usize> = (0..=kappa).collect();
        p.swap(a, b);
        Self { kappa, perms: vec![p; d] }
    }

    pub fn random<R: Rng + ?Sized>(d: usize, kappa: usize, rng: &mut R) -> Self {
        let perms = (0..d)
            .map(|_| {
                let mut p: Vec<usize> = (0..=kappa).collect();
                p.shuffle(rng);
                p
            })
            .collect();
        Self { kappa, perms }
    }

    pub fn dim(&self) -> usize {
        self.perms.len()
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    /// `σ_i(k)`: the copy whose dimension-`i` value lands in slot `k`.
    pub fn source(&self, i: usize, k: usize) -> usize {
        self.perms[i][k]
    }

    pub fn perms(&self) -> &[Vec<usize>] {
        &self.perms
    }

    pub fn is_identity(&self) -> bool {
        self.perms.iter().all(|p| p.iter().enumerate().all(|(k, &v)| k == v))
    }

    pub fn inverse(&self) -> Self {
        let perms = self
            .perms
            .iter()
            .map(|p| {
                let mut inv = vec![0; p.len()];
                for (k, &v) in p.iter().enumerate() {
                    inv[v] = k;
                }
                inv
            })
            .collect();
        Self { kappa: self.kappa, perms }
    }

    /// Column permutation on the copy-major layout `[X⁰ | X¹ | … | X^κ]`:
    /// output column `k·d + i` reads input column `σ_i(k)·d + i`.
    pub fn column_sources(&self) -> Vec<usize> {
        let d = self.dim();
        (0..=self.kappa)
            .flat_map(|k| (0..d).map(move |i| (k, i)))
            .map(|(k, i)| self.perms[i][k] * d + i)
            .collect()
    }
}

/// Every permutation of `0..n` in lexicographic order.
pub fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut p: Vec<usize> = (0..n).collect();
    loop {
        out.push(p.clone());
        // next lexicographic permutation
        let Some(i) = (1..n).rev().find(|&i| p[i - 1] < p[i]) else {
            return out;
        };
        let j = (i..n).rev().find(|&j| p[j] > p[i - 1]).expect("exists");
        p.swap(i - 1, j);
        p[i..].reverse();
    }
}
