//! Bregman divergences, the conjugate divergence identity and seeded
//! discrete sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{PdxError, Result};
use crate::linalg::{check_dims, dist_sq, dot, sub};
use crate::oracle::SmoothConvexOracle;

/// `½‖x − x2‖²`
pub fn bregman_euclidean(x: &[f64], x2: &[f64]) -> Result<f64> {
    check_dims(x, x2)?;
    Ok(0.5 * dist_sq(x, x2))
}

/// `V^{f*}_{∇f(u)}(∇f(v))`, evaluated through `f` only as
/// `f(u) − f(v) − ⟨∇f(v), u − v⟩`.
pub fn conjugate_divergence_via_primal(
    f: &dyn SmoothConvexOracle,
    u: &[f64],
    v: &[f64],
) -> Result<f64> {
    check_dims(u, v)?;
    if u.len() != f.dim() {
        return Err(PdxError::DimMismatch(format!(
            "oracle dim {} vs point dim {}",
            f.dim(),
            u.len()
        )));
    }
    let gv = f.gradient(v);
    let val = f.value(u) - f.value(v) - dot(&gv, &sub(u, v));
    // Rounding can leave a tiny negative residue near u = v.
    Ok(val.max(0.0))
}

/// A probability distribution over `{0, …, n−1}` with cached prefix sums.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    weights: Vec<f64>,
    prefix: Vec<f64>,
}

impl DiscreteDistribution {
    pub const TOL: f64 = 1e-12;

    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(PdxError::EmptyList);
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(PdxError::InvalidDistribution(
                "weights must be finite and non-negative".into(),
            ));
        }
        let mut prefix = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for w in &weights {
            acc += w;
            prefix.push(acc);
        }
        if (acc - 1.0).abs() > Self::TOL {
            return Err(PdxError::InvalidDistribution(format!(
                "weights sum to {acc}, expected 1"
            )));
        }
        Ok(DiscreteDistribution { weights, prefix })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(PdxError::EmptyList);
        }
        Self::new(vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn prefix_sums(&self) -> &[f64] {
        &self.prefix
    }

    /// Inverse CDF: the first index whose prefix sum exceeds `u`.
    pub fn index_for(&self, u: f64) -> usize {
        let i = self.prefix.partition_point(|&c| c <= u);
        i.min(self.weights.len() - 1)
    }
}

/// Deterministic generator fully determined by a 64-bit seed.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    rng: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform deviate in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform integer in `{0, …, n−1}`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "empty range");
        self.rng.random_range(0..n)
    }

    pub fn normal(&mut self) -> f64 {
        use rand_distr::{Distribution, StandardNormal};
        StandardNormal.sample(&mut self.rng)
    }

    pub fn normal_vec(&mut self, d: usize) -> Vec<f64> {
        (0..d).map(|_| self.normal()).collect()
    }

    /// Uniform deviate in `[lo, hi)`.
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn inner(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

pub fn sample_index(dist: &DiscreteDistribution, rng: &mut SeededRng) -> usize {
    dist.index_for(rng.uniform())
}
