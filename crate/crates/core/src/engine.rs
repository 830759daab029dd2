//! Reference mirror prox engines working directly in the lifted space, with
//! explicit regularizer gradients and their inverses.
//!
//! These are slow and need explicit conjugates; the production solvers never
//! touch them. They exist so the pre-image solvers can be checked step by
//! step.

use std::sync::Arc;

use crate::error::{PdxError, Result};
use crate::linalg::{dot, sub};
use crate::math::SeededRng;
use crate::oracle::SmoothConvexOracle;

/// One separable block of the regularizer.
#[derive(Clone)]
pub enum BlockKind {
    /// `μ/2‖z‖²`
    Euclidean(f64),
    /// `c·f*(p)` for a summand with an explicit conjugate.
    Conjugate {
        oracle: Arc<dyn SmoothConvexOracle>,
        weight: f64,
    },
}

#[derive(Clone)]
pub struct Block {
    pub len: usize,
    pub kind: BlockKind,
}

/// Separable sum of Euclidean and conjugate blocks over a flat vector.
#[derive(Clone)]
pub struct BlockRegularizer {
    blocks: Vec<Block>,
    offsets: Vec<usize>,
    dim: usize,
}

impl BlockRegularizer {
    pub fn new(blocks: Vec<Block>) -> Result<Self> {
        let mut offsets = Vec::with_capacity(blocks.len());
        let mut dim = 0;
        for b in &blocks {
            match &b.kind {
                BlockKind::Euclidean(mu) if *mu <= 0.0 => {
                    return Err(PdxError::NonPositiveModulus(format!("block weight {mu}")));
                }
                BlockKind::Conjugate { oracle, weight } => {
                    if oracle.conjugate().is_none() {
                        return Err(PdxError::Oracle("conjugate block needs f*".into()));
                    }
                    if oracle.dim() != b.len {
                        return Err(PdxError::DimMismatch(format!(
                            "block of length {} wraps oracle of dim {}",
                            b.len,
                            oracle.dim()
                        )));
                    }
                    if *weight <= 0.0 {
                        return Err(PdxError::NonPositiveModulus(format!("block weight {weight}")));
                    }
                }
                _ => {}
            }
            offsets.push(dim);
            dim += b.len;
        }
        Ok(BlockRegularizer {
            blocks,
            offsets,
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn block_range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i] + self.blocks[i].len
    }

    /// `∇r(z)`
    pub fn grad(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (i, b) in self.blocks.iter().enumerate() {
            let r = self.block_range(i);
            match &b.kind {
                BlockKind::Euclidean(mu) => {
                    for k in r {
                        out[k] = mu * z[k];
                    }
                }
                BlockKind::Conjugate { oracle, weight } => {
                    let g = oracle.conjugate().unwrap().conj_gradient(&z[r.clone()]);
                    for (o, v) in out[r].iter_mut().zip(g) {
                        *o = weight * v;
                    }
                }
            }
        }
        out
    }

    /// `(∇r)⁻¹(g)`
    pub fn grad_inv(&self, g: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (i, b) in self.blocks.iter().enumerate() {
            let r = self.block_range(i);
            match &b.kind {
                BlockKind::Euclidean(mu) => {
                    for k in r {
                        out[k] = g[k] / mu;
                    }
                }
                BlockKind::Conjugate { oracle, weight } => {
                    let pre: Vec<f64> = g[r.clone()].iter().map(|v| v / weight).collect();
                    let p = oracle.gradient(&pre);
                    out[r].copy_from_slice(&p);
                }
            }
        }
        out
    }

    /// `V^r_z(w) = r(w) − r(z) − ⟨∇r(z), w − z⟩`
    pub fn divergence(&self, z: &[f64], w: &[f64]) -> f64 {
        let mut total = 0.0;
        for (i, b) in self.blocks.iter().enumerate() {
            let r = self.block_range(i);
            let (zb, wb) = (&z[r.clone()], &w[r]);
            total += match &b.kind {
                BlockKind::Euclidean(mu) => {
                    0.5 * mu * zb.iter().zip(wb).map(|(a, c)| (a - c) * (a - c)).sum::<f64>()
                }
                BlockKind::Conjugate { oracle, weight } => {
                    let c = oracle.conjugate().unwrap();
                    let gz = c.conj_gradient(zb);
                    weight * (c.conj_value(wb) - c.conj_value(zb) - dot(&gz, &sub(wb, zb)))
                }
            };
        }
        total
    }

    /// `argmin_w ⟨v, w⟩ + V^r_z(w)`
    pub fn prox(&self, z: &[f64], v: &[f64]) -> Vec<f64> {
        let g: Vec<f64> = self.grad(z).iter().zip(v).map(|(a, b)| a - b).collect();
        self.grad_inv(&g)
    }
}

pub type Operator<'a> = dyn Fn(&[f64]) -> Vec<f64> + 'a;

/// One step of strongly monotone mirror prox; returns `(z_{t+½}, z_{t+1})`.
pub fn sm_mirror_prox_step(
    op: &Operator,
    reg: &BlockRegularizer,
    lambda: f64,
    m: f64,
    z: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let gz = reg.grad(z);
    let phi = op(z);
    let g_half: Vec<f64> = gz.iter().zip(&phi).map(|(a, b)| a - b / lambda).collect();
    let half = reg.grad_inv(&g_half);
    let phi_h = op(&half);
    let w = m / lambda;
    let g_next: Vec<f64> = (0..gz.len())
        .map(|k| (gz[k] + w * g_half[k] - phi_h[k] / lambda) / (1.0 + w))
        .collect();
    (half, reg.grad_inv(&g_next))
}

/// `T` steps of strongly monotone mirror prox; returns `z_0, …, z_T`.
pub fn generic_sm_mirror_prox(
    op: &Operator,
    reg: &BlockRegularizer,
    lambda: f64,
    m: f64,
    t: usize,
    z0: &[f64],
) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(t + 1);
    out.push(z0.to_vec());
    for _ in 0..t {
        let (_, next) = sm_mirror_prox_step(op, reg, lambda, m, out.last().unwrap());
        out.push(next);
    }
    out
}

/// Which half of a randomized step an estimator is evaluated for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// `at = base = w_t`
    First,
    /// `at = w_{t+½}`
    Second,
}

/// A sampled estimator `Φ_s(stage, base, at)`.
pub type Estimator<'a, S> = dyn Fn(&S, Stage, &[f64], &[f64]) -> Vec<f64> + 'a;

/// One randomized mirror prox step for a fixed sample.
pub fn rand_mirror_prox_step<S>(
    op: &Estimator<S>,
    reg: &BlockRegularizer,
    lambda: f64,
    sample: &S,
    w: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let phi: Vec<f64> = op(sample, Stage::First, w, w).iter().map(|v| v / lambda).collect();
    let half = reg.prox(w, &phi);
    let phi_h: Vec<f64> = op(sample, Stage::Second, w, &half).iter().map(|v| v / lambda).collect();
    let next = reg.prox(w, &phi_h);
    (half, next)
}

/// `(w_t, w_{t+½})` pairs of a run.
pub type StepHistory = Vec<(Vec<f64>, Vec<f64>)>;

/// `steps` randomized mirror prox steps drawing one sample per step from
/// `sampler`; returns the `(w_t, w_{t+½})` pairs followed by the final point.
pub fn rand_mirror_prox_generic<S>(
    op: &Estimator<S>,
    sampler: &mut dyn FnMut(&mut SeededRng) -> S,
    reg: &BlockRegularizer,
    lambda: f64,
    steps: usize,
    rng: &mut SeededRng,
    z0: &[f64],
) -> (StepHistory, Vec<f64>) {
    let mut w = z0.to_vec();
    let mut hist = Vec::with_capacity(steps);
    for _ in 0..steps {
        let s = sampler(rng);
        let (half, next) = rand_mirror_prox_step(op, reg, lambda, &s, &w);
        hist.push((w, half));
        w = next;
    }
    (hist, w)
}
