//! Phase-restarted randomized extragradient solver for regularized finite
//! sums `(1/n) Σ f_i(x) + μ/2‖x‖²`.
//!
//! Each dual block `j` is tracked through a primal pre-image `wf[j]` together
//! with its cached gradient, so a step costs two gradient calls and `O(d)`
//! vector work.

use std::sync::Arc;
use std::time::Instant;

use crate::engine::{Block, BlockKind, BlockRegularizer};
use crate::error::{PdxError, Result};
use crate::linalg::{axpy, dist_sq, norm};
use crate::math::{conjugate_divergence_via_primal, sample_index, DiscreteDistribution, SeededRng};
use crate::minimax::{check_tolerance, Reference};
use crate::oracle::OracleCalls;
use crate::problem::FiniteSumProblem;
use crate::trace::TraceRecord;

/// `p_i = √L_i / (2Σ√L_j) + 1/(2n)`; uniform when every `L_i` is zero.
pub fn sampling_p(l: &[f64]) -> Result<DiscreteDistribution> {
    let n = l.len();
    if n == 0 {
        return Err(PdxError::EmptyList);
    }
    if l.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(PdxError::NonFiniteConstant("smoothness constants".into()));
    }
    let s: f64 = l.iter().map(|v| v.sqrt()).sum();
    if s == 0.0 {
        return DiscreteDistribution::uniform(n);
    }
    let floor = 0.5 / n as f64;
    let w: Vec<f64> = l.iter().map(|v| v.sqrt() / (2.0 * s) + floor).collect();
    let total: f64 = w.iter().sum();
    DiscreteDistribution::new(w.into_iter().map(|v| v / total).collect())
}

/// `2n + 2Σ√L_j / √(nμ)`
pub fn lambda_fs(n: usize, l: &[f64], mu: f64) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(PdxError::NonPositiveModulus(format!("mu = {mu}")));
    }
    let nf = n as f64;
    Ok(2.0 * nf + 2.0 * l.iter().map(|v| v.sqrt()).sum::<f64>() / (nf * mu).sqrt())
}

/// Initial potential bound and the potential certifying `ε` suboptimality.
pub fn potential_bounds_fs(l: &[f64], mu: f64, eps0: f64, eps: f64) -> (f64, f64) {
    let n = l.len() as f64;
    let sum: f64 = l.iter().sum();
    let b0 = (1.0 + sum / (n * mu)) * eps0;
    let lbar = mu + sum / n;
    (b0, eps * mu / lbar)
}

/// `⌈log₂(B0/Bend)⌉`, at least 1.
pub fn phase_budget_fs(l: &[f64], mu: f64, eps0: f64, eps: f64) -> Result<usize> {
    check_tolerance(eps0, eps)?;
    let (b0, bend) = potential_bounds_fs(l, mu, eps0, eps);
    Ok(crate::minimax::budget_from_ratio(b0 / bend, 2.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FsSchedule {
    pub p: DiscreteDistribution,
    pub lambda: f64,
    pub s: usize,
    pub t: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FsState {
    pub wx: Vec<f64>,
    pub wf: Vec<Vec<f64>>,
    /// `grads[i] = ∇f_i(wf[i])`
    pub grads: Vec<Vec<f64>>,
    /// `Σ_i grads[i]`, maintained incrementally.
    pub grad_sum: Vec<f64>,
    steps: u64,
}

impl FsState {
    /// All pre-images at `x0`; `n` gradient calls.
    pub fn new(p: &FiniteSumProblem, x0: &[f64], calls: &mut OracleCalls) -> Self {
        Self::from_parts(p, x0.to_vec(), vec![x0.to_vec(); p.n()], calls)
    }

    pub fn from_parts(p: &FiniteSumProblem, wx: Vec<f64>, wf: Vec<Vec<f64>>, calls: &mut OracleCalls) -> Self {
        let mut s = FsState {
            grads: vec![Vec::new(); wf.len()],
            grad_sum: vec![0.0; wx.len()],
            wx,
            wf,
            steps: 0,
        };
        s.refresh(p, calls);
        s
    }

    /// Recomputes every cached gradient (`n` calls).
    pub fn refresh(&mut self, p: &FiniteSumProblem, calls: &mut OracleCalls) {
        self.grad_sum.iter_mut().for_each(|v| *v = 0.0);
        for (i, f) in p.summands.iter().enumerate() {
            self.grads[i] = f.gradient(&self.wf[i]);
            axpy(1.0, &self.grads[i], &mut self.grad_sum);
        }
        calls.f += p.n() as u64;
    }

    /// Relative gap between `grad_sum` and a fresh sum of the cached gradients.
    pub fn grad_sum_drift(&self) -> f64 {
        let mut fresh = vec![0.0; self.grad_sum.len()];
        for g in &self.grads {
            axpy(1.0, g, &mut fresh);
        }
        let diff: Vec<f64> = fresh.iter().zip(&self.grad_sum).map(|(a, b)| a - b).collect();
        norm(&diff) / norm(&fresh).max(1.0)
    }

    fn resum(&mut self) {
        let drift = self.grad_sum_drift();
        if drift > 1e-10 {
            log::warn!("gradient sum drift {drift:.3e} after {} steps", self.steps);
        }
        self.grad_sum.iter_mut().for_each(|v| *v = 0.0);
        for g in &self.grads {
            axpy(1.0, g, &mut self.grad_sum);
        }
    }

    /// Flat lifted vector `(wx, ∇f_1(wf_1), …, ∇f_n(wf_n))`.
    pub fn lift(&self) -> Vec<f64> {
        let mut out = self.wx.clone();
        for g in &self.grads {
            out.extend_from_slice(g);
        }
        out
    }
}

/// `V^r(w, z⋆) = μ/2‖wx − x⋆‖² + (1/n) Σ V^{f_i}_{x⋆}(wf_i)`
pub fn fs_potential(p: &FiniteSumProblem, s: &FsState, xs: &[f64]) -> f64 {
    let n = p.n() as f64;
    let dual: f64 = p
        .summands
        .iter()
        .zip(&s.wf)
        .map(|(f, w)| conjugate_divergence_via_primal(f.as_ref(), w, xs).unwrap_or(f64::NAN))
        .sum();
    0.5 * p.mu * dist_sq(&s.wx, xs) + dual / n
}

/// `x`-half-step shared by every sample: `wx − (μ wx + G)/(λμ)`.
fn half_x(p: &FiniteSumProblem, s: &FsState, lambda: f64) -> Vec<f64> {
    let n = p.n() as f64;
    (0..s.wx.len())
        .map(|k| s.wx[k] - (p.mu * s.wx[k] + s.grad_sum[k] / n) / (lambda * p.mu))
        .collect()
}

/// One randomized extragradient step with sample `j`; two calls to `∇f_j`.
pub fn fs_step(
    p: &FiniteSumProblem,
    s: &mut FsState,
    lambda: f64,
    dist: &DiscreteDistribution,
    j: usize,
    calls: &mut OracleCalls,
) {
    let n = p.n() as f64;
    let d = s.wx.len();
    let pj = dist.weight(j);
    let c = 1.0 / (lambda * pj);
    let xh = half_x(p, s, lambda);
    let fh: Vec<f64> = (0..d).map(|k| (1.0 - c) * s.wf[j][k] + c * s.wx[k]).collect();
    let gh = p.summands[j].gradient(&fh);
    let delta: Vec<f64> = gh.iter().zip(&s.grads[j]).map(|(a, b)| a - b).collect();
    for k in 0..d {
        let phi = p.mu * xh[k] + s.grad_sum[k] / n + delta[k] / (n * pj);
        s.wx[k] -= phi / (lambda * p.mu);
    }
    for k in 0..d {
        s.wf[j][k] -= c * (fh[k] - xh[k]);
    }
    let g_new = p.summands[j].gradient(&s.wf[j]);
    calls.f += 2;
    for k in 0..d {
        s.grad_sum[k] += g_new[k] - s.grads[j][k];
    }
    s.grads[j] = g_new;
    s.steps += 1;
    if s.steps.is_multiple_of(1000) {
        s.resum();
    }
}

/// `steps` steps with `j ∼ p` drawn from `rng` once per step.
pub fn fs_steps(
    p: &FiniteSumProblem,
    s: &mut FsState,
    lambda: f64,
    dist: &DiscreteDistribution,
    steps: usize,
    rng: &mut SeededRng,
    calls: &mut OracleCalls,
) {
    for _ in 0..steps {
        let j = sample_index(dist, rng);
        fs_step(p, s, lambda, dist, j, calls);
    }
}

/// The aggregate point of the current state: `x` from the half step, every
/// dual block as if it had been sampled. Costs `n` calls to refresh caches.
pub fn fs_aggregate(p: &FiniteSumProblem, s: &FsState, lambda: f64, dist: &DiscreteDistribution, calls: &mut OracleCalls) -> FsState {
    let xh = half_x(p, s, lambda);
    let wf = s
        .wf
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let c = 1.0 / (lambda * dist.weight(i));
            w.iter().zip(&s.wx).map(|(a, b)| (1.0 - c) * a + c * b).collect()
        })
        .collect();
    FsState::from_parts(p, xh, wf, calls)
}

/// Draws `σ` uniform on `{0, …, S−1}`, runs steps `0..=σ` and returns the
/// aggregate point of `w_σ` together with `σ`.
pub fn fs_one_phase(
    p: &FiniteSumProblem,
    s: &FsState,
    lambda: f64,
    steps: usize,
    dist: &DiscreteDistribution,
    rng: &mut SeededRng,
    calls: &mut OracleCalls,
) -> (FsState, usize) {
    let sigma = rng.below(steps.max(1));
    let mut w = s.clone();
    fs_steps(p, &mut w, lambda, dist, sigma, rng, calls);
    let agg = fs_aggregate(p, &w, lambda, dist, calls);
    // iteration σ itself is still executed, matching the phase's call count
    let j = sample_index(dist, rng);
    fs_step(p, &mut w, lambda, dist, j, calls);
    (agg, sigma)
}

#[derive(Debug, Clone)]
pub struct FsConfig {
    pub eps0: f64,
    pub eps: f64,
    pub seed: u64,
    pub lambda: Option<f64>,
    pub steps: Option<usize>,
    pub phases: Option<usize>,
    pub reference: Option<Reference>,
}

impl Default for FsConfig {
    fn default() -> Self {
        FsConfig {
            eps0: 1.0,
            eps: 1e-8,
            seed: 0,
            lambda: None,
            steps: None,
            phases: None,
            reference: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FsResult {
    pub x: Vec<f64>,
    pub state: FsState,
    pub schedule: FsSchedule,
    pub calls: OracleCalls,
    pub sigmas: Vec<usize>,
    pub trace: Vec<TraceRecord>,
}

pub fn schedule_fs(p: &FiniteSumProblem, cfg: &FsConfig) -> Result<FsSchedule> {
    let l = p.smoothness();
    let dist = sampling_p(&l)?;
    let lambda = match cfg.lambda {
        Some(v) if v > 0.0 => v,
        Some(v) => return Err(PdxError::InvalidSpec(format!("lambda = {v}"))),
        None => lambda_fs(p.n(), &l, p.mu)?,
    };
    let s = cfg.steps.unwrap_or((2.0 * lambda).ceil() as usize).max(1);
    let t = match cfg.phases {
        Some(t) => t,
        None => phase_budget_fs(&l, p.mu, cfg.eps0, cfg.eps)?,
    };
    Ok(FsSchedule {
        p: dist,
        lambda,
        s,
        t,
    })
}

pub fn solve_finitesum(p: &FiniteSumProblem, x0: &[f64], cfg: &FsConfig) -> Result<FsResult> {
    p.validate()?;
    check_tolerance(cfg.eps0, cfg.eps)?;
    if x0.len() != p.dim() {
        return Err(PdxError::DimMismatch(format!("start dim {} vs {}", x0.len(), p.dim())));
    }
    let sched = schedule_fs(p, cfg)?;
    let start = Instant::now();
    let mut rng = SeededRng::new(cfg.seed);
    let mut calls = OracleCalls::default();
    let mut s = FsState::new(p, x0, &mut calls);
    let record = |t: usize, s: &FsState, calls: &OracleCalls| -> Result<TraceRecord> {
        let mut r = TraceRecord::new(t as u64, 0, calls, start);
        if let Some(rf) = &cfg.reference {
            r.potential = Some(fs_potential(p, s, &rf.x));
            if let Some(q) = &rf.gap {
                r.gap = Some(q.gap(&s.wx, &[])?);
            }
        }
        Ok(r)
    };
    let mut trace = vec![record(0, &s, &calls)?];
    let mut sigmas = Vec::with_capacity(sched.t);
    for t in 0..sched.t {
        let (next, sigma) = fs_one_phase(p, &s, sched.lambda, sched.s, &sched.p, &mut rng, &mut calls);
        s = next;
        sigmas.push(sigma);
        trace.push(record(t + 1, &s, &calls)?);
    }
    log::debug!(
        "finite sum: lambda = {:.4}, S = {}, T = {}, calls = {}",
        sched.lambda,
        sched.s,
        sched.t,
        calls.f
    );
    Ok(FsResult {
        x: s.wx.clone(),
        state: s,
        schedule: sched,
        calls,
        sigmas,
        trace,
    })
}

/// Lifted finite-sum problem for the reference engine: regularizer
/// `μ/2‖x‖² + (1/n) Σ f_i*(p_i)` and the sampled estimators.
pub struct FsLift {
    pub problem: FiniteSumProblem,
    pub dist: DiscreteDistribution,
    pub reg: BlockRegularizer,
}

impl FsLift {
    pub fn new(p: &FiniteSumProblem, dist: DiscreteDistribution) -> Result<Self> {
        let n = p.n() as f64;
        let mut blocks = vec![Block {
            len: p.dim(),
            kind: BlockKind::Euclidean(p.mu),
        }];
        for f in &p.summands {
            blocks.push(Block {
                len: p.dim(),
                kind: BlockKind::Conjugate {
                    oracle: Arc::clone(f),
                    weight: 1.0 / n,
                },
            });
        }
        Ok(FsLift {
            problem: p.clone(),
            dist,
            reg: BlockRegularizer::new(blocks)?,
        })
    }

    /// Full operator `Φ(z)`.
    pub fn operator(&self, z: &[f64]) -> Vec<f64> {
        let p = &self.problem;
        let (n, d) = (p.n(), p.dim());
        let nf = n as f64;
        let mut out = vec![0.0; z.len()];
        for k in 0..d {
            out[k] = p.mu * z[k];
        }
        for i in 0..n {
            let r = self.reg.block_range(i + 1);
            axpy(1.0 / nf, &z[r.clone()], &mut out[..d]);
            let g = p.summands[i].conjugate().unwrap().conj_gradient(&z[r.clone()]);
            for (k, o) in r.enumerate() {
                out[o] = (g[k] - z[k]) / nf;
            }
        }
        out
    }

    /// Estimator `Φ_j(base, at)`.
    pub fn estimator(&self, j: usize, base: &[f64], at: &[f64]) -> Vec<f64> {
        let p = &self.problem;
        let (n, d) = (p.n(), p.dim());
        let nf = n as f64;
        let pj = self.dist.weight(j);
        let mut out = vec![0.0; base.len()];
        for k in 0..d {
            out[k] = p.mu * at[k];
        }
        for i in 0..n {
            axpy(1.0 / nf, &base[self.reg.block_range(i + 1)], &mut out[..d]);
        }
        let rj = self.reg.block_range(j + 1);
        for (k, o) in rj.clone().enumerate() {
            out[k] += (at[o] - base[o]) / (nf * pj);
        }
        let g = p.summands[j].conjugate().unwrap().conj_gradient(&at[rj.clone()]);
        for (k, o) in rj.enumerate() {
            out[o] = (g[k] - at[k]) / (nf * pj);
        }
        out
    }
}
