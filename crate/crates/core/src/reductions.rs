//! Outer proximal loops for problems that are strongly convex only in
//! aggregate.
//!
//! Each outer step solves `F + (μ/8)‖x − x_k‖²` (and its minimax analogue)
//! with a regularized solver. The subproblem keeps the original summands;
//! the linear part of the proximal term is absorbed into summand 0.

use std::sync::Arc;

use crate::error::{Diagnostics, PdxError, Result};
use crate::finitesum::{solve_finitesum, FsConfig};
use crate::linalg::dist_sq;
use crate::minimax::{budget_from_ratio, check_tolerance};
use crate::mmfs::{solve_mmfs, MmfsConfig, MmfsOverrides};
use crate::oracle::{OracleCalls, ShiftedOracle};
use crate::problem::{CouplingRef, FiniteSumProblem, MinimaxFiniteSumProblem, SummandRef};
use crate::saddle::QuadraticSaddle;

/// `min_x (1/n) Σ f_i(x)`, with the average `μ`-strongly convex.
#[derive(Clone)]
pub struct AggregateFiniteSum {
    pub summands: Vec<SummandRef>,
    pub mu: f64,
}

/// `min_x max_y (1/n) Σ f_i(x) + h_i(x, y) − g_i(y)`, with the averages of
/// `f_i` and `g_i` strongly convex with moduli `μx`, `μy`.
#[derive(Clone)]
pub struct AggregateMinimaxFiniteSum {
    pub f: Vec<SummandRef>,
    pub g: Vec<SummandRef>,
    pub h: Vec<CouplingRef>,
    pub mu_x: f64,
    pub mu_y: f64,
}

impl AggregateFiniteSum {
    pub fn n(&self) -> usize {
        self.summands.len()
    }

    pub fn validate(&self) -> std::result::Result<(), Diagnostics> {
        FiniteSumProblem {
            summands: self.summands.clone(),
            mu: self.mu,
        }
        .validate()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.summands.iter().map(|f| f.value(x)).sum::<f64>() / self.n() as f64
    }

    pub fn quadratic(&self) -> Option<QuadraticSaddle> {
        let qs: Option<Vec<_>> = self.summands.iter().map(|f| f.quadratic_form()).collect();
        Some(QuadraticSaddle::from_finite_sum(&qs?, 0.0))
    }
}

impl AggregateMinimaxFiniteSum {
    pub fn n(&self) -> usize {
        self.f.len()
    }

    fn as_regularized(&self, mu_x: f64, mu_y: f64) -> MinimaxFiniteSumProblem {
        MinimaxFiniteSumProblem {
            f: self.f.clone(),
            g: self.g.clone(),
            h: self.h.clone(),
            mu_x,
            mu_y,
        }
    }

    pub fn validate(&self) -> std::result::Result<(), Diagnostics> {
        self.as_regularized(self.mu_x, self.mu_y).validate()
    }

    pub fn quadratic(&self) -> Option<QuadraticSaddle> {
        let fs: Option<Vec<_>> = self.f.iter().map(|f| f.quadratic_form()).collect();
        let gs: Option<Vec<_>> = self.g.iter().map(|g| g.quadratic_form()).collect();
        let hs: Option<Vec<_>> = self.h.iter().map(|h| h.quadratic_form()).collect();
        Some(QuadraticSaddle::from_mmfs(&fs?, &gs?, &hs?, 0.0, 0.0))
    }
}

fn shift_first(summands: &[SummandRef], lin: Vec<f64>) -> Vec<SummandRef> {
    let mut out = summands.to_vec();
    out[0] = Arc::new(ShiftedOracle {
        inner: Arc::clone(&summands[0]),
        quad: 0.0,
        lin,
    });
    out
}

/// `(1/n) Σ f_i + (μ/8)‖x − x_k‖²` up to a constant, as a regularized finite
/// sum with modulus `μ/4`.
pub fn fs_subproblem(p: &AggregateFiniteSum, xk: &[f64]) -> FiniteSumProblem {
    let n = p.n() as f64;
    let lin = xk.iter().map(|v| -n * 0.25 * p.mu * v).collect();
    FiniteSumProblem {
        summands: shift_first(&p.summands, lin),
        mu: 0.25 * p.mu,
    }
}

/// `F + (μx/8)‖x − x_k‖² − (μy/8)‖y − y_k‖²` up to a constant.
pub fn mmfs_subproblem(p: &AggregateMinimaxFiniteSum, xk: &[f64], yk: &[f64]) -> MinimaxFiniteSumProblem {
    let n = p.n() as f64;
    let mut out = p.as_regularized(0.25 * p.mu_x, 0.25 * p.mu_y);
    out.f = shift_first(&p.f, xk.iter().map(|v| -n * 0.25 * p.mu_x * v).collect());
    out.g = shift_first(&p.g, yk.iter().map(|v| -n * 0.25 * p.mu_y * v).collect());
    out
}

/// Solves the regularized finite-sum subproblems.
pub trait ConvexSubsolver {
    fn solve(&mut self, p: &FiniteSumProblem, warm: &[f64], calls: &mut OracleCalls) -> Result<Vec<f64>>;
}

/// Solves the regularized minimax finite-sum subproblems.
pub trait MinimaxSubsolver {
    fn solve(
        &mut self,
        p: &MinimaxFiniteSumProblem,
        warm_x: &[f64],
        warm_y: &[f64],
        calls: &mut OracleCalls,
    ) -> Result<(Vec<f64>, Vec<f64>)>;
}

/// Direct linear solve; quadratic summands only. Counts no oracle calls.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactSubsolver;

impl ConvexSubsolver for ExactSubsolver {
    fn solve(&mut self, p: &FiniteSumProblem, _: &[f64], _: &mut OracleCalls) -> Result<Vec<f64>> {
        let q = p
            .quadratic()
            .ok_or_else(|| PdxError::Oracle("exact subsolver needs quadratic summands".into()))?;
        Ok(q.exact_saddle()?.x)
    }
}

impl MinimaxSubsolver for ExactSubsolver {
    fn solve(
        &mut self,
        p: &MinimaxFiniteSumProblem,
        _: &[f64],
        _: &[f64],
        _: &mut OracleCalls,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let q = p
            .quadratic()
            .ok_or_else(|| PdxError::Oracle("exact subsolver needs quadratic summands".into()))?;
        let s = q.exact_saddle()?;
        Ok((s.x, s.y))
    }
}

/// Budget of the randomized subsolvers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubBudget {
    /// A fixed number of phases (finite sums) or outer steps (minimax).
    Fixed(usize),
    /// One quarter contraction of the solver's own potential: 2 phases for
    /// finite sums, `⌈ln 4 / ln((1+4γ)/(4γ))⌉` outer steps for minimax.
    Quarter,
    /// Enough to shrink the solver's own potential by `4·(1 + L̄/μ)`, which
    /// bounds the quarter-divergence requirement from the warm start.
    Certified,
}

/// Finite-sum solver warm-started at `x_k`; seeds advance once per call.
#[derive(Debug, Clone)]
pub struct FsSubsolver {
    pub budget: SubBudget,
    pub seed: u64,
}

impl Default for FsSubsolver {
    fn default() -> Self {
        FsSubsolver {
            budget: SubBudget::Quarter,
            seed: 0,
        }
    }
}

impl ConvexSubsolver for FsSubsolver {
    fn solve(&mut self, p: &FiniteSumProblem, warm: &[f64], calls: &mut OracleCalls) -> Result<Vec<f64>> {
        let phases = match self.budget {
            SubBudget::Fixed(t) => t,
            SubBudget::Quarter => 2,
            SubBudget::Certified => {
                let lbar = p.smoothness().iter().sum::<f64>() / p.n() as f64;
                budget_from_ratio(4.0 * (1.0 + lbar / p.mu), 2.0)
            }
        };
        let cfg = FsConfig {
            seed: self.seed,
            phases: Some(phases),
            ..FsConfig::default()
        };
        self.seed = self.seed.wrapping_add(1);
        let res = solve_finitesum(p, warm, &cfg)?;
        calls.add(&res.calls);
        Ok(res.x)
    }
}

/// Minimax finite-sum solver warm-started at `(x_k, y_k)`.
#[derive(Debug, Clone)]
pub struct MmfsSubsolver {
    pub budget: SubBudget,
    pub phases: Option<usize>,
    pub seed: u64,
}

impl Default for MmfsSubsolver {
    fn default() -> Self {
        MmfsSubsolver {
            budget: SubBudget::Quarter,
            phases: None,
            seed: 0,
        }
    }
}

impl MinimaxSubsolver for MmfsSubsolver {
    fn solve(
        &mut self,
        p: &MinimaxFiniteSumProblem,
        warm_x: &[f64],
        warm_y: &[f64],
        calls: &mut OracleCalls,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let rate = || -> Result<f64> {
            let gamma = crate::mmfs::schedule_mmfs(p, 1.0, 1.0)?.gamma;
            Ok((1.0 + 4.0 * gamma) / (4.0 * gamma))
        };
        let outer = match self.budget {
            SubBudget::Fixed(t) => t,
            SubBudget::Quarter => budget_from_ratio(4.0, rate()?),
            SubBudget::Certified => {
                let n = p.n() as f64;
                let lx = p.f.iter().map(|f| f.smoothness()).sum::<f64>() / n;
                let ly = p.g.iter().map(|g| g.smoothness()).sum::<f64>() / n;
                budget_from_ratio(4.0 * (1.0 + lx / p.mu_x + ly / p.mu_y), rate()?)
            }
        };
        let cfg = MmfsConfig {
            seed: self.seed,
            overrides: MmfsOverrides {
                outer: Some(outer),
                phases: self.phases,
                ..MmfsOverrides::default()
            },
            ..MmfsConfig::default()
        };
        self.seed = self.seed.wrapping_add(1);
        let res = solve_mmfs(p, warm_x, warm_y, &cfg)?;
        calls.add(&res.calls);
        Ok((res.x, res.y))
    }
}

#[derive(Debug, Clone)]
pub struct ReductionResult {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// `z_0, …, z_K` as `(x, y)` pairs; `y` is empty for finite sums.
    pub iterates: Vec<(Vec<f64>, Vec<f64>)>,
    /// Cumulative calls at each iterate.
    pub calls_at: Vec<OracleCalls>,
    pub calls: OracleCalls,
}

/// `⌈log₂((1 + L̄/μ) ε0/ε)⌉`: enough halvings of `½‖x − x⋆‖²` to move an
/// `ε0`-suboptimal start to an `ε`-suboptimal point.
pub fn outer_steps_fs(p: &AggregateFiniteSum, eps0: f64, eps: f64) -> Result<usize> {
    check_tolerance(eps0, eps)?;
    let lbar = p.summands.iter().map(|f| f.smoothness()).sum::<f64>() / p.n() as f64;
    Ok(budget_from_ratio((1.0 + lbar / p.mu) * eps0 / eps, 2.0))
}

/// Minimax analogue of [`outer_steps_fs`] with the averaged constants.
pub fn outer_steps_mmfs(p: &AggregateMinimaxFiniteSum, eps0: f64, eps: f64) -> Result<usize> {
    check_tolerance(eps0, eps)?;
    let c = crate::mmfs::averaged_constants(&p.as_regularized(p.mu_x, p.mu_y));
    let (b0, bend) = crate::minimax::potential_bounds_mm(&c, eps0, eps);
    Ok(budget_from_ratio(b0 / bend, 2.0))
}

pub fn redx_convex(
    p: &AggregateFiniteSum,
    x0: &[f64],
    k: usize,
    sub: &mut dyn ConvexSubsolver,
) -> Result<ReductionResult> {
    p.validate()?;
    let d = p.summands[0].dim();
    if x0.len() != d {
        return Err(PdxError::DimMismatch(format!("start dim {} vs {d}", x0.len())));
    }
    let mut calls = OracleCalls::default();
    let mut x = x0.to_vec();
    let mut iterates = vec![(x.clone(), Vec::new())];
    let mut calls_at = vec![calls];
    for step in 0..k {
        let sp = fs_subproblem(p, &x);
        x = sub.solve(&sp, &x, &mut calls)?;
        log::trace!("reduction step {step}: calls {}", calls.total());
        iterates.push((x.clone(), Vec::new()));
        calls_at.push(calls);
    }
    Ok(ReductionResult {
        x,
        y: Vec::new(),
        iterates,
        calls_at,
        calls,
    })
}

pub fn redx_minimax(
    p: &AggregateMinimaxFiniteSum,
    x0: &[f64],
    y0: &[f64],
    k: usize,
    sub: &mut dyn MinimaxSubsolver,
) -> Result<ReductionResult> {
    p.validate()?;
    let (dx, dy) = p.as_regularized(p.mu_x, p.mu_y).dims();
    if x0.len() != dx || y0.len() != dy {
        return Err(PdxError::DimMismatch(format!(
            "start dims ({}, {}) vs ({dx}, {dy})",
            x0.len(),
            y0.len()
        )));
    }
    let mut calls = OracleCalls::default();
    let (mut x, mut y) = (x0.to_vec(), y0.to_vec());
    let mut iterates = vec![(x.clone(), y.clone())];
    let mut calls_at = vec![calls];
    for _ in 0..k {
        let sp = mmfs_subproblem(p, &x, &y);
        (x, y) = sub.solve(&sp, &x, &y, &mut calls)?;
        iterates.push((x.clone(), y.clone()));
        calls_at.push(calls);
    }
    Ok(ReductionResult {
        x,
        y,
        iterates,
        calls_at,
        calls,
    })
}

/// `(μx/2)‖x − x′‖² + (μy/2)‖y − y′‖²`
pub fn omega_divergence(mu_x: f64, mu_y: f64, a: (&[f64], &[f64]), b: (&[f64], &[f64])) -> f64 {
    0.5 * mu_x * dist_sq(a.0, b.0) + 0.5 * mu_y * dist_sq(a.1, b.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rel_dist;
    use crate::math::SeededRng;
    use crate::testbed::{gen_aggregate_finite_sum, gen_aggregate_mmfs};

    #[test]
    fn shifted_subproblem_gradient() {
        let inst = gen_aggregate_finite_sum(4, 6, 5.0, 0.5, 1).unwrap();
        let p = inst.aggregate_finite_sum();
        let mut rng = SeededRng::new(2);
        let xk = rng.normal_vec(6);
        let sp = fs_subproblem(&p, &xk);
        for _ in 0..10 {
            let x = rng.normal_vec(6);
            let got = crate::problem::finite_sum_gradient(&sp, &x).unwrap();
            let n = p.n() as f64;
            let mut want = vec![0.0; 6];
            for f in &p.summands {
                crate::linalg::axpy(1.0 / n, &f.gradient(&x), &mut want);
            }
            for i in 0..6 {
                want[i] += 0.25 * p.mu * (x[i] - xk[i]);
            }
            assert!(rel_dist(&got, &want) < 1e-12);
        }
        for (a, b) in sp.smoothness().iter().zip(p.summands.iter().map(|f| f.smoothness())) {
            assert_eq!(*a, b);
        }
    }

    #[test]
    fn exact_subsolver_halves_each_step() {
        let inst = gen_aggregate_finite_sum(5, 8, 10.0, 0.5, 3).unwrap();
        let p = inst.aggregate_finite_sum();
        let xs = p.quadratic().unwrap().exact_saddle().unwrap().x;
        let res = redx_convex(&p, &[1.0; 8], 10, &mut ExactSubsolver).unwrap();
        let v: Vec<f64> = res.iterates.iter().map(|(x, _)| 0.5 * dist_sq(x, &xs)).collect();
        for w in v.windows(2) {
            assert!(w[1] <= 0.5 * w[0] + 1e-9 * v[0]);
        }
        assert!(v[10] <= v[0] / 1024.0 * (1.0 + 1e-9));
    }

    #[test]
    fn trivial_cases() {
        let inst = gen_aggregate_finite_sum(3, 4, 4.0, 1.0, 4).unwrap();
        let p = inst.aggregate_finite_sum();
        let xs = p.quadratic().unwrap().exact_saddle().unwrap().x;
        let r = redx_convex(&p, &xs, 3, &mut ExactSubsolver).unwrap();
        for (x, _) in &r.iterates {
            assert!(rel_dist(x, &xs) < 1e-10);
        }
        let r = redx_convex(&p, &[0.5; 4], 0, &mut ExactSubsolver).unwrap();
        assert_eq!(r.x, vec![0.5; 4]);

        let inst = gen_aggregate_mmfs(2, 3, 2, 4.0, 1.0, 1.0, 1.0, 5).unwrap();
        let p = inst.aggregate_mmfs();
        let s = p.quadratic().unwrap().exact_saddle().unwrap();
        let r = redx_minimax(&p, &s.x, &s.y, 2, &mut ExactSubsolver).unwrap();
        assert!(rel_dist(&r.x, &s.x) < 1e-10 && rel_dist(&r.y, &s.y) < 1e-10);
        let r = redx_minimax(&p, &[1.0; 3], &[1.0; 2], 0, &mut ExactSubsolver).unwrap();
        assert_eq!((r.x, r.y), (vec![1.0; 3], vec![1.0; 2]));
    }

    #[test]
    fn minimax_exact_contraction() {
        let inst = gen_aggregate_mmfs(3, 4, 3, 6.0, 2.0, 0.5, 0.5, 6).unwrap();
        let p = inst.aggregate_mmfs();
        let s = p.quadratic().unwrap().exact_saddle().unwrap();
        let res = redx_minimax(&p, &[1.0; 4], &[-1.0; 3], 8, &mut ExactSubsolver).unwrap();
        let v: Vec<f64> = res
            .iterates
            .iter()
            .map(|(x, y)| omega_divergence(p.mu_x, p.mu_y, (x, y), (&s.x, &s.y)))
            .collect();
        for w in v.windows(2) {
            assert!(w[1] <= 0.5 * w[0] + 1e-9 * v[0]);
        }
        assert!(v[8] <= v[0] / 256.0 * (1.0 + 1e-9));
    }

    #[test]
    fn randomized_pipeline_reaches_tolerance() {
        let inst = gen_aggregate_finite_sum(4, 6, 4.0, 0.5, 7).unwrap();
        let p = inst.aggregate_finite_sum();
        let q = p.quadratic().unwrap();
        let x0 = vec![1.0; 6];
        let eps0 = q.gap(&x0, &[]).unwrap();
        let k = outer_steps_fs(&p, eps0, 1e-6).unwrap();
        let res = redx_convex(&p, &x0, k, &mut FsSubsolver::default()).unwrap();
        let gap = q.gap(&res.x, &[]).unwrap();
        assert!(gap <= 1e-6, "gap {gap} after {k} steps");
    }

    #[test]
    fn randomized_minimax_pipeline_reaches_tolerance() {
        let inst = gen_aggregate_mmfs(2, 3, 2, 3.0, 0.5, 1.0, 1.0, 8).unwrap();
        let p = inst.aggregate_mmfs();
        let q = p.quadratic().unwrap();
        let (x0, y0) = (vec![1.0; 3], vec![-1.0; 2]);
        let eps0 = q.gap(&x0, &y0).unwrap();
        let k = outer_steps_mmfs(&p, eps0, 1e-6).unwrap();
        let mut sub = MmfsSubsolver {
            phases: Some(2),
            ..MmfsSubsolver::default()
        };
        let res = redx_minimax(&p, &x0, &y0, k, &mut sub).unwrap();
        let gap = q.gap(&res.x, &res.y).unwrap();
        assert!(gap <= 1e-6, "gap {gap} after {k} steps");
    }
}
