//! Classical first-order baselines with the same call accounting as the
//! solvers: one full gradient of a finite sum costs `n` calls to `f`, and one
//! evaluation of the minimax gradient field costs one call to each of `f`,
//! `g`, `∇x h` and `∇y h`.

use std::time::Instant;

use crate::error::{PdxError, Result};
use crate::linalg::{axpy, lincomb};
use crate::oracle::OracleCalls;
use crate::problem::{FiniteSumProblem, SeparableMinimaxProblem};
use crate::saddle::QuadraticSaddle;
use crate::trace::TraceRecord;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineBudget {
    /// Hard cap on total gradient calls; an iteration that would exceed it is
    /// not started.
    pub max_calls: u64,
    /// Stop once the monitored gap is at most this value.
    pub target: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct BaselineRun {
    pub method: &'static str,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub iters: usize,
    pub calls: OracleCalls,
    /// Stopped by the budget rather than by reaching the target.
    pub truncated: bool,
    pub trace: Vec<TraceRecord>,
}

struct Monitor<'a> {
    gap: Option<&'a QuadraticSaddle>,
    target: Option<f64>,
    start: Instant,
    trace: Vec<TraceRecord>,
}

impl Monitor<'_> {
    /// Records a row; returns whether the target has been reached.
    fn record(&mut self, iter: usize, calls: &OracleCalls, x: &[f64], y: &[f64]) -> Result<bool> {
        let mut r = TraceRecord::new(iter as u64, 0, calls, self.start);
        let mut done = false;
        if let Some(q) = self.gap {
            let g = q.gap(x, y)?;
            r.gap = Some(g);
            done = self.target.is_some_and(|t| g <= t);
        }
        self.trace.push(r);
        Ok(done)
    }
}

fn check_target(budget: &BaselineBudget, gap: Option<&QuadraticSaddle>) -> Result<()> {
    if budget.target.is_some() && gap.is_none() {
        return Err(PdxError::InvalidSpec("a target needs a gap evaluator".into()));
    }
    Ok(())
}

fn full_gradient(p: &FiniteSumProblem, x: &[f64], calls: &mut OracleCalls) -> Vec<f64> {
    let n = p.n() as f64;
    let mut out: Vec<f64> = x.iter().map(|v| p.mu * v).collect();
    let mut buf = vec![0.0; x.len()];
    for f in &p.summands {
        f.gradient_into(x, &mut buf);
        axpy(1.0 / n, &buf, &mut out);
    }
    calls.f += p.n() as u64;
    out
}

/// Smoothness of the regularized average, `μ + (1/n)ΣL_i`.
pub fn average_smoothness(p: &FiniteSumProblem) -> f64 {
    p.mu + p.smoothness().iter().sum::<f64>() / p.n() as f64
}

/// Gradient descent on the regularized average with step `step` (default
/// `1/L`).
pub fn gradient_descent(
    p: &FiniteSumProblem,
    x0: &[f64],
    step: Option<f64>,
    budget: &BaselineBudget,
    gap: Option<&QuadraticSaddle>,
) -> Result<BaselineRun> {
    p.validate()?;
    check_target(budget, gap)?;
    let eta = step.unwrap_or_else(|| 1.0 / average_smoothness(p));
    let cost = p.n() as u64;
    let mut mon = Monitor {
        gap,
        target: budget.target,
        start: Instant::now(),
        trace: Vec::new(),
    };
    let mut calls = OracleCalls::default();
    let mut x = x0.to_vec();
    let mut done = mon.record(0, &calls, &x, &[])?;
    let mut iters = 0;
    while !done && calls.total() + cost <= budget.max_calls {
        let g = full_gradient(p, &x, &mut calls);
        axpy(-eta, &g, &mut x);
        iters += 1;
        done = mon.record(iters, &calls, &x, &[])?;
    }
    Ok(BaselineRun {
        method: "gd",
        x,
        y: Vec::new(),
        iters,
        calls,
        truncated: !done,
        trace: mon.trace,
    })
}

/// Nesterov's accelerated gradient for strongly convex functions, with the
/// finite sum treated as one function: step `1/L`, momentum
/// `(√κ − 1)/(√κ + 1)`.
pub fn nesterov_agd(
    p: &FiniteSumProblem,
    x0: &[f64],
    budget: &BaselineBudget,
    gap: Option<&QuadraticSaddle>,
) -> Result<BaselineRun> {
    p.validate()?;
    check_target(budget, gap)?;
    let l = average_smoothness(p);
    let rk = (l / p.mu).sqrt();
    let beta = (rk - 1.0) / (rk + 1.0);
    let cost = p.n() as u64;
    let mut mon = Monitor {
        gap,
        target: budget.target,
        start: Instant::now(),
        trace: Vec::new(),
    };
    let mut calls = OracleCalls::default();
    let mut x = x0.to_vec();
    let mut prev = x0.to_vec();
    let mut done = mon.record(0, &calls, &x, &[])?;
    let mut iters = 0;
    while !done && calls.total() + cost <= budget.max_calls {
        let mut y = lincomb(1.0 + beta, &x, -beta, &prev);
        let g = full_gradient(p, &y, &mut calls);
        axpy(-1.0 / l, &g, &mut y);
        prev = std::mem::replace(&mut x, y);
        iters += 1;
        done = mon.record(iters, &calls, &x, &[])?;
    }
    Ok(BaselineRun {
        method: "agd",
        x,
        y: Vec::new(),
        iters,
        calls,
        truncated: !done,
        trace: mon.trace,
    })
}

fn minimax_field(p: &SeparableMinimaxProblem, x: &[f64], y: &[f64], calls: &mut OracleCalls) -> (Vec<f64>, Vec<f64>) {
    let mut gx = p.f.gradient(x);
    axpy(p.mu_x, x, &mut gx);
    axpy(1.0, &p.h.grad_x(x, y), &mut gx);
    let mut gy = p.g.gradient(y);
    axpy(p.mu_y, y, &mut gy);
    axpy(-1.0, &p.h.grad_y(x, y), &mut gy);
    calls.f += 1;
    calls.g += 1;
    calls.hx += 1;
    calls.hy += 1;
    (gx, gy)
}

/// Lipschitz bound on the minimax gradient field
/// `max(μx + Lx + Λxx, μy + Ly + Λyy) + Λxy`.
pub fn field_lipschitz(p: &SeparableMinimaxProblem) -> f64 {
    let c = p.constants();
    (c.mu_x + c.lx + c.lam.xx).max(c.mu_y + c.ly + c.lam.yy) + c.lam.xy
}

/// Deterministic Euclidean extragradient with step `step` (default
/// `1/(2L)` for the field's Lipschitz bound `L`).
pub fn extragradient(
    p: &SeparableMinimaxProblem,
    x0: &[f64],
    y0: &[f64],
    step: Option<f64>,
    budget: &BaselineBudget,
    gap: Option<&QuadraticSaddle>,
) -> Result<BaselineRun> {
    p.validate()?;
    check_target(budget, gap)?;
    let eta = step.unwrap_or_else(|| 0.5 / field_lipschitz(p));
    let mut mon = Monitor {
        gap,
        target: budget.target,
        start: Instant::now(),
        trace: Vec::new(),
    };
    let mut calls = OracleCalls::default();
    let (mut x, mut y) = (x0.to_vec(), y0.to_vec());
    let mut done = mon.record(0, &calls, &x, &y)?;
    let mut iters = 0;
    while !done && calls.total() + 8 <= budget.max_calls {
        let (gx, gy) = minimax_field(p, &x, &y, &mut calls);
        let xh = lincomb(1.0, &x, -eta, &gx);
        let yh = lincomb(1.0, &y, -eta, &gy);
        let (gx, gy) = minimax_field(p, &xh, &yh, &mut calls);
        axpy(-eta, &gx, &mut x);
        axpy(-eta, &gy, &mut y);
        iters += 1;
        done = mon.record(iters, &calls, &x, &y)?;
    }
    Ok(BaselineRun {
        method: "extragradient",
        x,
        y,
        iters,
        calls,
        truncated: !done,
        trace: mon.trace,
    })
}

/// GD and AGD runs on a finite sum.
pub fn baselines_fs(
    p: &FiniteSumProblem,
    x0: &[f64],
    budget: &BaselineBudget,
    gap: Option<&QuadraticSaddle>,
) -> Result<Vec<BaselineRun>> {
    Ok(vec![
        gradient_descent(p, x0, None, budget, gap)?,
        nesterov_agd(p, x0, budget, gap)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadratic::QuadraticOracle;
    use crate::testbed::{gen_finite_sum, gen_quadratic_minimax, FiniteSumSpec, MinimaxSpec};
    use crate::saddle::QuadraticSaddle;
    use std::sync::Arc;

    fn two_scale(l: f64, mu: f64) -> FiniteSumProblem {
        FiniteSumProblem {
            summands: vec![Arc::new(QuadraticOracle::diagonal(vec![l - mu, 0.0], vec![0.0, 0.0]))],
            mu,
        }
    }

    #[test]
    fn gd_contracts_at_the_classical_rate() {
        let (l, mu) = (10.0, 1.0);
        let p = two_scale(l, mu);
        let budget = BaselineBudget {
            max_calls: 20,
            target: None,
        };
        let run = gradient_descent(&p, &[0.0, 1.0], None, &budget, None).unwrap();
        assert_eq!(run.iters, 20);
        assert!(run.truncated);
        let expect = (1.0 - mu / l).powi(20);
        assert!((run.x[1] - expect).abs() < 1e-14);
        assert_eq!(run.x[0], 0.0);
    }

    #[test]
    fn budget_exhaustion_sets_the_flag() {
        let inst = gen_finite_sum(&FiniteSumSpec::nonuniform(4, 3, 100.0, 1.0, 0.01), 1).unwrap();
        let p = inst.finite_sum_problem().unwrap();
        let q = inst.saddle();
        let budget = BaselineBudget {
            max_calls: 10,
            target: Some(1e-12),
        };
        for run in baselines_fs(&p, &[1.0; 3], &budget, Some(&q)).unwrap() {
            assert!(run.truncated, "{}", run.method);
            assert_eq!(run.iters, 2);
            assert_eq!(run.calls.f, 8);
            assert_eq!(run.trace.len(), 3);
        }
    }

    #[test]
    fn agd_beats_gd_on_ill_conditioned_sums() {
        let f = QuadraticOracle::diagonal(vec![1e4 - 1.0, 0.0], vec![0.0, 0.0]);
        let q = QuadraticSaddle::from_finite_sum(std::slice::from_ref(&f), 1.0);
        let p = FiniteSumProblem {
            summands: vec![Arc::new(f)],
            mu: 1.0,
        };
        let budget = BaselineBudget {
            max_calls: 1_000_000,
            target: Some(1e-8),
        };
        let gd = gradient_descent(&p, &[1.0; 2], None, &budget, Some(&q)).unwrap();
        let agd = nesterov_agd(&p, &[1.0; 2], &budget, Some(&q)).unwrap();
        assert!(!gd.truncated && !agd.truncated);
        assert!(agd.iters * 20 < gd.iters, "{} vs {}", agd.iters, gd.iters);
    }

    #[test]
    fn extragradient_reaches_the_saddle() {
        let inst = gen_quadratic_minimax(&MinimaxSpec::default(), 3).unwrap();
        let p = inst.minimax_problem().unwrap();
        let q = inst.saddle();
        let budget = BaselineBudget {
            max_calls: 1_000_000,
            target: Some(1e-9),
        };
        let run = extragradient(&p, &[1.0; 5], &[1.0; 5], None, &budget, Some(&q)).unwrap();
        assert!(!run.truncated);
        assert_eq!(run.calls.f, 2 * run.iters as u64);
        assert_eq!(run.calls.hy, 2 * run.iters as u64);
    }

    #[test]
    fn target_without_evaluator_is_rejected() {
        let p = two_scale(2.0, 1.0);
        let budget = BaselineBudget {
            max_calls: 10,
            target: Some(1.0),
        };
        assert!(gradient_descent(&p, &[0.0, 0.0], None, &budget, None).is_err());
    }
}
