//! Conjugate-tracking extragradient solver for separable minimax problems.
//!
//! The dual blocks of the lifted iterate are never stored directly. Each one
//! is represented by a primal pre-image `zf` (resp. `zg`) whose gradient is
//! the dual point, so the solver only ever calls `∇f`, `∇g` and `∇h`.

use std::sync::Arc;
use std::time::Instant;

use crate::engine::{Block, BlockKind, BlockRegularizer};
use crate::error::{PdxError, Result};
use crate::linalg::{axpy, dist_sq};
use crate::math::conjugate_divergence_via_primal;
use crate::oracle::OracleCalls;
use crate::problem::{MinimaxConstants, SeparableMinimaxProblem};
use crate::saddle::QuadraticSaddle;
use crate::trace::TraceRecord;

/// `1 + √(Lx/μx) + √(Ly/μy) + Λxx/μx + Λxy/√(μxμy) + Λyy/μy`
pub fn lambda_mm(c: &MinimaxConstants) -> Result<f64> {
    check_moduli(c.mu_x, c.mu_y)?;
    Ok(1.0
        + (c.lx / c.mu_x).sqrt()
        + (c.ly / c.mu_y).sqrt()
        + c.lam.xx / c.mu_x
        + c.lam.xy / (c.mu_x * c.mu_y).sqrt()
        + c.lam.yy / c.mu_y)
}

pub(crate) fn check_moduli(mu_x: f64, mu_y: f64) -> Result<()> {
    if !(mu_x > 0.0) {
        return Err(PdxError::NonPositiveModulus(format!("mu_x = {mu_x}")));
    }
    if !(mu_y > 0.0) {
        return Err(PdxError::NonPositiveModulus(format!("mu_y = {mu_y}")));
    }
    Ok(())
}

pub(crate) fn check_tolerance(eps0: f64, eps: f64) -> Result<()> {
    if !(eps > 0.0) || !(eps <= eps0) || !eps0.is_finite() {
        return Err(PdxError::InvalidTolerance { eps, eps0 });
    }
    Ok(())
}

/// `⌈ln(ratio) / ln(rate)⌉`, at least 1.
pub fn budget_from_ratio(ratio: f64, rate: f64) -> usize {
    if ratio <= 1.0 {
        return 1;
    }
    ((ratio.ln() / rate.ln()).ceil() as usize).max(1)
}

/// Initial potential bound and the potential that certifies an `ε` gap.
pub fn potential_bounds_mm(c: &MinimaxConstants, eps0: f64, eps: f64) -> (f64, f64) {
    let b0 = (1.0 + c.lx / c.mu_x + c.ly / c.mu_y) * eps0;
    let k = (c.mu_x + c.lx + c.lam.xx) / c.mu_x
        + (c.mu_y + c.ly + c.lam.yy) / c.mu_y
        + c.lam.xy * c.lam.xy / (c.mu_x * c.mu_y);
    (b0, 0.5 * eps / k)
}

pub fn iteration_budget_mm(lambda: f64, c: &MinimaxConstants, eps0: f64, eps: f64) -> Result<usize> {
    check_tolerance(eps0, eps)?;
    check_moduli(c.mu_x, c.mu_y)?;
    let (b0, bend) = potential_bounds_mm(c, eps0, eps);
    Ok(budget_from_ratio(b0 / bend, 1.0 + 1.0 / lambda))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimaxSchedule {
    pub lambda: f64,
    pub t: usize,
    pub m: f64,
}

/// Lifted iterate `(zx, zy, ∇f(zf), ∇g(zg))` with the two dual gradients
/// cached.
#[derive(Debug, Clone, PartialEq)]
pub struct MinimaxState {
    pub zx: Vec<f64>,
    pub zy: Vec<f64>,
    pub zf: Vec<f64>,
    pub zg: Vec<f64>,
    pub gf: Vec<f64>,
    pub gg: Vec<f64>,
}

impl MinimaxState {
    pub fn new(
        problem: &SeparableMinimaxProblem,
        zx: Vec<f64>,
        zy: Vec<f64>,
        zf: Vec<f64>,
        zg: Vec<f64>,
        calls: &mut OracleCalls,
    ) -> Self {
        let gf = problem.f.gradient(&zf);
        let gg = problem.g.gradient(&zg);
        calls.f += 1;
        calls.g += 1;
        MinimaxState {
            zx,
            zy,
            zf,
            zg,
            gf,
            gg,
        }
    }

    /// `z0 = (x0, y0, ∇f(x0), ∇g(y0))`
    pub fn initial(problem: &SeparableMinimaxProblem, x0: &[f64], y0: &[f64], calls: &mut OracleCalls) -> Self {
        Self::new(problem, x0.to_vec(), y0.to_vec(), x0.to_vec(), y0.to_vec(), calls)
    }

    /// Flat lifted vector `(zx, zy, ∇f(zf), ∇g(zg))`.
    pub fn lift(&self) -> Vec<f64> {
        [&self.zx[..], &self.zy, &self.gf, &self.gg].concat()
    }
}

/// `(μx zx + ∇f(zf) + ∇x h, μy zy + ∇g(zg) − ∇y h)`
fn primal_operator(
    p: &SeparableMinimaxProblem,
    zx: &[f64],
    zy: &[f64],
    gf: &[f64],
    gg: &[f64],
    calls: &mut OracleCalls,
) -> (Vec<f64>, Vec<f64>) {
    let mut px = p.h.grad_x(zx, zy);
    let hy = p.h.grad_y(zx, zy);
    calls.hx += 1;
    calls.hy += 1;
    axpy(p.mu_x, zx, &mut px);
    axpy(1.0, gf, &mut px);
    let mut py = gg.to_vec();
    axpy(p.mu_y, zy, &mut py);
    axpy(-1.0, &hy, &mut py);
    (px, py)
}

/// Lifted operator `Φ(z)` as a flat vector; the dual components are
/// `zf − zx` and `zg − zy`.
pub fn mm_operator(p: &SeparableMinimaxProblem, z: &MinimaxState) -> Vec<f64> {
    let mut scratch = OracleCalls::default();
    let (px, py) = primal_operator(p, &z.zx, &z.zy, &z.gf, &z.gg, &mut scratch);
    let df: Vec<f64> = z.zf.iter().zip(&z.zx).map(|(a, b)| a - b).collect();
    let dg: Vec<f64> = z.zg.iter().zip(&z.zy).map(|(a, b)| a - b).collect();
    [px, py, df, dg].concat()
}

/// `V^r_z(w)` with the dual blocks evaluated through their pre-images.
pub fn mm_divergence(p: &SeparableMinimaxProblem, z: &MinimaxState, w: &MinimaxState) -> f64 {
    0.5 * p.mu_x * dist_sq(&z.zx, &w.zx)
        + 0.5 * p.mu_y * dist_sq(&z.zy, &w.zy)
        + conjugate_divergence_via_primal(p.f.as_ref(), &z.zf, &w.zf).unwrap_or(f64::NAN)
        + conjugate_divergence_via_primal(p.g.as_ref(), &z.zg, &w.zg).unwrap_or(f64::NAN)
}

/// `V^r_z(z⋆)` where `z⋆ = (x⋆, y⋆, ∇f(x⋆), ∇g(y⋆))`.
pub fn mm_potential(p: &SeparableMinimaxProblem, z: &MinimaxState, xs: &[f64], ys: &[f64]) -> f64 {
    0.5 * p.mu_x * dist_sq(&z.zx, xs)
        + 0.5 * p.mu_y * dist_sq(&z.zy, ys)
        + conjugate_divergence_via_primal(p.f.as_ref(), &z.zf, xs).unwrap_or(f64::NAN)
        + conjugate_divergence_via_primal(p.g.as_ref(), &z.zg, ys).unwrap_or(f64::NAN)
}

/// One iteration: 2 calls each to `∇f`, `∇g`, `∇x h`, `∇y h`.
pub fn mm_step(
    p: &SeparableMinimaxProblem,
    s: &MinimaxState,
    lambda: f64,
    calls: &mut OracleCalls,
) -> MinimaxState {
    let (phx, phy) = primal_operator(p, &s.zx, &s.zy, &s.gf, &s.gg, calls);
    let xh: Vec<f64> = (0..s.zx.len())
        .map(|i| s.zx[i] - phx[i] / (lambda * p.mu_x))
        .collect();
    let yh: Vec<f64> = (0..s.zy.len())
        .map(|i| s.zy[i] - phy[i] / (lambda * p.mu_y))
        .collect();
    let a = 1.0 / lambda;
    let fh: Vec<f64> = (0..s.zf.len()).map(|i| (1.0 - a) * s.zf[i] + a * s.zx[i]).collect();
    let gh: Vec<f64> = (0..s.zg.len()).map(|i| (1.0 - a) * s.zg[i] + a * s.zy[i]).collect();
    let gfh = p.f.gradient(&fh);
    let ggh = p.g.gradient(&gh);
    calls.f += 1;
    calls.g += 1;
    let (phx2, phy2) = primal_operator(p, &xh, &yh, &gfh, &ggh, calls);

    let w = 1.0 / (1.0 + lambda);
    let zx: Vec<f64> = (0..xh.len())
        .map(|i| w * (lambda * s.zx[i] + xh[i] - phx2[i] / p.mu_x))
        .collect();
    let zy: Vec<f64> = (0..yh.len())
        .map(|i| w * (lambda * s.zy[i] + yh[i] - phy2[i] / p.mu_y))
        .collect();
    let zf: Vec<f64> = (0..xh.len()).map(|i| w * (lambda * s.zf[i] + xh[i])).collect();
    let zg: Vec<f64> = (0..yh.len()).map(|i| w * (lambda * s.zg[i] + yh[i])).collect();
    let gf = p.f.gradient(&zf);
    let gg = p.g.gradient(&zg);
    calls.f += 1;
    calls.g += 1;
    MinimaxState {
        zx,
        zy,
        zf,
        zg,
        gf,
        gg,
    }
}

/// Known solution for monitoring a run; never used by the iteration itself.
#[derive(Debug, Clone)]
pub struct Reference {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub gap: Option<QuadraticSaddle>,
}

impl Reference {
    /// Reference built from a closed-form quadratic description.
    pub fn from_saddle(q: QuadraticSaddle) -> Result<Self> {
        let s = q.exact_saddle()?;
        Ok(Reference {
            x: s.x,
            y: s.y,
            gap: Some(q),
        })
    }
}

#[derive(Debug, Clone)]
pub struct MinimaxConfig {
    pub eps0: f64,
    pub eps: f64,
    pub lambda: Option<f64>,
    pub iters: Option<usize>,
    pub reference: Option<Reference>,
    /// Stop as soon as the monitored gap (or, without a gap evaluator, the
    /// potential) certifies `eps`. Requires `reference`.
    pub early_stop: bool,
}

impl Default for MinimaxConfig {
    fn default() -> Self {
        MinimaxConfig {
            eps0: 1.0,
            eps: 1e-8,
            lambda: None,
            iters: None,
            reference: None,
            early_stop: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MinimaxResult {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub state: MinimaxState,
    pub schedule: MinimaxSchedule,
    pub calls: OracleCalls,
    pub trace: Vec<TraceRecord>,
    /// Steps actually taken (less than `schedule.t` after an early stop).
    pub steps: usize,
}

pub fn schedule_mm(p: &SeparableMinimaxProblem, cfg: &MinimaxConfig) -> Result<MinimaxSchedule> {
    let c = p.constants();
    let lambda = match cfg.lambda {
        Some(l) if l >= 1.0 => l,
        Some(l) => return Err(PdxError::InvalidSpec(format!("lambda = {l} < 1"))),
        None => lambda_mm(&c)?,
    };
    let t = match cfg.iters {
        Some(t) => t,
        None => iteration_budget_mm(lambda, &c, cfg.eps0, cfg.eps)?,
    };
    Ok(MinimaxSchedule { lambda, t, m: 1.0 })
}

pub fn solve_minimax(
    p: &SeparableMinimaxProblem,
    x0: &[f64],
    y0: &[f64],
    cfg: &MinimaxConfig,
) -> Result<MinimaxResult> {
    p.validate()?;
    check_tolerance(cfg.eps0, cfg.eps)?;
    let (dx, dy) = p.dims();
    if x0.len() != dx || y0.len() != dy {
        return Err(PdxError::DimMismatch(format!(
            "start ({}, {}) vs problem ({dx}, {dy})",
            x0.len(),
            y0.len()
        )));
    }
    let sched = schedule_mm(p, cfg)?;
    let bend = potential_bounds_mm(&p.constants(), cfg.eps0, cfg.eps).1;
    let start = Instant::now();
    let mut calls = OracleCalls::default();
    let mut s = MinimaxState::initial(p, x0, y0, &mut calls);
    let mut trace = Vec::with_capacity(sched.t + 1);
    let record = |t: usize, s: &MinimaxState, calls: &OracleCalls| -> Result<(TraceRecord, bool)> {
        let mut r = TraceRecord::new(t as u64, 0, calls, start);
        let mut done = false;
        if let Some(rf) = &cfg.reference {
            let pot = mm_potential(p, s, &rf.x, &rf.y);
            r.potential = Some(pot);
            done = pot <= bend;
            if let Some(q) = &rf.gap {
                let g = q.gap(&s.zx, &s.zy)?;
                r.gap = Some(g);
                done = g <= cfg.eps;
            }
        }
        Ok((r, done))
    };
    let (r, mut done) = record(0, &s, &calls)?;
    trace.push(r);
    let mut steps = 0;
    while steps < sched.t && !(cfg.early_stop && done) {
        s = mm_step(p, &s, sched.lambda, &mut calls);
        steps += 1;
        let (r, d) = record(steps, &s, &calls)?;
        done = d;
        trace.push(r);
    }
    log::debug!(
        "minimax: lambda = {:.4}, T = {}, steps = {}, calls = {:?}",
        sched.lambda,
        sched.t,
        steps,
        calls
    );
    Ok(MinimaxResult {
        x: s.zx.clone(),
        y: s.zy.clone(),
        state: s,
        schedule: sched,
        calls,
        trace,
        steps,
    })
}

/// The lifted problem for the reference engine: regularizer
/// `μx/2‖x‖² + μy/2‖y‖² + f*(p) + g*(q)` and operator
/// `(μx x + p + ∇x h, μy y + q − ∇y h, ∇f*(p) − x, ∇g*(q) − y)`.
pub struct MinimaxLift {
    pub problem: SeparableMinimaxProblem,
    pub reg: BlockRegularizer,
}

impl MinimaxLift {
    pub fn new(problem: &SeparableMinimaxProblem) -> Result<Self> {
        let (dx, dy) = problem.dims();
        let reg = BlockRegularizer::new(vec![
            Block {
                len: dx,
                kind: BlockKind::Euclidean(problem.mu_x),
            },
            Block {
                len: dy,
                kind: BlockKind::Euclidean(problem.mu_y),
            },
            Block {
                len: dx,
                kind: BlockKind::Conjugate {
                    oracle: Arc::clone(&problem.f),
                    weight: 1.0,
                },
            },
            Block {
                len: dy,
                kind: BlockKind::Conjugate {
                    oracle: Arc::clone(&problem.g),
                    weight: 1.0,
                },
            },
        ])?;
        Ok(MinimaxLift {
            problem: problem.clone(),
            reg,
        })
    }

    pub fn operator(&self, z: &[f64]) -> Vec<f64> {
        let p = &self.problem;
        let (dx, dy) = p.dims();
        let (x, rest) = z.split_at(dx);
        let (y, rest) = rest.split_at(dy);
        let (pf, pg) = rest.split_at(dx);
        let fc = p.f.conjugate().expect("conjugate checked at construction");
        let gc = p.g.conjugate().expect("conjugate checked at construction");
        let mut scratch = OracleCalls::default();
        let (px, py) = primal_operator(p, x, y, pf, pg, &mut scratch);
        let df: Vec<f64> = fc.conj_gradient(pf).iter().zip(x).map(|(a, b)| a - b).collect();
        let dg: Vec<f64> = gc.conj_gradient(pg).iter().zip(y).map(|(a, b)| a - b).collect();
        [px, py, df, dg].concat()
    }
}
