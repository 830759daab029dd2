//! Minimax finite sums: an approximate proximal point outer loop around a
//! partial-variance randomized extragradient inner solver.
//!
//! The inner solver works on the `γ`-regularized operator
//! `Φ(w) + γ(∇r(w) − ∇r(z̄))`. Every step samples a summand on each side for
//! the separable parts (`j ∼ p`, `k ∼ q`) and two coupling indices
//! (`ℓ, ℓ′ ∼ r`) whose gradients are taken relative to a phase anchor `w0`.
//! As in the finite-sum solver, dual blocks are stored as primal pre-images.

use std::sync::Arc;
use std::time::Instant;

use crate::engine::{Block, BlockKind, BlockRegularizer, Stage};
use crate::error::{PdxError, Result};
use crate::finitesum::sampling_p;
use crate::linalg::{axpy, dist_sq, norm};
use crate::math::{conjugate_divergence_via_primal, sample_index, DiscreteDistribution, SeededRng};
use crate::minimax::{budget_from_ratio, check_moduli, check_tolerance, potential_bounds_mm, Reference};
use crate::oracle::{CouplingConstants, OracleCalls};
use crate::problem::{MinimaxConstants, MinimaxFiniteSumProblem};
use crate::trace::TraceRecord;

/// A lifted point given by primal pre-images: `x`, `y` and one pre-image per
/// summand on each side.
#[derive(Debug, Clone, PartialEq)]
pub struct MmfsPoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub wf: Vec<Vec<f64>>,
    pub wg: Vec<Vec<f64>>,
}

impl MmfsPoint {
    /// Every pre-image at `(x, y)`.
    pub fn at(x: &[f64], y: &[f64], n: usize) -> Self {
        MmfsPoint {
            x: x.to_vec(),
            y: y.to_vec(),
            wf: vec![x.to_vec(); n],
            wg: vec![y.to_vec(); n],
        }
    }
}

/// `Λxx_i/μx + Λxy_i/√(μxμy) + Λyy_i/μy` per summand.
pub fn coupling_totals(p: &MinimaxFiniteSumProblem) -> Vec<f64> {
    p.h.iter()
        .map(|h| {
            let k = h.constants();
            k.xx / p.mu_x + k.xy / (p.mu_x * p.mu_y).sqrt() + k.yy / p.mu_y
        })
        .collect()
}

/// `λ^h = (1/n) Σ Λtot_i`
pub fn lambda_h(p: &MinimaxFiniteSumProblem) -> Result<f64> {
    check_moduli(p.mu_x, p.mu_y)?;
    let t = coupling_totals(p);
    if t.is_empty() {
        return Err(PdxError::EmptyList);
    }
    Ok(t.iter().sum::<f64>() / t.len() as f64)
}

/// Distributions over summands for `f` (from `√Lx_i`), `g` (from `√Ly_i`)
/// and `h` (from `Λtot_i`), each floored at `1/(2n)`.
pub fn sampling_pqr(
    p: &MinimaxFiniteSumProblem,
) -> Result<(DiscreteDistribution, DiscreteDistribution, DiscreteDistribution)> {
    check_moduli(p.mu_x, p.mu_y)?;
    let lx: Vec<f64> = p.f.iter().map(|f| f.smoothness()).collect();
    let ly: Vec<f64> = p.g.iter().map(|g| g.smoothness()).collect();
    // sampling_p takes square roots; feed it squares so r ends up ∝ Λtot
    let lt: Vec<f64> = coupling_totals(p).iter().map(|v| v * v).collect();
    Ok((sampling_p(&lx)?, sampling_p(&ly)?, sampling_p(&lt)?))
}

/// `n + (1/√n) Σ (√(Lx_i/μx) + √(Ly_i/μy) + Λtot_i)`
pub fn kappa_mmfs(p: &MinimaxFiniteSumProblem) -> f64 {
    let n = p.n() as f64;
    let tot = coupling_totals(p);
    let s: f64 = (0..p.n())
        .map(|i| {
            (p.f[i].smoothness() / p.mu_x).sqrt() + (p.g[i].smoothness() / p.mu_y).sqrt() + tot[i]
        })
        .sum();
    n + s / n.sqrt()
}

/// `10 Σ ((Lx_i + Λxx_i)/μx + (Ly_i + Λyy_i)/μy + Λxy_i/√(μxμy))²`
pub fn kappa_tilde(p: &MinimaxFiniteSumProblem) -> f64 {
    (0..p.n())
        .map(|i| {
            let k = p.h[i].constants();
            let v = (p.f[i].smoothness() + k.xx) / p.mu_x
                + (p.g[i].smoothness() + k.yy) / p.mu_y
                + k.xy / (p.mu_x * p.mu_y).sqrt();
            v * v
        })
        .sum::<f64>()
        * 10.0
}

/// Constants of the averaged problem, each taken as the mean over summands.
pub fn averaged_constants(p: &MinimaxFiniteSumProblem) -> MinimaxConstants {
    let n = p.n() as f64;
    let mut lam = CouplingConstants::default();
    for h in &p.h {
        let k = h.constants();
        lam.xx += k.xx / n;
        lam.xy += k.xy / n;
        lam.yy += k.yy / n;
    }
    MinimaxConstants {
        lx: p.f.iter().map(|f| f.smoothness()).sum::<f64>() / n,
        ly: p.g.iter().map(|g| g.smoothness()).sum::<f64>() / n,
        mu_x: p.mu_x,
        mu_y: p.mu_y,
        lam,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmfsSchedule {
    pub gamma: f64,
    pub lambda_h: f64,
    pub lambda1: f64,
    pub rho: f64,
    /// Step constant without the variance term `1/ρ`.
    pub lambda0: f64,
    pub lambda: f64,
    /// Phase length: `σ` is uniform on `{0, …, S−1}`.
    pub s: usize,
    /// Phases per outer step.
    pub n_phases: usize,
    /// `⌈log₂ κ_mmfs⌉`, recorded for comparison with `n_phases`.
    pub n_kappa: usize,
    /// Outer steps.
    pub t: usize,
    pub p: DiscreteDistribution,
    pub q: DiscreteDistribution,
    pub r: DiscreteDistribution,
}

/// Optional overrides of the derived schedule.
#[derive(Debug, Clone, Default)]
pub struct MmfsOverrides {
    pub gamma: Option<f64>,
    pub lambda: Option<f64>,
    pub steps: Option<usize>,
    pub phases: Option<usize>,
    pub outer: Option<usize>,
}

pub fn schedule_mmfs(p: &MinimaxFiniteSumProblem, eps0: f64, eps: f64) -> Result<MmfsSchedule> {
    schedule_mmfs_with(p, eps0, eps, &MmfsOverrides::default())
}

pub fn schedule_mmfs_with(
    p: &MinimaxFiniteSumProblem,
    eps0: f64,
    eps: f64,
    ov: &MmfsOverrides,
) -> Result<MmfsSchedule> {
    check_tolerance(eps0, eps)?;
    let lh = lambda_h(p)?;
    let n = p.n() as f64;
    let gamma = match ov.gamma {
        Some(g) if g > 0.0 => g,
        Some(g) => return Err(PdxError::InvalidSpec(format!("gamma = {g}"))),
        None => (lh / n.sqrt()).max(1.0),
    };
    let sx: f64 = p.f.iter().map(|f| f.smoothness().sqrt()).sum();
    let sy: f64 = p.g.iter().map(|g| g.smoothness().sqrt()).sum();
    let lambda0 = 2.0 * n * (1.0 + gamma)
        + 2.0 * sx / (n * p.mu_x).sqrt()
        + 2.0 * sy / (n * p.mu_y).sqrt()
        + 2.0 * lh;
    let lambda1 = 32.0 * lh * lh;
    let rho = if lambda1 > 0.0 { gamma / (5.0 * lambda1) } else { f64::INFINITY };
    let lambda = match ov.lambda {
        Some(v) if v > 0.0 => v,
        Some(v) => return Err(PdxError::InvalidSpec(format!("lambda = {v}"))),
        None => lambda0 + 160.0 * lh * lh / gamma,
    };
    let s = ov.steps.unwrap_or((5.0 * lambda / gamma).ceil() as usize).max(1);
    let kt = kappa_tilde(p);
    let n_phases = ov
        .phases
        .unwrap_or(((1.0 + 3.0 * gamma * kt).log2().ceil() as usize) + 1);
    let n_kappa = kappa_mmfs(p).log2().ceil().max(0.0) as usize;
    let t = match ov.outer {
        Some(t) => t,
        None => {
            let (b0, bend) = potential_bounds_mm(&averaged_constants(p), eps0, eps);
            budget_from_ratio(b0 / bend, (1.0 + 4.0 * gamma) / (4.0 * gamma))
        }
    };
    let (pd, qd, rd) = sampling_pqr(p)?;
    Ok(MmfsSchedule {
        gamma,
        lambda_h: lh,
        lambda1,
        rho,
        lambda0,
        lambda,
        s,
        n_phases,
        n_kappa,
        t,
        p: pd,
        q: qd,
        r: rd,
    })
}

/// Iterate with cached summand gradients at every pre-image.
#[derive(Debug, Clone, PartialEq)]
pub struct MmfsState {
    pub wx: Vec<f64>,
    pub wy: Vec<f64>,
    pub wf: Vec<Vec<f64>>,
    pub wg: Vec<Vec<f64>>,
    /// `gf[i] = ∇f_i(wf[i])`
    pub gf: Vec<Vec<f64>>,
    /// `gg[i] = ∇g_i(wg[i])`
    pub gg: Vec<Vec<f64>>,
    pub sum_gf: Vec<f64>,
    pub sum_gg: Vec<f64>,
}

impl MmfsState {
    /// `n` calls to each of `∇f_i` and `∇g_i`.
    pub fn from_point(p: &MinimaxFiniteSumProblem, pt: MmfsPoint, calls: &mut OracleCalls) -> Self {
        let gf: Vec<Vec<f64>> = p.f.iter().zip(&pt.wf).map(|(f, w)| f.gradient(w)).collect();
        let gg: Vec<Vec<f64>> = p.g.iter().zip(&pt.wg).map(|(g, w)| g.gradient(w)).collect();
        calls.f += p.n() as u64;
        calls.g += p.n() as u64;
        let mut sum_gf = vec![0.0; pt.x.len()];
        let mut sum_gg = vec![0.0; pt.y.len()];
        gf.iter().for_each(|v| axpy(1.0, v, &mut sum_gf));
        gg.iter().for_each(|v| axpy(1.0, v, &mut sum_gg));
        MmfsState {
            wx: pt.x,
            wy: pt.y,
            wf: pt.wf,
            wg: pt.wg,
            gf,
            gg,
            sum_gf,
            sum_gg,
        }
    }

    pub fn point(&self) -> MmfsPoint {
        MmfsPoint {
            x: self.wx.clone(),
            y: self.wy.clone(),
            wf: self.wf.clone(),
            wg: self.wg.clone(),
        }
    }

    /// Largest relative gap between a cached gradient sum and a fresh one.
    pub fn cache_drift(&self) -> f64 {
        let drift = |gs: &[Vec<f64>], sum: &[f64]| {
            let mut fresh = vec![0.0; sum.len()];
            gs.iter().for_each(|v| axpy(1.0, v, &mut fresh));
            let diff: Vec<f64> = fresh.iter().zip(sum).map(|(a, b)| a - b).collect();
            norm(&diff) / norm(&fresh).max(1.0)
        };
        drift(&self.gf, &self.sum_gf).max(drift(&self.gg, &self.sum_gg))
    }

    /// Lifted vector `(x, y, ∇f_1(wf_1), …, ∇f_n(wf_n), ∇g_1(wg_1), …)`.
    pub fn lift(&self) -> Vec<f64> {
        let mut out = [&self.wx[..], &self.wy].concat();
        self.gf.iter().for_each(|g| out.extend_from_slice(g));
        self.gg.iter().for_each(|g| out.extend_from_slice(g));
        out
    }
}

/// Phase anchor `w0` with its coupling gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Anchor {
    pub w0: MmfsState,
    /// `∇x h_i(w0)`
    pub hx: Vec<Vec<f64>>,
    /// `∇y h_i(w0)`
    pub hy: Vec<Vec<f64>>,
    /// `(1/n) Σ ∇x h_i(w0)`
    pub hx0: Vec<f64>,
    /// `−(1/n) Σ ∇y h_i(w0)`
    pub hy0: Vec<f64>,
}

impl Anchor {
    /// `n` calls to each of `∇x h_i` and `∇y h_i`.
    pub fn new(p: &MinimaxFiniteSumProblem, w0: MmfsState, calls: &mut OracleCalls) -> Self {
        let n = p.n() as f64;
        let hx: Vec<Vec<f64>> = p.h.iter().map(|h| h.grad_x(&w0.wx, &w0.wy)).collect();
        let hy: Vec<Vec<f64>> = p.h.iter().map(|h| h.grad_y(&w0.wx, &w0.wy)).collect();
        calls.hx += p.n() as u64;
        calls.hy += p.n() as u64;
        let mut hx0 = vec![0.0; w0.wx.len()];
        let mut hy0 = vec![0.0; w0.wy.len()];
        hx.iter().for_each(|v| axpy(1.0 / n, v, &mut hx0));
        hy.iter().for_each(|v| axpy(-1.0 / n, v, &mut hy0));
        Anchor { w0, hx, hy, hx0, hy0 }
    }

    /// Relative distance of the cached `Φ^h(w0)` from a recomputation.
    pub fn coherence_error(&self, p: &MinimaxFiniteSumProblem) -> f64 {
        let fresh = Anchor::new(p, self.w0.clone(), &mut OracleCalls::default());
        let a = [&self.hx0[..], &self.hy0].concat();
        let b = [&fresh.hx0[..], &fresh.hy0].concat();
        crate::linalg::rel_dist(&a, &b)
    }
}

/// Indices drawn for one step, in draw order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MmfsSample {
    pub j: usize,
    pub k: usize,
    pub l: usize,
    pub l2: usize,
}

impl MmfsSample {
    pub fn draw(s: &MmfsSchedule, rng: &mut SeededRng) -> Self {
        let j = sample_index(&s.p, rng);
        let k = sample_index(&s.q, rng);
        let l = sample_index(&s.r, rng);
        let l2 = sample_index(&s.r, rng);
        MmfsSample { j, k, l, l2 }
    }
}

/// `V^r_z(w)` through pre-images.
pub fn mmfs_divergence(p: &MinimaxFiniteSumProblem, z: &MmfsPoint, w: &MmfsPoint) -> f64 {
    let n = p.n() as f64;
    let mut dual = 0.0;
    for i in 0..p.n() {
        dual += conjugate_divergence_via_primal(p.f[i].as_ref(), &z.wf[i], &w.wf[i]).unwrap_or(f64::NAN);
        dual += conjugate_divergence_via_primal(p.g[i].as_ref(), &z.wg[i], &w.wg[i]).unwrap_or(f64::NAN);
    }
    0.5 * p.mu_x * dist_sq(&z.x, &w.x) + 0.5 * p.mu_y * dist_sq(&z.y, &w.y) + dual / n
}

/// Coupling part of the estimator at `(x, y)` with index `l`: `(Φx, Φy)`.
#[allow(clippy::too_many_arguments)]
fn coupling_part(
    p: &MinimaxFiniteSumProblem,
    a: &Anchor,
    rl: f64,
    l: usize,
    x: &[f64],
    y: &[f64],
    calls: &mut OracleCalls,
) -> (Vec<f64>, Vec<f64>) {
    let n = p.n() as f64;
    let gx = p.h[l].grad_x(x, y);
    let gy = p.h[l].grad_y(x, y);
    calls.hx += 1;
    calls.hy += 1;
    let c = 1.0 / (n * rl);
    let px = (0..x.len()).map(|i| a.hx0[i] + c * (gx[i] - a.hx[l][i])).collect();
    let py = (0..y.len()).map(|i| a.hy0[i] - c * (gy[i] - a.hy[l][i])).collect();
    (px, py)
}

/// One inner step on `s` for a fixed sample; returns the half-step
/// `(x, y)`. Two calls each to `∇f`, `∇g`, `∇x h`, `∇y h`.
pub fn mmfs_step(
    p: &MinimaxFiniteSumProblem,
    a: &Anchor,
    zbar: &MmfsPoint,
    s: &mut MmfsState,
    sched: &MmfsSchedule,
    smp: MmfsSample,
    calls: &mut OracleCalls,
) -> (Vec<f64>, Vec<f64>) {
    let n = p.n() as f64;
    let (lam, gam) = (sched.lambda, sched.gamma);
    let (dx, dy) = (s.wx.len(), s.wy.len());
    let MmfsSample { j, k, l, l2 } = smp;
    let (pj, qk) = (sched.p.weight(j), sched.q.weight(k));

    let (mut px, mut py) = coupling_part(p, a, sched.r.weight(l), l, &s.wx, &s.wy, calls);
    for i in 0..dx {
        px[i] += (1.0 + gam) * p.mu_x * s.wx[i] - gam * p.mu_x * zbar.x[i] + s.sum_gf[i] / n;
    }
    for i in 0..dy {
        py[i] += (1.0 + gam) * p.mu_y * s.wy[i] - gam * p.mu_y * zbar.y[i] + s.sum_gg[i] / n;
    }
    let xh: Vec<f64> = (0..dx).map(|i| s.wx[i] - px[i] / (lam * p.mu_x)).collect();
    let yh: Vec<f64> = (0..dy).map(|i| s.wy[i] - py[i] / (lam * p.mu_y)).collect();
    let cj = 1.0 / (lam * pj);
    let ck = 1.0 / (lam * qk);
    let fh: Vec<f64> = (0..dx)
        .map(|i| s.wf[j][i] - cj * ((1.0 + gam) * s.wf[j][i] - gam * zbar.wf[j][i] - s.wx[i]))
        .collect();
    let gh: Vec<f64> = (0..dy)
        .map(|i| s.wg[k][i] - ck * ((1.0 + gam) * s.wg[k][i] - gam * zbar.wg[k][i] - s.wy[i]))
        .collect();
    let dfh = p.f[j].gradient(&fh);
    let dgh = p.g[k].gradient(&gh);
    calls.f += 1;
    calls.g += 1;

    let (mut qx, mut qy) = coupling_part(p, a, sched.r.weight(l2), l2, &xh, &yh, calls);
    for i in 0..dx {
        qx[i] += (1.0 + gam) * p.mu_x * xh[i] - gam * p.mu_x * zbar.x[i]
            + s.sum_gf[i] / n
            + (dfh[i] - s.gf[j][i]) / (n * pj);
    }
    for i in 0..dy {
        qy[i] += (1.0 + gam) * p.mu_y * yh[i] - gam * p.mu_y * zbar.y[i]
            + s.sum_gg[i] / n
            + (dgh[i] - s.gg[k][i]) / (n * qk);
    }
    // the dual updates read the pre-step primal iterate through xh, yh only
    for i in 0..dx {
        s.wf[j][i] -= cj * ((1.0 + gam) * fh[i] - gam * zbar.wf[j][i] - xh[i]);
        s.wx[i] -= qx[i] / (lam * p.mu_x);
    }
    for i in 0..dy {
        s.wg[k][i] -= ck * ((1.0 + gam) * gh[i] - gam * zbar.wg[k][i] - yh[i]);
        s.wy[i] -= qy[i] / (lam * p.mu_y);
    }
    let nf = p.f[j].gradient(&s.wf[j]);
    let ng = p.g[k].gradient(&s.wg[k]);
    calls.f += 1;
    calls.g += 1;
    for i in 0..dx {
        s.sum_gf[i] += nf[i] - s.gf[j][i];
    }
    for i in 0..dy {
        s.sum_gg[i] += ng[i] - s.gg[k][i];
    }
    s.gf[j] = nf;
    s.gg[k] = ng;
    (xh, yh)
}

/// Rebases every dual pre-image of `s` as if its block had been sampled.
fn rebase_duals(s: &MmfsState, zbar: &MmfsPoint, sched: &MmfsSchedule) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let (lam, gam) = (sched.lambda, sched.gamma);
    let step = |w: &[f64], zb: &[f64], base: &[f64], c: f64| -> Vec<f64> {
        (0..w.len())
            .map(|i| w[i] - c * ((1.0 + gam) * w[i] - gam * zb[i] - base[i]))
            .collect()
    };
    let wf = (0..s.wf.len())
        .map(|i| step(&s.wf[i], &zbar.wf[i], &s.wx, 1.0 / (lam * sched.p.weight(i))))
        .collect();
    let wg = (0..s.wg.len())
        .map(|i| step(&s.wg[i], &zbar.wg[i], &s.wy, 1.0 / (lam * sched.q.weight(i))))
        .collect();
    (wf, wg)
}

/// One phase from the anchor: draws `σ`, runs steps `0..=σ`, and returns the
/// anchor at the aggregate point of step `σ` together with `σ`.
pub fn mmfs_inner_phase(
    p: &MinimaxFiniteSumProblem,
    a: &Anchor,
    zbar: &MmfsPoint,
    sched: &MmfsSchedule,
    rng: &mut SeededRng,
    calls: &mut OracleCalls,
) -> (Anchor, usize) {
    let sigma = rng.below(sched.s);
    let mut s = a.w0.clone();
    let mut agg = None;
    for step in 0..=sigma {
        let smp = MmfsSample::draw(sched, rng);
        if step == sigma {
            let (wf, wg) = rebase_duals(&s, zbar, sched);
            let (xh, yh) = mmfs_step(p, a, zbar, &mut s, sched, smp, calls);
            agg = Some(MmfsPoint { x: xh, y: yh, wf, wg });
        } else {
            mmfs_step(p, a, zbar, &mut s, sched, smp, calls);
        }
    }
    let w = MmfsState::from_point(p, agg.expect("at least one step"), calls);
    (Anchor::new(p, w, calls), sigma)
}

/// `N` phases started from the anchor at `z̄`.
pub fn mmfs_inner(
    p: &MinimaxFiniteSumProblem,
    a: &Anchor,
    sched: &MmfsSchedule,
    rng: &mut SeededRng,
    calls: &mut OracleCalls,
) -> (Anchor, Vec<usize>) {
    let zbar = a.w0.point();
    let mut cur = a.clone();
    let mut sigmas = Vec::with_capacity(sched.n_phases);
    for _ in 0..sched.n_phases {
        let (next, sigma) = mmfs_inner_phase(p, &cur, &zbar, sched, rng, calls);
        cur = next;
        sigmas.push(sigma);
    }
    (cur, sigmas)
}

#[derive(Debug, Clone)]
pub struct MmfsConfig {
    pub eps0: f64,
    pub eps: f64,
    pub seed: u64,
    pub overrides: MmfsOverrides,
    pub reference: Option<Reference>,
}

impl Default for MmfsConfig {
    fn default() -> Self {
        MmfsConfig {
            eps0: 1.0,
            eps: 1e-8,
            seed: 0,
            overrides: MmfsOverrides::default(),
            reference: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MmfsResult {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub state: MmfsState,
    pub schedule: MmfsSchedule,
    pub calls: OracleCalls,
    /// `σ` of every phase in execution order.
    pub sigmas: Vec<usize>,
    pub trace: Vec<TraceRecord>,
}

pub fn solve_mmfs(p: &MinimaxFiniteSumProblem, x0: &[f64], y0: &[f64], cfg: &MmfsConfig) -> Result<MmfsResult> {
    p.validate()?;
    check_tolerance(cfg.eps0, cfg.eps)?;
    let (dx, dy) = p.dims();
    if x0.len() != dx || y0.len() != dy {
        return Err(PdxError::DimMismatch(format!(
            "start dims ({}, {}) vs ({dx}, {dy})",
            x0.len(),
            y0.len()
        )));
    }
    let sched = schedule_mmfs_with(p, cfg.eps0, cfg.eps, &cfg.overrides)?;
    let start = Instant::now();
    let mut rng = SeededRng::new(cfg.seed);
    let mut calls = OracleCalls::default();
    let w0 = MmfsState::from_point(p, MmfsPoint::at(x0, y0, p.n()), &mut calls);
    let mut a = Anchor::new(p, w0, &mut calls);
    let record = |iter: usize, outer: usize, a: &Anchor, calls: &OracleCalls| -> Result<TraceRecord> {
        let mut r = TraceRecord::new(iter as u64, outer as u64, calls, start);
        if let Some(rf) = &cfg.reference {
            let star = MmfsPoint::at(&rf.x, &rf.y, p.n());
            r.potential = Some(mmfs_divergence(p, &a.w0.point(), &star));
            if let Some(q) = &rf.gap {
                r.gap = Some(q.gap(&a.w0.wx, &a.w0.wy)?);
            }
        }
        Ok(r)
    };
    let mut trace = vec![record(0, 0, &a, &calls)?];
    let mut sigmas = Vec::with_capacity(sched.t * sched.n_phases);
    for t in 0..sched.t {
        let zbar = a.w0.point();
        for tau in 0..sched.n_phases {
            let (next, sigma) = mmfs_inner_phase(p, &a, &zbar, &sched, &mut rng, &mut calls);
            a = next;
            sigmas.push(sigma);
            trace.push(record(tau + 1, t, &a, &calls)?);
        }
    }
    log::debug!(
        "mmfs: gamma = {:.3}, lambda = {:.4}, S = {}, N = {} (kappa form {}), T = {}",
        sched.gamma,
        sched.lambda,
        sched.s,
        sched.n_phases,
        sched.n_kappa,
        sched.t
    );
    Ok(MmfsResult {
        x: a.w0.wx.clone(),
        y: a.w0.wy.clone(),
        state: a.w0,
        schedule: sched,
        calls,
        sigmas,
        trace,
    })
}

/// Lifted `γ`-regularized problem for the reference engine. The lifted
/// coordinates are `(x, y, p_1, …, p_n, q_1, …, q_n)` with regularizer
/// `μx/2‖x‖² + μy/2‖y‖² + (1/n) Σ (f_i*(p_i) + g_i*(q_i))`.
pub struct MmfsLift {
    pub problem: MinimaxFiniteSumProblem,
    pub reg: BlockRegularizer,
    pub zbar: MmfsPoint,
    pub gamma: f64,
    pub p: DiscreteDistribution,
    pub q: DiscreteDistribution,
    pub r: DiscreteDistribution,
}

impl MmfsLift {
    pub fn new(problem: &MinimaxFiniteSumProblem, zbar: MmfsPoint, sched: &MmfsSchedule) -> Result<Self> {
        let (dx, dy) = problem.dims();
        let w = 1.0 / problem.n() as f64;
        let mut blocks = vec![
            Block {
                len: dx,
                kind: BlockKind::Euclidean(problem.mu_x),
            },
            Block {
                len: dy,
                kind: BlockKind::Euclidean(problem.mu_y),
            },
        ];
        for f in problem.f.iter().chain(&problem.g) {
            blocks.push(Block {
                len: f.dim(),
                kind: BlockKind::Conjugate {
                    oracle: Arc::clone(f),
                    weight: w,
                },
            });
        }
        Ok(MmfsLift {
            problem: problem.clone(),
            reg: BlockRegularizer::new(blocks)?,
            zbar,
            gamma: sched.gamma,
            p: sched.p.clone(),
            q: sched.q.clone(),
            r: sched.r.clone(),
        })
    }

    fn dual_pre(&self, z: &[f64], block: usize) -> Vec<f64> {
        let r = self.reg.block_range(block);
        let oracle = if block < 2 + self.problem.n() {
            &self.problem.f[block - 2]
        } else {
            &self.problem.g[block - 2 - self.problem.n()]
        };
        oracle.conjugate().unwrap().conj_gradient(&z[r])
    }

    /// Full regularized operator `Φ(z) + γ(∇r(z) − ∇r(z̄))`.
    pub fn operator(&self, z: &[f64]) -> Vec<f64> {
        let p = &self.problem;
        let n = p.n();
        let nf = n as f64;
        let (dx, dy) = p.dims();
        let (x, y) = (&z[..dx], &z[dx..dx + dy]);
        let gam = self.gamma;
        let mut out = vec![0.0; z.len()];
        for i in 0..n {
            axpy(1.0 / nf, &p.h[i].grad_x(x, y), &mut out[..dx]);
            axpy(-1.0 / nf, &p.h[i].grad_y(x, y), &mut out[dx..dx + dy]);
        }
        self.add_separable(z, z, &mut out);
        for i in 0..n {
            for (b, zb, base) in [(2 + i, &self.zbar.wf[i], x), (2 + n + i, &self.zbar.wg[i], y)] {
                let pre = self.dual_pre(z, b);
                for (c, o) in self.reg.block_range(b).enumerate() {
                    out[o] = ((1.0 + gam) * pre[c] - gam * zb[c] - base[c]) / nf;
                }
            }
        }
        out
    }

    /// `x`/`y` rows of the separable and bilinear parts at `at`, with the
    /// dual averages taken from `base`.
    fn add_separable(&self, base: &[f64], at: &[f64], out: &mut [f64]) {
        let p = &self.problem;
        let n = p.n();
        let nf = n as f64;
        let (dx, dy) = p.dims();
        let gam = self.gamma;
        for i in 0..dx {
            out[i] += (1.0 + gam) * p.mu_x * at[i] - gam * p.mu_x * self.zbar.x[i];
        }
        for i in 0..dy {
            out[dx + i] += (1.0 + gam) * p.mu_y * at[dx + i] - gam * p.mu_y * self.zbar.y[i];
        }
        for i in 0..n {
            axpy(1.0 / nf, &base[self.reg.block_range(2 + i)], &mut out[..dx]);
            axpy(1.0 / nf, &base[self.reg.block_range(2 + n + i)], &mut out[dx..dx + dy]);
        }
    }

    /// Sampled estimator relative to the anchor `(w0x, w0y)`: `ℓ` on the
    /// first stage, `ℓ′` on the second.
    pub fn estimator(
        &self,
        w0: (&[f64], &[f64]),
        smp: &MmfsSample,
        stage: Stage,
        base: &[f64],
        at: &[f64],
    ) -> Vec<f64> {
        let p = &self.problem;
        let n = p.n();
        let nf = n as f64;
        let (dx, dy) = p.dims();
        let gam = self.gamma;
        let (x, y) = (&at[..dx], &at[dx..dx + dy]);
        let mut out = self.coupling_part(w0, smp, stage, at);
        self.add_separable(base, at, &mut out);
        let (pj, qk) = (self.p.weight(smp.j), self.q.weight(smp.k));
        let rj = self.reg.block_range(2 + smp.j);
        let rk = self.reg.block_range(2 + n + smp.k);
        for (c, o) in rj.clone().enumerate() {
            out[c] += (at[o] - base[o]) / (nf * pj);
        }
        for (c, o) in rk.clone().enumerate() {
            out[dx + c] += (at[o] - base[o]) / (nf * qk);
        }
        let pre = self.dual_pre(at, 2 + smp.j);
        for (c, o) in rj.enumerate() {
            out[o] = ((1.0 + gam) * pre[c] - gam * self.zbar.wf[smp.j][c] - x[c]) / (nf * pj);
        }
        let pre = self.dual_pre(at, 2 + n + smp.k);
        for (c, o) in rk.enumerate() {
            out[o] = ((1.0 + gam) * pre[c] - gam * self.zbar.wg[smp.k][c] - y[c]) / (nf * qk);
        }
        out
    }

    /// Coupling part of the sampled estimator, zero outside the `x`/`y` rows.
    pub fn coupling_part(&self, w0: (&[f64], &[f64]), smp: &MmfsSample, stage: Stage, at: &[f64]) -> Vec<f64> {
        let p = &self.problem;
        let n = p.n();
        let nf = n as f64;
        let (dx, dy) = p.dims();
        let l = if stage == Stage::First { smp.l } else { smp.l2 };
        let c = 1.0 / (nf * self.r.weight(l));
        let (x, y) = (&at[..dx], &at[dx..dx + dy]);
        let mut out = vec![0.0; at.len()];
        for i in 0..n {
            axpy(1.0 / nf, &p.h[i].grad_x(w0.0, w0.1), &mut out[..dx]);
            axpy(-1.0 / nf, &p.h[i].grad_y(w0.0, w0.1), &mut out[dx..dx + dy]);
        }
        axpy(c, &p.h[l].grad_x(x, y), &mut out[..dx]);
        axpy(-c, &p.h[l].grad_x(w0.0, w0.1), &mut out[..dx]);
        axpy(-c, &p.h[l].grad_y(x, y), &mut out[dx..dx + dy]);
        axpy(c, &p.h[l].grad_y(w0.0, w0.1), &mut out[dx..dx + dy]);
        out
    }

    /// Lifted vector of a pre-image point.
    pub fn lift_point(&self, pt: &MmfsPoint) -> Vec<f64> {
        let p = &self.problem;
        let mut out = [&pt.x[..], &pt.y].concat();
        for (f, w) in p.f.iter().zip(&pt.wf) {
            out.extend(f.gradient(w));
        }
        for (g, w) in p.g.iter().zip(&pt.wg) {
            out.extend(g.gradient(w));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::rand_mirror_prox_generic;
    use crate::linalg::rel_dist;
    use crate::problem::{CouplingRef, SummandRef};
    use crate::quadratic::{QuadraticCoupling, QuadraticOracle};
    use crate::testbed::{gen_mmfs, MmfsSpec};
    use nalgebra::DMatrix;

    fn coupling_only(n: usize, xx: &[f64], xy: &[f64], yy: &[f64], mu_x: f64, mu_y: f64) -> MinimaxFiniteSumProblem {
        MinimaxFiniteSumProblem {
            f: (0..n).map(|_| Arc::new(QuadraticOracle::diagonal(vec![1.0], vec![0.0])) as SummandRef).collect(),
            g: (0..n).map(|_| Arc::new(QuadraticOracle::diagonal(vec![1.0], vec![0.0])) as SummandRef).collect(),
            h: (0..n)
                .map(|i| {
                    Arc::new(QuadraticCoupling::bilinear(DMatrix::zeros(1, 1)).with_constants(CouplingConstants {
                        xx: xx[i],
                        xy: xy[i],
                        yy: yy[i],
                    })) as CouplingRef
                })
                .collect(),
            mu_x,
            mu_y,
        }
    }

    #[test]
    fn lambda_h_examples() {
        assert_eq!(lambda_h(&coupling_only(2, &[1.0, 3.0], &[0.0; 2], &[0.0; 2], 1.0, 1.0)).unwrap(), 2.0);
        assert_eq!(lambda_h(&coupling_only(2, &[0.0; 2], &[0.0; 2], &[0.0; 2], 1.0, 1.0)).unwrap(), 0.0);
        assert_eq!(lambda_h(&coupling_only(1, &[0.0], &[4.0], &[0.0], 4.0, 1.0)).unwrap(), 2.0);
        assert!(lambda_h(&coupling_only(1, &[0.0], &[4.0], &[0.0], 0.0, 1.0)).is_err());
    }

    #[test]
    fn sampling_examples() {
        let p = coupling_only(2, &[1.0, 3.0], &[0.0; 2], &[0.0; 2], 1.0, 1.0);
        let (pd, qd, rd) = sampling_pqr(&p).unwrap();
        assert!((rd.weight(0) - 0.375).abs() < 1e-15 && (rd.weight(1) - 0.625).abs() < 1e-15);
        assert_eq!(pd.weights(), &[0.5, 0.5]);
        assert_eq!(qd.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn schedule_examples() {
        // λ^h = 2 with n = 4, all L and μ equal to one
        let p = coupling_only(4, &[2.0; 4], &[0.0; 4], &[0.0; 4], 1.0, 1.0);
        let s = schedule_mmfs(&p, 1.0, 1e-6).unwrap();
        assert_eq!(s.gamma, 1.0);
        assert!((s.lambda - 668.0).abs() < 1e-9);
        assert_eq!(s.s, 3340);
        assert_eq!(s.lambda1, 128.0);
        assert!((s.rho - 1.0 / 640.0).abs() < 1e-15);
        let kt = kappa_tilde(&p);
        assert_eq!(kt, 10.0 * 4.0 * 16.0);
        assert_eq!(s.n_phases, ((1.0 + 3.0 * kt).log2().ceil() as usize) + 1);

        let free = coupling_only(3, &[0.0; 3], &[0.0; 3], &[0.0; 3], 1.0, 1.0);
        let s = schedule_mmfs(&free, 1.0, 1e-6).unwrap();
        assert_eq!(s.gamma, 1.0);
        assert!((s.lambda - (12.0 + 2.0 * 2.0 * 3.0 / 3f64.sqrt())).abs() < 1e-9);

        let big = coupling_only(100, &[50.0; 100], &[0.0; 100], &[0.0; 100], 1.0, 1.0);
        assert_eq!(schedule_mmfs(&big, 1.0, 1e-6).unwrap().gamma, 5.0);
        assert!(matches!(schedule_mmfs(&big, 1.0, 2.0), Err(PdxError::InvalidTolerance { .. })));
    }

    fn small(seed: u64, n: usize) -> crate::testbed::QuadraticInstance {
        gen_mmfs(&MmfsSpec::uniform(n, 3, 2, 2.0, 1.5, 0.3, 0.5, 0.2, 1.0), seed).unwrap()
    }

    #[test]
    fn prox_solution_is_fixed_by_a_phase() {
        let inst = small(1, 3);
        let p = inst.mmfs_problem();
        let sched = schedule_mmfs(&p, 1.0, 1e-6).unwrap();
        let mut calls = OracleCalls::default();
        let zbar = MmfsPoint::at(&[0.5, -1.0, 0.2], &[1.0, 0.3], 3);
        let sol = inst.prox_solution(&zbar, sched.gamma).unwrap();
        let a = Anchor::new(&p, MmfsState::from_point(&p, sol.clone(), &mut calls), &mut calls);
        let (next, _) = mmfs_inner_phase(&p, &a, &zbar, &sched, &mut SeededRng::new(4), &mut calls);
        let w = next.w0.point();
        assert!(rel_dist(&w.x, &sol.x) < 1e-12);
        assert!(rel_dist(&w.y, &sol.y) < 1e-12);
        for i in 0..3 {
            assert!(rel_dist(&w.wf[i], &sol.wf[i]) < 1e-12);
            assert!(rel_dist(&w.wg[i], &sol.wg[i]) < 1e-12);
        }
    }

    #[test]
    fn step_call_counts() {
        let inst = small(2, 2);
        let p = inst.mmfs_problem();
        let sched = schedule_mmfs(&p, 1.0, 1e-6).unwrap();
        let mut calls = OracleCalls::default();
        let s0 = MmfsState::from_point(&p, MmfsPoint::at(&[1.0; 3], &[1.0; 2], 2), &mut calls);
        let a = Anchor::new(&p, s0.clone(), &mut calls);
        let zbar = s0.point();
        let mut s = s0;
        let before = calls;
        let smp = MmfsSample { j: 0, k: 1, l: 1, l2: 0 };
        mmfs_step(&p, &a, &zbar, &mut s, &sched, smp, &mut calls);
        assert_eq!(
            (calls.f - before.f, calls.g - before.g, calls.hx - before.hx, calls.hy - before.hy),
            (2, 2, 2, 2)
        );
        assert!(s.cache_drift() < 1e-14);
        assert!(a.coherence_error(&p) < 1e-10);
    }

    #[test]
    fn matches_engine_with_shared_draws() {
        let inst = small(3, 2);
        let mut p = inst.mmfs_problem();
        p.f = inst.f.iter().map(|f| Arc::new(f.shifted(0.2, &[0.0; 3])) as SummandRef).collect();
        p.g = inst.g.iter().map(|g| Arc::new(g.shifted(0.2, &[0.0; 2])) as SummandRef).collect();
        let sched = schedule_mmfs(&p, 1.0, 1e-6).unwrap();
        let mut calls = OracleCalls::default();
        let zbar = MmfsPoint {
            x: vec![0.3, -0.2, 0.5],
            y: vec![0.1, 0.4],
            wf: vec![vec![0.2, 0.1, 0.0], vec![-0.3, 0.2, 0.1]],
            wg: vec![vec![0.5, -0.5], vec![0.0, 0.3]],
        };
        let start = MmfsPoint::at(&[1.0, 0.5, -0.5], &[-1.0, 0.2], 2);
        let a = Anchor::new(&p, MmfsState::from_point(&p, start, &mut calls), &mut calls);
        let lift = MmfsLift::new(&p, zbar.clone(), &sched).unwrap();
        let (w0x, w0y) = (a.w0.wx.clone(), a.w0.wy.clone());
        let op = |smp: &MmfsSample, st: Stage, b: &[f64], at: &[f64]| lift.estimator((&w0x, &w0y), smp, st, b, at);
        let mut sampler = |r: &mut SeededRng| MmfsSample::draw(&sched, r);
        let (hist, end) =
            rand_mirror_prox_generic(&op, &mut sampler, &lift.reg, sched.lambda, 200, &mut SeededRng::new(9), &a.w0.lift());
        let mut s = a.w0.clone();
        let mut rng = SeededRng::new(9);
        for (w, half) in &hist {
            assert!(rel_dist(&s.lift(), w) < 1e-8);
            let smp = MmfsSample::draw(&sched, &mut rng);
            let (xh, yh) = mmfs_step(&p, &a, &zbar, &mut s, &sched, smp, &mut calls);
            assert!(rel_dist(&[xh, yh].concat(), &half[..5]) < 1e-8);
        }
        assert!(rel_dist(&s.lift(), &end) < 1e-8);
    }

    #[test]
    fn zero_phases_return_center() {
        let inst = small(4, 2);
        let p = inst.mmfs_problem();
        let mut sched = schedule_mmfs(&p, 1.0, 1e-6).unwrap();
        sched.n_phases = 0;
        let mut calls = OracleCalls::default();
        let a = Anchor::new(
            &p,
            MmfsState::from_point(&p, MmfsPoint::at(&[1.0; 3], &[2.0; 2], 2), &mut calls),
            &mut calls,
        );
        let (out, sig) = mmfs_inner(&p, &a, &sched, &mut SeededRng::new(0), &mut calls);
        assert_eq!(out, a);
        assert!(sig.is_empty());
    }

    #[test]
    fn accounting_and_reproducibility() {
        let inst = small(5, 2);
        let p = inst.mmfs_problem();
        let cfg = MmfsConfig {
            seed: 11,
            overrides: MmfsOverrides {
                phases: Some(2),
                outer: Some(2),
                ..Default::default()
            },
            ..Default::default()
        };
        let r1 = solve_mmfs(&p, &[0.0; 3], &[0.0; 2], &cfg).unwrap();
        let r2 = solve_mmfs(&p, &[0.0; 3], &[0.0; 2], &cfg).unwrap();
        assert_eq!(r1.x, r2.x);
        assert_eq!(r1.sigmas, r2.sigmas);
        assert_eq!(r1.sigmas.len(), 4);
        let n = 2u64;
        let per: u64 = r1.sigmas.iter().map(|s| 2 * (*s as u64 + 1) + n).sum();
        assert_eq!(r1.calls.f, n + per);
        assert_eq!(r1.calls.g, n + per);
        assert_eq!(r1.calls.hx, n + per);
        assert_eq!(r1.calls.hy, n + per);
        crate::trace::check_trace(&r1.trace).unwrap();
        assert_eq!(r1.trace.len(), 5);
    }

    #[test]
    fn saddle_start_is_kept() {
        // f = g = 0 with a bilinear-plus-quadratic coupling
        let h = QuadraticCoupling::new(
            crate::linalg::SymMatrix::Diagonal(vec![1.0]),
            DMatrix::from_row_slice(1, 1, &[2.0]),
            crate::linalg::SymMatrix::Diagonal(vec![0.5]),
        )
        .unwrap();
        let p = MinimaxFiniteSumProblem {
            f: vec![Arc::new(QuadraticOracle::diagonal(vec![0.0], vec![0.0]))],
            g: vec![Arc::new(QuadraticOracle::diagonal(vec![0.0], vec![0.0]))],
            h: vec![Arc::new(h)],
            mu_x: 1.0,
            mu_y: 1.0,
        };
        let cfg = MmfsConfig {
            overrides: MmfsOverrides {
                outer: Some(2),
                phases: Some(2),
                ..Default::default()
            },
            ..Default::default()
        };
        let res = solve_mmfs(&p, &[0.0], &[0.0], &cfg).unwrap();
        assert_eq!(res.x, vec![0.0]);
        assert_eq!(res.y, vec![0.0]);
    }

    #[test]
    fn converges_on_quadratic() {
        let inst = small(6, 3);
        let p = inst.mmfs_problem();
        let q = inst.saddle();
        let sol = q.exact_saddle().unwrap();
        let x0 = vec![1.0; 3];
        let y0 = vec![-1.0; 2];
        let eps0 = q.gap(&x0, &y0).unwrap();
        let cfg = MmfsConfig {
            eps0,
            eps: 1e-6,
            seed: 2,
            reference: Some(Reference::from_saddle(q.clone()).unwrap()),
            ..Default::default()
        };
        let res = solve_mmfs(&p, &x0, &y0, &cfg).unwrap();
        let gap = q.gap(&res.x, &res.y).unwrap();
        assert!(gap <= 2e-6, "gap {gap}");
        assert!(rel_dist(&res.x, &sol.x) < 1e-2);
    }
}
