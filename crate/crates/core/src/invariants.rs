//! Randomized checks of the structural inequalities the solvers rely on.
//!
//! Every suite draws random instances and points from a seed and records one
//! normalized violation per check: `(lhs − rhs) / max(1, |lhs|, |rhs|)` for
//! inequalities `lhs ≤ rhs`, and the relative difference for identities. A
//! check passes when its violation is at most the suite tolerance.

use std::sync::Arc;

use crate::engine::{BlockRegularizer, Stage};
use crate::error::{PdxError, Result};
use crate::finitesum::{lambda_fs, sampling_p, FsLift};
use crate::linalg::{dist_sq, dot, norm_sq, sub};
use crate::math::{conjugate_divergence_via_primal, SeededRng};
use crate::minimax::{lambda_mm, mm_divergence, mm_operator, MinimaxState};
use crate::mmfs::{schedule_mmfs, MmfsLift, MmfsPoint, MmfsSample};
use crate::oracle::{Conjugate, CouplingOracle, OracleCalls, SmoothConvexOracle};
use crate::problem::{FiniteSumProblem, MinimaxFiniteSumProblem, SeparableMinimaxProblem};
use crate::quadratic::QuadraticOracle;
use crate::sweep::seed_sweep;
use crate::testbed::{gen_finite_sum, gen_mmfs, FiniteSumSpec, MmfsSpec, QuadraticInstance};

/// Checks drawn per seed in every suite.
pub const CHECKS_PER_SEED: usize = 10;

/// Registered suite names, in the order `"all"` runs them.
pub const SUITES: &[&str] = &[
    "rel-lipschitz-mm",
    "strong-monotone-mm",
    "three-point",
    "unbiased-fs",
    "rel-lipschitz-fs",
    "strong-monotone-fs",
    "unbiased-mmfs",
    "strong-monotone-mmfs",
    "rel-lipschitz-mmfs-fg",
    "conjugate",
    "monotone",
    "gap",
    "constants",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: String,
    pub checks: usize,
    pub failures: usize,
    /// Largest normalized violation; negative values are slack.
    pub worst: f64,
    pub tol: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.checks > 0
    }
}

impl std::fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {}: {} checks, {} failures, worst {:.3e} (tol {:.0e})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.checks,
            self.failures,
            self.worst,
            self.tol
        )
    }
}

/// Runs one suite (or every suite for `"all"`) over seeds `0..seeds`.
pub fn invariant_suite(name: &str, seeds: u64) -> Result<Vec<SuiteReport>> {
    if name == "all" {
        return SUITES.iter().map(|s| run_one(s, seeds)).collect();
    }
    Ok(vec![run_one(name, seeds)?])
}

type SuiteFn = fn(u64) -> Vec<f64>;

fn lookup(name: &str) -> Option<(SuiteFn, f64)> {
    let entry: (SuiteFn, f64) = match name {
        "rel-lipschitz-mm" => (rel_lipschitz_mm, 1e-9),
        "strong-monotone-mm" => (strong_monotone_mm, 1e-9),
        "three-point" => (three_point, 1e-9),
        "unbiased-fs" => (unbiased_fs, 1e-10),
        "rel-lipschitz-fs" => (rel_lipschitz_fs, 1e-9),
        "strong-monotone-fs" => (strong_monotone_fs, 1e-9),
        "unbiased-mmfs" => (unbiased_mmfs, 1e-10),
        "strong-monotone-mmfs" => (strong_monotone_mmfs, 1e-9),
        "rel-lipschitz-mmfs-fg" => (rel_lipschitz_mmfs_fg, 1e-9),
        "conjugate" => (conjugate, 1e-9),
        "monotone" => (monotone, 1e-9),
        "gap" => (gap, 1e-9),
        "constants" => (constants, 1e-9),
        _ => return None,
    };
    Some(entry)
}

fn run_one(name: &str, seeds: u64) -> Result<SuiteReport> {
    let (f, tol) = lookup(name).ok_or_else(|| PdxError::UnknownSuite(name.to_string()))?;
    let seeds: Vec<u64> = (0..seeds).collect();
    let all: Vec<f64> = seed_sweep(&seeds, f).into_iter().flatten().collect();
    Ok(SuiteReport {
        name: name.to_string(),
        checks: all.len(),
        failures: all.iter().filter(|v| !(**v <= tol)).count(),
        worst: all.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        tol,
    })
}

fn le(lhs: f64, rhs: f64) -> f64 {
    (lhs - rhs) / 1f64.max(lhs.abs()).max(rhs.abs())
}

fn eq(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

fn suite_rng(seed: u64, salt: u64) -> SeededRng {
    SeededRng::new(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ salt)
}

fn random_mmfs(rng: &mut SeededRng, seed: u64, n: usize) -> QuadraticInstance {
    let dx = 1 + rng.below(3);
    let dy = 1 + rng.below(3);
    let mut draw = |hi: f64| (0..n).map(|_| rng.range(0.0, hi)).collect::<Vec<_>>();
    let spec = MmfsSpec {
        dx,
        dy,
        lx: draw(10.0),
        ly: draw(10.0),
        lxx: draw(4.0),
        lxy: draw(4.0),
        lyy: draw(4.0),
        mu_x: rng.range(0.1, 2.0),
        mu_y: rng.range(0.1, 2.0),
        dense: true,
    };
    gen_mmfs(&spec, seed).expect("valid random spec")
}

fn random_fs(rng: &mut SeededRng, seed: u64, n: usize) -> QuadraticInstance {
    let d = 1 + rng.below(3);
    let l = (0..n).map(|_| rng.range(0.0, 20.0)).collect();
    let spec = FiniteSumSpec {
        d,
        l,
        mu: rng.range(0.1, 2.0),
        dense: true,
    };
    gen_finite_sum(&spec, seed).expect("valid random spec")
}

/// Adds `0.2·I` to every summand so explicit conjugates exist.
fn invertible(mut inst: QuadraticInstance) -> QuadraticInstance {
    let shift = |f: &QuadraticOracle| f.shifted(0.2, &vec![0.0; f.linear().len()]);
    inst.f = inst.f.iter().map(shift).collect();
    inst.g = inst.g.iter().map(shift).collect();
    inst
}

fn random_state(p: &SeparableMinimaxProblem, rng: &mut SeededRng) -> MinimaxState {
    let (dx, dy) = p.dims();
    let mut calls = OracleCalls::default();
    MinimaxState::new(
        p,
        rng.normal_vec(dx),
        rng.normal_vec(dy),
        rng.normal_vec(dx),
        rng.normal_vec(dy),
        &mut calls,
    )
}

fn mm_setup(seed: u64, salt: u64) -> (SeparableMinimaxProblem, SeededRng) {
    let mut rng = suite_rng(seed, salt);
    let p = random_mmfs(&mut rng, seed, 1).minimax_problem().expect("n = 1");
    (p, rng)
}

/// `⟨Φ(w) − Φ(z), w − u⟩ ≤ λ(V_z(w) + V_w(u))` with the minimax constant.
fn rel_lipschitz_mm(seed: u64) -> Vec<f64> {
    let (p, mut rng) = mm_setup(seed, 1);
    let lam = lambda_mm(&p.constants()).expect("positive moduli");
    (0..CHECKS_PER_SEED)
        .map(|_| {
            let [z, w, u] = [0, 1, 2].map(|_| random_state(&p, &mut rng));
            let lhs = dot(&sub(&mm_operator(&p, &w), &mm_operator(&p, &z)), &sub(&w.lift(), &u.lift()));
            let rhs = lam * (mm_divergence(&p, &z, &w) + mm_divergence(&p, &w, &u));
            le(lhs, rhs)
        })
        .collect()
}

/// `⟨Φ(z) − Φ(z′), z − z′⟩ ≥ V_z(z′) + V_z′(z)`.
fn strong_monotone_mm(seed: u64) -> Vec<f64> {
    let (p, mut rng) = mm_setup(seed, 2);
    (0..CHECKS_PER_SEED)
        .map(|_| {
            let [z, w] = [0, 1].map(|_| random_state(&p, &mut rng));
            let lhs = dot(&sub(&mm_operator(&p, &z), &mm_operator(&p, &w)), &sub(&z.lift(), &w.lift()));
            let rhs = mm_divergence(&p, &z, &w) + mm_divergence(&p, &w, &z);
            le(rhs, lhs)
        })
        .collect()
}

/// `∇r(z) = (μx zx, μy zy, zf, zg)` through pre-images.
fn reg_grad(p: &SeparableMinimaxProblem, z: &MinimaxState) -> Vec<f64> {
    let gx: Vec<f64> = z.zx.iter().map(|v| p.mu_x * v).collect();
    let gy: Vec<f64> = z.zy.iter().map(|v| p.mu_y * v).collect();
    [&gx[..], &gy, &z.zf, &z.zg].concat()
}

/// The three-point identity
/// `⟨∇r(w) − ∇r(z), w − u⟩ = V_z(w) + V_w(u) − V_z(u)`, and with it the
/// relative Lipschitzness of `∇r` with constant 1.
fn three_point(seed: u64) -> Vec<f64> {
    let (p, mut rng) = mm_setup(seed, 3);
    let mut out = Vec::with_capacity(CHECKS_PER_SEED);
    for _ in 0..CHECKS_PER_SEED / 2 {
        let [z, w, u] = [0, 1, 2].map(|_| random_state(&p, &mut rng));
        let lhs = dot(&sub(&reg_grad(&p, &w), &reg_grad(&p, &z)), &sub(&w.lift(), &u.lift()));
        let (vzw, vwu, vzu) = (
            mm_divergence(&p, &z, &w),
            mm_divergence(&p, &w, &u),
            mm_divergence(&p, &z, &u),
        );
        out.push(eq(lhs, vzw + vwu - vzu));
        out.push(le(lhs, vzw + vwu));
    }
    out
}

fn random_lifted_fs(lift: &FsLift, rng: &mut SeededRng) -> Vec<f64> {
    let p = &lift.problem;
    let mut z = rng.normal_vec(p.dim());
    for f in &p.summands {
        z.extend(f.gradient(&rng.normal_vec(p.dim())));
    }
    z
}

fn fs_setup(seed: u64, salt: u64) -> (FsLift, f64, SeededRng) {
    let mut rng = suite_rng(seed, salt);
    let n = 1 + rng.below(3);
    let inst = invertible(random_fs(&mut rng, seed, n));
    let p: FiniteSumProblem = inst.finite_sum_problem().expect("dy = 0");
    let l = p.smoothness();
    let lam = lambda_fs(n, &l, p.mu).expect("positive modulus");
    let lift = FsLift::new(&p, sampling_p(&l).expect("valid constants")).expect("invertible summands");
    (lift, lam, rng)
}

/// Auxiliary and next points of one randomized step with sample `j`.
fn fs_points(lift: &FsLift, lam: f64, j: usize, w: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let phi1 = lift.estimator(j, w, w);
    let aux = lift.reg.prox(w, &scaled(&phi1, 1.0 / lam));
    let phi2 = lift.estimator(j, w, &aux);
    let next = lift.reg.prox(w, &scaled(&phi2, 1.0 / lam));
    (phi1, aux, phi2, next)
}

fn scaled(v: &[f64], c: f64) -> Vec<f64> {
    v.iter().map(|a| a * c).collect()
}

/// `E_j⟨Φ_j(w_aux(j)), w_aux(j) − u⟩ = ⟨Φ(w̄), w̄ − u⟩` by enumeration, where
/// `w̄` takes block `j` from `w_aux(j)`.
fn unbiased_fs(seed: u64) -> Vec<f64> {
    let (lift, lam, mut rng) = fs_setup(seed, 4);
    let n = lift.problem.n();
    (0..CHECKS_PER_SEED)
        .map(|_| {
            let w = random_lifted_fs(&lift, &mut rng);
            let u = random_lifted_fs(&lift, &mut rng);
            let mut lhs = 0.0;
            let mut bar = w.clone();
            for j in 0..n {
                let (_, aux, phi2, _) = fs_points(&lift, lam, j, &w);
                lhs += lift.dist.weight(j) * dot(&phi2, &sub(&aux, &u));
                let r0 = lift.reg.block_range(0);
                bar[r0.clone()].copy_from_slice(&aux[r0]);
                let rj = lift.reg.block_range(j + 1);
                bar[rj.clone()].copy_from_slice(&aux[rj]);
            }
            let rhs = dot(&lift.operator(&bar), &sub(&bar, &u));
            eq(lhs, rhs)
        })
        .collect()
}

/// `E⟨Φ_j(w_aux) − Φ_j(w), w_aux − w₊⟩ ≤ λ E[V_w(w_aux) + V_{w_aux}(w₊)]`.
fn rel_lipschitz_fs(seed: u64) -> Vec<f64> {
    let (lift, lam, mut rng) = fs_setup(seed, 5);
    let n = lift.problem.n();
    (0..CHECKS_PER_SEED)
        .map(|_| {
            let w = random_lifted_fs(&lift, &mut rng);
            let (mut lhs, mut rhs) = (0.0, 0.0);
            for j in 0..n {
                let pj = lift.dist.weight(j);
                let (phi1, aux, phi2, next) = fs_points(&lift, lam, j, &w);
                lhs += pj * dot(&sub(&phi2, &phi1), &sub(&aux, &next));
                rhs += pj * (lift.reg.divergence(&w, &aux) + lift.reg.divergence(&aux, &next));
            }
            le(lhs, lam * rhs)
        })
        .collect()
}

fn strong_monotone_lifted(
    op: &dyn Fn(&[f64]) -> Vec<f64>,
    reg: &BlockRegularizer,
    m: f64,
    z: &[f64],
    w: &[f64],
) -> f64 {
    let lhs = dot(&sub(&op(z), &op(w)), &sub(z, w));
    let rhs = m * (reg.divergence(z, w) + reg.divergence(w, z));
    le(rhs, lhs)
}

fn strong_monotone_fs(seed: u64) -> Vec<f64> {
    let (lift, _, mut rng) = fs_setup(seed, 6);
    (0..CHECKS_PER_SEED)
        .map(|_| {
            let z = random_lifted_fs(&lift, &mut rng);
            let w = random_lifted_fs(&lift, &mut rng);
            strong_monotone_lifted(&|v| lift.operator(v), &lift.reg, 1.0, &z, &w)
        })
        .collect()
}

struct MmfsCase {
    lift: MmfsLift,
    lambda: f64,
    lambda_fg: f64,
    rng: SeededRng,
}

fn random_point(p: &MinimaxFiniteSumProblem, rng: &mut SeededRng) -> MmfsPoint {
    let (dx, dy) = p.dims();
    MmfsPoint {
        x: rng.normal_vec(dx),
        y: rng.normal_vec(dy),
        wf: (0..p.n()).map(|_| rng.normal_vec(dx)).collect(),
        wg: (0..p.n()).map(|_| rng.normal_vec(dy)).collect(),
    }
}

fn mmfs_setup(seed: u64, salt: u64) -> MmfsCase {
    let mut rng = suite_rng(seed, salt);
    let n = 1 + rng.below(2);
    let p = invertible(random_mmfs(&mut rng, seed, n)).mmfs_problem();
    let sched = schedule_mmfs(&p, 1.0, 1e-3).expect("valid problem");
    let zbar = random_point(&p, &mut rng);
    let nf = n as f64;
    let root = |l: f64, mu: f64| l.sqrt() / (nf * mu).sqrt();
    let lambda_fg = 2.0 * nf * (1.0 + sched.gamma)
        + p.f.iter().map(|f| root(f.smoothness(), p.mu_x)).sum::<f64>()
        + p.g.iter().map(|g| root(g.smoothness(), p.mu_y)).sum::<f64>();
    MmfsCase {
        lift: MmfsLift::new(&p, zbar, &sched).expect("invertible summands"),
        lambda: sched.lambda,
        lambda_fg,
        rng,
    }
}

fn all_samples(n: usize) -> Vec<MmfsSample> {
    let mut out = Vec::with_capacity(n.pow(4));
    for j in 0..n {
        for k in 0..n {
            for l in 0..n {
                for l2 in 0..n {
                    out.push(MmfsSample { j, k, l, l2 });
                }
            }
        }
    }
    out
}

struct MmfsStep {
    weight: f64,
    smp: MmfsSample,
    phi1: Vec<f64>,
    aux: Vec<f64>,
    phi2: Vec<f64>,
    next: Vec<f64>,
}

/// Every sample of one randomized step from `w` with anchor `w0`.
fn mmfs_steps(c: &MmfsCase, w0: (&[f64], &[f64]), w: &[f64]) -> Vec<MmfsStep> {
    let lift = &c.lift;
    all_samples(lift.problem.n())
        .into_iter()
        .map(|smp| {
            let weight = lift.p.weight(smp.j) * lift.q.weight(smp.k) * lift.r.weight(smp.l) * lift.r.weight(smp.l2);
            let phi1 = lift.estimator(w0, &smp, Stage::First, w, w);
            let aux = lift.reg.prox(w, &scaled(&phi1, 1.0 / c.lambda));
            let phi2 = lift.estimator(w0, &smp, Stage::Second, w, &aux);
            let next = lift.reg.prox(w, &scaled(&phi2, 1.0 / c.lambda));
            MmfsStep {
                weight,
                smp,
                phi1,
                aux,
                phi2,
                next,
            }
        })
        .collect()
}

/// Enumeration over `(j, k, ℓ, ℓ′)`: the second-stage estimator is unbiased
/// for `Φ` at the point that takes its `x`/`y` rows from `w_aux(ℓ)` and each
/// dual block from the auxiliary point that sampled it.
fn unbiased_mmfs(seed: u64) -> Vec<f64> {
    let mut c = mmfs_setup(seed, 7);
    let p = c.lift.problem.clone();
    let n = p.n();
    let (dx, dy) = p.dims();
    (0..CHECKS_PER_SEED)
        .map(|_| {
            let w = c.lift.lift_point(&random_point(&p, &mut c.rng));
            let u = c.lift.lift_point(&random_point(&p, &mut c.rng));
            let (ax, ay) = (c.rng.normal_vec(dx), c.rng.normal_vec(dy));
            let steps = mmfs_steps(&c, (&ax, &ay), &w);
            let lhs: f64 = steps.iter().map(|s| s.weight * dot(&s.phi2, &sub(&s.aux, &u))).sum();
            let mut rhs = 0.0;
            for l in 0..n {
                let mut bar = w.clone();
                for s in steps.iter().filter(|s| s.smp.l == l) {
                    bar[..dx + dy].copy_from_slice(&s.aux[..dx + dy]);
                    for b in [2 + s.smp.j, 2 + n + s.smp.k] {
                        let r = c.lift.reg.block_range(b);
                        bar[r.clone()].copy_from_slice(&s.aux[r]);
                    }
                }
                rhs += c.lift.r.weight(l) * dot(&c.lift.operator(&bar), &sub(&bar, &u));
            }
            eq(lhs, rhs)
        })
        .collect()
}

/// The regularized operator is `(1 + γ)`-strongly monotone.
fn strong_monotone_mmfs(seed: u64) -> Vec<f64> {
    let mut c = mmfs_setup(seed, 8);
    let p = c.lift.problem.clone();
    (0..CHECKS_PER_SEED)
        .map(|_| {
            let z = c.lift.lift_point(&random_point(&p, &mut c.rng));
            let w = c.lift.lift_point(&random_point(&p, &mut c.rng));
            strong_monotone_lifted(&|v| c.lift.operator(v), &c.lift.reg, 1.0 + c.lift.gamma, &z, &w)
        })
        .collect()
}

/// Expected relative Lipschitzness of the separable and bilinear parts of
/// the estimators, with the coupling parts removed.
fn rel_lipschitz_mmfs_fg(seed: u64) -> Vec<f64> {
    let mut c = mmfs_setup(seed, 9);
    let p = c.lift.problem.clone();
    let (dx, dy) = p.dims();
    (0..CHECKS_PER_SEED)
        .map(|_| {
            let w = c.lift.lift_point(&random_point(&p, &mut c.rng));
            let (ax, ay) = (c.rng.normal_vec(dx), c.rng.normal_vec(dy));
            let w0 = (&ax[..], &ay[..]);
            let (mut lhs, mut rhs) = (0.0, 0.0);
            for s in mmfs_steps(&c, w0, &w) {
                let fg1 = sub(&s.phi1, &c.lift.coupling_part(w0, &s.smp, Stage::First, &w));
                let fg2 = sub(&s.phi2, &c.lift.coupling_part(w0, &s.smp, Stage::Second, &s.aux));
                lhs += s.weight * dot(&sub(&fg2, &fg1), &sub(&s.aux, &s.next));
                rhs += s.weight * (c.lift.reg.divergence(&w, &s.aux) + c.lift.reg.divergence(&s.aux, &s.next));
            }
            le(lhs, c.lambda_fg * rhs)
        })
        .collect()
}

/// Conjugate facts for an invertible quadratic: Fenchel-Young equality,
/// `∇f*(∇f(x)) = x`, divergence duality, and `1/L` strong convexity of `f*`.
fn conjugate(seed: u64) -> Vec<f64> {
    let mut rng = suite_rng(seed, 10);
    let inst = invertible(random_fs(&mut rng, seed, 1));
    let f = &inst.f[0];
    let d = f.linear().len();
    let l = f.smoothness();
    let mut out = Vec::with_capacity(CHECKS_PER_SEED);
    for _ in 0..CHECKS_PER_SEED / 5 {
        let (x, x2) = (rng.normal_vec(d), rng.normal_vec(d));
        let (gx, gx2) = (f.gradient(&x), f.gradient(&x2));
        out.push(eq(f.value(&x) + f.conj_value(&gx), dot(&gx, &x)));
        out.push(eq(norm_sq(&sub(&f.conj_gradient(&gx), &x)).sqrt(), 0.0));
        let explicit = f.conj_value(&gx2) - f.conj_value(&gx) - dot(&f.conj_gradient(&gx), &sub(&gx2, &gx));
        let primal = conjugate_divergence_via_primal(f, &x, &x2).expect("matching dims");
        out.push(eq(explicit, primal));
        let fwd = f.value(&x) - f.value(&x2) - dot(&gx2, &sub(&x, &x2));
        out.push(eq(primal, fwd));
        out.push(le(dist_sq(&gx, &gx2) / (2.0 * l), explicit));
    }
    out
}

/// Co-coercivity of convex gradients and monotonicity of the coupling's
/// gradient field `(∇x h, −∇y h)`.
fn monotone(seed: u64) -> Vec<f64> {
    let mut rng = suite_rng(seed, 11);
    let inst = random_mmfs(&mut rng, seed, 1);
    let (f, h) = (&inst.f[0], &inst.h[0]);
    let (dx, dy) = inst.dims();
    let l = f.smoothness();
    let mut out = Vec::with_capacity(CHECKS_PER_SEED);
    for _ in 0..CHECKS_PER_SEED / 2 {
        let (x, x2) = (rng.normal_vec(dx), rng.normal_vec(dx));
        let dg = sub(&f.gradient(&x), &f.gradient(&x2));
        out.push(le(norm_sq(&dg), l * dot(&dg, &sub(&x, &x2))));
        let (y, y2) = (rng.normal_vec(dy), rng.normal_vec(dy));
        let gxd = sub(&h.grad_x(&x, &y), &h.grad_x(&x2, &y2));
        let gyd = sub(&h.grad_y(&x2, &y2), &h.grad_y(&x, &y));
        let inner = dot(&gxd, &sub(&x, &x2)) + dot(&gyd, &sub(&y, &y2));
        out.push(le(0.0, inner));
    }
    out
}

/// The duality gap is non-negative, bounded below by the strong convexity
/// terms, and zero at the saddle point.
fn gap(seed: u64) -> Vec<f64> {
    let mut rng = suite_rng(seed, 12);
    let n = 1 + rng.below(3);
    let inst = random_mmfs(&mut rng, seed, n);
    let q = inst.saddle();
    let sol = q.exact_saddle().expect("strongly convex-concave");
    let (dx, dy) = inst.dims();
    let mut out = vec![eq(q.gap(&sol.x, &sol.y).expect("solvable"), 0.0)];
    for _ in 1..CHECKS_PER_SEED {
        let (x, y) = (rng.normal_vec(dx), rng.normal_vec(dy));
        let g = q.gap(&x, &y).expect("solvable");
        let lower = 0.5 * inst.mu_x * dist_sq(&x, &sol.x) + 0.5 * inst.mu_y * dist_sq(&y, &sol.y);
        out.push(le(lower, g));
    }
    out
}

/// Generated instances attain their declared constants: sampled difference
/// quotients never exceed them.
fn constants(seed: u64) -> Vec<f64> {
    let mut rng = suite_rng(seed, 13);
    let inst = random_mmfs(&mut rng, seed, 1);
    let (f, h) = (Arc::new(inst.f[0].clone()), &inst.h[0]);
    let (dx, dy) = inst.dims();
    let c = h.constants();
    let mut out = Vec::with_capacity(CHECKS_PER_SEED);
    for _ in 0..CHECKS_PER_SEED / 2 {
        let (x, x2, y) = (rng.normal_vec(dx), rng.normal_vec(dx), rng.normal_vec(dy));
        let df = dist_sq(&f.gradient(&x), &f.gradient(&x2)).sqrt();
        let dxs = dist_sq(&x, &x2).sqrt();
        out.push(le(df, f.smoothness() * dxs));
        let dh = dist_sq(&h.grad_y(&x, &y), &h.grad_y(&x2, &y)).sqrt();
        out.push(le(dh, c.xy * dxs));
    }
    out
}
