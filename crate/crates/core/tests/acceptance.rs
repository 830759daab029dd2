//! Acceptance checks, one PASS/FAIL line per criterion.
//!
//! Every criterion runs even when an earlier one fails. Failures are reported
//! but only make the process exit non-zero when `PDX_ACCEPTANCE_STRICT` is
//! set, so the rest of the workspace test run is not cut short.

use std::sync::Arc;
use std::time::{Duration, Instant};

use pdx::bench::{bench, loglog_slope};
use pdx::engine::{generic_sm_mirror_prox, rand_mirror_prox_generic, Stage};
use pdx::finitesum::{fs_one_phase, fs_potential, fs_steps, lambda_fs, sampling_p, schedule_fs, FsConfig, FsLift, FsState};
use pdx::invariants::invariant_suite;
use pdx::linalg::{dist_sq, rel_dist};
use pdx::math::{sample_index, SeededRng};
use pdx::minimax::{lambda_mm, mm_step, solve_minimax, MinimaxConfig, MinimaxLift, MinimaxState, Reference};
use pdx::mmfs::{
    mmfs_divergence, mmfs_inner, mmfs_inner_phase, mmfs_step, schedule_mmfs, Anchor, MmfsLift, MmfsPoint, MmfsSample,
    MmfsState,
};
use pdx::oracle::OracleCalls;
use pdx::problem::SummandRef;
use pdx::reductions::{
    omega_divergence, outer_steps_fs, outer_steps_mmfs, redx_convex, redx_minimax, ExactSubsolver, FsSubsolver,
    MmfsSubsolver,
};
use pdx::testbed::{
    gen_aggregate_finite_sum, gen_aggregate_mmfs, gen_finite_sum, gen_mmfs, gen_quadratic_minimax, FiniteSumSpec,
    MinimaxSpec, MmfsSpec,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(elapsed: Duration, limit: Duration) -> bool {
    elapsed < limit
}

/// Per-step potential contraction of the deterministic minimax solver.
fn c1_minimax_contraction() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut steps = 0usize;
    for seed in 0..20u64 {
        // condition numbers log-spaced over [10, 1e4]
        let kappa = 10f64.powf(1.0 + 3.0 * seed as f64 / 19.0);
        let spec = MinimaxSpec {
            dx: 20,
            dy: 20,
            lx: kappa,
            ly: kappa,
            lxx: 0.5,
            lxy: 2.0,
            lyy: 0.5,
            mu_x: 1.0,
            mu_y: 1.0,
            dense: true,
        };
        let inst = gen_quadratic_minimax(&spec, seed).unwrap();
        let p = inst.minimax_problem().unwrap();
        let q = inst.saddle();
        let mut rng = SeededRng::new(seed);
        let (x0, y0) = (rng.normal_vec(20), rng.normal_vec(20));
        // stop at a 1e8 gap reduction, well above the round-off floor of
        // the potential
        let gap0 = q.gap(&x0, &y0).unwrap();
        let cfg = MinimaxConfig {
            eps0: gap0,
            eps: 1e-8 * gap0,
            early_stop: true,
            reference: Some(Reference::from_saddle(q).unwrap()),
            ..Default::default()
        };
        let res = solve_minimax(&p, &x0, &y0, &cfg).unwrap();
        let rate = 1.0 / (1.0 + 1.0 / res.schedule.lambda);
        for w in res.trace.windows(2) {
            let (a, b) = (w[0].potential.unwrap(), w[1].potential.unwrap());
            worst = worst.max(b / (rate * a));
            steps += 1;
        }
    }
    let el = start.elapsed();
    let pass = worst <= 1.0 + 1e-9 && within(el, Duration::from_secs(10));
    outcome(
        pass,
        format!("{steps} steps on 20 instances, max V_t+1/(rate V_t) = {worst:.12}, {el:.2?} (limit 10s)"),
    )
}

fn shifted(fs: &[pdx::quadratic::QuadraticOracle], c: f64) -> Vec<SummandRef> {
    fs.iter()
        .map(|f| Arc::new(f.shifted(c, &vec![0.0; f.linear().len()])) as SummandRef)
        .collect()
}

/// Conjugate-tracking solvers against the generic engines with explicit
/// conjugates, 200 steps each.
fn c2_engine_equivalence() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..3u64 {
        // minimax
        let spec = MinimaxSpec {
            dx: 4,
            dy: 3,
            lxx: 0.5,
            lyy: 0.3,
            dense: true,
            ..MinimaxSpec::default()
        };
        let inst = gen_quadratic_minimax(&spec, seed).unwrap();
        let mut p = inst.minimax_problem().unwrap();
        p.f = shifted(&inst.f, 0.2).remove(0);
        p.g = shifted(&inst.g, 0.2).remove(0);
        let lambda = lambda_mm(&p.constants()).unwrap();
        let lift = MinimaxLift::new(&p).unwrap();
        let mut calls = OracleCalls::default();
        let mut s = MinimaxState::initial(&p, &[0.5, -0.3, 0.2, 1.0], &[-0.25, 0.1, 0.7], &mut calls);
        let op = |z: &[f64]| lift.operator(z);
        for z in generic_sm_mirror_prox(&op, &lift.reg, lambda, 1.0, 200, &s.lift()).iter().skip(1) {
            s = mm_step(&p, &s, lambda, &mut calls);
            worst = worst.max(rel_dist(&s.lift(), z));
        }

        // finite sum
        let inst = gen_finite_sum(&FiniteSumSpec::nonuniform(3, 3, 1.0, 2.0, 0.2), seed).unwrap();
        let mut p = inst.finite_sum_problem().unwrap();
        p.summands = shifted(&inst.f, 0.1);
        let dist = sampling_p(&p.smoothness()).unwrap();
        let lambda = lambda_fs(3, &p.smoothness(), p.mu).unwrap();
        let lift = FsLift::new(&p, dist.clone()).unwrap();
        let mut s = FsState::new(&p, &[0.3, 0.1, -0.4], &mut calls);
        let op = |j: &usize, _: Stage, b: &[f64], a: &[f64]| lift.estimator(*j, b, a);
        let mut sampler = |r: &mut SeededRng| sample_index(&dist, r);
        let (hist, end) =
            rand_mirror_prox_generic(&op, &mut sampler, &lift.reg, lambda, 200, &mut SeededRng::new(seed), &s.lift());
        let mut rng = SeededRng::new(seed);
        for (w, _) in &hist {
            worst = worst.max(rel_dist(&s.lift(), w));
            fs_steps(&p, &mut s, lambda, &dist, 1, &mut rng, &mut calls);
        }
        worst = worst.max(rel_dist(&s.lift(), &end));

        // minimax finite sum
        let inst = gen_mmfs(&MmfsSpec::uniform(2, 3, 2, 2.0, 1.5, 0.3, 0.5, 0.2, 1.0), seed).unwrap();
        let mut p = inst.mmfs_problem();
        p.f = shifted(&inst.f, 0.2);
        p.g = shifted(&inst.g, 0.2);
        let sched = schedule_mmfs(&p, 1.0, 1e-6).unwrap();
        let mut rng = SeededRng::new(100 + seed);
        let zbar = MmfsPoint {
            x: rng.normal_vec(3),
            y: rng.normal_vec(2),
            wf: vec![rng.normal_vec(3), rng.normal_vec(3)],
            wg: vec![rng.normal_vec(2), rng.normal_vec(2)],
        };
        let start = MmfsPoint::at(&rng.normal_vec(3), &rng.normal_vec(2), 2);
        let a = Anchor::new(&p, MmfsState::from_point(&p, start, &mut calls), &mut calls);
        let lift = MmfsLift::new(&p, zbar.clone(), &sched).unwrap();
        let (w0x, w0y) = (a.w0.wx.clone(), a.w0.wy.clone());
        let op = |smp: &MmfsSample, st: Stage, b: &[f64], at: &[f64]| lift.estimator((&w0x, &w0y), smp, st, b, at);
        let mut sampler = |r: &mut SeededRng| MmfsSample::draw(&sched, r);
        let (hist, end) = rand_mirror_prox_generic(
            &op,
            &mut sampler,
            &lift.reg,
            sched.lambda,
            200,
            &mut SeededRng::new(seed),
            &a.w0.lift(),
        );
        let mut s = a.w0.clone();
        let mut rng = SeededRng::new(seed);
        for (w, _) in &hist {
            worst = worst.max(rel_dist(&s.lift(), w));
            let smp = MmfsSample::draw(&sched, &mut rng);
            mmfs_step(&p, &a, &zbar, &mut s, &sched, smp, &mut calls);
        }
        worst = worst.max(rel_dist(&s.lift(), &end));
    }
    outcome(
        worst <= 1e-8,
        format!("3 seeds x 3 solvers x 200 steps, max relative distance {worst:.3e} (tol 1e-8)"),
    )
}

/// Mean potential after one finite-sum phase relative to the start.
fn c3_fs_phase_halving() -> Outcome {
    let start = Instant::now();
    let mut spec = FiniteSumSpec::nonuniform(10, 10, 1.0, 2.0, 0.5);
    spec.dense = true;
    let inst = gen_finite_sum(&spec, 3).unwrap();
    let p = inst.finite_sum_problem().unwrap();
    let xs = inst.saddle().exact_saddle().unwrap().x;
    let sched = schedule_fs(&p, &FsConfig::default()).unwrap();
    let mut calls = OracleCalls::default();
    let mut rng = SeededRng::new(77);
    let wx = rng.normal_vec(10);
    let wf = (0..10).map(|_| rng.normal_vec(10)).collect();
    let s0 = FsState::from_parts(&p, wx, wf, &mut calls);
    let v0 = fs_potential(&p, &s0, &xs);
    let mut total = 0.0;
    for seed in 0..200u64 {
        let (next, _) = fs_one_phase(&p, &s0, sched.lambda, sched.s, &sched.p, &mut SeededRng::new(seed), &mut calls);
        total += fs_potential(&p, &next, &xs) / v0;
    }
    let mean = total / 200.0;
    let el = start.elapsed();
    outcome(
        mean <= 0.55 && within(el, Duration::from_secs(30)),
        format!("mean ratio {mean:.4} over 200 phases (limit 0.55), {el:.2?} (limit 30s)"),
    )
}

/// Exact expectation identities by enumerating every sample.
fn c4_unbiasedness() -> Outcome {
    let reports: Vec<_> = ["unbiased-fs", "unbiased-mmfs"]
        .iter()
        .flat_map(|s| invariant_suite(s, 10).unwrap())
        .collect();
    let worst = reports.iter().map(|r| r.worst).fold(f64::NEG_INFINITY, f64::max);
    let checks: usize = reports.iter().map(|r| r.checks).sum();
    outcome(
        reports.iter().all(|r| r.passed() && r.checks >= 100) && worst <= 1e-10,
        format!("{checks} enumerated states, max relative error {worst:.3e} (tol 1e-10)"),
    )
}

/// Inner phase halving toward the regularized solution and outer
/// contraction toward the saddle, averaged over 50 seeds.
fn c5_mmfs_contraction() -> Outcome {
    let start = Instant::now();
    let seeds = 50u64;
    let (mut inner, mut outer, mut bound) = (0.0, 0.0, 0.0);
    for seed in 0..seeds {
        let inst = gen_mmfs(&MmfsSpec::uniform(4, 3, 2, 4.0, 3.0, 0.5, 1.0, 0.5, 1.0), seed).unwrap();
        let p = inst.mmfs_problem();
        let sched = schedule_mmfs(&p, 1.0, 1e-6).unwrap();
        let mut rng = SeededRng::new(1000 + seed);
        let mut calls = OracleCalls::default();
        let z0 = MmfsPoint::at(&rng.normal_vec(3), &rng.normal_vec(2), 4);
        let a = Anchor::new(&p, MmfsState::from_point(&p, z0.clone(), &mut calls), &mut calls);

        let prox = inst.prox_solution(&z0, sched.gamma).unwrap();
        let (next, _) = mmfs_inner_phase(&p, &a, &z0, &sched, &mut rng, &mut calls);
        inner += mmfs_divergence(&p, &next.w0.point(), &prox) / mmfs_divergence(&p, &z0, &prox);

        let s = inst.saddle().exact_saddle().unwrap();
        let star = MmfsPoint::at(&s.x, &s.y, 4);
        let (end, _) = mmfs_inner(&p, &a, &sched, &mut rng, &mut calls);
        outer += mmfs_divergence(&p, &end.w0.point(), &star) / mmfs_divergence(&p, &z0, &star);
        bound += 4.0 * sched.gamma / (1.0 + 4.0 * sched.gamma);
    }
    let n = seeds as f64;
    let (inner, outer, bound) = (inner / n, outer / n, bound / n);
    let el = start.elapsed();
    let pass = inner <= 0.5 * 1.1 && outer <= bound * 1.1 && within(el, Duration::from_secs(300));
    outcome(
        pass,
        format!(
            "{seeds} seeds: inner mean {inner:.4} (limit 0.55), outer mean {outer:.4} (limit {:.4}), {el:.2?}",
            bound * 1.1
        ),
    )
}

/// Minimax iterations scale like the square root of the condition number.
fn c6a_minimax_slope() -> Outcome {
    let (_, rows) = bench("mm-condition", "kappa=[1e2,1e4,1e6];lxy=0", 3).unwrap();
    let k: Vec<f64> = rows.iter().map(|r| r.params[0].1).collect();
    let it: Vec<f64> = rows.iter().map(|r| r.iters).collect();
    let slope = loglog_slope(&k, &it).unwrap_or(f64::NAN);
    let reached = rows.iter().all(|r| r.reached == r.seeds);
    outcome(
        reached && (slope - 0.5).abs() <= 0.1,
        format!("median iterations {it:?}, log-log slope {slope:.4} (target 0.5 ± 0.1)"),
    )
}

/// Finite-sum calls against the importance-sampling predictor, and the
/// gap to the uniform `√(n ΣL_i)` predictor at n = 256.
fn c6b_finite_sum_scaling() -> Outcome {
    let (_, rows) = bench("fs-nonuniform", "n=[16,32,64,128,256];beta=2", 3).unwrap();
    let kfs: Vec<f64> = rows.iter().map(|r| r.kappa_fs.unwrap()).collect();
    let calls: Vec<f64> = rows.iter().map(|r| r.calls).collect();
    let slope = loglog_slope(&kfs, &calls).unwrap_or(f64::NAN);
    // calls per unit of the fitted predictor, then the same constant
    // applied to the uniform predictor
    let c: Vec<f64> = rows.iter().map(|r| r.calls / r.kappa_fs.unwrap()).collect();
    let cfit = pdx::sweep::median(&c).unwrap();
    let last = rows.last().unwrap();
    let factor = cfit * last.prior_fs.unwrap() / last.calls;
    let reached = rows.iter().all(|r| r.reached == r.seeds);
    outcome(
        reached && (slope - 1.0).abs() <= 0.15 && factor >= 2.0,
        format!(
            "slope vs n+Σ√L_i/√(nμ) {slope:.4} (target 1 ± 0.15); uniform predictor / measured at n=256 {factor:.3} (target ≥ 2)"
        ),
    )
}

/// Exact-subsolver halving and randomized pipelines to 1e-6.
fn c7_reductions() -> Outcome {
    let mut worst: f64 = f64::NEG_INFINITY;
    for seed in 0..5u64 {
        let inst = gen_aggregate_finite_sum(5, 8, 10.0, 0.5, seed).unwrap();
        let p = inst.aggregate_finite_sum();
        let xs = p.quadratic().unwrap().exact_saddle().unwrap().x;
        let res = redx_convex(&p, &[1.0; 8], 10, &mut ExactSubsolver).unwrap();
        let v: Vec<f64> = res.iterates.iter().map(|(x, _)| 0.5 * dist_sq(x, &xs)).collect();
        for w in v.windows(2) {
            worst = worst.max((w[1] - 0.5 * w[0]) / v[0]);
        }
        let inst = gen_aggregate_mmfs(3, 4, 3, 6.0, 2.0, 0.5, 0.5, seed).unwrap();
        let p = inst.aggregate_mmfs();
        let s = p.quadratic().unwrap().exact_saddle().unwrap();
        let res = redx_minimax(&p, &[1.0; 4], &[-1.0; 3], 8, &mut ExactSubsolver).unwrap();
        let v: Vec<f64> = res
            .iterates
            .iter()
            .map(|(x, y)| omega_divergence(p.mu_x, p.mu_y, (x, y), (&s.x, &s.y)))
            .collect();
        for w in v.windows(2) {
            worst = worst.max((w[1] - 0.5 * w[0]) / v[0]);
        }
    }

    let inst = gen_aggregate_finite_sum(4, 6, 4.0, 0.5, 7).unwrap();
    let p = inst.aggregate_finite_sum();
    let q = p.quadratic().unwrap();
    let x0 = vec![1.0; 6];
    let k = outer_steps_fs(&p, q.gap(&x0, &[]).unwrap(), 1e-6).unwrap();
    let res = redx_convex(&p, &x0, k, &mut FsSubsolver::default()).unwrap();
    let gap_fs = q.gap(&res.x, &[]).unwrap();

    let inst = gen_aggregate_mmfs(2, 3, 2, 3.0, 0.5, 1.0, 1.0, 8).unwrap();
    let p = inst.aggregate_mmfs();
    let q = p.quadratic().unwrap();
    let (x0, y0) = (vec![1.0; 3], vec![-1.0; 2]);
    let k = outer_steps_mmfs(&p, q.gap(&x0, &y0).unwrap(), 1e-6).unwrap();
    let mut sub = MmfsSubsolver {
        phases: Some(2),
        ..MmfsSubsolver::default()
    };
    let res = redx_minimax(&p, &x0, &y0, k, &mut sub).unwrap();
    let gap_mm = q.gap(&res.x, &res.y).unwrap();

    outcome(
        worst <= 1e-9 && gap_fs <= 1e-6 && gap_mm <= 1e-6,
        format!(
            "exact halving slack {worst:.3e} (tol 1e-9); pipeline gaps {gap_fs:.3e} (convex), {gap_mm:.3e} (minimax), target 1e-6"
        ),
    )
}

/// Every invariant suite at 100 seeds.
fn c8_invariants() -> Outcome {
    let reports = invariant_suite("all", 100).unwrap();
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed()).map(|r| r.name.as_str()).collect();
    let checks: usize = reports.iter().map(|r| r.checks).sum();
    outcome(
        failed.is_empty(),
        format!("{} suites, {checks} checks, failing {failed:?}", reports.len()),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("1 minimax per-step contraction", c1_minimax_contraction),
        ("2 engine equivalence", c2_engine_equivalence),
        ("3 finite-sum phase halving", c3_fs_phase_halving),
        ("4 unbiasedness by enumeration", c4_unbiasedness),
        ("5 mmfs inner halving and outer contraction", c5_mmfs_contraction),
        ("6a minimax rate scaling", c6a_minimax_slope),
        ("6b finite-sum rate scaling", c6b_finite_sum_scaling),
        ("7 reduction halving and pipelines", c7_reductions),
        ("8 invariant suites", c8_invariants),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 && std::env::var_os("PDX_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
