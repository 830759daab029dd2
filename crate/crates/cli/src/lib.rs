//! Command-line front end: solvers, reductions, invariant checks, scaling
//! benchmarks and instance generation.
//!
//! Exit codes: 0 on success, 1 when a solver fails or a check does not
//! pass, 2 for unreadable input or invalid configuration.

use std::fmt::Display;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use pdx::bench::{bench, write_bench_csv};
use pdx::config::{GenSpec, KvConfig, Overrides, ProblemSource, RunConfig, Value};
use pdx::finitesum::{solve_finitesum, FsConfig};
use pdx::invariants::invariant_suite;
use pdx::minimax::{solve_minimax, MinimaxConfig, Reference};
use pdx::mmfs::{solve_mmfs, MmfsConfig, MmfsOverrides};
use pdx::oracle::OracleCalls;
use pdx::qmm::{read_qmm_file, write_qmm};
use pdx::reductions::{
    outer_steps_fs, outer_steps_mmfs, redx_convex, redx_minimax, FsSubsolver, MmfsSubsolver, ReductionResult,
    SubBudget,
};
use pdx::saddle::QuadraticSaddle;
use pdx::testbed::QuadraticInstance;
use pdx::trace::{write_trace, TraceRecord};

#[derive(Debug, Parser)]
#[command(name = "pdx", version, about = "Primal-dual extragradient solvers for quadratic test problems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Deterministic solver for a single-summand minimax instance.
    SolveMm(RunArgs),
    /// Randomized solver for a finite-sum instance (dy = 0).
    SolveFs(RunArgs),
    /// Randomized solver for a minimax finite-sum instance.
    SolveMmfs(RunArgs),
    /// Outer proximal loop for a finite sum that is strongly convex only on average.
    ReduceFs(RunArgs),
    /// Outer proximal loop for a minimax finite sum with aggregate strong convexity.
    ReduceMmfs(RunArgs),
    /// Runs invariant suites over seeded random states.
    Verify {
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 100)]
        seeds: u64,
    },
    /// Median oracle calls to a relative target gap over a parameter grid, as CSV.
    Bench {
        #[arg(long)]
        family: String,
        /// `key=[v1,v2];key2=v`
        #[arg(long, default_value = "")]
        grid: String,
        #[arg(long, default_value_t = 1)]
        seeds: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Writes a generated instance in the qmm format.
    Gen {
        /// `family:key=value,...`
        #[arg(long = "gen")]
        spec: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Flat `key = value` file; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Instance in the qmm format.
    #[arg(long, conflicts_with = "gen")]
    pub problem: Option<PathBuf>,
    /// Generated instance, `family:key=value,...`.
    #[arg(long)]
    pub gen: Option<String>,
    #[arg(long)]
    pub eps: Option<f64>,
    /// Initial gap bound; defaults to the gap at the origin.
    #[arg(long)]
    pub eps0: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// CSV trace output.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Schedule override `key=value` (lambda, gamma, S, T, N, K, sub).
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

fn input_err(e: impl Display) -> CliError {
    CliError {
        code: 2,
        message: e.to_string(),
    }
}

fn solver_err(e: impl Display) -> CliError {
    CliError {
        code: 1,
        message: e.to_string(),
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

pub fn run(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    match cli.command {
        Command::SolveMm(a) => solve("solve-mm", &a, out),
        Command::SolveFs(a) => solve("solve-fs", &a, out),
        Command::SolveMmfs(a) => solve("solve-mmfs", &a, out),
        Command::ReduceFs(a) => solve("reduce-fs", &a, out),
        Command::ReduceMmfs(a) => solve("reduce-mmfs", &a, out),
        Command::Verify { suite, seeds } => verify(&suite, seeds, out),
        Command::Bench {
            family,
            grid,
            seeds,
            out: path,
        } => {
            let (keys, rows) = bench(&family, &grid, seeds).map_err(|e| match e {
                pdx::PdxError::UnknownFamily(_) | pdx::PdxError::Parse(_) | pdx::PdxError::InvalidSpec(_) => {
                    input_err(e)
                }
                other => solver_err(other),
            })?;
            match path {
                Some(p) => {
                    let f = std::fs::File::create(&p).map_err(|e| solver_err(format!("{}: {e}", p.display())))?;
                    write_bench_csv(f, &keys, &rows).map_err(solver_err)
                }
                None => write_bench_csv(out, &keys, &rows).map_err(solver_err),
            }
        }
        Command::Gen { spec, seed, out: path } => {
            let inst = GenSpec::parse(&spec).and_then(|g| g.generate(seed)).map_err(input_err)?;
            let text = write_qmm(&inst);
            match path {
                Some(p) => std::fs::write(&p, text).map_err(|e| solver_err(format!("{}: {e}", p.display()))),
                None => out.write_all(text.as_bytes()).map_err(solver_err),
            }
        }
    }
}

fn verify(suite: &str, seeds: u64, out: &mut dyn Write) -> CliResult<()> {
    let reports = invariant_suite(suite, seeds).map_err(input_err)?;
    let passed = reports.iter().filter(|r| r.passed()).count();
    for r in &reports {
        writeln!(out, "{r}").map_err(solver_err)?;
    }
    writeln!(out, "verify: {passed} of {} suites passed at {seeds} seeds", reports.len()).map_err(solver_err)?;
    if passed == reports.len() {
        Ok(())
    } else {
        Err(solver_err(format!("{} suite(s) failed", reports.len() - passed)))
    }
}

/// Merges the config file with the command-line flags; flags win.
pub fn run_config(solver: &str, a: &RunArgs) -> CliResult<RunConfig> {
    let mut kv = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| input_err(format!("{}: {e}", p.display())))?;
            KvConfig::parse_file(&text).map_err(input_err)?
        }
        None => KvConfig::default(),
    };
    let scalar = |s: String| Value::Scalar(s);
    kv.set("solver", scalar(solver.into()));
    if a.problem.is_some() || a.gen.is_some() {
        kv.remove("problem");
        kv.remove("gen");
    }
    if let Some(p) = &a.problem {
        kv.set("problem", scalar(p.display().to_string()));
    }
    if let Some(g) = &a.gen {
        kv.set("gen", scalar(g.clone()));
    }
    for (k, v) in [("eps", a.eps), ("eps0", a.eps0)] {
        if let Some(v) = v {
            kv.set(k, scalar(v.to_string()));
        }
    }
    if let Some(s) = a.seed {
        kv.set("seed", scalar(s.to_string()));
    }
    if let Some(t) = &a.trace {
        kv.set("trace", scalar(t.display().to_string()));
    }
    for o in &a.overrides {
        if !o.contains('=') {
            return Err(input_err(format!("override {o:?} is not key=value")));
        }
        kv.merge(&KvConfig::parse_inline(o).map_err(input_err)?);
    }
    RunConfig::from_kv(&kv).map_err(input_err)
}

/// Override keys each solver understands.
fn allowed_overrides(solver: &str) -> &'static [&'static str] {
    match solver {
        "solve-mm" => &["lambda", "T"],
        "solve-fs" => &["lambda", "S", "T"],
        "solve-mmfs" => &["lambda", "gamma", "S", "N", "T"],
        "reduce-fs" => &["K", "sub"],
        "reduce-mmfs" => &["K", "sub", "N"],
        _ => &[],
    }
}

fn check_overrides(solver: &str, ov: &Overrides) -> CliResult<()> {
    let given = [
        ("lambda", ov.lambda.is_some()),
        ("gamma", ov.gamma.is_some()),
        ("S", ov.s.is_some()),
        ("T", ov.t.is_some()),
        ("N", ov.n.is_some()),
        ("K", ov.k.is_some()),
        ("sub", ov.sub.is_some()),
    ];
    let allowed = allowed_overrides(solver);
    match given.iter().find(|(k, set)| *set && !allowed.contains(k)) {
        Some((k, _)) => Err(input_err(format!("{solver} does not take override {k}; allowed: {allowed:?}"))),
        None => Ok(()),
    }
}

pub fn load_instance(cfg: &RunConfig) -> CliResult<QuadraticInstance> {
    match &cfg.source {
        ProblemSource::File(p) => read_qmm_file(p).map_err(input_err),
        ProblemSource::Gen(g) => g.generate(cfg.seed).map_err(input_err),
    }
}

/// `(eps0, eps)` with `eps0` defaulting to the gap at the start.
fn tolerances(cfg: &RunConfig, gap0: f64) -> (f64, f64) {
    (cfg.eps0.unwrap_or(gap0.max(cfg.eps)), cfg.eps)
}

fn sub_budget(sub: Option<&str>) -> SubBudget {
    match sub {
        None | Some("quarter") => SubBudget::Quarter,
        Some("certified") => SubBudget::Certified,
        Some(n) => SubBudget::Fixed(n.parse().expect("validated by the config")),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_else(|| "-".into())
}

fn fmt_calls(c: &OracleCalls) -> String {
    format!("calls=f:{},g:{},hx:{},hy:{} total={}", c.f, c.g, c.hx, c.hy, c.total())
}

fn reduction_trace(res: &ReductionResult, q: &QuadraticSaddle) -> CliResult<Vec<TraceRecord>> {
    let start = std::time::Instant::now();
    res.iterates
        .iter()
        .zip(&res.calls_at)
        .enumerate()
        .map(|(k, ((x, y), c))| {
            let mut r = TraceRecord::new(0, k as u64, c, start);
            r.wall_ns = 0;
            r.gap = Some(q.gap(x, y).map_err(solver_err)?);
            Ok(r)
        })
        .collect()
}

fn solve(solver: &str, a: &RunArgs, out: &mut dyn Write) -> CliResult<()> {
    let cfg = run_config(solver, a)?;
    check_overrides(solver, &cfg.overrides)?;
    let inst = load_instance(&cfg)?;
    let (dx, dy) = inst.dims();
    log::info!("{solver}: dx={dx} dy={dy} n={} eps={} seed={}", inst.n(), cfg.eps, cfg.seed);
    let (x0, y0) = (vec![0.0; dx], vec![0.0; dy]);
    let ov = &cfg.overrides;
    let (summary, trace) = match solver {
        "solve-mm" => {
            let p = inst.minimax_problem().map_err(input_err)?;
            let q = inst.saddle();
            let (eps0, eps) = tolerances(&cfg, q.gap(&x0, &y0).map_err(solver_err)?);
            let mcfg = MinimaxConfig {
                eps0,
                eps,
                lambda: ov.lambda,
                iters: ov.t,
                reference: Some(Reference::from_saddle(q.clone()).map_err(solver_err)?),
                early_stop: false,
            };
            let res = solve_minimax(&p, &x0, &y0, &mcfg).map_err(solver_err)?;
            let last = res.trace.last().expect("initial row");
            let s = format!(
                "solve-mm: lambda={} T={} steps={} gap={:e} potential={} {}",
                res.schedule.lambda,
                res.schedule.t,
                res.steps,
                q.gap(&res.x, &res.y).map_err(solver_err)?,
                fmt_opt(last.potential),
                fmt_calls(&res.calls)
            );
            (s, res.trace)
        }
        "solve-fs" => {
            let p = inst.finite_sum_problem().map_err(input_err)?;
            let q = inst.saddle();
            let (eps0, eps) = tolerances(&cfg, q.gap(&x0, &[]).map_err(solver_err)?);
            let fcfg = FsConfig {
                eps0,
                eps,
                seed: cfg.seed,
                lambda: ov.lambda,
                steps: ov.s,
                phases: ov.t,
                reference: Some(Reference::from_saddle(q.clone()).map_err(solver_err)?),
            };
            let res = solve_finitesum(&p, &x0, &fcfg).map_err(solver_err)?;
            let last = res.trace.last().expect("initial row");
            let s = format!(
                "solve-fs: lambda={} S={} T={} gap={:e} potential={} {}",
                res.schedule.lambda,
                res.schedule.s,
                res.schedule.t,
                q.gap(&res.x, &[]).map_err(solver_err)?,
                fmt_opt(last.potential),
                fmt_calls(&res.calls)
            );
            (s, res.trace)
        }
        "solve-mmfs" => {
            let p = inst.mmfs_problem();
            let q = inst.saddle();
            let (eps0, eps) = tolerances(&cfg, q.gap(&x0, &y0).map_err(solver_err)?);
            let mcfg = MmfsConfig {
                eps0,
                eps,
                seed: cfg.seed,
                overrides: MmfsOverrides {
                    gamma: ov.gamma,
                    lambda: ov.lambda,
                    steps: ov.s,
                    phases: ov.n,
                    outer: ov.t,
                },
                reference: Some(Reference::from_saddle(q.clone()).map_err(solver_err)?),
            };
            let res = solve_mmfs(&p, &x0, &y0, &mcfg).map_err(solver_err)?;
            let last = res.trace.last().expect("initial row");
            let sc = &res.schedule;
            let s = format!(
                "solve-mmfs: gamma={} lambda={} S={} N={} T={} gap={:e} potential={} {}",
                sc.gamma,
                sc.lambda,
                sc.s,
                sc.n_phases,
                sc.t,
                q.gap(&res.x, &res.y).map_err(solver_err)?,
                fmt_opt(last.potential),
                fmt_calls(&res.calls)
            );
            (s, res.trace)
        }
        "reduce-fs" => {
            let p = inst.aggregate_finite_sum();
            if dy != 0 {
                return Err(input_err("reduce-fs needs an instance with dy = 0"));
            }
            let q = p.quadratic().ok_or_else(|| solver_err("instance is not quadratic"))?;
            let (eps0, eps) = tolerances(&cfg, q.gap(&x0, &[]).map_err(solver_err)?);
            let k = match ov.k {
                Some(k) => k,
                None => outer_steps_fs(&p, eps0, eps).map_err(solver_err)?,
            };
            let mut sub = FsSubsolver {
                budget: sub_budget(ov.sub.as_deref()),
                seed: cfg.seed,
            };
            let res = redx_convex(&p, &x0, k, &mut sub).map_err(solver_err)?;
            let s = format!(
                "reduce-fs: K={k} sub={:?} gap={:e} {}",
                sub.budget,
                q.gap(&res.x, &[]).map_err(solver_err)?,
                fmt_calls(&res.calls)
            );
            (s, reduction_trace(&res, &q)?)
        }
        "reduce-mmfs" => {
            let p = inst.aggregate_mmfs();
            let q = p.quadratic().ok_or_else(|| solver_err("instance is not quadratic"))?;
            let (eps0, eps) = tolerances(&cfg, q.gap(&x0, &y0).map_err(solver_err)?);
            let k = match ov.k {
                Some(k) => k,
                None => outer_steps_mmfs(&p, eps0, eps).map_err(solver_err)?,
            };
            let mut sub = MmfsSubsolver {
                budget: sub_budget(ov.sub.as_deref()),
                phases: ov.n,
                seed: cfg.seed,
            };
            let res = redx_minimax(&p, &x0, &y0, k, &mut sub).map_err(solver_err)?;
            let s = format!(
                "reduce-mmfs: K={k} sub={:?} gap={:e} {}",
                sub.budget,
                q.gap(&res.x, &res.y).map_err(solver_err)?,
                fmt_calls(&res.calls)
            );
            (s, reduction_trace(&res, &q)?)
        }
        other => return Err(input_err(format!("unknown solver {other:?}"))),
    };
    if let Some(path) = &cfg.trace {
        write_trace_file(path, &trace)?;
    }
    writeln!(out, "{summary}").map_err(solver_err)
}

fn write_trace_file(path: &Path, rows: &[TraceRecord]) -> CliResult<()> {
    let f = std::fs::File::create(path).map_err(|e| solver_err(format!("{}: {e}", path.display())))?;
    write_trace(std::io::BufWriter::new(f), rows).map_err(solver_err)
}
