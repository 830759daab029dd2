//! Oracle-call scaling benchmarks over parameter grids.
//!
//! A grid is written `key=[v1,v2];key2=v`; every combination is one grid
//! point. Each point is solved for `seeds` seeded worst-case instances
//! (spectra reaching zero, see [`gen_worst_case`]) from the origin until the
//! gap falls to `eps` times its initial value; the row reports the median of
//! every measured column. Runs are independent and
//! single-threaded; the sweep over (point, seed) pairs uses [`seed_sweep`].

use std::io::Write;

use crate::config::KvConfig;
use crate::error::{PdxError, Result};
use crate::finitesum::{solve_finitesum, FsConfig};
use crate::minimax::{lambda_mm, solve_minimax, MinimaxConfig, Reference};
use crate::mmfs::{kappa_mmfs, solve_mmfs, MmfsConfig};
use crate::sweep::{median, seed_sweep};
use crate::testbed::{gen_worst_case, FiniteSumSpec, MmfsSpec};
use crate::trace::TraceRecord;

pub const FAMILIES: &[&str] = &["mm-condition", "fs-nonuniform", "mmfs-uniform"];

/// Tunable keys and their defaults, per family.
pub fn family_defaults(family: &str) -> Result<&'static [(&'static str, f64)]> {
    Ok(match family {
        "mm-condition" => &[("kappa", 100.0), ("d", 10.0), ("lxy", 0.0), ("mu", 1.0), ("eps", 1e-6)],
        "fs-nonuniform" => &[("n", 16.0), ("d", 4.0), ("lbar", 1.0), ("beta", 2.0), ("mu", 1.0), ("eps", 1e-6)],
        "mmfs-uniform" => &[("n", 4.0), ("d", 3.0), ("l", 10.0), ("lxy", 1.0), ("mu", 1.0), ("eps", 1e-6)],
        other => return Err(PdxError::UnknownFamily(other.to_string())),
    })
}

/// Cartesian product of the grid, first key outermost. An empty list for
/// any key gives no points.
pub fn expand_grid(grid: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let kv = KvConfig::parse_inline(grid)?;
    let keys: Vec<String> = kv.keys().into_iter().map(str::to_string).collect();
    let mut points: Vec<Vec<f64>> = vec![vec![]];
    for k in &keys {
        let vals = kv.get_list_f64(k)?.unwrap_or_default();
        points = points
            .into_iter()
            .flat_map(|p| {
                vals.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push(*v);
                    q
                })
            })
            .collect();
    }
    Ok((keys, points))
}

/// One seeded run at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRun {
    pub kappa_mm: Option<f64>,
    pub kappa_fs: Option<f64>,
    pub kappa_mmfs: Option<f64>,
    /// `n + √(ΣL_i/μ)`, the uniform-sampling finite-sum predictor.
    pub prior_fs: Option<f64>,
    /// Oracle calls until the gap first reached the target (all calls made
    /// when it never did).
    pub calls: u64,
    /// Steps (minimax) or phases (finite sum, mmfs) until the target.
    pub iters: u64,
    pub reached: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub params: Vec<(String, f64)>,
    pub seeds: usize,
    pub kappa_mm: Option<f64>,
    pub kappa_fs: Option<f64>,
    pub kappa_mmfs: Option<f64>,
    pub prior_fs: Option<f64>,
    pub calls: f64,
    pub iters: f64,
    pub reached: usize,
}

/// `n + Σ√L_i / √(nμ)`
pub fn kappa_fs(l: &[f64], mu: f64) -> f64 {
    let n = l.len() as f64;
    n + l.iter().map(|v| v.sqrt()).sum::<f64>() / (n * mu).sqrt()
}

/// `n + √(ΣL_i / μ)`
pub fn prior_fs(l: &[f64], mu: f64) -> f64 {
    l.len() as f64 + (l.iter().sum::<f64>() / mu).sqrt()
}

fn first_reached(trace: &[TraceRecord], eps: f64, calls: impl Fn(&TraceRecord) -> u64) -> (u64, u64, bool) {
    match trace.iter().enumerate().find(|(_, r)| r.gap.is_some_and(|g| g <= eps)) {
        Some((i, r)) => (calls(r), i as u64, true),
        None => {
            let last = trace.last().expect("traces start with the initial row");
            (calls(last), trace.len() as u64 - 1, false)
        }
    }
}

/// `(eps0, eps)` for a relative target; a zero initial gap is already solved.
fn target(g0: f64, rel: f64) -> (f64, f64) {
    let eps0 = g0.max(f64::MIN_POSITIVE);
    (eps0, (rel * eps0).min(eps0))
}

fn count(v: f64, key: &str) -> Result<usize> {
    if v < 0.0 || v.fract() != 0.0 {
        return Err(PdxError::InvalidSpec(format!("{key} must be a non-negative integer, found {v}")));
    }
    Ok(v as usize)
}

/// Solves one seeded instance of `family` at `params` (missing keys take
/// their defaults).
pub fn bench_run(family: &str, params: &[(String, f64)], seed: u64) -> Result<BenchRun> {
    let defaults = family_defaults(family)?;
    for (k, _) in params {
        if !defaults.iter().any(|(d, _)| d == k) {
            return Err(PdxError::InvalidSpec(format!("unknown key {k:?} for family {family}")));
        }
    }
    let get = |k: &str| -> f64 {
        params
            .iter()
            .rev()
            .find(|(p, _)| p == k)
            .map(|(_, v)| *v)
            .or_else(|| defaults.iter().find(|(d, _)| *d == k).map(|(_, v)| *v))
            .expect("key has a default")
    };
    let eps = get("eps");
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(PdxError::InvalidSpec(format!("relative target eps = {eps} must lie in (0, 1]")));
    }
    let mu = get("mu");
    match family {
        "mm-condition" => {
            let d = count(get("d"), "d")?;
            let l = get("kappa") * mu;
            let spec = MmfsSpec::uniform(1, d, d, l, l, 0.0, get("lxy"), 0.0, mu);
            let inst = gen_worst_case(&spec, seed)?;
            let p = inst.minimax_problem()?;
            let q = inst.saddle();
            let (eps0, eps) = target(q.gap(&vec![0.0; d], &vec![0.0; d])?, eps);
            let cfg = MinimaxConfig {
                eps0,
                eps,
                early_stop: true,
                reference: Some(Reference::from_saddle(q)?),
                ..Default::default()
            };
            let res = solve_minimax(&p, &vec![0.0; d], &vec![0.0; d], &cfg)?;
            let (calls, iters, reached) = first_reached(&res.trace, eps, |r| r.calls().total());
            Ok(BenchRun {
                kappa_mm: Some(lambda_mm(&p.constants())? - 1.0),
                kappa_fs: None,
                kappa_mmfs: None,
                prior_fs: None,
                calls,
                iters,
                reached,
            })
        }
        "fs-nonuniform" => {
            let (n, d) = (count(get("n"), "n")?, count(get("d"), "d")?);
            let spec = FiniteSumSpec::nonuniform(n, d, get("lbar"), get("beta"), mu);
            let inst = gen_worst_case(&spec.as_mmfs(), seed)?;
            let p = inst.finite_sum_problem()?;
            let q = inst.saddle();
            let (eps0, eps) = target(q.gap(&vec![0.0; d], &[])?, eps);
            let cfg = FsConfig {
                eps0,
                eps,
                seed,
                reference: Some(Reference::from_saddle(q)?),
                ..Default::default()
            };
            let res = solve_finitesum(&p, &vec![0.0; d], &cfg)?;
            let (calls, iters, reached) = first_reached(&res.trace, eps, |r| r.f_calls);
            let l = p.smoothness();
            Ok(BenchRun {
                kappa_mm: None,
                kappa_fs: Some(kappa_fs(&l, p.mu)),
                kappa_mmfs: None,
                prior_fs: Some(prior_fs(&l, p.mu)),
                calls,
                iters,
                reached,
            })
        }
        "mmfs-uniform" => {
            let (n, d) = (count(get("n"), "n")?, count(get("d"), "d")?);
            let l = get("l");
            let spec = MmfsSpec::uniform(n, d, d, l, l, 0.0, get("lxy"), 0.0, mu);
            let inst = gen_worst_case(&spec, seed)?;
            let p = inst.mmfs_problem();
            let q = inst.saddle();
            let (eps0, eps) = target(q.gap(&vec![0.0; d], &vec![0.0; d])?, eps);
            let cfg = MmfsConfig {
                eps0,
                eps,
                seed,
                reference: Some(Reference::from_saddle(q)?),
                ..Default::default()
            };
            let res = solve_mmfs(&p, &vec![0.0; d], &vec![0.0; d], &cfg)?;
            let (calls, iters, reached) = first_reached(&res.trace, eps, |r| r.calls().total());
            Ok(BenchRun {
                kappa_mm: None,
                kappa_fs: None,
                kappa_mmfs: Some(kappa_mmfs(&p)),
                prior_fs: None,
                calls,
                iters,
                reached,
            })
        }
        other => Err(PdxError::UnknownFamily(other.to_string())),
    }
}

fn median_of(runs: &[BenchRun], f: impl Fn(&BenchRun) -> Option<f64>) -> Option<f64> {
    let v: Vec<f64> = runs.iter().filter_map(f).collect();
    median(&v)
}

/// Runs every (grid point, seed) pair and aggregates per point. Seeds are
/// `0..seeds`; with one seed the row holds the raw values.
pub fn bench(family: &str, grid: &str, seeds: usize) -> Result<(Vec<String>, Vec<BenchRow>)> {
    family_defaults(family)?;
    if seeds == 0 {
        return Err(PdxError::InvalidSpec("seeds must be at least 1".into()));
    }
    let (keys, points) = expand_grid(grid)?;
    let jobs: Vec<u64> = (0..(points.len() * seeds) as u64).collect();
    let params = |i: usize| -> Vec<(String, f64)> { keys.iter().cloned().zip(points[i].iter().copied()).collect() };
    let runs = seed_sweep(&jobs, |job| {
        let (i, s) = (job as usize / seeds, job % seeds as u64);
        bench_run(family, &params(i), s)
    });
    let runs: Vec<BenchRun> = runs.into_iter().collect::<Result<_>>()?;
    let rows = runs
        .chunks(seeds)
        .enumerate()
        .map(|(i, rs)| BenchRow {
            params: params(i),
            seeds,
            kappa_mm: median_of(rs, |r| r.kappa_mm),
            kappa_fs: median_of(rs, |r| r.kappa_fs),
            kappa_mmfs: median_of(rs, |r| r.kappa_mmfs),
            prior_fs: median_of(rs, |r| r.prior_fs),
            calls: median_of(rs, |r| Some(r.calls as f64)).unwrap_or(0.0),
            iters: median_of(rs, |r| Some(r.iters as f64)).unwrap_or(0.0),
            reached: rs.iter().filter(|r| r.reached).count(),
        })
        .collect();
    Ok((keys, rows))
}

/// Writes the header (grid keys, then the fixed columns) and one line per
/// row; inapplicable condition numbers are left empty.
pub fn write_bench_csv<W: Write>(out: W, keys: &[String], rows: &[BenchRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| PdxError::Parse(e.to_string());
    let fixed = ["seeds", "kappa_mm", "kappa_fs", "kappa_mmfs", "prior_fs", "calls", "iters", "reached"];
    let header: Vec<&str> = keys.iter().map(String::as_str).chain(fixed).collect();
    w.write_record(&header).map_err(io)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        let mut rec: Vec<String> = r.params.iter().map(|(_, v)| v.to_string()).collect();
        rec.extend([
            r.seeds.to_string(),
            opt(r.kappa_mm),
            opt(r.kappa_fs),
            opt(r.kappa_mmfs),
            opt(r.prior_fs),
            r.calls.to_string(),
            r.iters.to_string(),
            r.reached.to_string(),
        ]);
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| PdxError::Parse(e.to_string()))
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 || x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = x.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
