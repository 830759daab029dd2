//! Flat `key = value` configuration, generator specs and run settings.
//!
//! Files hold one `key = value` per line with `#` comments; arrays are
//! bracketed and comma separated (`lx = [1, 4, 9]`). Inline specs use the
//! same values separated by commas or semicolons outside brackets. Later
//! assignments override earlier ones.

use std::path::PathBuf;

use crate::error::{PdxError, Result};
use crate::testbed::{
    gen_aggregate_finite_sum, gen_aggregate_mmfs, gen_finite_sum, gen_mmfs, gen_quadratic_minimax, FiniteSumSpec,
    MinimaxSpec, MmfsSpec, QuadraticInstance,
};

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Scalar(String),
    List(Vec<String>),
}

/// Ordered key-value pairs; lookups see the last assignment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvConfig {
    entries: Vec<(String, Value)>,
}

fn parse_value(raw: &str) -> Result<Value> {
    let raw = raw.trim();
    if let Some(inner) = raw.strip_prefix('[') {
        let inner = inner
            .strip_suffix(']')
            .ok_or_else(|| PdxError::Parse(format!("unterminated array {raw:?}")))?;
        let items: Vec<String> = inner
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
        if items.iter().any(|s| s.contains('[') || s.contains(']')) {
            return Err(PdxError::Parse(format!("nested arrays are not supported: {raw:?}")));
        }
        return Ok(Value::List(items));
    }
    if raw.is_empty() {
        return Err(PdxError::Parse("empty value".into()));
    }
    Ok(Value::Scalar(raw.to_string()))
}

fn parse_assignment(item: &str) -> Result<(String, Value)> {
    let (k, v) = item
        .split_once('=')
        .ok_or_else(|| PdxError::Parse(format!("expected key=value, found {item:?}")))?;
    let k = k.trim();
    if k.is_empty() || k.contains(char::is_whitespace) {
        return Err(PdxError::Parse(format!("invalid key {k:?}")));
    }
    Ok((k.to_string(), parse_value(v)?))
}

/// Splits on `,` or `;` outside brackets.
fn split_top_level(s: &str) -> Result<Vec<&str>> {
    let mut out = Vec::new();
    let (mut depth, mut start) = (0i32, 0);
    for (i, c) in s.char_indices() {
        match c {
            '[' => depth += 1,
            ']' => depth -= 1,
            ',' | ';' if depth == 0 => {
                out.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
        if depth < 0 {
            return Err(PdxError::Parse(format!("unbalanced brackets in {s:?}")));
        }
    }
    if depth != 0 {
        return Err(PdxError::Parse(format!("unbalanced brackets in {s:?}")));
    }
    out.push(&s[start..]);
    Ok(out.into_iter().filter(|p| !p.trim().is_empty()).collect())
}

impl KvConfig {
    pub fn parse_file(text: &str) -> Result<Self> {
        let mut cfg = KvConfig::default();
        for (i, line) in text.lines().enumerate() {
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (k, v) = parse_assignment(body).map_err(|e| PdxError::Parse(format!("line {}: {e}", i + 1)))?;
            cfg.entries.push((k, v));
        }
        Ok(cfg)
    }

    pub fn parse_inline(s: &str) -> Result<Self> {
        let mut cfg = KvConfig::default();
        for item in split_top_level(s)? {
            cfg.entries.push(parse_assignment(item)?);
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: Value) {
        self.entries.push((key.to_string(), value));
    }

    /// Drops every assignment of `key`.
    pub fn remove(&mut self, key: &str) {
        self.entries.retain(|(k, _)| k != key);
    }

    /// Appends `other`, so its assignments win.
    pub fn merge(&mut self, other: &KvConfig) {
        self.entries.extend(other.entries.iter().cloned());
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.entries.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    /// Distinct keys in first-assignment order.
    pub fn keys(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for (k, _) in &self.entries {
            if !out.contains(&k.as_str()) {
                out.push(k);
            }
        }
        out
    }

    pub fn check_known(&self, known: &[&str]) -> Result<()> {
        match self.keys().into_iter().find(|k| !known.contains(k)) {
            Some(k) => Err(PdxError::Parse(format!("unknown key {k:?}; expected one of {known:?}"))),
            None => Ok(()),
        }
    }

    pub fn get_str(&self, key: &str) -> Result<Option<&str>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Scalar(s)) => Ok(Some(s)),
            Some(Value::List(_)) => Err(PdxError::Parse(format!("{key} must be a scalar"))),
        }
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        self.get_str(key)?.map(|s| parse_f64(key, s)).transpose()
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>> {
        self.get_str(key)?
            .map(|s| {
                s.parse::<usize>()
                    .map_err(|_| PdxError::Parse(format!("{key} must be a non-negative integer, found {s:?}")))
            })
            .transpose()
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>> {
        Ok(self.get_usize(key)?.map(|v| v as u64))
    }

    pub fn get_bool(&self, key: &str) -> Result<Option<bool>> {
        self.get_str(key)?
            .map(|s| match s {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                _ => Err(PdxError::Parse(format!("{key} must be a boolean, found {s:?}"))),
            })
            .transpose()
    }

    /// A list, or a scalar read as a one-element list.
    pub fn get_list_f64(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Scalar(s)) => Ok(Some(vec![parse_f64(key, s)?])),
            Some(Value::List(v)) => v.iter().map(|s| parse_f64(key, s)).collect::<Result<_>>().map(Some),
        }
    }
}

fn parse_f64(key: &str, s: &str) -> Result<f64> {
    let v: f64 = s
        .parse()
        .map_err(|_| PdxError::Parse(format!("{key} must be a number, found {s:?}")))?;
    if !v.is_finite() {
        return Err(PdxError::Parse(format!("{key} must be finite")));
    }
    Ok(v)
}

/// Instance generator family plus parameters, written `family:k=v,…`.
#[derive(Debug, Clone, PartialEq)]
pub struct GenSpec {
    pub family: String,
    pub params: KvConfig,
}

pub const GEN_FAMILIES: &[&str] = &["mm", "fs", "mmfs", "agg-fs", "agg-mmfs"];

impl GenSpec {
    pub fn parse(s: &str) -> Result<Self> {
        let (family, rest) = s.split_once(':').unwrap_or((s, ""));
        let family = family.trim().to_string();
        if !GEN_FAMILIES.contains(&family.as_str()) {
            return Err(PdxError::Parse(format!(
                "unknown generator family {family:?}; expected one of {GEN_FAMILIES:?}"
            )));
        }
        Ok(GenSpec {
            family,
            params: KvConfig::parse_inline(rest)?,
        })
    }

    /// Builds the instance; unknown parameters are rejected.
    pub fn generate(&self, seed: u64) -> Result<QuadraticInstance> {
        let p = &self.params;
        let f = |k: &str, d: f64| -> Result<f64> { Ok(p.get_f64(k)?.unwrap_or(d)) };
        let u = |k: &str, d: usize| -> Result<usize> { Ok(p.get_usize(k)?.unwrap_or(d)) };
        let dense = p.get_bool("dense")?.unwrap_or(false);
        match self.family.as_str() {
            "mm" => {
                p.check_known(&["dx", "dy", "lx", "ly", "lxx", "lxy", "lyy", "mu", "mu_x", "mu_y", "dense"])?;
                let mu = f("mu", 1.0)?;
                gen_quadratic_minimax(
                    &MinimaxSpec {
                        dx: u("dx", 5)?,
                        dy: u("dy", 5)?,
                        lx: f("lx", 10.0)?,
                        ly: f("ly", 10.0)?,
                        lxx: f("lxx", 0.0)?,
                        lxy: f("lxy", 1.0)?,
                        lyy: f("lyy", 0.0)?,
                        mu_x: f("mu_x", mu)?,
                        mu_y: f("mu_y", mu)?,
                        dense,
                    },
                    seed,
                )
            }
            "fs" => {
                p.check_known(&["n", "d", "l", "lbar", "beta", "mu", "dense"])?;
                let (n, d, mu) = (u("n", 10)?, u("d", 5)?, f("mu", 1.0)?);
                let mut spec = match p.get_list_f64("l")? {
                    Some(l) => FiniteSumSpec { d, l, mu, dense },
                    None => FiniteSumSpec::nonuniform(n, d, f("lbar", 10.0)?, f("beta", 0.0)?, mu),
                };
                spec.dense = dense;
                gen_finite_sum(&spec, seed)
            }
            "mmfs" => {
                p.check_known(&["n", "dx", "dy", "lx", "ly", "lxx", "lxy", "lyy", "mu", "mu_x", "mu_y", "dense"])?;
                let n = u("n", 4)?;
                let list = |k: &str, d: f64| -> Result<Vec<f64>> {
                    let v = p.get_list_f64(k)?.unwrap_or_else(|| vec![d]);
                    Ok(if v.len() == 1 { vec![v[0]; n] } else { v })
                };
                let mu = f("mu", 1.0)?;
                gen_mmfs(
                    &MmfsSpec {
                        dx: u("dx", 3)?,
                        dy: u("dy", 3)?,
                        lx: list("lx", 10.0)?,
                        ly: list("ly", 10.0)?,
                        lxx: list("lxx", 0.0)?,
                        lxy: list("lxy", 1.0)?,
                        lyy: list("lyy", 0.0)?,
                        mu_x: f("mu_x", mu)?,
                        mu_y: f("mu_y", mu)?,
                        dense,
                    },
                    seed,
                )
            }
            "agg-fs" => {
                p.check_known(&["n", "d", "l", "mu"])?;
                gen_aggregate_finite_sum(u("n", 4)?, u("d", 8)?, f("l", 10.0)?, f("mu", 0.5)?, seed)
            }
            "agg-mmfs" => {
                p.check_known(&["n", "dx", "dy", "l", "lxy", "mu", "mu_x", "mu_y"])?;
                let mu = f("mu", 0.5)?;
                gen_aggregate_mmfs(
                    u("n", 2)?,
                    u("dx", 4)?,
                    u("dy", 4)?,
                    f("l", 10.0)?,
                    f("lxy", 1.0)?,
                    f("mu_x", mu)?,
                    f("mu_y", mu)?,
                    seed,
                )
            }
            other => Err(PdxError::Parse(format!("unknown generator family {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSource {
    File(PathBuf),
    Gen(GenSpec),
}

/// Schedule overrides shared by all solvers; each solver reads the ones it
/// understands.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub lambda: Option<f64>,
    pub gamma: Option<f64>,
    /// Phase length bound.
    pub s: Option<usize>,
    /// Iterations (minimax), phases (finite sum) or outer steps (mmfs).
    pub t: Option<usize>,
    /// Phases per outer step (mmfs).
    pub n: Option<usize>,
    /// Reduction outer steps.
    pub k: Option<usize>,
    /// Subsolver budget of the reductions: `quarter`, `certified` or a count.
    pub sub: Option<String>,
}

pub const OVERRIDE_KEYS: &[&str] = &["lambda", "gamma", "S", "T", "N", "K", "sub"];

impl Overrides {
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let ov = Overrides {
            lambda: kv.get_f64("lambda")?,
            gamma: kv.get_f64("gamma")?,
            s: kv.get_usize("S")?,
            t: kv.get_usize("T")?,
            n: kv.get_usize("N")?,
            k: kv.get_usize("K")?,
            sub: kv.get_str("sub")?.map(str::to_string),
        };
        if let Some(s) = &ov.sub {
            if !matches!(s.as_str(), "quarter" | "certified") && s.parse::<usize>().is_err() {
                return Err(PdxError::Parse(format!("sub must be quarter, certified or a count, found {s:?}")));
            }
        }
        Ok(ov)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub solver: String,
    pub source: ProblemSource,
    pub eps0: Option<f64>,
    pub eps: f64,
    pub seed: u64,
    pub overrides: Overrides,
    pub trace: Option<PathBuf>,
}

pub const RUN_KEYS: &[&str] = &["solver", "problem", "gen", "eps0", "eps", "seed", "trace"];

impl RunConfig {
    /// Validates a merged key-value configuration: exactly one problem
    /// source and `eps0 ≥ eps > 0`.
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let known: Vec<&str> = RUN_KEYS.iter().chain(OVERRIDE_KEYS).copied().collect();
        kv.check_known(&known)?;
        let solver = kv
            .get_str("solver")?
            .ok_or_else(|| PdxError::Parse("missing solver".into()))?
            .to_string();
        let source = match (kv.get_str("problem")?, kv.get_str("gen")?) {
            (Some(p), None) => ProblemSource::File(PathBuf::from(p)),
            (None, Some(g)) => ProblemSource::Gen(GenSpec::parse(g)?),
            (Some(_), Some(_)) => return Err(PdxError::Parse("give exactly one of problem and gen".into())),
            (None, None) => return Err(PdxError::Parse("missing problem source (problem or gen)".into())),
        };
        let eps = kv.get_f64("eps")?.unwrap_or(1e-8);
        let eps0 = kv.get_f64("eps0")?;
        if !(eps > 0.0) {
            return Err(PdxError::Parse(format!("eps must be positive, found {eps}")));
        }
        if let Some(e0) = eps0 {
            if !(e0 >= eps) {
                return Err(PdxError::Parse(format!("eps0 = {e0} must be at least eps = {eps}")));
            }
        }
        Ok(RunConfig {
            solver,
            source,
            eps0,
            eps,
            seed: kv.get_u64("seed")?.unwrap_or(0),
            overrides: Overrides::from_kv(kv)?,
            trace: kv.get_str("trace")?.map(PathBuf::from),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_format_with_comments_arrays_and_overrides() {
        let kv = KvConfig::parse_file("# run\nsolver = solve-fs\ngen = fs:n=4\nlx = [1, 2 ,3]\neps=1e-6\neps = 1e-7 # later wins\n").unwrap();
        assert_eq!(kv.get_f64("eps").unwrap(), Some(1e-7));
        assert_eq!(kv.get_list_f64("lx").unwrap(), Some(vec![1.0, 2.0, 3.0]));
        assert_eq!(kv.keys(), vec!["solver", "gen", "lx", "eps"]);
        assert!(KvConfig::parse_file("novalue\n").is_err());
        assert!(KvConfig::parse_file("a = [1, 2\n").is_err());
    }

    #[test]
    fn inline_specs_split_outside_brackets() {
        let kv = KvConfig::parse_inline("n=3, lx=[1,4,9]; mu=0.5").unwrap();
        assert_eq!(kv.get_usize("n").unwrap(), Some(3));
        assert_eq!(kv.get_list_f64("lx").unwrap(), Some(vec![1.0, 4.0, 9.0]));
        assert_eq!(kv.get_f64("mu").unwrap(), Some(0.5));
        assert_eq!(KvConfig::parse_inline("k=[]").unwrap().get_list_f64("k").unwrap(), Some(vec![]));
        assert!(KvConfig::parse_inline("a=[1,2").is_err());
        assert!(KvConfig::parse_inline("a=1]").is_err());
    }

    #[test]
    fn run_config_needs_exactly_one_source() {
        let base = "solver = solve-mm\n";
        assert!(RunConfig::from_kv(&KvConfig::parse_file(base).unwrap()).is_err());
        let both = format!("{base}problem = a.qmm\ngen = mm\n");
        assert!(RunConfig::from_kv(&KvConfig::parse_file(&both).unwrap()).is_err());
        let ok = RunConfig::from_kv(&KvConfig::parse_file(&format!("{base}gen = mm:dx=2\nT = 7\n")).unwrap()).unwrap();
        assert_eq!(ok.overrides.t, Some(7));
        assert!(matches!(ok.source, ProblemSource::Gen(ref g) if g.family == "mm"));
    }

    #[test]
    fn run_config_rejects_bad_tolerances_and_keys() {
        for text in [
            "solver=x\ngen=mm\neps=0\n",
            "solver=x\ngen=mm\neps=1e-3\neps0=1e-4\n",
            "solver=x\ngen=mm\nbogus=1\n",
            "solver=x\ngen=mm\nsub=half\n",
        ] {
            assert!(RunConfig::from_kv(&KvConfig::parse_file(text).unwrap()).is_err(), "{text}");
        }
    }

    #[test]
    fn generator_specs() {
        let inst = GenSpec::parse("mm:dx=2,dy=3,lx=4").unwrap().generate(1).unwrap();
        assert_eq!(inst.dims(), (2, 3));
        let fs = GenSpec::parse("fs:n=3,d=2,l=[1,4,9]").unwrap().generate(1).unwrap();
        assert_eq!(fs.n(), 3);
        assert_eq!(fs.dims(), (2, 0));
        let mmfs = GenSpec::parse("mmfs:n=2,lx=[1,2]").unwrap().generate(1).unwrap();
        assert_eq!(mmfs.n(), 2);
        assert!(GenSpec::parse("nope").is_err());
        assert!(GenSpec::parse("mm:zz=1").unwrap().generate(1).is_err());
        let a = GenSpec::parse("agg-fs:n=2").unwrap();
        assert_eq!(a.generate(5).unwrap().saddle(), a.generate(5).unwrap().saddle());
    }
}
