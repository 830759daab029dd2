//! The `qmm` text format for quadratic minimax finite sums.
//!
//! ```text
//! qmm dx dy n [ext]
//! # per summand, n times:
//! A   dx rows of dx numbers      f_i(x) = ½xᵀAx + aᵀx
//! a   dx numbers
//! B   dy rows of dy numbers      g_i(y) = ½yᵀBy + bᵀy
//! b   dy numbers
//! C   dy rows of dx numbers      h_i(x, y) = yᵀCx (+ ½xᵀPx − ½yᵀQy)
//! P   dx rows (only with ext)
//! Q   dy rows (only with ext)
//! μx μy
//! ```
//!
//! Numbers are whitespace separated and `#` starts a comment, so line breaks
//! are layout only. Every summand repeats the same `μx μy`. Matrices whose
//! off-diagonal entries are all zero are stored diagonally.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{PdxError, Result};
use crate::linalg::SymMatrix;
use crate::quadratic::{QuadraticCoupling, QuadraticOracle};
use crate::testbed::QuadraticInstance;

/// Symmetry tolerance, scaled by `max(1, |entry|)`.
pub const SYMMETRY_TOL: f64 = 1e-12;

struct Tokens<'a> {
    items: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let items = text
            .lines()
            .enumerate()
            .flat_map(|(i, line)| {
                let body = line.split('#').next().unwrap_or("");
                body.split_whitespace().map(move |t| (i + 1, t))
            })
            .collect();
        Tokens { items, pos: 0 }
    }

    fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        let t = self
            .items
            .get(self.pos)
            .copied()
            .ok_or_else(|| PdxError::Parse(format!("unexpected end of input reading {what}")))?;
        self.pos += 1;
        Ok(t)
    }

    fn number(&mut self, what: &str) -> Result<f64> {
        let (line, t) = self.next(what)?;
        let v: f64 = t
            .parse()
            .map_err(|_| PdxError::Parse(format!("line {line}: expected a number for {what}, found {t:?}")))?;
        if !v.is_finite() {
            return Err(PdxError::Parse(format!("line {line}: non-finite value in {what}")));
        }
        Ok(v)
    }

    fn count(&mut self, what: &str) -> Result<usize> {
        let (line, t) = self.next(what)?;
        t.parse()
            .map_err(|_| PdxError::Parse(format!("line {line}: expected a count for {what}, found {t:?}")))
    }

    fn vector(&mut self, d: usize, what: &str) -> Result<Vec<f64>> {
        (0..d).map(|_| self.number(what)).collect()
    }

    fn matrix(&mut self, rows: usize, cols: usize, what: &str) -> Result<DMatrix<f64>> {
        let v = self.vector(rows * cols, what)?;
        Ok(DMatrix::from_row_slice(rows, cols, &v))
    }

    fn symmetric(&mut self, d: usize, what: &str) -> Result<SymMatrix> {
        let m = self.matrix(d, d, what)?;
        for i in 0..d {
            for j in 0..i {
                let (a, b) = (m[(i, j)], m[(j, i)]);
                if (a - b).abs() > SYMMETRY_TOL * 1f64.max(a.abs()).max(b.abs()) {
                    return Err(PdxError::Parse(format!(
                        "{what} is not symmetric: entry ({i}, {j}) = {a} vs ({j}, {i}) = {b}"
                    )));
                }
            }
        }
        let diagonal = (0..d).all(|i| (0..d).all(|j| i == j || m[(i, j)] == 0.0));
        let sym = if diagonal {
            SymMatrix::Diagonal(m.diagonal().iter().copied().collect())
        } else {
            SymMatrix::Dense(m.clone() + m.transpose()).scaled(0.5)
        };
        if d > 0 {
            let (lo, hi) = sym.eig_range();
            if lo < -1e-9 * 1f64.max(hi.abs()) {
                return Err(PdxError::Parse(format!("{what} is not positive semidefinite (eigenvalue {lo})")));
            }
        }
        Ok(sym)
    }
}

fn with_context<T>(r: Result<T>, what: &str) -> Result<T> {
    r.map_err(|e| match e {
        PdxError::Parse(m) => PdxError::Parse(m),
        other => PdxError::Parse(format!("{what}: {other}")),
    })
}

pub fn parse_qmm(text: &str) -> Result<QuadraticInstance> {
    let mut tok = Tokens::new(text);
    let (line, magic) = tok.next("header")?;
    if magic != "qmm" {
        return Err(PdxError::Parse(format!("line {line}: expected header `qmm`, found {magic:?}")));
    }
    let dx = tok.count("dx")?;
    let dy = tok.count("dy")?;
    let n = tok.count("n")?;
    if dx == 0 || n == 0 {
        return Err(PdxError::Parse(format!("need dx >= 1 and n >= 1, got dx = {dx}, n = {n}")));
    }
    let ext = match tok.items.get(tok.pos) {
        Some((l, "ext")) if *l == line => {
            tok.pos += 1;
            true
        }
        _ => false,
    };
    let mut f = Vec::with_capacity(n);
    let mut g = Vec::with_capacity(n);
    let mut h = Vec::with_capacity(n);
    let mut mu: Option<(f64, f64)> = None;
    for i in 0..n {
        let a = tok.symmetric(dx, &format!("A[{i}]"))?;
        let av = tok.vector(dx, &format!("a[{i}]"))?;
        let b = tok.symmetric(dy, &format!("B[{i}]"))?;
        let bv = tok.vector(dy, &format!("b[{i}]"))?;
        let c = tok.matrix(dy, dx, &format!("C[{i}]"))?;
        let (p, q) = if ext {
            (tok.symmetric(dx, &format!("P[{i}]"))?, tok.symmetric(dy, &format!("Q[{i}]"))?)
        } else {
            (SymMatrix::zeros(dx), SymMatrix::zeros(dy))
        };
        let m = (tok.number(&format!("mu_x[{i}]"))?, tok.number(&format!("mu_y[{i}]"))?);
        if let Some(prev) = mu {
            if prev != m {
                return Err(PdxError::Parse(format!(
                    "summand {i} declares moduli {m:?}, earlier summands {prev:?}"
                )));
            }
        }
        mu = Some(m);
        f.push(with_context(QuadraticOracle::from_sym(a, av), &format!("f[{i}]"))?);
        g.push(with_context(QuadraticOracle::from_sym(b, bv), &format!("g[{i}]"))?);
        h.push(with_context(QuadraticCoupling::new(p, c, q), &format!("h[{i}]"))?);
    }
    if let Some((l, t)) = tok.items.get(tok.pos) {
        return Err(PdxError::Parse(format!("line {l}: trailing data starting at {t:?}")));
    }
    let (mu_x, mu_y) = mu.expect("n >= 1");
    Ok(QuadraticInstance { f, g, h, mu_x, mu_y })
}

fn write_rows(out: &mut String, m: &DMatrix<f64>) {
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| m[(r, c)].to_string()).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
}

fn write_vec(out: &mut String, v: &[f64]) {
    if !v.is_empty() {
        let row: Vec<String> = v.iter().map(|x| x.to_string()).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
}

/// Serializes an instance; the `ext` flag is emitted only when some coupling
/// has a non-zero `P` or `Q`.
pub fn write_qmm(inst: &QuadraticInstance) -> String {
    let (dx, dy) = inst.dims();
    let n = inst.n();
    let ext = inst
        .h
        .iter()
        .any(|h| h.p().to_dense().iter().any(|v| *v != 0.0) || h.q().to_dense().iter().any(|v| *v != 0.0));
    let mut out = String::new();
    let _ = writeln!(out, "qmm {dx} {dy} {n}{}", if ext { " ext" } else { "" });
    for i in 0..n {
        let _ = writeln!(out, "# summand {i}");
        write_rows(&mut out, &inst.f[i].matrix().to_dense());
        write_vec(&mut out, inst.f[i].linear());
        write_rows(&mut out, &inst.g[i].matrix().to_dense());
        write_vec(&mut out, inst.g[i].linear());
        write_rows(&mut out, inst.h[i].c());
        if ext {
            write_rows(&mut out, &inst.h[i].p().to_dense());
            write_rows(&mut out, &inst.h[i].q().to_dense());
        }
        let _ = writeln!(out, "{} {}", inst.mu_x, inst.mu_y);
    }
    out
}

pub fn read_qmm_file(path: &std::path::Path) -> Result<QuadraticInstance> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| PdxError::Parse(format!("cannot read {}: {e}", path.display())))?;
    parse_qmm(&text)
}
