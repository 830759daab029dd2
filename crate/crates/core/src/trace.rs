//! Per-iteration and per-phase trace rows, stored as CSV with one header row.

use std::io::{Read, Write};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{PdxError, Result};
use crate::oracle::OracleCalls;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// Step or phase index within the innermost loop being traced.
    pub iter: u64,
    /// Outer loop index (0 for single-loop solvers).
    pub outer: u64,
    pub f_calls: u64,
    pub g_calls: u64,
    pub hx_calls: u64,
    pub hy_calls: u64,
    pub potential: Option<f64>,
    pub gap: Option<f64>,
    pub wall_ns: u64,
}

impl TraceRecord {
    pub fn new(iter: u64, outer: u64, calls: &OracleCalls, start: Instant) -> Self {
        TraceRecord {
            iter,
            outer,
            f_calls: calls.f,
            g_calls: calls.g,
            hx_calls: calls.hx,
            hy_calls: calls.hy,
            potential: None,
            gap: None,
            wall_ns: start.elapsed().as_nanos() as u64,
        }
    }

    pub fn calls(&self) -> OracleCalls {
        OracleCalls {
            f: self.f_calls,
            g: self.g_calls,
            hx: self.hx_calls,
            hy: self.hy_calls,
        }
    }
}

pub fn write_trace<W: Write>(out: W, rows: &[TraceRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record([
            "iter", "outer", "f_calls", "g_calls", "hx_calls", "hy_calls", "potential", "gap",
            "wall_ns",
        ])
        .map_err(io_err)?;
    }
    for r in rows {
        w.serialize(r).map_err(io_err)?;
    }
    w.flush().map_err(|e| PdxError::Parse(e.to_string()))
}

pub fn read_trace<R: Read>(input: R) -> Result<Vec<TraceRecord>> {
    let mut rd = csv::Reader::from_reader(input);
    rd.deserialize()
        .map(|r| r.map_err(io_err))
        .collect()
}

/// Checks the row invariants: call counts never decrease, potentials are
/// non-negative.
pub fn check_trace(rows: &[TraceRecord]) -> Result<()> {
    for w in rows.windows(2) {
        let (a, b) = (w[0].calls(), w[1].calls());
        if b.f < a.f || b.g < a.g || b.hx < a.hx || b.hy < a.hy {
            return Err(PdxError::InvalidSpec(format!(
                "oracle counts decrease at iter {}",
                w[1].iter
            )));
        }
    }
    if let Some(r) = rows.iter().find(|r| r.potential.is_some_and(|p| p < 0.0)) {
        return Err(PdxError::InvalidSpec(format!("negative potential at iter {}", r.iter)));
    }
    Ok(())
}

fn io_err(e: csv::Error) -> PdxError {
    PdxError::Parse(e.to_string())
}
