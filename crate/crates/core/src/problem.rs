//! Problem descriptors for the three solver families.

use std::sync::Arc;

use crate::error::{Diagnostics, PdxError, Result};
use crate::linalg::{all_finite, axpy, norm_sq};
use crate::oracle::{CouplingConstants, CouplingOracle, SmoothConvexOracle};
use crate::saddle::QuadraticSaddle;

pub type SummandRef = Arc<dyn SmoothConvexOracle>;
pub type CouplingRef = Arc<dyn CouplingOracle>;

/// `min_x max_y f(x) + h(x, y) − g(y) + μx/2‖x‖² − μy/2‖y‖²`
#[derive(Clone)]
pub struct SeparableMinimaxProblem {
    pub f: SummandRef,
    pub g: SummandRef,
    pub h: CouplingRef,
    pub mu_x: f64,
    pub mu_y: f64,
}

/// All regularity constants a minimax schedule consumes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimaxConstants {
    pub lx: f64,
    pub ly: f64,
    pub mu_x: f64,
    pub mu_y: f64,
    pub lam: CouplingConstants,
}

impl SeparableMinimaxProblem {
    pub fn dims(&self) -> (usize, usize) {
        (self.f.dim(), self.g.dim())
    }

    pub fn constants(&self) -> MinimaxConstants {
        MinimaxConstants {
            lx: self.f.smoothness(),
            ly: self.g.smoothness(),
            mu_x: self.mu_x,
            mu_y: self.mu_y,
            lam: self.h.constants(),
        }
    }

    pub fn validate(&self) -> std::result::Result<(), Diagnostics> {
        let mut errs = Vec::new();
        check_modulus("mu_x", self.mu_x, &mut errs);
        check_modulus("mu_y", self.mu_y, &mut errs);
        check_constant("L_x", self.f.smoothness(), &mut errs);
        check_constant("L_y", self.g.smoothness(), &mut errs);
        check_coupling(self.h.as_ref(), "h", &mut errs);
        let (hx, hy) = self.h.dims();
        if hx != self.f.dim() {
            errs.push(PdxError::DimMismatch(format!(
                "f has dim {}, h expects dx = {}",
                self.f.dim(),
                hx
            )));
        }
        if hy != self.g.dim() {
            errs.push(PdxError::DimMismatch(format!(
                "g has dim {}, h expects dy = {}",
                self.g.dim(),
                hy
            )));
        }
        finish(errs)
    }

    /// `F(x, y)` when the coupling exposes values.
    pub fn value(&self, x: &[f64], y: &[f64]) -> Option<f64> {
        let hv = self.h.value(x, y)?;
        Some(
            self.f.value(x) + hv - self.g.value(y) + 0.5 * self.mu_x * norm_sq(x)
                - 0.5 * self.mu_y * norm_sq(y),
        )
    }
}

/// `min_x (1/n) Σ f_i(x) + μ/2‖x‖²`
#[derive(Clone)]
pub struct FiniteSumProblem {
    pub summands: Vec<SummandRef>,
    pub mu: f64,
}

impl FiniteSumProblem {
    pub fn n(&self) -> usize {
        self.summands.len()
    }

    pub fn dim(&self) -> usize {
        self.summands.first().map(|f| f.dim()).unwrap_or(0)
    }

    pub fn smoothness(&self) -> Vec<f64> {
        self.summands.iter().map(|f| f.smoothness()).collect()
    }

    pub fn validate(&self) -> std::result::Result<(), Diagnostics> {
        let mut errs = Vec::new();
        if self.summands.is_empty() {
            errs.push(PdxError::EmptyList);
        }
        check_modulus("mu", self.mu, &mut errs);
        let d = self.dim();
        for (i, f) in self.summands.iter().enumerate() {
            check_constant(&format!("L_{i}"), f.smoothness(), &mut errs);
            if f.dim() != d {
                errs.push(PdxError::DimMismatch(format!(
                    "summand {i} has dim {}, expected {d}",
                    f.dim()
                )));
            }
        }
        finish(errs)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let n = self.n() as f64;
        self.summands.iter().map(|f| f.value(x)).sum::<f64>() / n + 0.5 * self.mu * norm_sq(x)
    }

    /// Closed-form description when every summand is quadratic.
    pub fn quadratic(&self) -> Option<QuadraticSaddle> {
        let qs: Option<Vec<_>> = self.summands.iter().map(|f| f.quadratic_form()).collect();
        Some(QuadraticSaddle::from_finite_sum(&qs?, self.mu))
    }
}

/// `min_x max_y (1/n) Σ (f_i(x) + h_i(x, y) − g_i(y)) + μx/2‖x‖² − μy/2‖y‖²`
#[derive(Clone)]
pub struct MinimaxFiniteSumProblem {
    pub f: Vec<SummandRef>,
    pub g: Vec<SummandRef>,
    pub h: Vec<CouplingRef>,
    pub mu_x: f64,
    pub mu_y: f64,
}

impl MinimaxFiniteSumProblem {
    pub fn n(&self) -> usize {
        self.f.len()
    }

    pub fn dims(&self) -> (usize, usize) {
        (
            self.f.first().map(|f| f.dim()).unwrap_or(0),
            self.g.first().map(|g| g.dim()).unwrap_or(0),
        )
    }

    pub fn validate(&self) -> std::result::Result<(), Diagnostics> {
        let mut errs = Vec::new();
        let n = self.f.len();
        if n == 0 {
            errs.push(PdxError::EmptyList);
        }
        if self.g.len() != n || self.h.len() != n {
            errs.push(PdxError::DimMismatch(format!(
                "summand lists have lengths {}, {}, {}",
                n,
                self.g.len(),
                self.h.len()
            )));
        }
        check_modulus("mu_x", self.mu_x, &mut errs);
        check_modulus("mu_y", self.mu_y, &mut errs);
        let (dx, dy) = self.dims();
        for (i, f) in self.f.iter().enumerate() {
            check_constant(&format!("Lx_{i}"), f.smoothness(), &mut errs);
            if f.dim() != dx {
                errs.push(PdxError::DimMismatch(format!("f_{i} has dim {}", f.dim())));
            }
        }
        for (i, g) in self.g.iter().enumerate() {
            check_constant(&format!("Ly_{i}"), g.smoothness(), &mut errs);
            if g.dim() != dy {
                errs.push(PdxError::DimMismatch(format!("g_{i} has dim {}", g.dim())));
            }
        }
        for (i, h) in self.h.iter().enumerate() {
            check_coupling(h.as_ref(), &format!("h_{i}"), &mut errs);
            if h.dims() != (dx, dy) {
                errs.push(PdxError::DimMismatch(format!(
                    "h_{i} expects {:?}, problem is {:?}",
                    h.dims(),
                    (dx, dy)
                )));
            }
        }
        finish(errs)
    }

    pub fn quadratic(&self) -> Option<QuadraticSaddle> {
        let fs: Option<Vec<_>> = self.f.iter().map(|f| f.quadratic_form()).collect();
        let gs: Option<Vec<_>> = self.g.iter().map(|g| g.quadratic_form()).collect();
        let hs: Option<Vec<_>> = self.h.iter().map(|h| h.quadratic_form()).collect();
        Some(QuadraticSaddle::from_mmfs(
            &fs?, &gs?, &hs?, self.mu_x, self.mu_y,
        ))
    }

    /// Views the problem as a single separable minimax instance with averaged
    /// summands (n = 1 case and diagnostics).
    pub fn as_single(&self) -> Option<SeparableMinimaxProblem> {
        if self.n() != 1 {
            return None;
        }
        Some(SeparableMinimaxProblem {
            f: self.f[0].clone(),
            g: self.g[0].clone(),
            h: self.h[0].clone(),
            mu_x: self.mu_x,
            mu_y: self.mu_y,
        })
    }
}

fn check_modulus(name: &str, mu: f64, errs: &mut Vec<PdxError>) {
    if !mu.is_finite() {
        errs.push(PdxError::NonFiniteConstant(name.into()));
    } else if mu <= 0.0 {
        errs.push(PdxError::NonPositiveModulus(format!("{name} = {mu}")));
    }
}

fn check_constant(name: &str, c: f64, errs: &mut Vec<PdxError>) {
    if !c.is_finite() {
        errs.push(PdxError::NonFiniteConstant(name.into()));
    } else if c < 0.0 {
        errs.push(PdxError::NonFiniteConstant(format!("{name} = {c} is negative")));
    }
}

fn check_coupling(h: &dyn CouplingOracle, name: &str, errs: &mut Vec<PdxError>) {
    let k = h.constants();
    check_constant(&format!("{name}.xx"), k.xx, errs);
    check_constant(&format!("{name}.xy"), k.xy, errs);
    check_constant(&format!("{name}.yy"), k.yy, errs);
}

fn finish(errs: Vec<PdxError>) -> std::result::Result<(), Diagnostics> {
    if errs.is_empty() {
        Ok(())
    } else {
        Err(Diagnostics(errs))
    }
}

/// `(1/n) Σ ∇f_i(x) + μx`
pub fn finite_sum_gradient(problem: &FiniteSumProblem, x: &[f64]) -> Result<Vec<f64>> {
    problem.validate()?;
    if x.len() != problem.dim() {
        return Err(PdxError::DimMismatch(format!(
            "point dim {} vs problem dim {}",
            x.len(),
            problem.dim()
        )));
    }
    let n = problem.n() as f64;
    let mut out = vec![0.0; x.len()];
    let mut buf = vec![0.0; x.len()];
    for f in &problem.summands {
        f.gradient_into(x, &mut buf);
        axpy(1.0 / n, &buf, &mut out);
    }
    axpy(problem.mu, x, &mut out);
    debug_assert!(all_finite(&out));
    Ok(out)
}

/// Duality-gap evaluator for problems with closed-form best responses.
pub fn mm_gap_oracle_hook(problem: &SeparableMinimaxProblem) -> Option<QuadraticSaddle> {
    let f = problem.f.quadratic_form()?;
    let g = problem.g.quadratic_form()?;
    let h = problem.h.quadratic_form()?;
    Some(QuadraticSaddle::from_mmfs(
        &[f],
        &[g],
        &[h],
        problem.mu_x,
        problem.mu_y,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::FnOracle;
    use crate::quadratic::{QuadraticCoupling, QuadraticOracle};
    use nalgebra::DMatrix;

    fn one_d() -> SeparableMinimaxProblem {
        SeparableMinimaxProblem {
            f: Arc::new(QuadraticOracle::diagonal(vec![1.0], vec![-1.0])),
            g: Arc::new(QuadraticOracle::diagonal(vec![1.0], vec![0.0])),
            h: Arc::new(QuadraticCoupling::bilinear(DMatrix::from_element(1, 1, 1.0))),
            mu_x: 1.0,
            mu_y: 1.0,
        }
    }

    #[test]
    fn validate_examples() {
        assert!(one_d().validate().is_ok());
        let mut p = one_d();
        p.mu_x = 0.0;
        let err = p.validate().unwrap_err();
        assert!(matches!(err.first(), Some(PdxError::NonPositiveModulus(_))));
        let mut p = one_d();
        p.f = Arc::new(QuadraticOracle::diagonal(vec![1.0; 3], vec![0.0; 3]));
        p.h = Arc::new(QuadraticCoupling::bilinear(DMatrix::zeros(1, 2)));
        let err = p.validate().unwrap_err();
        assert!(err.contains(|e| matches!(e, PdxError::DimMismatch(_))));
    }

    #[test]
    fn finite_sum_gradient_examples() {
        let p = FiniteSumProblem {
            summands: vec![Arc::new(QuadraticOracle::diagonal(vec![1.0], vec![0.0]))],
            mu: 1.0,
        };
        assert_eq!(finite_sum_gradient(&p, &[1.0]).unwrap(), vec![2.0]);

        let bad = FiniteSumProblem {
            summands: vec![
                Arc::new(QuadraticOracle::diagonal(vec![1.0], vec![0.0])),
                Arc::new(QuadraticOracle::diagonal(vec![0.0], vec![1.0])),
            ],
            mu: 0.0,
        };
        assert!(matches!(
            finite_sum_gradient(&bad, &[1.0]),
            Err(PdxError::NonPositiveModulus(_))
        ));
    }

    #[test]
    fn finite_sum_gradient_vanishes_at_minimizer() {
        let p = FiniteSumProblem {
            summands: vec![
                Arc::new(QuadraticOracle::diagonal(vec![2.0, 1.0], vec![1.0, -1.0])),
                Arc::new(QuadraticOracle::diagonal(vec![0.0, 3.0], vec![0.5, 2.0])),
            ],
            mu: 0.5,
        };
        let q = p.quadratic().unwrap();
        let xs = q.exact_saddle().unwrap();
        let g = finite_sum_gradient(&p, &xs.x).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn gap_hook_presence() {
        let p = one_d();
        let gap = mm_gap_oracle_hook(&p).unwrap();
        let s = gap.exact_saddle().unwrap();
        assert!((s.x[0] - 0.4).abs() < 1e-12 && (s.y[0] - 0.2).abs() < 1e-12);
        assert!(gap.gap(&s.x, &s.y).unwrap().abs() < 1e-9);

        let mut black_box = one_d();
        black_box.f = Arc::new(FnOracle {
            dim: 1,
            smoothness: 1.0,
            value: |x: &[f64]| 0.5 * x[0] * x[0] - x[0],
            gradient: |x: &[f64], out: &mut [f64]| out[0] = x[0] - 1.0,
        });
        assert!(mm_gap_oracle_hook(&black_box).is_none());
    }

    #[test]
    fn gap_hook_matches_grid_search() {
        let p = one_d();
        let gap = mm_gap_oracle_hook(&p).unwrap().gap(&[0.0], &[0.0]).unwrap();
        // F(x, y) = x² − x + xy − y²; brute-force both best responses on [−2, 2].
        let h = 1e-4;
        let steps = (4.0 / h) as usize;
        let fval = |x: f64, y: f64| x * x - x + x * y - y * y;
        let mut max_y = f64::NEG_INFINITY;
        let mut min_x = f64::INFINITY;
        for k in 0..=steps {
            let t = -2.0 + k as f64 * h;
            max_y = max_y.max(fval(0.0, t));
            min_x = min_x.min(fval(t, 0.0));
        }
        assert!(gap > 0.0);
        assert!((gap - (max_y - min_x)).abs() < 1e-6, "gap {gap}");
    }
}
