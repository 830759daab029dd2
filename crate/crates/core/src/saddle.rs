//! Closed-form saddle points, best responses and duality gaps for quadratic
//! objectives
//! `F(x, y) = ½xᵀHxx x + yᵀCx − ½yᵀHyy y + axᵀx − ayᵀy`.
//!
//! A minimization problem is the special case `dy = 0`, where the gap reduces
//! to suboptimality.

use nalgebra::{DMatrix, DVector};

use crate::error::{PdxError, Result};
use crate::linalg::{dense_mul_into, dense_tr_mul_add_into, dot, norm, solve_dense};
use crate::quadratic::{QuadraticCoupling, QuadraticOracle};

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSaddle {
    pub hxx: DMatrix<f64>,
    pub hyy: DMatrix<f64>,
    /// `dy × dx`
    pub c: DMatrix<f64>,
    pub ax: Vec<f64>,
    pub ay: Vec<f64>,
}

/// A stationary point with the residual of its defining linear system.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub residual: f64,
}

impl QuadraticSaddle {
    pub fn from_finite_sum(fs: &[QuadraticOracle], mu: f64) -> Self {
        let d = fs.first().map(|f| f.linear().len()).unwrap_or(0);
        let n = fs.len().max(1) as f64;
        let mut hxx = DMatrix::identity(d, d) * mu;
        let mut ax = vec![0.0; d];
        for f in fs {
            hxx += f.matrix().to_dense() / n;
            for (a, b) in ax.iter_mut().zip(f.linear()) {
                *a += b / n;
            }
        }
        QuadraticSaddle {
            hxx,
            hyy: DMatrix::zeros(0, 0),
            c: DMatrix::zeros(0, d),
            ax,
            ay: Vec::new(),
        }
    }

    /// Averages the summands; `fs`, `gs`, `hs` must have equal lengths.
    pub fn from_mmfs(
        fs: &[QuadraticOracle],
        gs: &[QuadraticOracle],
        hs: &[QuadraticCoupling],
        mu_x: f64,
        mu_y: f64,
    ) -> Self {
        let dx = fs.first().map(|f| f.linear().len()).unwrap_or(0);
        let dy = gs.first().map(|g| g.linear().len()).unwrap_or(0);
        let n = fs.len().max(1) as f64;
        let mut hxx = DMatrix::identity(dx, dx) * mu_x;
        let mut hyy = DMatrix::identity(dy, dy) * mu_y;
        let mut c = DMatrix::zeros(dy, dx);
        let mut ax = vec![0.0; dx];
        let mut ay = vec![0.0; dy];
        for f in fs {
            hxx += f.matrix().to_dense() / n;
            for (a, b) in ax.iter_mut().zip(f.linear()) {
                *a += b / n;
            }
        }
        for g in gs {
            hyy += g.matrix().to_dense() / n;
            for (a, b) in ay.iter_mut().zip(g.linear()) {
                *a += b / n;
            }
        }
        for h in hs {
            hxx += h.p().to_dense() / n;
            hyy += h.q().to_dense() / n;
            c += h.c() / n;
        }
        QuadraticSaddle { hxx, hyy, c, ax, ay }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.ax.len(), self.ay.len())
    }

    pub fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        let hx = mat_vec(&self.hxx, x);
        let hy = mat_vec(&self.hyy, y);
        let cx = mat_vec(&self.c, x);
        0.5 * dot(x, &hx) + dot(y, &cx) - 0.5 * dot(y, &hy) + dot(&self.ax, x) - dot(&self.ay, y)
    }

    /// `(∇x F, −∇y F)`, the monotone operator of the saddle problem.
    pub fn operator(&self, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut gx = mat_vec(&self.hxx, x);
        dense_tr_mul_add_into(&self.c, y, &mut gx);
        for (g, a) in gx.iter_mut().zip(&self.ax) {
            *g += a;
        }
        let cx = mat_vec(&self.c, x);
        let hy = mat_vec(&self.hyy, y);
        let gy = (0..y.len()).map(|i| hy[i] - cx[i] + self.ay[i]).collect();
        (gx, gy)
    }

    /// Solves `Hxx x + Cᵀy = −ax`, `Cx − Hyy y = ay`.
    pub fn exact_saddle(&self) -> Result<ExactSolution> {
        let (dx, dy) = self.dims();
        let mut k = DMatrix::zeros(dx + dy, dx + dy);
        k.view_mut((0, 0), (dx, dx)).copy_from(&self.hxx);
        k.view_mut((0, dx), (dx, dy)).copy_from(&self.c.transpose());
        k.view_mut((dx, 0), (dy, dx)).copy_from(&self.c);
        k.view_mut((dx, dx), (dy, dy)).copy_from(&(-&self.hyy));
        let mut rhs: Vec<f64> = self.ax.iter().map(|v| -v).collect();
        rhs.extend_from_slice(&self.ay);
        let sol = solve_dense(&k, &rhs)?;
        if sol.iter().any(|v| !v.is_finite()) {
            return Err(PdxError::SingularSystem("non-finite saddle".into()));
        }
        let x = sol[..dx].to_vec();
        let y = sol[dx..].to_vec();
        let (gx, gy) = self.operator(&x, &y);
        let residual = (norm(&gx).powi(2) + norm(&gy).powi(2)).sqrt();
        Ok(ExactSolution { x, y, residual })
    }

    /// `argmax_y′ F(x, y′) = Hyy⁻¹(Cx − ay)`
    pub fn best_response_y(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.ay.is_empty() {
            return Ok(Vec::new());
        }
        let cx = mat_vec(&self.c, x);
        let rhs: Vec<f64> = cx.iter().zip(&self.ay).map(|(a, b)| a - b).collect();
        spd_solve(&self.hyy, &rhs)
    }

    /// `argmin_x′ F(x′, y) = −Hxx⁻¹(Cᵀy + ax)`
    pub fn best_response_x(&self, y: &[f64]) -> Result<Vec<f64>> {
        let mut rhs = self.ax.clone();
        dense_tr_mul_add_into(&self.c, y, &mut rhs);
        let v = spd_solve(&self.hxx, &rhs)?;
        Ok(v.into_iter().map(|t| -t).collect())
    }

    /// `max_y′ F(x, y′) − min_x′ F(x′, y)`
    pub fn gap(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let (dx, dy) = self.dims();
        if x.len() != dx || y.len() != dy {
            return Err(PdxError::DimMismatch(format!(
                "point ({}, {}) vs problem ({dx}, {dy})",
                x.len(),
                y.len()
            )));
        }
        let yb = self.best_response_y(x)?;
        let xb = self.best_response_x(y)?;
        Ok(self.value(x, &yb) - self.value(&xb, y))
    }
}

fn mat_vec(m: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m.nrows()];
    dense_mul_into(m, x, &mut out);
    out
}

fn spd_solve(m: &DMatrix<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| PdxError::SingularSystem("matrix is not positive definite".into()))?;
    Ok(chol
        .solve(&DVector::from_column_slice(b))
        .as_slice()
        .to_vec())
}
