//! Oracle abstractions for smooth convex summands and convex-concave couplings.
//!
//! Oracles are stateless: evaluation takes `&self` and solvers keep their own
//! call counters in [`OracleCalls`].

use crate::quadratic::{QuadraticCoupling, QuadraticOracle};

/// Explicit convex conjugate of a summand.
pub trait Conjugate {
    fn conj_value(&self, p: &[f64]) -> f64;
    fn conj_gradient(&self, p: &[f64]) -> Vec<f64>;
}

/// A differentiable convex function with a declared smoothness constant.
pub trait SmoothConvexOracle: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient_into(&self, x: &[f64], out: &mut [f64]);
    fn smoothness(&self) -> f64;

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.gradient_into(x, &mut out);
        out
    }

    fn conjugate(&self) -> Option<&dyn Conjugate> {
        None
    }

    /// Closed-form quadratic description, when the oracle has one.
    fn quadratic_form(&self) -> Option<QuadraticOracle> {
        None
    }
}

/// Blockwise Lipschitz constants of a coupling's gradient.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CouplingConstants {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

/// A convex-concave coupling `h(x, y)`.
pub trait CouplingOracle: Send + Sync {
    fn dims(&self) -> (usize, usize);
    fn grad_x_into(&self, x: &[f64], y: &[f64], out: &mut [f64]);
    fn grad_y_into(&self, x: &[f64], y: &[f64], out: &mut [f64]);
    fn constants(&self) -> CouplingConstants;

    fn value(&self, _x: &[f64], _y: &[f64]) -> Option<f64> {
        None
    }

    fn grad_x(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dims().0];
        self.grad_x_into(x, y, &mut out);
        out
    }

    fn grad_y(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dims().1];
        self.grad_y_into(x, y, &mut out);
        out
    }

    fn quadratic_form(&self) -> Option<QuadraticCoupling> {
        None
    }
}

/// Gradient-call totals per oracle family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OracleCalls {
    pub f: u64,
    pub g: u64,
    pub hx: u64,
    pub hy: u64,
}

impl OracleCalls {
    pub fn total(&self) -> u64 {
        self.f + self.g + self.hx + self.hy
    }

    pub fn add(&mut self, other: &OracleCalls) {
        self.f += other.f;
        self.g += other.g;
        self.hx += other.hx;
        self.hy += other.hy;
    }
}

/// A summand plus `c/2‖x‖² + ⟨lin, x⟩`; smoothness grows by `c`, and the
/// linear part leaves it untouched.
pub struct ShiftedOracle<F: ?Sized> {
    pub inner: std::sync::Arc<F>,
    pub quad: f64,
    pub lin: Vec<f64>,
}

impl<F: SmoothConvexOracle + ?Sized> SmoothConvexOracle for ShiftedOracle<F> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.inner.value(x)
            + 0.5 * self.quad * crate::linalg::norm_sq(x)
            + crate::linalg::dot(&self.lin, x)
    }

    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        self.inner.gradient_into(x, out);
        for ((o, xi), li) in out.iter_mut().zip(x).zip(&self.lin) {
            *o += self.quad * xi + li;
        }
    }

    fn smoothness(&self) -> f64 {
        self.inner.smoothness() + self.quad
    }

    fn quadratic_form(&self) -> Option<QuadraticOracle> {
        self.inner
            .quadratic_form()
            .map(|q| q.shifted(self.quad, &self.lin))
    }
}

/// A function defined by closures, for black-box use.
pub struct FnOracle<V, G>
where
    V: Fn(&[f64]) -> f64 + Send + Sync,
    G: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    pub dim: usize,
    pub smoothness: f64,
    pub value: V,
    pub gradient: G,
}

impl<V, G> SmoothConvexOracle for FnOracle<V, G>
where
    V: Fn(&[f64]) -> f64 + Send + Sync,
    G: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        (self.gradient)(x, out)
    }

    fn smoothness(&self) -> f64 {
        self.smoothness
    }
}
