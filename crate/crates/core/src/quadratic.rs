//! Quadratic summands and couplings with exact constants and closed-form
//! conjugates.

use nalgebra::DMatrix;

use crate::error::{PdxError, Result};
use crate::linalg::{
    dense_mul_into, dense_tr_mul_add_into, dot, power_iteration_lmax, spectral_norm, SymMatrix,
};
use crate::oracle::{Conjugate, CouplingConstants, CouplingOracle, SmoothConvexOracle};

pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
enum Inverse {
    Diagonal(Vec<f64>),
    Dense(DMatrix<f64>),
}

/// `f(x) = ½ xᵀAx + aᵀx` with `A` symmetric PSD.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticOracle {
    mat: SymMatrix,
    lin: Vec<f64>,
    l: f64,
    min_eig: f64,
    inv: Option<Inverse>,
}

impl QuadraticOracle {
    /// Diagonal `A`; panics on negative or non-finite entries.
    pub fn diagonal(diag: Vec<f64>, lin: Vec<f64>) -> Self {
        assert_eq!(diag.len(), lin.len(), "diagonal and linear term dims differ");
        assert!(
            diag.iter().all(|d| d.is_finite() && *d >= -SYMMETRY_TOL),
            "diagonal must be finite and non-negative"
        );
        let mat = SymMatrix::Diagonal(diag);
        Self::from_parts(mat, lin, None)
    }

    /// Dense symmetric `A`, constants from an eigendecomposition.
    pub fn dense(m: DMatrix<f64>, lin: Vec<f64>) -> Result<Self> {
        Self::check_dense(&m, &lin)?;
        Ok(Self::from_parts(SymMatrix::Dense(m), lin, None))
    }

    /// Dense symmetric `A` whose smoothness constant is estimated by power
    /// iteration (30 rounds, tolerance 1e-6).
    pub fn dense_estimated(m: DMatrix<f64>, lin: Vec<f64>) -> Result<Self> {
        Self::check_dense(&m, &lin)?;
        let est = power_iteration_lmax(&m, 30, 1e-6);
        Ok(Self::from_parts(SymMatrix::Dense(m), lin, Some(est)))
    }

    pub fn from_sym(mat: SymMatrix, lin: Vec<f64>) -> Result<Self> {
        match mat {
            SymMatrix::Diagonal(d) => {
                if d.len() != lin.len() {
                    return Err(PdxError::DimMismatch(format!("{} vs {}", d.len(), lin.len())));
                }
                if d.iter().any(|v| !v.is_finite() || *v < -SYMMETRY_TOL) {
                    return Err(PdxError::InvalidSpec("diagonal must be non-negative".into()));
                }
                Ok(Self::diagonal(d, lin))
            }
            SymMatrix::Dense(m) => Self::dense(m, lin),
        }
    }

    fn check_dense(m: &DMatrix<f64>, lin: &[f64]) -> Result<()> {
        if m.nrows() != m.ncols() || m.nrows() != lin.len() {
            return Err(PdxError::DimMismatch(format!(
                "matrix {}x{} with linear term of length {}",
                m.nrows(),
                m.ncols(),
                lin.len()
            )));
        }
        if !crate::linalg::is_symmetric(m, SYMMETRY_TOL) {
            return Err(PdxError::InvalidSpec("matrix is not symmetric".into()));
        }
        if m.iter().any(|v| !v.is_finite()) || lin.iter().any(|v| !v.is_finite()) {
            return Err(PdxError::NonFiniteConstant("quadratic coefficients".into()));
        }
        Ok(())
    }

    fn from_parts(mat: SymMatrix, lin: Vec<f64>, l_override: Option<f64>) -> Self {
        let (lo, hi) = if mat.dim() == 0 { (0.0, 0.0) } else { mat.eig_range() };
        let l = l_override.unwrap_or(hi).max(0.0);
        let inv = if lo > 0.0 {
            match &mat {
                SymMatrix::Diagonal(d) => Some(Inverse::Diagonal(d.iter().map(|v| 1.0 / v).collect())),
                SymMatrix::Dense(m) => m
                    .clone()
                    .cholesky()
                    .map(|c| Inverse::Dense(c.inverse())),
            }
        } else {
            None
        };
        QuadraticOracle {
            mat,
            lin,
            l,
            min_eig: lo.max(0.0),
            inv,
        }
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.mat
    }

    pub fn linear(&self) -> &[f64] {
        &self.lin
    }

    /// Smallest eigenvalue of `A` (the strong convexity modulus).
    pub fn strong_convexity(&self) -> f64 {
        self.min_eig
    }

    /// Adds `c/2‖x‖² + ⟨lin, x⟩`.
    pub fn shifted(&self, c: f64, lin: &[f64]) -> QuadraticOracle {
        let mat = self.mat.add_identity(c);
        let lin: Vec<f64> = self.lin.iter().zip(lin).map(|(a, b)| a + b).collect();
        Self::from_parts(mat, lin, None)
    }

    /// The unique minimizer `−A⁻¹a`, when `A ≻ 0`.
    pub fn minimizer(&self) -> Option<Vec<f64>> {
        self.conj_grad(&vec![0.0; self.lin.len()])
    }

    fn conj_grad(&self, p: &[f64]) -> Option<Vec<f64>> {
        let r: Vec<f64> = p.iter().zip(&self.lin).map(|(a, b)| a - b).collect();
        match self.inv.as_ref()? {
            Inverse::Diagonal(d) => Some(r.iter().zip(d).map(|(a, b)| a * b).collect()),
            Inverse::Dense(m) => {
                let mut out = vec![0.0; r.len()];
                dense_mul_into(m, &r, &mut out);
                Some(out)
            }
        }
    }
}

impl SmoothConvexOracle for QuadraticOracle {
    fn dim(&self) -> usize {
        self.lin.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        0.5 * self.mat.quad_form(x) + dot(&self.lin, x)
    }

    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        self.mat.mul_into(x, out);
        for (o, a) in out.iter_mut().zip(&self.lin) {
            *o += a;
        }
    }

    fn smoothness(&self) -> f64 {
        self.l
    }

    fn conjugate(&self) -> Option<&dyn Conjugate> {
        if self.inv.is_some() {
            Some(self)
        } else {
            None
        }
    }

    fn quadratic_form(&self) -> Option<QuadraticOracle> {
        Some(self.clone())
    }
}

impl Conjugate for QuadraticOracle {
    /// `f*(p) = ½ (p − a)ᵀ A⁻¹ (p − a)`
    fn conj_value(&self, p: &[f64]) -> f64 {
        let g = self.conj_grad(p).expect("conjugate requires A ≻ 0");
        let r: Vec<f64> = p.iter().zip(&self.lin).map(|(a, b)| a - b).collect();
        0.5 * dot(&r, &g)
    }

    fn conj_gradient(&self, p: &[f64]) -> Vec<f64> {
        self.conj_grad(p).expect("conjugate requires A ≻ 0")
    }
}

/// `h(x, y) = ½ xᵀPx + yᵀCx − ½ yᵀQy` with `P, Q` symmetric PSD and
/// `C` of shape `dy × dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCoupling {
    p: SymMatrix,
    c: DMatrix<f64>,
    q: SymMatrix,
    consts: CouplingConstants,
}

impl QuadraticCoupling {
    pub fn new(p: SymMatrix, c: DMatrix<f64>, q: SymMatrix) -> Result<Self> {
        let (dy, dx) = c.shape();
        if p.dim() != dx || q.dim() != dy {
            return Err(PdxError::DimMismatch(format!(
                "coupling blocks P {}x{}, C {}x{}, Q {}x{}",
                p.dim(),
                p.dim(),
                dy,
                dx,
                q.dim(),
                q.dim()
            )));
        }
        if !p.is_symmetric(SYMMETRY_TOL) || !q.is_symmetric(SYMMETRY_TOL) {
            return Err(PdxError::InvalidSpec("coupling blocks must be symmetric".into()));
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(PdxError::NonFiniteConstant("coupling matrix".into()));
        }
        let xx = if dx == 0 { 0.0 } else { p.eig_range().1.max(0.0) };
        let yy = if dy == 0 { 0.0 } else { q.eig_range().1.max(0.0) };
        let xy = spectral_norm(&c);
        Ok(QuadraticCoupling {
            p,
            c,
            q,
            consts: CouplingConstants { xx, xy, yy },
        })
    }

    pub fn bilinear(c: DMatrix<f64>) -> Self {
        let (dy, dx) = c.shape();
        Self::new(SymMatrix::zeros(dx), c, SymMatrix::zeros(dy)).expect("bilinear coupling")
    }

    /// Same coupling with declared constants replaced; used to model loose
    /// but valid bounds.
    pub fn with_constants(mut self, consts: CouplingConstants) -> Self {
        self.consts = consts;
        self
    }

    pub fn p(&self) -> &SymMatrix {
        &self.p
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn q(&self) -> &SymMatrix {
        &self.q
    }
}

impl CouplingOracle for QuadraticCoupling {
    fn dims(&self) -> (usize, usize) {
        (self.c.ncols(), self.c.nrows())
    }

    fn grad_x_into(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        self.p.mul_into(x, out);
        dense_tr_mul_add_into(&self.c, y, out);
    }

    fn grad_y_into(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        dense_mul_into(&self.c, x, out);
        let qy = self.q.mul(y);
        for (o, v) in out.iter_mut().zip(&qy) {
            *o -= v;
        }
    }

    fn constants(&self) -> CouplingConstants {
        self.consts
    }

    fn value(&self, x: &[f64], y: &[f64]) -> Option<f64> {
        let mut cx = vec![0.0; self.c.nrows()];
        dense_mul_into(&self.c, x, &mut cx);
        Some(0.5 * self.p.quad_form(x) + dot(y, &cx) - 0.5 * self.q.quad_form(y))
    }

    fn quadratic_form(&self) -> Option<QuadraticCoupling> {
        Some(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{norm, sub};
    use crate::math::SeededRng;

    fn random_spd(rng: &mut SeededRng, d: usize) -> DMatrix<f64> {
        let g = DMatrix::from_fn(d, d, |_, _| rng.normal());
        &g * g.transpose() + DMatrix::identity(d, d) * 0.5
    }

    #[test]
    fn conjugate_inverts_gradient() {
        let mut rng = SeededRng::new(3);
        let f = QuadraticOracle::dense(random_spd(&mut rng, 4), rng.normal_vec(4)).unwrap();
        let conj = f.conjugate().unwrap();
        for _ in 0..20 {
            let x = rng.normal_vec(4);
            let p = f.gradient(&x);
            let back = conj.conj_gradient(&p);
            assert!(norm(&sub(&back, &x)) <= 1e-9 * norm(&x).max(1.0));
            // Fenchel–Young equality at conjugate pairs
            let lhs = f.value(&x) + conj.conj_value(&p);
            assert!((lhs - dot(&p, &x)).abs() <= 1e-9 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn rejects_asymmetric_dense() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(QuadraticOracle::dense(m, vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn singular_quadratic_has_no_conjugate() {
        let f = QuadraticOracle::diagonal(vec![1.0, 0.0], vec![0.0, 1.0]);
        assert!(f.conjugate().is_none());
        assert_eq!(f.smoothness(), 1.0);
        assert_eq!(f.strong_convexity(), 0.0);
    }

    #[test]
    fn estimated_constant_close_to_exact() {
        let mut rng = SeededRng::new(11);
        let m = random_spd(&mut rng, 6);
        let exact = QuadraticOracle::dense(m.clone(), vec![0.0; 6]).unwrap();
        let est = QuadraticOracle::dense_estimated(m, vec![0.0; 6]).unwrap();
        assert!(est.smoothness() <= exact.smoothness() + 1e-9);
        assert!(est.smoothness() >= 0.9 * exact.smoothness());
    }

    #[test]
    fn coupling_gradients_and_constants() {
        let c = DMatrix::from_row_slice(1, 2, &[3.0, 4.0]);
        let h = QuadraticCoupling::new(
            SymMatrix::Diagonal(vec![1.0, 2.0]),
            c,
            SymMatrix::Diagonal(vec![0.5]),
        )
        .unwrap();
        let k = h.constants();
        assert_eq!((k.xx, k.yy), (2.0, 0.5));
        assert!((k.xy - 5.0).abs() < 1e-12);
        let (x, y) = ([1.0, -1.0], [2.0]);
        assert_eq!(h.grad_x(&x, &y), vec![1.0 + 6.0, -2.0 + 8.0]);
        assert_eq!(h.grad_y(&x, &y), vec![3.0 - 4.0 - 1.0]);
        assert_eq!(h.value(&x, &y), Some(0.5 * 3.0 + -2.0 - 0.5 * 0.5 * 4.0));
    }
}
