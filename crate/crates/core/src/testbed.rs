//! Seeded quadratic instance generators with exactly known constants and
//! closed-form solutions.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{PdxError, Result};
use crate::linalg::{solve_dense, SymMatrix};
use crate::math::SeededRng;
use crate::mmfs::MmfsPoint;
use crate::problem::{
    CouplingRef, FiniteSumProblem, MinimaxFiniteSumProblem, SeparableMinimaxProblem, SummandRef,
};
use crate::quadratic::{QuadraticCoupling, QuadraticOracle};
use crate::reductions::{AggregateFiniteSum, AggregateMinimaxFiniteSum};
use crate::saddle::{ExactSolution, QuadraticSaddle};

/// A quadratic minimax finite sum
/// `(1/n) Σ f_i(x) + h_i(x, y) − g_i(y) + μx/2‖x‖² − μy/2‖y‖²`.
///
/// `n = 1` is a separable minimax problem; `dy = 0` is a finite sum.
#[derive(Debug, Clone)]
pub struct QuadraticInstance {
    pub f: Vec<QuadraticOracle>,
    pub g: Vec<QuadraticOracle>,
    pub h: Vec<QuadraticCoupling>,
    pub mu_x: f64,
    pub mu_y: f64,
}

impl QuadraticInstance {
    pub fn n(&self) -> usize {
        self.f.len()
    }

    pub fn dims(&self) -> (usize, usize) {
        (
            self.f.first().map(|f| f.linear().len()).unwrap_or(0),
            self.g.first().map(|g| g.linear().len()).unwrap_or(0),
        )
    }

    pub fn minimax_problem(&self) -> Result<SeparableMinimaxProblem> {
        if self.n() != 1 {
            return Err(PdxError::InvalidSpec(format!(
                "separable minimax needs n = 1, instance has n = {}",
                self.n()
            )));
        }
        Ok(SeparableMinimaxProblem {
            f: Arc::new(self.f[0].clone()),
            g: Arc::new(self.g[0].clone()),
            h: Arc::new(self.h[0].clone()),
            mu_x: self.mu_x,
            mu_y: self.mu_y,
        })
    }

    /// Uses the `f` summands and `μx`; the instance must have `dy = 0`.
    pub fn finite_sum_problem(&self) -> Result<FiniteSumProblem> {
        if self.dims().1 != 0 {
            return Err(PdxError::InvalidSpec("finite sum needs dy = 0".into()));
        }
        Ok(FiniteSumProblem {
            summands: self.f.iter().map(|f| Arc::new(f.clone()) as SummandRef).collect(),
            mu: self.mu_x,
        })
    }

    pub fn mmfs_problem(&self) -> MinimaxFiniteSumProblem {
        MinimaxFiniteSumProblem {
            f: self.f.iter().map(|f| Arc::new(f.clone()) as SummandRef).collect(),
            g: self.g.iter().map(|g| Arc::new(g.clone()) as SummandRef).collect(),
            h: self.h.iter().map(|h| Arc::new(h.clone()) as CouplingRef).collect(),
            mu_x: self.mu_x,
            mu_y: self.mu_y,
        }
    }

    /// The instance without its explicit regularizers, for generators that
    /// make only the averages strongly convex.
    pub fn aggregate_finite_sum(&self) -> AggregateFiniteSum {
        AggregateFiniteSum {
            summands: self.f.iter().map(|f| Arc::new(f.clone()) as SummandRef).collect(),
            mu: self.mu_x,
        }
    }

    pub fn aggregate_mmfs(&self) -> AggregateMinimaxFiniteSum {
        let p = self.mmfs_problem();
        AggregateMinimaxFiniteSum {
            f: p.f,
            g: p.g,
            h: p.h,
            mu_x: self.mu_x,
            mu_y: self.mu_y,
        }
    }

    pub fn saddle(&self) -> QuadraticSaddle {
        QuadraticSaddle::from_mmfs(&self.f, &self.g, &self.h, self.mu_x, self.mu_y)
    }

    /// Solution of the proximal subproblem around `zbar`: the VI in
    /// `Φ + γ(∇r − ∇r(z̄))`, returned with its pre-images
    /// `u_i = (x + γ z̄f_i)/(1+γ)`, `v_i = (y + γ z̄g_i)/(1+γ)`.
    pub fn prox_solution(&self, zbar: &MmfsPoint, gamma: f64) -> Result<MmfsPoint> {
        let (dx, dy) = self.dims();
        let n = self.n() as f64;
        let s = 1.0 / (1.0 + gamma);
        let mut k = DMatrix::zeros(dx + dy, dx + dy);
        let mut rhs = vec![0.0; dx + dy];
        for i in 0..dx {
            k[(i, i)] += self.mu_x * (1.0 + gamma);
            rhs[i] += gamma * self.mu_x * zbar.x[i];
        }
        for j in 0..dy {
            k[(dx + j, dx + j)] += self.mu_y * (1.0 + gamma);
            rhs[dx + j] += gamma * self.mu_y * zbar.y[j];
        }
        for (i, ((f, g), h)) in self.f.iter().zip(&self.g).zip(&self.h).enumerate() {
            let a = f.matrix().to_dense();
            let b = g.matrix().to_dense();
            let af = a.clone() * (s / n);
            k.view_mut((0, 0), (dx, dx)).add_assign(&af);
            let shift = &a * nalgebra::DVector::from_column_slice(&zbar.wf[i]) * (gamma * s / n);
            for r in 0..dx {
                rhs[r] -= shift[r] + f.linear()[r] / n;
            }
            let bg = b.clone() * (s / n);
            k.view_mut((dx, dx), (dy, dy)).add_assign(&bg);
            let shift = &b * nalgebra::DVector::from_column_slice(&zbar.wg[i]) * (gamma * s / n);
            for r in 0..dy {
                rhs[dx + r] -= shift[r] + g.linear()[r] / n;
            }
            k.view_mut((0, 0), (dx, dx)).add_assign(&(h.p().to_dense() / n));
            k.view_mut((0, dx), (dx, dy)).add_assign(&(h.c().transpose() / n));
            k.view_mut((dx, 0), (dy, dx)).add_assign(&(-h.c() / n));
            k.view_mut((dx, dx), (dy, dy)).add_assign(&(h.q().to_dense() / n));
        }
        let sol = solve_dense(&k, &rhs)?;
        let x = sol[..dx].to_vec();
        let y = sol[dx..].to_vec();
        let wf = zbar
            .wf
            .iter()
            .map(|z| (0..dx).map(|r| s * (x[r] + gamma * z[r])).collect())
            .collect();
        let wg = zbar
            .wg
            .iter()
            .map(|z| (0..dy).map(|r| s * (y[r] + gamma * z[r])).collect())
            .collect();
        Ok(MmfsPoint { x, y, wf, wg })
    }
}

trait AddAssignView {
    fn add_assign(&mut self, m: &DMatrix<f64>);
}

impl AddAssignView for nalgebra::DMatrixViewMut<'_, f64> {
    fn add_assign(&mut self, m: &DMatrix<f64>) {
        *self += m;
    }
}

pub fn exact_saddle(inst: &QuadraticInstance) -> Result<ExactSolution> {
    inst.saddle().exact_saddle()
}

pub fn duality_gap_quadratic(inst: &QuadraticInstance, x: &[f64], y: &[f64]) -> Result<f64> {
    inst.saddle().gap(x, y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimaxSpec {
    pub dx: usize,
    pub dy: usize,
    pub lx: f64,
    pub ly: f64,
    pub lxx: f64,
    pub lxy: f64,
    pub lyy: f64,
    pub mu_x: f64,
    pub mu_y: f64,
    /// Rotate `A`, `B`, `P`, `Q` by random orthogonal matrices.
    pub dense: bool,
}

impl Default for MinimaxSpec {
    fn default() -> Self {
        MinimaxSpec {
            dx: 5,
            dy: 5,
            lx: 10.0,
            ly: 10.0,
            lxx: 0.0,
            lxy: 1.0,
            lyy: 0.0,
            mu_x: 1.0,
            mu_y: 1.0,
            dense: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteSumSpec {
    pub d: usize,
    /// Per-summand smoothness targets; the length fixes `n`.
    pub l: Vec<f64>,
    pub mu: f64,
    pub dense: bool,
}

impl FiniteSumSpec {
    /// The same targets as an mmfs spec with `dy = 0`.
    pub fn as_mmfs(&self) -> MmfsSpec {
        let n = self.l.len();
        MmfsSpec {
            dx: self.d,
            dy: 0,
            lx: self.l.clone(),
            ly: vec![0.0; n],
            lxx: vec![0.0; n],
            lxy: vec![0.0; n],
            lyy: vec![0.0; n],
            mu_x: self.mu,
            mu_y: 1.0,
            dense: self.dense,
        }
    }

    /// `L_i = l_bar · i^β` for `i = 1..=n`.
    pub fn nonuniform(n: usize, d: usize, l_bar: f64, beta: f64, mu: f64) -> Self {
        FiniteSumSpec {
            d,
            l: (1..=n).map(|i| l_bar * (i as f64).powf(beta)).collect(),
            mu,
            dense: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmfsSpec {
    pub dx: usize,
    pub dy: usize,
    pub lx: Vec<f64>,
    pub ly: Vec<f64>,
    pub lxx: Vec<f64>,
    pub lxy: Vec<f64>,
    pub lyy: Vec<f64>,
    pub mu_x: f64,
    pub mu_y: f64,
    pub dense: bool,
}

impl MmfsSpec {
    /// Identical targets for all `n` summands.
    #[allow(clippy::too_many_arguments)]
    pub fn uniform(
        n: usize,
        dx: usize,
        dy: usize,
        lx: f64,
        ly: f64,
        lxx: f64,
        lxy: f64,
        lyy: f64,
        mu: f64,
    ) -> Self {
        MmfsSpec {
            dx,
            dy,
            lx: vec![lx; n],
            ly: vec![ly; n],
            lxx: vec![lxx; n],
            lxy: vec![lxy; n],
            lyy: vec![lyy; n],
            mu_x: mu,
            mu_y: mu,
            dense: false,
        }
    }
}

fn check_targets(name: &str, v: &[f64]) -> Result<()> {
    if v.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(PdxError::InvalidSpec(format!("{name} targets must be finite and >= 0")));
    }
    Ok(())
}

fn check_mu(mu: f64) -> Result<()> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(PdxError::InvalidSpec(format!("modulus {mu} must be positive")));
    }
    Ok(())
}

/// Eigenvalues in `[0, top]` with the maximum attained exactly.
fn spectrum(rng: &mut SeededRng, d: usize, top: f64) -> Vec<f64> {
    (0..d)
        .map(|i| if i == 0 { top } else { rng.range(0.0, top) })
        .collect()
}

fn orthogonal(rng: &mut SeededRng, d: usize) -> DMatrix<f64> {
    if d == 0 {
        return DMatrix::zeros(0, 0);
    }
    let g = DMatrix::from_fn(d, d, |_, _| rng.normal());
    g.qr().q()
}

fn sym_with_spectrum(rng: &mut SeededRng, eig: Vec<f64>, dense: bool) -> SymMatrix {
    if !dense || eig.len() < 2 {
        return SymMatrix::Diagonal(eig);
    }
    let d = eig.len();
    let u = orthogonal(rng, d);
    let m = &u * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(eig)) * u.transpose();
    SymMatrix::Dense((&m + m.transpose()) * 0.5)
}

/// `dy × dx` matrix `U S Vᵀ` with largest singular value exactly `top`.
fn coupling_matrix(rng: &mut SeededRng, dy: usize, dx: usize, top: f64) -> DMatrix<f64> {
    let k = dx.min(dy);
    let mut s = DMatrix::zeros(dy, dx);
    for i in 0..k {
        s[(i, i)] = if i == 0 { top } else { rng.range(0.0, top) };
    }
    orthogonal(rng, dy) * s * orthogonal(rng, dx).transpose()
}

/// `top · k/(d−1)` for `k = 0..d`: both ends of `[0, top]` are attained, so
/// the modulus alone controls the flattest direction.
fn even_spectrum(_: &mut SeededRng, d: usize, top: f64) -> Vec<f64> {
    if d == 1 {
        return vec![top];
    }
    (0..d).map(|k| top * k as f64 / (d - 1) as f64).collect()
}

type Spectrum = fn(&mut SeededRng, usize, f64) -> Vec<f64>;

fn quad(rng: &mut SeededRng, d: usize, top: f64, dense: bool, spec: Spectrum) -> Result<QuadraticOracle> {
    let eig = spec(rng, d, top);
    let mat = sym_with_spectrum(rng, eig, dense);
    let lin = rng.normal_vec(d);
    QuadraticOracle::from_sym(mat, lin)
}

fn coupling(
    rng: &mut SeededRng,
    dx: usize,
    dy: usize,
    (xx, xy, yy): (f64, f64, f64),
    dense: bool,
) -> Result<QuadraticCoupling> {
    let ex = if xx > 0.0 { spectrum(rng, dx, xx) } else { vec![0.0; dx] };
    let p = sym_with_spectrum(rng, ex, dense);
    let ey = if yy > 0.0 { spectrum(rng, dy, yy) } else { vec![0.0; dy] };
    let q = sym_with_spectrum(rng, ey, dense);
    let c = coupling_matrix(rng, dy, dx, xy);
    QuadraticCoupling::new(p, c, q)
}

pub fn gen_quadratic_minimax(spec: &MinimaxSpec, seed: u64) -> Result<QuadraticInstance> {
    gen_mmfs(
        &MmfsSpec {
            dx: spec.dx,
            dy: spec.dy,
            lx: vec![spec.lx],
            ly: vec![spec.ly],
            lxx: vec![spec.lxx],
            lxy: vec![spec.lxy],
            lyy: vec![spec.lyy],
            mu_x: spec.mu_x,
            mu_y: spec.mu_y,
            dense: spec.dense,
        },
        seed,
    )
}

pub fn gen_finite_sum(spec: &FiniteSumSpec, seed: u64) -> Result<QuadraticInstance> {
    gen_mmfs(&spec.as_mmfs(), seed)
}

pub fn gen_mmfs(spec: &MmfsSpec, seed: u64) -> Result<QuadraticInstance> {
    gen_with(spec, seed, spectrum)
}

/// Like [`gen_mmfs`], but every `f_i` and `g_i` has the evenly spaced
/// spectrum on `[0, L]` (zero included), so each aggregate is exactly as
/// ill-conditioned as its targets allow. Used for rate-scaling runs.
pub fn gen_worst_case(spec: &MmfsSpec, seed: u64) -> Result<QuadraticInstance> {
    gen_with(spec, seed, even_spectrum)
}

fn gen_with(spec: &MmfsSpec, seed: u64, eig: Spectrum) -> Result<QuadraticInstance> {
    let n = spec.lx.len();
    if n == 0 {
        return Err(PdxError::InvalidSpec("n must be at least 1".into()));
    }
    if [&spec.ly, &spec.lxx, &spec.lxy, &spec.lyy].iter().any(|v| v.len() != n) {
        return Err(PdxError::InvalidSpec("target lists differ in length".into()));
    }
    if spec.dx == 0 {
        return Err(PdxError::InvalidSpec("dx must be positive".into()));
    }
    for (name, v) in [
        ("Lx", &spec.lx),
        ("Ly", &spec.ly),
        ("Lxx", &spec.lxx),
        ("Lxy", &spec.lxy),
        ("Lyy", &spec.lyy),
    ] {
        check_targets(name, v)?;
    }
    check_mu(spec.mu_x)?;
    check_mu(spec.mu_y)?;
    let mut rng = SeededRng::new(seed);
    let mut f = Vec::with_capacity(n);
    let mut g = Vec::with_capacity(n);
    let mut h = Vec::with_capacity(n);
    for i in 0..n {
        f.push(quad(&mut rng, spec.dx, spec.lx[i], spec.dense, eig)?);
        g.push(quad(&mut rng, spec.dy, spec.ly[i], spec.dense, eig)?);
        h.push(coupling(
            &mut rng,
            spec.dx,
            spec.dy,
            (spec.lxx[i], spec.lxy[i], spec.lyy[i]),
            spec.dense,
        )?);
    }
    Ok(QuadraticInstance {
        f,
        g,
        h,
        mu_x: spec.mu_x,
        mu_y: spec.mu_y,
    })
}

/// Summand `i` owns the coordinates `k ≡ i (mod n)`; its curvature there lies
/// in `[nμ, L]` and vanishes elsewhere. Every summand is singular for
/// `n ≥ 2`, while the average is `μ`-strongly convex.
fn aggregate_quad(rng: &mut SeededRng, n: usize, i: usize, d: usize, l: f64, mu: f64) -> Result<QuadraticOracle> {
    let lo = n as f64 * mu;
    if l < lo {
        return Err(PdxError::InvalidSpec(format!("L = {l} below n·mu = {lo}")));
    }
    let mut first = true;
    let diag = (0..d)
        .map(|k| {
            if k % n != i {
                0.0
            } else if std::mem::take(&mut first) {
                l
            } else {
                rng.range(lo, l)
            }
        })
        .collect();
    QuadraticOracle::from_sym(SymMatrix::Diagonal(diag), rng.normal_vec(d))
}

/// Finite sum whose summands are merely convex but whose average is
/// `μ`-strongly convex. The returned instance carries `mu_x = μ` as the
/// aggregate modulus; its objective has no explicit regularizer.
pub fn gen_aggregate_finite_sum(n: usize, d: usize, l: f64, mu: f64, seed: u64) -> Result<QuadraticInstance> {
    check_mu(mu)?;
    let mut rng = SeededRng::new(seed);
    let f = (0..n)
        .map(|i| aggregate_quad(&mut rng, n, i, d, l, mu))
        .collect::<Result<Vec<_>>>()?;
    Ok(QuadraticInstance {
        g: vec![QuadraticOracle::diagonal(vec![], vec![]); n],
        h: vec![QuadraticCoupling::bilinear(DMatrix::zeros(0, d)); n],
        f,
        mu_x: mu,
        mu_y: 1.0,
    })
}

/// Minimax finite sum whose `f_i`, `g_i` are merely convex while the averages
/// are `μx`/`μy`-strongly convex; couplings are bilinear with norm `lxy`.
#[allow(clippy::too_many_arguments)]
pub fn gen_aggregate_mmfs(
    n: usize,
    dx: usize,
    dy: usize,
    l: f64,
    lxy: f64,
    mu_x: f64,
    mu_y: f64,
    seed: u64,
) -> Result<QuadraticInstance> {
    check_mu(mu_x)?;
    check_mu(mu_y)?;
    let mut rng = SeededRng::new(seed);
    let mut f = Vec::with_capacity(n);
    let mut g = Vec::with_capacity(n);
    let mut h = Vec::with_capacity(n);
    for i in 0..n {
        f.push(aggregate_quad(&mut rng, n, i, dx, l, mu_x)?);
        g.push(aggregate_quad(&mut rng, n, i, dy, l, mu_y)?);
        h.push(QuadraticCoupling::bilinear(coupling_matrix(&mut rng, dy, dx, lxy)));
    }
    Ok(QuadraticInstance {
        f,
        g,
        h,
        mu_x,
        mu_y,
    })
}
