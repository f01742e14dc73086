//! The quadratic case `r = 1`, `H = h(p,q) + ω(p,q)·Q_A(z)` with
//! `A(p,q) ∈ sl(2,ℝ)`, `det A = 1`.
//!
//! Here `Q_B(z) = −½ (𝕁Bz)·z` with `𝕁 = [[0,−1],[1,0]]`, the circle action is
//! the linear flow `cos t·I + sin t·A`, and the averaging calculus closes on
//! the `Q` forms:
//!
//! ```text
//! ⟨Q_B⟩     = ½ Q_{B − ABA}
//! 𝒮(Q_B)    = ¼ Q_{[A,B]}
//! ⟨Q_B Q_C⟩ = ¼ Q_{B−ABA} Q_{C−ACA} + ⅛ Q_{B+ABA} Q_{C+ACA} + ⅛ Q_{[B,A]} Q_{[C,A]}
//! ```
//!
//! Everything in this module is closed form and serves as the reference for
//! the quadrature pipeline.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::phase::{Dims, PhasePoint};
use crate::system::SlowFastSystem;
use crate::tolerances::{FAST_GRADIENT_FLOOR, SL2_TOL};

/// The symplectic matrix `𝕁`.
pub fn symplectic() -> Matrix2<f64> {
    Matrix2::new(0.0, -1.0, 1.0, 0.0)
}

/// `Q_B(z) = −½ (𝕁Bz)·z`.
pub fn q_form(b: &Matrix2<f64>, z: &Vector2<f64>) -> f64 {
    -0.5 * (symplectic() * b * z).dot(z)
}

/// `∇_z Q_B = −sym(𝕁B) z`.
pub fn q_form_gradient(b: &Matrix2<f64>, z: &Vector2<f64>) -> Vector2<f64> {
    let jb = symplectic() * b;
    -((jb + jb.transpose()) * 0.5) * z
}

/// `(cos t·I + sin t·A) z`.
pub fn exact_flow(a: &Matrix2<f64>, t: f64, z: &Vector2<f64>) -> Vector2<f64> {
    rotation(a, t) * z
}

fn rotation(a: &Matrix2<f64>, t: f64) -> Matrix2<f64> {
    Matrix2::identity() * t.cos() + a * t.sin()
}

pub fn commutator(a: &Matrix2<f64>, b: &Matrix2<f64>) -> Matrix2<f64> {
    a * b - b * a
}

/// Matrix of the average: `⟨Q_B⟩ = Q_{avg_q(A, B)}`.
pub fn avg_q(a: &Matrix2<f64>, b: &Matrix2<f64>) -> Matrix2<f64> {
    (b - a * b * a) * 0.5
}

/// Matrix of the integrating operator: `𝒮(Q_B) = Q_{s_q(A, B)}`.
pub fn s_q(a: &Matrix2<f64>, b: &Matrix2<f64>) -> Matrix2<f64> {
    commutator(a, b) * 0.25
}

/// `⟨Q_B Q_C⟩` evaluated at `z`.
pub fn avg_qq(a: &Matrix2<f64>, b: &Matrix2<f64>, c: &Matrix2<f64>, z: &Vector2<f64>) -> f64 {
    let aba = a * b * a;
    let aca = a * c * a;
    0.25 * q_form(&(b - aba), z) * q_form(&(c - aca), z)
        + 0.125 * q_form(&(b + aba), z) * q_form(&(c + aca), z)
        + 0.125 * q_form(&commutator(b, a), z) * q_form(&commutator(c, a), z)
}

/// A field `(p, q) ↦ A(p, q)` of trace-free matrices with `det A = 1`, along
/// with its analytic slow derivatives.
pub trait Sl2Field: Send + Sync + fmt::Debug {
    fn slow_dim(&self) -> usize;
    fn matrix(&self, p: &[f64], q: &[f64]) -> Matrix2<f64>;
    fn d_dp(&self, p: &[f64], q: &[f64], i: usize) -> Matrix2<f64>;
    fn d_dq(&self, p: &[f64], q: &[f64], i: usize) -> Matrix2<f64>;
}

/// Constant generator.
#[derive(Debug, Clone)]
pub struct ConstantField {
    pub a: Matrix2<f64>,
    pub k: usize,
}

impl Sl2Field for ConstantField {
    fn slow_dim(&self) -> usize {
        self.k
    }
    fn matrix(&self, _p: &[f64], _q: &[f64]) -> Matrix2<f64> {
        self.a
    }
    fn d_dp(&self, _p: &[f64], _q: &[f64], _i: usize) -> Matrix2<f64> {
        Matrix2::zeros()
    }
    fn d_dq(&self, _p: &[f64], _q: &[f64], _i: usize) -> Matrix2<f64> {
        Matrix2::zeros()
    }
}

/// `A = [[0, −eᵘ], [e⁻ᵘ, 0]]` with `u = α·q + β·p` (one slow degree of freedom).
#[derive(Debug, Clone)]
pub struct TwistField {
    pub alpha: f64,
    pub beta: f64,
}

impl TwistField {
    fn u(&self, p: &[f64], q: &[f64]) -> f64 {
        self.alpha * q[0] + self.beta * p[0]
    }

    /// `dA/du`.
    fn du(&self, p: &[f64], q: &[f64]) -> Matrix2<f64> {
        let u = self.u(p, q);
        Matrix2::new(0.0, -u.exp(), -(-u).exp(), 0.0)
    }
}

impl Sl2Field for TwistField {
    fn slow_dim(&self) -> usize {
        1
    }
    fn matrix(&self, p: &[f64], q: &[f64]) -> Matrix2<f64> {
        let u = self.u(p, q);
        Matrix2::new(0.0, -u.exp(), (-u).exp(), 0.0)
    }
    fn d_dp(&self, p: &[f64], q: &[f64], _i: usize) -> Matrix2<f64> {
        self.du(p, q) * self.beta
    }
    fn d_dq(&self, p: &[f64], q: &[f64], _i: usize) -> Matrix2<f64> {
        self.du(p, q) * self.alpha
    }
}

/// `A = P𝕁P⁻¹` with `P = [[eᵃ, eᵃb], [0, e⁻ᵃ]]`, `a = α·q`, `b = β·p`, i.e.
/// `A = [[b, −e²ᵃ(1 + b²)], [e⁻²ᵃ, −b]]`. Unlike [`TwistField`], the two slow
/// derivatives are not parallel, so the averaged correction `⟨K⟩` is nonzero.
#[derive(Debug, Clone)]
pub struct ShearField {
    pub alpha: f64,
    pub beta: f64,
}

impl Sl2Field for ShearField {
    fn slow_dim(&self) -> usize {
        1
    }
    fn matrix(&self, p: &[f64], q: &[f64]) -> Matrix2<f64> {
        let (a, b) = (self.alpha * q[0], self.beta * p[0]);
        Matrix2::new(b, -(2.0 * a).exp() * (1.0 + b * b), (-2.0 * a).exp(), -b)
    }
    fn d_dp(&self, p: &[f64], q: &[f64], _i: usize) -> Matrix2<f64> {
        let (a, b) = (self.alpha * q[0], self.beta * p[0]);
        Matrix2::new(1.0, -2.0 * b * (2.0 * a).exp(), 0.0, -1.0) * self.beta
    }
    fn d_dq(&self, p: &[f64], q: &[f64], _i: usize) -> Matrix2<f64> {
        let (a, b) = (self.alpha * q[0], self.beta * p[0]);
        Matrix2::new(
            0.0,
            -2.0 * (2.0 * a).exp() * (1.0 + b * b),
            -2.0 * (-2.0 * a).exp(),
            0.0,
        ) * self.alpha
    }
}

type SlowValueFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
type SlowGradFn = Arc<dyn Fn(&[f64], &[f64]) -> (Vec<f64>, Vec<f64>) + Send + Sync>;

/// A function of the slow variables with its analytic gradient.
#[derive(Clone)]
pub struct SlowFunction {
    value: SlowValueFn,
    gradient: SlowGradFn,
}

impl fmt::Debug for SlowFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SlowFunction")
    }
}

impl SlowFunction {
    pub fn new(
        value: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&[f64], &[f64]) -> (Vec<f64>, Vec<f64>) + Send + Sync + 'static,
    ) -> Self {
        Self {
            value: Arc::new(value),
            gradient: Arc::new(gradient),
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(
            move |_, _| c,
            |p, q| (vec![0.0; p.len()], vec![0.0; q.len()]),
        )
    }

    /// `c + μ·(|p|² + |q|²)`.
    pub fn radial(c: f64, mu: f64) -> Self {
        Self::new(
            move |p, q| c + mu * (norm2(p) + norm2(q)),
            move |p, q| {
                (
                    p.iter().map(|v| 2.0 * mu * v).collect(),
                    q.iter().map(|v| 2.0 * mu * v).collect(),
                )
            },
        )
    }

    pub fn value(&self, p: &[f64], q: &[f64]) -> f64 {
        (self.value)(p, q)
    }

    /// `(∂/∂p, ∂/∂q)`.
    pub fn gradient(&self, p: &[f64], q: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (self.gradient)(p, q)
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum()
}

/// `H = h + ω·Q_A` on `ℝ²_z × ℝ^{2k}`.
#[derive(Debug, Clone)]
pub struct QuadraticSystem {
    field: Arc<dyn Sl2Field>,
    h: SlowFunction,
    omega: SlowFunction,
}

fn fast_pair(m: &PhasePoint) -> Vector2<f64> {
    Vector2::new(m.y()[0], m.x()[0])
}

impl QuadraticSystem {
    /// Builds the system and checks the field on a grid of slow points in
    /// `[−1, 1]^{2k}`: trace-free, unit determinant, `A² = −I`, `Q_A`
    /// positive definite and `ω > 0`.
    pub fn new(field: Arc<dyn Sl2Field>, h: SlowFunction, omega: SlowFunction) -> Result<Self> {
        let sys = Self { field, h, omega };
        let k = sys.slow_dim();
        let grid = [-1.0, 0.0, 1.0];
        let total = 3usize.pow(2 * k as u32);
        for mut code in 0..total {
            let mut slow = vec![0.0; 2 * k];
            for s in slow.iter_mut() {
                *s = grid[code % 3];
                code /= 3;
            }
            sys.validate_at(&slow[..k], &slow[k..])?;
        }
        Ok(sys)
    }

    pub fn validate_at(&self, p: &[f64], q: &[f64]) -> Result<()> {
        let a = self.field.matrix(p, q);
        let fail = |what: String| Err(Error::InvalidSystem(format!("at p = {p:?}, q = {q:?}: {what}")));
        if a.trace().abs() > SL2_TOL {
            return fail(format!("trace A = {:e}", a.trace()));
        }
        if (a.determinant() - 1.0).abs() > SL2_TOL {
            return fail(format!("det A = {}", a.determinant()));
        }
        if (a * a + Matrix2::identity()).amax() > SL2_TOL {
            return fail("A² ≠ −I".into());
        }
        // Q_A > 0 on z ≠ 0 ⇔ −sym(𝕁A) positive definite
        let jb = symplectic() * a;
        let s = -(jb + jb.transpose()) * 0.5;
        if !(s.trace() > 0.0 && s.determinant() > 0.0) {
            return fail("Q_A is not positive definite (orientation)".into());
        }
        let w = self.omega.value(p, q);
        if !(w > 0.0) {
            return fail(format!("ω = {w} is not positive"));
        }
        Ok(())
    }

    pub fn slow_dim(&self) -> usize {
        self.field.slow_dim()
    }

    pub fn dims(&self) -> Dims {
        Dims {
            r: 1,
            k: self.slow_dim(),
        }
    }

    pub fn field(&self) -> &dyn Sl2Field {
        self.field.as_ref()
    }

    pub fn a(&self, m: &PhasePoint) -> Matrix2<f64> {
        self.field.matrix(m.p(), m.q())
    }

    pub fn da_dp(&self, m: &PhasePoint, i: usize) -> Matrix2<f64> {
        self.field.d_dp(m.p(), m.q(), i)
    }

    pub fn da_dq(&self, m: &PhasePoint, i: usize) -> Matrix2<f64> {
        self.field.d_dq(m.p(), m.q(), i)
    }

    pub fn omega(&self, m: &PhasePoint) -> f64 {
        self.omega.value(m.p(), m.q())
    }

    pub fn h(&self, m: &PhasePoint) -> f64 {
        self.h.value(m.p(), m.q())
    }

    pub fn energy(&self, m: &PhasePoint) -> f64 {
        self.h(m) + self.omega(m) * q_form(&self.a(m), &fast_pair(m))
    }

    pub fn gradient(&self, m: &PhasePoint) -> DVector<f64> {
        let d = self.dims();
        let z = fast_pair(m);
        let a = self.a(m);
        let w = self.omega(m);
        let qa = q_form(&a, &z);
        let (hp, hq) = self.h.gradient(m.p(), m.q());
        let (wp, wq) = self.omega.gradient(m.p(), m.q());
        let mut g = DVector::zeros(d.len());
        let gz = q_form_gradient(&a, &z) * w;
        g[0] = gz[0];
        g[1] = gz[1];
        for i in 0..d.k {
            g[d.p_index(i)] = hp[i] + wp[i] * qa + w * q_form(&self.da_dp(m, i), &z);
            g[d.q_index(i)] = hq[i] + wq[i] * qa + w * q_form(&self.da_dq(m, i), &z);
        }
        g
    }

    pub fn omega_gradient(&self, m: &PhasePoint) -> DVector<f64> {
        let d = self.dims();
        let (wp, wq) = self.omega.gradient(m.p(), m.q());
        let mut g = DVector::zeros(d.len());
        for i in 0..d.k {
            g[d.p_index(i)] = wp[i];
            g[d.q_index(i)] = wq[i];
        }
        g
    }

    /// The momentum map `J = Q_A`.
    pub fn momentum(&self, m: &PhasePoint) -> f64 {
        q_form(&self.a(m), &fast_pair(m))
    }

    /// `Fl^t_Υ(m)`: the fast pair rotated by `cos t·I + sin t·A(p, q)`.
    pub fn flow(&self, m: &PhasePoint, t: f64) -> PhasePoint {
        let z = exact_flow(&self.a(m), t, &fast_pair(m));
        let mut v = m.as_vector().clone();
        v[0] = z[0];
        v[1] = z[1];
        PhasePoint::from_vector(m.dims(), v).expect("same dims")
    }

    /// `D Fl^t_Υ(m)`: fast block `cos t·I + sin t·A`, fast-slow block
    /// `sin t·(∂A/∂pⁱ z, ∂A/∂qⁱ z)`, identity on the slow block.
    pub fn flow_tangent(&self, m: &PhasePoint, t: f64) -> DMatrix<f64> {
        let d = self.dims();
        let z = fast_pair(m);
        let (s, c) = t.sin_cos();
        let rot = Matrix2::identity() * c + self.a(m) * s;
        let mut jac = DMatrix::identity(d.len(), d.len());
        jac.view_mut((0, 0), (2, 2)).copy_from(&rot);
        for i in 0..d.k {
            let cp = self.da_dp(m, i) * z * s;
            let cq = self.da_dq(m, i) * z * s;
            jac[(0, d.p_index(i))] = cp[0];
            jac[(1, d.p_index(i))] = cp[1];
            jac[(0, d.q_index(i))] = cq[0];
            jac[(1, d.q_index(i))] = cq[1];
        }
        jac
    }

    /// `(Θᵢᵖ, Θᵢᵠ) = ½ (Q_{A ∂A/∂pⁱ}, Q_{A ∂A/∂qⁱ})`.
    pub fn closed_theta(&self, m: &PhasePoint, i: usize) -> (f64, f64) {
        let z = fast_pair(m);
        let a = self.a(m);
        (
            0.5 * q_form(&(a * self.da_dp(m, i)), &z),
            0.5 * q_form(&(a * self.da_dq(m, i)), &z),
        )
    }

    /// `⟨K⟩ = (ω/4) Σᵢ (Q_{A∂A/∂pⁱ} Q_{∂A/∂qⁱ} − Q_{A∂A/∂qⁱ} Q_{∂A/∂pⁱ})`.
    pub fn closed_k_avg(&self, m: &PhasePoint) -> f64 {
        let z = fast_pair(m);
        let a = self.a(m);
        let sum: f64 = (0..self.slow_dim())
            .map(|i| {
                let (ap, aq) = (self.da_dp(m, i), self.da_dq(m, i));
                q_form(&(a * ap), &z) * q_form(&aq, &z) - q_form(&(a * aq), &z) * q_form(&ap, &z)
            })
            .sum();
        0.25 * self.omega(m) * sum
    }

    /// Entrywise slow bracket `{f, A}₁ = Σᵢ ∂f/∂pⁱ ∂A/∂qⁱ − ∂f/∂qⁱ ∂A/∂pⁱ`.
    fn bracket_with_a(&self, f: &SlowFunction, m: &PhasePoint) -> Matrix2<f64> {
        let (fp, fq) = f.gradient(m.p(), m.q());
        (0..self.slow_dim()).fold(Matrix2::zeros(), |acc, i| {
            acc + self.da_dq(m, i) * fp[i] - self.da_dp(m, i) * fq[i]
        })
    }

    /// `B = {h, A}₁`.
    pub fn b_matrix(&self, m: &PhasePoint) -> Matrix2<f64> {
        self.bracket_with_a(&self.h, m)
    }

    /// `C = {ω, A}₁`.
    pub fn c_matrix(&self, m: &PhasePoint) -> Matrix2<f64> {
        self.bracket_with_a(&self.omega, m)
    }

    /// `F = Q_A − (ε/4ω)(Q_{[A,B]} + Q_A Q_{[A,C]})`.
    pub fn closed_f(&self, eps: f64, m: &PhasePoint) -> f64 {
        let z = fast_pair(m);
        let a = self.a(m);
        let qa = q_form(&a, &z);
        let correction = q_form(&commutator(&a, &self.b_matrix(m)), &z)
            + qa * q_form(&commutator(&a, &self.c_matrix(m)), &z);
        qa - eps / (4.0 * self.omega(m)) * correction
    }

    /// Wraps the closed forms as a generic system. The flow engine uses the
    /// exact rotation for it unless numerical integration is forced.
    pub fn into_system(self, name: impl Into<String>) -> SlowFastSystem {
        let q = Arc::new(self);
        let (qe, qg, qw, qwg, guard) = (q.clone(), q.clone(), q.clone(), q.clone(), q.clone());
        SlowFastSystem::builder(name, q.dims(), move |m| qe.energy(m))
            .gradient(move |m| qg.gradient(m))
            .frequency(move |m| qw.omega(m))
            .frequency_gradient(move |m| qwg.omega_gradient(m))
            .domain_guard(move |m| {
                guard.omega(m) > 0.0 && {
                    let g = guard.gradient(m);
                    g.rows(0, 2).norm() >= FAST_GRADIENT_FLOOR
                }
            })
            .quadratic(q)
            .build()
    }
}
