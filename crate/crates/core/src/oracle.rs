//! Oracle traits for smooth objectives, monotone operators and proximal maps,
//! plus the concrete instances used by the problem builders.

use std::fmt;
use std::sync::Arc;

use crate::error::{parameter, Result, VosError};
use crate::linalg::{solve_spd, Matrix, Vector};
use crate::operators::{shifted_skew_solve, SkewDecomposition};

/// A convex, L-smooth function with declared strong-convexity modulus `mu`.
pub trait Objective: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, x: &Vector) -> f64;
    fn gradient(&self, x: &Vector) -> Vector;
    fn mu(&self) -> f64;
    fn lipschitz(&self) -> f64;

    fn hessian(&self, _x: &Vector) -> Option<Matrix> {
        None
    }

    fn as_quadratic(&self) -> Option<&Quadratic> {
        None
    }

    /// `argmin_x f(x) + |x - v|^2 / (2t)`.
    fn prox(&self, t: f64, v: &Vector) -> Result<Vector> {
        newton_prox(self, t, v)
    }
}

/// Damped Newton on the proximal subproblem; needs a Hessian.
pub fn newton_prox<F: Objective + ?Sized>(f: &F, t: f64, v: &Vector) -> Result<Vector> {
    if !(t > 0.0) {
        return Err(parameter("t", t, "prox parameter must be positive"));
    }
    let n = v.len();
    let phi = |x: &Vector| f.value(x) + (x - v).norm_squared() / (2.0 * t);
    let mut x = v.clone();
    let tol = 1e-13 * (1.0 + v.norm() / t + f.gradient(v).norm());
    for _ in 0..100 {
        let g = f.gradient(&x) + (&x - v) / t;
        if g.norm() <= tol {
            return Ok(x);
        }
        let h = f
            .hessian(&x)
            .ok_or_else(|| VosError::Capability("prox needs a Hessian or closed form".into()))?
            + Matrix::identity(n, n) / t;
        let d = solve_spd(&h, &g)?;
        let p0 = phi(&x);
        let slope = g.dot(&d);
        let gn = g.norm();
        let grad_at = |z: &Vector| (f.gradient(z) + (z - v) / t).norm();
        let mut s = 1.0;
        loop {
            let cand = &x - s * &d;
            // near the solution phi differences drown in rounding; fall back to the gradient norm
            if phi(&cand) <= p0 - 1e-4 * s * slope || grad_at(&cand) < gn || s < 1e-12 {
                x = cand;
                break;
            }
            s *= 0.5;
        }
    }
    let g = f.gradient(&x) + (&x - v) / t;
    if g.norm() <= 1e3 * tol {
        Ok(x)
    } else {
        Err(VosError::Convergence {
            what: "proximal Newton solve".into(),
            residual: g.norm(),
        })
    }
}

fn check_constants(mu: f64, l: f64) -> Result<()> {
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(parameter("mu", mu, "must be finite and nonnegative"));
    }
    if !(l > 0.0) || !l.is_finite() {
        return Err(parameter("lipschitz", l, "must be finite and positive"));
    }
    if mu > l * (1.0 + 1e-12) {
        return Err(parameter("mu", mu, "must not exceed the Lipschitz constant"));
    }
    Ok(())
}

/// `f(x) = x'Ax/2 - b'x` with symmetric positive semidefinite `A`.
#[derive(Debug, Clone)]
pub struct Quadratic {
    pub a: Matrix,
    pub b: Vector,
    mu: f64,
    l: f64,
}

impl Quadratic {
    pub fn new(a: Matrix, b: Vector, mu: f64, l: f64) -> Result<Self> {
        if !a.is_square() || a.nrows() != b.len() {
            return Err(VosError::DimensionMismatch {
                expected: a.nrows(),
                got: b.len(),
            });
        }
        check_constants(mu, l)?;
        Ok(Self { a, b, mu, l })
    }
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.b.len()
    }
    fn value(&self, x: &Vector) -> f64 {
        0.5 * x.dot(&(&self.a * x)) - self.b.dot(x)
    }
    fn gradient(&self, x: &Vector) -> Vector {
        &self.a * x - &self.b
    }
    fn mu(&self) -> f64 {
        self.mu
    }
    fn lipschitz(&self) -> f64 {
        self.l
    }
    fn hessian(&self, _x: &Vector) -> Option<Matrix> {
        Some(self.a.clone())
    }
    fn as_quadratic(&self) -> Option<&Quadratic> {
        Some(self)
    }
    fn prox(&self, t: f64, v: &Vector) -> Result<Vector> {
        if !(t > 0.0) {
            return Err(parameter("t", t, "prox parameter must be positive"));
        }
        let n = self.dim();
        solve_spd(&(&self.a + Matrix::identity(n, n) / t), &(&self.b + v / t))
    }
}

/// `f(x) = |Ax - b|^2 / 2`, convex but generally not strongly convex.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub a: Matrix,
    pub b: Vector,
    ata: Matrix,
    l: f64,
}

impl LeastSquares {
    pub fn new(a: Matrix, b: Vector) -> Result<Self> {
        if a.nrows() != b.len() {
            return Err(VosError::DimensionMismatch {
                expected: a.nrows(),
                got: b.len(),
            });
        }
        let ata = a.transpose() * &a;
        let l = crate::linalg::spectral_norm(&a).powi(2);
        check_constants(0.0, l)?;
        Ok(Self { a, b, ata, l })
    }
}

impl Objective for LeastSquares {
    fn dim(&self) -> usize {
        self.a.ncols()
    }
    fn value(&self, x: &Vector) -> f64 {
        0.5 * (&self.a * x - &self.b).norm_squared()
    }
    fn gradient(&self, x: &Vector) -> Vector {
        self.a.tr_mul(&(&self.a * x - &self.b))
    }
    fn mu(&self) -> f64 {
        0.0
    }
    fn lipschitz(&self) -> f64 {
        self.l
    }
    fn hessian(&self, _x: &Vector) -> Option<Matrix> {
        Some(self.ata.clone())
    }
    fn prox(&self, t: f64, v: &Vector) -> Result<Vector> {
        if !(t > 0.0) {
            return Err(parameter("t", t, "prox parameter must be positive"));
        }
        let (m, n) = self.a.shape();
        if m < n {
            // v - A'(AA' + I/t)^{-1}(Av - b) stays well conditioned as t grows
            let aat = &self.a * self.a.transpose() + Matrix::identity(m, m) / t;
            let w = solve_spd(&aat, &(&self.a * v - &self.b))?;
            return Ok(v - self.a.tr_mul(&w));
        }
        solve_spd(
            &(&self.ata + Matrix::identity(n, n) / t),
            &(self.a.tr_mul(&self.b) + v / t),
        )
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Quadratic plus `delta * sum_i log(1 + exp(x_i))`, a smooth nonquadratic objective.
#[derive(Debug, Clone)]
pub struct SoftplusRegularized {
    pub quad: Quadratic,
    pub delta: f64,
}

impl SoftplusRegularized {
    pub fn new(quad: Quadratic, delta: f64) -> Result<Self> {
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(parameter("delta", delta, "must be finite and nonnegative"));
        }
        Ok(Self { quad, delta })
    }
}

impl Objective for SoftplusRegularized {
    fn dim(&self) -> usize {
        self.quad.dim()
    }
    fn value(&self, x: &Vector) -> f64 {
        self.quad.value(x) + self.delta * x.iter().map(|&v| softplus(v)).sum::<f64>()
    }
    fn gradient(&self, x: &Vector) -> Vector {
        self.quad.gradient(x) + x.map(sigmoid) * self.delta
    }
    fn mu(&self) -> f64 {
        self.quad.mu
    }
    // softplus'' is bounded by 1/4
    fn lipschitz(&self) -> f64 {
        self.quad.l + self.delta / 4.0
    }
    fn hessian(&self, x: &Vector) -> Option<Matrix> {
        let d = x.map(|v| {
            let s = sigmoid(v);
            self.delta * s * (1.0 - s)
        });
        Some(&self.quad.a + Matrix::from_diagonal(&d))
    }
}

/// `log(sum_i exp(x_i))`: smooth, convex, not strongly convex and without a minimizer.
#[derive(Debug, Clone)]
pub struct LogSumExp {
    pub n: usize,
}

impl LogSumExp {
    fn softmax(x: &Vector) -> Vector {
        let m = x.max();
        let e = x.map(|v| (v - m).exp());
        let s = e.sum();
        e / s
    }
}

impl Objective for LogSumExp {
    fn dim(&self) -> usize {
        self.n
    }
    fn value(&self, x: &Vector) -> f64 {
        let m = x.max();
        m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
    }
    fn gradient(&self, x: &Vector) -> Vector {
        Self::softmax(x)
    }
    fn mu(&self) -> f64 {
        0.0
    }
    fn lipschitz(&self) -> f64 {
        1.0
    }
    fn hessian(&self, x: &Vector) -> Option<Matrix> {
        let p = Self::softmax(x);
        Some(Matrix::from_diagonal(&p) - &p * p.transpose())
    }
}

type ValueFn = dyn Fn(&Vector) -> f64 + Send + Sync;
type GradFn = dyn Fn(&Vector) -> Vector + Send + Sync;

/// Objective assembled from closures, for ad hoc functions.
#[derive(Clone)]
pub struct FnObjective {
    n: usize,
    mu: f64,
    l: f64,
    value: Arc<ValueFn>,
    gradient: Arc<GradFn>,
}

impl FnObjective {
    pub fn new(
        n: usize,
        mu: f64,
        l: f64,
        value: impl Fn(&Vector) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
    ) -> Self {
        Self {
            n,
            mu,
            l,
            value: Arc::new(value),
            gradient: Arc::new(gradient),
        }
    }
}

impl fmt::Debug for FnObjective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnObjective")
            .field("n", &self.n)
            .field("mu", &self.mu)
            .field("l", &self.l)
            .finish()
    }
}

impl Objective for FnObjective {
    fn dim(&self) -> usize {
        self.n
    }
    fn value(&self, x: &Vector) -> f64 {
        (self.value)(x)
    }
    fn gradient(&self, x: &Vector) -> Vector {
        (self.gradient)(x)
    }
    fn mu(&self) -> f64 {
        self.mu
    }
    fn lipschitz(&self) -> f64 {
        self.l
    }
}

/// `f(x) - (shift/2)|x|^2`; a negative shift adds curvature.
#[derive(Debug, Clone)]
pub struct Shifted {
    pub inner: Arc<dyn Objective>,
    pub shift: f64,
}

impl Shifted {
    pub fn new(inner: Arc<dyn Objective>, shift: f64) -> Result<Self> {
        if shift > inner.mu() * (1.0 + 1e-12) {
            return Err(parameter("shift", shift, "exceeds the strong convexity modulus"));
        }
        Ok(Self { inner, shift })
    }
}

impl Objective for Shifted {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, x: &Vector) -> f64 {
        self.inner.value(x) - 0.5 * self.shift * x.norm_squared()
    }
    fn gradient(&self, x: &Vector) -> Vector {
        self.inner.gradient(x) - x * self.shift
    }
    fn mu(&self) -> f64 {
        (self.inner.mu() - self.shift).max(0.0)
    }
    fn lipschitz(&self) -> f64 {
        self.inner.lipschitz() - self.shift
    }
    fn hessian(&self, x: &Vector) -> Option<Matrix> {
        let n = self.dim();
        self.inner
            .hessian(x)
            .map(|h| h - Matrix::identity(n, n) * self.shift)
    }
}

/// Wraps an objective with overridden constants, without validation.
/// Used to feed deliberately wrong constants to the verifiers.
#[derive(Debug, Clone)]
pub struct Redeclared {
    pub inner: Arc<dyn Objective>,
    pub mu: f64,
    pub lipschitz: f64,
}

impl Objective for Redeclared {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, x: &Vector) -> f64 {
        self.inner.value(x)
    }
    fn gradient(&self, x: &Vector) -> Vector {
        self.inner.gradient(x)
    }
    fn mu(&self) -> f64 {
        self.mu
    }
    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
    fn hessian(&self, x: &Vector) -> Option<Matrix> {
        self.inner.hessian(x)
    }
    fn as_quadratic(&self) -> Option<&Quadratic> {
        self.inner.as_quadratic()
    }
    fn prox(&self, t: f64, v: &Vector) -> Result<Vector> {
        self.inner.prox(t, v)
    }
}

/// A `mu`-strongly monotone operator.
pub trait MonotoneOperator: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn mu(&self) -> f64;

    /// Single-valued evaluation; `None` for set-valued operators.
    fn apply(&self, y: &Vector) -> Option<Vector>;

    /// Solves `beta*y + N(y) = b`.
    fn resolvent(&self, _beta: f64, _b: &Vector) -> Result<Vector> {
        Err(VosError::Capability(format!("{self:?} has no resolvent")))
    }

    fn skew(&self) -> Option<&SkewDecomposition> {
        None
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(parameter("beta", beta, "resolvent shift must be positive"))
    }
}

/// `N(y) = mu*y`; `mu = 0` gives the zero operator.
#[derive(Debug, Clone)]
pub struct ScaledIdentity {
    pub n: usize,
    pub mu: f64,
}

impl MonotoneOperator for ScaledIdentity {
    fn dim(&self) -> usize {
        self.n
    }
    fn mu(&self) -> f64 {
        self.mu
    }
    fn apply(&self, y: &Vector) -> Option<Vector> {
        Some(y * self.mu)
    }
    fn resolvent(&self, beta: f64, b: &Vector) -> Result<Vector> {
        check_beta(beta)?;
        Ok(b / (beta + self.mu))
    }
}

/// `N(y) = mu*y + S*y` with `S` skew-symmetric, stored through its splitting.
#[derive(Debug, Clone)]
pub struct SkewShifted {
    pub mu: f64,
    pub decomp: Arc<SkewDecomposition>,
}

impl MonotoneOperator for SkewShifted {
    fn dim(&self) -> usize {
        self.decomp.dim()
    }
    fn mu(&self) -> f64 {
        self.mu
    }
    fn apply(&self, y: &Vector) -> Option<Vector> {
        Some(y * self.mu + &self.decomp.skew * y)
    }
    fn resolvent(&self, beta: f64, b: &Vector) -> Result<Vector> {
        check_beta(beta)?;
        shifted_skew_solve(&self.decomp, beta + self.mu, b)
    }
    fn skew(&self) -> Option<&SkewDecomposition> {
        Some(&self.decomp)
    }
}

/// A general linear operator `N(y) = M*y` whose symmetric part dominates `mu*I`.
#[derive(Debug, Clone)]
pub struct LinearOperator {
    pub m: Matrix,
    pub mu: f64,
}

impl MonotoneOperator for LinearOperator {
    fn dim(&self) -> usize {
        self.m.nrows()
    }
    fn mu(&self) -> f64 {
        self.mu
    }
    fn apply(&self, y: &Vector) -> Option<Vector> {
        Some(&self.m * y)
    }
    fn resolvent(&self, beta: f64, b: &Vector) -> Result<Vector> {
        check_beta(beta)?;
        let n = self.dim();
        crate::linalg::solve_general(&(Matrix::identity(n, n) * beta + &self.m), b)
    }
}

/// `N = mu*I + subdifferential of g`, resolved through the proximal map of `g`.
#[derive(Debug, Clone)]
pub struct ProxShift {
    pub n: usize,
    pub mu: f64,
    pub g: Arc<dyn ProxOracle>,
}

impl MonotoneOperator for ProxShift {
    fn dim(&self) -> usize {
        self.n
    }
    fn mu(&self) -> f64 {
        self.mu
    }
    fn apply(&self, _y: &Vector) -> Option<Vector> {
        None
    }
    fn resolvent(&self, beta: f64, b: &Vector) -> Result<Vector> {
        check_beta(beta)?;
        let s = beta + self.mu;
        Ok(self.g.prox(1.0 / s, &(b / s)))
    }
}

/// Operator given by a closure, with no resolvent.
#[derive(Clone)]
pub struct FnOperator {
    pub n: usize,
    pub mu: f64,
    apply: Arc<GradFn>,
}

impl FnOperator {
    pub fn new(n: usize, mu: f64, apply: impl Fn(&Vector) -> Vector + Send + Sync + 'static) -> Self {
        Self {
            n,
            mu,
            apply: Arc::new(apply),
        }
    }
}

impl fmt::Debug for FnOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnOperator")
            .field("n", &self.n)
            .field("mu", &self.mu)
            .finish()
    }
}

impl MonotoneOperator for FnOperator {
    fn dim(&self) -> usize {
        self.n
    }
    fn mu(&self) -> f64 {
        self.mu
    }
    fn apply(&self, y: &Vector) -> Option<Vector> {
        Some((self.apply)(y))
    }
}

/// Proper closed convex function accessed through its proximal map.
pub trait ProxOracle: Send + Sync + fmt::Debug {
    fn value(&self, x: &Vector) -> f64;
    /// `argmin_x g(x) + |x - v|^2 / (2t)`.
    fn prox(&self, t: f64, v: &Vector) -> Vector;
    /// Some element of the subdifferential.
    fn subgradient(&self, x: &Vector) -> Vector;
}

/// `lambda * |x|_1`.
#[derive(Debug, Clone, Copy)]
pub struct L1Norm {
    pub lambda: f64,
}

impl ProxOracle for L1Norm {
    fn value(&self, x: &Vector) -> f64 {
        self.lambda * x.iter().map(|v| v.abs()).sum::<f64>()
    }
    fn prox(&self, t: f64, v: &Vector) -> Vector {
        crate::problems::shrink(v, self.lambda * t)
    }
    fn subgradient(&self, x: &Vector) -> Vector {
        x.map(|v| {
            if v > 0.0 {
                self.lambda
            } else if v < 0.0 {
                -self.lambda
            } else {
                0.0
            }
        })
    }
}

/// `g = 0`.
#[derive(Debug, Clone, Copy)]
pub struct ZeroProx;

impl ProxOracle for ZeroProx {
    fn value(&self, _x: &Vector) -> f64 {
        0.0
    }
    fn prox(&self, _t: f64, v: &Vector) -> Vector {
        v.clone()
    }
    fn subgradient(&self, x: &Vector) -> Vector {
        Vector::zeros(x.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad() -> Quadratic {
        Quadratic::new(
            Matrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
            Vector::from_vec(vec![1.0, -1.0]),
            0.79,
            2.21,
        )
        .unwrap()
    }

    #[test]
    fn quadratic_prox_matches_newton() {
        let q = quad();
        let v = Vector::from_vec(vec![0.3, 2.0]);
        let closed = q.prox(0.7, &v).unwrap();
        let newton = newton_prox(&q, 0.7, &v).unwrap();
        assert!((closed - newton).norm() < 1e-12);
    }

    #[test]
    fn softplus_gradient_is_consistent() {
        let f = SoftplusRegularized::new(quad(), 0.5).unwrap();
        let x = Vector::from_vec(vec![0.4, -1.3]);
        let g = f.gradient(&x);
        let h = 1e-6;
        for i in 0..2 {
            let mut e = Vector::zeros(2);
            e[i] = h;
            let fd = (f.value(&(&x + &e)) - f.value(&(&x - &e))) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn constants_are_validated() {
        let a = Matrix::identity(2, 2);
        let b = Vector::zeros(2);
        assert!(Quadratic::new(a.clone(), b.clone(), 3.0, 1.0).is_err());
        assert!(Quadratic::new(a.clone(), b.clone(), -1.0, 1.0).is_err());
        assert!(Quadratic::new(a, Vector::zeros(3), 1.0, 1.0).is_err());
    }

    #[test]
    fn prox_shift_resolvent_solves_inclusion() {
        let op = ProxShift {
            n: 3,
            mu: 1.0,
            g: Arc::new(L1Norm { lambda: 0.5 }),
        };
        let b = Vector::from_vec(vec![3.0, 0.2, -4.0]);
        let y = op.resolvent(1.0, &b).unwrap();
        // 2y + 0.5*sign(y) = b on the support, |b| <= 0.5 off it
        assert!((y[0] - 1.25).abs() < 1e-15);
        assert_eq!(y[1], 0.0);
        assert!((y[2] + 1.75).abs() < 1e-15);
    }

    #[test]
    fn missing_resolvent_is_capability_error() {
        let op = FnOperator::new(2, 1.0, |y| y.clone());
        assert!(matches!(
            op.resolvent(1.0, &Vector::zeros(2)),
            Err(VosError::Capability(_))
        ));
    }
}
