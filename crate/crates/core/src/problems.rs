//! Test problems with known solutions and constants, and their JSON descriptions.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{parameter, Result, VosError};
use crate::linalg::{
    newton_solve, normal_matrix, normal_vector, random_orthogonal, rng, solve_spd, spectral_norm, Matrix,
    Vector,
};
use crate::operators::{skew_split, SaddleCoupling, SkewDecomposition};
use crate::oracle::{L1Norm, LeastSquares, Objective, ProxOracle, Quadratic, Redeclared, SoftplusRegularized};

const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 100;

/// Componentwise `sign(v_i) max(|v_i| - t, 0)` without validation.
pub fn shrink(v: &Vector, t: f64) -> Vector {
    v.map(|x| x.signum() * (x.abs() - t).max(0.0))
}

/// Proximal map of `lambda |.|_1`.
pub fn soft_threshold(lambda: f64, v: &Vector) -> Result<Vector> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(parameter("lambda", lambda, "must be positive"));
    }
    Ok(shrink(v, lambda))
}

/// A smooth objective together with a minimizer when one is known.
#[derive(Debug, Clone)]
pub struct SmoothProblem {
    pub f: Arc<dyn Objective>,
    pub x_star: Option<Vector>,
}

#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    pub objective: Arc<Quadratic>,
    pub spectrum: Vec<f64>,
    pub x_star: Option<Vector>,
}

impl QuadraticProblem {
    pub fn mu(&self) -> f64 {
        self.objective.mu()
    }
    pub fn lipschitz(&self) -> f64 {
        self.objective.lipschitz()
    }
    pub fn smooth(&self) -> SmoothProblem {
        SmoothProblem {
            f: self.objective.clone(),
            x_star: self.x_star.clone(),
        }
    }
}

fn check_spectrum(spectrum: &[f64]) -> Result<()> {
    if spectrum.is_empty() {
        return Err(VosError::InvalidInput("spectrum is empty".into()));
    }
    if let Some(&bad) = spectrum.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(VosError::InvalidInput(format!(
            "spectrum entries must be finite and nonnegative, got {bad}"
        )));
    }
    if spectrum.windows(2).any(|w| w[0] > w[1]) {
        return Err(VosError::InvalidInput("spectrum must be sorted".into()));
    }
    if spectrum[spectrum.len() - 1] <= 0.0 {
        return Err(VosError::InvalidInput("spectrum must have a positive entry".into()));
    }
    Ok(())
}

fn rotated(spectrum: &[f64], rng: &mut rand_chacha::ChaCha8Rng) -> Matrix {
    let n = spectrum.len();
    if spectrum.iter().all(|&s| s == spectrum[0]) {
        return Matrix::identity(n, n) * spectrum[0];
    }
    let q = random_orthogonal(rng, n);
    let lam = Matrix::from_diagonal(&Vector::from_row_slice(spectrum));
    let a = q.transpose() * lam * &q;
    (&a + a.transpose()) * 0.5
}

/// `A = Q' diag(spectrum) Q` with seeded orthogonal `Q` and seeded `b`.
pub fn build_quadratic(spectrum: &[f64], seed: u64) -> Result<QuadraticProblem> {
    check_spectrum(spectrum)?;
    let n = spectrum.len();
    let mut r = rng(seed);
    let a = rotated(spectrum, &mut r);
    let b = normal_vector(&mut r, n);
    let (mu, l) = (spectrum[0], spectrum[n - 1]);
    let x_star = if mu > 0.0 {
        let mut x = solve_spd(&a, &b)?;
        // one step of iterative refinement
        x += solve_spd(&a, &(&b - &a * &x))?;
        Some(x)
    } else {
        None
    };
    Ok(QuadraticProblem {
        objective: Arc::new(Quadratic::new(a, b, mu, l)?),
        spectrum: spectrum.to_vec(),
        x_star,
    })
}

/// Quadratic with the given spectrum plus `delta * sum softplus(x_i)`.
pub fn build_softplus_regularized(spectrum: &[f64], delta: f64, seed: u64) -> Result<SmoothProblem> {
    let q = build_quadratic(spectrum, seed)?;
    if q.mu() <= 0.0 {
        return Err(VosError::InvalidInput("regularized problem needs a positive spectrum".into()));
    }
    let f = SoftplusRegularized::new((*q.objective).clone(), delta)?;
    let x0 = q.x_star.clone().unwrap_or_else(|| Vector::zeros(f.dim()));
    let x_star = newton_solve(
        |x| f.gradient(x),
        |x| f.hessian(x).expect("softplus objective has a Hessian"),
        x0,
        NEWTON_TOL,
        NEWTON_MAX_ITER,
    )?;
    Ok(SmoothProblem {
        f: Arc::new(f),
        x_star: Some(x_star),
    })
}

/// Underdetermined least squares; `x_star` is the least-norm minimizer.
#[derive(Debug, Clone)]
pub struct LeastSquaresProblem {
    pub objective: Arc<LeastSquares>,
    pub x_star: Vector,
}

impl LeastSquaresProblem {
    pub fn from_parts(a: Matrix, b: Vector) -> Result<Self> {
        let objective = LeastSquares::new(a, b)?;
        let a = &objective.a;
        let aat = a * a.transpose();
        let w = crate::linalg::solve_general(&aat, &objective.b)?;
        let x_star = a.tr_mul(&w);
        Ok(Self {
            objective: Arc::new(objective),
            x_star,
        })
    }

    pub fn smooth(&self) -> SmoothProblem {
        SmoothProblem {
            f: self.objective.clone(),
            x_star: Some(self.x_star.clone()),
        }
    }
}

/// `|Ax - b|^2 / 2` with `A` of shape `m x n`, `m < n`, and `b` in the range of `A`.
pub fn build_least_squares_convex(m: usize, n: usize, seed: u64) -> Result<LeastSquaresProblem> {
    if m == 0 || m >= n {
        return Err(VosError::InvalidInput(format!(
            "least squares needs 0 < m < n, got m = {m}, n = {n}"
        )));
    }
    let mut r = rng(seed);
    let a = normal_matrix(&mut r, m, n) / (n as f64).sqrt();
    let w = normal_vector(&mut r, n);
    let b = &a * w;
    LeastSquaresProblem::from_parts(a, b)
}

/// `min f(x) + lambda |x|_1` with quadratic `f`.
#[derive(Debug, Clone)]
pub struct CompositeProblem {
    pub f: Arc<dyn Objective>,
    pub g: Arc<L1Norm>,
    pub x_star: Vector,
}

impl CompositeProblem {
    /// `|x - prox_{g/L}(x - grad f(x)/L)|`, zero exactly at the minimizer.
    pub fn fixed_point_residual(&self, x: &Vector) -> f64 {
        let l = self.f.lipschitz();
        let z = self.g.prox(1.0 / l, &(x - self.f.gradient(x) / l));
        (x - z).norm()
    }

    pub fn total(&self, x: &Vector) -> f64 {
        self.f.value(x) + self.g.value(x)
    }
}

fn coordinate_descent_lasso(a: &Matrix, b: &Vector, lambda: f64, x0: &Vector) -> Result<Vector> {
    let n = b.len();
    let mut x = x0.clone();
    for _ in 0..100_000 {
        let mut change: f64 = 0.0;
        for i in 0..n {
            let r = b[i] - a.row(i).transpose().dot(&x) + a[(i, i)] * x[i];
            let xi = r.signum() * (r.abs() - lambda).max(0.0) / a[(i, i)];
            change = change.max((xi - x[i]).abs());
            x[i] = xi;
        }
        if change <= 1e-15 * (1.0 + x.amax()) {
            return Ok(x);
        }
    }
    Err(VosError::Convergence {
        what: "coordinate descent reference".into(),
        residual: f64::NAN,
    })
}

/// Reference LASSO solution from a proximal-point run whose subproblems are
/// solved by coordinate descent; independent of the splitting schemes.
fn proximal_point_reference(q: &Quadratic, lambda: f64) -> Result<Vector> {
    let n = q.dim();
    let mut x = Vector::zeros(n);
    let mut gamma = 1.0;
    for _ in 0..60 {
        let t = 1.0 / gamma;
        let a = &q.a + Matrix::identity(n, n) / t;
        let b = &q.b + &x / t;
        x = coordinate_descent_lasso(&a, &b, lambda, &x)?;
        gamma /= 2.0;
    }
    coordinate_descent_lasso(&q.a, &q.b, lambda, &x)
}

/// LASSO-type composite problem; the reference solution is computed by the
/// composite over-relaxation scheme and cross-checked by a proximal-point run.
pub fn build_lasso(spectrum: &[f64], lambda: f64, seed: u64) -> Result<CompositeProblem> {
    if !(lambda > 0.0) {
        return Err(parameter("lambda", lambda, "must be positive"));
    }
    let q = build_quadratic(spectrum, seed)?;
    if q.mu() <= 0.0 {
        return Err(VosError::InvalidInput("composite problem needs a positive spectrum".into()));
    }
    let g = Arc::new(L1Norm { lambda });
    let f: Arc<dyn Objective> = q.objective.clone();
    let mut p = CompositeProblem {
        f: f.clone(),
        g: g.clone(),
        x_star: Vector::zeros(f.dim()),
    };
    let alpha = crate::solvers::vos_alpha(f.mu(), f.lipschitz() - f.mu(), crate::solvers::DEFAULT_ALPHA_MAX);
    let mut s = crate::solvers::SchemeState::new(Vector::zeros(f.dim()), Vector::zeros(f.dim()));
    let mut res = f64::INFINITY;
    for _ in 0..200_000 {
        s = crate::solvers::composite_aor_step(f.as_ref(), g.as_ref(), &s, alpha)?;
        res = p.fixed_point_residual(&s.x);
        if res <= 1e-12 * (1.0 + s.x.norm()) {
            break;
        }
    }
    if !(res <= 1e-12 * (1.0 + s.x.norm())) {
        return Err(VosError::Convergence {
            what: "composite reference run".into(),
            residual: res,
        });
    }
    let check = proximal_point_reference(&q.objective, lambda)?;
    let gap = (&check - &s.x).norm();
    if gap > 1e-8 * (1.0 + s.x.norm()) {
        return Err(VosError::Convergence {
            what: "composite reference cross-check".into(),
            residual: gap,
        });
    }
    p.x_star = coordinate_descent_lasso(&q.objective.a, &q.objective.b, lambda, &s.x)?;
    Ok(p)
}

/// `grad f(x) + S x = 0` with skew-symmetric `S`.
#[derive(Debug, Clone)]
pub struct SkewMonotoneProblem {
    pub f: Arc<dyn Objective>,
    pub decomp: Arc<SkewDecomposition>,
    pub x_star: Vector,
}

impl SkewMonotoneProblem {
    pub fn new(f: Arc<dyn Objective>, skew: &Matrix) -> Result<Self> {
        if !(f.mu() > 0.0) {
            return Err(parameter("mu", f.mu(), "skew-monotone problems need mu > 0"));
        }
        let decomp = Arc::new(skew_split(skew)?);
        let n = f.dim();
        let s = decomp.skew.clone();
        let x_star = newton_solve(
            |x| f.gradient(x) + &s * x,
            |x| {
                f.hessian(x)
                    .unwrap_or_else(|| Matrix::identity(n, n) * f.lipschitz())
                    + &s
            },
            Vector::zeros(n),
            NEWTON_TOL,
            NEWTON_MAX_ITER,
        )?;
        Ok(Self { f, decomp, x_star })
    }

    pub fn residual(&self, x: &Vector) -> Vector {
        self.f.gradient(x) + &self.decomp.skew * x
    }
}

fn linear_spectrum(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

fn geometric_spectrum(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let mut s: Vec<f64> = (0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect();
    s[0] = lo;
    s[n - 1] = hi;
    s
}

fn scaled_to_norm(m: Matrix, norm: f64) -> Matrix {
    let s = spectral_norm(&m);
    if s == 0.0 || norm == 0.0 {
        return m * 0.0;
    }
    m * (norm / s)
}

/// Quadratic `f` with linearly spaced spectrum in `[mu, l]` and a random skew
/// part of spectral norm `skew_norm`.
pub fn build_skew_monotone(n: usize, mu: f64, l: f64, skew_norm: f64, seed: u64) -> Result<SkewMonotoneProblem> {
    let q = build_quadratic(&linear_spectrum(n, mu, l), seed)?;
    let g = normal_matrix(&mut rng(seed.wrapping_add(1)), n, n);
    let skew = scaled_to_norm(&g - g.transpose(), skew_norm);
    SkewMonotoneProblem::new(q.objective, &skew)
}

/// `min_u max_p f(u) - g(p) + (B u, p)`.
#[derive(Debug, Clone)]
pub struct SaddleProblem {
    pub f: Arc<dyn Objective>,
    pub g: Arc<dyn Objective>,
    pub coupling: SaddleCoupling,
    pub u_star: Vector,
    pub p_star: Vector,
}

impl SaddleProblem {
    pub fn new(f: Arc<dyn Objective>, g: Arc<dyn Objective>, b: Matrix) -> Result<Self> {
        let coupling = SaddleCoupling::new(b, f.mu(), g.mu())?;
        let (m, n) = (f.dim(), g.dim());
        if coupling.dim_u() != m || coupling.dim_p() != n {
            return Err(VosError::DimensionMismatch {
                expected: m * n,
                got: coupling.dim_u() * coupling.dim_p(),
            });
        }
        let bm = coupling.b.clone();
        let split = |z: &Vector| (z.rows(0, m).into_owned(), z.rows(m, n).into_owned());
        let res = |z: &Vector| {
            let (u, p) = split(z);
            let mut r = Vector::zeros(m + n);
            r.rows_mut(0, m).copy_from(&(f.gradient(&u) + bm.tr_mul(&p)));
            r.rows_mut(m, n).copy_from(&(g.gradient(&p) - &bm * &u));
            r
        };
        let jac = |z: &Vector| {
            let (u, p) = split(z);
            let mut j = Matrix::zeros(m + n, m + n);
            let hf = f.hessian(&u).unwrap_or_else(|| Matrix::identity(m, m) * f.lipschitz());
            let hg = g.hessian(&p).unwrap_or_else(|| Matrix::identity(n, n) * g.lipschitz());
            j.view_mut((0, 0), (m, m)).copy_from(&hf);
            j.view_mut((0, m), (m, n)).copy_from(&bm.transpose());
            j.view_mut((m, 0), (n, m)).copy_from(&(-&bm));
            j.view_mut((m, m), (n, n)).copy_from(&hg);
            j
        };
        let z = newton_solve(res, jac, Vector::zeros(m + n), NEWTON_TOL, NEWTON_MAX_ITER)?;
        let (u_star, p_star) = split(&z);
        Ok(Self {
            f,
            g,
            coupling,
            u_star,
            p_star,
        })
    }

    /// `(grad f(u) + B'p, grad g(p) - B u)`.
    pub fn kkt_residual(&self, u: &Vector, p: &Vector) -> f64 {
        let b = &self.coupling.b;
        let r1 = self.f.gradient(u) + b.tr_mul(p);
        let r2 = self.g.gradient(p) - b * u;
        (r1.norm_squared() + r2.norm_squared()).sqrt()
    }
}

#[allow(clippy::too_many_arguments)]
pub fn build_saddle(
    m: usize,
    n: usize,
    mu_f: f64,
    l_f: f64,
    mu_g: f64,
    l_g: f64,
    b_norm: f64,
    seed: u64,
) -> Result<SaddleProblem> {
    let f = build_quadratic(&linear_spectrum(m, mu_f, l_f), seed)?;
    let g = build_quadratic(&linear_spectrum(n, mu_g, l_g), seed.wrapping_add(1))?;
    let b = scaled_to_norm(normal_matrix(&mut rng(seed.wrapping_add(2)), n, m), b_norm);
    SaddleProblem::new(f.objective, g.objective, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    #[default]
    Linear,
    Geometric,
}

/// Either an explicit sorted spectrum or `n` points between `min` and `max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpectrumSpec {
    List(Vec<f64>),
    Range {
        n: usize,
        min: f64,
        max: f64,
        #[serde(default)]
        spacing: Spacing,
    },
}

impl SpectrumSpec {
    pub fn values(&self) -> Result<Vec<f64>> {
        match self {
            SpectrumSpec::List(v) => Ok(v.clone()),
            SpectrumSpec::Range { n, min, max, spacing } => {
                if *n == 0 {
                    return Err(VosError::InvalidInput("spectrum size must be positive".into()));
                }
                Ok(match spacing {
                    Spacing::Linear => linear_spectrum(*n, *min, *max),
                    Spacing::Geometric => {
                        if !(*min > 0.0) {
                            return Err(VosError::InvalidInput(
                                "geometric spectrum needs a positive minimum".into(),
                            ));
                        }
                        geometric_spectrum(*n, *min, *max)
                    }
                })
            }
        }
    }
}

fn default_seed() -> u64 {
    42
}

/// JSON description of a problem instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ProblemKind {
    Quadratic {
        spectrum: SpectrumSpec,
        #[serde(default = "default_seed")]
        seed: u64,
    },
    #[serde(rename = "logistic")]
    Softplus {
        spectrum: SpectrumSpec,
        delta: f64,
        #[serde(default = "default_seed")]
        seed: u64,
    },
    Lasso {
        spectrum: SpectrumSpec,
        lambda: f64,
        #[serde(default = "default_seed")]
        seed: u64,
    },
    Skew {
        n: usize,
        mu: f64,
        #[serde(rename = "L")]
        l: f64,
        skew_norm: f64,
        #[serde(default = "default_seed")]
        seed: u64,
    },
    Saddle {
        m: usize,
        n: usize,
        mu_f: f64,
        #[serde(rename = "L_f")]
        l_f: f64,
        mu_g: f64,
        #[serde(rename = "L_g")]
        l_g: f64,
        b_norm: f64,
        #[serde(default = "default_seed")]
        seed: u64,
    },
    LeastSquares {
        m: usize,
        n: usize,
        #[serde(default = "default_seed")]
        seed: u64,
    },
}

/// A problem description plus optional overrides of the declared constants
/// of its smooth part (used to feed deliberately wrong constants to checks).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    #[serde(flatten)]
    pub kind: ProblemKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub declared_mu: Option<f64>,
    #[serde(default, rename = "declared_L", skip_serializing_if = "Option::is_none")]
    pub declared_lipschitz: Option<f64>,
}

impl From<ProblemKind> for ProblemSpec {
    fn from(kind: ProblemKind) -> Self {
        Self {
            kind,
            declared_mu: None,
            declared_lipschitz: None,
        }
    }
}

/// A built problem instance.
#[derive(Debug, Clone)]
pub enum Problem {
    Smooth(SmoothProblem),
    Composite(CompositeProblem),
    Skew(SkewMonotoneProblem),
    Saddle(SaddleProblem),
}

impl Problem {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Problem::Smooth(_) => "smooth",
            Problem::Composite(_) => "composite",
            Problem::Skew(_) => "skew",
            Problem::Saddle(_) => "saddle",
        }
    }
}

impl ProblemSpec {
    pub fn build(&self) -> Result<Problem> {
        let p = match &self.kind {
            ProblemKind::Quadratic { spectrum, seed } => {
                Problem::Smooth(build_quadratic(&spectrum.values()?, *seed)?.smooth())
            }
            ProblemKind::Softplus { spectrum, delta, seed } => {
                Problem::Smooth(build_softplus_regularized(&spectrum.values()?, *delta, *seed)?)
            }
            ProblemKind::Lasso { spectrum, lambda, seed } => {
                Problem::Composite(build_lasso(&spectrum.values()?, *lambda, *seed)?)
            }
            ProblemKind::Skew {
                n,
                mu,
                l,
                skew_norm,
                seed,
            } => Problem::Skew(build_skew_monotone(*n, *mu, *l, *skew_norm, *seed)?),
            ProblemKind::Saddle {
                m,
                n,
                mu_f,
                l_f,
                mu_g,
                l_g,
                b_norm,
                seed,
            } => Problem::Saddle(build_saddle(*m, *n, *mu_f, *l_f, *mu_g, *l_g, *b_norm, *seed)?),
            ProblemKind::LeastSquares { m, n, seed } => {
                Problem::Smooth(build_least_squares_convex(*m, *n, *seed)?.smooth())
            }
        };
        Ok(self.redeclare(p))
    }

    fn redeclare(&self, p: Problem) -> Problem {
        if self.declared_mu.is_none() && self.declared_lipschitz.is_none() {
            return p;
        }
        let wrap = |f: Arc<dyn Objective>| -> Arc<dyn Objective> {
            Arc::new(Redeclared {
                mu: self.declared_mu.unwrap_or(f.mu()),
                lipschitz: self.declared_lipschitz.unwrap_or(f.lipschitz()),
                inner: f,
            })
        };
        match p {
            Problem::Smooth(mut s) => {
                s.f = wrap(s.f);
                Problem::Smooth(s)
            }
            Problem::Composite(mut c) => {
                c.f = wrap(c.f);
                Problem::Composite(c)
            }
            Problem::Skew(mut s) => {
                s.f = wrap(s.f);
                Problem::Skew(s)
            }
            Problem::Saddle(mut s) => {
                s.f = wrap(s.f);
                Problem::Saddle(s)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(s: &[f64]) -> Vector {
        Vector::from_row_slice(s)
    }

    #[test]
    fn identity_spectrum() {
        let q = build_quadratic(&[1.0, 1.0], 3).unwrap();
        assert_eq!(q.objective.a, Matrix::identity(2, 2));
        assert_eq!(q.x_star.unwrap(), q.objective.b);
    }

    #[test]
    fn quadratic_constants_and_solution() {
        let q = build_quadratic(&[1.0, 100.0], 42).unwrap();
        assert_eq!((q.mu(), q.lipschitz()), (1.0, 100.0));
        let eig = q.objective.a.clone().symmetric_eigen().eigenvalues;
        assert!((eig.min() - 1.0).abs() < 1e-10 && (eig.max() - 100.0).abs() < 1e-10);
        let x = q.x_star.unwrap();
        let b = &q.objective.b;
        assert!((&q.objective.a * x - b).norm() <= 1e-10 * b.norm());
    }

    #[test]
    fn quadratic_rejects_bad_spectrum() {
        assert!(build_quadratic(&[-1.0, 2.0], 1).is_err());
        assert!(build_quadratic(&[3.0, 2.0], 1).is_err());
        assert!(build_quadratic(&[], 1).is_err());
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(1.0, &v(&[2.0, -0.5, 0.0])).unwrap(), v(&[1.0, 0.0, 0.0]));
        assert_eq!(soft_threshold(3.0, &v(&[0.0, 0.0])).unwrap(), v(&[0.0, 0.0]));
        assert_eq!(soft_threshold(0.1, &v(&[0.1, -0.1])).unwrap(), v(&[0.0, 0.0]));
        assert!(soft_threshold(0.0, &v(&[1.0])).is_err());
    }

    #[test]
    fn least_squares_examples() {
        let p = LeastSquaresProblem::from_parts(Matrix::from_row_slice(1, 2, &[1.0, 0.0]), v(&[0.0])).unwrap();
        let f = &p.objective;
        assert_eq!(f.value(&v(&[0.0, 7.0])), 0.0);
        assert_eq!(f.mu(), 0.0);
        assert!(build_least_squares_convex(5, 5, 1).is_err());

        let p = build_least_squares_convex(20, 50, 7).unwrap();
        assert!(p.objective.value(&p.x_star) <= 1e-20);
        assert!(p.objective.gradient(&p.x_star).norm() <= 1e-10);
        let pinv = p.objective.a.clone().pseudo_inverse(1e-12).unwrap() * &p.objective.b;
        assert!((pinv - &p.x_star).norm() <= 1e-10);
    }

    #[test]
    fn softplus_minimizer() {
        let p = build_softplus_regularized(&[1.0, 2.0, 5.0], 0.5, 4).unwrap();
        let x = p.x_star.unwrap();
        assert!(p.f.gradient(&x).norm() <= 1e-11);
    }

    #[test]
    fn skew_problem_solution() {
        let p = build_skew_monotone(20, 1.0, 10.0, 5.0, 13).unwrap();
        assert!(p.residual(&p.x_star).norm() <= 1e-12 * (1.0 + p.x_star.norm()));
        let exact = spectral_norm(&p.decomp.skew);
        assert!((exact - 5.0).abs() < 1e-10);
    }

    #[test]
    fn saddle_first_order_conditions() {
        let p = build_saddle(10, 8, 1.0, 50.0, 2.0, 40.0, 3.0, 5).unwrap();
        assert!(p.kkt_residual(&p.u_star, &p.p_star) <= 1e-12);
        assert!((p.coupling.b_norm - 3.0).abs() <= 0.03);
    }

    #[test]
    fn lasso_reference_is_optimal() {
        let p = build_lasso(&linear_spectrum(20, 1.0, 50.0), 0.1, 8).unwrap();
        assert!(p.fixed_point_residual(&p.x_star) <= 1e-8);
    }

    #[test]
    fn spec_round_trip() {
        let js = r#"{"type":"quadratic","spectrum":{"n":5,"min":1,"max":100,"spacing":"geometric"},"seed":3,"declared_mu":2.0}"#;
        let s: ProblemSpec = serde_json::from_str(js).unwrap();
        let back: ProblemSpec = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(s, back);
        match s.build().unwrap() {
            Problem::Smooth(p) => assert_eq!(p.f.mu(), 2.0),
            other => panic!("unexpected {}", other.kind_name()),
        }
        let js = r#"{"type":"saddle","m":3,"n":2,"mu_f":1,"L_f":4,"mu_g":1,"L_g":4,"b_norm":1}"#;
        assert!(matches!(
            serde_json::from_str::<ProblemSpec>(js).unwrap().build().unwrap(),
            Problem::Saddle(_)
        ));
    }
}
