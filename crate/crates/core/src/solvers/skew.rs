//! Schemes for `grad f(x) + S x = 0` with skew-symmetric `S`.

use nalgebra::linalg::{Cholesky, LU};
use nalgebra::Dyn;

use super::{check_alpha, SchemeState};
use crate::error::{parameter, Result, VosError};
use crate::linalg::{Matrix, Vector};
use crate::operators::{forward_substitution_scaled, shifted_skew_solve};
use crate::problems::SkewMonotoneProblem;

fn strong_mu(p: &SkewMonotoneProblem) -> Result<f64> {
    let mu = p.f.mu();
    if mu > 0.0 {
        Ok(mu)
    } else {
        Err(parameter("mu", mu, "skew schemes need mu > 0"))
    }
}

/// Implicit in `S`: one shifted skew solve at `beta = mu (1 + 1/alpha)`.
pub fn agss_implicit_step(p: &SkewMonotoneProblem, s: &SchemeState, alpha: f64) -> Result<SchemeState> {
    check_alpha(alpha)?;
    let mu = strong_mu(p)?;
    let beta = mu * (1.0 + 1.0 / alpha);
    let rhs = &s.y * (mu / alpha) + &s.x * mu - p.f.gradient(&s.x);
    let y = shifted_skew_solve(&p.decomp, beta, &rhs)?;
    let x = (&s.x + (&y * 2.0 - &s.y) * alpha) / (1.0 + alpha);
    Ok(s.advanced(x, y))
}

/// `S = B_sym - 2B` with `B_sym y_k` explicit and `2B y_{k+1}` implicit, so the
/// `y` update is one forward substitution with `beta I - 2B`.
pub fn agss_explicit_step(p: &SkewMonotoneProblem, s: &SchemeState, alpha: f64) -> Result<SchemeState> {
    check_alpha(alpha)?;
    let mu = strong_mu(p)?;
    let beta = mu * (1.0 + 1.0 / alpha);
    let rhs = &s.y * (mu / alpha) + &s.x * mu - p.f.gradient(&s.x) - &p.decomp.b_sym * &s.y;
    let y = forward_substitution_scaled(&p.decomp, beta, -2.0, &rhs)?;
    let x = (&s.x + (&y * 2.0 - &s.y) * alpha) / (1.0 + alpha);
    Ok(s.advanced(x, y))
}

/// Prefactored half-sweeps of the Hermitian/skew-Hermitian splitting for
/// `(A + S) x = b`.
#[derive(Debug, Clone)]
pub struct HssSplitting {
    pub alpha: f64,
    a: Matrix,
    skew: Matrix,
    b: Vector,
    sym: Cholesky<f64, Dyn>,
    skw: LU<f64, Dyn, Dyn>,
}

impl HssSplitting {
    pub fn new(p: &SkewMonotoneProblem, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        let q = p
            .f
            .as_quadratic()
            .ok_or_else(|| VosError::Capability("HSS needs a quadratic f".into()))?;
        let n = q.b.len();
        let id = Matrix::identity(n, n) * alpha;
        let sym = (&id + &q.a)
            .cholesky()
            .ok_or_else(|| VosError::InvalidInput("alpha I + A is not positive definite".into()))?;
        let skw = (&id + &p.decomp.skew).lu();
        Ok(Self {
            alpha,
            a: q.a.clone(),
            skew: p.decomp.skew.clone(),
            b: q.b.clone(),
            sym,
            skw,
        })
    }

    /// `(aI + A) x_h = (aI - S) x + b`, then `(aI + S) x' = (aI - A) x_h + b`.
    pub fn step(&self, x: &Vector) -> Result<Vector> {
        let a = self.alpha;
        let xh = self.sym.solve(&(x * a - &self.skew * x + &self.b));
        self.skw
            .solve(&(&xh * a - &self.a * &xh + &self.b))
            .ok_or_else(|| VosError::Convergence {
                what: "HSS skew half-step".into(),
                residual: f64::INFINITY,
            })
    }

    /// `sqrt(lambda_min(A) lambda_max(A))`.
    pub fn optimal_shift(p: &SkewMonotoneProblem) -> f64 {
        (p.f.mu() * p.f.lipschitz()).sqrt()
    }
}

/// One HSS iteration; refactors on every call, use [`HssSplitting`] in loops.
pub fn hss_step(p: &SkewMonotoneProblem, x: &Vector, alpha: f64) -> Result<Vector> {
    HssSplitting::new(p, alpha)?.step(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::ScaledIdentity;
    use crate::problems::build_skew_monotone;
    use crate::solvers::{aor_vos_step, vos_alpha, DEFAULT_ALPHA_MAX};

    #[test]
    fn zero_skew_reduces_to_aor() {
        let p = build_skew_monotone(6, 1.0, 10.0, 0.0, 4).unwrap();
        let fs = crate::oracle::Shifted::new(p.f.clone(), 1.0).unwrap();
        let n = ScaledIdentity { n: 6, mu: 1.0 };
        let alpha = vos_alpha(1.0, 9.0, DEFAULT_ALPHA_MAX);
        let x0 = crate::linalg::normal_vector(&mut crate::linalg::rng(1), 6);
        let (mut a, mut b, mut c) = (SchemeState::at(x0.clone()), SchemeState::at(x0.clone()), SchemeState::at(x0));
        for _ in 0..50 {
            a = agss_implicit_step(&p, &a, alpha).unwrap();
            b = agss_explicit_step(&p, &b, alpha).unwrap();
            c = aor_vos_step(&fs, &n, &c, alpha).unwrap();
            let scale = 1.0 + c.x.norm();
            assert!((&a.x - &c.x).amax() <= 1e-12 * scale);
            assert!((&b.x - &c.x).amax() <= 1e-12 * scale);
        }
    }

    #[test]
    fn equilibrium_is_fixed() {
        let p = build_skew_monotone(8, 1.0, 10.0, 5.0, 3).unwrap();
        let s = SchemeState::at(p.x_star.clone());
        let a = agss_implicit_step(&p, &s, 0.3).unwrap();
        let b = agss_explicit_step(&p, &s, 0.3).unwrap();
        let h = hss_step(&p, &p.x_star, 3.0).unwrap();
        for v in [&a.x, &a.y, &b.x, &b.y, &h] {
            assert!((v - &p.x_star).amax() < 1e-12 * (1.0 + p.x_star.norm()));
        }
    }
}
