//! Gradient descent, proximal point, and the over-relaxation and
//! predictor-corrector discretizations of the two-variable flow.

use super::{check_alpha, SchemeState};
use crate::error::{parameter, Result};
use crate::linalg::{check_dim, Vector};
use crate::oracle::{MonotoneOperator, Objective, ProxOracle};

pub fn gd_step(f: &dyn Objective, x: &Vector, alpha: f64) -> Result<Vector> {
    check_alpha(alpha)?;
    check_dim(x, f.dim())?;
    Ok(x - f.gradient(x) * alpha)
}

pub fn ppa_step(f: &dyn Objective, x: &Vector, t: f64) -> Result<Vector> {
    check_alpha(t)?;
    check_dim(x, f.dim())?;
    f.prox(t, x)
}

fn strong_mu(n: &dyn MonotoneOperator) -> Result<f64> {
    let mu = n.mu();
    if mu > 0.0 {
        Ok(mu)
    } else {
        Err(parameter("mu", mu, "operator must be strongly monotone"))
    }
}

/// `y` implicit in `N`, then `x` with the over-relaxed `2 y_{k+1} - y_k`.
pub fn aor_vos_step(
    f: &dyn Objective,
    n: &dyn MonotoneOperator,
    s: &SchemeState,
    alpha: f64,
) -> Result<SchemeState> {
    check_alpha(alpha)?;
    let mu = strong_mu(n)?;
    let beta = mu / alpha;
    let y = n.resolvent(beta, &(&s.y * beta - f.gradient(&s.x)))?;
    let x = (&s.x + (&y * 2.0 - &s.y) * alpha) / (1.0 + alpha);
    Ok(s.advanced(x, y))
}

/// `x_{k+1} = x_k - gamma (2 g_k - g_{k-1}) + beta (x_k - x_{k-1})`; without
/// history the first step is a gradient step of length `gamma`.
pub fn aor_hb_step(f: &dyn Objective, s: &SchemeState, gamma: f64, beta: f64) -> Result<SchemeState> {
    check_alpha(gamma)?;
    let g = f.gradient(&s.x);
    let x = match (&s.prev_x, &s.prev_gradient) {
        (Some(xp), Some(gp)) => &s.x - (&g * 2.0 - gp) * gamma + (&s.x - xp) * beta,
        _ => &s.x - &g * gamma,
    };
    let mut next = s.advanced(x, s.y.clone());
    next.prev_x = Some(s.x.clone());
    next.prev_gradient = Some(g);
    Ok(next)
}

/// Predictor `(x_k + alpha y_k)/(1+alpha)`.
pub fn epc_predictor(s: &SchemeState, alpha: f64) -> Vector {
    (&s.x + &s.y * alpha) / (1.0 + alpha)
}

/// Explicit predictor, implicit `y` at the predictor, then the corrector
/// `x_{k+1} = (x_k + alpha y_{k+1})/(1+alpha)`.
pub fn epc_vos_step(
    f: &dyn Objective,
    n: &dyn MonotoneOperator,
    s: &SchemeState,
    alpha: f64,
) -> Result<SchemeState> {
    check_alpha(alpha)?;
    let mu = strong_mu(n)?;
    let xt = epc_predictor(s, alpha);
    let beta = mu / alpha;
    let y = n.resolvent(beta, &(&s.y * beta - f.gradient(&xt)))?;
    let x = (&s.x + &y * alpha) / (1.0 + alpha);
    Ok(s.advanced(x, y))
}

/// Predictor, explicit `y` update, then a gradient step of length `1/L` from
/// the predictor. With `monotone_reset`, a step that increases `f` keeps `x_k`.
pub fn extra_gradient_step(
    f: &dyn Objective,
    s: &SchemeState,
    alpha: f64,
    monotone_reset: bool,
) -> Result<SchemeState> {
    check_alpha(alpha)?;
    let (mu, l) = (f.mu(), f.lipschitz());
    if !(mu > 0.0) {
        return Err(parameter("mu", mu, "extra-gradient scheme needs mu > 0"));
    }
    let xt = epc_predictor(s, alpha);
    let g = f.gradient(&xt);
    let y = (&s.y + (&xt - &g / mu) * alpha) / (1.0 + alpha);
    let mut x = &xt - &g / l;
    if monotone_reset && f.value(&x) > f.value(&s.x) {
        x = s.x.clone();
    }
    Ok(s.advanced(x, y))
}

fn composite_y(f: &dyn Objective, g: &dyn ProxOracle, y: &Vector, at: &Vector, alpha: f64) -> Result<Vector> {
    let mu = f.mu();
    if !(mu > 0.0) {
        return Err(parameter("mu", mu, "composite schemes need mu > 0"));
    }
    let a1 = 1.0 + alpha;
    let arg = y / a1 + (at * mu - f.gradient(at)) * (alpha / (a1 * mu));
    Ok(g.prox(alpha / (a1 * mu), &arg))
}

/// Over-relaxation scheme for `f + g` in proximal form.
pub fn composite_aor_step(
    f: &dyn Objective,
    g: &dyn ProxOracle,
    s: &SchemeState,
    alpha: f64,
) -> Result<SchemeState> {
    check_alpha(alpha)?;
    let y = composite_y(f, g, &s.y, &s.x, alpha)?;
    let x = (&s.x + &y * (2.0 * alpha) - &s.y * alpha) / (1.0 + alpha);
    Ok(s.advanced(x, y))
}

/// Predictor-corrector scheme for `f + g` in proximal form.
pub fn composite_epc_step(
    f: &dyn Objective,
    g: &dyn ProxOracle,
    s: &SchemeState,
    alpha: f64,
) -> Result<SchemeState> {
    check_alpha(alpha)?;
    let xt = epc_predictor(s, alpha);
    let y = composite_y(f, g, &s.y, &xt, alpha)?;
    let x = (&s.x + &y * alpha) / (1.0 + alpha);
    Ok(s.advanced(x, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{FnObjective, ScaledIdentity, ZeroProx};

    fn half_square() -> FnObjective {
        FnObjective::new(1, 1.0, 1.0, |x| 0.5 * x.norm_squared(), |x| x.clone())
    }

    fn v(s: &[f64]) -> Vector {
        Vector::from_row_slice(s)
    }

    #[test]
    fn gd_and_ppa_examples() {
        let f = half_square();
        assert_eq!(gd_step(&f, &v(&[1.0]), 1.0).unwrap(), v(&[0.0]));
        assert!(gd_step(&f, &v(&[1.0]), 0.0).is_err());
        let q = crate::oracle::Quadratic::new(
            crate::linalg::Matrix::identity(1, 1),
            v(&[0.0]),
            1.0,
            1.0,
        )
        .unwrap();
        assert!((ppa_step(&q, &v(&[1.0]), 1.0).unwrap() - v(&[0.5])).norm() < 1e-15);
    }

    #[test]
    fn aor_one_dimensional() {
        let zero = FnObjective::new(1, 0.0, 1.0, |_| 0.0, |x| x * 0.0);
        let n = ScaledIdentity { n: 1, mu: 3.0 };
        let s = SchemeState::new(v(&[2.0]), v(&[5.0]));
        let t = aor_vos_step(&zero, &n, &s, 1.0).unwrap();
        assert_eq!(t.y, v(&[2.5]));
        assert_eq!(t.x, v(&[1.0]));
        assert_eq!(t.iteration, 1);
    }

    #[test]
    fn hb_without_momentum_is_gradient_step() {
        let f = half_square();
        let mut s = SchemeState::at(v(&[2.0]));
        s.prev_x = Some(v(&[2.0]));
        s.prev_gradient = Some(v(&[2.0]));
        let t = aor_hb_step(&f, &s, 0.25, 0.7).unwrap();
        assert_eq!(t.x, v(&[1.5]));
        let fresh = aor_hb_step(&f, &SchemeState::at(v(&[2.0])), 0.25, 0.7).unwrap();
        assert_eq!(fresh.x, v(&[1.5]));
        assert_eq!(fresh.prev_x, Some(v(&[2.0])));
    }

    #[test]
    fn extra_gradient_solves_isotropic_quadratic() {
        let f = half_square();
        let t = extra_gradient_step(&f, &SchemeState::new(v(&[3.0]), v(&[-1.0])), 1.0, false).unwrap();
        assert_eq!(t.x, v(&[0.0]));
    }

    #[test]
    fn composite_with_zero_g_is_smooth_scheme() {
        let q = crate::problems::build_quadratic(&[1.0, 4.0, 9.0], 2).unwrap();
        let f = q.objective.as_ref();
        let shifted = crate::oracle::Shifted::new(q.objective.clone(), 1.0).unwrap();
        let n = ScaledIdentity { n: 3, mu: 1.0 };
        let s = SchemeState::new(v(&[1.0, -2.0, 0.5]), v(&[0.0, 3.0, 1.0]));
        let a = composite_aor_step(f, &ZeroProx, &s, 0.3).unwrap();
        let b = aor_vos_step(&shifted, &n, &s, 0.3).unwrap();
        assert!((&a.x - &b.x).amax() < 1e-12 && (&a.y - &b.y).amax() < 1e-12);
        let a = composite_epc_step(f, &ZeroProx, &s, 0.3).unwrap();
        let b = epc_vos_step(&shifted, &n, &s, 0.3).unwrap();
        assert!((&a.x - &b.x).amax() < 1e-12 && (&a.y - &b.y).amax() < 1e-12);
    }
}
