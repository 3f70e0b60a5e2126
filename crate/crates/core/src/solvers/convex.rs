//! Convex-case schemes: dynamically scaled proximal point and
//! predictor-corrector steps, the perturbed predictor-corrector step, and the
//! homotopy restart that drives the perturbation to zero.

use serde::{Deserialize, Serialize};

use super::{check_alpha, epc_predictor, SchemeState};
use crate::error::{parameter, Result, VosError};
use crate::linalg::Vector;
use crate::oracle::{MonotoneOperator, Objective};

/// How the scaled predictor-corrector scheme picks `alpha_k` and `gamma_{k+1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ScaledPolicy {
    /// `alpha_k = sqrt(gamma_k / l_f)`, `gamma_{k+1} = gamma_k / (1 + alpha_k)`.
    Theorem { l_f: f64 },
    /// `alpha_k = 2/(k+1)`, `gamma_{k+1} = 4 l_f / (k+2)^2`.
    Simple { l_f: f64 },
    /// Constant `alpha`, `gamma_{k+1} = gamma_k / (1 + alpha)`.
    Fixed(f64),
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(parameter("gamma", gamma, "scale must be positive"))
    }
}

/// `x_{k+1} = prox_{t f}(x_k)` with `t = alpha/gamma_k`, then `gamma_{k+1} = gamma_k/(1+alpha)`.
pub fn scaled_ppa_step(f: &dyn Objective, s: &SchemeState, alpha: f64) -> Result<SchemeState> {
    check_alpha(alpha)?;
    check_gamma(s.gamma)?;
    let x = f.prox(alpha / s.gamma, &s.x)?;
    let mut next = s.advanced(x.clone(), x);
    next.gamma = s.gamma / (1.0 + alpha);
    Ok(next)
}

/// Predictor, resolvent `y` update at shift `gamma_k/alpha_k`, corrector and
/// scale update. Returns the new state and the `alpha_k` used.
pub fn scaled_epc_step(
    f: &dyn Objective,
    n: &dyn MonotoneOperator,
    s: &SchemeState,
    policy: ScaledPolicy,
) -> Result<(SchemeState, f64)> {
    check_gamma(s.gamma)?;
    let (alpha, gamma_next) = match policy {
        ScaledPolicy::Theorem { l_f } => {
            if !(l_f > 0.0) {
                return Err(parameter("l_f", l_f, "must be positive"));
            }
            let a = (s.gamma / l_f).sqrt();
            (a, s.gamma / (1.0 + a))
        }
        ScaledPolicy::Simple { l_f } => {
            if !(l_f > 0.0) {
                return Err(parameter("l_f", l_f, "must be positive"));
            }
            let k = s.iteration as f64;
            (2.0 / (k + 1.0), 4.0 * l_f / ((k + 2.0) * (k + 2.0)))
        }
        ScaledPolicy::Fixed(a) => (a, s.gamma / (1.0 + a)),
    };
    check_alpha(alpha)?;
    let xt = epc_predictor(s, alpha);
    let beta = s.gamma / alpha;
    let y = n.resolvent(beta, &(&s.y * beta - f.gradient(&xt)))?;
    let x = (&s.x + &y * alpha) / (1.0 + alpha);
    let mut next = s.advanced(x, y);
    next.gamma = gamma_next;
    Ok((next, alpha))
}

/// Predictor-corrector step for the flow perturbed by `epsilon (x - y)`.
pub fn perturbed_epc_step(
    f: &dyn Objective,
    n: &dyn MonotoneOperator,
    s: &SchemeState,
    alpha: f64,
) -> Result<SchemeState> {
    check_alpha(alpha)?;
    let eps = s.epsilon;
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(parameter("epsilon", eps, "perturbation must be positive"));
    }
    let xt = epc_predictor(s, alpha);
    let beta = eps * (1.0 + 1.0 / alpha);
    let rhs = &s.y * (eps / alpha) + &xt * eps - f.gradient(&xt);
    let y = n.resolvent(beta, &rhs)?;
    let x = (&s.x + &y * alpha) / (1.0 + alpha);
    Ok(s.advanced(x, y))
}

/// One outer iteration of the homotopy restart.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OuterRecord {
    pub outer: usize,
    pub epsilon: f64,
    pub inner_iterations: usize,
    /// Inner iterations summed over outer iterations `1..=outer`.
    pub cumulative: usize,
    /// `D_F(x, x*) + (epsilon/2)|y - x*|^2`, when a reference solution is known.
    pub lyapunov: Option<f64>,
    /// `(R^2 + 1) epsilon`.
    pub bound: f64,
    pub grad_norm: f64,
    pub dist_to_star: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct HomotopyRun {
    pub state: SchemeState,
    pub outer: Vec<OuterRecord>,
    /// Length of the first scheduled inner loop before the first doubling.
    pub m0: f64,
}

fn perturbed_energy(f: &dyn Objective, s: &SchemeState, x_star: &Vector) -> Result<f64> {
    Ok(crate::bregman::bregman_divergence(f, &s.x, x_star)?
        + 0.5 * s.epsilon * (&s.y - x_star).norm_squared())
}

/// `m_0 = (sqrt(L_F) + sqrt(eps_0)) ln(2(R^2+1)) / sqrt(eps_0)`.
pub fn homotopy_initial_length(l_f: f64, epsilon0: f64, radius: f64) -> f64 {
    (l_f.sqrt() + epsilon0.sqrt()) * (2.0 * (radius * radius + 1.0)).ln() / epsilon0.sqrt()
}

/// Scheduled total inner work to reach `epsilon_k`:
/// `m_0 sqrt(eps_0) sqrt(2)/(sqrt(2)-1) (eps_k^{-1/2} - eps_0^{-1/2})`.
pub fn homotopy_work_bound(l_f: f64, epsilon0: f64, radius: f64, epsilon_k: f64) -> f64 {
    let c1 = homotopy_initial_length(l_f, epsilon0, radius) * epsilon0.sqrt();
    let r2 = std::f64::consts::SQRT_2;
    c1 * r2 / (r2 - 1.0) * (1.0 / epsilon_k.sqrt() - 1.0 / epsilon0.sqrt())
}

/// Halves `epsilon` and multiplies the inner length by `sqrt(2)` until
/// `epsilon <= epsilon_target`. With `x_star` the precondition
/// `E(x_0, y_0; eps_0) <= (R^2+1) eps_0` is enforced and every outer
/// iteration records its Lyapunov value.
#[allow(clippy::too_many_arguments)]
pub fn homotopy_restart(
    f: &dyn Objective,
    n: &dyn MonotoneOperator,
    x0: &Vector,
    y0: &Vector,
    epsilon0: f64,
    epsilon_target: f64,
    radius: f64,
    x_star: Option<&Vector>,
) -> Result<HomotopyRun> {
    if !(epsilon0 > 0.0) {
        return Err(parameter("epsilon0", epsilon0, "must be positive"));
    }
    if !(epsilon_target > 0.0) {
        return Err(parameter("epsilon_target", epsilon_target, "must be positive"));
    }
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(parameter("radius", radius, "must be positive"));
    }
    let l_f = f.lipschitz();
    let slack = radius * radius + 1.0;
    let mut state = SchemeState::new(x0.clone(), y0.clone()).with_epsilon(epsilon0);
    if let Some(xs) = x_star {
        let e0 = perturbed_energy(f, &state, xs)?;
        if e0 > slack * epsilon0 {
            return Err(VosError::Config(format!(
                "homotopy precondition violated: E0 = {e0:e} exceeds (R^2+1) eps0 = {:e}",
                slack * epsilon0
            )));
        }
    }
    let m0 = homotopy_initial_length(l_f, epsilon0, radius);
    let mut m = m0;
    let mut eps = epsilon0;
    let mut outer = Vec::new();
    let mut cumulative = 0usize;
    while eps > epsilon_target {
        eps *= 0.5;
        m *= std::f64::consts::SQRT_2;
        let inner = m.ceil() as usize;
        let alpha = (eps / l_f).sqrt();
        state.epsilon = eps;
        for _ in 0..inner {
            state = perturbed_epc_step(f, n, &state, alpha)?;
            if !state.is_finite() {
                return Err(VosError::Divergence {
                    iteration: state.iteration,
                    last_finite: Box::new(state),
                });
            }
        }
        cumulative += inner;
        let lyapunov = match x_star {
            Some(xs) => Some(perturbed_energy(f, &state, xs)?),
            None => None,
        };
        outer.push(OuterRecord {
            outer: outer.len() + 1,
            epsilon: eps,
            inner_iterations: inner,
            cumulative,
            lyapunov,
            bound: slack * eps,
            grad_norm: f.gradient(&state.x).norm(),
            dist_to_star: x_star.map(|xs| (&state.x - xs).norm()),
        });
    }
    Ok(HomotopyRun { state, outer, m0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{FnObjective, ScaledIdentity};

    fn v(s: &[f64]) -> Vector {
        Vector::from_row_slice(s)
    }

    #[test]
    fn scaled_ppa_example() {
        let f = crate::oracle::Quadratic::new(crate::linalg::Matrix::identity(1, 1), v(&[0.0]), 1.0, 1.0).unwrap();
        let s = SchemeState::at(v(&[1.0])).with_gamma(1.0);
        let t = scaled_ppa_step(&f, &s, 1.0).unwrap();
        assert!((&t.x - v(&[0.5])).norm() < 1e-15);
        assert_eq!(t.gamma, 0.5);
    }

    #[test]
    fn simple_policy_sequence() {
        let f = FnObjective::new(1, 0.0, 2.0, |x| x.norm_squared(), |x| x * 2.0);
        let n = ScaledIdentity { n: 1, mu: 0.0 };
        let mut s = SchemeState::at(v(&[1.0])).with_gamma(8.0);
        for k in 0..5 {
            let (t, a) = scaled_epc_step(&f, &n, &s, ScaledPolicy::Simple { l_f: 2.0 }).unwrap();
            assert_eq!(a, 2.0 / (k as f64 + 1.0));
            assert!((t.gamma - 8.0 / ((k as f64 + 2.0).powi(2))).abs() < 1e-15);
            assert!(t.gamma - s.gamma <= -a * t.gamma + 1e-15);
            s = t;
        }
    }

    #[test]
    fn homotopy_zero_outer_when_target_reached() {
        let f = FnObjective::new(1, 0.0, 1.0, |x| 0.5 * x.norm_squared(), |x| x.clone());
        let n = ScaledIdentity { n: 1, mu: 0.0 };
        let run = homotopy_restart(&f, &n, &v(&[1.0]), &v(&[1.0]), 1.0, 1.0, 2.0, Some(&v(&[0.0]))).unwrap();
        assert!(run.outer.is_empty());
        assert_eq!(run.state.x, v(&[1.0]));
    }

    #[test]
    fn homotopy_rejects_bad_start() {
        let f = FnObjective::new(1, 0.0, 1.0, |x| 0.5 * x.norm_squared(), |x| x.clone());
        let n = ScaledIdentity { n: 1, mu: 0.0 };
        let err = homotopy_restart(&f, &n, &v(&[100.0]), &v(&[100.0]), 1.0, 0.1, 1.0, Some(&v(&[0.0])));
        assert!(matches!(err, Err(VosError::Config(_))));
    }
}
