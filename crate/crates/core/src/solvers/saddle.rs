//! Schemes for `min_u max_p f(u) - g(p) + (B u, p)`.

use serde::Serialize;

use super::check_alpha;
use crate::error::Result;
use crate::linalg::{is_finite, Vector};
use crate::operators::saddle_block_solve;
use crate::problems::SaddleProblem;

/// Primal/dual iterates `(u, p)` and their companions `(v, q)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaddleState {
    pub u: Vector,
    pub p: Vector,
    pub v: Vector,
    pub q: Vector,
    pub iteration: usize,
}

impl SaddleState {
    pub fn new(u: Vector, p: Vector) -> Self {
        Self {
            v: u.clone(),
            q: p.clone(),
            u,
            p,
            iteration: 0,
        }
    }

    pub fn is_finite(&self) -> bool {
        is_finite(&self.u) && is_finite(&self.p) && is_finite(&self.v) && is_finite(&self.q)
    }

    fn relaxed(&self, v: Vector, q: Vector, alpha: f64) -> Self {
        let a1 = 1.0 + alpha;
        Self {
            u: (&self.u + (&v * 2.0 - &self.v) * alpha) / a1,
            p: (&self.p + (&q * 2.0 - &self.q) * alpha) / a1,
            v,
            q,
            iteration: self.iteration + 1,
        }
    }
}

/// `(v, q)` from the coupled block system, then over-relaxed `(u, p)`.
pub fn saddle_implicit_step(pr: &SaddleProblem, s: &SaddleState, alpha: f64) -> Result<SaddleState> {
    check_alpha(alpha)?;
    let c = &pr.coupling;
    let rv = &s.v + &s.u * alpha - pr.f.gradient(&s.u) * (alpha / c.mu_f);
    let rq = &s.q + &s.p * alpha - pr.g.gradient(&s.p) * (alpha / c.mu_g);
    let (v, q) = saddle_block_solve(c, alpha, &rv, &rq)?;
    Ok(s.relaxed(v, q, alpha))
}

/// `v` explicit in `q_k`, then `q` with the over-relaxed coupling `2Bv_{k+1} - Bv_k`.
pub fn saddle_explicit_step(pr: &SaddleProblem, s: &SaddleState, alpha: f64) -> Result<SaddleState> {
    check_alpha(alpha)?;
    let c = &pr.coupling;
    let a1 = 1.0 + alpha;
    let v = (&s.v + &s.u * alpha - (pr.f.gradient(&s.u) + c.b.tr_mul(&s.q)) * (alpha / c.mu_f)) / a1;
    let drift = pr.g.gradient(&s.p) - &c.b * (&v * 2.0 - &s.v);
    let q = (&s.q + &s.p * alpha - drift * (alpha / c.mu_g)) / a1;
    Ok(s.relaxed(v, q, alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{normal_vector, rng};
    use crate::oracle::{ScaledIdentity, Shifted};
    use crate::problems::build_saddle;
    use crate::solvers::{aor_vos_step, SchemeState};

    #[test]
    fn zero_coupling_decouples() {
        let pr = build_saddle(4, 3, 1.0, 20.0, 2.0, 30.0, 0.0, 5).unwrap();
        let mut r = rng(9);
        let mut s = SaddleState::new(normal_vector(&mut r, 4), normal_vector(&mut r, 3));
        let mut e = s.clone();
        let fu = Shifted::new(pr.f.clone(), 1.0).unwrap();
        let gp = Shifted::new(pr.g.clone(), 2.0).unwrap();
        let mut a = SchemeState::at(s.u.clone());
        let mut b = SchemeState::at(s.p.clone());
        let alpha = 0.15;
        for _ in 0..50 {
            s = saddle_implicit_step(&pr, &s, alpha).unwrap();
            e = saddle_explicit_step(&pr, &e, alpha).unwrap();
            a = aor_vos_step(&fu, &ScaledIdentity { n: 4, mu: 1.0 }, &a, alpha).unwrap();
            b = aor_vos_step(&gp, &ScaledIdentity { n: 3, mu: 2.0 }, &b, alpha).unwrap();
            assert!((&s.u - &a.x).amax() < 1e-12 * (1.0 + a.x.norm()));
            assert!((&s.p - &b.x).amax() < 1e-12 * (1.0 + b.x.norm()));
            assert!((&e.u - &s.u).amax() < 1e-12 * (1.0 + s.u.norm()));
            assert!((&e.q - &s.q).amax() < 1e-12 * (1.0 + s.q.norm()));
        }
    }

    #[test]
    fn equilibrium_is_fixed() {
        let pr = build_saddle(5, 4, 1.0, 10.0, 1.0, 10.0, 3.0, 2).unwrap();
        let s = SaddleState::new(pr.u_star.clone(), pr.p_star.clone());
        for t in [
            saddle_implicit_step(&pr, &s, 0.2).unwrap(),
            saddle_explicit_step(&pr, &s, 0.2).unwrap(),
        ] {
            assert!((&t.u - &pr.u_star).amax() < 1e-12);
            assert!((&t.q - &pr.p_star).amax() < 1e-12);
        }
    }
}
