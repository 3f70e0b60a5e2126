//! Sampled verification of the first-order convexity bounds, of strong
//! monotonicity and resolvent accuracy for operators, and of prox optimality.

use rand::Rng;

use crate::bregman::bregman_with_scale;
use crate::checks::{PropertyReport, IDENTITY_TOL};
use crate::linalg::{extreme_eigenvectors, normal_vector, rng, Vector};
use crate::oracle::{MonotoneOperator, Objective, ProxOracle};

pub const DEFAULT_RADIUS: f64 = 10.0;

#[derive(Debug, Clone)]
pub struct SampleConfig {
    /// Standard deviation of the sampled points around `center`.
    pub radius: f64,
    pub center: Option<Vector>,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            radius: DEFAULT_RADIUS,
            center: None,
        }
    }
}

impl SampleConfig {
    pub fn around(center: &Vector) -> Self {
        Self {
            radius: DEFAULT_RADIUS,
            center: Some(center.clone()),
        }
    }

    pub fn draw(&self, rng: &mut rand_chacha::ChaCha8Rng, n: usize) -> Vector {
        let z = normal_vector(rng, n) * self.radius;
        match &self.center {
            Some(c) => c + z,
            None => z,
        }
    }
}

/// Checks the sampled two-point bounds on `f` using its declared `mu` and `L`.
pub fn verify_convexity_bounds(f: &dyn Objective, samples: usize, seed: u64) -> PropertyReport {
    verify_convexity_bounds_with(f, None, &SampleConfig::default(), samples, seed)
}

/// As [`verify_convexity_bounds`], adding the one-point bounds at `x_star` when given.
pub fn verify_convexity_bounds_with(
    f: &dyn Objective,
    x_star: Option<&Vector>,
    cfg: &SampleConfig,
    samples: usize,
    seed: u64,
) -> PropertyReport {
    let mut rep = PropertyReport::new();
    let (mu, l) = (f.mu(), f.lipschitz());
    let n = f.dim();
    let tol = IDENTITY_TOL;
    let mut r = rng(seed);
    let at = cfg.center.clone().unwrap_or_else(|| Vector::zeros(n));
    let dirs = f.hessian(&at).map(|h| extreme_eigenvectors(&h)).unwrap_or_default();
    for i in 0..samples {
        let x = cfg.draw(&mut r, n);
        let y = if i % 4 == 3 && !dirs.is_empty() {
            let z: f64 = r.sample(rand_distr::StandardNormal);
            &x + &dirs[(i / 4) % dirs.len()] * (cfg.radius * z)
        } else {
            cfg.draw(&mut r, n)
        };
        let (gx, gy) = (f.gradient(&x), f.gradient(&y));
        let d = &x - &y;
        let d2 = d.norm_squared();
        let dg2 = (&gx - &gy).norm_squared();
        let (dyx, s1) = match bregman_with_scale(f, &y, &x) {
            Ok(v) => v,
            Err(_) => continue,
        };
        let (dxy, s2) = bregman_with_scale(f, &x, &y).unwrap_or((f64::NAN, 0.0));
        let ip = (&gx - &gy).dot(&d);
        let m = 0.5 * ip;
        let sc = s1 + s2 + ip.abs() + l * d2;

        rep.record_le("bregman nonnegative", 0.0, dyx.min(dxy), sc, tol);
        rep.record_le("upper bound D <= L/2 |x-y|^2", dyx.max(dxy), 0.5 * l * d2, sc, tol);
        rep.record_le("upper bound M <= L/2 |x-y|^2", m, 0.5 * l * d2, sc, tol);
        rep.record_le("lower bound D >= mu/2 |x-y|^2", 0.5 * mu * d2, dyx.min(dxy), sc, tol);
        rep.record_le("lower bound M >= mu/2 |x-y|^2", 0.5 * mu * d2, m, sc, tol);
        rep.record_le(
            "co-coercivity min(D, M) >= |dg|^2/(2L)",
            dg2 / (2.0 * l),
            dyx.min(dxy).min(m),
            sc + dg2 / l,
            tol,
        );
        if mu > 0.0 {
            rep.record_le(
                "max(D, M) <= |dg|^2/(2 mu)",
                dyx.max(dxy).max(m),
                dg2 / (2.0 * mu),
                sc + dg2 / mu,
                tol,
            );
        } else {
            rep.record_vacuous("max(D, M) <= |dg|^2/(2 mu)");
        }
        rep.record_le(
            "refined <dg, x-y> >= muL/(mu+L)|x-y|^2 + |dg|^2/(mu+L)",
            mu * l / (mu + l) * d2 + dg2 / (mu + l),
            ip,
            sc + dg2 / l,
            tol,
        );

        if let Some(xs) = x_star {
            let x = if i % 4 == 1 && !dirs.is_empty() {
                let z: f64 = r.sample(rand_distr::StandardNormal);
                xs + &dirs[(i / 4) % dirs.len()] * (cfg.radius * z)
            } else {
                x.clone()
            };
            let gx = f.gradient(&x);
            let e = &x - xs;
            let e2 = e.norm_squared();
            let gap = f.value(&x) - f.value(xs);
            let g2 = gx.norm_squared();
            let gi = gx.dot(&e);
            let sc = f.value(&x).abs() + f.value(xs).abs() + l * e2 + gi.abs() + g2 / l;
            rep.record_le("|g|^2/(2L) <= f - f*", g2 / (2.0 * l), gap, sc, tol);
            rep.record_le("f - f* <= L/2 |x-x*|^2", gap, 0.5 * l * e2, sc, tol);
            rep.record_le("|g|^2/L <= <g, x-x*>", g2 / l, gi, sc, tol);
            rep.record_le("<g, x-x*> <= L |x-x*|^2", gi, l * e2, sc, tol);
            rep.record_le(
                "<g, x-x*> >= muL/(mu+L)|x-x*|^2 + |g|^2/(mu+L)",
                mu * l / (mu + l) * e2 + g2 / (mu + l),
                gi,
                sc,
                tol,
            );
            if mu > 0.0 {
                let sc = sc + g2 / mu;
                rep.record_le("mu/2 |x-x*|^2 <= f - f*", 0.5 * mu * e2, gap, sc, tol);
                rep.record_le("f - f* <= |g|^2/(2 mu)", gap, g2 / (2.0 * mu), sc, tol);
                rep.record_le("mu |x-x*|^2 <= <g, x-x*>", mu * e2, gi, sc, tol);
                rep.record_le("<g, x-x*> <= |g|^2/mu", gi, g2 / mu, sc, tol);
                rep.record_le(
                    "<g, x-x*> >= f - f* + mu/2 |x-x*|^2",
                    gap + 0.5 * mu * e2,
                    gi,
                    sc,
                    tol,
                );
            }
        }
    }
    rep
}

/// One-point bounds for `f + g` with a subgradient `p` of the sum, around the
/// composite minimizer `x_star`.
pub fn verify_composite_bounds(
    f: &dyn Objective,
    g: &dyn ProxOracle,
    x_star: &Vector,
    cfg: &SampleConfig,
    samples: usize,
    seed: u64,
) -> PropertyReport {
    let mut rep = PropertyReport::new();
    let mu = f.mu();
    let tol = IDENTITY_TOL;
    let total = |x: &Vector| f.value(x) + g.value(x);
    let fs = total(x_star);
    let mut r = rng(seed);
    for _ in 0..samples {
        let x = cfg.draw(&mut r, f.dim());
        let p = f.gradient(&x) + g.subgradient(&x);
        let e = &x - x_star;
        let e2 = e.norm_squared();
        let gap = total(&x) - fs;
        let p2 = p.norm_squared();
        let pi = p.dot(&e);
        let sc = total(&x).abs() + fs.abs() + pi.abs() + mu * e2;
        if mu > 0.0 {
            let sc = sc + p2 / mu;
            rep.record_le("composite mu/2 |x-x*|^2 <= gap", 0.5 * mu * e2, gap, sc, tol);
            rep.record_le("composite gap <= |p|^2/(2 mu)", gap, p2 / (2.0 * mu), sc, tol);
            rep.record_le("composite mu |x-x*|^2 <= <p, x-x*>", mu * e2, pi, sc, tol);
            rep.record_le("composite <p, x-x*> <= |p|^2/mu", pi, p2 / mu, sc, tol);
            rep.record_le(
                "composite <p, x-x*> >= gap + mu/2 |x-x*|^2",
                gap + 0.5 * mu * e2,
                pi,
                sc,
                tol,
            );
        }
    }
    rep
}

/// Strong monotonicity on random pairs and resolvent accuracy on random data.
pub fn verify_monotone_operator(op: &dyn MonotoneOperator, samples: usize, seed: u64) -> PropertyReport {
    let mut rep = PropertyReport::new();
    let n = op.dim();
    let cfg = SampleConfig::default();
    let mut r = rng(seed);
    for _ in 0..samples {
        let x = cfg.draw(&mut r, n);
        let y = cfg.draw(&mut r, n);
        let (Some(nx), Some(ny)) = (op.apply(&x), op.apply(&y)) else {
            rep.record_vacuous("strong monotonicity");
            continue;
        };
        let d = &x - &y;
        let ip = (&nx - &ny).dot(&d);
        rep.record_le(
            "strong monotonicity",
            op.mu() * d.norm_squared(),
            ip,
            ip.abs() + (&nx - &ny).norm() * d.norm(),
            IDENTITY_TOL,
        );
        let beta = 10f64.powf(r.gen_range(-3.0..3.0));
        if let Ok(z) = op.resolvent(beta, &x) {
            let res = (&z * beta + op.apply(&z).unwrap() - &x).norm();
            rep.record_le("resolvent residual", res, 0.0, x.norm(), IDENTITY_TOL);
        }
    }
    rep
}

/// Prox optimality (subgradient inequality at the output) and firm nonexpansiveness.
pub fn verify_prox(g: &dyn ProxOracle, n: usize, samples: usize, seed: u64) -> PropertyReport {
    let mut rep = PropertyReport::new();
    let cfg = SampleConfig::default();
    let mut r = rng(seed);
    for _ in 0..samples {
        let t = 10f64.powf(r.gen_range(-2.0..2.0));
        let u = cfg.draw(&mut r, n);
        let v = cfg.draw(&mut r, n);
        let z = cfg.draw(&mut r, n);
        let (pu, pv) = (g.prox(t, &u), g.prox(t, &v));
        let s = (&u - &pu) / t;
        let rhs = g.value(&z);
        let lhs = g.value(&pu) + s.dot(&(&z - &pu));
        rep.record_le(
            "prox optimality g(z) >= g(p) + <(v-p)/t, z-p>",
            lhs,
            rhs,
            lhs.abs() + rhs.abs(),
            IDENTITY_TOL,
        );
        let dp = &pu - &pv;
        let du = &u - &v;
        rep.record_le(
            "prox firm nonexpansiveness",
            dp.norm_squared(),
            dp.dot(&du),
            du.norm_squared(),
            IDENTITY_TOL,
        );
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::oracle::{LogSumExp, Quadratic, Redeclared};
    use std::sync::Arc;

    fn diag_quad() -> Quadratic {
        Quadratic::new(
            Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 10.0])),
            Vector::zeros(2),
            1.0,
            10.0,
        )
        .unwrap()
    }

    #[test]
    fn exact_constants_pass() {
        let rep = verify_convexity_bounds_with(
            &diag_quad(),
            Some(&Vector::zeros(2)),
            &SampleConfig::default(),
            1000,
            1,
        );
        assert!(rep.passed(), "{:?}", rep.violations());
    }

    #[test]
    fn overstated_mu_is_flagged() {
        let bad = Redeclared {
            inner: Arc::new(diag_quad()),
            mu: 20.0,
            lipschitz: 10.0,
        };
        let rep = verify_convexity_bounds(&bad, 1000, 1);
        let names: Vec<_> = rep.violations().iter().map(|s| s.name.clone()).collect();
        assert!(names.iter().any(|n| n.starts_with("lower bound D")), "{names:?}");
    }

    #[test]
    fn log_sum_exp_passes_without_strong_convexity() {
        let rep = verify_convexity_bounds(&LogSumExp { n: 4 }, 1000, 2);
        assert!(rep.passed(), "{:?}", rep.violations());
        let vac = rep
            .stats
            .iter()
            .find(|s| s.name == "max(D, M) <= |dg|^2/(2 mu)")
            .unwrap();
        assert_eq!(vac.samples, 0);
    }
}
