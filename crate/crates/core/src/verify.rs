//! Property suites over a zoo of seeded problems: convexity bounds, strong
//! Lyapunov and cross-term inequalities, and scheme invariants.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bounds::{
    verify_composite_bounds, verify_convexity_bounds_with, verify_monotone_operator, verify_prox, SampleConfig,
};
use crate::bregman::check_three_point_identity;
use crate::checks::{PropertyReport, ALGEBRA_TOL, IDENTITY_TOL};
use crate::error::{Result, VosError};
use crate::harness::{rate_value, theorem_rate, TheoremRate};
use crate::linalg::{normal_vector, rng, Matrix, Vector};
use crate::lyapunov::{
    check_cross_term_lemma, check_modified_nonnegative, check_strong_lyapunov, FlowId, LyapunovKind, LyapunovSpec,
};
use crate::oracle::{MonotoneOperator, Objective, ScaledIdentity, Shifted, SkewShifted, ZeroProx};
use crate::problems::{
    CompositeProblem, Problem, ProblemKind, ProblemSpec, SaddleProblem, SkewMonotoneProblem, SmoothProblem,
    SpectrumSpec,
};
use crate::solvers::{
    aor_hb_step, aor_vos_step, composite_aor_step, composite_epc_step, epc_predictor, epc_vos_step,
    hb_coefficients, run_scheme, saddle_implicit_step, scaled_epc_step, vos_alpha, RunOptions, SaddleState,
    ScaledPolicy, SchemeId, SchemeState, DEFAULT_ALPHA_MAX,
};

pub const DEFAULT_SAMPLES: usize = 1000;
/// Steps of the fixed-point and contraction runs.
pub const INVARIANT_STEPS: usize = 200;
/// Per-step slack on Lyapunov contraction, relative to the current value.
pub const CONTRACTION_SLACK: f64 = 1e-10;
/// Contraction is checked only while the value exceeds this fraction of `E_0`.
pub const CONTRACTION_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Bounds,
    Lyapunov,
    Schemes,
    All,
}

impl Suite {
    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Bounds => "bounds",
            Suite::Lyapunov => "lyapunov",
            Suite::Schemes => "schemes",
            Suite::All => "all",
        }
    }
}

impl std::str::FromStr for Suite {
    type Err = VosError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bounds" => Ok(Suite::Bounds),
            "lyapunov" => Ok(Suite::Lyapunov),
            "schemes" => Ok(Suite::Schemes),
            "all" => Ok(Suite::All),
            _ => Err(VosError::Config(format!(
                "unknown suite `{s}` (expected bounds, lyapunov, schemes or all)"
            ))),
        }
    }
}

/// A named problem description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZooEntry {
    pub name: String,
    pub problem: ProblemSpec,
}

fn entry(name: &str, kind: ProblemKind) -> ZooEntry {
    ZooEntry {
        name: name.into(),
        problem: kind.into(),
    }
}

fn range(n: usize, min: f64, max: f64) -> SpectrumSpec {
    SpectrumSpec::Range {
        n,
        min,
        max,
        spacing: Default::default(),
    }
}

/// The built-in problems every suite runs on.
pub fn default_zoo(seed: u64) -> Vec<ZooEntry> {
    vec![
        entry(
            "quadratic",
            ProblemKind::Quadratic {
                spectrum: range(10, 1.0, 100.0),
                seed,
            },
        ),
        entry(
            "logistic",
            ProblemKind::Softplus {
                spectrum: range(10, 1.0, 50.0),
                delta: 1.0,
                seed: seed.wrapping_add(1),
            },
        ),
        entry(
            "least_squares",
            ProblemKind::LeastSquares {
                m: 5,
                n: 12,
                seed: seed.wrapping_add(2),
            },
        ),
        entry(
            "lasso",
            ProblemKind::Lasso {
                spectrum: range(10, 1.0, 20.0),
                lambda: 0.1,
                seed: seed.wrapping_add(3),
            },
        ),
        entry(
            "skew",
            ProblemKind::Skew {
                n: 10,
                mu: 1.0,
                l: 20.0,
                skew_norm: 5.0,
                seed: seed.wrapping_add(4),
            },
        ),
        entry(
            "saddle",
            ProblemKind::Saddle {
                m: 6,
                n: 4,
                mu_f: 1.0,
                l_f: 10.0,
                mu_g: 1.0,
                l_g: 10.0,
                b_norm: 3.0,
                seed: seed.wrapping_add(5),
            },
        ),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub samples: usize,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            samples: DEFAULT_SAMPLES,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub seed: u64,
    pub samples: usize,
    pub report: PropertyReport,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.report.passed()
    }

    /// One line per inequality, then a summary line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for s in &self.report.stats {
            out.push_str(&format!(
                "{} {} samples={} violations={} worst_margin={:.3e}\n",
                if s.passed() { "PASS" } else { "FAIL" },
                s.name,
                s.samples,
                s.violations,
                s.worst_margin
            ));
        }
        let failed = self.report.violations().len();
        out.push_str(&format!(
            "suite {} seed {}: {} checks, {} failed\n",
            self.suite.as_str(),
            self.seed,
            self.report.stats.len(),
            failed
        ));
        out
    }
}

/// Runs `suite` on every entry of `zoo`.
pub fn run_suite(suite: Suite, zoo: &[ZooEntry], opts: &VerifyOptions) -> Result<SuiteReport> {
    let mut report = PropertyReport::new();
    for (i, e) in zoo.iter().enumerate() {
        let problem = e.problem.build()?;
        let seed = opts.seed.wrapping_add(1000 * i as u64);
        if matches!(suite, Suite::Bounds | Suite::All) {
            report.merge_prefixed(&e.name, bounds_suite(&problem, opts.samples, seed)?);
        }
        if matches!(suite, Suite::Lyapunov | Suite::All) {
            report.merge_prefixed(&e.name, lyapunov_suite(&problem, opts.samples, seed)?);
        }
        if matches!(suite, Suite::Schemes | Suite::All) {
            report.merge_prefixed(&e.name, schemes_suite(&problem, seed)?);
        }
    }
    Ok(SuiteReport {
        suite,
        seed: opts.seed,
        samples: opts.samples,
        report,
    })
}

fn three_point(f: &dyn Objective, center: &Vector, samples: usize, seed: u64) -> Result<PropertyReport> {
    let mut rep = PropertyReport::new();
    let cfg = SampleConfig::around(center);
    let mut r = rng(seed);
    let n = f.dim();
    for _ in 0..samples {
        let (x, y, z) = (cfg.draw(&mut r, n), cfg.draw(&mut r, n), cfg.draw(&mut r, n));
        let res = check_three_point_identity(f, &x, &y, &z)?;
        rep.record_le("three-point identity", res.residual, 0.0, res.scale, IDENTITY_TOL);
    }
    Ok(rep)
}

fn smooth_bounds(f: &dyn Objective, x_star: Option<&Vector>, samples: usize, seed: u64) -> Result<PropertyReport> {
    let center = x_star.cloned().unwrap_or_else(|| Vector::zeros(f.dim()));
    let mut rep = verify_convexity_bounds_with(f, x_star, &SampleConfig::around(&center), samples, seed);
    rep.merge(three_point(f, &center, samples, seed.wrapping_add(1))?);
    Ok(rep)
}

/// Convexity bounds, three-point identity, operator monotonicity and prox optimality.
pub fn bounds_suite(problem: &Problem, samples: usize, seed: u64) -> Result<PropertyReport> {
    let mut rep = PropertyReport::new();
    match problem {
        Problem::Smooth(p) => rep.merge(smooth_bounds(p.f.as_ref(), p.x_star.as_ref(), samples, seed)?),
        Problem::Composite(p) => {
            rep.merge(smooth_bounds(p.f.as_ref(), None, samples, seed)?);
            let cfg = SampleConfig::around(&p.x_star);
            rep.merge(verify_composite_bounds(
                p.f.as_ref(),
                p.g.as_ref(),
                &p.x_star,
                &cfg,
                samples,
                seed.wrapping_add(2),
            ));
            rep.merge(verify_prox(p.g.as_ref(), p.f.dim(), samples, seed.wrapping_add(3)));
        }
        Problem::Skew(p) => {
            rep.merge(smooth_bounds(p.f.as_ref(), None, samples, seed)?);
            let op = SkewShifted {
                mu: p.f.mu(),
                decomp: p.decomp.clone(),
            };
            rep.merge(verify_monotone_operator(&op, samples, seed.wrapping_add(2)));
        }
        Problem::Saddle(p) => {
            rep.merge_prefixed("f", smooth_bounds(p.f.as_ref(), None, samples, seed)?);
            rep.merge_prefixed("g", smooth_bounds(p.g.as_ref(), None, samples, seed.wrapping_add(2))?);
        }
    }
    Ok(rep)
}

fn shifted(f: &Arc<dyn Objective>) -> Result<Shifted> {
    Shifted::new(f.clone(), f.mu())
}

fn smooth_lyapunov(p: &SmoothProblem, samples: usize, seed: u64) -> Result<PropertyReport> {
    let mut rep = PropertyReport::new();
    let Some(xs) = p.x_star.clone() else {
        rep.record_vacuous("strong lyapunov (no reference solution)");
        return Ok(rep);
    };
    let f = p.f.as_ref();
    let (mu, n) = (f.mu(), f.dim());
    if mu > 0.0 {
        for kind in [LyapunovKind::Gap, LyapunovKind::Distance, LyapunovKind::Combined] {
            let spec = LyapunovSpec::new(kind, Some(xs.clone())).with_mu(mu);
            rep.merge(check_strong_lyapunov(FlowId::Gradient, &spec, f, None, samples, seed)?);
        }
        let op = ScaledIdentity { n, mu };
        for kind in [LyapunovKind::VosF, LyapunovKind::Vosf] {
            let spec = LyapunovSpec::new(kind, Some(xs.clone())).with_mu(mu);
            rep.merge(check_strong_lyapunov(FlowId::Vos, &spec, f, Some(&op), samples, seed + 1)?);
        }
        rep.merge(check_cross_term_lemma(&shifted(&p.f)?, mu, None, samples, seed + 2)?);
        rep.merge(check_modified_nonnegative(f, mu, &xs, samples, seed + 3)?);
    }
    let zero = ScaledIdentity { n, mu: 0.0 };
    let scaled = LyapunovSpec::new(LyapunovKind::Scaled, Some(xs.clone())).unshifted();
    rep.merge(check_strong_lyapunov(FlowId::ScaledGradient, &scaled, f, None, samples, seed + 4)?);
    rep.merge(check_strong_lyapunov(FlowId::ScaledVos, &scaled, f, Some(&zero), samples, seed + 5)?);
    let perturbed = LyapunovSpec::new(LyapunovKind::Perturbed, Some(xs)).unshifted();
    rep.merge(check_strong_lyapunov(FlowId::PerturbedVos, &perturbed, f, Some(&zero), samples, seed + 6)?);
    Ok(rep)
}

/// Strong Lyapunov, cross-term and nonnegativity checks.
pub fn lyapunov_suite(problem: &Problem, samples: usize, seed: u64) -> Result<PropertyReport> {
    match problem {
        Problem::Smooth(p) => smooth_lyapunov(p, samples, seed),
        Problem::Composite(p) => {
            let mut rep = check_cross_term_lemma(&shifted(&p.f)?, p.f.mu(), None, samples, seed)?;
            rep.merge(check_modified_nonnegative(p.f.as_ref(), p.f.mu(), &p.x_star, samples, seed + 1)?);
            Ok(rep)
        }
        Problem::Skew(p) => {
            let mu = p.f.mu();
            let mut rep = check_cross_term_lemma(&shifted(&p.f)?, mu, Some(&p.decomp), samples, seed)?;
            let op = SkewShifted {
                mu,
                decomp: p.decomp.clone(),
            };
            let spec = LyapunovSpec::new(LyapunovKind::VosF, Some(p.x_star.clone())).with_mu(mu);
            rep.merge(check_strong_lyapunov(
                FlowId::Vos,
                &spec,
                p.f.as_ref(),
                Some(&op as &dyn MonotoneOperator),
                samples,
                seed + 1,
            )?);
            Ok(rep)
        }
        Problem::Saddle(p) => {
            let mut rep = PropertyReport::new();
            rep.merge_prefixed(
                "f",
                check_cross_term_lemma(&shifted(&p.f)?, p.f.mu(), None, samples, seed)?,
            );
            rep.merge_prefixed(
                "g",
                check_cross_term_lemma(&shifted(&p.g)?, p.g.mu(), None, samples, seed + 1)?,
            );
            Ok(rep)
        }
    }
}

fn schemes_for(problem: &Problem) -> Vec<SchemeId> {
    use SchemeId::*;
    match problem {
        Problem::Smooth(p) if p.f.mu() > 0.0 => {
            vec![Gd, Ppa, AorVos, AorHb, EpcVos, ExtraGrad, CompositeAor, CompositeEpc]
        }
        Problem::Smooth(_) => vec![ScaledPpa, ScaledEpc, PerturbedEpc, Homotopy],
        Problem::Composite(_) => vec![CompositeAor, CompositeEpc],
        Problem::Skew(_) => vec![AgssImplicit, AgssExplicit, Hss],
        Problem::Saddle(_) => vec![SaddleImplicit, SaddleExplicit],
    }
}

fn solution(problem: &Problem) -> Option<Vector> {
    match problem {
        Problem::Smooth(p) => p.x_star.clone(),
        Problem::Composite(p) => Some(p.x_star.clone()),
        Problem::Skew(p) => Some(p.x_star.clone()),
        Problem::Saddle(p) => Some(Vector::from_iterator(
            p.u_star.len() + p.p_star.len(),
            p.u_star.iter().chain(p.p_star.iter()).copied(),
        )),
    }
}

/// Per-step contraction `v_{k+1} <= factor v_k + slack v_k` while `v_k` is
/// above the floor.
pub fn record_contraction(rep: &mut PropertyReport, name: &str, ks: &[usize], values: &[f64], factor: f64) {
    let Some(&v0) = values.first() else {
        return;
    };
    for (k, v) in ks.windows(2).zip(values.windows(2)) {
        if v[0] <= CONTRACTION_FLOOR * v0.abs() {
            break;
        }
        let th = factor.powi((k[1] - k[0]) as i32);
        rep.record_le(name, v[1], th * v[0] + CONTRACTION_SLACK * v[0], 0.0, 0.0);
    }
}

/// `c_0` of the `1/(c_0 k + 1)^2` bound of the scaled scheme under the theorem policy.
pub fn scaled_epc_c0(gamma0: f64, l_f: f64) -> f64 {
    let r = gamma0 / l_f;
    r.sqrt() / ((r + 1.0).sqrt() + 1.0)
}

fn scheme_invariants(problem: &Problem, scheme: SchemeId, seed: u64) -> Result<PropertyReport> {
    let mut rep = PropertyReport::new();
    let name = scheme.as_str();
    let xs = solution(problem).ok_or_else(|| VosError::Capability("needs a reference solution".into()))?;
    // fixed point
    let fixed = RunOptions {
        max_iter: 100,
        tol: 0.0,
        x0: Some(xs.iter().copied().collect()),
        radius: Some(1.0),
        seed,
        ..Default::default()
    };
    let out = run_scheme(scheme, problem, &fixed)?;
    let drift = (&out.state.x - &xs).norm();
    rep.record_le(&format!("{name} fixed point"), drift, 1e-12 * (1.0 + xs.norm()), 0.0, 0.0);

    let opts = RunOptions {
        max_iter: INVARIANT_STEPS,
        tol: 0.0,
        seed,
        ..Default::default()
    };
    if scheme == SchemeId::Homotopy {
        let out = run_scheme(scheme, problem, &opts)?;
        for o in &out.outer {
            let e = o.lyapunov.unwrap_or(f64::NAN);
            rep.record_le(&format!("{name} invariant E <= (R^2+1) eps"), e, o.bound, 0.0, IDENTITY_TOL);
        }
        return Ok(rep);
    }
    let out = run_scheme(scheme, problem, &opts)?;
    let ks: Vec<usize> = out.trace.iter().map(|r| r.k).collect();
    let vals: Vec<f64> = out.trace.iter().map(rate_value).collect();
    match theorem_rate(scheme, &out.setup.constants)? {
        TheoremRate::Factor(th) => record_contraction(&mut rep, &format!("{name} per-step contraction"), &ks, &vals, th),
        TheoremRate::PerturbedFactor(th) => {
            let r2 = out
                .trace
                .iter()
                .filter_map(|r| r.dist_to_star)
                .fold(0.0_f64, f64::max)
                .powi(2);
            for r in &out.trace {
                let eps = r.epsilon.unwrap_or(0.0);
                let bound = th.powi(r.k as i32) * vals[0] + eps * r2;
                rep.record_le(&format!("{name} perturbed contraction"), rate_value(r), bound, bound, IDENTITY_TOL);
            }
        }
        TheoremRate::Exponent(_) => {
            let l_f = out.setup.constants.lipschitz;
            let gamma0 = out.trace[0].gamma.unwrap_or(l_f);
            let c0 = scaled_epc_c0(gamma0, l_f);
            let mut prod = 1.0;
            for w in out.trace.windows(2) {
                let bound = vals[0] / (c0 * w[1].k as f64 + 1.0).powi(2);
                rep.record_le(&format!("{name} 1/(c0 k + 1)^2 decay"), rate_value(&w[1]), bound * (1.0 + 1e-6), 0.0, 0.0);
                prod /= 1.0 + w[0].alpha;
                let g = w[1].gamma.unwrap_or(f64::NAN);
                rep.record_eq(&format!("{name} gamma recursion"), g / gamma0, prod, 0.0, 1e-14 * prod);
            }
        }
    }
    Ok(rep)
}

fn quadratic_parts(p: &SmoothProblem) -> Option<Arc<dyn Objective>> {
    p.f.as_quadratic().map(|_| p.f.clone())
}

/// AOR-HB iterates against eliminated AOR-VOS iterates, EPC extrapolation
/// identity, and the zero-operator reductions.
fn smooth_identities(p: &SmoothProblem, seed: u64) -> Result<PropertyReport> {
    let mut rep = PropertyReport::new();
    let f = p.f.as_ref();
    let (mu, l, n) = (f.mu(), f.lipschitz(), f.dim());
    let alpha = vos_alpha(mu, l - mu, DEFAULT_ALPHA_MAX);
    let big_f = shifted(&p.f)?;
    let op = ScaledIdentity { n, mu };
    let x0 = normal_vector(&mut rng(seed), n);

    if quadratic_parts(p).is_some() {
        let (gamma, beta) = hb_coefficients(mu, alpha);
        let mut vos = SchemeState::at(x0.clone());
        vos = aor_vos_step(&big_f, &op, &vos, alpha)?;
        let mut hb = SchemeState::at(vos.x.clone());
        hb.prev_x = Some(x0.clone());
        hb.prev_gradient = Some(f.gradient(&x0));
        for _ in 0..100 {
            vos = aor_vos_step(&big_f, &op, &vos, alpha)?;
            let g = hb.prev_gradient.clone();
            let xp = hb.prev_x.clone();
            hb = aor_hb_step(f, &hb, gamma, beta)?;
            debug_assert!(g.is_some() && xp.is_some());
            let d = (&vos.x - &hb.x).norm();
            rep.record_le("aor-hb equals eliminated aor-vos", d, 0.0, vos.x.norm(), ALGEBRA_TOL);
        }
    }

    let mut s = SchemeState::new(x0.clone(), normal_vector(&mut rng(seed + 1), n));
    let mut plain = s.clone();
    let zero = ZeroProx;
    let mut comp_a = s.clone();
    let mut comp_e = s.clone();
    let mut plain_e = s.clone();
    for _ in 0..100 {
        let xt = epc_predictor(&s, alpha);
        let next = epc_vos_step(&big_f, &op, &s, alpha)?;
        let lhs = &next.x - &xt;
        let rhs = (&next.y - &s.y) * (alpha / (1.0 + alpha));
        rep.record_le(
            "epc extrapolation identity",
            (&lhs - &rhs).norm(),
            0.0,
            next.x.norm() + xt.norm() + rhs.norm(),
            1e-14,
        );
        s = next;
        plain = aor_vos_step(&big_f, &op, &plain, alpha)?;
        comp_a = composite_aor_step(f, &zero, &comp_a, alpha)?;
        plain_e = epc_vos_step(&big_f, &op, &plain_e, alpha)?;
        comp_e = composite_epc_step(f, &zero, &comp_e, alpha)?;
        rep.record_le(
            "zero prox composite-aor equals aor-vos",
            (&plain.x - &comp_a.x).norm() + (&plain.y - &comp_a.y).norm(),
            0.0,
            plain.x.norm() + plain.y.norm(),
            ALGEBRA_TOL,
        );
        rep.record_le(
            "zero prox composite-epc equals epc-vos",
            (&plain_e.x - &comp_e.x).norm() + (&plain_e.y - &comp_e.y).norm(),
            0.0,
            plain_e.x.norm() + plain_e.y.norm(),
            ALGEBRA_TOL,
        );
    }

    if let Some(q) = f.as_quadratic() {
        let zero_skew = SkewMonotoneProblem::new(p.f.clone(), &Matrix::zeros(n, n))?;
        let mut a = SchemeState::at(x0.clone());
        let mut b = a.clone();
        for _ in 0..100 {
            a = aor_vos_step(&big_f, &op, &a, alpha)?;
            b = crate::solvers::agss_implicit_step(&zero_skew, &b, alpha)?;
            rep.record_le(
                "zero skew agss equals aor-vos",
                (&a.x - &b.x).norm(),
                0.0,
                a.x.norm(),
                ALGEBRA_TOL,
            );
        }
        let _ = q;
    }
    Ok(rep)
}

fn saddle_reduction(p: &SaddleProblem, seed: u64) -> Result<PropertyReport> {
    let mut rep = PropertyReport::new();
    let (m, n) = (p.f.dim(), p.g.dim());
    let dec = SaddleProblem::new(p.f.clone(), p.g.clone(), Matrix::zeros(n, m))?;
    let alpha = crate::solvers::saddle_implicit_alpha(&dec);
    let mut r = rng(seed);
    let (u0, p0) = (normal_vector(&mut r, m), normal_vector(&mut r, n));
    let mut s = SaddleState::new(u0.clone(), p0.clone());
    let (ff, gg) = (shifted(&p.f)?, shifted(&p.g)?);
    let (opf, opg) = (
        ScaledIdentity { n: m, mu: p.f.mu() },
        ScaledIdentity { n, mu: p.g.mu() },
    );
    let (mut a, mut b) = (SchemeState::at(u0), SchemeState::at(p0));
    for _ in 0..100 {
        s = saddle_implicit_step(&dec, &s, alpha)?;
        a = aor_vos_step(&ff, &opf, &a, alpha)?;
        b = aor_vos_step(&gg, &opg, &b, alpha)?;
        let d = (&s.u - &a.x).norm() + (&s.p - &b.x).norm() + (&s.v - &a.y).norm() + (&s.q - &b.y).norm();
        rep.record_le(
            "zero coupling saddle equals decoupled aor-vos",
            d,
            0.0,
            a.x.norm() + b.x.norm(),
            ALGEBRA_TOL,
        );
    }
    Ok(rep)
}

fn composite_reduction(p: &CompositeProblem, seed: u64) -> Result<PropertyReport> {
    // the prox map at the solution is the solution itself
    let mut rep = PropertyReport::new();
    let res = p.fixed_point_residual(&p.x_star);
    rep.record_le("composite reference solution is a prox fixed point", res, 0.0, p.x_star.norm(), 1e-9);
    let _ = seed;
    Ok(rep)
}

/// Fixed points, per-step contraction and algebraic identities of every
/// scheme applicable to `problem`.
pub fn schemes_suite(problem: &Problem, seed: u64) -> Result<PropertyReport> {
    let mut rep = PropertyReport::new();
    for scheme in schemes_for(problem) {
        rep.merge(scheme_invariants(problem, scheme, seed)?);
    }
    match problem {
        Problem::Smooth(p) if p.f.mu() > 0.0 => rep.merge(smooth_identities(p, seed)?),
        Problem::Saddle(p) => rep.merge(saddle_reduction(p, seed)?),
        Problem::Composite(p) => rep.merge(composite_reduction(p, seed)?),
        Problem::Smooth(p) => {
            let f = p.f.as_ref();
            let zero = ScaledIdentity { n: f.dim(), mu: 0.0 };
            let mut s = SchemeState::at(normal_vector(&mut rng(seed), f.dim())).with_gamma(f.lipschitz());
            let mut prev = s.gamma;
            for _ in 0..50 {
                s = scaled_epc_step(f, &zero, &s, ScaledPolicy::Theorem { l_f: f.lipschitz() })?.0;
                rep.record_le("scaled gamma strictly decreasing", s.gamma, prev, prev, 0.0);
                rep.record_le("scaled gamma strictly decreasing", f64::MIN_POSITIVE, prev - s.gamma, 0.0, 0.0);
                prev = s.gamma;
            }
        }
        Problem::Skew(_) => {}
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_ids_round_trip() {
        for s in [Suite::Bounds, Suite::Lyapunov, Suite::Schemes, Suite::All] {
            assert_eq!(s.as_str().parse::<Suite>().unwrap(), s);
        }
        assert!("nope".parse::<Suite>().is_err());
    }

    #[test]
    fn contraction_recorder_flags_growth() {
        let mut rep = PropertyReport::new();
        record_contraction(&mut rep, "c", &[0, 1, 2], &[1.0, 0.5, 0.3], 0.5);
        assert!(!rep.passed());
        let mut rep = PropertyReport::new();
        record_contraction(&mut rep, "c", &[0, 1, 2], &[1.0, 0.5, 0.25], 0.5);
        assert!(rep.passed());
    }
}
