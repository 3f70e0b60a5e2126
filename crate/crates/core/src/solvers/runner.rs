//! Traced driver dispatching a scheme id over a built problem.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{
    agss_explicit_alpha, agss_explicit_step, agss_implicit_step, aor_hb_step, aor_vos_step, composite_aor_step,
    composite_epc_step, epc_vos_step, extra_gradient_step, gd_step, homotopy_restart, perturbed_epc_step, ppa_step,
    saddle_explicit_alpha, saddle_explicit_step, saddle_implicit_alpha, saddle_implicit_step, scaled_epc_step,
    scaled_ppa_step, vos_alpha, HssSplitting, OuterRecord, SaddleState, ScaledPolicy, SchemeId, SchemeState,
    SequenceFormula, StepSizePolicy, DEFAULT_ALPHA_MAX,
};
use crate::error::{Result, VosError};
use crate::harness::{ProblemConstants, TraceRecord};
use crate::linalg::{check_dim, normal_vector, rng, Vector};
use crate::lyapunov::{eval_saddle, LyapunovKind, LyapunovSpec, SaddleLyapunovKind};
use crate::oracle::{Objective, ProxOracle, ScaledIdentity, Shifted, ZeroProx};
use crate::problems::{CompositeProblem, Problem, SaddleProblem, SkewMonotoneProblem, SmoothProblem};

/// Step size used by `ppa` under the theorem policy, where any step works.
pub const DEFAULT_PPA_STEP: f64 = 1.0;
pub const DEFAULT_EPSILON: f64 = 1e-3;
pub const DEFAULT_EPSILON_TARGET: f64 = 1e-4;

/// Driver settings; the `Option` fields override scheme defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunOptions {
    pub policy: StepSizePolicy,
    pub max_iter: usize,
    /// Stop once the scheme's residual is at most `tol`.
    pub tol: f64,
    pub trace_every: usize,
    /// Record elapsed wall time per row; off keeps traces reproducible.
    pub timing: bool,
    pub monotone_reset: bool,
    /// Seed of the random starting point.
    pub seed: u64,
    pub x0: Option<Vec<f64>>,
    pub gamma0: Option<f64>,
    /// Perturbation of `perturbed-epc`, initial perturbation of `homotopy`.
    pub epsilon: Option<f64>,
    pub epsilon_target: Option<f64>,
    /// Bound on the distance to the solution used by `homotopy`.
    pub radius: Option<f64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            policy: StepSizePolicy::TheoremOptimal,
            max_iter: 1000,
            tol: 1e-10,
            trace_every: 1,
            timing: false,
            monotone_reset: false,
            seed: 0,
            x0: None,
            gamma0: None,
            epsilon: None,
            epsilon_target: None,
            radius: None,
        }
    }
}

/// Resolved step size and the constants the rate comparison needs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeSetup {
    pub scheme: SchemeId,
    pub alpha: f64,
    pub constants: ProblemConstants,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunOutcome {
    pub setup: SchemeSetup,
    /// Final iterate; saddle runs store `(u, p)` in `x` and `(v, q)` in `y`.
    pub state: SchemeState,
    pub saddle: Option<SaddleState>,
    pub trace: Vec<TraceRecord>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    /// Outer iterations of `homotopy`.
    pub outer: Vec<OuterRecord>,
}

struct Metrics {
    primary: f64,
    modified: Option<f64>,
    f_gap: Option<f64>,
    residual: f64,
    dist: Option<f64>,
    gamma: Option<f64>,
    epsilon: Option<f64>,
    alpha: f64,
}

impl Metrics {
    fn finite(&self) -> bool {
        let opt = |v: Option<f64>| v.is_none_or(f64::is_finite);
        self.primary.is_finite()
            && self.residual.is_finite()
            && opt(self.modified)
            && opt(self.f_gap)
            && opt(self.dist)
    }
}

struct Tracer {
    rows: Vec<TraceRecord>,
    start: Instant,
    timing: bool,
}

impl Tracer {
    fn new(timing: bool) -> Self {
        Self {
            rows: Vec::new(),
            start: Instant::now(),
            timing,
        }
    }

    fn push(&mut self, k: usize, m: &Metrics) {
        self.rows.push(TraceRecord {
            k,
            lyap_primary: m.primary,
            lyap_modified: m.modified,
            f_gap: m.f_gap,
            grad_norm: m.residual,
            dist_to_star: m.dist,
            gamma: m.gamma,
            epsilon: m.epsilon,
            alpha: m.alpha,
            wall_ns: if self.timing {
                self.start.elapsed().as_nanos() as u64
            } else {
                0
            },
        });
    }
}

struct Driven<S> {
    state: S,
    trace: Vec<TraceRecord>,
    iterations: usize,
    residual: f64,
    converged: bool,
}

fn drive<S>(
    init: S,
    opts: &RunOptions,
    mut step: impl FnMut(&S) -> Result<S>,
    mut measure: impl FnMut(&S) -> Result<Metrics>,
    finite: impl Fn(&S) -> bool,
    snapshot: impl Fn(&S) -> SchemeState,
) -> Result<Driven<S>> {
    let every = opts.trace_every.max(1);
    let mut tracer = Tracer::new(opts.timing);
    let mut state = init;
    let m = measure(&state)?;
    tracer.push(0, &m);
    let mut residual = m.residual;
    let mut converged = residual <= opts.tol;
    let mut k = 0;
    while !converged && k < opts.max_iter {
        let next = step(&state)?;
        let m = if finite(&next) { Some(measure(&next)?) } else { None };
        match m {
            Some(m) if m.finite() => {
                k += 1;
                state = next;
                residual = m.residual;
                converged = residual <= opts.tol;
                if k % every == 0 || converged || k == opts.max_iter {
                    tracer.push(k, &m);
                }
            }
            _ => {
                return Err(VosError::Divergence {
                    iteration: k + 1,
                    last_finite: Box::new(snapshot(&state)),
                })
            }
        }
    }
    Ok(Driven {
        state,
        trace: tracer.rows,
        iterations: k,
        residual,
        converged,
    })
}

fn fixed_alpha(policy: StepSizePolicy, scheme: SchemeId, theorem: impl FnOnce() -> f64) -> Result<f64> {
    match policy {
        StepSizePolicy::Fixed { alpha } => {
            super::check_alpha(alpha)?;
            Ok(alpha)
        }
        StepSizePolicy::TheoremOptimal => Ok(theorem()),
        StepSizePolicy::Sequence { .. } => Err(VosError::Config(format!(
            "step-size sequences are only available for scaled-epc, not {scheme}"
        ))),
    }
}

fn initial_point(opts: &RunOptions, n: usize) -> Result<Vector> {
    match &opts.x0 {
        Some(x) => {
            let v = Vector::from_row_slice(x);
            check_dim(&v, n)?;
            Ok(v)
        }
        None => Ok(normal_vector(&mut rng(opts.seed), n)),
    }
}

fn capability(scheme: SchemeId, problem: &Problem) -> VosError {
    VosError::Capability(format!("scheme {scheme} cannot run on a {} problem", problem.kind_name()))
}

/// Runs `scheme` on `problem` from a seeded (or supplied) starting point,
/// logging one row at `k = 0`, every `trace_every` steps, and at the last step.
pub fn run_scheme(scheme: SchemeId, problem: &Problem, opts: &RunOptions) -> Result<RunOutcome> {
    match (scheme, problem) {
        (SchemeId::CompositeAor | SchemeId::CompositeEpc, Problem::Composite(p)) => run_composite(scheme, p, opts),
        (SchemeId::AgssImplicit | SchemeId::AgssExplicit | SchemeId::Hss, Problem::Skew(p)) => {
            run_skew(scheme, p, opts)
        }
        (SchemeId::SaddleImplicit | SchemeId::SaddleExplicit, Problem::Saddle(p)) => run_saddle(scheme, p, opts),
        (SchemeId::Homotopy, Problem::Smooth(p)) => run_homotopy(p, opts),
        (SchemeId::ScaledPpa | SchemeId::ScaledEpc | SchemeId::PerturbedEpc, Problem::Smooth(p)) => {
            run_convex(scheme, p, opts)
        }
        (
            SchemeId::Gd
            | SchemeId::Ppa
            | SchemeId::AorVos
            | SchemeId::AorHb
            | SchemeId::EpcVos
            | SchemeId::ExtraGrad
            | SchemeId::CompositeAor
            | SchemeId::CompositeEpc,
            Problem::Smooth(p),
        ) => run_smooth(scheme, p, opts),
        _ => Err(capability(scheme, problem)),
    }
}

fn smooth_constants(f: &dyn Objective, alpha: f64) -> ProblemConstants {
    ProblemConstants {
        mu: f.mu(),
        lipschitz: f.lipschitz(),
        alpha: Some(alpha),
        ..Default::default()
    }
}

fn finish(setup: SchemeSetup, d: Driven<SchemeState>) -> RunOutcome {
    RunOutcome {
        setup,
        state: d.state,
        saddle: None,
        trace: d.trace,
        iterations: d.iterations,
        residual: d.residual,
        converged: d.converged,
        outer: Vec::new(),
    }
}

/// Value of the primary column when no reference solution is known.
fn residual_energy(r: f64) -> f64 {
    0.5 * r * r
}

fn run_smooth(scheme: SchemeId, p: &SmoothProblem, opts: &RunOptions) -> Result<RunOutcome> {
    let f = p.f.as_ref();
    let (mu, l) = (f.mu(), f.lipschitz());
    let n = f.dim();
    let x0 = initial_point(opts, n)?;
    let theorem_vos = || vos_alpha(mu, l - mu, DEFAULT_ALPHA_MAX);
    let alpha = match scheme {
        SchemeId::Gd => fixed_alpha(opts.policy, scheme, || 2.0 / (l + mu))?,
        SchemeId::Ppa => fixed_alpha(opts.policy, scheme, || DEFAULT_PPA_STEP)?,
        SchemeId::ExtraGrad => fixed_alpha(opts.policy, scheme, || (mu / l).sqrt())?,
        _ => fixed_alpha(opts.policy, scheme, theorem_vos)?,
    };
    let needs_mu = !matches!(scheme, SchemeId::Gd | SchemeId::Ppa);
    if needs_mu && !(mu > 0.0) {
        return Err(VosError::Capability(format!("{scheme} needs a strongly convex objective")));
    }
    let big_f: Arc<dyn Objective> = Arc::new(Shifted::new(p.f.clone(), mu)?);
    let op = ScaledIdentity { n, mu };
    let (primary_kind, modified_kind) = match scheme {
        SchemeId::Gd | SchemeId::Ppa => (LyapunovKind::Combined, None),
        SchemeId::AorVos | SchemeId::AorHb | SchemeId::CompositeAor => {
            (LyapunovKind::VosF, Some(LyapunovKind::ModifiedAlpha))
        }
        SchemeId::ExtraGrad => (LyapunovKind::Vosf, None),
        _ => (LyapunovKind::VosF, None),
    };
    let primary = LyapunovSpec::new(primary_kind, p.x_star.clone()).with_mu(mu).with_alpha(alpha);
    let modified = modified_kind.map(|k| LyapunovSpec::new(k, p.x_star.clone()).with_mu(mu).with_alpha(alpha));
    let f_star = p.x_star.as_ref().map(|xs| f.value(xs));
    let measure = |s: &SchemeState| -> Result<Metrics> {
        let residual = f.gradient(&s.x).norm();
        let (lp, lm) = match &p.x_star {
            Some(_) => (
                primary.eval(f, s)?,
                modified.as_ref().map(|m| m.eval(f, s)).transpose()?,
            ),
            None => (residual_energy(residual), None),
        };
        Ok(Metrics {
            primary: lp,
            modified: lm,
            f_gap: f_star.map(|fs| f.value(&s.x) - fs),
            residual,
            dist: p.x_star.as_ref().map(|xs| (&s.x - xs).norm()),
            gamma: None,
            epsilon: None,
            alpha,
        })
    };
    let setup = SchemeSetup {
        scheme,
        alpha,
        constants: smooth_constants(f, alpha),
    };
    let zero = ZeroProx;
    let d = match scheme {
        SchemeId::Gd => drive(
            SchemeState::at(x0),
            opts,
            |s| gd_step(f, &s.x, alpha).map(|x| s.advanced(x.clone(), x)),
            measure,
            SchemeState::is_finite,
            Clone::clone,
        )?,
        SchemeId::Ppa => drive(
            SchemeState::at(x0),
            opts,
            |s| ppa_step(f, &s.x, alpha).map(|x| s.advanced(x.clone(), x)),
            measure,
            SchemeState::is_finite,
            Clone::clone,
        )?,
        SchemeId::AorVos => drive(
            SchemeState::at(x0),
            opts,
            |s| aor_vos_step(big_f.as_ref(), &op, s, alpha),
            measure,
            SchemeState::is_finite,
            Clone::clone,
        )?,
        SchemeId::EpcVos => drive(
            SchemeState::at(x0),
            opts,
            |s| epc_vos_step(big_f.as_ref(), &op, s, alpha),
            measure,
            SchemeState::is_finite,
            Clone::clone,
        )?,
        SchemeId::ExtraGrad => drive(
            SchemeState::at(x0),
            opts,
            |s| extra_gradient_step(f, s, alpha, opts.monotone_reset),
            measure,
            SchemeState::is_finite,
            Clone::clone,
        )?,
        SchemeId::CompositeAor => drive(
            SchemeState::at(x0),
            opts,
            |s| composite_aor_step(f, &zero, s, alpha),
            measure,
            SchemeState::is_finite,
            Clone::clone,
        )?,
        SchemeId::CompositeEpc => drive(
            SchemeState::at(x0),
            opts,
            |s| composite_epc_step(f, &zero, s, alpha),
            measure,
            SchemeState::is_finite,
            Clone::clone,
        )?,
        SchemeId::AorHb => {
            let (gamma, beta) = hb_coefficients(mu, alpha);
            let y0 = hb_initial_shadow(f, &x0, gamma, alpha);
            drive(
                SchemeState::new(x0, y0),
                opts,
                |s| {
                    let mut next = aor_hb_step(f, s, gamma, beta)?;
                    let g = next.prev_gradient.as_ref().expect("heavy-ball step records its gradient");
                    next.y = hb_shadow(&next.x, &s.x, g, mu, alpha);
                    Ok(next)
                },
                measure,
                SchemeState::is_finite,
                Clone::clone,
            )?
        }
        _ => unreachable!("dispatched in run_scheme"),
    };
    Ok(finish(setup, d))
}

/// `(gamma, beta)` of the three-term recursion for step size `alpha`.
pub fn hb_coefficients(mu: f64, alpha: f64) -> (f64, f64) {
    let a1 = (1.0 + alpha) * (1.0 + alpha);
    (alpha * alpha / (a1 * mu), (1.0 + alpha * alpha) / a1)
}

/// `y_{k+1}` recovered from `x_{k+1}, x_k, grad f(x_k)` of the three-term recursion.
pub fn hb_shadow(x_next: &Vector, x: &Vector, g: &Vector, mu: f64, alpha: f64) -> Vector {
    let d = alpha * (1.0 - alpha);
    if d.abs() < 1e-12 {
        return x_next.clone();
    }
    (x_next * (1.0 + alpha) - x * (1.0 + alpha * alpha) + g * (alpha * alpha / mu)) / d
}

/// `y_0` for which the first plain gradient step of length `gamma` coincides
/// with an over-relaxation step from `(x_0, y_0)`.
pub fn hb_initial_shadow(f: &dyn Objective, x0: &Vector, gamma: f64, alpha: f64) -> Vector {
    let mu = f.mu();
    let g0 = f.gradient(x0);
    let x1 = x0 - &g0 * gamma;
    let d = alpha * (1.0 - alpha);
    if d.abs() < 1e-12 {
        return x0.clone();
    }
    let a1 = 1.0 + alpha;
    (x1 * a1 - x0 - (x0 - &g0 / mu) * (2.0 * alpha * alpha / a1)) * (a1 / d)
}

fn run_composite(scheme: SchemeId, p: &CompositeProblem, opts: &RunOptions) -> Result<RunOutcome> {
    let f = p.f.as_ref();
    let g: &dyn ProxOracle = p.g.as_ref();
    let (mu, l) = (f.mu(), f.lipschitz());
    if !(mu > 0.0) {
        return Err(VosError::Capability(format!("{scheme} needs a strongly convex smooth part")));
    }
    let alpha = fixed_alpha(opts.policy, scheme, || vos_alpha(mu, l - mu, DEFAULT_ALPHA_MAX))?;
    let x0 = initial_point(opts, f.dim())?;
    let xs = Some(p.x_star.clone());
    let primary = LyapunovSpec::new(LyapunovKind::VosF, xs.clone()).with_mu(mu);
    let modified = (scheme == SchemeId::CompositeAor)
        .then(|| LyapunovSpec::new(LyapunovKind::ModifiedAlpha, xs.clone()).with_mu(mu).with_alpha(alpha));
    let total_star = p.total(&p.x_star);
    let measure = |s: &SchemeState| -> Result<Metrics> {
        Ok(Metrics {
            primary: primary.eval(f, s)?,
            modified: modified.as_ref().map(|m| m.eval(f, s)).transpose()?,
            f_gap: Some(p.total(&s.x) - total_star),
            residual: p.fixed_point_residual(&s.x),
            dist: Some((&s.x - &p.x_star).norm()),
            gamma: None,
            epsilon: None,
            alpha,
        })
    };
    let d = drive(
        SchemeState::at(x0),
        opts,
        |s| match scheme {
            SchemeId::CompositeAor => composite_aor_step(f, g, s, alpha),
            _ => composite_epc_step(f, g, s, alpha),
        },
        measure,
        SchemeState::is_finite,
        Clone::clone,
    )?;
    let setup = SchemeSetup {
        scheme,
        alpha,
        constants: smooth_constants(f, alpha),
    };
    Ok(finish(setup, d))
}

fn run_skew(scheme: SchemeId, p: &SkewMonotoneProblem, opts: &RunOptions) -> Result<RunOutcome> {
    let f = p.f.as_ref();
    let (mu, l) = (f.mu(), f.lipschitz());
    let l_bsym = p.decomp.l_bsym;
    let alpha = match scheme {
        SchemeId::AgssImplicit => fixed_alpha(opts.policy, scheme, || vos_alpha(mu, l - mu, DEFAULT_ALPHA_MAX))?,
        SchemeId::AgssExplicit => fixed_alpha(opts.policy, scheme, || agss_explicit_alpha(mu, l, l_bsym))?,
        _ => fixed_alpha(opts.policy, scheme, || HssSplitting::optimal_shift(p))?,
    };
    let x0 = initial_point(opts, f.dim())?;
    let xs = Some(p.x_star.clone());
    let primary = LyapunovSpec::new(LyapunovKind::VosF, xs.clone()).with_mu(mu);
    let modified = match scheme {
        SchemeId::AgssImplicit => Some(LyapunovSpec::new(LyapunovKind::AgssAlpha, xs).with_mu(mu).with_alpha(alpha)),
        SchemeId::AgssExplicit => Some(
            LyapunovSpec::new(LyapunovKind::AgssExplicitAlpha, xs)
                .with_mu(mu)
                .with_alpha(alpha)
                .with_b_sym(p.decomp.b_sym.clone()),
        ),
        _ => None,
    };
    let hss = (scheme == SchemeId::Hss).then(|| HssSplitting::new(p, alpha)).transpose()?;
    let measure = |s: &SchemeState| -> Result<Metrics> {
        let e = &s.x - &p.x_star;
        let lp = match scheme {
            SchemeId::Hss => (&e * alpha + &p.decomp.skew * &e).norm(),
            _ => primary.eval(f, s)?,
        };
        Ok(Metrics {
            primary: lp,
            modified: modified.as_ref().map(|m| m.eval(f, s)).transpose()?,
            f_gap: None,
            residual: p.residual(&s.x).norm(),
            dist: Some(e.norm()),
            gamma: None,
            epsilon: None,
            alpha,
        })
    };
    let d = drive(
        SchemeState::at(x0),
        opts,
        |s| match (scheme, &hss) {
            (SchemeId::AgssImplicit, _) => agss_implicit_step(p, s, alpha),
            (SchemeId::AgssExplicit, _) => agss_explicit_step(p, s, alpha),
            (_, Some(h)) => h.step(&s.x).map(|x| s.advanced(x.clone(), x)),
            _ => unreachable!("hss splitting built above"),
        },
        measure,
        SchemeState::is_finite,
        Clone::clone,
    )?;
    let setup = SchemeSetup {
        scheme,
        alpha,
        constants: ProblemConstants {
            mu,
            lipschitz: l,
            l_bsym: Some(l_bsym),
            alpha: (scheme != SchemeId::Hss).then_some(alpha),
            ..Default::default()
        },
    };
    Ok(finish(setup, d))
}

fn concat(a: &Vector, b: &Vector) -> Vector {
    Vector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied())
}

fn saddle_snapshot(s: &SaddleState) -> SchemeState {
    let mut st = SchemeState::new(concat(&s.u, &s.p), concat(&s.v, &s.q));
    st.iteration = s.iteration;
    st
}

fn run_saddle(scheme: SchemeId, p: &SaddleProblem, opts: &RunOptions) -> Result<RunOutcome> {
    let c = &p.coupling;
    if !(c.mu_f > 0.0 && c.mu_g > 0.0) {
        return Err(VosError::Capability(
            "saddle schemes need strongly convex f and g; mu_g = 0 is not supported".into(),
        ));
    }
    let alpha = match scheme {
        SchemeId::SaddleImplicit => fixed_alpha(opts.policy, scheme, || saddle_implicit_alpha(p))?,
        _ => fixed_alpha(opts.policy, scheme, || saddle_explicit_alpha(p))?,
    };
    let (m, n) = (c.dim_u(), c.dim_p());
    let z0 = initial_point(opts, m + n)?;
    let init = SaddleState::new(z0.rows(0, m).into_owned(), z0.rows(m, n).into_owned());
    let modified_kind = match scheme {
        SchemeId::SaddleImplicit => SaddleLyapunovKind::ImplicitAlpha,
        _ => SaddleLyapunovKind::ExplicitAlpha,
    };
    let measure = |s: &SaddleState| -> Result<Metrics> {
        let d2 = (&s.u - &p.u_star).norm_squared() + (&s.p - &p.p_star).norm_squared();
        Ok(Metrics {
            primary: eval_saddle(SaddleLyapunovKind::Plain, p, s, alpha)?,
            modified: Some(eval_saddle(modified_kind, p, s, alpha)?),
            f_gap: None,
            residual: p.kkt_residual(&s.u, &s.p),
            dist: Some(d2.sqrt()),
            gamma: None,
            epsilon: None,
            alpha,
        })
    };
    let d = drive(
        init,
        opts,
        |s| match scheme {
            SchemeId::SaddleImplicit => saddle_implicit_step(p, s, alpha),
            _ => saddle_explicit_step(p, s, alpha),
        },
        measure,
        SaddleState::is_finite,
        saddle_snapshot,
    )?;
    let setup = SchemeSetup {
        scheme,
        alpha,
        constants: ProblemConstants {
            mu: c.mu_f,
            lipschitz: p.f.lipschitz(),
            mu_g: Some(c.mu_g),
            l_g: Some(p.g.lipschitz()),
            b_norm: Some(c.b_norm),
            alpha: Some(alpha),
            ..Default::default()
        },
    };
    Ok(RunOutcome {
        setup,
        state: saddle_snapshot(&d.state),
        saddle: Some(d.state),
        trace: d.trace,
        iterations: d.iterations,
        residual: d.residual,
        converged: d.converged,
        outer: Vec::new(),
    })
}

/// Policy of the scaled predictor-corrector scheme and its default `gamma_0`.
fn scaled_policy(policy: StepSizePolicy, l_f: f64) -> (ScaledPolicy, f64) {
    match policy {
        StepSizePolicy::Fixed { alpha } => (ScaledPolicy::Fixed(alpha), l_f),
        StepSizePolicy::TheoremOptimal => (ScaledPolicy::Theorem { l_f }, l_f),
        StepSizePolicy::Sequence {
            formula: SequenceFormula::TwoOverKPlusOne,
        } => (ScaledPolicy::Simple { l_f }, 4.0 * l_f),
    }
}

fn scaled_alpha(policy: ScaledPolicy, s: &SchemeState) -> f64 {
    match policy {
        ScaledPolicy::Theorem { l_f } => (s.gamma / l_f).sqrt(),
        ScaledPolicy::Simple { .. } => 2.0 / (s.iteration as f64 + 1.0),
        ScaledPolicy::Fixed(a) => a,
    }
}

fn run_convex(scheme: SchemeId, p: &SmoothProblem, opts: &RunOptions) -> Result<RunOutcome> {
    let f = p.f.as_ref();
    let l_f = f.lipschitz();
    if !(l_f > 0.0) {
        return Err(VosError::Capability(format!("{scheme} needs a positive smoothness constant")));
    }
    let n = f.dim();
    let x0 = initial_point(opts, n)?;
    let zero_op = ScaledIdentity { n, mu: 0.0 };
    let f_star = p.x_star.as_ref().map(|xs| f.value(xs));
    let kind = if scheme == SchemeId::PerturbedEpc {
        LyapunovKind::Perturbed
    } else {
        LyapunovKind::Scaled
    };
    let spec = LyapunovSpec::new(kind, p.x_star.clone()).unshifted();
    let (policy, gamma_default) = match scheme {
        SchemeId::ScaledEpc => scaled_policy(opts.policy, l_f),
        _ => (ScaledPolicy::Theorem { l_f }, l_f),
    };
    let epsilon = opts.epsilon.unwrap_or(DEFAULT_EPSILON);
    let (alpha, init) = match scheme {
        SchemeId::ScaledPpa => {
            let a = fixed_alpha(opts.policy, scheme, || 1.0)?;
            (a, SchemeState::at(x0).with_gamma(opts.gamma0.unwrap_or(l_f)))
        }
        SchemeId::ScaledEpc => {
            let s = SchemeState::at(x0).with_gamma(opts.gamma0.unwrap_or(gamma_default));
            (scaled_alpha(policy, &s), s)
        }
        _ => {
            let a = fixed_alpha(opts.policy, scheme, || (epsilon / l_f).sqrt())?;
            (a, SchemeState::at(x0).with_epsilon(epsilon))
        }
    };
    let measure = |s: &SchemeState| -> Result<Metrics> {
        let residual = f.gradient(&s.x).norm();
        Ok(Metrics {
            primary: match &p.x_star {
                Some(_) => spec.eval(f, s)?,
                None => residual_energy(residual),
            },
            modified: None,
            f_gap: f_star.map(|fs| f.value(&s.x) - fs),
            residual,
            dist: p.x_star.as_ref().map(|xs| (&s.x - xs).norm()),
            gamma: (scheme != SchemeId::PerturbedEpc).then_some(s.gamma),
            epsilon: (scheme == SchemeId::PerturbedEpc).then_some(s.epsilon),
            alpha: match scheme {
                SchemeId::ScaledEpc => scaled_alpha(policy, s),
                _ => alpha,
            },
        })
    };
    let d = drive(
        init,
        opts,
        |s| match scheme {
            SchemeId::ScaledPpa => scaled_ppa_step(f, s, alpha),
            SchemeId::ScaledEpc => scaled_epc_step(f, &zero_op, s, policy).map(|(t, _)| t),
            _ => perturbed_epc_step(f, &zero_op, s, alpha),
        },
        measure,
        SchemeState::is_finite,
        Clone::clone,
    )?;
    let setup = SchemeSetup {
        scheme,
        alpha,
        constants: ProblemConstants {
            mu: f.mu(),
            lipschitz: l_f,
            alpha: (scheme != SchemeId::ScaledEpc).then_some(alpha),
            ..Default::default()
        },
    };
    Ok(finish(setup, d))
}

fn run_homotopy(p: &SmoothProblem, opts: &RunOptions) -> Result<RunOutcome> {
    let f = p.f.as_ref();
    let l_f = f.lipschitz();
    let n = f.dim();
    let x0 = initial_point(opts, n)?;
    let eps0 = opts.epsilon.unwrap_or(1.0);
    let target = opts.epsilon_target.unwrap_or(DEFAULT_EPSILON_TARGET);
    let radius = match (opts.radius, &p.x_star) {
        (Some(r), _) => r,
        (None, Some(xs)) => 2.0 * (&x0 - xs).norm(),
        (None, None) => {
            return Err(VosError::Config(
                "homotopy needs `radius` when no reference solution is known".into(),
            ))
        }
    };
    let alpha0 = (eps0 / l_f).sqrt();
    let setup = SchemeSetup {
        scheme: SchemeId::Homotopy,
        alpha: alpha0,
        constants: ProblemConstants {
            mu: f.mu(),
            lipschitz: l_f,
            ..Default::default()
        },
    };
    let start = SchemeState::at(x0.clone()).with_epsilon(eps0);
    let spec = LyapunovSpec::new(LyapunovKind::Perturbed, p.x_star.clone()).unshifted();
    let mut tracer = Tracer::new(opts.timing);
    let r0 = f.gradient(&x0).norm();
    let row0 = Metrics {
        primary: match &p.x_star {
            Some(_) => spec.eval(f, &start)?,
            None => residual_energy(r0),
        },
        modified: None,
        f_gap: p.x_star.as_ref().map(|xs| f.value(&x0) - f.value(xs)),
        residual: r0,
        dist: p.x_star.as_ref().map(|xs| (&x0 - xs).norm()),
        gamma: None,
        epsilon: Some(eps0),
        alpha: alpha0,
    };
    tracer.push(0, &row0);
    if opts.max_iter == 0 {
        return Ok(RunOutcome {
            setup,
            state: start,
            saddle: None,
            trace: tracer.rows,
            iterations: 0,
            residual: r0,
            converged: r0 <= opts.tol,
            outer: Vec::new(),
        });
    }
    let zero_op = ScaledIdentity { n, mu: 0.0 };
    let run = homotopy_restart(f, &zero_op, &x0, &x0, eps0, target, radius, p.x_star.as_ref())?;
    let f_star = p.x_star.as_ref().map(|xs| f.value(xs));
    for o in &run.outer {
        tracer.push(
            o.cumulative,
            &Metrics {
                primary: o.lyapunov.unwrap_or_else(|| residual_energy(o.grad_norm)),
                modified: None,
                f_gap: None,
                residual: o.grad_norm,
                dist: o.dist_to_star,
                gamma: None,
                epsilon: Some(o.epsilon),
                alpha: (o.epsilon / l_f).sqrt(),
            },
        );
    }
    if let (Some(last), Some(fs)) = (tracer.rows.last_mut(), f_star) {
        if !run.outer.is_empty() {
            last.f_gap = Some(f.value(&run.state.x) - fs);
        }
    }
    let residual = f.gradient(&run.state.x).norm();
    Ok(RunOutcome {
        setup,
        iterations: run.state.iteration,
        residual,
        converged: residual <= opts.tol,
        state: run.state,
        saddle: None,
        trace: tracer.rows,
        outer: run.outer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::build_quadratic;

    fn quad() -> Problem {
        Problem::Smooth(build_quadratic(&[1.0, 3.0, 10.0], 1).unwrap().smooth())
    }

    #[test]
    fn zero_iterations_give_one_row() {
        let opts = RunOptions {
            max_iter: 0,
            ..Default::default()
        };
        let out = run_scheme(SchemeId::AorVos, &quad(), &opts).unwrap();
        assert_eq!(out.trace.len(), 1);
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn mismatched_problem_is_capability_error() {
        let err = run_scheme(SchemeId::Hss, &quad(), &RunOptions::default());
        assert!(matches!(err, Err(VosError::Capability(_))));
    }

    #[test]
    fn divergence_reports_last_finite_state() {
        let opts = RunOptions {
            policy: StepSizePolicy::Fixed { alpha: 1.0 },
            max_iter: 5000,
            tol: 0.0,
            ..Default::default()
        };
        match run_scheme(SchemeId::Gd, &quad(), &opts) {
            Err(VosError::Divergence { last_finite, .. }) => assert!(last_finite.is_finite()),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn shadow_sequence_matches_over_relaxation() {
        let q = build_quadratic(&[1.0, 4.0, 20.0], 3).unwrap();
        let f = q.objective.as_ref();
        let mu = f.mu();
        let alpha = vos_alpha(mu, f.lipschitz() - mu, DEFAULT_ALPHA_MAX);
        let (gamma, _) = hb_coefficients(mu, alpha);
        let x0 = Vector::from_row_slice(&[1.0, -2.0, 0.5]);
        let y0 = hb_initial_shadow(f, &x0, gamma, alpha);
        let big_f = Shifted::new(q.objective.clone(), mu).unwrap();
        let op = ScaledIdentity { n: 3, mu };
        let s1 = aor_vos_step(&big_f, &op, &SchemeState::new(x0.clone(), y0), alpha).unwrap();
        let hb1 = &x0 - f.gradient(&x0) * gamma;
        assert!((s1.x - hb1).norm() < 1e-12);
    }

    #[test]
    fn decimated_trace_keeps_last_row() {
        let opts = RunOptions {
            max_iter: 25,
            tol: 0.0,
            trace_every: 10,
            ..Default::default()
        };
        let out = run_scheme(SchemeId::EpcVos, &quad(), &opts).unwrap();
        let ks: Vec<usize> = out.trace.iter().map(|r| r.k).collect();
        assert_eq!(ks, vec![0, 10, 20, 25]);
    }
}
