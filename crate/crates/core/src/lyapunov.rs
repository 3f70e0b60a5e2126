//! Lyapunov functions of the flows and schemes, sampled strong-Lyapunov and
//! cross-term checks, and RK4 integration of the continuous flows.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bregman::bregman_divergence;
use crate::checks::{PropertyReport, IDENTITY_TOL};
use crate::error::{parameter, Result, VosError};
use crate::linalg::{check_dim, extreme_eigenvectors, normal_vector, rng, Matrix, Vector};
use crate::operators::SkewDecomposition;
use crate::oracle::{MonotoneOperator, Objective};
use crate::problems::SaddleProblem;
use crate::solvers::{SaddleState, SchemeState};

/// Lyapunov families. `F` denotes `f - (shift/2)|.|^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LyapunovKind {
    /// `f(x) - f(x*)`.
    #[serde(rename = "gap")]
    Gap,
    /// `|x - x*|^2 / 2`.
    #[serde(rename = "distance")]
    Distance,
    /// `f(x) - f(x*) + (mu/2)|x - x*|^2`.
    #[serde(rename = "combined")]
    Combined,
    /// `D_F(x, x*) + (mu/2)|y - x*|^2`.
    #[serde(rename = "vos_F")]
    VosF,
    /// `D_f(x, x*) + (mu/2)|y - x*|^2`.
    #[serde(rename = "vos_f")]
    Vosf,
    /// `vos_F - alpha <grad F(x) - grad F(x*), y - x*>`.
    #[serde(rename = "modified_alpha")]
    ModifiedAlpha,
    /// Same formula as `modified_alpha`, for the implicit skew scheme.
    #[serde(rename = "agss_alpha")]
    AgssAlpha,
    /// `modified_alpha` with the `y` weight `mu I - alpha B_sym`.
    #[serde(rename = "agss_explicit_alpha")]
    AgssExplicitAlpha,
    /// `D_F(x, x*) + (gamma/2)|y - x*|^2`, `gamma` from the state.
    #[serde(rename = "scaled")]
    Scaled,
    /// `D_F(x, x*) + (epsilon/2)|y - x*|^2`, `epsilon` from the state.
    #[serde(rename = "perturbed")]
    Perturbed,
}

impl LyapunovKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LyapunovKind::Gap => "gap",
            LyapunovKind::Distance => "distance",
            LyapunovKind::Combined => "combined",
            LyapunovKind::VosF => "vos_F",
            LyapunovKind::Vosf => "vos_f",
            LyapunovKind::ModifiedAlpha => "modified_alpha",
            LyapunovKind::AgssAlpha => "agss_alpha",
            LyapunovKind::AgssExplicitAlpha => "agss_explicit_alpha",
            LyapunovKind::Scaled => "scaled",
            LyapunovKind::Perturbed => "perturbed",
        }
    }
}

/// A Lyapunov function bound to a reference solution and its parameters.
#[derive(Debug, Clone)]
pub struct LyapunovSpec {
    pub kind: LyapunovKind,
    pub x_star: Option<Vector>,
    /// Weight of the `y` term.
    pub mu: f64,
    /// `F = f - (shift/2)|.|^2`.
    pub shift: f64,
    pub alpha: f64,
    pub b_sym: Option<Matrix>,
}

impl LyapunovSpec {
    /// `mu` and `shift` default to `f.mu()`-style values set by [`Self::with_mu`].
    pub fn new(kind: LyapunovKind, x_star: Option<Vector>) -> Self {
        Self {
            kind,
            x_star,
            mu: 0.0,
            shift: 0.0,
            alpha: 0.0,
            b_sym: None,
        }
    }

    /// Sets both the `y` weight and the shift defining `F`.
    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self.shift = mu;
        self
    }

    /// Treats the supplied objective as `F` itself.
    pub fn unshifted(mut self) -> Self {
        self.shift = 0.0;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_b_sym(mut self, b_sym: Matrix) -> Self {
        self.b_sym = Some(b_sym);
        self
    }

    fn star(&self) -> Result<&Vector> {
        self.x_star
            .as_ref()
            .ok_or_else(|| VosError::Capability(format!("{} needs a reference solution", self.kind.as_str())))
    }

    /// `D_F(a, b)`.
    fn d_big_f(&self, f: &dyn Objective, a: &Vector, b: &Vector) -> Result<f64> {
        Ok(bregman_divergence(f, a, b)? - 0.5 * self.shift * (a - b).norm_squared())
    }

    /// `grad F(a) - grad F(b)`.
    fn dgrad_big_f(&self, f: &dyn Objective, a: &Vector, b: &Vector) -> Vector {
        f.gradient(a) - f.gradient(b) - (a - b) * self.shift
    }

    /// Evaluates the Lyapunov function of `f` at `state`.
    pub fn eval(&self, f: &dyn Objective, s: &SchemeState) -> Result<f64> {
        let xs = self.star()?;
        check_dim(&s.x, f.dim())?;
        check_dim(&s.y, f.dim())?;
        let ex = &s.x - xs;
        let ey = &s.y - xs;
        let v = match self.kind {
            LyapunovKind::Gap => f.value(&s.x) - f.value(xs),
            LyapunovKind::Distance => 0.5 * ex.norm_squared(),
            LyapunovKind::Combined => f.value(&s.x) - f.value(xs) + 0.5 * self.mu * ex.norm_squared(),
            LyapunovKind::VosF => self.d_big_f(f, &s.x, xs)? + 0.5 * self.mu * ey.norm_squared(),
            LyapunovKind::Vosf => bregman_divergence(f, &s.x, xs)? + 0.5 * self.mu * ey.norm_squared(),
            LyapunovKind::ModifiedAlpha | LyapunovKind::AgssAlpha => {
                self.d_big_f(f, &s.x, xs)? + 0.5 * self.mu * ey.norm_squared()
                    - self.alpha * self.dgrad_big_f(f, &s.x, xs).dot(&ey)
            }
            LyapunovKind::AgssExplicitAlpha => {
                let bs = self
                    .b_sym
                    .as_ref()
                    .ok_or_else(|| VosError::Capability("agss_explicit_alpha needs B_sym".into()))?;
                let weighted = self.mu * ey.norm_squared() - self.alpha * ey.dot(&(bs * &ey));
                self.d_big_f(f, &s.x, xs)? + 0.5 * weighted - self.alpha * self.dgrad_big_f(f, &s.x, xs).dot(&ey)
            }
            LyapunovKind::Scaled => self.d_big_f(f, &s.x, xs)? + 0.5 * s.gamma * ey.norm_squared(),
            LyapunovKind::Perturbed => self.d_big_f(f, &s.x, xs)? + 0.5 * s.epsilon * ey.norm_squared(),
        };
        Ok(v)
    }
}

/// Lyapunov families of the saddle schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SaddleLyapunovKind {
    /// Bregman terms of the shifted `f, g` plus the `(v, q)` distances.
    #[serde(rename = "saddle")]
    Plain,
    /// `Plain` minus the two `alpha` cross terms.
    #[serde(rename = "saddle_alpha_implicit")]
    ImplicitAlpha,
    /// `ImplicitAlpha` minus `alpha (B(v - u*), q - p*)`.
    #[serde(rename = "saddle_alpha")]
    ExplicitAlpha,
}

pub fn eval_saddle(kind: SaddleLyapunovKind, pr: &SaddleProblem, s: &SaddleState, alpha: f64) -> Result<f64> {
    let (mf, mg) = (pr.coupling.mu_f, pr.coupling.mu_g);
    let (eu, ep) = (&s.u - &pr.u_star, &s.p - &pr.p_star);
    let (ev, eq) = (&s.v - &pr.u_star, &s.q - &pr.p_star);
    let mut e = bregman_divergence(pr.f.as_ref(), &s.u, &pr.u_star)? - 0.5 * mf * eu.norm_squared()
        + bregman_divergence(pr.g.as_ref(), &s.p, &pr.p_star)?
        - 0.5 * mg * ep.norm_squared()
        + 0.5 * mf * ev.norm_squared()
        + 0.5 * mg * eq.norm_squared();
    if kind == SaddleLyapunovKind::Plain {
        return Ok(e);
    }
    let gu = pr.f.gradient(&s.u) - pr.f.gradient(&pr.u_star) - &eu * mf;
    let gp = pr.g.gradient(&s.p) - pr.g.gradient(&pr.p_star) - &ep * mg;
    e -= alpha * (gu.dot(&ev) + gp.dot(&eq));
    if kind == SaddleLyapunovKind::ExplicitAlpha {
        e -= alpha * (&pr.coupling.b * &ev).dot(&eq);
    }
    Ok(e)
}

/// Continuous flows whose strong Lyapunov property is checked and integrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowId {
    /// `x' = -grad f(x)`.
    Gradient,
    /// `x' = y - x`, `y' = -(grad F(x) + N(y))/mu`.
    Vos,
    /// `x' = -grad f(x)/gamma`, `gamma' = -gamma`.
    ScaledGradient,
    /// `x' = y - x`, `y' = -(grad F(x) + N(y))/gamma`, `gamma' = -gamma`.
    ScaledVos,
    /// `x' = y - x`, `y' = x - y - (grad F(x) + N(y))/epsilon`.
    PerturbedVos,
}

impl FlowId {
    pub fn as_str(self) -> &'static str {
        match self {
            FlowId::Gradient => "gradient",
            FlowId::Vos => "vos",
            FlowId::ScaledGradient => "scaled_gradient",
            FlowId::ScaledVos => "scaled_vos",
            FlowId::PerturbedVos => "perturbed_vos",
        }
    }

    fn accepts(self, kind: LyapunovKind) -> bool {
        use LyapunovKind as K;
        match self {
            FlowId::Gradient => matches!(kind, K::Gap | K::Distance | K::Combined),
            FlowId::Vos => matches!(kind, K::VosF | K::Vosf),
            FlowId::ScaledGradient | FlowId::ScaledVos => kind == K::Scaled,
            FlowId::PerturbedVos => kind == K::Perturbed,
        }
    }

    fn needs_operator(self) -> bool {
        matches!(self, FlowId::Vos | FlowId::ScaledVos | FlowId::PerturbedVos)
    }
}

fn apply_op(n: &dyn MonotoneOperator, y: &Vector) -> Result<Vector> {
    n.apply(y)
        .ok_or_else(|| VosError::Capability("flow needs a single-valued operator".into()))
}

/// Both sides of the strong Lyapunov inequality `-<grad E, G> >= rhs` at one state.
fn strong_sides(
    flow: FlowId,
    spec: &LyapunovSpec,
    f: &dyn Objective,
    n: Option<&dyn MonotoneOperator>,
    s: &SchemeState,
) -> Result<(f64, f64, f64)> {
    let xs = spec.star()?;
    let e = spec.eval(f, s)?;
    let (x, y) = (&s.x, &s.y);
    let ex = x - xs;
    let ey = y - xs;
    let g = f.gradient(x);
    let out = match flow {
        FlowId::Gradient => {
            let (mu, l) = (f.mu(), f.lipschitz());
            let g2 = g.norm_squared();
            match spec.kind {
                LyapunovKind::Gap => (g2, mu * e + 0.5 * g2, g2 + mu * e.abs()),
                LyapunovKind::Distance => {
                    let lhs = ex.dot(&g);
                    (lhs, 2.0 * mu * l / (l + mu) * e + g2 / (l + mu), lhs.abs() + g2 / (l + mu) + mu * e)
                }
                _ => {
                    let lhs = g2 + spec.mu * ex.dot(&g);
                    (lhs, spec.mu * e + g2, g2 + (spec.mu * ex.dot(&g)).abs() + spec.mu * e.abs())
                }
            }
        }
        FlowId::ScaledGradient => {
            let gm = s.gamma;
            let g2 = g.norm_squared();
            let lhs = g2 / gm + ex.dot(&g) + 0.5 * gm * ex.norm_squared();
            (lhs, e + g2 / gm, g2 / gm + ex.dot(&g).abs() + 0.5 * gm * ex.norm_squared())
        }
        FlowId::Vos | FlowId::ScaledVos | FlowId::PerturbedVos => {
            let op = n.ok_or_else(|| VosError::Capability(format!("{} flow needs an operator", flow.as_str())))?;
            let ny = apply_op(op, y)?;
            let grad_big_f = &g - x * spec.shift;
            let dgx = spec.dgrad_big_f(f, x, xs);
            // x-gradient of E: grad F(x) - grad F(x*) for vos_F, grad f(x) - grad f(x*) for vos_f
            let ex_grad = if spec.kind == LyapunovKind::Vosf {
                &g - f.gradient(xs)
            } else {
                dgx.clone()
            };
            let weight = match flow {
                FlowId::Vos => spec.mu,
                FlowId::ScaledVos => s.gamma,
                _ => s.epsilon,
            };
            if !(weight > 0.0) {
                return Err(parameter("weight", weight, "flow parameter must be positive"));
            }
            let xdot = y - x;
            let mut ydot = -(&grad_big_f + &ny) / weight;
            if flow == FlowId::PerturbedVos {
                ydot += x - y;
            }
            let mut lhs = -ex_grad.dot(&xdot) - weight * ey.dot(&ydot);
            let mut scale = (ex_grad.dot(&xdot)).abs() + (weight * ey.dot(&ydot)).abs();
            if flow == FlowId::ScaledVos {
                // gamma' = -gamma against dE/dgamma = |y - x*|^2/2
                let t = 0.5 * s.gamma * ey.norm_squared();
                lhs += t;
                scale += t;
            }
            let rhs = match flow {
                FlowId::Vos if spec.kind == LyapunovKind::Vosf => e + 0.5 * spec.mu * (y - x).norm_squared(),
                FlowId::Vos => e + spec.d_big_f(f, xs, x)? + 0.5 * spec.mu * ey.norm_squared(),
                FlowId::ScaledVos => e,
                _ => {
                    e + spec.d_big_f(f, xs, x)? + 0.5 * s.epsilon * (x - y).norm_squared()
                        - 0.5 * s.epsilon * ex.norm_squared()
                }
            };
            (lhs, rhs, scale + e.abs())
        }
    };
    Ok(out)
}

fn sample_state(
    flow: FlowId,
    r: &mut rand_chacha::ChaCha8Rng,
    xs: &Vector,
    radius: f64,
    dir: Option<&Vector>,
) -> SchemeState {
    let n = xs.len();
    let along = |r: &mut rand_chacha::ChaCha8Rng| match dir {
        Some(d) => d * (radius * r.sample::<f64, _>(rand_distr::StandardNormal)),
        None => normal_vector(r, n) * radius,
    };
    let x = xs + along(r);
    let y = match flow {
        FlowId::Gradient | FlowId::ScaledGradient => x.clone(),
        _ => xs + along(r),
    };
    let gamma = (r.gen_range(-3.0..3.0_f64)).exp();
    let eps = (r.gen_range(-3.0..3.0_f64)).exp();
    SchemeState::new(x, y).with_gamma(gamma).with_epsilon(eps)
}

/// Hessian eigendirections at `at`, empty when no Hessian is available.
fn curvature_directions(f: &dyn Objective, at: &Vector) -> Vec<Vector> {
    f.hessian(at).map(|h| extreme_eigenvectors(&h)).unwrap_or_default()
}

/// Every fourth sample uses one of `dirs` instead of a random direction.
fn pick(dirs: &[Vector], i: usize) -> Option<&Vector> {
    (i % 4 == 3 && !dirs.is_empty()).then(|| &dirs[(i / 4) % dirs.len()])
}

/// Samples states around `x*` and checks the strong Lyapunov inequality of
/// `flow` for `spec` with relative slack `1e-10`.
pub fn check_strong_lyapunov(
    flow: FlowId,
    spec: &LyapunovSpec,
    f: &dyn Objective,
    n: Option<&dyn MonotoneOperator>,
    samples: usize,
    seed: u64,
) -> Result<PropertyReport> {
    if !flow.accepts(spec.kind) {
        return Err(VosError::Config(format!(
            "flow {} cannot be paired with Lyapunov kind {}",
            flow.as_str(),
            spec.kind.as_str()
        )));
    }
    if flow.needs_operator() && n.is_none() {
        return Err(VosError::Capability(format!("{} flow needs an operator", flow.as_str())));
    }
    let xs = spec.star()?.clone();
    let name = format!("strong lyapunov {} / {}", flow.as_str(), spec.kind.as_str());
    let mut rep = PropertyReport::new();
    let mut r = rng(seed);
    let dirs = curvature_directions(f, &xs);
    let at_star = sample_state(flow, &mut r, &xs, 0.0, None);
    let (lhs, rhs, sc) = strong_sides(flow, spec, f, n, &at_star)?;
    rep.record_le(&name, rhs, lhs, sc, IDENTITY_TOL);
    for i in 0..samples {
        let radius = [0.01, 1.0, 10.0][i % 3];
        let s = sample_state(flow, &mut r, &xs, radius, pick(&dirs, i));
        let (lhs, rhs, sc) = strong_sides(flow, spec, f, n, &s)?;
        rep.record_le(&name, rhs, lhs, sc, IDENTITY_TOL);
    }
    Ok(rep)
}

/// Cross-term bounds: for convex `L_F`-smooth `big_f` and `mu > 0`,
/// `|<y^ - y, grad F(x^) - grad F(x)>| <= sqrt(L_F/mu) (min D_F + (mu/2)|y - y^|^2)`;
/// with `skew`, also the variant carrying the `B_sym` weight and a random
/// `beta` in `(0, 1)`.
pub fn check_cross_term_lemma(
    big_f: &dyn Objective,
    mu: f64,
    skew: Option<&SkewDecomposition>,
    samples: usize,
    seed: u64,
) -> Result<PropertyReport> {
    if !(mu > 0.0) {
        return Err(parameter("mu", mu, "must be positive"));
    }
    let n = big_f.dim();
    let l_f = big_f.lipschitz();
    let mut rep = PropertyReport::new();
    let mut r = rng(seed);
    let dirs = curvature_directions(big_f, &Vector::zeros(n));
    for i in 0..samples {
        let x = normal_vector(&mut r, n) * 10.0;
        let xh = match pick(&dirs, i) {
            Some(d) => &x + d * (10.0 * r.sample::<f64, _>(rand_distr::StandardNormal)),
            None => normal_vector(&mut r, n) * 10.0,
        };
        let y = normal_vector(&mut r, n) * 10.0;
        let yh = normal_vector(&mut r, n) * 10.0;
        let dg = big_f.gradient(&xh) - big_f.gradient(&x);
        let dy = &yh - &y;
        let dmin = bregman_divergence(big_f, &x, &xh)?.min(bregman_divergence(big_f, &xh, &x)?);
        let cross = dy.dot(&dg);
        let rhs = (l_f / mu).sqrt() * (dmin + 0.5 * mu * dy.norm_squared());
        rep.record_le("cross term (over-relaxation)", cross.abs(), rhs, cross.abs() + rhs, IDENTITY_TOL);
        if let Some(d) = skew {
            check_dim(&y, d.dim())?;
            let beta: f64 = r.gen_range(0.01..0.99);
            let q = dy.dot(&(&d.b_sym * &dy));
            let lhs = (cross + 0.5 * q).abs() - 0.5 * d.l_bsym * dy.norm_squared();
            let rhs = (l_f / (beta * mu)).sqrt() * (dmin + 0.5 * beta * mu * dy.norm_squared());
            let sc = cross.abs() + q.abs() + d.l_bsym * dy.norm_squared() + rhs;
            rep.record_le("cross term (skew splitting)", lhs, rhs, sc, IDENTITY_TOL);
        }
    }
    if skew.is_none() {
        rep.record_vacuous("cross term (skew splitting)");
    }
    Ok(rep)
}

/// Samples `modified_alpha` at `alpha = sqrt(mu / L_F)` and checks it is nonnegative.
pub fn check_modified_nonnegative(
    f: &dyn Objective,
    mu: f64,
    x_star: &Vector,
    samples: usize,
    seed: u64,
) -> Result<PropertyReport> {
    let l_f = f.lipschitz() - mu;
    let alpha = if l_f > 0.0 { (mu / l_f).sqrt() } else { crate::solvers::DEFAULT_ALPHA_MAX };
    let spec = LyapunovSpec::new(LyapunovKind::ModifiedAlpha, Some(x_star.clone()))
        .with_mu(mu)
        .with_alpha(alpha);
    let vos = LyapunovSpec::new(LyapunovKind::VosF, Some(x_star.clone())).with_mu(mu);
    let mut rep = PropertyReport::new();
    let mut r = rng(seed);
    let dirs = curvature_directions(f, x_star);
    for i in 0..samples {
        let radius = [0.01, 1.0, 10.0][i % 3];
        let n = x_star.len();
        let x = match pick(&dirs, i) {
            Some(d) => x_star + d * (radius * r.sample::<f64, _>(rand_distr::StandardNormal)),
            None => x_star + normal_vector(&mut r, n) * radius,
        };
        let s = SchemeState::new(x, x_star + normal_vector(&mut r, n) * radius);
        let e = spec.eval(f, &s)?;
        let scale = vos.eval(f, &s)?;
        rep.record_le("modified lyapunov nonnegative", 0.0, e, scale, IDENTITY_TOL);
    }
    Ok(rep)
}

/// Sampled values of an integrated flow.
#[derive(Debug, Clone, Serialize)]
pub struct FlowTrajectory {
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    pub final_state: SchemeState,
    /// `|E_dt(t_end) - E_{dt/2}(t_end)|` relative to `E(t_end)`.
    pub halving_error: f64,
}

impl FlowTrajectory {
    /// Worst value of `E(t) / (E_0 e^{-ct} (1 + 10 dt)) - 1` over the samples;
    /// nonpositive means the exponential envelope holds.
    pub fn exponential_excess(&self, c: f64, dt: f64) -> f64 {
        let e0 = self.energy[0];
        self.times
            .iter()
            .zip(&self.energy)
            .map(|(t, e)| e / (e0 * (-c * t).exp() * (1.0 + 10.0 * dt)) - 1.0)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Worst value of `E(t) / (1/(c t + 1/E_0)) - 1`, the quadratic-decay envelope.
    pub fn algebraic_excess(&self, c: f64, dt: f64) -> f64 {
        let e0 = self.energy[0];
        self.times
            .iter()
            .zip(&self.energy)
            .map(|(t, e)| e / ((1.0 + 10.0 * dt) / (c * t + 1.0 / e0)) - 1.0)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

struct FlowField<'a> {
    flow: FlowId,
    f: &'a dyn Objective,
    n: Option<&'a dyn MonotoneOperator>,
    shift: f64,
    mu: f64,
    epsilon: f64,
    dim: usize,
}

impl FlowField<'_> {
    /// Packed state `(x, y, gamma)`.
    fn eval(&self, z: &Vector) -> Result<Vector> {
        let d = self.dim;
        let x = z.rows(0, d).into_owned();
        let y = z.rows(d, d).into_owned();
        let gamma = z[2 * d];
        let mut out = Vector::zeros(2 * d + 1);
        match self.flow {
            FlowId::Gradient => {
                out.rows_mut(0, d).copy_from(&(-self.f.gradient(&x)));
            }
            FlowId::ScaledGradient => {
                out.rows_mut(0, d).copy_from(&(-self.f.gradient(&x) / gamma));
                out[2 * d] = -gamma;
            }
            _ => {
                let op = self.n.ok_or_else(|| VosError::Capability("flow needs an operator".into()))?;
                let drive = self.f.gradient(&x) - &x * self.shift + apply_op(op, &y)?;
                out.rows_mut(0, d).copy_from(&(&y - &x));
                let ydot = match self.flow {
                    FlowId::Vos => -drive / self.mu,
                    FlowId::ScaledVos => -drive / gamma,
                    _ => &x - &y - drive / self.epsilon,
                };
                out.rows_mut(d, d).copy_from(&ydot);
                if self.flow == FlowId::ScaledVos {
                    out[2 * d] = -gamma;
                }
            }
        }
        Ok(out)
    }
}

fn unpack(z: &Vector, d: usize, flow: FlowId, epsilon: f64) -> SchemeState {
    let x = z.rows(0, d).into_owned();
    let y = match flow {
        FlowId::Gradient | FlowId::ScaledGradient => x.clone(),
        _ => z.rows(d, d).into_owned(),
    };
    SchemeState::new(x, y).with_gamma(z[2 * d]).with_epsilon(epsilon)
}

fn rk4(field: &FlowField, spec: &LyapunovSpec, init: &Vector, t_end: f64, dt: f64) -> Result<(Vec<f64>, Vec<f64>, Vector)> {
    let steps = (t_end / dt).round() as usize;
    let d = field.dim;
    let mut z = init.clone();
    let mut times = Vec::with_capacity(steps + 1);
    let mut energy = Vec::with_capacity(steps + 1);
    times.push(0.0);
    energy.push(spec.eval(field.f, &unpack(&z, d, field.flow, field.epsilon))?);
    for k in 0..steps {
        let k1 = field.eval(&z)?;
        let k2 = field.eval(&(&z + &k1 * (0.5 * dt)))?;
        let k3 = field.eval(&(&z + &k2 * (0.5 * dt)))?;
        let k4 = field.eval(&(&z + &k3 * dt))?;
        z += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        let t = (k + 1) as f64 * dt;
        if !crate::linalg::is_finite(&z) {
            return Err(VosError::Integration {
                time: t,
                reason: "non-finite state".into(),
            });
        }
        times.push(t);
        energy.push(spec.eval(field.f, &unpack(&z, d, field.flow, field.epsilon))?);
    }
    Ok((times, energy, z))
}

/// Fixed-step RK4 integration of `flow` from `init`, recording `spec` at every
/// step. The run is repeated at `dt/2` and must agree on `E(t_end)` to `1e-6`.
pub fn integrate_flow(
    flow: FlowId,
    spec: &LyapunovSpec,
    f: &dyn Objective,
    n: Option<&dyn MonotoneOperator>,
    init: &SchemeState,
    t_end: f64,
    dt: f64,
) -> Result<FlowTrajectory> {
    if !(dt > 0.0) || !(t_end >= dt) {
        return Err(parameter("dt", dt, "need 0 < dt <= t_end"));
    }
    if flow.needs_operator() && n.is_none() {
        return Err(VosError::Capability(format!("{} flow needs an operator", flow.as_str())));
    }
    if matches!(flow, FlowId::ScaledGradient | FlowId::ScaledVos) && !(init.gamma > 0.0) {
        return Err(parameter("gamma", init.gamma, "scaled flows need gamma > 0"));
    }
    let d = f.dim();
    check_dim(&init.x, d)?;
    let field = FlowField {
        flow,
        f,
        n,
        shift: spec.shift,
        mu: spec.mu,
        epsilon: init.epsilon,
        dim: d,
    };
    if flow == FlowId::Vos && !(spec.mu > 0.0) {
        return Err(parameter("mu", spec.mu, "vos flow needs mu > 0"));
    }
    if flow == FlowId::PerturbedVos && !(init.epsilon > 0.0) {
        return Err(parameter("epsilon", init.epsilon, "perturbed flow needs epsilon > 0"));
    }
    let mut z0 = Vector::zeros(2 * d + 1);
    z0.rows_mut(0, d).copy_from(&init.x);
    z0.rows_mut(d, d).copy_from(&init.y);
    z0[2 * d] = init.gamma;
    let (times, energy, z) = rk4(&field, spec, &z0, t_end, dt)?;
    let (_, fine, _) = rk4(&field, spec, &z0, t_end, 0.5 * dt)?;
    let (a, b) = (*energy.last().unwrap_or(&0.0), *fine.last().unwrap_or(&0.0));
    let halving_error = (a - b).abs() / (a.abs().max(b.abs()) + 1e-14 * energy[0].abs()).max(f64::MIN_POSITIVE);
    if halving_error > 1e-6 {
        return Err(VosError::Integration {
            time: t_end,
            reason: format!("dt and dt/2 runs disagree by {halving_error:e}"),
        });
    }
    Ok(FlowTrajectory {
        times,
        energy,
        final_state: unpack(&z, d, flow, init.epsilon),
        halving_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{FnObjective, ScaledIdentity};
    use crate::problems::build_quadratic;

    #[test]
    fn zero_at_solution() {
        let q = build_quadratic(&[1.0, 3.0, 10.0], 1).unwrap();
        let xs = q.x_star.clone().unwrap();
        let s = SchemeState::at(xs.clone()).with_gamma(2.0).with_epsilon(0.5);
        for kind in [
            LyapunovKind::Gap,
            LyapunovKind::Distance,
            LyapunovKind::Combined,
            LyapunovKind::VosF,
            LyapunovKind::Vosf,
            LyapunovKind::ModifiedAlpha,
            LyapunovKind::AgssAlpha,
            LyapunovKind::Scaled,
            LyapunovKind::Perturbed,
        ] {
            let spec = LyapunovSpec::new(kind, Some(xs.clone())).with_mu(1.0).with_alpha(0.3);
            assert!(spec.eval(q.objective.as_ref(), &s).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn vos_quadratic_closed_form() {
        let q = build_quadratic(&[1.0, 10.0], 3).unwrap();
        let xs = q.x_star.clone().unwrap();
        let x = &xs + Vector::from_row_slice(&[1.0, -2.0]);
        let y = &xs + Vector::from_row_slice(&[0.5, 0.5]);
        let s = SchemeState::new(x.clone(), y.clone());
        let spec = LyapunovSpec::new(LyapunovKind::VosF, Some(xs.clone())).with_mu(1.0);
        let ex = &x - &xs;
        let a_f = &q.objective.a - Matrix::identity(2, 2);
        let expect = 0.5 * ex.dot(&(&a_f * &ex)) + 0.5 * (&y - &xs).norm_squared();
        assert!((spec.eval(q.objective.as_ref(), &s).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn mismatched_pairing_is_config_error() {
        let q = build_quadratic(&[1.0, 10.0], 3).unwrap();
        let spec = LyapunovSpec::new(LyapunovKind::Gap, q.x_star.clone());
        let e = check_strong_lyapunov(FlowId::Vos, &spec, q.objective.as_ref(), None, 5, 0);
        assert!(matches!(e, Err(VosError::Config(_))));
    }

    #[test]
    fn gamma_flow_decays_exactly() {
        let f = FnObjective::new(1, 0.0, 1.0, |x| 0.5 * x.norm_squared(), |x| x.clone());
        let spec = LyapunovSpec::new(LyapunovKind::Scaled, Some(Vector::zeros(1)));
        let init = SchemeState::at(Vector::from_row_slice(&[1.0])).with_gamma(1.0);
        let tr = integrate_flow(FlowId::ScaledGradient, &spec, &f, None, &init, 1.0, 1e-3).unwrap();
        assert!((tr.final_state.gamma - (-1.0f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn gradient_flow_on_half_square() {
        let f = FnObjective::new(1, 1.0, 1.0, |x| 0.5 * x.norm_squared(), |x| x.clone());
        let spec = LyapunovSpec::new(LyapunovKind::Gap, Some(Vector::zeros(1)));
        let init = SchemeState::at(Vector::from_row_slice(&[1.0]));
        let tr = integrate_flow(FlowId::Gradient, &spec, &f, None, &init, 2.0, 1e-3).unwrap();
        let e_end = *tr.energy.last().unwrap();
        assert!((e_end - 0.5 * (-4.0f64).exp()).abs() < 1e-10);
        assert!(tr.exponential_excess(1.0, 1e-3) <= 0.0);
    }

    #[test]
    fn vos_flow_strong_property_on_quadratic() {
        let q = build_quadratic(&[1.0, 4.0, 10.0], 5).unwrap();
        let n = ScaledIdentity { n: 3, mu: 1.0 };
        for kind in [LyapunovKind::VosF, LyapunovKind::Vosf] {
            let spec = LyapunovSpec::new(kind, q.x_star.clone()).with_mu(1.0);
            let rep = check_strong_lyapunov(FlowId::Vos, &spec, q.objective.as_ref(), Some(&n), 300, 1).unwrap();
            assert!(rep.passed(), "{rep:?}");
        }
    }
}
