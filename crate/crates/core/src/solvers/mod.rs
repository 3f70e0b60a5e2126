//! Discrete schemes behind a uniform stepper interface, their step-size
//! formulas, and the traced driver.

mod convex;
mod runner;
mod saddle;
mod skew;
mod smooth;

use serde::{Deserialize, Serialize};

pub use convex::{
    homotopy_initial_length, homotopy_restart, homotopy_work_bound, perturbed_epc_step, scaled_epc_step,
    scaled_ppa_step, HomotopyRun, OuterRecord, ScaledPolicy,
};
pub use runner::{
    hb_coefficients, hb_initial_shadow, hb_shadow, run_scheme, RunOptions, RunOutcome, SchemeSetup,
    DEFAULT_EPSILON, DEFAULT_EPSILON_TARGET, DEFAULT_PPA_STEP,
};
pub use saddle::{saddle_explicit_step, saddle_implicit_step, SaddleState};
pub use skew::{agss_explicit_step, agss_implicit_step, hss_step, HssSplitting};
pub use smooth::{
    aor_hb_step, aor_vos_step, composite_aor_step, composite_epc_step, epc_predictor, epc_vos_step,
    extra_gradient_step, gd_step, ppa_step,
};

use crate::error::{Result, VosError};
use crate::linalg::Vector;
use crate::problems::SaddleProblem;

/// Step size used when the smooth part of the splitting is affine (`L_F = 0`).
pub const DEFAULT_ALPHA_MAX: f64 = 1e6;
/// Tolerance of the scalar solve behind the max-min step sizes.
pub const BISECTION_TOL: f64 = 1e-12;

/// Iterate of a two-variable scheme; single-variable schemes keep `y = x`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeState {
    pub x: Vector,
    pub y: Vector,
    pub gamma: f64,
    pub epsilon: f64,
    pub prev_gradient: Option<Vector>,
    pub prev_x: Option<Vector>,
    pub iteration: usize,
}

impl SchemeState {
    pub fn new(x: Vector, y: Vector) -> Self {
        Self {
            x,
            y,
            gamma: 0.0,
            epsilon: 0.0,
            prev_gradient: None,
            prev_x: None,
            iteration: 0,
        }
    }

    pub fn at(x: Vector) -> Self {
        Self::new(x.clone(), x)
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub(crate) fn advanced(&self, x: Vector, y: Vector) -> Self {
        Self {
            x,
            y,
            gamma: self.gamma,
            epsilon: self.epsilon,
            prev_gradient: None,
            prev_x: None,
            iteration: self.iteration + 1,
        }
    }

    pub fn is_finite(&self) -> bool {
        crate::linalg::is_finite(&self.x)
            && crate::linalg::is_finite(&self.y)
            && self.gamma.is_finite()
            && self.epsilon.is_finite()
    }
}

/// Stable scheme identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SchemeId {
    #[serde(rename = "gd")]
    Gd,
    #[serde(rename = "ppa")]
    Ppa,
    #[serde(rename = "aor-vos")]
    AorVos,
    #[serde(rename = "aor-hb")]
    AorHb,
    #[serde(rename = "epc-vos")]
    EpcVos,
    #[serde(rename = "extra-grad")]
    ExtraGrad,
    #[serde(rename = "composite-aor")]
    CompositeAor,
    #[serde(rename = "composite-epc")]
    CompositeEpc,
    #[serde(rename = "agss-implicit")]
    AgssImplicit,
    #[serde(rename = "agss-explicit")]
    AgssExplicit,
    #[serde(rename = "hss")]
    Hss,
    #[serde(rename = "saddle-implicit")]
    SaddleImplicit,
    #[serde(rename = "saddle-explicit")]
    SaddleExplicit,
    #[serde(rename = "scaled-ppa")]
    ScaledPpa,
    #[serde(rename = "scaled-epc")]
    ScaledEpc,
    #[serde(rename = "perturbed-epc")]
    PerturbedEpc,
    #[serde(rename = "homotopy")]
    Homotopy,
}

impl SchemeId {
    pub const ALL: [SchemeId; 17] = [
        SchemeId::Gd,
        SchemeId::Ppa,
        SchemeId::AorVos,
        SchemeId::AorHb,
        SchemeId::EpcVos,
        SchemeId::ExtraGrad,
        SchemeId::CompositeAor,
        SchemeId::CompositeEpc,
        SchemeId::AgssImplicit,
        SchemeId::AgssExplicit,
        SchemeId::Hss,
        SchemeId::SaddleImplicit,
        SchemeId::SaddleExplicit,
        SchemeId::ScaledPpa,
        SchemeId::ScaledEpc,
        SchemeId::PerturbedEpc,
        SchemeId::Homotopy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeId::Gd => "gd",
            SchemeId::Ppa => "ppa",
            SchemeId::AorVos => "aor-vos",
            SchemeId::AorHb => "aor-hb",
            SchemeId::EpcVos => "epc-vos",
            SchemeId::ExtraGrad => "extra-grad",
            SchemeId::CompositeAor => "composite-aor",
            SchemeId::CompositeEpc => "composite-epc",
            SchemeId::AgssImplicit => "agss-implicit",
            SchemeId::AgssExplicit => "agss-explicit",
            SchemeId::Hss => "hss",
            SchemeId::SaddleImplicit => "saddle-implicit",
            SchemeId::SaddleExplicit => "saddle-explicit",
            SchemeId::ScaledPpa => "scaled-ppa",
            SchemeId::ScaledEpc => "scaled-epc",
            SchemeId::PerturbedEpc => "perturbed-epc",
            SchemeId::Homotopy => "homotopy",
        }
    }
}

impl std::fmt::Display for SchemeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SchemeId {
    type Err = VosError;
    fn from_str(s: &str) -> Result<Self> {
        SchemeId::ALL
            .iter()
            .copied()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| VosError::Config(format!("unknown scheme id `{s}`")))
    }
}

/// Named step-size sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceFormula {
    /// `alpha_k = 2/(k+1)` with `gamma_k = 4 L_F/(k+1)^2`.
    TwoOverKPlusOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum StepSizePolicy {
    Fixed {
        alpha: f64,
    },
    #[default]
    TheoremOptimal,
    Sequence {
        formula: SequenceFormula,
    },
}

/// `sqrt(mu / l_f)`, capped at `alpha_max` (also when `l_f = 0`).
pub fn vos_alpha(mu: f64, l_f: f64, alpha_max: f64) -> f64 {
    if l_f <= 0.0 {
        return alpha_max;
    }
    (mu / l_f).sqrt().min(alpha_max)
}

/// `(gamma, beta)` of the three-term recursion at `alpha = sqrt(mu/(L-mu))`.
pub fn aor_hb_coefficients(mu: f64, l: f64) -> (f64, f64) {
    let gamma = 1.0 / (l + 2.0 * (mu * (l - mu)).max(0.0).sqrt());
    (gamma, l * gamma)
}

/// `max over b in (0,1) of min(a sqrt(b), c (1-b))`, attained where the
/// increasing and decreasing branches cross.
pub fn max_min_step(a: f64, c: f64) -> f64 {
    if !c.is_finite() {
        return a;
    }
    if !a.is_finite() {
        return c;
    }
    let h = |b: f64| a * b.sqrt() - c * (1.0 - b);
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if h(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let b = 0.5 * (lo + hi);
    (a * b.sqrt()).min(c * (1.0 - b))
}

/// Step size of the explicit skew scheme.
pub fn agss_explicit_alpha(mu: f64, l: f64, l_bsym: f64) -> f64 {
    let a = vos_alpha(mu, l - mu, DEFAULT_ALPHA_MAX);
    let c = if l_bsym > 0.0 { mu / l_bsym } else { f64::INFINITY };
    max_min_step(a, c)
}

fn saddle_base_alpha(p: &SaddleProblem) -> f64 {
    let (f, g) = (&p.f, &p.g);
    vos_alpha(f.mu(), f.lipschitz() - f.mu(), DEFAULT_ALPHA_MAX)
        .min(vos_alpha(g.mu(), g.lipschitz() - g.mu(), DEFAULT_ALPHA_MAX))
}

pub fn saddle_implicit_alpha(p: &SaddleProblem) -> f64 {
    saddle_base_alpha(p)
}

pub fn saddle_explicit_alpha(p: &SaddleProblem) -> f64 {
    let c = &p.coupling;
    let cc = if c.b_norm > 0.0 {
        (c.mu_f * c.mu_g).sqrt() / c.b_norm
    } else {
        f64::INFINITY
    };
    max_min_step(saddle_base_alpha(p), cc)
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(crate::error::parameter("alpha", alpha, "step size must be positive"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip() {
        for id in SchemeId::ALL {
            assert_eq!(id.as_str().parse::<SchemeId>().unwrap(), id);
            let js = serde_json::to_string(&id).unwrap();
            assert_eq!(js, format!("\"{}\"", id.as_str()));
        }
        assert!("nope".parse::<SchemeId>().is_err());
    }

    #[test]
    fn hb_coefficients_match_substitution() {
        let (mu, l) = (1.0_f64, 100.0_f64);
        let a: f64 = (mu / (l - mu)).sqrt();
        let (g, b) = aor_hb_coefficients(mu, l);
        assert!((g - a * a / ((1.0 + a).powi(2) * mu)).abs() < 1e-15);
        assert!((b - (1.0 + a * a) / (1.0 + a).powi(2)).abs() < 1e-15);
    }

    #[test]
    fn max_min_against_grid() {
        for (a, c) in [(1.0 / 3.0, 0.2), (0.1, 5.0), (2.0, 0.01)] {
            let best = (1..100_000)
                .map(|i| {
                    let b = i as f64 / 100_000.0;
                    (a * f64::sqrt(b)).min(c * (1.0 - b))
                })
                .fold(0.0, f64::max);
            let got = max_min_step(a, c);
            assert!(got >= best - 1e-9 && got <= best + 1e-5, "{a} {c}: {got} vs {best}");
        }
        assert_eq!(max_min_step(0.5, f64::INFINITY), 0.5);
    }

    #[test]
    fn degenerate_smoothness_caps_step() {
        assert_eq!(vos_alpha(1.0, 0.0, DEFAULT_ALPHA_MAX), DEFAULT_ALPHA_MAX);
        assert_eq!(vos_alpha(1.0, 99.0, 1e6), (1.0f64 / 99.0).sqrt());
    }
}
