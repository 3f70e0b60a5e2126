//! Trace records and their CSV / JSON-lines persistence, rate fits, and the
//! comparison of measured rates against the theoretical ones.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, VosError};
use crate::solvers::{agss_explicit_alpha, max_min_step, vos_alpha, SchemeId, DEFAULT_ALPHA_MAX};

/// CSV header, also the JSON-lines key order.
pub const TRACE_COLUMNS: [&str; 10] = [
    "k",
    "lyap_primary",
    "lyap_modified",
    "f_gap",
    "grad_norm",
    "dist_to_star",
    "gamma",
    "epsilon",
    "alpha",
    "wall_ns",
];

pub const DEFAULT_BURN_IN: usize = 5;
/// Relative tolerance on contraction factors.
pub const FACTOR_TOL: f64 = 0.01;
/// Relative tolerance on power-law exponents.
pub const EXPONENT_TOL: f64 = 0.10;

/// One logged iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    pub lyap_primary: f64,
    pub lyap_modified: Option<f64>,
    pub f_gap: Option<f64>,
    pub grad_norm: f64,
    pub dist_to_star: Option<f64>,
    pub gamma: Option<f64>,
    pub epsilon: Option<f64>,
    pub alpha: f64,
    pub wall_ns: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TraceFormat {
    #[default]
    Csv,
    Jsonl,
}

impl std::str::FromStr for TraceFormat {
    type Err = VosError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(TraceFormat::Csv),
            "jsonl" => Ok(TraceFormat::Jsonl),
            _ => Err(VosError::Config(format!("unknown trace format `{s}`"))),
        }
    }
}

impl TraceFormat {
    /// `jsonl` for `.jsonl`/`.json` extensions, CSV otherwise.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => TraceFormat::Jsonl,
            _ => TraceFormat::Csv,
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> VosError {
    VosError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn record_fields(r: &TraceRecord) -> [String; 10] {
    [
        r.k.to_string(),
        fmt_f64(r.lyap_primary),
        fmt_opt(r.lyap_modified),
        fmt_opt(r.f_gap),
        fmt_f64(r.grad_norm),
        fmt_opt(r.dist_to_star),
        fmt_opt(r.gamma),
        fmt_opt(r.epsilon),
        fmt_f64(r.alpha),
        r.wall_ns.to_string(),
    ]
}

/// Writes `trace` as CSV to any writer.
pub fn write_csv<W: Write>(trace: &[TraceRecord], w: W) -> std::io::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(TRACE_COLUMNS)?;
    for r in trace {
        wr.write_record(record_fields(r))?;
    }
    wr.flush()
}

/// Writes `trace` as JSON lines to any writer.
pub fn write_jsonl<W: Write>(trace: &[TraceRecord], mut w: W) -> std::io::Result<()> {
    for r in trace {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn write_trace(trace: &[TraceRecord], path: &Path, format: TraceFormat) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let w = BufWriter::new(file);
    match format {
        TraceFormat::Csv => write_csv(trace, w),
        TraceFormat::Jsonl => write_jsonl(trace, w),
    }
    .map_err(|e| io_err(path, e))
}

fn parse_err(line: usize, reason: impl Into<String>) -> VosError {
    VosError::Parse {
        line,
        reason: reason.into(),
    }
}

fn parse_f64(s: &str, line: usize, col: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| parse_err(line, format!("column {col}: {e}")))
}

fn parse_opt(s: &str, line: usize, col: &str) -> Result<Option<f64>> {
    if s.trim().is_empty() {
        Ok(None)
    } else {
        parse_f64(s, line, col).map(Some)
    }
}

fn parse_usize<T: std::str::FromStr>(s: &str, line: usize, col: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    s.trim()
        .parse::<T>()
        .map_err(|e| parse_err(line, format!("column {col}: {e}")))
}

/// Parses CSV written by [`write_csv`].
pub fn read_csv<R: std::io::Read>(r: R) -> Result<Vec<TraceRecord>> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header = rd.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if header.iter().ne(TRACE_COLUMNS.iter().copied()) {
        return Err(parse_err(1, format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut out = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        if rec.len() != TRACE_COLUMNS.len() {
            return Err(parse_err(line, format!("expected 10 fields, got {}", rec.len())));
        }
        out.push(TraceRecord {
            k: parse_usize(&rec[0], line, "k")?,
            lyap_primary: parse_f64(&rec[1], line, "lyap_primary")?,
            lyap_modified: parse_opt(&rec[2], line, "lyap_modified")?,
            f_gap: parse_opt(&rec[3], line, "f_gap")?,
            grad_norm: parse_f64(&rec[4], line, "grad_norm")?,
            dist_to_star: parse_opt(&rec[5], line, "dist_to_star")?,
            gamma: parse_opt(&rec[6], line, "gamma")?,
            epsilon: parse_opt(&rec[7], line, "epsilon")?,
            alpha: parse_f64(&rec[8], line, "alpha")?,
            wall_ns: parse_usize(&rec[9], line, "wall_ns")?,
        });
    }
    Ok(out)
}

/// Parses JSON lines written by [`write_jsonl`]; blank lines are skipped.
pub fn read_jsonl<R: std::io::Read>(r: R) -> Result<Vec<TraceRecord>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| parse_err(line_no, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| parse_err(line_no, e.to_string()))?);
    }
    Ok(out)
}

pub fn read_trace(path: &Path, format: TraceFormat) -> Result<Vec<TraceRecord>> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    match format {
        TraceFormat::Csv => read_csv(file),
        TraceFormat::Jsonl => read_jsonl(file),
    }
}

/// Result of a log-linear fit of a geometrically decaying series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeometricFit {
    pub factor: f64,
    /// Largest `s[k+1]/s[k]` over the whole supplied series.
    pub max_step_ratio: f64,
    pub points: usize,
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn check_positive(series: &[f64]) -> Result<()> {
    if let Some((i, v)) = series.iter().enumerate().find(|(_, v)| !(**v > 0.0) || !v.is_finite()) {
        return Err(VosError::Fit(format!(
            "value {v:e} at index {i} is not positive; truncate at the floating-point floor first"
        )));
    }
    Ok(())
}

/// Cuts the series at the first value below `100 eps s[0]`.
pub fn truncate_at_floor(series: &[f64]) -> &[f64] {
    let Some(&first) = series.first() else {
        return series;
    };
    let floor = 100.0 * f64::EPSILON * first.abs();
    let end = series.iter().position(|v| !(*v > floor)).unwrap_or(series.len());
    &series[..end]
}

/// Least-squares slope of `ln s_k` against `k` for `k >= burn_in`, exponentiated.
pub fn fit_geometric_rate(series: &[f64], burn_in: usize) -> Result<GeometricFit> {
    let ks: Vec<usize> = (0..series.len()).collect();
    fit_geometric_points(&ks, series, burn_in)
}

/// [`fit_geometric_rate`] for a series sampled at iterations `ks`; step
/// ratios are normalized to one iteration.
pub fn fit_geometric_points(ks: &[usize], series: &[f64], burn_in: usize) -> Result<GeometricFit> {
    if ks.len() != series.len() {
        return Err(VosError::Fit("iteration and value counts differ".into()));
    }
    if series.len() < burn_in + 2 {
        return Err(VosError::Fit(format!(
            "series of length {} too short for burn-in {burn_in}",
            series.len()
        )));
    }
    check_positive(series)?;
    let xs: Vec<f64> = ks[burn_in..].iter().map(|&k| k as f64).collect();
    let ys: Vec<f64> = series[burn_in..].iter().map(|v| v.ln()).collect();
    let max_step_ratio = ks
        .windows(2)
        .zip(series.windows(2))
        .map(|(k, v)| (v[1] / v[0]).powf(1.0 / (k[1] - k[0]).max(1) as f64))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(GeometricFit {
        factor: least_squares_slope(&xs, &ys).exp(),
        max_step_ratio,
        points: xs.len(),
    })
}

/// Slope of `ln y` against `ln x`.
pub fn fit_power_points(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(VosError::Fit("need at least two paired points".into()));
    }
    check_positive(xs)?;
    check_positive(ys)?;
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    Ok(least_squares_slope(&lx, &ly))
}

/// Slope of `ln s_k` against `ln k` over `k >= max(burn_in, 1)`.
pub fn fit_power_rate(series: &[f64], burn_in: usize) -> Result<f64> {
    let start = burn_in.max(1);
    if series.len() < start + 2 {
        return Err(VosError::Fit(format!(
            "series of length {} too short for burn-in {burn_in}",
            series.len()
        )));
    }
    let xs: Vec<f64> = (start..series.len()).map(|k| k as f64).collect();
    fit_power_points(&xs, &series[start..])
}

/// Constants from which theoretical rates are computed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    pub mu: f64,
    #[serde(rename = "L")]
    pub lipschitz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_bsym: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_g: Option<f64>,
    #[serde(default, rename = "L_g", skip_serializing_if = "Option::is_none")]
    pub l_g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_norm: Option<f64>,
    /// Step size actually used, when it differs from the theorem's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

/// What a theorem predicts for a scheme's primary series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum TheoremRate {
    /// Per-step contraction factor of the primary Lyapunov value.
    Factor(f64),
    /// Power-law exponent of the primary value against `k`.
    Exponent(f64),
    /// Linear contraction down to a perturbation floor.
    PerturbedFactor(f64),
}

/// Theoretical rate of `scheme` on a problem with the given constants.
pub fn theorem_rate(scheme: SchemeId, c: &ProblemConstants) -> Result<TheoremRate> {
    let (mu, l) = (c.mu, c.lipschitz);
    let need_mu = || -> Result<()> {
        if mu > 0.0 {
            Ok(())
        } else {
            Err(VosError::Config(format!("{scheme} needs mu > 0 for its rate")))
        }
    };
    let aor = || vos_alpha(mu, l - mu, DEFAULT_ALPHA_MAX);
    let rate = match scheme {
        SchemeId::Gd => {
            need_mu()?;
            let a = c.alpha.unwrap_or(2.0 / (l + mu));
            TheoremRate::Factor(1.0 - mu * a)
        }
        SchemeId::Ppa => {
            need_mu()?;
            let t = c.alpha.ok_or_else(|| VosError::Config("ppa rate needs the step `alpha`".into()))?;
            TheoremRate::Factor(1.0 / (1.0 + mu * t))
        }
        SchemeId::AorVos
        | SchemeId::AorHb
        | SchemeId::EpcVos
        | SchemeId::CompositeAor
        | SchemeId::CompositeEpc
        | SchemeId::AgssImplicit => {
            need_mu()?;
            TheoremRate::Factor(1.0 / (1.0 + c.alpha.unwrap_or_else(aor)))
        }
        SchemeId::ExtraGrad => {
            need_mu()?;
            TheoremRate::Factor(1.0 / (1.0 + c.alpha.unwrap_or((mu / l).sqrt())))
        }
        SchemeId::AgssExplicit => {
            need_mu()?;
            let lb = c.l_bsym.unwrap_or(0.0);
            TheoremRate::Factor(1.0 / (1.0 + c.alpha.unwrap_or_else(|| agss_explicit_alpha(mu, l, lb))))
        }
        SchemeId::Hss => {
            need_mu()?;
            let k = (l / mu).sqrt();
            TheoremRate::Factor((k - 1.0) / (k + 1.0))
        }
        SchemeId::SaddleImplicit | SchemeId::SaddleExplicit => {
            need_mu()?;
            let mg = c.mu_g.ok_or_else(|| VosError::Config("saddle rates need mu_g".into()))?;
            let lg = c.l_g.ok_or_else(|| VosError::Config("saddle rates need L_g".into()))?;
            let base = aor().min(vos_alpha(mg, lg - mg, DEFAULT_ALPHA_MAX));
            let a = match (scheme, c.alpha) {
                (_, Some(a)) => a,
                (SchemeId::SaddleImplicit, None) => base,
                _ => {
                    let bn = c.b_norm.unwrap_or(0.0);
                    let cc = if bn > 0.0 { (mu * mg).sqrt() / bn } else { f64::INFINITY };
                    max_min_step(base, cc)
                }
            };
            TheoremRate::Factor(1.0 / (1.0 + a))
        }
        SchemeId::ScaledPpa => {
            let a = c.alpha.ok_or_else(|| VosError::Config("scaled-ppa rate needs `alpha`".into()))?;
            TheoremRate::Factor(1.0 / (1.0 + a))
        }
        SchemeId::ScaledEpc | SchemeId::Homotopy => TheoremRate::Exponent(-2.0),
        SchemeId::PerturbedEpc => {
            let a = c
                .alpha
                .ok_or_else(|| VosError::Config("perturbed-epc rate needs `alpha`".into()))?;
            TheoremRate::PerturbedFactor(1.0 / (1.0 + a))
        }
    };
    Ok(rate)
}

/// Measured against theoretical rate for one trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub scheme: String,
    pub measured: f64,
    pub theorem: f64,
    /// Positive when the measured rate is inside the tolerance band.
    pub margin: f64,
    pub pass: bool,
    /// `factor` or `exponent`.
    pub quantity: &'static str,
    /// Worst single-step ratio, for contraction factors.
    pub max_step_ratio: Option<f64>,
    pub points: usize,
}

/// The value a rate theorem contracts: the modified Lyapunov value when
/// logged, the primary one otherwise.
pub fn rate_value(r: &TraceRecord) -> f64 {
    r.lyap_modified.unwrap_or(r.lyap_primary)
}

/// Fits the [`rate_value`] series of `trace` and compares with
/// [`theorem_rate`]. Contraction factors pass only when both the fitted
/// factor and the worst single step are within `1%`; exponents use `10%`,
/// one-sided for the scaled scheme and two-sided for the homotopy restart.
pub fn compare_to_theorem(trace: &[TraceRecord], scheme: SchemeId, c: &ProblemConstants) -> Result<RateReport> {
    let rate = theorem_rate(scheme, c)?;
    let series: Vec<f64> = trace.iter().map(rate_value).collect();
    let name = scheme.as_str().to_string();
    match rate {
        TheoremRate::Factor(th) => {
            let s = truncate_at_floor(&series);
            let ks: Vec<usize> = trace[..s.len()].iter().map(|r| r.k).collect();
            let burn = DEFAULT_BURN_IN.min(s.len().saturating_sub(2));
            let fit = fit_geometric_points(&ks, s, burn)?;
            let limit = th * (1.0 + FACTOR_TOL);
            let margin = (limit - fit.factor).min(limit - fit.max_step_ratio);
            Ok(RateReport {
                scheme: name,
                measured: fit.factor,
                theorem: th,
                margin,
                pass: margin >= 0.0,
                quantity: "factor",
                max_step_ratio: Some(fit.max_step_ratio),
                points: fit.points,
            })
        }
        TheoremRate::PerturbedFactor(th) => {
            // E_k <= th^k E_0 + eps R^2 with R the largest distance seen
            let e0 = series.first().copied().unwrap_or(0.0);
            let r2 = trace
                .iter()
                .filter_map(|r| r.dist_to_star)
                .fold(0.0_f64, f64::max)
                .powi(2);
            let mut worst = 0.0_f64;
            for r in trace {
                let eps = r.epsilon.unwrap_or(0.0);
                let bound = th.powi(r.k as i32) * e0 + eps * r2;
                if bound > 0.0 {
                    worst = worst.max(r.lyap_primary / bound);
                }
            }
            let limit = 1.0 + FACTOR_TOL;
            Ok(RateReport {
                scheme: name,
                measured: worst,
                theorem: 1.0,
                margin: limit - worst,
                pass: worst <= limit,
                quantity: "bound ratio",
                max_step_ratio: None,
                points: trace.len(),
            })
        }
        TheoremRate::Exponent(th) => {
            let (measured, points) = if scheme == SchemeId::Homotopy {
                let pts: Vec<(f64, f64)> = trace
                    .iter()
                    .filter(|r| r.k > 0)
                    .map(|r| (r.k as f64, r.lyap_primary))
                    .collect();
                let skip = homotopy_burn_in(pts.len());
                let (xs, ys): (Vec<f64>, Vec<f64>) = pts[skip..].iter().copied().unzip();
                (fit_power_points(&xs, &ys)?, xs.len())
            } else {
                let s = truncate_at_floor(&series);
                let burn = power_burn_in(s.len());
                let pts: Vec<(f64, f64)> = trace[..s.len()]
                    .iter()
                    .zip(s)
                    .skip(burn)
                    .filter(|(r, _)| r.k > 0)
                    .map(|(r, v)| (r.k as f64, *v))
                    .collect();
                let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
                (fit_power_points(&xs, &ys)?, xs.len())
            };
            let (margin, pass) = if scheme == SchemeId::Homotopy {
                let m = EXPONENT_TOL * th.abs() - (measured - th).abs();
                (m, m >= 0.0)
            } else {
                let m = th * (1.0 - EXPONENT_TOL) - measured;
                (m, m >= 0.0)
            };
            Ok(RateReport {
                scheme: name,
                measured,
                theorem: th,
                margin,
                pass,
                quantity: "exponent",
                max_step_ratio: None,
                points,
            })
        }
    }
}

/// Outer iterations skipped before the homotopy slope fit: the first third,
/// where `M_k` is still dominated by the constant offset.
pub fn homotopy_burn_in(points: usize) -> usize {
    (points / 3).min(points.saturating_sub(2))
}

/// Iterations skipped before a power-law fit: a tenth of the series, at
/// least [`DEFAULT_BURN_IN`].
pub fn power_burn_in(len: usize) -> usize {
    (len / 10).max(DEFAULT_BURN_IN).min(len.saturating_sub(3))
}

/// First `k` at which `series[k] <= tol * series[0]`.
pub fn iterations_to(series: &[f64], tol: f64) -> Option<usize> {
    let first = *series.first()?;
    series.iter().position(|v| *v <= tol * first)
}
