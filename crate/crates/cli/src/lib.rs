//! Config-driven commands behind the `vosopt` binary.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use vosopt::harness::{read_trace, rate_value, write_trace};
use vosopt::verify::{default_zoo, run_suite, Suite, VerifyOptions, ZooEntry, DEFAULT_SAMPLES};
use vosopt::{
    compare_to_theorem, run_scheme, ProblemConstants, ProblemSpec, RunOptions, SchemeId, TraceFormat, TraceRecord,
    VosError,
};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VERIFY_FAILED: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DIVERGED: u8 = 3;

/// Environment variable read when no seed is given on the command line or in
/// the config.
pub const SEED_ENV: &str = "VOSOPT_SEED";

/// Relative level whose crossing the report counts iterations to.
pub const REPORT_TARGET: f64 = 1e-8;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }
}

impl From<VosError> for Failure {
    fn from(e: VosError) -> Self {
        let code = match e {
            VosError::Divergence { .. } => EXIT_DIVERGED,
            _ => EXIT_CONFIG,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::config(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, Failure>;

/// One scheme on one problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub scheme: SchemeId,
    #[serde(flatten)]
    pub options: RunOptions,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub format: Option<TraceFormat>,
}

/// A base run and a list of partial configs merged over it, one run each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub base: Value,
    pub overrides: Vec<Value>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// A trace together with the scheme and constants it is compared against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub trace: PathBuf,
    pub scheme: SchemeId,
    pub constants: ProblemConstants,
    #[serde(default)]
    pub format: Option<TraceFormat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub entries: Vec<ReportEntry>,
    #[serde(default)]
    pub target: Option<f64>,
}

/// Problems and sample count used by `verify` instead of the built-in zoo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct VerifyConfig {
    #[serde(default)]
    pub problems: Option<Vec<ZooEntry>>,
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
}

/// Seed precedence: command line, then config, then [`SEED_ENV`].
pub fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> CliResult<Option<u64>> {
    if flag.is_some() || config.is_some() {
        return Ok(flag.or(config));
    }
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Failure::config(format!("{SEED_ENV}={s:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn read_json(path: &Path) -> CliResult<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

fn parse<T: for<'de> Deserialize<'de>>(v: Value, what: &str) -> CliResult<T> {
    serde_json::from_value(v).map_err(|e| Failure::config(format!("invalid {what}: {e}")))
}

/// Recursively overlays `patch` on `base`; objects merge, everything else replaces.
pub fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k.clone()).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p.clone(),
    }
}

fn parse_run(mut v: Value, seed: Option<u64>) -> CliResult<RunConfig> {
    let config_seed = v.get("seed").and_then(Value::as_u64);
    if let (Some(s), Value::Object(m)) = (resolve_seed(seed, config_seed)?, &mut v) {
        m.insert("seed".into(), s.into());
    }
    let cfg: RunConfig = parse(v, "run config")?;
    if cfg.options.trace_every == 0 {
        return Err(Failure::config("trace_every must be at least 1"));
    }
    Ok(cfg)
}

/// Output path and format: flags win over the config; the format otherwise
/// follows the file extension.
fn destination(cfg: &RunConfig, out: Option<&Path>, format: Option<TraceFormat>) -> (PathBuf, TraceFormat) {
    let path = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from(format!("{}.csv", cfg.scheme)));
    let fmt = format.or(cfg.format).unwrap_or_else(|| TraceFormat::from_path(&path));
    (path, fmt)
}

/// Result of one completed run.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub scheme: SchemeId,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub rate: Option<f64>,
    pub theorem: Option<f64>,
    pub quantity: Option<&'static str>,
    pub trace: PathBuf,
}

impl RunSummary {
    pub fn line(&self) -> String {
        let rate = match (self.rate, self.theorem, self.quantity) {
            (Some(r), Some(t), Some(q)) => format!("{q}={r:.6} theorem={t:.6}"),
            _ => "rate=n/a".into(),
        };
        format!(
            "{} iterations={} residual={:.3e} converged={} {} trace={}",
            self.scheme,
            self.iterations,
            self.residual,
            self.converged,
            rate,
            self.trace.display()
        )
    }
}

/// Runs one config and writes its trace.
pub fn execute(cfg: &RunConfig, out: Option<&Path>, format: Option<TraceFormat>) -> CliResult<RunSummary> {
    let problem = cfg.problem.build()?;
    let outcome = run_scheme(cfg.scheme, &problem, &cfg.options)?;
    let (path, fmt) = destination(cfg, out, format);
    let rows = if cfg.options.max_iter == 0 { &[][..] } else { &outcome.trace[..] };
    write_trace(rows, &path, fmt)?;
    let rep = compare_to_theorem(&outcome.trace, cfg.scheme, &outcome.setup.constants).ok();
    Ok(RunSummary {
        scheme: cfg.scheme,
        iterations: outcome.iterations,
        residual: outcome.residual,
        converged: outcome.converged,
        rate: rep.as_ref().map(|r| r.measured),
        theorem: rep.as_ref().map(|r| r.theorem),
        quantity: rep.as_ref().map(|r| r.quantity),
        trace: path,
    })
}

pub fn cmd_run(
    config: &Path,
    seed: Option<u64>,
    out: Option<&Path>,
    format: Option<TraceFormat>,
    w: &mut dyn Write,
) -> CliResult<u8> {
    let cfg = parse_run(read_json(config)?, seed)?;
    let summary = execute(&cfg, out, format)?;
    writeln!(w, "{}", summary.line())?;
    Ok(EXIT_OK)
}

pub fn cmd_verify(
    suite: &str,
    config: Option<&Path>,
    seed: Option<u64>,
    out: Option<&Path>,
    w: &mut dyn Write,
) -> CliResult<u8> {
    let suite: Suite = suite.parse()?;
    let vc: VerifyConfig = match config {
        Some(p) => parse(read_json(p)?, "verify config")?,
        None => VerifyConfig::default(),
    };
    let seed = resolve_seed(seed, vc.seed)?.unwrap_or(0);
    let zoo = vc.problems.unwrap_or_else(|| default_zoo(seed));
    let opts = VerifyOptions {
        samples: vc.samples.unwrap_or(DEFAULT_SAMPLES),
        seed,
    };
    let rep = run_suite(suite, &zoo, &opts)?;
    write!(w, "{}", rep.render())?;
    if let Some(p) = out {
        let json = serde_json::to_string_pretty(&rep).map_err(|e| Failure::config(e.to_string()))?;
        std::fs::write(p, json).map_err(|e| Failure::config(format!("{}: {e}", p.display())))?;
    }
    Ok(if rep.passed() { EXIT_OK } else { EXIT_VERIFY_FAILED })
}

/// Runs every sweep entry, at most `jobs` at a time, and writes a report
/// config listing the traces to `output_dir/manifest.json`.
pub fn cmd_sweep(
    config: &Path,
    seed: Option<u64>,
    out: Option<&Path>,
    format: Option<TraceFormat>,
    jobs: Option<usize>,
    w: &mut dyn Write,
) -> CliResult<u8> {
    let sweep: SweepConfig = parse(read_json(config)?, "sweep config")?;
    let dir = out
        .map(Path::to_path_buf)
        .or(sweep.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("sweep"));
    std::fs::create_dir_all(&dir).map_err(|e| Failure::config(format!("{}: {e}", dir.display())))?;
    let fmt = format.unwrap_or_default();
    let ext = match fmt {
        TraceFormat::Csv => "csv",
        TraceFormat::Jsonl => "jsonl",
    };
    let mut configs = Vec::with_capacity(sweep.overrides.len());
    for (i, o) in sweep.overrides.iter().enumerate() {
        let mut v = sweep.base.clone();
        merge(&mut v, o);
        let cfg = parse_run(v, seed).map_err(|f| Failure::config(format!("entry {i}: {}", f.message)))?;
        let path = dir.join(format!("{i:03}_{}.{ext}", cfg.scheme));
        configs.push((cfg, path));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Failure::config(e.to_string()))?;
    let results: Vec<(CliResult<RunSummary>, ProblemConstants)> = pool.install(|| {
        use rayon::prelude::*;
        configs
            .par_iter()
            .map(|(cfg, path)| {
                let constants = constants_of(cfg).unwrap_or_default();
                (execute(cfg, Some(path), Some(fmt)), constants)
            })
            .collect()
    });
    let mut entries = Vec::new();
    let mut code = EXIT_OK;
    for (i, (r, constants)) in results.into_iter().enumerate() {
        match r {
            Ok(s) => {
                writeln!(w, "[{i}] {}", s.line())?;
                entries.push(ReportEntry {
                    trace: s.trace.clone(),
                    scheme: s.scheme,
                    constants,
                    format: Some(fmt),
                });
            }
            Err(f) => {
                writeln!(w, "[{i}] error: {}", f.message)?;
                code = code.max(f.code);
            }
        }
    }
    let manifest = ReportConfig { entries, target: None };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::config(e.to_string()))?;
    let mpath = dir.join("manifest.json");
    std::fs::write(&mpath, text).map_err(|e| Failure::config(format!("{}: {e}", mpath.display())))?;
    Ok(code)
}

fn constants_of(cfg: &RunConfig) -> CliResult<ProblemConstants> {
    let problem = cfg.problem.build()?;
    let opts = RunOptions {
        max_iter: 0,
        ..cfg.options.clone()
    };
    Ok(run_scheme(cfg.scheme, &problem, &opts)?.setup.constants)
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub scheme: String,
    pub trace: PathBuf,
    pub quantity: &'static str,
    pub measured: f64,
    pub theorem: f64,
    pub margin: f64,
    pub pass: bool,
    pub max_step_ratio: Option<f64>,
    /// First logged `k` with value at most `target` times the initial value.
    pub iterations: Option<usize>,
    /// Iterations of the `gd` row divided by this row's.
    pub gd_ratio: Option<f64>,
    /// Set when the `gd` trace never reached the target, so the ratio uses
    /// its last logged `k` and is a lower bound.
    pub gd_ratio_lower_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub target: f64,
    pub rows: Vec<ReportRow>,
}

fn iterations_to_target(trace: &[TraceRecord], target: f64) -> Option<usize> {
    let v0 = rate_value(trace.first()?);
    trace.iter().find(|r| rate_value(r) <= target * v0).map(|r| r.k)
}

pub fn build_report(cfg: &ReportConfig) -> CliResult<Report> {
    let target = cfg.target.unwrap_or(REPORT_TARGET);
    let mut rows = Vec::new();
    let mut last_k = Vec::new();
    for e in &cfg.entries {
        let fmt = e.format.unwrap_or_else(|| TraceFormat::from_path(&e.trace));
        let trace = read_trace(&e.trace, fmt)?;
        if trace.is_empty() {
            return Err(Failure::config(format!("{}: empty trace", e.trace.display())));
        }
        let rep = compare_to_theorem(&trace, e.scheme, &e.constants)
            .map_err(|err| Failure::config(format!("{}: {err}", e.trace.display())))?;
        rows.push(ReportRow {
            scheme: rep.scheme,
            trace: e.trace.clone(),
            quantity: rep.quantity,
            measured: rep.measured,
            theorem: rep.theorem,
            margin: rep.margin,
            pass: rep.pass,
            max_step_ratio: rep.max_step_ratio,
            iterations: iterations_to_target(&trace, target),
            gd_ratio: None,
            gd_ratio_lower_bound: false,
        });
        last_k.push(trace.last().map_or(0, |r| r.k));
    }
    let gd = rows
        .iter()
        .zip(&last_k)
        .find(|(r, _)| r.scheme == SchemeId::Gd.as_str())
        .map(|(r, last)| (r.iterations.unwrap_or(*last), r.iterations.is_none()));
    for r in &mut rows {
        if let (Some((g, lower)), Some(k)) = (gd, r.iterations) {
            if k > 0 {
                r.gd_ratio = Some(g as f64 / k as f64);
                r.gd_ratio_lower_bound = lower;
            }
        }
    }
    Ok(Report { target, rows })
}

fn opt(v: Option<f64>) -> String {
    v.map_or("-".into(), |x| format!("{x:.4}"))
}

pub fn render_report(r: &Report) -> String {
    let mut s = format!(
        "{:<16} {:<11} {:>10} {:>10} {:>10} {:>10} {:>6} {:>10} {:>8}\n",
        "scheme", "quantity", "measured", "theorem", "margin", "max_step", "pass", "iters", "gd/iters"
    );
    for row in &r.rows {
        let _ = writeln!(
            s,
            "{:<16} {:<11} {:>10.6} {:>10.6} {:>10.2e} {:>10} {:>6} {:>10} {:>8}",
            row.scheme,
            row.quantity,
            row.measured,
            row.theorem,
            row.margin,
            opt(row.max_step_ratio),
            if row.pass { "yes" } else { "no" },
            row.iterations.map_or("-".into(), |k| k.to_string()),
            match (row.gd_ratio, row.gd_ratio_lower_bound) {
                (Some(g), true) => format!(">{g:.2}"),
                (g, _) => opt(g),
            },
        );
    }
    s
}

/// Prints the text table, and the JSON table to `out` or after the text.
pub fn cmd_report(config: &Path, out: Option<&Path>, w: &mut dyn Write) -> CliResult<u8> {
    let cfg: ReportConfig = parse(read_json(config)?, "report config")?;
    let report = build_report(&cfg)?;
    write!(w, "{}", render_report(&report))?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| Failure::config(e.to_string()))?;
    match out {
        Some(p) => std::fs::write(p, json).map_err(|e| Failure::config(format!("{}: {e}", p.display())))?,
        None => writeln!(w, "\n{json}")?,
    }
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn merge_overlays_nested_objects() {
        let mut base = json!({"problem": {"type": "quadratic", "seed": 1}, "max_iter": 10});
        merge(&mut base, &json!({"problem": {"seed": 2}, "scheme": "gd"}));
        assert_eq!(
            base,
            json!({"problem": {"type": "quadratic", "seed": 2}, "max_iter": 10, "scheme": "gd"})
        );
    }

    #[test]
    fn run_config_parses_policy_and_defaults() {
        let v = json!({
            "problem": {"type": "quadratic", "spectrum": [1.0, 10.0]},
            "scheme": "aor-vos",
            "policy": {"mode": "fixed", "alpha": 0.5},
            "max_iter": 5
        });
        let cfg = parse_run(v, Some(9)).unwrap();
        assert_eq!(cfg.options.max_iter, 5);
        assert_eq!(cfg.options.seed, 9);
        assert_eq!(cfg.options.trace_every, 1);
        assert_eq!(cfg.options.policy, vosopt::StepSizePolicy::Fixed { alpha: 0.5 });
    }

    #[test]
    fn unknown_scheme_is_a_config_failure() {
        let v = json!({"problem": {"type": "quadratic", "spectrum": [1.0]}, "scheme": "nope"});
        assert_eq!(parse_run(v, None).unwrap_err().code, EXIT_CONFIG);
    }

    #[test]
    fn zero_trace_every_is_rejected() {
        let v = json!({"problem": {"type": "quadratic", "spectrum": [1.0]}, "scheme": "gd", "trace_every": 0});
        assert_eq!(parse_run(v, Some(0)).unwrap_err().code, EXIT_CONFIG);
    }

    #[test]
    fn divergence_maps_to_its_exit_code() {
        let e = VosError::Divergence {
            iteration: 3,
            last_finite: Box::new(vosopt::SchemeState::at(vosopt::Vector::zeros(1))),
        };
        assert_eq!(Failure::from(e).code, EXIT_DIVERGED);
    }
}
