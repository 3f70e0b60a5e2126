use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_vosopt"));
    c.env_remove("VOSOPT_SEED");
    c
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write_json(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn quad_run(scheme: &str) -> Value {
    json!({
        "problem": {"type": "quadratic", "spectrum": {"n": 20, "min": 1.0, "max": 100.0}, "seed": 5},
        "scheme": scheme,
        "max_iter": 300,
        "tol": 0.0
    })
}

#[test]
fn run_writes_trace_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_json(dir.path(), "run.json", &quad_run("aor-vos"));
    let out = dir.path().join("t.csv");
    let o = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let line = stdout(&o);
    assert!(line.starts_with("aor-vos iterations=300"), "{line}");
    let field = |name: &str| -> f64 {
        let tok = line.split_whitespace().find(|t| t.starts_with(name)).unwrap();
        tok[name.len()..].parse().unwrap()
    };
    assert!(field("factor=") <= field("theorem="));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("k,lyap_primary,lyap_modified,f_gap,grad_norm,dist_to_star,gamma,epsilon,alpha,wall_ns\n"));
    assert_eq!(text.lines().count(), 302);
}

#[test]
fn zero_iterations_write_a_header_only_trace() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = quad_run("gd");
    v["max_iter"] = json!(0);
    let cfg = write_json(dir.path(), "run.json", &v);
    let out = dir.path().join("t.csv");
    let o = bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text, "k,lyap_primary,lyap_modified,f_gap,grad_norm,dist_to_star,gamma,epsilon,alpha,wall_ns\n");
}

#[test]
fn unknown_scheme_and_bad_json_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_json(dir.path(), "run.json", &quad_run("fista"));
    let o = bin().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(code(&o), 2);
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let o = bin().args(["run", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(code(&o), 2);
    let o = bin().args(["run", "--config"]).arg(dir.path().join("missing.json")).output().unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn divergence_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = quad_run("gd");
    v["policy"] = json!({"mode": "fixed", "alpha": 1.0});
    v["max_iter"] = json!(5000);
    let cfg = write_json(dir.path(), "run.json", &v);
    let o = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("t.csv"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("diverged"));
}

#[test]
fn same_seed_gives_identical_traces() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_json(dir.path(), "run.json", &quad_run("epc-vos"));
    let run = |name: &str, seed: Option<&str>, env: Option<&str>| -> Vec<u8> {
        let out = dir.path().join(name);
        let mut c = bin();
        c.args(["run", "--config"]).arg(&cfg).arg("--out").arg(&out);
        if let Some(s) = seed {
            c.args(["--seed", s]);
        }
        if let Some(e) = env {
            c.env("VOSOPT_SEED", e);
        }
        assert_eq!(code(&c.output().unwrap()), 0);
        std::fs::read(out).unwrap()
    };
    let a = run("a.csv", Some("7"), None);
    let b = run("b.csv", Some("7"), None);
    let from_env = run("c.csv", None, Some("7"));
    let other = run("d.csv", None, Some("8"));
    let flag_wins = run("e.csv", Some("7"), Some("8"));
    assert_eq!(a, b);
    assert_eq!(a, from_env);
    assert_eq!(a, flag_wins);
    assert_ne!(a, other);
}

#[test]
fn jsonl_format_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_json(dir.path(), "run.json", &quad_run("aor-hb"));
    let out = dir.path().join("t.txt");
    let o = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(["--format", "jsonl"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(&out).unwrap();
    let first: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["k"], json!(0));
    assert!(first.get("lyap_modified").is_some());
}

#[test]
fn verify_bounds_passes_and_is_deterministic() {
    let o = bin().args(["verify", "--suite", "bounds", "--seed", "4"]).output().unwrap();
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let again = bin().args(["verify", "--suite", "bounds", "--seed", "4"]).output().unwrap();
    assert_eq!(o.stdout, again.stdout);
    assert!(stdout(&o).contains("0 failed"));
}

#[test]
fn verify_all_twice_gives_the_same_report() {
    let a = bin().args(["verify", "--suite", "all", "--seed", "11"]).output().unwrap();
    let b = bin().args(["verify", "--suite", "all", "--seed", "11"]).output().unwrap();
    assert_eq!(code(&a), 0, "{}", stdout(&a));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn verify_flags_a_falsified_mu() {
    let o = bin()
        .args(["verify", "--suite", "lyapunov", "--config"])
        .arg(configs().join("falsified_mu.json"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
    let text = stdout(&o);
    assert!(text
        .lines()
        .any(|l| l.starts_with("FAIL") && l.contains("strong lyapunov gradient / gap")));
}

#[test]
fn verify_unknown_suite_exits_2() {
    let o = bin().args(["verify", "--suite", "everything"]).output().unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn sweep_then_report_shows_acceleration() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let o = bin()
        .args(["sweep", "--config"])
        .arg(configs().join("kappa_sweep.json"))
        .arg("--out")
        .arg(&out)
        .args(["--jobs", "4"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().count(), 4);

    let json_out = dir.path().join("report.json");
    let o = bin()
        .args(["report", "--config"])
        .arg(out.join("manifest.json"))
        .arg("--out")
        .arg(&json_out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rep: Value = serde_json::from_str(&std::fs::read_to_string(&json_out).unwrap()).unwrap();
    let rows = rep["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    for row in rows {
        assert_eq!(row["pass"], json!(true), "{row}");
        for key in ["scheme", "measured", "theorem", "margin", "pass"] {
            assert!(row.get(key).is_some());
        }
        if row["scheme"] != json!("gd") {
            assert!(row["gd_ratio"].as_f64().unwrap() >= 10.0, "{row}");
        }
    }
}

#[test]
fn sweep_traces_do_not_depend_on_scheduling() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = json!({
        "base": quad_run("gd"),
        "overrides": [{"scheme": "gd"}, {"scheme": "aor-vos"}, {"scheme": "extra-grad", "seed": 9}, {"scheme": "ppa"}]
    });
    let cfg = write_json(dir.path(), "sweep.json", &sweep);
    let run = |jobs: &str, name: &str| -> PathBuf {
        let out = dir.path().join(name);
        let o = bin()
            .args(["sweep", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .args(["--jobs", jobs])
            .output()
            .unwrap();
        assert_eq!(code(&o), 0);
        out
    };
    let (a, b) = (run("1", "a"), run("4", "b"));
    for name in ["000_gd.csv", "001_aor-vos.csv", "002_extra-grad.csv", "003_ppa.csv"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap());
    }
}

#[test]
fn report_single_trace_and_unreadable_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_json(dir.path(), "run.json", &quad_run("aor-vos"));
    let trace = dir.path().join("t.csv");
    assert_eq!(
        code(&bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&trace).output().unwrap()),
        0
    );
    let alpha = (1.0_f64 / 99.0).sqrt();
    let entry = |path: &Path| {
        json!({"trace": path, "scheme": "aor-vos", "constants": {"mu": 1.0, "L": 100.0, "alpha": alpha}})
    };
    let rc = write_json(dir.path(), "rep.json", &json!({"entries": [entry(&trace)]}));
    let o = bin().args(["report", "--config"]).arg(&rc).output().unwrap();
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| l.starts_with("aor-vos")).count(), 1);
    let json_part = &text[text.find('{').unwrap()..];
    let rep: Value = serde_json::from_str(json_part).unwrap();
    assert_eq!(rep["rows"].as_array().unwrap().len(), 1);

    let garbage = dir.path().join("garbage.csv");
    std::fs::write(&garbage, "k,lyap_primary\n1,abc\n").unwrap();
    for p in [garbage, dir.path().join("missing.csv")] {
        let rc = write_json(dir.path(), "rep2.json", &json!({"entries": [entry(&p)]}));
        let o = bin().args(["report", "--config"]).arg(&rc).output().unwrap();
        assert_eq!(code(&o), 2, "{}", p.display());
    }
}

#[test]
fn homotopy_report_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("h.csv");
    let o = bin()
        .args(["run", "--config"])
        .arg(configs().join("homotopy_least_squares.json"))
        .arg("--out")
        .arg(&trace)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rc = write_json(
        dir.path(),
        "rep.json",
        &json!({"entries": [{"trace": trace, "scheme": "homotopy", "constants": {"mu": 0.0, "L": 1.0}}]}),
    );
    let json_out = dir.path().join("r.json");
    let o = bin().args(["report", "--config"]).arg(&rc).arg("--out").arg(&json_out).output().unwrap();
    assert_eq!(code(&o), 0);
    let rep: Value = serde_json::from_str(&std::fs::read_to_string(&json_out).unwrap()).unwrap();
    let row = &rep["rows"][0];
    assert_eq!(row["quantity"], json!("exponent"));
    assert!((row["measured"].as_f64().unwrap() + 2.0).abs() <= 0.2, "{row}");
    assert_eq!(row["pass"], json!(true));
}
