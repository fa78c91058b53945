use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn depo(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_depo"));
    cmd.args(args).env_remove("DEPO_SEED_OVERRIDE");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("cfg.toml");
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const BODY: &str = r#"
output_dir = "unused"

[world]
M = 3
K = 3
d = 2
seed = 1

[train]
T = 30
gd_steps = 3

[experiment]
arms = ["depo", "passive"]
seeds = [1, 2]
"#;

#[test]
fn run_then_verify() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), BODY);
    let out = tmp.path().join("out");
    let o = depo(&["--config", &cfg, "--output", out.to_str().unwrap(), "--jobs", "2", "run"], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("comparison.csv").exists());
    assert!(out.join("trace_passive_seed2.csv").exists());

    let trace = out.join("trace_depo_seed1.csv");
    let o = depo(&["--config", &cfg, "verify", trace.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("elliptical_potential"));

    let o = depo(&["--config", &cfg, "--verify-only", trace.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn tampered_trace_exits_with_invariant_status() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), BODY);
    let out = tmp.path().join("out");
    assert!(depo(&["--config", &cfg, "--output", out.to_str().unwrap()], &[]).status.success());
    let trace = out.join("trace_depo_seed1.csv");
    let text = fs::read_to_string(&trace).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let header: Vec<&str> = lines[0].split(',').collect();
    let col = header.iter().position(|h| *h == "quad_form").unwrap();
    let mut fields: Vec<String> = lines[3].split(',').map(String::from).collect();
    fields[col] = "-1.0".into();
    lines[3] = fields.join(",");
    fs::write(&trace, lines.join("\n") + "\n").unwrap();
    let o = depo(&["--config", &cfg, "--verify-only", trace.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAILED quad_form_nonnegative (round 3)"));
}

#[test]
fn seed_override_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), BODY);
    let out = tmp.path().join("out");
    let o = depo(&["--config", &cfg, "--output", out.to_str().unwrap()], &[("DEPO_SEED_OVERRIDE", "77")]);
    assert!(o.status.success());
    let mut names: Vec<String> =
        fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    names.sort();
    assert_eq!(
        names,
        ["comparison.csv", "summary_depo.json", "summary_passive.json", "trace_depo_seed77.csv", "trace_passive_seed77.csv"]
    );
    let o = depo(&["--config", &cfg], &[("DEPO_SEED_OVERRIDE", "x")]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn configuration_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let o = depo(&["run"], &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--config"));

    let cfg = write_config(tmp.path(), &BODY.replace("T = 30", "T = 30\nlambda = -1\ndelta = 2"));
    let o = depo(&["--config", &cfg, "run"], &[]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("lambda") && err.contains("> 0") && err.contains("delta"), "{err}");
}

#[test]
fn export_world_and_sweep() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), BODY);
    let a = tmp.path().join("a.fixture");
    let b = tmp.path().join("b.fixture");
    for p in [&a, &b] {
        let o = depo(&["--config", &cfg, "export-world", "--to", p.to_str().unwrap()], &[]);
        assert!(o.status.success());
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let out = tmp.path().join("sweep");
    let o = depo(
        &["--config", &cfg, "--output", out.to_str().unwrap(), "sweep", "--param", "c_b=0.01,0.05"],
        &[],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("c_b=0.01").join("summary_depo.json").exists());
    assert!(out.join("c_b=0.05").join("summary_depo.json").exists());
}
