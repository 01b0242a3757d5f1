use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn rosa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rosa"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

const SMALL_TOY1: &str = r#"
seed = 11
replications = 2

[model]
builtin = "toy1"

[event]
threshold = 3.0

[smc]
particles = 200
rho = 0.5
mutation_steps = 2
sampling_steps = 2
sample_size = 500

[maxent]
copula_exponents = [0.5, 1.0, 1.5]

[indices]
plugin_samples = 5000
"#;

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn estimate(config: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["estimate", "--config", config, "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    rosa(&args)
}

#[test]
fn estimate_succeeds_and_writes_every_report() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "toy1.toml", SMALL_TOY1);
    let out = tmp.path().join("out");
    let o = estimate(&cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["indices.csv", "replications.csv", "summary.txt", "report.json", "timing.txt"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let csv = fs::read_to_string(out.join("indices.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("replication,input_index,index_family,estimate,rank"));
    // 2 replications × 2 inputs × 4 families
    assert_eq!(lines.count(), 16);
    assert!(stdout(&o).contains("delta_f"));
}

#[test]
fn reports_repeat_byte_for_byte_whatever_the_job_count() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "toy1.toml", SMALL_TOY1);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_eq!(estimate(&cfg, &a, &["--jobs", "1"]).status.code(), Some(0));
    assert_eq!(estimate(&cfg, &b, &["--jobs", "2"]).status.code(), Some(0));
    for f in ["indices.csv", "replications.csv", "report.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn seed_and_replication_flags_override_the_config() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "toy1.toml", SMALL_TOY1);
    let base = tmp.path().join("base");
    let reseeded = tmp.path().join("reseeded");
    assert_eq!(estimate(&cfg, &base, &["--replications", "3"]).status.code(), Some(0));
    assert_eq!(
        estimate(&cfg, &reseeded, &["--replications", "3", "--seed", "12"]).status.code(),
        Some(0)
    );
    let rows = fs::read_to_string(base.join("replications.csv")).unwrap();
    assert_eq!(rows.lines().count(), 4);
    assert_ne!(rows, fs::read_to_string(reseeded.join("replications.csv")).unwrap());

    // Earlier replications keep their seeds when R grows.
    let two = tmp.path().join("two");
    assert_eq!(estimate(&cfg, &two, &["--replications", "2"]).status.code(), Some(0));
    let short = fs::read_to_string(two.join("replications.csv")).unwrap();
    let long: Vec<&str> = rows.lines().take(3).collect();
    assert_eq!(short.lines().collect::<Vec<_>>(), long);
}

#[test]
fn runtime_failure_exits_one_and_names_the_replication() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "nan.toml",
        r#"
seed = 3
[model]
command = ["sh", "-c", "while read -r line; do echo nan; done"]
[inputs]
marginals = [
  { kind = "normal", location = 0.0, scale = 1.0 },
  { kind = "normal", location = 0.0, scale = 1.0 },
]
[event]
threshold = 3.0
[smc]
particles = 20
rho = 0.5
mutation_steps = 1
sampling_steps = 1
sample_size = 20
"#,
    );
    let o = estimate(&cfg, &tmp.path().join("out"), &["--replications", "1"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("replication 0 (seed "), "{err}");
    assert!(err.contains("non-finite output"), "{err}");
}

#[test]
fn config_failures_exit_two() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let missing = tmp.path().join("absent.toml");
    assert_eq!(estimate(missing.to_str().unwrap(), &out, &[]).status.code(), Some(2));
    let garbage = write(tmp.path(), "garbage.toml", "this is [not toml");
    assert_eq!(estimate(&garbage, &out, &[]).status.code(), Some(2));
    let unknown = write(tmp.path(), "unknown.toml", &SMALL_TOY1.replace("\"toy1\"", "\"toy9\""));
    assert_eq!(estimate(&unknown, &out, &[]).status.code(), Some(2));
    let zero = write(tmp.path(), "zero.toml", SMALL_TOY1);
    assert_eq!(estimate(&zero, &out, &["--replications", "0"]).status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn validate_reports_each_problem() {
    let tmp = TempDir::new().unwrap();

    let o = rosa(&["validate", "--config", configs().join("toy1.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "ok\n");

    let no_threshold = write(tmp.path(), "a.toml", &SMALL_TOY1.replace("threshold = 3.0", ""));
    let o = rosa(&["validate", "--config", &no_threshold]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("event.threshold required"), "{}", stdout(&o));

    let bad_rho = write(tmp.path(), "b.toml", &SMALL_TOY1.replace("rho = 0.5", "rho = 1.2"));
    let o = rosa(&["validate", "--config", &bad_rho]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("smc.rho"), "{}", stdout(&o));

    let lognormal = write(
        tmp.path(),
        "c.toml",
        r#"
[model]
command = ["./model"]
[inputs]
marginals = [{ kind = "lognormal", location = 0.0, scale = 0.5 }]
[event]
threshold = 1.0
[smc]
particles = 100
rho = 0.5
mutation_steps = 1
sampling_steps = 1
sample_size = 100
kernel = { kind = "crank_nicolson", a = 0.5 }
"#,
    );
    let o = rosa(&["validate", "--config", &lognormal]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("kernel requires gaussian inputs"), "{}", stdout(&o));
}

#[test]
fn shipped_configs_validate() {
    for entry in fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let o = rosa(&["validate", "--config", path.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}: {}", path.display(), stdout(&o));
    }
}

#[test]
fn references_print_one_line_per_quantity() {
    let o = rosa(&["references", "toy1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).lines().any(|l| l.starts_with("P_f 1.3499e-3 closed_form")), "{}", stdout(&o));

    let o = rosa(&["references", "additive_chi2"]);
    assert_eq!(o.status.code(), Some(0));
    let line = stdout(&o)
        .lines()
        .find(|l| l.starts_with("delta_f_1 "))
        .map(str::to_owned)
        .expect("delta_f_1 line");
    let value: f64 = line.split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!((value - 0.001).abs() < 5e-4, "{line}");

    let o = rosa(&["references", "sdof"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no theoretical references"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(rosa(&["estimate"]).status.code(), Some(2));
    assert_eq!(rosa(&["frobnicate"]).status.code(), Some(2));
}
