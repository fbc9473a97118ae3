use std::path::Path;
use std::process::{Command, Output};

fn ddsplit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddsplit")).args(args).output().expect("binary runs")
}

fn run_demo(name: &str, threads: &str, out: &Path) -> Vec<u8> {
    let o = ddsplit(&["--threads", threads, "--no-timing", "--out", out.to_str().unwrap(), "demo", name]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    std::fs::read(out.join(format!("{name}.csv"))).unwrap()
}

#[test]
fn csv_bytes_do_not_depend_on_thread_count() {
    for name in ["plaplace-sum", "barenblatt-lie"] {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let serial = run_demo(name, "1", a.path());
        let parallel = run_demo(name, "8", b.path());
        assert_eq!(serial, parallel, "{name}");
        let text = String::from_utf8(serial).unwrap();
        assert!(text.starts_with("n,h,error_final,error_sup,observed_order,wall_ms,newton_total\n"));
    }
}

#[test]
fn run_writes_csv_summary_and_probe() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("tiny.toml");
    std::fs::write(
        &config,
        r#"
[grid]
n = [41]
lo = [-1.0]
hi = [1.0]

[layout]
kind = "separating"
subdomains = 3
overlap = 0.1

[problem]
family = "porous_medium_dirichlet"
field = { kind = "porous_medium", p = 3.0 }

[scheme]
kind = "sum_splitting"

[initial]
kind = "bump"
center = [0.0]
radius = 0.3

[time]
final_time = 0.01
steps = [2, 4]

[probe]
"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = ddsplit(&["--out", out.to_str().unwrap(), "run", config.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("tiny.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(out.join("tiny-probe.csv").exists());
    assert!(std::fs::read_to_string(out.join("tiny-summary.txt")).unwrap().contains("support"));

    let o = ddsplit(&["check", config.to_str().unwrap(), "--samples", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("config ok"));
}

#[test]
fn seed_flag_changes_random_data() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("rand.toml");
    std::fs::write(
        &config,
        r#"
[grid]
n = [17]
lo = [0.0]
hi = [1.0]

[layout]
kind = "strips"
subdomains = 2
overlap = 0.125

[problem]
family = "p_laplace_neumann"
field = { kind = "p_laplace", p = 3.0 }

[scheme]
kind = "lie_splitting"

[initial]
kind = "random"

[time]
final_time = 0.01
steps = [1, 2]
"#,
    )
    .unwrap();
    let csv_for = |seed: &str| {
        let out = dir.path().join(seed);
        let o = ddsplit(&["--seed", seed, "--no-timing", "--out", out.to_str().unwrap(), "run", config.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read_to_string(out.join("rand.csv")).unwrap()
    };
    assert_eq!(csv_for("5"), csv_for("5"));
    assert_ne!(csv_for("5"), csv_for("6"));
}

#[test]
fn reports_errors() {
    let o = ddsplit(&["demo", "nope"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("plaplace-lie"));

    let o = ddsplit(&["run", "/definitely/missing.toml"]);
    assert!(!o.status.success());

    let o = ddsplit(&["--threads", "0", "demo", "list"]);
    assert!(!o.status.success());

    let o = ddsplit(&["demo", "list"]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 5);
}
