use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn optomag(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_optomag"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn config(name: &str) -> String {
    format!("{}/configs/{name}", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn derive_writes_tables_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    let cfg = config("section4.conf");
    for out in [&first, &second] {
        let o = optomag(out, &["--config", &cfg, "derive"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["derive.csv", "regime.csv"] {
        let a = fs::read(first.join(name)).unwrap();
        let b = fs::read(second.join(name)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{name} differs between runs");
    }
    let text = fs::read_to_string(first.join("derive.csv")).unwrap();
    assert!(text.lines().any(|l| l.starts_with("chi_a,")), "{text}");
}

#[test]
fn driven_configuration_derives() {
    let dir = tempfile::tempdir().unwrap();
    let o = optomag(dir.path(), &["--config", &config("driven.conf"), "derive"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    for set in ["bogus=1", "omega_b=abc", "cutoff_m"] {
        let o = optomag(dir.path(), &["--set", set, "derive"]);
        assert_eq!(o.status.code(), Some(2), "--set {set}");
    }
}

#[test]
fn regime_failure_exits_with_3_unless_forced() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--set", "delta_q=2G", "--set", "delta_m=2G", "--set", "fig5_samples=101", "fig5"];
    let o = optomag(dir.path(), &args);
    assert_eq!(o.status.code(), Some(3));
    assert!(!dir.path().join("fig5_effective.csv").exists());

    let mut forced = args.to_vec();
    forced.insert(0, "--force");
    let o = optomag(dir.path(), &forced);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("fig5_effective.csv").exists());
}

#[test]
fn sweep_writes_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let o = optomag(
        dir.path(),
        &["sweep", "--var", "g_lin_a", "--from", "5e7", "--to", "2e8", "--points", "7", "--log"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(rows[0].starts_with("x,"), "{}", rows[0]);
    assert_eq!(rows.len(), 8);
}
