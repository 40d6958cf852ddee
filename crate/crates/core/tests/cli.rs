use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use roughdelay::io::read_rough_path;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn run(args: &[&str], out: &Path, env_seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_roughdelay"));
    cmd.args(args).arg("--out").arg(out);
    match env_seed {
        Some(s) => cmd.env("ROUGHDELAY_SEED", s),
        None => cmd.env_remove("ROUGHDELAY_SEED"),
    };
    cmd.output().unwrap()
}

fn cfg(name: &str) -> String {
    configs().join(name).to_string_lossy().into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

/// Real root of `λ = a e^{−λ}` by bisection on `[−1, 1]`.
fn characteristic_root(a: f64) -> f64 {
    let g = |l: f64| l - a * (-l).exp();
    let (mut lo, mut hi) = (-1.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn validate_accepts_the_reference_triple() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["validate", "--config", &cfg("validate.toml")], dir.path(), None);
    assert_eq!(out.status.code(), Some(0));
    let rep = json(&dir.path().join("validate.json"));
    assert_eq!(rep["passed"], true);
}

#[test]
fn validate_rejects_a_bad_triple_with_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[exponents]\nalpha = 0.34\nbeta = 0.35\ngamma = 0.36\n").unwrap();
    let out = run(&["validate", "--config", path.to_str().unwrap()], dir.path(), None);
    assert_eq!(out.status.code(), Some(2));
    let rep = json(&dir.path().join("validate.json"));
    assert_eq!(rep["exponents_ok"], false);
    assert_eq!(rep["passed"], false);
}

#[test]
fn missing_config_fails_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("results");
    let out = run(&["lyapunov", "--config", "/nonexistent/roughdelay.toml"], &target, None);
    assert_eq!(out.status.code(), Some(1));
    assert!(!target.exists());
}

#[test]
fn unknown_keys_are_all_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("typo.toml");
    std::fs::write(&path, "[noise]\nsteps = 8\nstep = 8\n[run]\nsegmnts = 3\n").unwrap();
    let out = run(&["solve", "--config", path.to_str().unwrap()], dir.path(), None);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("noise.step") && err.contains("run.segmnts"), "{err}");
    assert!(!dir.path().join("solve.json").exists());
}

#[test]
fn lyapunov_matches_characteristic_root() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["lyapunov", "--config", &cfg("delay-stable.toml")], dir.path(), None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = json(&dir.path().join("lyapunov.json"));
    let mu = rep["reports"][0]["exponents"][0].as_f64().unwrap();
    let r = rep["reports"][0]["delay"].as_f64().unwrap();
    for key in ["exponents", "running", "seed", "N", "n_steps", "floor", "converged"] {
        assert!(rep["reports"][0].get(key).is_some(), "missing {key}");
    }
    assert!((mu * r - characteristic_root(-0.3)).abs() < 2e-2, "{mu}");
}

#[test]
fn seed_precedence_is_flag_then_env_then_config() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg("ito-multiplicative.toml");
    let seed_of = |sub: &str, args: &[&str], env: Option<&str>| {
        let out_dir = dir.path().join(sub);
        let mut all = vec!["solve", "--config", c.as_str()];
        all.extend_from_slice(args);
        assert_eq!(run(&all, &out_dir, env).status.code(), Some(0));
        json(&out_dir.join("solve.json"))["seed"].as_u64().unwrap()
    };
    assert_eq!(seed_of("config", &[], None), 0);
    assert_eq!(seed_of("env", &[], Some("17")), 17);
    assert_eq!(seed_of("flag", &["--seed", "23"], Some("17")), 23);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(&["probe-unstable", "--config", &cfg("delay-unstable.toml"), "--format", "csv"], out, None);
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(std::fs::read(a.join("probe-unstable.csv")).unwrap(), std::fs::read(b.join("probe-unstable.csv")).unwrap());
}

#[test]
fn lift_check_writes_a_readable_rough_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["lift-check", "--config", &cfg("validate.toml")], dir.path(), None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = json(&dir.path().join("lift-check.json"));
    assert_eq!(rep["passed"], true);
    let rp = read_rough_path(&dir.path().join("roughpath.txt")).unwrap();
    assert_eq!(rp.dim(), 2);
    let leftovers: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().ends_with(".tmp"))
        .collect();
    assert!(leftovers.is_empty());
}

#[test]
fn stationary_report_on_ou() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["stationary", "--config", &cfg("ou.toml")], dir.path(), None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = json(&dir.path().join("stationary.json"));
    assert_eq!(rep["converged"], true);
    let var = rep["variance"][0].as_f64().unwrap();
    assert!(var > 0.3 && var < 0.7, "{var}");
}
