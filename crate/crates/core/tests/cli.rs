use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn scatphase(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scatphase"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("SCATPHASE_OUT")
        .output()
        .unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_bundled_surfaces() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["three_funnel.toml", "cylinder.toml", "pants_678.toml", "rank3.toml", "explicit_rank2.json"] {
        let out = scatphase(&["validate", path(&data(name))], dir.path());
        assert_eq!(out.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["config.json", "validation.json", "manifest.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn invalid_surface_exits_2_with_report() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("overlap.json");
    std::fs::write(
        &bad,
        r#"{"generators": [[0.9282114251106988, 0.4814292872333896, 0.4814292872333895, 1.327040505302063],
                          [1.6090552524397703, 0.19941454009568238, 0.19941454009568227, 0.6461966779729913]]}"#,
    )
    .unwrap();
    let out = scatphase(&["validate", path(&bad)], &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("\"disjoint disks\""), "{err}");
    assert!(err.contains("validation failed"), "{err}");
}

#[test]
fn absurd_cutoff_exits_3_before_enumeration() {
    let dir = tempfile::tempdir().unwrap();
    let out = scatphase(&["spectrum", path(&data("three_funnel.toml")), "--cutoff", "1e4"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(!dir.path().join("spectrum.csv").exists());
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn unknown_config_field_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 3\n[spectrum]\ncutof = 10.0\n").unwrap();
    let out = scatphase(
        &["dimension", path(&data("three_funnel.toml")), "--config", path(&cfg)],
        &dir.path().join("out"),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numeric_route_failure_exits_4() {
    // too few Monte Carlo samples for an escape fit
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"escape": {"t_max": 6.0, "samples": 100}}"#).unwrap();
    let out = scatphase(
        &["escape", path(&data("three_funnel.toml")), "--config", path(&cfg)],
        &dir.path().join("out"),
    );
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("samples"));
}

#[test]
fn config_echo_and_reruns_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 9\nthreads = 2\n[spectrum]\ncutoff = 40.0\n").unwrap();
    let out_dir = dir.path().join("out");
    let surface = data("pants_678.toml");
    let args = ["spectrum", path(&surface), "--config", path(&cfg)];
    let read = |f: &str| std::fs::read(out_dir.join(f)).unwrap();
    assert_eq!(scatphase(&args, &out_dir).status.code(), Some(0));
    let first = (read("spectrum.csv"), read("config.json"));
    assert_eq!(scatphase(&args, &out_dir).status.code(), Some(0));
    assert_eq!(first, (read("spectrum.csv"), read("config.json")));

    let echo: serde_json::Value = serde_json::from_slice(&first.1).unwrap();
    assert_eq!(echo["seed"], 9);
    assert_eq!(echo["threads"], 2);
    assert_eq!(echo["spectrum"]["cutoff"], 40.0);
    assert_eq!(echo["zeta"]["tolerance"], 1e-8);
    assert_eq!(echo["command"], "spectrum");

    let manifest: serde_json::Value = serde_json::from_slice(&read("manifest.json")).unwrap();
    let files: Vec<&str> = manifest["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| a["file"].as_str().unwrap())
        .collect();
    assert_eq!(files, ["config.json", "validation.json", "spectrum.csv"]);
    assert_eq!(manifest["config_hash"], manifest["artifacts"][0]["sha256"]);
}

#[test]
fn output_directory_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let env_dir = dir.path().join("from_env");
    let cfg_dir = dir.path().join("from_config");
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, format!("output_dir = {:?}\n", path(&cfg_dir))).unwrap();
    let surface = data("cylinder.toml");
    let base = || {
        let mut c = Command::new(env!("CARGO_BIN_EXE_scatphase"));
        c.args(["validate", path(&surface), "--config", path(&cfg)]);
        c
    };
    assert!(base().env_remove("SCATPHASE_OUT").status().unwrap().success());
    assert!(cfg_dir.join("manifest.json").exists());
    assert!(base().env("SCATPHASE_OUT", &env_dir).status().unwrap().success());
    assert!(env_dir.join("manifest.json").exists());
    let flag_dir = dir.path().join("from_flag");
    assert!(base()
        .env("SCATPHASE_OUT", &env_dir)
        .arg("--out")
        .arg(&flag_dir)
        .status()
        .unwrap()
        .success());
    assert!(flag_dir.join("manifest.json").exists());
}
