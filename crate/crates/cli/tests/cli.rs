use std::process::Command;

fn nsvfp() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nsvfp"))
}

#[test]
fn version_prints_package_version() {
    let out = nsvfp().arg("version").output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn validate_reports_each_preset() {
    let out = nsvfp().arg("validate").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for p in ["relaxation", "decay", "eps_sweep", "k_sweep", "hydro_sweep", "conservation"] {
        assert!(text.contains(&format!("{p}: ok")), "{text}");
    }
}

#[test]
fn validate_fails_on_bad_config() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    std::fs::write(&path, "epsilon = 3.0\neps_values = []\n").unwrap();
    let out = nsvfp().args(["validate", "conservation", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    std::fs::write(&path, "not_a_key = 1\n").unwrap();
    let out = nsvfp().args(["validate", "decay", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn run_writes_outputs_and_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let out = nsvfp()
        .args(["run", "relaxation", "--threads", "2", "--tag", "x", "--output-dir"])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let dir = tmp.path().join("relaxation_x");
    assert!(dir.join("summary.json").exists());
    assert!(dir.join("series_eps1.csv").exists());
    assert!(dir.join("plots/band_energy.svg").exists());
}

#[test]
fn failing_checks_give_nonzero_exit() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("c.toml");
    // An explicit step far beyond the stability bound aborts the sweep.
    std::fs::write(&path, format!("dt = 5.0\noutput_dir = {:?}\n", tmp.path())).unwrap();
    let out = nsvfp().args(["run", "decay", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn unknown_preset_is_an_error() {
    let out = nsvfp().args(["run", "nope"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn dump_tensor_matches_known_entries() {
    let out = nsvfp().args(["dump-tensor", "--measure", "uniform", "-K", "3"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("j,l,k,value"));
    let s223 = lines
        .map(|l| l.split(',').collect::<Vec<_>>())
        .find(|f| f[..3] == ["2", "2", "3"])
        .unwrap();
    let v: f64 = s223[3].parse().unwrap();
    assert!((v - 2.0 / 5f64.sqrt()).abs() < 1e-12);
}
