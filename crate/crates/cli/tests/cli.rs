use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SPEC: &str = r#"{
  "config": {"coupling": {"kind": "bridge_qubit", "g1": 1.0, "g2": 1.0}, "J1": 0, "J2": 0},
  "initial": {"theta": 0.7853981633974483},
  "tau_grid": {"start": 0, "end": 3.141592653589793, "steps": 101},
  "observables": [{"concurrence": ["a2", "b2"]}, {"population": "q"}]
}"#;

fn wgmsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wgmsim"))
        .args(args)
        .output()
        .expect("spawn wgmsim")
}

fn write_spec(dir: &Path, body: &str) -> String {
    let p = dir.join("spec.json");
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_writes_csv_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path(), SPEC);
    let out = tmp.path().join("run");
    let o = wgmsim(&["simulate", "--config", &spec, "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("concurrence_a2b2.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash="));
    assert_eq!(lines.next(), Some("tau,concurrence"));
    assert_eq!(lines.count(), 101);
    assert!(out.join("population_q.csv").exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["tool"], "wgmsim");
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn manifest_rerun_is_bit_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path(), SPEC);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(wgmsim(&["simulate", "--config", &spec, "--out", s(&a)]).status.success());
    let manifest = a.join("manifest.json");
    assert!(wgmsim(&["simulate", "--config", s(&manifest), "--out", s(&b)]).status.success());
    for f in ["concurrence_a2b2.csv", "population_q.csv", "manifest.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn sweep_csv_has_long_format_header() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path(), SPEC);
    let out = tmp.path().join("sw");
    let o = wgmsim(&["sweep", "--config", &spec, "--tau", "1.5707963267948966", "--grid", "4x3", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("sweep_a2b2.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("J,theta,concurrence"));
    assert_eq!(lines.count(), 12);
    assert!(out.join("manifest.json").exists());
}

#[test]
fn invalid_phi_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(
        tmp.path(),
        r#"{"config": {"coupling": {"kind": "evanescent", "lambda": 1.0, "phi": 9.0}}}"#,
    );
    let o = wgmsim(&["simulate", "--config", &spec, "--out", s(&tmp.path().join("x"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("phi"));
}

#[test]
fn malformed_json_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path(), "{not json");
    let o = wgmsim(&["simulate", "--config", &spec, "--out", s(&tmp.path().join("x"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_figure_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let o = wgmsim(&["figure", "fig99", "--out", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn figure_with_overrides_writes_labelled_traces() {
    let tmp = tempfile::tempdir().unwrap();
    let o = wgmsim(&["figure", "fig2a", "--steps", "51", "--out", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let dir = tmp.path().join("fig2a");
    let n = fs::read_dir(&dir).unwrap().count();
    assert!(n >= 2, "{n} files in {}", dir.display());
}

#[test]
fn fiber_equivalence_passes_at_matched_coupling() {
    let tmp = tempfile::tempdir().unwrap();
    let report = tmp.path().join("r/report.json");
    let o = wgmsim(&["verify", "fiber-equivalence", "--steps", "101", "--out", s(&report)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(v["passed"], true);
}

#[test]
fn fiber_equivalence_mismatch_exits_3() {
    let o = wgmsim(&["verify", "fiber-equivalence", "--nu", "1.2", "--steps", "101"]);
    assert_eq!(o.status.code(), Some(3));
}
