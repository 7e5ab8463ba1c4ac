use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn clustercolor(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clustercolor")).args(args).output().expect("binary runs")
}

fn generate(dir: &Path, preset: &str) -> String {
    let path = dir.join(format!("{preset}.json"));
    let path = path.to_str().unwrap().to_string();
    let out = clustercolor(&["generate", "--preset", preset, "--groups", "2", "--size", "64", "--seed", "3", "--out", &path]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    path
}

fn run(instance: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--instance", instance, "--seed", "5", "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    clustercolor(&args)
}

#[test]
fn generate_run_verify() {
    let dir = tempfile::tempdir().unwrap();
    let instance = generate(dir.path(), "mixed");
    let out = dir.path().join("out");
    let r = run(&instance, &out, &[]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    for name in ["coloring.json", "stages.json", "labeling.json", "ledger.csv", "donations.json", "report.json"] {
        assert!(out.join(name).exists(), "{name} missing");
    }
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    assert!(report["headline"]["h_rounds"].as_u64().is_some());
    assert_eq!(report["instance_digest"].as_str().unwrap().len(), 64);
    assert!(fs::read_to_string(out.join("ledger.csv")).unwrap().starts_with("round,stage,messages,bits,largest_message"));

    let v = clustercolor(&[
        "verify",
        "--instance",
        &instance,
        "--coloring",
        out.join("coloring.json").to_str().unwrap(),
        "--labeling",
        out.join("labeling.json").to_str().unwrap(),
    ]);
    assert!(v.status.success(), "{}", String::from_utf8_lossy(&v.stdout));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let instance = generate(dir.path(), "planted-cabals");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run(&instance, &a, &[]).status.success());
    assert!(run(&instance, &b, &[]).status.success());
    for name in ["coloring.json", "stages.json", "ledger.csv", "report.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name} differs");
    }
}

#[test]
fn verify_rejects_a_broken_coloring() {
    let dir = tempfile::tempdir().unwrap();
    let instance = generate(dir.path(), "sparse-er");
    let out = dir.path().join("out");
    assert!(run(&instance, &out, &[]).status.success());
    let mut coloring: serde_json::Value = serde_json::from_slice(&fs::read(out.join("coloring.json")).unwrap()).unwrap();
    let colors = coloring.as_object_mut().unwrap();
    let first = colors.keys().next().unwrap().clone();
    colors.remove(&first);
    let broken = dir.path().join("broken.json");
    fs::write(&broken, serde_json::to_vec(&coloring).unwrap()).unwrap();
    let v = clustercolor(&["verify", "--instance", &instance, "--coloring", broken.to_str().unwrap()]);
    assert_eq!(v.status.code(), Some(1));
}

#[test]
fn dry_run_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let instance = generate(dir.path(), "sparse-er");
    let out = dir.path().join("dry");
    let r = run(&instance, &out, &["--dry-run"]);
    assert!(r.status.success());
    assert!(String::from_utf8_lossy(&r.stdout).starts_with("valid"));
    assert!(!out.exists());
}

#[test]
fn enforce_mode_names_the_offending_stage() {
    let dir = tempfile::tempdir().unwrap();
    let instance = generate(dir.path(), "mixed");
    let r = run(&instance, &dir.path().join("out"), &["--bandwidth", "enforce", "--c-bw", "1"]);
    assert_eq!(r.status.code(), Some(2));
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.contains("stage"), "{err}");
}

#[test]
fn bad_instance_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, "{\"machines\": [1, 1]}").unwrap();
    let r = run(path.to_str().unwrap(), &dir.path().join("out"), &[]);
    assert_eq!(r.status.code(), Some(2));
}
