use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ptfhard(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ptfhard"))
        .args(args)
        .current_dir(dir)
        .env_remove("PTFHARD_SEED")
        .output()
        .expect("binary runs")
}

fn manifest(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn verify_passes_on_submultiplicativity() {
    let dir = tempfile::tempdir().unwrap();
    let out = ptfhard(&["verify", "--lemma", "mon-submult", "--trials", "200", "--json", "r.json"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = manifest(&dir.path().join("r.json"));
    assert_eq!(report["verdict"], "holds");
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(ptfhard(&["reduce", "--bogus"], dir.path()).status.code(), Some(2));
    assert_eq!(ptfhard(&["verify", "--lemma", "no-such-lemma"], dir.path()).status.code(), Some(2));
    let missing = ptfhard(&["audit-lc", "--instance", "missing.json"], dir.path());
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn demo_pipeline_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = ptfhard(&["pipeline", "--demo", "d1", "--points", "20000", "--out-dir", "run"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["pass"], true);
    assert!(summary["accuracy"].as_f64().unwrap() >= summary["bound"].as_f64().unwrap());
    assert!(dir.path().join("run/pipeline.manifest.json").exists());
}

#[test]
fn generated_instances_audit_as_satisfiable() {
    let dir = tempfile::tempdir().unwrap();
    let gen = ptfhard(
        &["gen-lc", "--nv", "10", "--degree", "3", "--k", "4", "--L", "2", "--seed", "5", "--out", "i.json", "--labels-out", "s.json"],
        dir.path(),
    );
    assert_eq!(gen.status.code(), Some(0));
    let audit = ptfhard(&["audit-lc", "--instance", "i.json", "--labels", "s.json"], dir.path());
    let report: serde_json::Value = serde_json::from_slice(&audit.stdout).unwrap();
    assert_eq!(report["satisfied_fraction"], 1.0);
}

#[test]
fn reduce_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ptfhard(&["gen-lc", "--nv", "8", "--degree", "3", "--k", "3", "--L", "2", "--seed", "1", "--out", "i.json"], p);
    for name in ["a.bin", "b.bin"] {
        let out = ptfhard(&["reduce", "--instance", "i.json", "--points", "500", "--fold", "--seed", "9", "--out", name], p);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(fs::read(p.join("a.bin")).unwrap(), fs::read(p.join("b.bin")).unwrap());
    let (ma, mb) = (manifest(&p.join("a.bin.manifest.json")), manifest(&p.join("b.bin.manifest.json")));
    assert_eq!(ma["inputs"], mb["inputs"]);
    assert_eq!(ma["outputs"]["a.bin"], mb["outputs"]["b.bin"]);
    assert_eq!(ma["params"], mb["params"]);

    let other = ptfhard(&["reduce", "--instance", "i.json", "--points", "500", "--fold", "--seed", "10", "--out", "c.bin"], p);
    assert_eq!(other.status.code(), Some(0));
    assert_ne!(fs::read(p.join("a.bin")).unwrap(), fs::read(p.join("c.bin")).unwrap());
}

#[test]
fn probe_fit_scores_raw_data() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ptfhard(&["gen-lc", "--nv", "8", "--degree", "3", "--k", "3", "--L", "2", "--seed", "2", "--out", "i.json"], p);
    ptfhard(&["reduce", "--instance", "i.json", "--points", "1000", "--out", "d.bin"], p);
    let out = ptfhard(&["eval", "--data", "d.bin", "--k", "3", "--probe", "1"], p);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["accuracy"].as_f64().unwrap() > 0.9);

    fs::write(p.join("h.poly"), report["hypothesis"].as_str().unwrap()).unwrap();
    let scored = ptfhard(&["eval", "--hypothesis", "h.poly", "--data", "d.bin"], p);
    assert_eq!(scored.status.code(), Some(0), "{}", String::from_utf8_lossy(&scored.stderr));
    let again: serde_json::Value = serde_json::from_slice(&scored.stdout).unwrap();
    assert_eq!(again["accuracy"], report["accuracy"]);
}
