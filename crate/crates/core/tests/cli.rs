use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use codepair::synthetic::generate_corpus;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_codepair"))
}

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/pairs10.jsonl")
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().expect("spawn codepair")
}

fn ok(args: &[&str], dir: &Path) -> Output {
    let out = run(args, dir);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read_manifest(results: &Path) -> serde_json::Value {
    let mut p = results.as_os_str().to_owned();
    p.push(".manifest.json");
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn split_is_byte_identical_across_invocations() {
    let dir = tempfile::tempdir().unwrap();
    let c = fixture();
    let c = c.to_str().unwrap();
    ok(&["split", "--corpus", c, "--seed", "42", "--out", "a.json"], dir.path());
    ok(&["split", "--corpus", c, "--seed", "42", "--out", "b.json"], dir.path());
    ok(&["split", "--corpus", c, "--seed", "43", "--out", "c.json"], dir.path());
    let a = std::fs::read(dir.path().join("a.json")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.json")).unwrap());
    assert_ne!(a, std::fs::read(dir.path().join("c.json")).unwrap());
}

#[test]
fn oracle_run_scores_perfectly_and_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.jsonl");
    generate_corpus(300, 2).write_jsonl(&corpus).unwrap();
    for task in ["pair", "binary"] {
        let results = format!("{task}.jsonl");
        ok(
            &["run", "--corpus", corpus.to_str().unwrap(), "--task", task, "--backend", "oracle", "--k", "2", "--results", &results],
            dir.path(),
        );
        let m = read_manifest(&dir.path().join(&results));
        assert_eq!(m["backend_id"], "oracle");
        assert_eq!(m["task"], task);
        assert_eq!(m["config"]["k"], 2);
        let out = ok(&["analyze", "--results", &results, "--format", "json"], dir.path());
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(v["accuracy"], 1.0);
    }
}

#[test]
fn random_backend_reproduces_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let c = fixture();
    let c = c.to_str().unwrap();
    for name in ["r1.jsonl", "r2.jsonl"] {
        ok(&["run", "--corpus", c, "--backend", "random:7", "--task", "binary", "--results", name], dir.path());
    }
    let r1 = std::fs::read(dir.path().join("r1.jsonl")).unwrap();
    assert!(!r1.is_empty());
    assert_eq!(r1, std::fs::read(dir.path().join("r2.jsonl")).unwrap());
}

#[test]
fn replay_reproduces_a_logged_run() {
    let dir = tempfile::tempdir().unwrap();
    let c = fixture();
    let c = c.to_str().unwrap();
    ok(&["run", "--corpus", c, "--backend", "random:3", "--results", "a.jsonl", "--log", "log.jsonl"], dir.path());
    ok(&["run", "--corpus", c, "--backend", "replay:log.jsonl", "--results", "b.jsonl"], dir.path());
    let strip = |name: &str| -> Vec<serde_json::Value> {
        std::fs::read_to_string(dir.path().join(name))
            .unwrap()
            .lines()
            .map(|l| {
                let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
                v.as_object_mut().unwrap().remove("raw_response_ref");
                v
            })
            .collect()
    };
    assert_eq!(strip("a.jsonl"), strip("b.jsonl"));
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("cfg.toml"),
        format!("corpus = {:?}\nbackend = \"random:5\"\nk = 1\n", fixture()),
    )
    .unwrap();
    ok(&["--config", "cfg.toml", "run", "--results", "r.jsonl", "--k", "3"], dir.path());
    let m = read_manifest(&dir.path().join("r.jsonl"));
    assert_eq!(m["backend_id"], "random:5");
    assert_eq!(m["k"], 3);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| run(args, dir.path()).status.code();
    assert_eq!(code(&["run", "--definitely-not-a-flag"]), Some(64));
    assert_eq!(code(&["frobnicate"]), Some(64));
    assert_eq!(code(&["--help"]), Some(0));
    assert_eq!(code(&["--version"]), Some(0));
    assert_eq!(code(&["ingest", "--corpus", "missing.jsonl"]), Some(1));
    let c = fixture();
    let c = c.to_str().unwrap();
    assert_eq!(code(&["run", "--corpus", c, "--k", "17"]), Some(1));
    assert_eq!(code(&["run", "--corpus", c, "--backend", "gpt-9"]), Some(1));
    std::fs::write(dir.path().join("empty.jsonl"), "").unwrap();
    assert_eq!(code(&["run", "--corpus", c, "--backend", "replay:empty.jsonl"]), Some(2));
}

#[test]
fn report_renders_tables_and_repeat_summary() {
    let dir = tempfile::tempdir().unwrap();
    let c = fixture();
    let c = c.to_str().unwrap();
    for i in 0..3 {
        let name = format!("r{i}.jsonl");
        let rep = i.to_string();
        ok(&["run", "--corpus", c, "--backend", "random:1", "--repeat-index", &rep, "--results", &name], dir.path());
    }
    let out = ok(&["report", "--results", "r0.jsonl", "r1.jsonl", "r2.jsonl", "--format", "csv"], dir.path());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("approach,task,model,accuracy,f1\n"));
    assert!(text.contains("3 runs"));
    let out = ok(&["report", "--results", "r0.jsonl", "--format", "latex", "--reference"], dir.path());
    assert!(String::from_utf8(out.stdout).unwrap().contains("72.93 & 84.34"));
}

#[test]
fn ingest_and_embed() {
    let dir = tempfile::tempdir().unwrap();
    let c = fixture();
    let c = c.to_str().unwrap();
    let out = ok(&["ingest", "--corpus", c], dir.path());
    assert!(String::from_utf8(out.stdout).unwrap().contains("10 pairs"));
    ok(&["embed", "--corpus", c, "--cache", "e.cache", "--index-out", "train.idx"], dir.path());
    assert!(dir.path().join("e.cache").is_file());
    assert!(dir.path().join("train.idx").is_file());
    let out = ok(&["embed", "--corpus", c, "--cache", "e.cache"], dir.path());
    assert!(String::from_utf8(out.stdout).unwrap().contains("(0 new)"));
}
