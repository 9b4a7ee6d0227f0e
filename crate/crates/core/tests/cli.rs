use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_repoalign"));
    cmd.current_dir(dir).args(args).env_remove("REPOALIGN_SEED");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args, &[]);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn effective_seed(stderr: &[u8]) -> u64 {
    let text = String::from_utf8_lossy(stderr);
    let json = text.lines().find_map(|l| l.strip_prefix("effective config: ")).unwrap();
    serde_json::from_str::<serde_json::Value>(json).unwrap()["seed"].as_u64().unwrap()
}

#[test]
fn pipeline_from_synthetic_prs_to_ranked_list() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--pairs", "12", "--noise", "3", "--out", "prs.jsonl"]);
    let decisions = ok(d, &["curate", "--in", "prs.jsonl", "--out", "c.jsonl"]);
    assert_eq!(decisions.lines().count(), 1 + 15);

    let stats = ok(d, &["stats", "--corpus", "c.jsonl"]);
    assert!(stats.lines().count() >= 2, "{stats}");
    ok(d, &["graph", "--corpus", "c.jsonl"]);

    ok(d, &["train", "--corpus", "c.jsonl", "--out", "m", "--epochs", "2", "--dim", "16", "--heads", "2"]);
    for suffix in ["", ".vocab", ".disc", ".loss.csv"] {
        assert!(d.join(format!("m{suffix}")).exists(), "missing m{suffix}");
    }
    ok(d, &["index", "--corpus", "c.jsonl", "--params", "m", "--out", "i"]);

    let query = ["retrieve", "--index", "i", "--params", "m", "--query", "validate the order total", "--k", "4"];
    let ranked: serde_json::Value = serde_json::from_str(&ok(d, &query)).unwrap();
    assert_eq!(ranked.as_array().unwrap().len(), 4);

    let mut by_file = query.to_vec();
    by_file.extend(["--granularity", "file", "--corpus", "c.jsonl"]);
    let files: serde_json::Value = serde_json::from_str(&ok(d, &by_file)).unwrap();
    assert!(!files.as_array().unwrap().is_empty());

    let mut verified = query.to_vec();
    verified.extend(["--corpus", "c.jsonl", "--adversarial"]);
    let kept: serde_json::Value = serde_json::from_str(&ok(d, &verified)).unwrap();
    assert_eq!(kept.as_array().unwrap().len(), 4);

    let mut adversarial_files = by_file.clone();
    adversarial_files.push("--adversarial");
    assert_eq!(run(d, &adversarial_files, &[]).status.code(), Some(2));
}

#[test]
fn usage_and_domain_errors_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(run(d, &["retrieve", "--params", "m", "--query", "x"], &[]).status.code(), Some(2));
    assert_eq!(run(d, &["frobnicate"], &[]).status.code(), Some(2));
    assert_eq!(run(d, &["stats", "--corpus", "missing.jsonl"], &[]).status.code(), Some(1));
}

#[test]
fn seed_comes_from_flag_then_file_then_environment() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("cfg.toml"), "seed = 5\n").unwrap();
    let synth = ["synth", "--pairs", "2", "--out", "p.jsonl"];
    let with = |extra: &[&str], env: &[(&str, &str)]| {
        let args: Vec<&str> = extra.iter().chain(synth.iter()).copied().collect();
        effective_seed(&run(d, &args, env).stderr)
    };
    assert_eq!(with(&[], &[]), 42);
    assert_eq!(with(&[], &[("REPOALIGN_SEED", "9")]), 9);
    assert_eq!(with(&["--config", "cfg.toml"], &[("REPOALIGN_SEED", "9")]), 5);
    assert_eq!(with(&["--seed", "3", "--config", "cfg.toml"], &[("REPOALIGN_SEED", "9")]), 3);
}
