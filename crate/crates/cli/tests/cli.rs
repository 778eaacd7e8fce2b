use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use slln_cli::manifest::RunManifest;
use slln_core::genseq::read_path_binary;

const MINIMAL: &str = "\
seed = 11
generator.kind = iid
generator.horizon = 1024
hypothesis.gamma = 2
hypothesis.kappa = 1
hypothesis.beta = 0.75
experiment.num_paths = 8
";

fn slln(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slln")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.conf");
    fs::write(&path, text).unwrap();
    path
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn partition_thirteen() {
    let o = slln(&["partition", "13"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let rows: Vec<Vec<&str>> = text.lines().skip(1).take(3).map(|l| l.split_whitespace().collect()).collect();
    assert_eq!(rows[0], ["1", "3", "1", "{1..8}"]);
    assert_eq!(rows[1], ["2", "2", "3", "{9..12}"]);
    assert_eq!(rows[2], ["3", "0", "13", "{13}"]);
    assert!(text.contains("l = 3 <= log2(N) + 1 = 4.70"));
}

#[test]
fn partition_rejects_bad_n() {
    assert_eq!(slln(&["partition", "0"]).status.code(), Some(2));
    assert_eq!(slln(&["partition", "1.5"]).status.code(), Some(2));
}

#[test]
fn verify_exit_codes() {
    let ok = slln(&["verify", "--trials", "200"]);
    assert_eq!(ok.status.code(), Some(0), "{}", stdout(&ok));
    let fault = slln(&["verify", "--trials", "50", "--self-test-fault"]);
    assert_eq!(fault.status.code(), Some(1));
    assert!(stdout(&fault).contains("violation: gamma = "));
    assert_eq!(slln(&["verify", "--gamma", "1,-0.5"]).status.code(), Some(2));
    assert_eq!(slln(&["verify", "--gamma", "0"]).status.code(), Some(2));
}

#[test]
fn blocktree_prints_every_level() {
    let o = slln(&["blocktree", "--horizon", "8", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for k in 0..=3 {
        assert!(text.contains(&format!("k={k} ")), "{text}");
    }
}

#[test]
fn simulate_minimal_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), MINIMAL);
    let out = dir.path().join("out");
    let o = slln(&["simulate", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let census = String::from_utf8(read(&out, "census.csv")).unwrap();
    let lines: Vec<&str> = census.lines().collect();
    assert_eq!(lines[0], "path_index,num_bad,n_f");
    assert_eq!(lines.len(), 9);
    for idx in 0..8 {
        let values = read_path_binary(&read(&out, &format!("paths/path_{idx:06}.bin"))[..]).unwrap();
        assert_eq!(values.len(), 1024);
        let per_path = String::from_utf8(read(&out, &format!("census/path_{idx:06}.csv"))).unwrap();
        assert!(per_path.starts_with("k,i,block_sum,threshold,is_bad\n"));
        let num_bad: usize = lines[idx + 1].split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(per_path.lines().count(), num_bad + 1);
    }

    let manifest = RunManifest::parse(&String::from_utf8(read(&out, "manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.seed, 11);
    assert_eq!(manifest.outputs.len(), 1 + 2 * 8);
    manifest.verify_outputs(&out).unwrap();
}

#[test]
fn simulate_is_idempotent_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), MINIMAL);
    let run = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let mut args = vec!["simulate", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        assert_eq!(slln(&args).status.code(), Some(0));
        out
    };
    let a = run("a", &[]);
    let b = run("b", &[]);
    let c = run("c", &["--seed", "12"]);
    assert_eq!(read(&a, "census.csv"), read(&b, "census.csv"));
    assert_eq!(read(&a, "census/path_000003.csv"), read(&b, "census/path_000003.csv"));
    assert_eq!(read(&a, "paths/path_000005.bin"), read(&b, "paths/path_000005.bin"));
    assert_ne!(read(&a, "paths/path_000005.bin"), read(&c, "paths/path_000005.bin"));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let half = write_config(dir.path(), &MINIMAL.replace("0.75", "0.5"));
    let o = slln(&["simulate", half.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 6"));
    assert!(!dir.path().join("o").exists());

    let missing = dir.path().join("nope.conf");
    let o = slln(&["montecarlo", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.conf"));

    let unknown = write_config(dir.path(), &format!("{MINIMAL}generator.color = red\n"));
    let o = slln(&["simulate", unknown.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 8"));

    assert_eq!(slln(&["montecarlo", "--preset", "no-such-preset"]).status.code(), Some(2));
}

#[test]
fn montecarlo_reports_and_manifest_replay() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{MINIMAL}experiment.checkpoints = 16,64,256,1024\n").replace("= 8\n", "= 32\n");
    let config = write_config(dir.path(), &text);
    let first = dir.path().join("first");
    let o = slln(&["montecarlo", config.to_str().unwrap(), "--out", first.to_str().unwrap(), "--seed", "5"]);
    assert!(matches!(o.status.code(), Some(0 | 1)), "{}", String::from_utf8_lossy(&o.stderr));

    let summary: serde_json::Value = serde_json::from_slice(&read(&first, "summary.json")).unwrap();
    assert_eq!(summary["num_paths"], 32);
    assert_eq!(summary["lemma_failures"], 0);
    let expected_exit = if summary["passed"].as_object().unwrap().values().all(|v| v != false) { 0 } else { 1 };
    assert_eq!(o.status.code(), Some(expected_exit));
    let checkpoints = String::from_utf8(read(&first, "checkpoints.csv")).unwrap();
    assert_eq!(checkpoints.lines().count(), 5);

    let manifest_path = first.join("manifest.json");
    let manifest = RunManifest::parse(&fs::read_to_string(&manifest_path).unwrap()).unwrap();
    assert_eq!(manifest.seed, 5);
    assert_eq!(manifest.config["seed"], "5");
    manifest.verify_outputs(&first).unwrap();

    let replay = dir.path().join("replay");
    let o = slln(&["montecarlo", manifest_path.to_str().unwrap(), "--out", replay.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(expected_exit));
    for name in manifest.outputs.keys() {
        assert_eq!(read(&first, name), read(&replay, name), "{name}");
    }
}
