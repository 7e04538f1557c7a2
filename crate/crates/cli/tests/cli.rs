use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use asacd_cli::artifacts::{header_field, split_header, HEADER_PREFIX};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn core_fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}

fn asacd(args: &[&str]) -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_asacd"));
    c.args(args)
        .env_remove("ASACD_SEED")
        .env_remove("ASACD_CONFIG");
    c
}

fn run(args: &[&str]) -> Output {
    asacd(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Relative path to file contents for every file below `dir`.
fn read_tree(dir: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read_to_string(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn synth_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    for (out, seed) in [(&a, "42"), (&b, "42"), (&c, "43")] {
        let o = run(&[
            "synth",
            "--dialogues",
            "200",
            "--seed",
            seed,
            "--out",
            s(out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let ta = read_tree(&a);
    assert!(ta.contains_key("dialogues.jsonl"));
    assert_eq!(ta, read_tree(&b));
    assert_ne!(ta["dialogues.jsonl"], read_tree(&c)["dialogues.jsonl"]);
}

#[test]
fn analyze_three_utterances_matches_hand_counts() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "analyze",
        "--input",
        s(&fixture("three.csv")),
        "--out",
        s(dir.path()),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("prevalence.csv")).unwrap();
    let (header, body) = split_header(&text);
    assert!(header[0].starts_with(HEADER_PREFIX));
    assert_eq!(
        body,
        std::fs::read_to_string(fixture("three.prevalence.csv")).unwrap()
    );
}

#[test]
fn analyze_sample_matches_checked_in_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "analyze",
        "--input",
        s(&core_fixture("sample_500.csv")),
        "--out",
        s(dir.path()),
    ]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(dir.path().join("prevalence.csv")).unwrap();
    let expected = std::fs::read_to_string(core_fixture("sample_500.prevalence.csv")).unwrap();
    assert_eq!(split_header(&text).1, expected);
}

#[test]
fn usage_and_validation_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["synth", "--bogus", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error[usage]:"));

    let o = run(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));

    let missing = dir.path().join("nope.csv");
    let o = run(&[
        "analyze",
        "--input",
        s(&missing),
        "--out",
        s(&dir.path().join("x")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error["));

    let o = run(&[
        "synth",
        "--dist",
        "0.5,0.5",
        "--out",
        s(&dir.path().join("y")),
    ]);
    assert_eq!(o.status.code(), Some(1));

    let o = run(&["--version"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn error_kinds_map_to_exit_codes() {
    use asacd_cli::{CliError, EXIT_INTERNAL, EXIT_VALIDATION};
    assert_eq!(CliError::validation("x", "m").exit_code(), EXIT_VALIDATION);
    assert_eq!(CliError::internal("x", "m").exit_code(), EXIT_INTERNAL);
    assert_eq!(
        CliError::internal("io", "boom").to_string(),
        "error[io]: boom"
    );
}

#[test]
fn internal_failure_exits_two() {
    // A log directory that is a file cannot be opened by the server.
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain");
    std::fs::write(&file, "x").unwrap();
    let env = |_: &str| None;
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = asacd_cli::run(
        [
            "asacd",
            "serve",
            "--addr",
            "127.0.0.1:0",
            "--data-dir",
            s(&file),
        ],
        &env,
        &mut out,
        &mut err,
    );
    assert_eq!(code, 2, "{}", String::from_utf8_lossy(&err));
}

#[test]
fn seed_and_config_precedence_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("study.toml");
    std::fs::write(&cfg, "seed = 3\n[synth]\ndialogues = 50\n").unwrap();
    let seed_of = |out: &Path| {
        let t = std::fs::read_to_string(out.join("style_table.csv")).unwrap();
        let (h, _) = split_header(&t);
        header_field(&h, "seed").unwrap().to_string()
    };
    let total_of = |out: &Path| {
        let t = std::fs::read_to_string(out.join("dialogues.jsonl")).unwrap();
        t.lines().filter(|l| !l.starts_with('#')).count()
    };

    let a = dir.path().join("a");
    assert!(asacd(&["synth", "--out", s(&a)])
        .env("ASACD_CONFIG", &cfg)
        .output()
        .unwrap()
        .status
        .success());
    assert_eq!(seed_of(&a), "3");
    assert_eq!(total_of(&a), 50);

    let b = dir.path().join("b");
    let st = asacd(&["synth", "--out", s(&b)])
        .env("ASACD_CONFIG", &cfg)
        .env("ASACD_SEED", "7")
        .output()
        .unwrap()
        .status;
    assert!(st.success());
    assert_eq!(seed_of(&b), "7");

    let c = dir.path().join("c");
    let st = asacd(&["synth", "--seed", "9", "--out", s(&c)])
        .env("ASACD_CONFIG", &cfg)
        .env("ASACD_SEED", "7")
        .output()
        .unwrap()
        .status;
    assert!(st.success());
    assert_eq!(seed_of(&c), "9");

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[synth]\ndialog = 5\n").unwrap();
    let o = run(&[
        "synth",
        "--config",
        s(&bad),
        "--out",
        s(&dir.path().join("d")),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn every_artifact_carries_provenance_and_reruns_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let input = core_fixture("sample_500.csv");
    let three = fixture("three.csv");
    let runs: Vec<Vec<&str>> = vec![
        vec!["analyze", "--input", s(&input)],
        vec!["mine", "--input", s(&input), "--folds", "3"],
        vec!["calibrate", "--input", s(&input)],
        vec!["score", "--input", s(&three)],
        vec!["reframe", "--input", s(&three)],
        vec!["simulate", "--seeds", "3"],
    ];
    for args in runs {
        let mut trees = Vec::new();
        for k in 0..2 {
            let out = dir.path().join(format!("{}-{k}", args[0]));
            let mut full = args.clone();
            full.extend(["--out", s(&out)]);
            let o = run(&full);
            assert!(
                o.status.success(),
                "{args:?}: {}",
                String::from_utf8_lossy(&o.stderr)
            );
            trees.push(read_tree(&out));
        }
        assert!(!trees[0].is_empty());
        for (name, text) in &trees[0] {
            let (h, _) = split_header(text);
            assert!(
                h.first().is_some_and(|l| l.starts_with(HEADER_PREFIX)),
                "{name}"
            );
            assert_eq!(
                header_field(&h, "config_sha256").map(str::len),
                Some(64),
                "{name}"
            );
        }
        assert_eq!(trees[0], trees[1], "{args:?}");
    }
}

#[test]
fn nothing_is_written_outside_out() {
    let dir = tempfile::tempdir().unwrap();
    let work = dir.path().join("work");
    std::fs::create_dir(&work).unwrap();
    std::fs::copy(fixture("three.csv"), work.join("three.csv")).unwrap();
    for args in [
        vec!["ingest", "--input", "three.csv", "--out", "out/ingest"],
        vec!["analyze", "--input", "three.csv", "--out", "out/analyze"],
        vec!["synth", "--dialogues", "20", "--out", "out/synth"],
        vec!["train-scorer", "--out", "out/assets"],
        vec![
            "score",
            "--input",
            "three.csv",
            "--assets",
            "out/assets",
            "--out",
            "out/score",
        ],
        vec!["simulate", "--seeds", "2", "--out", "out/sim"],
        vec![
            "report",
            "--from",
            "out/analyze",
            "--from",
            "out/sim",
            "--out",
            "out/report",
        ],
    ] {
        let o = asacd(&args).current_dir(&work).output().unwrap();
        assert!(
            o.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    let mut top: Vec<String> = std::fs::read_dir(&work)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    top.sort();
    assert_eq!(top, ["out", "three.csv"]);
    let report = read_tree(&work.join("out/report"));
    assert!(report.contains_key("index.csv"));
    assert!(report.keys().any(|k| k.starts_with("analyze/")));
    assert!(report.keys().any(|k| k.starts_with("simulate/")));
}

#[test]
fn paper_demo_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "simulate",
        "--preset",
        "paper-demo",
        "--seeds",
        "100",
        "--out",
        s(dir.path()),
    ]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(dir.path().join("ensemble.jsonl")).unwrap();
    let line = split_header(&text).1.lines().next().unwrap();
    let e: serde_json::Value = serde_json::from_str(line).unwrap();
    let inter = e["mean_uplift_intervention"].as_f64().unwrap();
    let ctrl = e["mean_uplift_control"].as_f64().unwrap();
    assert_eq!(e["seeds"], 100);
    assert!(e["frac_intervention_exceeds"].as_f64().unwrap() >= 0.95);
    assert!(inter >= 5.0 * ctrl, "{inter} vs {ctrl}");
    assert!(e["mean_d_marker"].as_f64().unwrap() > 0.8);
    let summary = std::fs::read_to_string(dir.path().join("simulate_summary.txt")).unwrap();
    assert!(summary.to_lowercase().contains("simulat"));
}
