//! The gated pipeline over the committed mock batch, driven through the CLI.

mod common;

use std::path::{Path, PathBuf};
use vimguard::cli::run;
use vimguard::pipeline::{read_outcomes, OutcomeDecision};

struct Setup {
    _tmp: tempfile::TempDir,
    models: PathBuf,
    index: PathBuf,
    root: PathBuf,
}

const CLAIM_DECISIONS: [OutcomeDecision; 7] = [
    OutcomeDecision::Misinformative,
    OutcomeDecision::Misinformative,
    OutcomeDecision::Misinformative,
    OutcomeDecision::HarmlessVerified,
    OutcomeDecision::HarmlessVerified,
    OutcomeDecision::HarmlessVerified,
    OutcomeDecision::UnverifiableHarmless,
];

fn setup() -> Setup {
    let tmp = tempfile::tempdir().unwrap();
    let models = tmp.path().join("models");
    let index = tmp.path().join("index");
    common::build_models(&models, 11);
    let root = common::mock_batch_dir();
    let code = run([
        "vimguard",
        "index",
        "build",
        "--corpus",
        root.join("corpus.jsonl").to_str().unwrap(),
        "--out",
        index.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    Setup {
        models,
        index,
        root,
        _tmp: tmp,
    }
}

fn check(s: &Setup, out: &Path, extra: &[&str]) -> i32 {
    check_with(s, &s.root.join("script.json"), out, extra)
}

fn check_with(s: &Setup, script: &Path, out: &Path, extra: &[&str]) -> i32 {
    let mut args = vec![
        "vimguard".to_string(),
        "check".into(),
        "--manifest".into(),
        s.root.join("manifest.jsonl").to_str().unwrap().into(),
        "--models".into(),
        s.models.to_str().unwrap().into(),
        "--index".into(),
        s.index.to_str().unwrap().into(),
        "--client".into(),
        "mock".into(),
        "--mock-script".into(),
        script.to_str().unwrap().into(),
        "--out".into(),
        out.to_str().unwrap().into(),
    ];
    args.extend(extra.iter().map(|a| a.to_string()));
    run(args)
}

#[test]
fn gate_counts_and_decisions() {
    let s = setup();
    let out = s._tmp.path().join("outcomes.jsonl");
    assert_eq!(check(&s, &out, &["--no-cache"]), 0);
    let r = read_outcomes(&out).unwrap();
    assert_eq!(r.outcomes.len(), common::N_BUNDLES);
    let mut adjudicated = 0;
    for (i, o) in r.outcomes.iter().enumerate() {
        assert_eq!(o.bundle_id, format!("mb_{i:02}"));
        assert!(o.error.is_none(), "{:?}", o.error);
        let d = o.decision.unwrap();
        if let Some(k) = common::CLAIM_SLOTS.iter().position(|&c| c == i) {
            adjudicated += 1;
            assert_eq!(d, CLAIM_DECISIONS[k], "{}", o.bundle_id);
            assert_eq!(o.api_calls.database, 1);
            assert!(o.verdict.is_some());
        } else {
            assert_eq!(d, OutcomeDecision::HarmlessNoClaim, "{}", o.bundle_id);
            assert_eq!((o.api_calls.llm, o.api_calls.database), (0, 0));
            assert!(o.verdict.is_none());
        }
    }
    assert_eq!(adjudicated, 7);
    assert_eq!(r.summary.api_calls.database, 7);
}

#[test]
fn jobs_and_cache_do_not_change_the_stream() {
    let s = setup();
    let dir = s._tmp.path();
    let cache = dir.join("cache");
    let serial = dir.join("serial.jsonl");
    let parallel = dir.join("parallel.jsonl");
    let cached = dir.join("cached.jsonl");
    assert_eq!(check(&s, &serial, &["--jobs", "1", "--no-cache"]), 0);
    assert_eq!(check(&s, &parallel, &["--jobs", "8", "--no-cache"]), 0);
    assert_eq!(std::fs::read(&serial).unwrap(), std::fs::read(&parallel).unwrap());
    let cache_arg = cache.to_str().unwrap();
    assert_eq!(check(&s, &cached, &["--cache-dir", cache_arg]), 0);
    assert!(std::fs::read_dir(&cache).unwrap().count() > 0);
    // second run replays every outcome from the cache
    assert_eq!(check(&s, &cached, &["--cache-dir", cache_arg, "--jobs", "4"]), 0);
    assert_eq!(std::fs::read(&serial).unwrap(), std::fs::read(&cached).unwrap());
}

#[test]
fn eval_over_check_output() {
    let s = setup();
    let dir = s._tmp.path();
    let outcomes = dir.join("outcomes.jsonl");
    let report = dir.join("report");
    assert_eq!(check(&s, &outcomes, &["--no-cache"]), 0);
    let code = run([
        "vimguard",
        "eval",
        "--outcomes",
        outcomes.to_str().unwrap(),
        "--labels",
        s.root.join("labels.jsonl").to_str().unwrap(),
        "--comparison",
        common::fixtures().join("comparison.csv").to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(report.join("report.json")).unwrap()).unwrap();
    assert_eq!(json["n_items"], 20);
    assert_eq!(json["n_errors"], 0);
    // every misinformative item is caught and scores above every other item
    assert_eq!(json["auroc"], 1.0);
    assert_eq!(json["f1"], 1.0);
    assert_eq!(json["api_calls"], 16 + 7);
    let table = std::fs::read_to_string(report.join("report.txt")).unwrap();
    assert!(table.contains("vimguard (this run)"), "{table}");
    assert!(table.contains("ClaimBuster"), "{table}");
    assert!(report.join("records.csv").exists());
    assert!(report.join("config.toml").exists());
}

#[test]
fn missing_script_entries_are_isolated_errors() {
    let s = setup();
    let dir = s._tmp.path();
    let script = dir.join("empty.json");
    std::fs::write(&script, "{}").unwrap();
    let out = dir.join("o.jsonl");
    assert_eq!(check_with(&s, &script, &out, &["--no-cache"]), 0);
    let r = read_outcomes(&out).unwrap();
    assert_eq!(r.summary.n_errors, 7);
    for o in r.outcomes.iter().filter(|o| o.error.is_some()) {
        assert!(o.decision.is_none());
        assert_eq!(o.api_calls.llm, 1);
    }
}
