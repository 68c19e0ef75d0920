use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use regex::RegexBuilder;
use rumorscope::run_cli;
use rumorscope_core::corpus::normalize_tweet;
use rumorscope_core::theoryfilter::{parse_theory_configs, DEFAULT_THEORIES_TOML};
use serde_json::Value;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn run(args: &[&str]) -> i32 {
    let mut full = vec!["rumorscope"];
    full.extend_from_slice(args);
    run_cli(full)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_jsonl(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter_map(|l| serde_json::from_str(l).ok())
        .collect()
}

fn ingest_and_filter(root: &Path) -> PathBuf {
    let ingest = root.join("ingest");
    let filter = root.join("filter");
    let corpus = fixtures().join("corpus.jsonl");
    assert_eq!(
        run(&["ingest", "--input", s(&corpus), "--out", s(&ingest)]),
        0
    );
    assert_eq!(
        run(&[
            "filter",
            "--corpus",
            s(&ingest.join("corpus.jsonl")),
            "--out",
            s(&filter)
        ]),
        0
    );
    filter
}

#[test]
fn ingest_drops_broken_duplicate_and_foreign_lines() {
    let dir = tempfile::tempdir().unwrap();
    ingest_and_filter(dir.path());
    let raw = read_jsonl(&fixtures().join("corpus.jsonl"));
    let mut ids = HashSet::new();
    let expected = raw
        .iter()
        .filter(|v| {
            v["lang"]
                .as_str()
                .is_some_and(|l| l.to_ascii_lowercase().starts_with("en"))
        })
        .filter(|v| ids.insert(v["id"].as_str().unwrap().to_owned()))
        .count();
    let kept = read_jsonl(&dir.path().join("ingest/corpus.jsonl"));
    assert_eq!(kept.len(), expected);
    let report: Value = serde_json::from_slice(
        &std::fs::read(dir.path().join("ingest/ingest_report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["files"][0]["skipped"], 2);
    assert_eq!(report["duplicates_dropped"], 1);
}

#[test]
fn filter_counts_match_direct_regex_scan() {
    let dir = tempfile::tempdir().unwrap();
    let filter = ingest_and_filter(dir.path());
    let corpus = read_jsonl(&dir.path().join("ingest/corpus.jsonl"));
    let theories = parse_theory_configs(DEFAULT_THEORIES_TOML).unwrap();
    let mut sets: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for t in &theories {
        let res: Vec<_> = t
            .include_patterns
            .iter()
            .map(|p| {
                RegexBuilder::new(p)
                    .case_insensitive(t.case_insensitive)
                    .build()
                    .unwrap()
            })
            .collect();
        let ids = corpus
            .iter()
            .filter(|v| res.iter().any(|r| r.is_match(v["text"].as_str().unwrap())))
            .map(|v| v["id"].as_str().unwrap().to_owned())
            .collect();
        sets.insert(t.name.clone(), ids);
    }
    let partition: Value =
        serde_json::from_slice(&std::fs::read(filter.join("partition.json")).unwrap()).unwrap();
    for t in partition["theories"].as_array().unwrap() {
        let name = t["theory"].as_str().unwrap();
        let own = &sets[name];
        assert_eq!(t["count"].as_u64().unwrap() as usize, own.len(), "{name}");
        let multi = own
            .iter()
            .filter(|id| sets.iter().any(|(n, o)| n != name && o.contains(*id)))
            .count();
        assert_eq!(t["multi_count"].as_u64().unwrap() as usize, multi, "{name}");
        let on_disk: BTreeSet<String> = read_jsonl(&filter.join(format!("{name}.jsonl")))
            .iter()
            .map(|v| v["id"].as_str().unwrap().to_owned())
            .collect();
        assert_eq!(&on_disk, own);
    }
    for p in partition["pairwise"].as_array().unwrap() {
        let (a, b) = (
            &sets[p["theory_a"].as_str().unwrap()],
            &sets[p["theory_b"].as_str().unwrap()],
        );
        assert_eq!(
            p["count"].as_u64().unwrap() as usize,
            a.intersection(b).count()
        );
    }
    let union: BTreeSet<&String> = sets.values().flatten().collect();
    assert_eq!(
        partition["total_unique"].as_u64().unwrap() as usize,
        union.len()
    );
}

#[test]
fn sample_has_unique_normalized_texts() {
    let dir = tempfile::tempdir().unwrap();
    let filter = ingest_and_filter(dir.path());
    let out = dir.path().join("sample");
    assert_eq!(
        run(&[
            "sample",
            "--dataset",
            s(&filter.join("Lab.jsonl")),
            "--n",
            "120",
            "--seed",
            "4",
            "--out",
            s(&out)
        ]),
        0
    );
    let sample = read_jsonl(&out.join("sample.jsonl"));
    let texts: HashSet<String> = sample
        .iter()
        .map(|v| normalize_tweet(v["text"].as_str().unwrap()))
        .collect();
    assert_eq!(texts.len(), sample.len());
    let report: Value =
        serde_json::from_slice(&std::fs::read(out.join("sample_report.json")).unwrap()).unwrap();
    assert_eq!(report["drawn"], 120);
    assert_eq!(
        report["kept"].as_u64().unwrap() + report["duplicates_dropped"].as_u64().unwrap(),
        120
    );
    let template = std::fs::read_to_string(out.join("labels_template.csv")).unwrap();
    assert_eq!(template.lines().count(), sample.len() + 1);
}

fn train(filter: &Path, theory: &str, out: &Path, seed: &str) -> i32 {
    let f = fixtures();
    run(&[
        "train",
        "--dataset",
        s(&filter.join(format!("{theory}.jsonl"))),
        "--labels",
        s(&f.join(format!("labels_{theory}.csv"))),
        "--domains",
        s(&f.join("domains.csv")),
        "--seed",
        seed,
        "--out",
        s(out),
    ])
}

#[test]
fn training_is_reproducible_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let filter = ingest_and_filter(dir.path());
    let (a, b, c) = (
        dir.path().join("a"),
        dir.path().join("b"),
        dir.path().join("c"),
    );
    assert_eq!(train(&filter, "Gates", &a, "7"), 0);
    assert_eq!(train(&filter, "Gates", &b, "7"), 0);
    assert_eq!(train(&filter, "Gates", &c, "8"), 0);
    for f in ["model.json", "metrics.csv", "split.csv", "manifest.json"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    assert_ne!(
        std::fs::read(a.join("model.json")).unwrap(),
        std::fs::read(c.join("model.json")).unwrap()
    );
    let metrics = std::fs::read_to_string(a.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("theory,variant,accuracy,recall,precision,f1,change\nGates,rf,"));
}

/// filter, train, active, classify, sentiment, dtm and report into `root`.
fn pipeline(root: &Path) -> PathBuf {
    let f = fixtures();
    let filter = ingest_and_filter(root);
    let mut classify = vec![
        "classify".to_owned(),
        "--filter-dir".into(),
        s(&filter).into(),
    ];
    let mut report = vec![
        "report".to_owned(),
        "--filter-dir".into(),
        s(&filter).into(),
    ];
    for th in ["5G", "Lab"] {
        let t = root.join(format!("train_{th}"));
        assert_eq!(train(&filter, th, &t, "11"), 0);
        classify.extend(["--model".into(), format!("{th}={}", t.display())]);
        report.extend(["--model-dir".into(), s(&t).into()]);
    }
    let active = root.join("active_Lab");
    let code = run(&[
        "active",
        "--dataset",
        s(&filter.join("Lab.jsonl")),
        "--train-dir",
        s(&root.join("train_Lab")),
        "--oracle-labels",
        s(&f.join("truth_Lab.csv")),
        "--domains",
        s(&f.join("domains.csv")),
        "--seed",
        "11",
        "--k",
        "4",
        "--cycles",
        "3",
        "--out",
        s(&active),
    ]);
    assert_eq!(code, 0);
    report.extend(["--model-dir".into(), s(&active).into()]);
    let cls = root.join("classify");
    classify.extend([
        "--domains".into(),
        s(&f.join("domains.csv")).into(),
        "--out".into(),
        s(&cls).into(),
    ]);
    let args: Vec<&str> = classify.iter().map(String::as_str).collect();
    assert_eq!(run(&args), 0);

    let sent = root.join("sent");
    let preds = cls.join("predictions_Lab.csv");
    let dataset = filter.join("Lab.jsonl");
    assert_eq!(
        run(&[
            "sentiment",
            "--dataset",
            s(&dataset),
            "--labels",
            s(&preds),
            "--out",
            s(&sent)
        ]),
        0
    );
    let dtm = root.join("dtm");
    let code = run(&[
        "dtm",
        "--dataset",
        s(&dataset),
        "--labels",
        s(&preds),
        "--topics",
        "2,3",
        "--seed",
        "3",
        "--out",
        s(&dtm),
    ]);
    assert_eq!(code, 0);

    let out = root.join("report");
    report.extend([
        "--classify-dir".into(),
        s(&cls).into(),
        "--sentiment".into(),
        format!("Lab={}", sent.display()),
        "--dtm".into(),
        format!("Lab={}", dtm.display()),
        "--out".into(),
        s(&out).into(),
    ]);
    let args: Vec<&str> = report.iter().map(String::as_str).collect();
    assert_eq!(run(&args), 0);
    out
}

#[test]
fn full_pipeline_is_byte_identical_across_runs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (ra, rb) = (pipeline(a.path()), pipeline(b.path()));
    let ma = std::fs::read(ra.join("manifest.json")).unwrap();
    assert_eq!(ma, std::fs::read(rb.join("manifest.json")).unwrap());

    let manifest: Value = serde_json::from_slice(&ma).unwrap();
    let files: Vec<&str> = manifest["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["file"].as_str().unwrap())
        .collect();
    for f in [
        "table2_filtering.csv",
        "table3_labels.csv",
        "table4_metrics.csv",
        "sentiment_trend_Lab.csv",
        "topics_Lab_k3.csv",
    ] {
        assert!(files.contains(&f), "{f} missing");
    }
    let table4 = std::fs::read_to_string(ra.join("table4_metrics.csv")).unwrap();
    let variants: Vec<&str> = table4
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap())
        .collect();
    assert_eq!(variants, ["rf", "rf", "rf_active"]);
    let status: Value =
        serde_json::from_slice(&std::fs::read(a.path().join("active_Lab/status.json")).unwrap())
            .unwrap();
    assert_eq!(status["cycle"], 3);
    assert_eq!(status["complete"], true);
}

#[test]
fn active_resumes_a_finished_session_without_new_cycles() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixtures();
    let filter = ingest_and_filter(dir.path());
    let t = dir.path().join("train");
    assert_eq!(train(&filter, "Vax", &t, "2"), 0);
    let session = dir.path().join("session");
    let active = |out: &Path| {
        run(&[
            "active",
            "--dataset",
            s(&filter.join("Vax.jsonl")),
            "--train-dir",
            s(&t),
            "--oracle-labels",
            s(&f.join("truth_Vax.csv")),
            "--session-dir",
            s(&session),
            "--cycles",
            "2",
            "--out",
            s(out),
        ])
    };
    assert_eq!(active(&dir.path().join("a1")), 0);
    let audit = std::fs::read(session.join("audit.jsonl")).unwrap();
    assert_eq!(active(&dir.path().join("a2")), 0);
    assert_eq!(std::fs::read(session.join("audit.jsonl")).unwrap(), audit);
    let h = std::fs::read_to_string(dir.path().join("a2/metrics_history.csv")).unwrap();
    assert_eq!(h.lines().count(), 4);
    // the audit log is not empty, so the cycle count is frozen
    let code = run(&[
        "active",
        "--dataset",
        s(&filter.join("Vax.jsonl")),
        "--train-dir",
        s(&t),
        "--oracle-labels",
        s(&f.join("truth_Vax.csv")),
        "--session-dir",
        s(&session),
        "--cycles",
        "5",
        "--out",
        s(&dir.path().join("a3")),
    ]);
    assert_eq!(code, 2);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let filter = ingest_and_filter(dir.path());
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 5\n[sample]\nn = 30\n").unwrap();
    let out = dir.path().join("s");
    let code = run(&[
        "sample",
        "--config",
        s(&cfg),
        "--seed",
        "6",
        "--dataset",
        s(&filter.join("5G.jsonl")),
        "--out",
        s(&out),
    ]);
    assert_eq!(code, 0);
    let m: Value =
        serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["config"]["seed"], 6);
    assert_eq!(m["config"]["config"]["sample"]["n"], 30);
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let missing = dir.path().join("missing.jsonl");
    assert_eq!(
        run(&["filter", "--corpus", s(&missing), "--out", s(&out)]),
        2
    );
    assert_eq!(run(&["filter", "--corpus", s(&missing)]), 2);
    assert_eq!(run(&["filter", "--bogus"]), 2);
    assert_eq!(run(&["nonsense"]), 2);
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[split]\ntrain_fraction = 2.0\n").unwrap();
    assert_eq!(
        run(&[
            "filter",
            "--config",
            s(&cfg),
            "--corpus",
            s(&missing),
            "--out",
            s(&out)
        ]),
        2
    );
    std::fs::write(&cfg, "unknown_key = 1\n").unwrap();
    assert_eq!(
        run(&[
            "filter",
            "--config",
            s(&cfg),
            "--corpus",
            s(&missing),
            "--out",
            s(&out)
        ]),
        2
    );
    let theories = dir.path().join("t.toml");
    std::fs::write(&theories, "[[theory]]\nname = \"a/b\"\npatterns = ['x']\n").unwrap();
    let corpus = fixtures().join("corpus.jsonl");
    assert_eq!(
        run(&[
            "filter",
            "--theories",
            s(&theories),
            "--corpus",
            s(&corpus),
            "--out",
            s(&out)
        ]),
        2
    );
}

#[test]
fn runtime_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let labels = dir.path().join("l.csv");
    std::fs::write(&labels, "tweet_id,label\nx,misinfo\nx,not_misinfo\n").unwrap();
    let dataset = dir.path().join("d.jsonl");
    std::fs::write(&dataset, "").unwrap();
    let out = dir.path().join("o");
    assert_eq!(
        run(&[
            "train",
            "--dataset",
            s(&dataset),
            "--labels",
            s(&labels),
            "--out",
            s(&out)
        ]),
        1
    );
}

#[test]
fn agreement_between_tables() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    std::fs::write(
        &a,
        "tweet_id,label\n1,misinfo\n2,misinfo\n3,not_misinfo\n4,not_misinfo\n",
    )
    .unwrap();
    std::fs::write(
        &b,
        "tweet_id,label\n1,misinfo\n2,not_misinfo\n3,not_misinfo\n4,not_misinfo\n9,misinfo\n",
    )
    .unwrap();
    let out = dir.path().join("o");
    assert_eq!(
        run(&["agree", "--a", s(&a), "--b", s(&b), "--out", s(&out)]),
        0
    );
    let r: Value =
        serde_json::from_slice(&std::fs::read(out.join("agreement.json")).unwrap()).unwrap();
    // po = 3/4, pe = 1/2*1/4 + 1/2*3/4 = 1/2
    assert_eq!(r["n_overlap"], 4);
    assert!((r["kappa"].as_f64().unwrap() - 0.5).abs() < 1e-12);
}
