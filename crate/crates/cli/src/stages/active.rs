use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use chrono::Utc;
use rumorscope_core::active::{
    ActiveSession, BatchItem, LabelSource, LabeledExample, OracleResponse, PoolItem, SessionSeed,
    TestSet,
};
use rumorscope_core::corpus::normalize_tweet;
use rumorscope_core::label::Label;
use rumorscope_core::report::{write_table4_csv, MetricsRow};
use rumorscope_server::{
    init_session_dir, metrics_csv, serve as serve_http, Overrides, ServerConfig, SessionStore,
    SEED_FILE,
};
use serde_json::json;

use super::input_ref;
use super::train::{
    distribution, features, read_split, SplitRow, LABELS_FILE, METRICS_FILE, MODEL_FILE,
    SPLIT_FILE, VOCAB_FILE,
};
use crate::config::RunConfig;
use crate::files::{read_json, read_labels, read_tweets, write_labels_csv, LabelRow, StageOutput};
use crate::{ActiveArgs, CliError, ServeArgs};

/// Annotator id recorded for labels carried over from the training split.
const SEED_ANNOTATOR: &str = "seed";

fn seed_from_train(args: &ActiveArgs, config: &RunConfig) -> Result<SessionSeed, CliError> {
    let tweets = read_tweets(&args.dataset)?;
    let vocab = read_json(&args.train_dir.join(VOCAB_FILE))?;
    let split = read_split(&args.train_dir.join(SPLIT_FILE))?;
    let fm = features(
        &tweets,
        args.context.as_deref(),
        args.domains.as_deref(),
        &vocab,
        config,
    )?;

    let by_set = |set: &str| -> HashMap<&str, &SplitRow> {
        split
            .iter()
            .filter(|r| r.set == set)
            .map(|r| (r.tweet_id.as_str(), r))
            .collect()
    };
    let test_rows = by_set("test");
    let mut test = TestSet::default();
    let mut items = Vec::new();
    let mut seen = HashSet::new();
    for (i, t) in tweets.iter().enumerate() {
        if !seen.insert(t.id.as_str()) {
            continue;
        }
        match test_rows.get(t.id.as_str()) {
            Some(r) => {
                test.ids.push(t.id.clone());
                test.rows.push(fm.design_row(i));
                test.labels.push(r.label == Label::Misinfo);
            }
            None => items.push(PoolItem {
                id: t.id.clone(),
                text: normalize_tweet(&t.text),
                row: fm.design_row(i),
            }),
        }
    }
    let in_pool: HashSet<&str> = items.iter().map(|it| it.id.as_str()).collect();
    let seed_labels = split
        .iter()
        .filter(|r| r.set != "test" && in_pool.contains(r.tweet_id.as_str()))
        .map(|r| LabeledExample {
            tweet_id: r.tweet_id.clone(),
            label: r.label,
            source: LabelSource::Human {
                annotator_id: SEED_ANNOTATOR.into(),
            },
            round: 0,
        })
        .collect();
    Ok(SessionSeed {
        config: config.active(),
        vocab_hash: fm.vocab_hash.clone(),
        n_features: fm.n_features(),
        items,
        seed_labels,
        test,
    })
}

fn overrides(k: Option<usize>, cycles: Option<usize>) -> Overrides {
    Overrides {
        k_per_cycle: k,
        n_cycles: cycles,
    }
}

fn open_or_create(
    dir: &Path,
    args: &ActiveArgs,
    config: &RunConfig,
) -> Result<SessionStore, CliError> {
    if dir.join(SEED_FILE).exists() {
        log::info!("active: reopening session in {}", dir.display());
    } else {
        let seed = seed_from_train(args, config)?;
        init_session_dir(dir, &seed).map_err(anyhow::Error::from)?;
    }
    let store = SessionStore::open(dir, overrides(args.k, args.cycles)).map_err(|e| match e {
        rumorscope_server::StoreError::Locked(_) => CliError::Usage(e.to_string()),
        e => anyhow::Error::from(e).into(),
    })?;
    Ok(store)
}

/// Answers from a label table; tweets it does not cover count as uncertain.
fn scripted(
    batch: &[BatchItem],
    truth: &HashMap<String, Label>,
    annotator: &str,
) -> Vec<OracleResponse> {
    batch
        .iter()
        .map(|b| OracleResponse {
            tweet_id: b.tweet_id.clone(),
            label: truth.get(&b.tweet_id).copied().unwrap_or(Label::Uncertain),
            annotator_id: annotator.to_owned(),
        })
        .collect()
}

/// Prompts on the terminal; `None` when the annotator quits.
fn prompt(
    batch: &[BatchItem],
    cycle: usize,
    annotator: &str,
) -> anyhow::Result<Option<Vec<OracleResponse>>> {
    let stdin = std::io::stdin();
    let mut lines = stdin.lock().lines();
    let mut out = Vec::with_capacity(batch.len());
    for b in batch {
        loop {
            print!("\n[cycle {cycle}] p={:.2}\n{}\n(m)isinfo / (n)ot misinfo / (u)ncertain / (q)uit > ", b.proba, b.text);
            std::io::stdout().flush()?;
            let Some(line) = lines.next().transpose()? else {
                return Ok(None);
            };
            let label = match line.trim() {
                "m" => Label::Misinfo,
                "n" => Label::NotMisinfo,
                "u" => Label::Uncertain,
                "q" => return Ok(None),
                _ => continue,
            };
            out.push(OracleResponse {
                tweet_id: b.tweet_id.clone(),
                label,
                annotator_id: annotator.to_owned(),
            });
            break;
        }
    }
    Ok(Some(out))
}

fn runtime() -> anyhow::Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?)
}

pub(crate) fn run(args: &ActiveArgs, out: &Path, config: &RunConfig) -> Result<(), CliError> {
    let session_dir = args
        .session_dir
        .clone()
        .unwrap_or_else(|| out.join("session"));
    let annotator = args.annotator.clone().unwrap_or_else(|| "annotator".into());
    let mut store = open_or_create(&session_dir, args, config)?;

    if args.serve {
        drop(store);
        let server = ServerConfig {
            addr: args.addr,
            session_dir: session_dir.clone(),
            overrides: Overrides::default(),
            ui_dir: args.ui_dir.clone(),
        };
        runtime()?
            .block_on(serve_http(server))
            .map_err(anyhow::Error::from)?;
        store =
            SessionStore::open(&session_dir, Overrides::default()).map_err(anyhow::Error::from)?;
    } else if let Some(path) = &args.oracle_labels {
        let truth: HashMap<String, Label> = read_labels(path)?
            .into_iter()
            .map(|r| (r.tweet_id, r.label))
            .collect();
        while !store.session().is_complete() {
            let responses = scripted(store.session().batch(), &truth, &annotator);
            let outcome = store
                .apply(&responses, Utc::now())
                .map_err(anyhow::Error::from)?;
            log::info!(
                "active: cycle {} f1 {:.4}, {} propagated",
                outcome.cycle,
                outcome.metrics.f1,
                outcome.propagated.len()
            );
        }
    } else {
        while !store.session().is_complete() {
            let cycle = store.session().cycle() + 1;
            let Some(responses) = prompt(store.session().batch(), cycle, &annotator)? else {
                log::info!("active: stopped before cycle {cycle}; rerun to resume");
                break;
            };
            store
                .apply(&responses, Utc::now())
                .map_err(anyhow::Error::from)?;
        }
    }
    export(store.session(), args, out, config, &session_dir)
}

fn source_annotator(ex: &LabeledExample) -> String {
    match &ex.source {
        LabelSource::Human { annotator_id } => annotator_id.clone(),
        LabelSource::Propagated { from_id, .. } => format!("propagated:{from_id}"),
        LabelSource::Resolved => "resolved".into(),
    }
}

fn export(
    session: &ActiveSession,
    args: &ActiveArgs,
    out: &Path,
    config: &RunConfig,
    session_dir: &Path,
) -> Result<(), CliError> {
    let theory = read_json::<Vec<MetricsRow>>(&args.train_dir.join(METRICS_FILE))?
        .into_iter()
        .next()
        .map(|r| r.theory)
        .ok_or_else(|| CliError::Usage(format!("{} lists no metrics", args.train_dir.display())))?;
    let labels: Vec<LabelRow> = session
        .labeled()
        .values()
        .map(|ex| LabelRow {
            tweet_id: ex.tweet_id.clone(),
            label: ex.label,
            annotator_id: Some(source_annotator(ex)),
        })
        .collect();
    let history = session.metrics_history();
    let mut rows = vec![MetricsRow {
        theory: theory.clone(),
        variant: "rf".into(),
        metrics: history[0],
    }];
    if history.len() > 1 {
        rows.push(MetricsRow {
            theory: theory.clone(),
            variant: "rf_active".into(),
            metrics: history[history.len() - 1],
        });
    }
    let mut dist_labels: Vec<Label> = session.labeled().values().map(|ex| ex.label).collect();
    dist_labels.extend(
        session
            .seed()
            .test
            .labels
            .iter()
            .map(|&y| Label::from_class(y)),
    );

    let mut output = StageOutput::create(out)?;
    output.csv("labels_active.csv", |b| write_labels_csv(&labels, b))?;
    output.write(
        MODEL_FILE,
        &session
            .model()
            .to_json_bytes()
            .map_err(anyhow::Error::from)?,
    )?;
    let vocab = std::fs::read(args.train_dir.join(VOCAB_FILE)).map_err(anyhow::Error::from)?;
    output.write(VOCAB_FILE, &vocab)?;
    output.write("metrics_history.csv", metrics_csv(history).as_bytes())?;
    output.csv("metrics.csv", |b| Ok(write_table4_csv(&rows, b)?))?;
    output.json(METRICS_FILE, &rows)?;
    output.json(LABELS_FILE, &vec![distribution(&theory, dist_labels)])?;
    output.json("status.json", &session.status())?;
    let inputs = json!({
        "dataset": input_ref(&args.dataset)?,
        "train_dir": input_ref(&args.train_dir)?,
        "oracle_labels": super::optional_ref(args.oracle_labels.as_deref())?,
        "session": session_dir.file_name().map(|s| s.to_string_lossy().into_owned()),
    });
    output.finish("active", inputs, config)?;
    Ok(())
}

pub(crate) fn serve(args: &ServeArgs) -> Result<(), CliError> {
    if !args.session_dir.join(SEED_FILE).exists() {
        return Err(CliError::Usage(format!(
            "{} holds no session; create one with `rumorscope active --serve`",
            args.session_dir.display()
        )));
    }
    let server = ServerConfig {
        addr: args.addr,
        session_dir: args.session_dir.clone(),
        overrides: overrides(args.k, args.cycles),
        ui_dir: args.ui_dir.clone(),
    };
    runtime()?
        .block_on(serve_http(server))
        .map_err(anyhow::Error::from)?;
    Ok(())
}
