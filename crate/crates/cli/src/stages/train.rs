use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use anyhow::Context;
use rumorscope_core::active::cohen_kappa;
use rumorscope_core::corpus::Tweet;
use rumorscope_core::forest::{evaluate, stratified_split, train_forest, ForestModel, TrainingSet};
use rumorscope_core::label::Label;
use rumorscope_core::report::{write_table4_csv, LabelDistribution, MetricsRow};
use rumorscope_core::textfeat::{
    build_feature_matrix, build_vocabulary, tokenize, FeatureMatrix, Vocabulary,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{check_name, domains, input_ref, optional_ref, stopwords};
use crate::config::RunConfig;
use crate::files::{file_stem, read_json, read_labels, read_tweets, LabelRow, StageOutput};
use crate::{AgreeArgs, CliError, TrainArgs};

pub(crate) const MODEL_FILE: &str = "model.json";
pub(crate) const VOCAB_FILE: &str = "vocab.json";
pub(crate) const SPLIT_FILE: &str = "split.csv";
pub(crate) const METRICS_FILE: &str = "metrics.json";
pub(crate) const LABELS_FILE: &str = "label_distribution.json";

/// One labelled tweet and the part of the split it went to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub(crate) struct SplitRow {
    pub tweet_id: String,
    pub label: Label,
    /// `train`, `test` or `excluded` (uncertain labels).
    pub set: String,
}

pub(crate) fn read_split(path: &Path) -> Result<Vec<SplitRow>, CliError> {
    crate::files::require(path)?;
    let mut rdr =
        csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let rows: Result<Vec<SplitRow>, _> = rdr.deserialize().collect();
    Ok(rows.with_context(|| format!("reading {}", path.display()))?)
}

/// Vocabulary fitted on every tweet of the dataset.
pub(crate) fn fit_vocabulary(tweets: &[Tweet], config: &RunConfig) -> Result<Vocabulary, CliError> {
    let sw = stopwords(config)?;
    let docs: Vec<Vec<String>> = tweets.iter().map(|t| tokenize(&t.text, &sw)).collect();
    Ok(build_vocabulary(
        &docs,
        config.features.min_df_fraction,
        config.features.bigrams,
    )
    .map_err(anyhow::Error::from)?)
}

pub(crate) fn features(
    docs: &[Tweet],
    context: Option<&Path>,
    domain_flag: Option<&Path>,
    vocab: &Vocabulary,
    config: &RunConfig,
) -> Result<FeatureMatrix, CliError> {
    let sw = stopwords(config)?;
    let flagged = domains(domain_flag, config)?;
    let ctx;
    let context: &[Tweet] = match context {
        Some(p) => {
            ctx = read_tweets(p)?;
            &ctx
        }
        None => docs,
    };
    Ok(build_feature_matrix(docs, context, vocab, &sw, &flagged))
}

pub(crate) fn load_model(dir: &Path) -> Result<(ForestModel, Vocabulary), CliError> {
    let model_path = dir.join(MODEL_FILE);
    crate::files::require(&model_path)?;
    let bytes =
        std::fs::read(&model_path).with_context(|| format!("reading {}", model_path.display()))?;
    let model = ForestModel::from_json_slice(&bytes)
        .with_context(|| format!("parsing {}", model_path.display()))?;
    let vocab: Vocabulary = read_json(&dir.join(VOCAB_FILE))?;
    if vocab.snapshot_hash() != model.vocab_hash {
        return Err(anyhow::anyhow!(
            "{}: model and vocabulary do not belong together",
            dir.display()
        )
        .into());
    }
    Ok((model, vocab))
}

pub(crate) fn distribution(
    theory: &str,
    labels: impl IntoIterator<Item = Label>,
) -> LabelDistribution {
    let mut d = LabelDistribution {
        theory: theory.to_owned(),
        misinfo: 0,
        not_misinfo: 0,
    };
    for l in labels {
        match l {
            Label::Misinfo => d.misinfo += 1,
            Label::NotMisinfo => d.not_misinfo += 1,
            Label::Uncertain => {}
        }
    }
    d
}

pub(crate) fn write_split_csv(rows: &[SplitRow], out: &mut Vec<u8>) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn run(args: &TrainArgs, out: &Path, config: &RunConfig) -> Result<(), CliError> {
    let theory = match &args.theory {
        Some(t) => t.clone(),
        None => file_stem(&args.dataset)?,
    };
    check_name(&theory)?;
    let tweets = read_tweets(&args.dataset)?;
    let labels = read_labels(&args.labels)?;
    let vocab = fit_vocabulary(&tweets, config)?;

    let label_of: HashMap<&str, Label> = labels
        .iter()
        .map(|r| (r.tweet_id.as_str(), r.label))
        .collect();
    let mut seen = std::collections::HashSet::new();
    let labelled: Vec<Tweet> = tweets
        .iter()
        .filter(|t| {
            label_of
                .get(t.id.as_str())
                .is_some_and(|l| l.as_class().is_some())
                && seen.insert(t.id.as_str())
        })
        .cloned()
        .collect();
    let in_dataset: std::collections::HashSet<&str> =
        tweets.iter().map(|t| t.id.as_str()).collect();
    let unknown = labels
        .iter()
        .filter(|r| !in_dataset.contains(r.tweet_id.as_str()))
        .count();
    if unknown > 0 {
        log::warn!("train: {unknown} labelled ids are not in the dataset and were ignored");
    }
    let fm = features(
        &labelled,
        args.context.as_deref(),
        args.domains.as_deref(),
        &vocab,
        config,
    )?;
    let ys: Vec<bool> = labelled
        .iter()
        .map(|t| label_of[t.id.as_str()] == Label::Misinfo)
        .collect();
    let split = stratified_split(
        &fm.doc_ids,
        &ys,
        config.split.train_fraction,
        config.split.balanced,
        config.seed,
    )
    .map_err(anyhow::Error::from)?;

    let mut ts = TrainingSet {
        n_features: fm.n_features(),
        ..Default::default()
    };
    for &i in &split.train {
        ts.push(fm.doc_ids[i].clone(), fm.design_row(i), ys[i]);
    }
    let model =
        train_forest(&ts, &vocab.snapshot_hash(), &config.forest()).map_err(anyhow::Error::from)?;
    let test_rows: Vec<_> = split.test.iter().map(|&i| fm.design_row(i)).collect();
    let test_labels: Vec<bool> = split.test.iter().map(|&i| ys[i]).collect();
    let metrics = evaluate(&model, &test_rows, &test_labels).map_err(anyhow::Error::from)?;
    log::info!(
        "train: {theory} f1 {:.4} on {} test tweets",
        metrics.f1,
        test_rows.len()
    );

    let mut split_rows: Vec<SplitRow> = Vec::new();
    for (set, idx) in [("train", &split.train), ("test", &split.test)] {
        split_rows.extend(idx.iter().map(|&i| SplitRow {
            tweet_id: fm.doc_ids[i].clone(),
            label: Label::from_class(ys[i]),
            set: set.into(),
        }));
    }
    split_rows.extend(
        labels
            .iter()
            .filter(|r| r.label == Label::Uncertain && in_dataset.contains(r.tweet_id.as_str()))
            .map(|r| SplitRow {
                tweet_id: r.tweet_id.clone(),
                label: r.label,
                set: "excluded".into(),
            }),
    );
    split_rows.sort_by(|a, b| a.tweet_id.cmp(&b.tweet_id));

    let rows = vec![MetricsRow {
        theory: theory.clone(),
        variant: "rf".into(),
        metrics,
    }];
    let dist = vec![distribution(
        &theory,
        labelled.iter().map(|t| label_of[t.id.as_str()]),
    )];
    let mut output = StageOutput::create(out)?;
    output.write(
        MODEL_FILE,
        &model.to_json_bytes().map_err(anyhow::Error::from)?,
    )?;
    output.json(VOCAB_FILE, &vocab)?;
    output.csv(SPLIT_FILE, |b| write_split_csv(&split_rows, b))?;
    output.csv("metrics.csv", |b| Ok(write_table4_csv(&rows, b)?))?;
    output.json(METRICS_FILE, &rows)?;
    output.json(LABELS_FILE, &dist)?;
    let inputs = json!({
        "theory": theory,
        "dataset": input_ref(&args.dataset)?,
        "labels": input_ref(&args.labels)?,
        "context": optional_ref(args.context.as_deref())?,
        "domains": optional_ref(args.domains.as_deref().or(config.paths.domains.as_deref()))?,
    });
    output.finish("train", inputs, config)?;
    Ok(())
}

/// Agreement on the tweets both tables label.
pub(crate) fn agree(
    args: &AgreeArgs,
    out: Option<&Path>,
    config: &RunConfig,
) -> Result<(), CliError> {
    let index = |rows: Vec<LabelRow>| {
        rows.into_iter()
            .map(|r| (r.tweet_id, r.label))
            .collect::<BTreeMap<_, _>>()
    };
    let a = index(read_labels(&args.a)?);
    let b = index(read_labels(&args.b)?);
    let (xs, ys): (Vec<Label>, Vec<Label>) = a
        .iter()
        .filter_map(|(id, la)| b.get(id).map(|lb| (*la, *lb)))
        .unzip();
    if xs.is_empty() {
        return Err(CliError::Usage(
            "the two label tables share no tweet ids".into(),
        ));
    }
    let report = cohen_kappa(&xs, &ys).map_err(anyhow::Error::from)?;
    println!(
        "overlap {}  agreement {:.4}  kappa {:.4}",
        report.n_overlap, report.agreement, report.kappa
    );
    if let Some(dir) = out {
        let mut output = StageOutput::create(dir)?;
        output.json("agreement.json", &report)?;
        let inputs = json!({ "a": input_ref(&args.a)?, "b": input_ref(&args.b)? });
        output.finish("agree", inputs, config)?;
    }
    Ok(())
}
