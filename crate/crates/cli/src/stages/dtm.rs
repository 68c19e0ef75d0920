use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use anyhow::Context;
use chrono::{DateTime, Duration, Utc};
use rumorscope_core::corpus::SliceGrid;
use rumorscope_core::dtm::{
    compare_topic_counts, slice_topic_mass, split_heldout, write_topic_csv, Doc, TopicCountReport,
};
use rumorscope_core::label::Label;
use rumorscope_core::textfeat::{build_vocabulary, tokenize, vectorize};
use serde_json::json;

use super::{input_ref, optional_ref, stopwords};
use crate::config::RunConfig;
use crate::files::{read_labels, read_tweets, StageOutput};
use crate::{ClassArg, CliError, DtmArgs};

pub(crate) const TOPIC_COUNTS_FILE: &str = "topic_counts.json";

pub(crate) fn model_file(k: usize) -> String {
    format!("model_k{k}.json")
}

pub(crate) fn mass_file(k: usize) -> String {
    format!("mass_k{k}.json")
}

fn class_label(c: ClassArg) -> Label {
    match c {
        ClassArg::Misinfo => Label::Misinfo,
        ClassArg::NotMisinfo => Label::NotMisinfo,
    }
}

pub(crate) fn run(args: &DtmArgs, out: &Path, config: &RunConfig) -> Result<(), CliError> {
    let mut tweets = read_tweets(&args.dataset)?;
    if let Some(path) = &args.labels {
        let want = class_label(args.class);
        let labels: HashMap<String, Label> = read_labels(path)?
            .into_iter()
            .map(|r| (r.tweet_id, r.label))
            .collect();
        tweets.retain(|t| labels.get(&t.id) == Some(&want));
    }
    let epoch: DateTime<Utc> = DateTime::parse_from_rfc3339(&config.dtm.epoch)
        .map_err(|e| CliError::Usage(format!("dtm.epoch: {e}")))?
        .with_timezone(&Utc);
    let grid = SliceGrid::new(epoch, Duration::days(config.dtm.slice_days))
        .map_err(anyhow::Error::from)?;

    let sw = stopwords(config)?;
    let mut before_epoch = 0usize;
    let mut dated: Vec<(usize, Vec<String>)> = Vec::new();
    for t in &tweets {
        match grid.index_of(t.created_at) {
            Some(i) => dated.push((i, tokenize(&t.text, &sw))),
            None => before_epoch += 1,
        }
    }
    if before_epoch > 0 {
        log::warn!("dtm: {before_epoch} tweets predate the epoch and were dropped");
    }
    let token_docs: Vec<Vec<String>> = dated.iter().map(|(_, d)| d.clone()).collect();
    let vocab = build_vocabulary(&token_docs, config.dtm.min_df_fraction, false)
        .map_err(|e| anyhow::anyhow!("dtm: {e}"))?;

    let mut by_slice: BTreeMap<usize, Vec<Doc>> = BTreeMap::new();
    let mut empty_docs = 0usize;
    for (i, tokens) in &dated {
        let doc = Doc::from_row(&vectorize(tokens, &vocab), vocab.len());
        if doc.is_empty() {
            empty_docs += 1;
        } else {
            by_slice.entry(*i).or_default().push(doc);
        }
    }
    if empty_docs > 0 {
        log::info!("dtm: {empty_docs} tweets have no in-vocabulary words");
    }
    if let (Some(&first), Some(&last)) = (by_slice.keys().next(), by_slice.keys().last()) {
        let gaps: Vec<usize> = (first..=last)
            .filter(|i| !by_slice.contains_key(i))
            .collect();
        if !gaps.is_empty() {
            log::warn!("dtm: slices {gaps:?} have no documents and were left out of the chain");
        }
    }
    if by_slice.is_empty() {
        return Err(anyhow::anyhow!("dtm: no documents to model").into());
    }
    let labels: Vec<String> = by_slice
        .keys()
        .map(|&i| grid.slice(i).start.format("%Y-%m-%d").to_string())
        .collect();
    let slices: Vec<Vec<Doc>> = by_slice.into_values().collect();
    let (train, held) = split_heldout(&slices, config.dtm.heldout_fraction, config.seed);

    let topics = &config.dtm.topics;
    let fits = compare_topic_counts(
        &train,
        &held,
        vocab.terms(),
        &labels,
        &config.dtm(topics[0]),
        topics,
    )
    .context("fitting topic models")?;

    let mut output = StageOutput::create(out)?;
    let mut reports: Vec<TopicCountReport> = Vec::new();
    for (model, report) in fits {
        let k = report.n_topics;
        log::info!(
            "dtm: k={k} elbo {:.2} after {} passes",
            report.final_elbo,
            report.passes
        );
        let mass = slice_topic_mass(&model, &train);
        output.write(
            &model_file(k),
            &model.to_json_bytes().map_err(anyhow::Error::from)?,
        )?;
        output.json(&mass_file(k), &mass)?;
        output.csv(&format!("topics_k{k}.csv"), |b| {
            Ok(write_topic_csv(&model, config.dtm.top_words, b)?)
        })?;
        reports.push(report);
    }
    output.csv("topic_counts.csv", |b| {
        Ok(TopicCountReport::write_csv(&reports, b)?)
    })?;
    output.json(TOPIC_COUNTS_FILE, &reports)?;
    let inputs = json!({
        "dataset": input_ref(&args.dataset)?,
        "labels": optional_ref(args.labels.as_deref())?,
        "class": args.labels.as_ref().map(|_| class_label(args.class).as_str()),
    });
    output.finish("dtm", inputs, config)?;
    Ok(())
}
