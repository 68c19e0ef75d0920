use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rumorscope_core::corpus::{write_jsonl, Tweet};
use rumorscope_core::theoryfilter::partition_corpus;
use serde::Serialize;
use serde_json::json;

use super::{input_ref, optional_ref, theories};
use crate::config::RunConfig;
use crate::files::{read_tweets, StageOutput};
use crate::{CliError, FilterArgs, SampleArgs};

pub(crate) const PARTITION_FILE: &str = "partition.json";

pub(crate) fn dataset_file(theory: &str) -> String {
    format!("{theory}.jsonl")
}

pub(crate) fn run(args: &FilterArgs, out: &Path, config: &RunConfig) -> Result<(), CliError> {
    let compiled = theories(args.theories.as_deref(), config)?;
    let corpus = read_tweets(&args.corpus)?;
    let partition = partition_corpus(&corpus, &compiled);
    let report = &partition.report;
    for t in &report.theories {
        log::info!("filter: {} matched {} tweets", t.theory, t.count);
    }

    let mut output = StageOutput::create(out)?;
    for (name, tweets) in &partition.datasets {
        let mut buf = Vec::new();
        write_jsonl(&mut buf, tweets).map_err(anyhow::Error::from)?;
        output.write(&dataset_file(name), &buf)?;
    }
    output.json(PARTITION_FILE, report)?;
    output.csv("partition.csv", |b| Ok(report.write_csv(b)?))?;
    output.csv("overlap_edges.csv", |b| Ok(report.write_edges_csv(b)?))?;
    let inputs = json!({
        "corpus": input_ref(&args.corpus)?,
        "theories": optional_ref(args.theories.as_deref().or(config.paths.theories.as_deref()))?,
    });
    output.finish("filter", inputs, config)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct SampleReport {
    available: usize,
    drawn: usize,
    duplicates_dropped: usize,
    kept: usize,
}

/// Draws `n` tweets without replacement, then drops near-identical texts
/// (same normalized form), keeping the lowest id of each group.
pub(crate) fn draw_sample(tweets: &[Tweet], n: usize, seed: u64) -> (Vec<Tweet>, usize) {
    let mut order: Vec<&Tweet> = tweets.iter().collect();
    order.sort_by(|a, b| a.id.cmp(&b.id));
    order.dedup_by(|a, b| a.id == b.id);
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order.truncate(n);
    order.sort_by(|a, b| a.id.cmp(&b.id));
    let mut seen = HashSet::new();
    let kept: Vec<Tweet> = order
        .iter()
        .filter(|t| seen.insert(t.normalized_text()))
        .map(|t| (*t).clone())
        .collect();
    let dropped = order.len() - kept.len();
    (kept, dropped)
}

pub(crate) fn sample(args: &SampleArgs, out: &Path, config: &RunConfig) -> Result<(), CliError> {
    let tweets = read_tweets(&args.dataset)?;
    let n = config.sample.n;
    if n > tweets.len() {
        log::warn!("sample: asked for {n} tweets, dataset has {}", tweets.len());
    }
    let (kept, dropped) = draw_sample(&tweets, n, config.seed);
    log::info!(
        "sample: kept {} tweets after dropping {dropped} duplicates",
        kept.len()
    );

    let mut output = StageOutput::create(out)?;
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &kept).map_err(anyhow::Error::from)?;
    output.write("sample.jsonl", &buf)?;
    output.csv("labels_template.csv", |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["tweet_id", "label", "annotator_id", "text"])?;
        for t in &kept {
            w.write_record([t.id.as_str(), "", "", t.text.as_str()])?;
        }
        w.flush()?;
        Ok(())
    })?;
    let report = SampleReport {
        available: tweets.len(),
        drawn: n.min(tweets.len()),
        duplicates_dropped: dropped,
        kept: kept.len(),
    };
    output.json("sample_report.json", &report)?;
    output.finish(
        "sample",
        json!({ "dataset": input_ref(&args.dataset)? }),
        config,
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn tweet(id: &str, text: &str) -> Tweet {
        Tweet {
            id: id.into(),
            text: text.into(),
            created_at: chrono::Utc.with_ymd_and_hms(2020, 3, 1, 0, 0, 0).unwrap(),
            lang: "en".into(),
            author_id: "a".into(),
            reply_to_id: None,
            retweet_of_id: None,
            linked_urls: Vec::new(),
            source_domain: None,
        }
    }

    #[test]
    fn sample_is_order_free_and_deduplicated() {
        let mut tweets: Vec<Tweet> = (0..50)
            .map(|i| tweet(&format!("{i:03}"), &format!("text {}", i % 20)))
            .collect();
        let (a, dropped) = draw_sample(&tweets, 50, 3);
        assert_eq!((a.len(), dropped), (20, 30));
        tweets.reverse();
        let (b, _) = draw_sample(&tweets, 30, 3);
        let (c, _) = draw_sample(&tweets, 30, 3);
        assert_eq!(b, c);
        assert!(b.len() <= 20);
        assert!(b.windows(2).all(|w| w[0].id < w[1].id));
    }
}
