use std::collections::HashMap;
use std::path::Path;

use rumorscope_core::label::Label;
use rumorscope_core::sentiment::{
    aggregate_series, score_corpus, write_records_csv, write_series_csv,
};
use serde_json::json;

use super::{input_ref, lexicons, stopwords};
use crate::config::RunConfig;
use crate::files::{read_labels, read_tweets, StageOutput};
use crate::{CliError, SentimentArgs};

pub(crate) const SERIES_FILE: &str = "series.json";

pub(crate) fn run(args: &SentimentArgs, out: &Path, config: &RunConfig) -> Result<(), CliError> {
    let tweets = read_tweets(&args.dataset)?;
    let labels: HashMap<String, Label> = read_labels(&args.labels)?
        .into_iter()
        .map(|r| (r.tweet_id, r.label))
        .collect();
    let (signed, emotions) = lexicons(config)?;
    let sw = stopwords(config)?;
    let records = score_corpus(&tweets, &sw, &signed, &emotions);
    let series = aggregate_series(&records, &labels);

    let mut output = StageOutput::create(out)?;
    output.csv("records.csv", |b| Ok(write_records_csv(&records, b)?))?;
    output.csv("series.csv", |b| Ok(write_series_csv(&series, b)?))?;
    output.json(SERIES_FILE, &series)?;
    let inputs =
        json!({ "dataset": input_ref(&args.dataset)?, "labels": input_ref(&args.labels)? });
    output.finish("sentiment", inputs, config)?;
    Ok(())
}
