use std::path::Path;

use rumorscope_core::report::{table2, theory_counts, write_table2_csv, IdSet};
use rumorscope_core::theoryfilter::PartitionReport;
use serde_json::json;

use super::filter::{dataset_file, PARTITION_FILE};
use super::train::{features, load_model};
use super::{check_name, input_ref, optional_ref};
use crate::config::RunConfig;
use crate::files::{read_json, read_tweets, StageOutput};
use crate::{ClassifyArgs, CliError};

pub(crate) const CLASSIFIED_FILE: &str = "classified.json";

pub(crate) fn run(args: &ClassifyArgs, out: &Path, config: &RunConfig) -> Result<(), CliError> {
    let partition: PartitionReport = read_json(&args.filter_dir.join(PARTITION_FILE))?;
    let mut models = args.models.clone();
    // table order follows the filter stage, not the flag order
    let rank = |name: &str| partition.theories.iter().position(|t| t.theory == name);
    for (name, _) in &models {
        check_name(name)?;
        if rank(name).is_none() {
            return Err(CliError::Usage(format!(
                "theory {name:?} is not in {}",
                args.filter_dir.display()
            )));
        }
    }
    models.sort_by_key(|(name, _)| rank(name));
    if models.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(CliError::Usage(
            "each theory may be given one --model".into(),
        ));
    }

    let mut output = StageOutput::create(out)?;
    let mut classified: Vec<(String, IdSet)> = Vec::new();
    let mut model_refs = serde_json::Map::new();
    for (theory, dir) in &models {
        let (model, vocab) = load_model(dir)?;
        let tweets = read_tweets(&args.filter_dir.join(dataset_file(theory)))?;
        let fm = features(
            &tweets,
            args.context.as_deref(),
            args.domains.as_deref(),
            &vocab,
            config,
        )?;
        let probs = model
            .predict_proba_many(&fm.design_rows())
            .map_err(anyhow::Error::from)?;
        let mut ids = IdSet::new();
        output.csv(&format!("predictions_{theory}.csv"), |b| {
            let mut w = csv::Writer::from_writer(b);
            w.write_record(["tweet_id", "proba", "label"])?;
            for (id, p) in fm.doc_ids.iter().zip(&probs) {
                let misinfo = *p >= 0.5;
                if misinfo {
                    ids.insert(id.clone());
                }
                let label = rumorscope_core::label::Label::from_class(misinfo);
                w.write_record([id.as_str(), &format!("{p:.6}"), label.as_str()])?;
            }
            w.flush()?;
            Ok(())
        })?;
        log::info!(
            "classify: {theory} {} of {} tweets labelled misinfo",
            ids.len(),
            tweets.len()
        );
        classified.push((theory.clone(), ids));
        model_refs.insert(theory.clone(), input_ref(dir)?);
    }
    let rows = table2(&partition, Some(&theory_counts(&classified)));
    output.json(CLASSIFIED_FILE, &classified)?;
    output.csv("table2.csv", |b| Ok(write_table2_csv(&rows, b)?))?;
    let inputs = json!({
        "filter_dir": input_ref(&args.filter_dir)?,
        "models": model_refs,
        "context": optional_ref(args.context.as_deref())?,
        "domains": optional_ref(args.domains.as_deref().or(config.paths.domains.as_deref()))?,
    });
    output.finish("classify", inputs, config)?;
    Ok(())
}
