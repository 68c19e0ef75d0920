use std::path::Path;

use anyhow::Context;
use rumorscope_core::dtm::{DtmModel, SliceTopicMass, TopicCountReport};
use rumorscope_core::report::{
    export_report, IdSet, LabelDistribution, MetricsRow, ReportInputs, TopicArtifact,
};
use rumorscope_core::sentiment::SeriesPoint;
use rumorscope_core::theoryfilter::PartitionReport;
use serde_json::json;

use super::classify::CLASSIFIED_FILE;
use super::dtm::{mass_file, model_file, TOPIC_COUNTS_FILE};
use super::filter::PARTITION_FILE;
use super::sentiment::SERIES_FILE;
use super::train::{LABELS_FILE, METRICS_FILE};
use super::{check_name, input_ref};
use crate::config::RunConfig;
use crate::files::{read_json, require};
use crate::{CliError, ReportArgs};

fn read_model(path: &Path) -> Result<DtmModel, CliError> {
    require(path)?;
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(DtmModel::from_json_slice(&bytes).with_context(|| format!("parsing {}", path.display()))?)
}

pub(crate) fn run(args: &ReportArgs, out: &Path, config: &RunConfig) -> Result<(), CliError> {
    let mut refs = serde_json::Map::new();
    let mut inputs = ReportInputs {
        loess_span: config.sentiment.loess_span,
        top_words: config.dtm.top_words,
        ..Default::default()
    };
    if let Some(dir) = &args.filter_dir {
        inputs.partition = Some(read_json::<PartitionReport>(&dir.join(PARTITION_FILE))?);
        refs.insert("filter_dir".into(), input_ref(dir)?);
    }
    if let Some(dir) = &args.classify_dir {
        inputs.classified = Some(read_json::<Vec<(String, IdSet)>>(
            &dir.join(CLASSIFIED_FILE),
        )?);
        refs.insert("classify_dir".into(), input_ref(dir)?);
    }
    let mut model_refs = Vec::new();
    for dir in &args.model_dirs {
        for row in read_json::<Vec<MetricsRow>>(&dir.join(METRICS_FILE))? {
            // `active` repeats the baseline row that `train` already reported
            if !inputs
                .metrics
                .iter()
                .any(|m| m.theory == row.theory && m.variant == row.variant)
            {
                inputs.metrics.push(row);
            }
        }
        for d in read_json::<Vec<LabelDistribution>>(&dir.join(LABELS_FILE))? {
            // a theory trained and then refined keeps its first distribution
            if !inputs
                .label_distribution
                .iter()
                .any(|x| x.theory == d.theory)
            {
                inputs.label_distribution.push(d);
            }
        }
        model_refs.push(input_ref(dir)?);
    }
    let mut order: Vec<String> = Vec::new();
    for m in &inputs.metrics {
        if !order.contains(&m.theory) {
            order.push(m.theory.clone());
        }
    }
    inputs
        .metrics
        .sort_by_key(|m| order.iter().position(|t| *t == m.theory));
    if !model_refs.is_empty() {
        refs.insert("model_dirs".into(), model_refs.into());
    }
    for (theory, dir) in &args.sentiment {
        check_name(theory)?;
        inputs.sentiment.push((
            theory.clone(),
            read_json::<Vec<SeriesPoint>>(&dir.join(SERIES_FILE))?,
        ));
        refs.insert(format!("sentiment_{theory}"), input_ref(dir)?);
    }
    for (name, dir) in &args.dtm {
        check_name(name)?;
        let reports: Vec<TopicCountReport> = read_json(&dir.join(TOPIC_COUNTS_FILE))?;
        for r in &reports {
            let k = r.n_topics;
            let model = read_model(&dir.join(model_file(k)))?;
            let mass_path = dir.join(mass_file(k));
            let mass = if mass_path.exists() {
                Some(read_json::<SliceTopicMass>(&mass_path)?)
            } else {
                None
            };
            inputs.topics.push(TopicArtifact {
                name: format!("{name}_k{k}"),
                model,
                mass,
            });
        }
        inputs.topic_counts.push((name.clone(), reports));
        refs.insert(format!("dtm_{name}"), input_ref(dir)?);
    }
    inputs.config = Some(json!({ "stage": "report", "inputs": refs, "config": config }));
    let manifest = export_report(&inputs, out).map_err(anyhow::Error::from)?;
    log::info!(
        "report: wrote {} files to {}",
        manifest.files.len(),
        out.display()
    );
    Ok(())
}
