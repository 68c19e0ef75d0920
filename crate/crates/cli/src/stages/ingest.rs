use std::path::Path;

use rumorscope_core::corpus::{deduplicate, load_jsonl, write_jsonl, LoadReport};
use serde::Serialize;
use serde_json::json;

use super::input_ref;
use crate::config::RunConfig;
use crate::files::{require, StageOutput};
use crate::{CliError, IngestArgs};

#[derive(Debug, Serialize)]
struct FileReport {
    file: String,
    #[serde(flatten)]
    report: LoadReport,
}

#[derive(Debug, Serialize)]
struct IngestReport {
    files: Vec<FileReport>,
    duplicates_dropped: usize,
    kept: usize,
}

pub(crate) fn run(args: &IngestArgs, out: &Path, config: &RunConfig) -> Result<(), CliError> {
    let lang = config.ingest.lang.as_str();
    let lang = (!lang.is_empty()).then_some(lang);
    let mut tweets = Vec::new();
    let mut files = Vec::new();
    let mut refs = Vec::new();
    for path in &args.inputs {
        require(path)?;
        refs.push(input_ref(path)?);
        let (mut t, report) = load_jsonl(path, lang).map_err(anyhow::Error::from)?;
        if report.skipped > 0 {
            log::warn!(
                "{}: skipped {} malformed lines",
                path.display(),
                report.skipped
            );
        }
        tweets.append(&mut t);
        files.push(FileReport {
            file: path.display().to_string(),
            report,
        });
    }
    let (kept, dropped) = deduplicate(tweets, config.ingest.dedup);
    log::info!(
        "ingest: kept {} tweets, dropped {dropped} duplicates",
        kept.len()
    );

    let mut output = StageOutput::create(out)?;
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &kept).map_err(anyhow::Error::from)?;
    output.write("corpus.jsonl", &buf)?;
    output.json(
        "ingest_report.json",
        &IngestReport {
            files,
            duplicates_dropped: dropped,
            kept: kept.len(),
        },
    )?;
    output.finish("ingest", json!({ "inputs": refs }), config)?;
    Ok(())
}
