//! File helpers shared by the stages: inputs, label tables and the per-stage
//! output manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use rumorscope_core::corpus::{load_jsonl, Tweet};
use rumorscope_core::label::Label;
use rumorscope_core::report::{Manifest, ManifestEntry, MANIFEST_FILE};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

/// Fails with a usage error when an input path does not exist.
pub fn require(path: &Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "input not found: {}",
            path.display()
        )))
    }
}

pub fn read_tweets(path: &Path) -> Result<Vec<Tweet>, CliError> {
    require(path)?;
    let (tweets, report) = load_jsonl(path, None).map_err(anyhow::Error::from)?;
    if report.skipped > 0 {
        log::warn!(
            "{}: skipped {} malformed lines",
            path.display(),
            report.skipped
        );
    }
    Ok(tweets)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    require(path)?;
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))?)
}

/// One row of a label table (`tweet_id,label[,annotator_id]`). Prediction
/// tables share the first two columns and load the same way.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRow {
    pub tweet_id: String,
    pub label: Label,
    #[serde(default)]
    pub annotator_id: Option<String>,
}

/// Reads a label table; a tweet listed twice must carry the same label.
pub fn read_labels(path: &Path) -> Result<Vec<LabelRow>, CliError> {
    require(path)?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut seen: BTreeMap<String, Label> = BTreeMap::new();
    let mut rows = Vec::new();
    for (i, rec) in rdr.deserialize::<LabelRow>().enumerate() {
        let row = rec.with_context(|| format!("{} line {}", path.display(), i + 2))?;
        match seen.get(&row.tweet_id) {
            Some(l) if *l != row.label => {
                return Err(anyhow::anyhow!(
                    "{}: conflicting labels for {}",
                    path.display(),
                    row.tweet_id
                )
                .into())
            }
            Some(_) => continue,
            None => {
                seen.insert(row.tweet_id.clone(), row.label);
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

/// Parses `NAME=PATH`.
pub fn named_path(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => {
            Ok((name.to_owned(), PathBuf::from(path)))
        }
        _ => Err(format!("expected NAME=PATH, got {s:?}")),
    }
}

pub fn file_stem(path: &Path) -> Result<String, CliError> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_owned)
        .ok_or_else(|| CliError::Usage(format!("cannot derive a name from {}", path.display())))
}

/// Collects a stage's files, hashing each as it is written.
pub struct StageOutput {
    dir: PathBuf,
    files: Vec<ManifestEntry>,
}

fn csv_rows(bytes: &[u8]) -> anyhow::Result<u64> {
    let mut n = 0;
    for rec in csv::Reader::from_reader(bytes).records() {
        rec?;
        n += 1;
    }
    Ok(n)
}

impl StageOutput {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(StageOutput {
            dir: dir.to_owned(),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> anyhow::Result<()> {
        if name == MANIFEST_FILE || self.files.iter().any(|f| f.file == name) {
            bail!("output {name} written twice");
        }
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        let rows = if name.ends_with(".csv") {
            Some(csv_rows(bytes)?)
        } else {
            None
        };
        self.files.push(ManifestEntry {
            file: name.to_owned(),
            sha256: hex::encode(Sha256::digest(bytes)),
            rows,
        });
        Ok(())
    }

    pub fn csv<F>(&mut self, name: &str, f: F) -> anyhow::Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> anyhow::Result<()>,
    {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, &buf)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    /// Writes `manifest.json` echoing the stage, its inputs and the effective
    /// configuration.
    pub fn finish(
        mut self,
        stage: &str,
        inputs: serde_json::Value,
        config: &RunConfig,
    ) -> anyhow::Result<Manifest> {
        self.files.sort_by(|a, b| a.file.cmp(&b.file));
        let manifest = Manifest {
            config: Some(serde_json::json!({ "stage": stage, "inputs": inputs, "config": config })),
            files: self.files,
        };
        let path = self.dir.join(MANIFEST_FILE);
        std::fs::write(&path, manifest.to_json_bytes()?)
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(manifest)
    }
}

pub fn write_labels_csv<W: std::io::Write>(rows: &[LabelRow], out: W) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["tweet_id", "label", "annotator_id"])?;
    for r in rows {
        w.write_record([
            r.tweet_id.as_str(),
            r.label.as_str(),
            r.annotator_id.as_deref().unwrap_or(""),
        ])?;
    }
    w.flush()?;
    Ok(())
}
