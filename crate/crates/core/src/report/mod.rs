//! Result artifacts: filtering/label/metric tables, the overlap graph,
//! sentiment trends and topic exports, plus a hashed manifest.

mod loess;
mod svg;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dtm::{self, DtmError, DtmModel, SliceTopicMass, TopicCountReport};
use crate::forest::Metrics;
use crate::label::Label;
use crate::sentiment::{self, SentimentError, SeriesPoint, CATEGORIES};
use crate::theoryfilter::{percent, PairCount, PartitionReport, TheoryCount};

pub use loess::{loess_at, loess_smooth, LoessError, TrendSeries, DEFAULT_SPAN};
pub use svg::{line_chart, overlap_chart, Series};

pub const MANIFEST_FILE: &str = "manifest.json";

pub type IdSet = BTreeSet<String>;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Loess(#[from] LoessError),
    #[error(transparent)]
    Dtm(#[from] DtmError),
    #[error(transparent)]
    Sentiment(#[from] SentimentError),
    #[error("name {0:?} cannot be used in a file name")]
    InvalidName(String),
    #[error("two artifacts would both be written to {0}")]
    DuplicateFile(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeCount {
    pub theory: String,
    pub count: u64,
}

/// Theory sizes and pairwise co-occurrence counts, edges in (i < j) order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapGraph {
    pub nodes: Vec<NodeCount>,
    pub edges: Vec<PairCount>,
}

impl OverlapGraph {
    pub fn from_partition(report: &PartitionReport) -> Self {
        OverlapGraph {
            nodes: report
                .theories
                .iter()
                .map(|t| NodeCount {
                    theory: t.theory.clone(),
                    count: t.count,
                })
                .collect(),
            edges: report.pairwise.clone(),
        }
    }

    pub fn edge(&self, a: &str, b: &str) -> Option<u64> {
        self.edges
            .iter()
            .find(|e| (e.theory_a == a && e.theory_b == b) || (e.theory_a == b && e.theory_b == a))
            .map(|e| e.count)
    }

    /// CSV `theory_a,theory_b,count,count_a,count_b`.
    pub fn write_edges_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let size = |name: &str| {
            self.nodes
                .iter()
                .find(|n| n.theory == name)
                .map_or(0, |n| n.count)
        };
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["theory_a", "theory_b", "count", "count_a", "count_b"])?;
        for e in &self.edges {
            w.write_record([
                e.theory_a.clone(),
                e.theory_b.clone(),
                e.count.to_string(),
                size(&e.theory_a).to_string(),
                size(&e.theory_b).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn overlap_graph(sets: &[(String, IdSet)]) -> OverlapGraph {
    let nodes = sets
        .iter()
        .map(|(name, s)| NodeCount {
            theory: name.clone(),
            count: s.len() as u64,
        })
        .collect();
    let mut edges = Vec::new();
    for (i, (a, sa)) in sets.iter().enumerate() {
        for (b, sb) in &sets[i + 1..] {
            let (small, large) = if sa.len() <= sb.len() {
                (sa, sb)
            } else {
                (sb, sa)
            };
            let count = small.iter().filter(|id| large.contains(*id)).count() as u64;
            edges.push(PairCount {
                theory_a: a.clone(),
                theory_b: b.clone(),
                count,
            });
        }
    }
    OverlapGraph { nodes, edges }
}

/// Per-set size and the number of its ids present in at least one other set.
pub fn theory_counts(sets: &[(String, IdSet)]) -> Vec<TheoryCount> {
    let mut membership: BTreeMap<&str, usize> = BTreeMap::new();
    for id in sets.iter().flat_map(|(_, s)| s) {
        *membership.entry(id).or_default() += 1;
    }
    sets.iter()
        .map(|(name, s)| TheoryCount {
            theory: name.clone(),
            count: s.len() as u64,
            multi_count: s.iter().filter(|id| membership[id.as_str()] > 1).count() as u64,
        })
        .collect()
}

/// One row of the filtering/classification table. Percentages: `pct` of all
/// theory assignments, `multi_pct`, `misinfo_pct` and `misinfo_multi_pct` of
/// the theory's own count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Row {
    pub theory: String,
    pub count: u64,
    pub pct: f64,
    pub multi_count: u64,
    pub multi_pct: f64,
    pub misinfo: Option<MisinfoCounts>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MisinfoCounts {
    pub count: u64,
    pub pct: f64,
    pub multi_count: u64,
    pub multi_pct: f64,
}

/// `classified` holds, per theory, the tweets classified as misinformation
/// (count) and how many of those are also classified in another theory.
pub fn table2(partition: &PartitionReport, classified: Option<&[TheoryCount]>) -> Vec<Table2Row> {
    partition
        .theories
        .iter()
        .map(|t| {
            let misinfo = classified
                .and_then(|c| c.iter().find(|c| c.theory == t.theory))
                .map(|c| MisinfoCounts {
                    count: c.count,
                    pct: percent(c.count, t.count),
                    multi_count: c.multi_count,
                    multi_pct: percent(c.multi_count, t.count),
                });
            Table2Row {
                theory: t.theory.clone(),
                count: t.count,
                pct: percent(t.count, partition.total_assignments),
                multi_count: t.multi_count,
                multi_pct: percent(t.multi_count, t.count),
                misinfo,
            }
        })
        .collect()
}

pub fn write_table2_csv<W: Write>(rows: &[Table2Row], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "theory",
        "count",
        "pct",
        "multi_count",
        "multi_pct",
        "misinfo_count",
        "misinfo_pct",
        "misinfo_multi_count",
        "misinfo_multi_pct",
    ])?;
    for r in rows {
        let mut rec = vec![
            r.theory.clone(),
            r.count.to_string(),
            format!("{:.2}", r.pct),
            r.multi_count.to_string(),
            format!("{:.2}", r.multi_pct),
        ];
        match r.misinfo {
            Some(m) => rec.extend([
                m.count.to_string(),
                format!("{:.2}", m.pct),
                m.multi_count.to_string(),
                format!("{:.2}", m.multi_pct),
            ]),
            None => rec.extend(std::iter::repeat_n(String::new(), 4)),
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelDistribution {
    pub theory: String,
    pub misinfo: u64,
    pub not_misinfo: u64,
}

impl LabelDistribution {
    pub fn misinfo_pct(&self) -> f64 {
        percent(self.misinfo, self.misinfo + self.not_misinfo)
    }
}

/// CSV `theory,misinfo,not_misinfo,misinfo_pct`.
pub fn write_table3_csv<W: Write>(rows: &[LabelDistribution], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["theory", "misinfo", "not_misinfo", "misinfo_pct"])?;
    for r in rows {
        w.write_record([
            r.theory.clone(),
            r.misinfo.to_string(),
            r.not_misinfo.to_string(),
            format!("{:.2}", r.misinfo_pct()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Test-set metrics of one model variant (e.g. `rf`, `rf_active`) on one theory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub theory: String,
    pub variant: String,
    pub metrics: Metrics,
}

/// F1 change of each row against the first row of the same theory; `None`
/// for that first row.
pub fn f1_changes(rows: &[MetricsRow]) -> Vec<Option<f64>> {
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            rows[..i]
                .iter()
                .find(|b| b.theory == r.theory)
                .map(|b| r.metrics.f1 - b.metrics.f1)
        })
        .collect()
}

/// CSV `theory,variant,accuracy,recall,precision,f1,change`.
pub fn write_table4_csv<W: Write>(rows: &[MetricsRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "theory",
        "variant",
        "accuracy",
        "recall",
        "precision",
        "f1",
        "change",
    ])?;
    for (r, change) in rows.iter().zip(f1_changes(rows)) {
        let mut rec = vec![r.theory.clone(), r.variant.clone()];
        rec.extend(r.metrics.csv_fields());
        rec.push(change.map_or_else(String::new, |c| format!("{c:.6}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// A fitted topic model and its optional companions, exported under `name`.
#[derive(Debug, Clone)]
pub struct TopicArtifact {
    pub name: String,
    pub model: DtmModel,
    pub mass: Option<SliceTopicMass>,
}

/// Everything a report may contain; absent parts emit no files.
#[derive(Debug, Clone)]
pub struct ReportInputs {
    /// Effective run configuration, echoed into the manifest.
    pub config: Option<serde_json::Value>,
    pub partition: Option<PartitionReport>,
    /// Per theory, the ids classified as misinformation.
    pub classified: Option<Vec<(String, IdSet)>>,
    pub label_distribution: Vec<LabelDistribution>,
    pub metrics: Vec<MetricsRow>,
    /// Per theory, the daily sentiment series.
    pub sentiment: Vec<(String, Vec<SeriesPoint>)>,
    pub topics: Vec<TopicArtifact>,
    /// Per corpus, the fit summary of each topic count tried.
    pub topic_counts: Vec<(String, Vec<TopicCountReport>)>,
    pub loess_span: f64,
    pub top_words: usize,
}

impl Default for ReportInputs {
    fn default() -> Self {
        ReportInputs {
            config: None,
            partition: None,
            classified: None,
            label_distribution: Vec::new(),
            metrics: Vec::new(),
            sentiment: Vec::new(),
            topics: Vec::new(),
            topic_counts: Vec::new(),
            loess_span: DEFAULT_SPAN,
            top_words: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub sha256: String,
    /// Data rows for CSV files, absent for other formats.
    pub rows: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: Option<serde_json::Value>,
    pub files: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn to_json_bytes(&self) -> Result<Vec<u8>, serde_json::Error> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        Ok(bytes)
    }
}

fn file_stem(name: &str) -> Result<String, ReportError> {
    if name.is_empty()
        || !name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.')
        || name.starts_with('.')
    {
        return Err(ReportError::InvalidName(name.to_owned()));
    }
    Ok(name.to_owned())
}

#[derive(Default)]
struct Outputs(Vec<(String, Vec<u8>)>);

impl Outputs {
    fn csv<F>(&mut self, name: String, f: F) -> Result<(), ReportError>
    where
        F: FnOnce(&mut Vec<u8>) -> Result<(), ReportError>,
    {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.push(name, buf)
    }

    fn push(&mut self, name: String, bytes: Vec<u8>) -> Result<(), ReportError> {
        if name == MANIFEST_FILE || self.0.iter().any(|(n, _)| *n == name) {
            return Err(ReportError::DuplicateFile(name));
        }
        self.0.push((name, bytes));
        Ok(())
    }
}

fn csv_rows(bytes: &[u8]) -> Result<u64, csv::Error> {
    let mut n = 0;
    for rec in csv::Reader::from_reader(bytes).records() {
        rec?;
        n += 1;
    }
    Ok(n)
}

fn day_offset(first: NaiveDate, day: NaiveDate) -> f64 {
    (day - first).num_days() as f64
}

fn sentiment_outputs(
    out: &mut Outputs,
    theory: &str,
    points: &[SeriesPoint],
    span: f64,
) -> Result<(), ReportError> {
    let stem = file_stem(theory)?;
    out.csv(format!("sentiment_{stem}.csv"), |b| {
        Ok(sentiment::write_series_csv(points, b)?)
    })?;
    let Some(first) = points.iter().map(|p| p.day).min() else {
        return Ok(());
    };

    let measures = std::iter::once("afinn").chain(CATEGORIES);
    let mut trend_rows: Vec<[String; 5]> = Vec::new();
    let mut chart = Vec::new();
    for class in [Label::Misinfo, Label::NotMisinfo] {
        for (m, measure) in measures.clone().enumerate() {
            let pts: Vec<(NaiveDate, f64)> = points
                .iter()
                .filter(|p| p.class == class)
                .filter_map(|p| {
                    let v = if m == 0 {
                        p.afinn_mean
                    } else {
                        p.emotion_means[m - 1]
                    };
                    v.map(|v| (p.day, v))
                })
                .collect();
            let xy: Vec<(f64, f64)> = pts
                .iter()
                .map(|&(d, v)| (day_offset(first, d), v))
                .collect();
            let trend = match TrendSeries::fit(xy.clone(), span) {
                Ok(t) => t,
                Err(e) => {
                    log::warn!("{theory} {class} {measure}: no trend line ({e})");
                    continue;
                }
            };
            for ((day, value), (_, fitted)) in pts.iter().zip(&trend.smoothed) {
                trend_rows.push([
                    day.to_string(),
                    class.as_str().to_owned(),
                    measure.to_owned(),
                    format!("{value:.6}"),
                    format!("{fitted:.6}"),
                ]);
            }
            if m == 0 {
                chart.push(Series {
                    name: class.as_str().to_owned(),
                    points: xy,
                    dashed: false,
                });
                chart.push(Series {
                    name: format!("{} trend", class.as_str()),
                    points: trend.smoothed,
                    dashed: true,
                });
            }
        }
    }
    out.csv(format!("sentiment_trend_{stem}.csv"), |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["date", "class", "measure", "value", "trend"])?;
        for r in &trend_rows {
            w.write_record(r)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    })?;
    let title = format!("{theory}: mean signed sentiment per day");
    out.push(
        format!("sentiment_{stem}.svg"),
        line_chart(&title, &format!("days since {first}"), "mean score", &chart).into_bytes(),
    )
}

fn topic_outputs(out: &mut Outputs, art: &TopicArtifact, top: usize) -> Result<(), ReportError> {
    let stem = file_stem(&art.name)?;
    let model = &art.model;
    let top = top.min(model.n_terms());
    out.csv(format!("topics_{stem}.csv"), |b| {
        Ok(dtm::write_topic_csv(model, top, b)?)
    })?;

    // trajectories for every word that reaches a topic's top list in some slice
    let mut words: BTreeSet<usize> = BTreeSet::new();
    for k in 0..model.n_topics() {
        for t in 0..model.n_slices() {
            for (term, _) in model.top_words(k, t, top)? {
                words.extend(model.term_index(&term));
            }
        }
    }
    let terms: Vec<String> = words.iter().map(|&w| model.terms[w].clone()).collect();
    out.csv(format!("trajectory_{stem}.csv"), |b| {
        Ok(dtm::write_trajectory_csv(model, &terms, b)?)
    })?;

    if let Some(mass) = &art.mass {
        out.csv(format!("topic_mass_{stem}.csv"), |b| {
            Ok(mass.write_csv(&model.slice_labels, b)?)
        })?;
        let series: Vec<Series> = (0..model.n_topics())
            .map(|k| Series {
                name: format!("topic {k}"),
                points: mass
                    .doc_share
                    .iter()
                    .enumerate()
                    .map(|(t, row)| (t as f64, row[k]))
                    .collect(),
                dashed: false,
            })
            .collect();
        let title = format!("{}: topic share of documents per slice", art.name);
        out.push(
            format!("topic_share_{stem}.svg"),
            line_chart(&title, "slice", "share", &series).into_bytes(),
        )?;
    }
    Ok(())
}

fn render(inputs: &ReportInputs) -> Result<Outputs, ReportError> {
    let mut out = Outputs::default();
    let classified = inputs.classified.as_deref().map(theory_counts);
    if let Some(partition) = &inputs.partition {
        let rows = table2(partition, classified.as_deref());
        out.csv("table2_filtering.csv".into(), |b| {
            Ok(write_table2_csv(&rows, b)?)
        })?;
        let graph = OverlapGraph::from_partition(partition);
        out.csv(
            "overlap_edges.csv".into(),
            |b| Ok(graph.write_edges_csv(b)?),
        )?;
        out.push(
            "overlap.svg".into(),
            overlap_chart("Theory volumes and overlap", &graph).into_bytes(),
        )?;
    }
    if let Some(sets) = &inputs.classified {
        let graph = overlap_graph(sets);
        out.csv("overlap_misinfo_edges.csv".into(), |b| {
            Ok(graph.write_edges_csv(b)?)
        })?;
    }
    if !inputs.label_distribution.is_empty() {
        out.csv("table3_labels.csv".into(), |b| {
            Ok(write_table3_csv(&inputs.label_distribution, b)?)
        })?;
    }
    if !inputs.metrics.is_empty() {
        out.csv("table4_metrics.csv".into(), |b| {
            Ok(write_table4_csv(&inputs.metrics, b)?)
        })?;
    }
    for (theory, points) in &inputs.sentiment {
        sentiment_outputs(&mut out, theory, points, inputs.loess_span)?;
    }
    for art in &inputs.topics {
        topic_outputs(&mut out, art, inputs.top_words)?;
    }
    for (name, reports) in &inputs.topic_counts {
        let stem = file_stem(name)?;
        out.csv(format!("topic_counts_{stem}.csv"), |b| {
            Ok(TopicCountReport::write_csv(reports, b)?)
        })?;
    }
    Ok(out)
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), ReportError> {
    let path = dir.join(name);
    std::fs::write(&path, bytes).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes every artifact derivable from `inputs` plus `manifest.json` into
/// `out_dir` (created if missing). Output bytes depend only on `inputs`.
pub fn export_report(inputs: &ReportInputs, out_dir: &Path) -> Result<Manifest, ReportError> {
    let outputs = render(inputs)?;
    std::fs::create_dir_all(out_dir).map_err(|source| ReportError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let mut files = Vec::with_capacity(outputs.0.len());
    for (name, bytes) in &outputs.0 {
        write_file(out_dir, name, bytes)?;
        let rows = if name.ends_with(".csv") {
            Some(csv_rows(bytes)?)
        } else {
            None
        };
        files.push(ManifestEntry {
            file: name.clone(),
            sha256: hex::encode(Sha256::digest(bytes)),
            rows,
        });
    }
    files.sort_by(|a, b| a.file.cmp(&b.file));
    let manifest = Manifest {
        config: inputs.config.clone(),
        files,
    };
    write_file(out_dir, MANIFEST_FILE, &manifest.to_json_bytes()?)?;
    Ok(manifest)
}
