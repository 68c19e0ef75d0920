use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lda::completion_log_likelihood;
use super::{canonical_order, fit_dtm, Doc, DtmConfig, DtmError, DtmModel};

/// Topic mass per slice, both as summed proportions (each document counts
/// once) and weighted by document length, with row-normalized shares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceTopicMass {
    pub doc_mass: Vec<Vec<f64>>,
    pub token_mass: Vec<Vec<f64>>,
    pub doc_share: Vec<Vec<f64>>,
    pub token_share: Vec<Vec<f64>>,
}

fn shares(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| {
            let s: f64 = r.iter().sum();
            r.iter()
                .map(|x| if s > 0.0 { x / s } else { 0.0 })
                .collect()
        })
        .collect()
}

/// `slices` must be the documents the model was fit on, in the same order.
pub fn slice_topic_mass(model: &DtmModel, slices: &[Vec<Doc>]) -> SliceTopicMass {
    let k = model.n_topics();
    let mut doc_mass = vec![vec![0.0; k]; model.n_slices()];
    let mut token_mass = doc_mass.clone();
    for (t, docs) in slices.iter().enumerate().take(model.n_slices()) {
        for (theta, doc) in model.doc_topic[t].iter().zip(docs) {
            let n = doc.n_tokens() as f64;
            for j in 0..k {
                doc_mass[t][j] += theta[j];
                token_mass[t][j] += n * theta[j];
            }
        }
    }
    SliceTopicMass {
        doc_share: shares(&doc_mass),
        token_share: shares(&token_mass),
        doc_mass,
        token_mass,
    }
}

impl SliceTopicMass {
    /// Columns: slice, topic, doc_mass, doc_share, token_mass, token_share.
    pub fn write_csv<W: Write>(&self, labels: &[String], out: W) -> Result<(), DtmError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "slice",
            "topic",
            "doc_mass",
            "doc_share",
            "token_mass",
            "token_share",
        ])?;
        for (t, label) in labels.iter().enumerate().take(self.doc_mass.len()) {
            for j in 0..self.doc_mass[t].len() {
                w.write_record([
                    label.clone(),
                    j.to_string(),
                    format!("{:.6}", self.doc_mass[t][j]),
                    format!("{:.6}", self.doc_share[t][j]),
                    format!("{:.6}", self.token_mass[t][j]),
                    format!("{:.6}", self.token_share[t][j]),
                ])?;
            }
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Columns: slice, topic, rank, term, probability; top `n` per (slice, topic).
pub fn write_topic_csv<W: Write>(model: &DtmModel, n: usize, out: W) -> Result<(), DtmError> {
    let n = n.min(model.n_terms());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["slice", "topic", "rank", "term", "probability"])?;
    for t in 0..model.n_slices() {
        for k in 0..model.n_topics() {
            for (rank, (term, p)) in model.top_words(k, t, n)?.into_iter().enumerate() {
                w.write_record([
                    model.slice_labels[t].clone(),
                    k.to_string(),
                    (rank + 1).to_string(),
                    term,
                    format!("{p:.8}"),
                ])?;
            }
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Columns: slice, topic, term, probability, for every topic and listed term.
pub fn write_trajectory_csv<W: Write>(
    model: &DtmModel,
    terms: &[String],
    out: W,
) -> Result<(), DtmError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["slice", "topic", "term", "probability"])?;
    for k in 0..model.n_topics() {
        for term in terms {
            let traj = model.word_trajectory(k, term)?;
            for (t, p) in traj.iter().enumerate() {
                w.write_record([
                    model.slice_labels[t].clone(),
                    k.to_string(),
                    term.clone(),
                    format!("{p:.8}"),
                ])?;
            }
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Holds out about `fraction` of each slice's documents (at least one kept
/// for training), chosen by a seeded shuffle of the canonical order.
pub fn split_heldout(
    slices: &[Vec<Doc>],
    fraction: f64,
    seed: u64,
) -> (Vec<Vec<Doc>>, Vec<Vec<Doc>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(slices.len());
    let mut held = Vec::with_capacity(slices.len());
    for docs in slices {
        let mut order = canonical_order(docs);
        order.shuffle(&mut rng);
        let n_held =
            ((fraction * docs.len() as f64).round() as usize).min(docs.len().saturating_sub(1));
        held.push(order[..n_held].iter().map(|&i| docs[i].clone()).collect());
        train.push(order[n_held..].iter().map(|&i| docs[i].clone()).collect());
    }
    (train, held)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicCountReport {
    pub n_topics: usize,
    pub final_elbo: f64,
    pub passes: usize,
    /// Document-completion log likelihood per held-out token; `None` when
    /// nothing was held out.
    pub heldout_per_word: Option<f64>,
}

/// Mean completion log likelihood per token of `heldout[t]` under slice t.
pub fn heldout_per_word(model: &DtmModel, heldout: &[Vec<Doc>]) -> Result<f64, DtmError> {
    let mut ll = 0.0;
    let mut n = 0usize;
    for (t, docs) in heldout.iter().enumerate() {
        let topics = model.log_topics(t)?;
        for d in docs {
            let (l, c) = completion_log_likelihood(d, &topics, model.config.doc_topic_prior);
            ll += l;
            n += c;
        }
    }
    Ok(if n == 0 { f64::NAN } else { ll / n as f64 })
}

/// Fits one model per topic count with otherwise identical settings.
pub fn compare_topic_counts(
    train: &[Vec<Doc>],
    heldout: &[Vec<Doc>],
    terms: &[String],
    slice_labels: &[String],
    base: &DtmConfig,
    topic_counts: &[usize],
) -> Result<Vec<(DtmModel, TopicCountReport)>, DtmError> {
    topic_counts
        .iter()
        .map(|&k| {
            let config = DtmConfig {
                n_topics: k,
                ..*base
            };
            let model = fit_dtm(train, terms, slice_labels, &config)?;
            let report = TopicCountReport {
                n_topics: k,
                final_elbo: model.elbo_trace.last().copied().unwrap_or(f64::NAN),
                passes: model.elbo_trace.len(),
                heldout_per_word: Some(heldout_per_word(&model, heldout)?).filter(|v| !v.is_nan()),
            };
            Ok((model, report))
        })
        .collect()
}

impl TopicCountReport {
    /// Columns: n_topics, passes, final_elbo, heldout_per_word.
    pub fn write_csv<W: Write>(reports: &[TopicCountReport], out: W) -> Result<(), DtmError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n_topics", "passes", "final_elbo", "heldout_per_word"])?;
        for r in reports {
            w.write_record([
                r.n_topics.to_string(),
                r.passes.to_string(),
                format!("{:.6}", r.final_elbo),
                r.heldout_per_word
                    .map_or_else(String::new, |v| format!("{v:.6}")),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}
