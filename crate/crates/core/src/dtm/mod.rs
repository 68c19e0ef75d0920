//! Dynamic topic model: per-slice topic-word distributions whose natural
//! parameters follow a Gaussian random walk across slices, fit by variational
//! EM with a Kalman-shaped posterior over each word's chain.

mod kalman;
mod lda;
mod mstep;
mod report;

pub use kalman::{ChainPosterior, Tridiagonal};
pub use lda::{completion_log_likelihood, fit_lda, per_word_log_likelihood, LdaConfig, LdaModel};
pub use report::{
    compare_topic_counts, slice_topic_mass, split_heldout, write_topic_csv, write_trajectory_csv,
    SliceTopicMass, TopicCountReport,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sparse::SparseRow;
use lda::{infer_doc, initial_gamma, DocFit};
use mstep::{optimize_topic, quad_prior, TopicStats};

pub const DTM_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DtmError {
    #[error("slice {0} has no documents")]
    EmptySlice(usize),
    #[error("no documents to fit")]
    NoDocuments,
    #[error("word id {word} is outside the vocabulary of {n_terms} terms")]
    WordOutOfRange { word: u32, n_terms: usize },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("bound became non-finite at pass {pass}: {detail}")]
    NonFinite { pass: usize, detail: String },
    #[error("topic {topic} out of range (model has {n_topics})")]
    TopicOutOfRange { topic: usize, n_topics: usize },
    #[error("slice {slice} out of range (model has {n_slices})")]
    SliceOutOfRange { slice: usize, n_slices: usize },
    #[error("term {0:?} is not in the vocabulary")]
    UnknownTerm(String),
    #[error("requested {n} words from a vocabulary of {n_terms}")]
    TooManyWords { n: usize, n_terms: usize },
    #[error("model format version {0} is not supported")]
    Version(u32),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Bag of words: (term index, count) pairs sorted by term, counts positive.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Doc {
    pub words: Vec<(u32, u32)>,
}

impl Doc {
    pub fn from_pairs(mut pairs: Vec<(u32, u32)>) -> Self {
        pairs.sort_unstable();
        let mut words: Vec<(u32, u32)> = Vec::with_capacity(pairs.len());
        for (w, c) in pairs {
            match words.last_mut() {
                Some(last) if last.0 == w => last.1 += c,
                _ if c > 0 => words.push((w, c)),
                _ => {}
            }
        }
        words.retain(|&(_, c)| c > 0);
        Self { words }
    }

    /// Counts from the term columns of a feature row; non-integer values are
    /// rounded and columns at or beyond `n_terms` are ignored.
    pub fn from_row(row: &SparseRow, n_terms: usize) -> Self {
        Self::from_pairs(
            row.entries()
                .iter()
                .filter(|(w, _)| (*w as usize) < n_terms)
                .map(|&(w, v)| (w, v.round().max(0.0) as u32))
                .collect(),
        )
    }

    pub fn n_tokens(&self) -> u64 {
        self.words.iter().map(|&(_, c)| c as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

pub(crate) fn check_words(docs: &[Doc], n_terms: usize) -> Result<(), DtmError> {
    for d in docs {
        if let Some(&(w, _)) = d.words.iter().find(|&&(w, _)| w as usize >= n_terms) {
            return Err(DtmError::WordOutOfRange { word: w, n_terms });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DtmConfig {
    pub n_topics: usize,
    /// Variance of each per-slice step of a word's natural parameter.
    pub chain_variance: f64,
    /// Prior variance of the first slice's natural parameters.
    pub init_variance: f64,
    /// Pseudo-observation variance fixing the shape of the variational chain.
    pub obs_variance: f64,
    pub doc_topic_prior: f64,
    pub em_max_passes: usize,
    pub elbo_rel_tol: f64,
    pub seed: u64,
    /// Passes of the pooled LDA fit used as the starting point.
    pub init_passes: usize,
}

impl Default for DtmConfig {
    fn default() -> Self {
        Self {
            n_topics: 2,
            chain_variance: 0.005,
            init_variance: 10.0,
            obs_variance: 0.5,
            doc_topic_prior: 0.01,
            em_max_passes: 20,
            elbo_rel_tol: 1e-4,
            seed: 0,
            init_passes: 60,
        }
    }
}

impl DtmConfig {
    pub fn validate(&self) -> Result<(), DtmError> {
        let bad = |m: &str| Err(DtmError::Config(m.into()));
        if self.n_topics < 2 {
            return bad("n_topics must be at least 2");
        }
        for (name, v) in [
            ("chain_variance", self.chain_variance),
            ("init_variance", self.init_variance),
            ("obs_variance", self.obs_variance),
            ("doc_topic_prior", self.doc_topic_prior),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(DtmError::Config(format!("{name} must be positive")));
            }
        }
        if self.em_max_passes == 0 {
            return bad("em_max_passes must be at least 1");
        }
        Ok(())
    }

    fn lda(&self) -> LdaConfig {
        LdaConfig {
            n_topics: self.n_topics,
            alpha: self.doc_topic_prior,
            max_passes: self.init_passes,
            seed: self.seed,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtmModel {
    pub format_version: u32,
    pub config: DtmConfig,
    pub terms: Vec<String>,
    pub slice_labels: Vec<String>,
    /// beta_mean[t][k][w]: variational mean of the natural parameters.
    pub beta_mean: Vec<Vec<Vec<f64>>>,
    /// Posterior variance at each slice; the same for every topic and word.
    pub beta_variance: Vec<f64>,
    /// doc_topic[t][d]: topic proportions, documents in input order.
    pub doc_topic: Vec<Vec<Vec<f64>>>,
    pub elbo_trace: Vec<f64>,
}

/// Indices of `docs` in canonical (content) order, so fits do not depend on
/// how documents inside a slice were ordered.
fn canonical_order(docs: &[Doc]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..docs.len()).collect();
    order.sort_by(|&a, &b| docs[a].cmp(&docs[b]));
    order
}

fn softmax(row: &[f64]) -> Vec<f64> {
    let norm = log_sum_exp(row);
    row.iter().map(|x| (x - norm).exp()).collect()
}

/// Fits the model to documents grouped by slice. `terms` names the V
/// vocabulary columns; `slice_labels` (one per slice) is carried into exports.
pub fn fit_dtm(
    slices: &[Vec<Doc>],
    terms: &[String],
    slice_labels: &[String],
    config: &DtmConfig,
) -> Result<DtmModel, DtmError> {
    config.validate()?;
    if slices.is_empty() {
        return Err(DtmError::NoDocuments);
    }
    if slice_labels.len() != slices.len() {
        return Err(DtmError::Config(format!(
            "{} slice labels for {} slices",
            slice_labels.len(),
            slices.len()
        )));
    }
    let v = terms.len();
    for (t, docs) in slices.iter().enumerate() {
        if docs.is_empty() || docs.iter().all(Doc::is_empty) {
            return Err(DtmError::EmptySlice(t));
        }
        check_words(docs, v)?;
    }
    let n_slices = slices.len();
    let k = config.n_topics;
    let alpha = config.doc_topic_prior;

    let orders: Vec<Vec<usize>> = slices.iter().map(|d| canonical_order(d)).collect();
    let flat: Vec<(usize, &Doc)> = orders
        .iter()
        .enumerate()
        .flat_map(|(t, order)| order.iter().map(move |&i| (t, &slices[t][i])))
        .collect();

    let pooled: Vec<Doc> = flat.iter().map(|(_, d)| (*d).clone()).collect();
    let init = fit_lda(&pooled, v, &config.lda())?;
    // means: per topic, row-major T x V
    let mut means: Vec<Vec<f64>> = init
        .log_topics
        .iter()
        .map(|lt| {
            let centre = lt.iter().sum::<f64>() / v as f64;
            let row: Vec<f64> = lt.iter().map(|x| x - centre).collect();
            row.iter().cycle().take(n_slices * v).copied().collect()
        })
        .collect();
    let mut gammas: Vec<Vec<f64>> = flat
        .iter()
        .map(|(_, d)| initial_gamma(d, k, alpha))
        .collect();

    let chain = ChainPosterior::new(
        n_slices,
        config.init_variance,
        config.chain_variance,
        config.obs_variance,
    );
    let prior = Tridiagonal::chain_precision(n_slices, config.init_variance, config.chain_variance);
    let per_chain_const = chain.expected_log_prior_const() + chain.entropy();

    let mut trace: Vec<f64> = Vec::new();
    for pass in 0..config.em_max_passes {
        // E-step against log softmax of the current means; the -Ṽ_t/2 shift
        // is shared by all words and topics, so it cancels in φ.
        let log_topics: Vec<Vec<Vec<f64>>> = (0..n_slices)
            .map(|t| {
                means
                    .iter()
                    .map(|m| {
                        let row = &m[t * v..(t + 1) * v];
                        let norm = log_sum_exp(row);
                        row.iter().map(|x| x - norm).collect()
                    })
                    .collect()
            })
            .collect();
        let fits: Vec<DocFit> = flat
            .par_iter()
            .zip(&gammas)
            .map(|((t, d), g)| infer_doc(d, &log_topics[*t], alpha, g))
            .collect();

        let mut counts = vec![vec![0.0; n_slices * v]; k];
        let mut doc_elbo = 0.0;
        for ((t, d), fit) in flat.iter().zip(&fits) {
            doc_elbo += fit.elbo;
            for (i, &(w, _)) in d.words.iter().enumerate() {
                for (j, c) in counts.iter_mut().enumerate() {
                    c[t * v + w as usize] += fit.sstats[i * k + j];
                }
            }
        }
        gammas = fits.into_iter().map(|f| f.gamma).collect();
        let totals: Vec<Vec<f64>> = counts
            .iter()
            .map(|c| {
                (0..n_slices)
                    .map(|t| c[t * v..(t + 1) * v].iter().sum())
                    .collect()
            })
            .collect();

        // M-step per topic
        means = means
            .into_par_iter()
            .enumerate()
            .map(|(j, mut m)| {
                let stats = TopicStats {
                    counts: &counts[j],
                    totals: &totals[j],
                    n_terms: v,
                };
                optimize_topic(&mut m, &stats, &prior);
                m
            })
            .collect();

        let mut elbo = doc_elbo + (k * v) as f64 * per_chain_const;
        for j in 0..k {
            let m = &means[j];
            for t in 0..n_slices {
                let row = &m[t * v..(t + 1) * v];
                let s = &counts[j][t * v..(t + 1) * v];
                elbo += s.iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
                elbo -= totals[j][t] * (log_sum_exp(row) + 0.5 * chain.variance[t]);
            }
            elbo -= 0.5 * quad_prior(m, v, &prior);
        }
        if !elbo.is_finite() {
            return Err(DtmError::NonFinite {
                pass,
                detail: format!("doc part {doc_elbo}, topics {k}, slices {n_slices}"),
            });
        }
        let done = trace
            .last()
            .is_some_and(|&prev| ((elbo - prev) / prev.abs()).abs() < config.elbo_rel_tol);
        log::debug!("dtm pass {pass}: elbo {elbo:.6}");
        trace.push(elbo);
        if done {
            break;
        }
    }

    let beta_mean = (0..n_slices)
        .map(|t| {
            means
                .iter()
                .map(|m| m[t * v..(t + 1) * v].to_vec())
                .collect()
        })
        .collect();
    let mut doc_topic: Vec<Vec<Vec<f64>>> =
        slices.iter().map(|d| vec![Vec::new(); d.len()]).collect();
    for ((t, _), (pos, g)) in flat.iter().zip(flat_positions(&orders).zip(&gammas)) {
        let s: f64 = g.iter().sum();
        doc_topic[*t][pos] = g.iter().map(|x| x / s).collect();
    }
    Ok(DtmModel {
        format_version: DTM_FORMAT_VERSION,
        config: *config,
        terms: terms.to_vec(),
        slice_labels: slice_labels.to_vec(),
        beta_mean,
        beta_variance: chain.variance,
        doc_topic,
        elbo_trace: trace,
    })
}

fn flat_positions(orders: &[Vec<usize>]) -> impl Iterator<Item = usize> + '_ {
    orders.iter().flat_map(|o| o.iter().copied())
}

impl DtmModel {
    pub fn n_slices(&self) -> usize {
        self.beta_mean.len()
    }

    pub fn n_topics(&self) -> usize {
        self.config.n_topics
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    fn check(&self, topic: usize, slice: usize) -> Result<(), DtmError> {
        if topic >= self.n_topics() {
            return Err(DtmError::TopicOutOfRange {
                topic,
                n_topics: self.n_topics(),
            });
        }
        if slice >= self.n_slices() {
            return Err(DtmError::SliceOutOfRange {
                slice,
                n_slices: self.n_slices(),
            });
        }
        Ok(())
    }

    /// softmax(beta_mean[slice][topic])
    pub fn word_probs(&self, topic: usize, slice: usize) -> Result<Vec<f64>, DtmError> {
        self.check(topic, slice)?;
        Ok(softmax(&self.beta_mean[slice][topic]))
    }

    /// Log word probabilities of every topic at `slice`.
    pub fn log_topics(&self, slice: usize) -> Result<Vec<Vec<f64>>, DtmError> {
        self.check(0, slice)?;
        Ok(self.beta_mean[slice]
            .iter()
            .map(|row| {
                let norm = log_sum_exp(row);
                row.iter().map(|x| x - norm).collect()
            })
            .collect())
    }

    /// The `n` most probable terms, ties broken by term index.
    pub fn top_words(
        &self,
        topic: usize,
        slice: usize,
        n: usize,
    ) -> Result<Vec<(String, f64)>, DtmError> {
        if n > self.n_terms() {
            return Err(DtmError::TooManyWords {
                n,
                n_terms: self.n_terms(),
            });
        }
        let probs = self.word_probs(topic, slice)?;
        let mut idx: Vec<usize> = (0..probs.len()).collect();
        idx.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
        Ok(idx
            .into_iter()
            .take(n)
            .map(|i| (self.terms[i].clone(), probs[i]))
            .collect())
    }

    pub fn term_index(&self, term: &str) -> Result<usize, DtmError> {
        self.terms
            .iter()
            .position(|t| t == term)
            .ok_or_else(|| DtmError::UnknownTerm(term.to_owned()))
    }

    /// Probability of `term` in `topic` at every slice.
    pub fn word_trajectory(&self, topic: usize, term: &str) -> Result<Vec<f64>, DtmError> {
        let w = self.term_index(term)?;
        (0..self.n_slices())
            .map(|t| Ok(self.word_probs(topic, t)?[w]))
            .collect()
    }

    pub fn to_json_bytes(&self) -> Result<Vec<u8>, DtmError> {
        let mut bytes = serde_json::to_vec(self)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn from_json_slice(bytes: &[u8]) -> Result<Self, DtmError> {
        let model: Self = serde_json::from_slice(bytes)?;
        if model.format_version != DTM_FORMAT_VERSION {
            return Err(DtmError::Version(model.format_version));
        }
        Ok(model)
    }
}
