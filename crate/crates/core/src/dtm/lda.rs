//! Variational LDA: per-document inference shared with the dynamic model,
//! a standalone pooled fit used for initialization, and held-out scoring.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use super::{log_sum_exp, Doc, DtmError};

const DOC_MAX_ITERS: usize = 200;
const DOC_GAMMA_TOL: f64 = 1e-5;

/// Result of fitting q(θ, z) for one document against fixed topics.
#[derive(Debug, Clone)]
pub(crate) struct DocFit {
    pub gamma: Vec<f64>,
    /// Row per distinct word: count-weighted responsibilities, length K.
    pub sstats: Vec<f64>,
    /// ELBO terms that do not involve the topic parameters.
    pub elbo: f64,
}

/// Coordinate ascent on (φ, γ) starting from `gamma`. `log_topics[k][w]` are
/// expected log word probabilities; each update is an exact coordinate
/// maximization, so the bound never decreases from the starting point.
pub(crate) fn infer_doc(doc: &Doc, log_topics: &[Vec<f64>], alpha: f64, gamma: &[f64]) -> DocFit {
    let k = log_topics.len();
    let mut gamma = gamma.to_vec();
    let mut phi = vec![0.0; doc.words.len() * k];
    let mut elog_theta = vec![0.0; k];
    for _ in 0..DOC_MAX_ITERS {
        let total = digamma(gamma.iter().sum());
        for (e, g) in elog_theta.iter_mut().zip(&gamma) {
            *e = digamma(*g) - total;
        }
        for (i, &(w, _)) in doc.words.iter().enumerate() {
            let row = &mut phi[i * k..(i + 1) * k];
            for (j, r) in row.iter_mut().enumerate() {
                *r = elog_theta[j] + log_topics[j][w as usize];
            }
            let norm = log_sum_exp(row);
            row.iter_mut().for_each(|r| *r = (*r - norm).exp());
        }
        let mut change = 0.0;
        for j in 0..k {
            let g = alpha
                + doc
                    .words
                    .iter()
                    .enumerate()
                    .map(|(i, &(_, c))| c as f64 * phi[i * k + j])
                    .sum::<f64>();
            change += (g - gamma[j]).abs();
            gamma[j] = g;
        }
        if change / (k as f64) < DOC_GAMMA_TOL {
            break;
        }
    }

    let gsum: f64 = gamma.iter().sum();
    let total = digamma(gsum);
    for (e, g) in elog_theta.iter_mut().zip(&gamma) {
        *e = digamma(*g) - total;
    }
    let mut elbo = ln_gamma(k as f64 * alpha) - k as f64 * ln_gamma(alpha) - ln_gamma(gsum);
    for j in 0..k {
        elbo += (alpha - gamma[j]) * elog_theta[j] + ln_gamma(gamma[j]);
    }
    let mut sstats = phi;
    for (i, &(_, c)) in doc.words.iter().enumerate() {
        for j in 0..k {
            let p = sstats[i * k + j];
            if p > 0.0 {
                elbo += c as f64 * p * (elog_theta[j] - p.ln());
            }
            sstats[i * k + j] = c as f64 * p;
        }
    }
    DocFit {
        gamma,
        sstats,
        elbo,
    }
}

pub(crate) fn initial_gamma(doc: &Doc, n_topics: usize, alpha: f64) -> Vec<f64> {
    vec![alpha + doc.n_tokens() as f64 / n_topics as f64; n_topics]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LdaConfig {
    pub n_topics: usize,
    pub alpha: f64,
    /// Pseudo-count added to every topic-word count in the M-step.
    pub topic_smoothing: f64,
    pub max_passes: usize,
    pub rel_tol: f64,
    pub seed: u64,
}

impl Default for LdaConfig {
    fn default() -> Self {
        Self {
            n_topics: 2,
            alpha: 0.01,
            topic_smoothing: 1e-3,
            max_passes: 60,
            rel_tol: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub config: LdaConfig,
    pub n_terms: usize,
    /// K rows of log word probabilities.
    pub log_topics: Vec<Vec<f64>>,
    /// Normalized topic proportions per input document.
    pub doc_topic: Vec<Vec<f64>>,
    /// Smoothed-likelihood bound per pass.
    pub objective_trace: Vec<f64>,
}

fn normalize_log(counts: &[f64]) -> Vec<f64> {
    let total: f64 = counts.iter().sum();
    counts.iter().map(|c| (c / total).ln()).collect()
}

fn cosine(a: &Doc, b: &Doc) -> f64 {
    let (mut i, mut j, mut dot) = (0, 0, 0.0);
    while i < a.words.len() && j < b.words.len() {
        let (wa, ca) = a.words[i];
        let (wb, cb) = b.words[j];
        match wa.cmp(&wb) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                dot += ca as f64 * cb as f64;
                i += 1;
                j += 1;
            }
        }
    }
    let norm = |d: &Doc| {
        d.words
            .iter()
            .map(|&(_, c)| (c as f64).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let den = norm(a) * norm(b);
    if den == 0.0 {
        0.0
    } else {
        dot / den
    }
}

/// Starting topics from k mutually dissimilar documents, picked like
/// k-means++ seeding with cosine distance; each topic is its seed document's
/// counts plus a small jittered floor.
fn seeded_topics(docs: &[Doc], n_terms: usize, k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = vec![rng.random_range(0..docs.len())];
    let mut nearest: Vec<f64> = docs.iter().map(|d| cosine(d, &docs[chosen[0]])).collect();
    while chosen.len() < k {
        let weights: Vec<f64> = nearest.iter().map(|s| (1.0 - s).max(0.0).powi(2)).collect();
        let total: f64 = weights.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            weights
                .iter()
                .position(|&w| {
                    r -= w;
                    r < 0.0 && w > 0.0
                })
                .unwrap_or_else(|| weights.iter().rposition(|&w| w > 0.0).unwrap_or(0))
        } else {
            rng.random_range(0..docs.len())
        };
        chosen.push(pick);
        for (s, d) in nearest.iter_mut().zip(docs) {
            *s = s.max(cosine(d, &docs[pick]));
        }
    }
    chosen
        .iter()
        .map(|&i| {
            let mut row: Vec<f64> = (0..n_terms)
                .map(|_| 0.01 * (1.0 + rng.random::<f64>()))
                .collect();
            for &(w, c) in &docs[i].words {
                row[w as usize] += c as f64;
            }
            normalize_log(&row)
        })
        .collect()
}

/// Variational EM on a pooled corpus from a seeded start.
pub fn fit_lda(docs: &[Doc], n_terms: usize, config: &LdaConfig) -> Result<LdaModel, DtmError> {
    let k = config.n_topics;
    if k == 0 || config.alpha <= 0.0 || config.topic_smoothing <= 0.0 {
        return Err(DtmError::Config(
            "n_topics, alpha and topic_smoothing must be positive".into(),
        ));
    }
    if docs.is_empty() {
        return Err(DtmError::NoDocuments);
    }
    super::check_words(docs, n_terms)?;
    let mut log_topics = seeded_topics(docs, n_terms, k, config.seed);
    let mut gammas: Vec<Vec<f64>> = docs
        .iter()
        .map(|d| initial_gamma(d, k, config.alpha))
        .collect();
    let mut trace = Vec::new();
    for pass in 0..config.max_passes {
        let fits: Vec<DocFit> = docs
            .par_iter()
            .zip(&gammas)
            .map(|(d, g)| infer_doc(d, &log_topics, config.alpha, g))
            .collect();
        let mut counts = vec![vec![config.topic_smoothing; n_terms]; k];
        let mut objective = 0.0;
        for (d, fit) in docs.iter().zip(&fits) {
            objective += fit.elbo;
            for (i, &(w, _)) in d.words.iter().enumerate() {
                for (j, row) in counts.iter_mut().enumerate() {
                    row[w as usize] += fit.sstats[i * k + j];
                }
            }
        }
        log_topics = counts.iter().map(|c| normalize_log(c)).collect();
        for (row, lt) in counts.iter().zip(&log_topics) {
            objective += row.iter().zip(lt).map(|(c, l)| c * l).sum::<f64>();
        }
        gammas = fits.into_iter().map(|f| f.gamma).collect();
        if !objective.is_finite() {
            return Err(DtmError::NonFinite {
                pass,
                detail: "LDA objective".into(),
            });
        }
        let done = trace
            .last()
            .is_some_and(|&prev: &f64| ((objective - prev) / prev.abs()).abs() < config.rel_tol);
        trace.push(objective);
        if done {
            break;
        }
    }
    let doc_topic = gammas
        .iter()
        .map(|g| {
            let s: f64 = g.iter().sum();
            g.iter().map(|x| x / s).collect()
        })
        .collect();
    Ok(LdaModel {
        config: *config,
        n_terms,
        log_topics,
        doc_topic,
        objective_trace: trace,
    })
}

/// Document-completion log likelihood: topic proportions are inferred from
/// the even-positioned tokens (in word order) and the odd-positioned ones are
/// scored. Returns (summed log likelihood, scored token count).
pub fn completion_log_likelihood(doc: &Doc, log_topics: &[Vec<f64>], alpha: f64) -> (f64, usize) {
    let mut observed: Vec<(u32, u32)> = Vec::new();
    let mut scored: Vec<(u32, u32)> = Vec::new();
    let mut position = 0u64;
    for &(w, c) in &doc.words {
        let even = (c as u64 + 1 - position % 2) / 2;
        let odd = c as u64 - even;
        if even > 0 {
            observed.push((w, even as u32));
        }
        if odd > 0 {
            scored.push((w, odd as u32));
        }
        position += c as u64;
    }
    if observed.is_empty() || scored.is_empty() {
        return (0.0, 0);
    }
    let obs = Doc { words: observed };
    let k = log_topics.len();
    let fit = infer_doc(&obs, log_topics, alpha, &initial_gamma(&obs, k, alpha));
    let gsum: f64 = fit.gamma.iter().sum();
    let log_theta: Vec<f64> = fit.gamma.iter().map(|g| (g / gsum).ln()).collect();
    let mut ll = 0.0;
    let mut n = 0usize;
    let mut terms = vec![0.0; k];
    for &(w, c) in &scored {
        for j in 0..k {
            terms[j] = log_theta[j] + log_topics[j][w as usize];
        }
        ll += c as f64 * log_sum_exp(&terms);
        n += c as usize;
    }
    (ll, n)
}

/// Mean held-out log likelihood per scored token over `docs`.
pub fn per_word_log_likelihood(docs: &[Doc], log_topics: &[Vec<f64>], alpha: f64) -> f64 {
    let parts: Vec<(f64, usize)> = docs
        .par_iter()
        .map(|d| completion_log_likelihood(d, log_topics, alpha))
        .collect();
    let (ll, n) = parts
        .iter()
        .fold((0.0, 0usize), |(a, b), (c, d)| (a + c, b + d));
    if n == 0 {
        f64::NAN
    } else {
        ll / n as f64
    }
}
