//! Tokenization, the unigram+bigram document-term matrix and the four
//! domain-linkage flags.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::io::{BufRead, Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{normalize_tweet, Tweet};
use crate::sparse::SparseRow;

pub const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

/// Documents must contain a term in at least this fraction of the corpus
/// (terms populating fewer than 0.05% of documents are pruned).
pub const DEFAULT_MIN_DF_FRACTION: f64 = 0.0005;

pub const BIGRAM_JOINER: char = '_';

/// Hops followed when looking for an indirect link to a flagged source.
pub const MAX_LINK_DEPTH: usize = 3;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("min_df_fraction must lie in [0, 1), got {0}")]
    BadThreshold(f64),
    #[error("domain list line {line}: {message}")]
    DomainList { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Stopwords = HashSet<String>;

pub fn parse_stopwords(text: &str) -> Stopwords {
    text.lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect()
}

pub fn default_stopwords() -> Stopwords {
    parse_stopwords(DEFAULT_STOPWORDS)
}

pub fn read_stopwords<R: BufRead>(reader: R) -> std::io::Result<Stopwords> {
    let mut text = String::new();
    let mut reader = reader;
    reader.read_to_string(&mut text)?;
    Ok(parse_stopwords(&text))
}

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '…' | '“' | '”' | '‘' | '’' | '«' | '»' | '–' | '—' | '¡' | '¿' | '•' | '·'
        )
}

/// Normalizes `text`, splits on whitespace, strips edge punctuation (keeping
/// a leading `#` or `@`) and drops stop words.
pub fn tokenize(text: &str, stopwords: &Stopwords) -> Vec<String> {
    normalize_tweet(text)
        .split(' ')
        .filter_map(|raw| {
            let tail_trimmed = raw.trim_end_matches(is_punct);
            let token = tail_trimmed.trim_start_matches(|c| is_punct(c) && c != '#' && c != '@');
            let bare = token.trim_start_matches(['#', '@']);
            if bare.is_empty() || stopwords.contains(token) {
                None
            } else {
                Some(token.to_owned())
            }
        })
        .collect()
}

pub fn bigram(a: &str, b: &str) -> String {
    let mut s = String::with_capacity(a.len() + b.len() + 1);
    s.push_str(a);
    s.push(BIGRAM_JOINER);
    s.push_str(b);
    s
}

/// Every unigram followed by every adjacent-pair bigram, in document order.
pub fn terms_of(tokens: &[String], bigrams: bool) -> Vec<String> {
    let mut out: Vec<String> = tokens.to_vec();
    if bigrams {
        out.extend(tokens.windows(2).map(|w| bigram(&w[0], &w[1])));
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct VocabularyData {
    terms: Vec<String>,
    df: Vec<u32>,
    n_docs: usize,
    bigrams: bool,
}

/// A frozen, sorted term list with document frequencies.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "VocabularyData", into = "VocabularyData")]
pub struct Vocabulary {
    terms: Vec<String>,
    df: Vec<u32>,
    n_docs: usize,
    bigrams: bool,
    index: HashMap<String, u32>,
}

impl From<VocabularyData> for Vocabulary {
    fn from(d: VocabularyData) -> Self {
        let index = d
            .terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self {
            terms: d.terms,
            df: d.df,
            n_docs: d.n_docs,
            bigrams: d.bigrams,
            index,
        }
    }
}

impl From<Vocabulary> for VocabularyData {
    fn from(v: Vocabulary) -> Self {
        Self {
            terms: v.terms,
            df: v.df,
            n_docs: v.n_docs,
            bigrams: v.bigrams,
        }
    }
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.terms == other.terms
            && self.df == other.df
            && self.n_docs == other.n_docs
            && self.bigrams == other.bigrams
    }
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn df(&self) -> &[u32] {
        &self.df
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn uses_bigrams(&self) -> bool {
        self.bigrams
    }

    pub fn index_of(&self, term: &str) -> Option<u32> {
        self.index.get(term).copied()
    }

    /// Hex SHA-256 over the ordered term list; models record it to detect
    /// vocabulary mismatches.
    pub fn snapshot_hash(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.terms {
            h.update(t.as_bytes());
            h.update([0u8]);
        }
        hex::encode(h.finalize())
    }
}

pub fn build_vocabulary(
    token_docs: &[Vec<String>],
    min_df_fraction: f64,
    bigrams: bool,
) -> Result<Vocabulary, FeatureError> {
    if !(0.0..1.0).contains(&min_df_fraction) {
        return Err(FeatureError::BadThreshold(min_df_fraction));
    }
    if token_docs.is_empty() {
        return Err(FeatureError::EmptyCorpus);
    }
    let df: HashMap<String, u32> = token_docs
        .par_iter()
        .fold(HashMap::new, |mut acc: HashMap<String, u32>, tokens| {
            let distinct: HashSet<String> = terms_of(tokens, bigrams).into_iter().collect();
            for t in distinct {
                *acc.entry(t).or_default() += 1;
            }
            acc
        })
        .reduce(HashMap::new, |mut a, b| {
            for (t, c) in b {
                *a.entry(t).or_default() += c;
            }
            a
        });
    let n = token_docs.len();
    let kept: BTreeMap<String, u32> = df
        .into_iter()
        .filter(|&(_, c)| c as f64 / n as f64 + 1e-12 >= min_df_fraction)
        .collect();
    let (terms, df): (Vec<_>, Vec<_>) = kept.into_iter().unzip();
    Ok(VocabularyData {
        terms,
        df,
        n_docs: n,
        bigrams,
    }
    .into())
}

/// Counts of in-vocabulary unigrams and adjacent bigrams.
pub fn vectorize(tokens: &[String], vocab: &Vocabulary) -> SparseRow {
    let pairs = terms_of(tokens, vocab.bigrams)
        .iter()
        .filter_map(|t| vocab.index_of(t).map(|i| (i, 1.0)))
        .collect();
    SparseRow::from_pairs(pairs)
}

/// Credibility labels for web domains (`domain,flag` CSV, flag one of
/// `not_credible` / `credible`).
#[derive(Debug, Clone, Default)]
pub struct DomainList {
    flagged: HashSet<String>,
}

impl DomainList {
    pub fn from_flagged<I, S>(domains: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            flagged: domains
                .into_iter()
                .map(|d| canonical_host(d.as_ref()))
                .collect(),
        }
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, FeatureError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut flagged = HashSet::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let (Some(domain), Some(flag)) = (rec.get(0), rec.get(1)) else {
                return Err(FeatureError::DomainList {
                    line,
                    message: "expected domain,flag".into(),
                });
            };
            match flag {
                "not_credible" => {
                    flagged.insert(canonical_host(domain));
                }
                "credible" => {}
                other => {
                    return Err(FeatureError::DomainList {
                        line,
                        message: format!("unknown flag {other:?}"),
                    })
                }
            }
        }
        Ok(Self { flagged })
    }

    pub fn len(&self) -> usize {
        self.flagged.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flagged.is_empty()
    }

    /// True when `host` is a flagged domain or a subdomain of one.
    pub fn is_flagged(&self, host: &str) -> bool {
        let host = canonical_host(host);
        let mut rest = host.as_str();
        loop {
            if self.flagged.contains(rest) {
                return true;
            }
            match rest.split_once('.') {
                Some((_, parent)) if parent.contains('.') => rest = parent,
                _ => return false,
            }
        }
    }
}

fn canonical_host(host: &str) -> String {
    let h = host.trim().trim_end_matches('.').to_ascii_lowercase();
    h.strip_prefix("www.").map(str::to_owned).unwrap_or(h)
}

/// Host part of a URL, if it parses.
pub fn url_host(raw: &str) -> Option<String> {
    let parsed = url::Url::parse(raw)
        .or_else(|_| url::Url::parse(&format!("http://{raw}")))
        .ok()?;
    parsed.host_str().map(canonical_host)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LinkFlags {
    pub originates: bool,
    pub replies_to_origin: bool,
    pub retweets_origin: bool,
    pub otherwise_linked: bool,
}

impl LinkFlags {
    pub fn as_array(&self) -> [bool; 4] {
        [
            self.originates,
            self.replies_to_origin,
            self.retweets_origin,
            self.otherwise_linked,
        ]
    }
}

pub type LinkageIndex<'a> = HashMap<&'a str, &'a Tweet>;

pub fn linkage_index(tweets: &[Tweet]) -> LinkageIndex<'_> {
    tweets.iter().map(|t| (t.id.as_str(), t)).collect()
}

/// Whether the tweet itself carries a link to (or was posted from) a flagged domain.
pub fn originates_from_flagged(tweet: &Tweet, flagged: &DomainList) -> bool {
    tweet
        .source_domain
        .as_deref()
        .is_some_and(|d| flagged.is_flagged(d))
        || tweet
            .linked_urls
            .iter()
            .filter_map(|u| url_host(u))
            .any(|h| flagged.is_flagged(&h))
}

fn links_of(t: &Tweet) -> impl Iterator<Item = &str> {
    t.reply_to_id
        .as_deref()
        .into_iter()
        .chain(t.retweet_of_id.as_deref())
}

pub fn domain_link_features(
    tweet: &Tweet,
    flagged: &DomainList,
    index: &LinkageIndex<'_>,
) -> LinkFlags {
    let resolves_to_origin = |id: Option<&str>| {
        id.and_then(|id| index.get(id))
            .is_some_and(|t| originates_from_flagged(t, flagged))
    };
    let originates = originates_from_flagged(tweet, flagged);
    let replies_to_origin = resolves_to_origin(tweet.reply_to_id.as_deref());
    let retweets_origin = resolves_to_origin(tweet.retweet_of_id.as_deref());
    let otherwise_linked = !(originates || replies_to_origin || retweets_origin)
        && reaches_origin_indirectly(tweet, flagged, index);
    LinkFlags {
        originates,
        replies_to_origin,
        retweets_origin,
        otherwise_linked,
    }
}

/// Breadth-first walk over reply/retweet edges, 2..=MAX_LINK_DEPTH hops.
fn reaches_origin_indirectly(
    tweet: &Tweet,
    flagged: &DomainList,
    index: &LinkageIndex<'_>,
) -> bool {
    let mut seen: HashSet<&str> = HashSet::from([tweet.id.as_str()]);
    let mut queue: VecDeque<(&Tweet, usize)> = VecDeque::from([(tweet, 0)]);
    while let Some((t, depth)) = queue.pop_front() {
        if depth >= 2 && originates_from_flagged(t, flagged) {
            return true;
        }
        if depth == MAX_LINK_DEPTH {
            continue;
        }
        for id in links_of(t) {
            if let Some(next) = index.get(id) {
                if seen.insert(next.id.as_str()) {
                    queue.push_back((next, depth + 1));
                }
            }
        }
    }
    false
}

/// Document-term counts plus link flags for a list of tweets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub doc_ids: Vec<String>,
    pub vocab_hash: String,
    pub n_terms: usize,
    pub counts: Vec<SparseRow>,
    pub link_flags: Vec<LinkFlags>,
}

/// Number of Boolean link columns appended after the term columns.
pub const N_LINK_COLUMNS: usize = 4;

impl FeatureMatrix {
    pub fn n_docs(&self) -> usize {
        self.doc_ids.len()
    }

    /// Total columns seen by the classifier: terms then the four link flags.
    pub fn n_features(&self) -> usize {
        self.n_terms + N_LINK_COLUMNS
    }

    pub fn design_row(&self, i: usize) -> SparseRow {
        design_row(&self.counts[i], self.n_terms, self.link_flags[i])
    }

    pub fn design_rows(&self) -> Vec<SparseRow> {
        (0..self.n_docs()).map(|i| self.design_row(i)).collect()
    }

    /// Sparse triplets `doc_id,term,count`.
    pub fn write_triplets_csv<W: Write>(&self, vocab: &Vocabulary, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["doc_id", "term", "count"])?;
        for (id, row) in self.doc_ids.iter().zip(&self.counts) {
            for &(c, v) in row.entries() {
                w.write_record([
                    id.as_str(),
                    &vocab.terms()[c as usize],
                    &(v as u64).to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_link_flags_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "doc_id",
            "originates",
            "replies_to_origin",
            "retweets_origin",
            "otherwise_linked",
        ])?;
        for (id, f) in self.doc_ids.iter().zip(&self.link_flags) {
            let mut rec = vec![id.clone()];
            rec.extend(f.as_array().iter().map(|b| (*b as u8).to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn design_row(counts: &SparseRow, n_terms: usize, flags: LinkFlags) -> SparseRow {
    let mut row = counts.clone();
    for (j, on) in flags.as_array().into_iter().enumerate() {
        row.push_column((n_terms + j) as u32, if on { 1.0 } else { 0.0 });
    }
    row
}

/// Vectorizes `docs` against a frozen vocabulary. `context` is the corpus
/// used to resolve reply/retweet targets (it may be larger than `docs`).
pub fn build_feature_matrix(
    docs: &[Tweet],
    context: &[Tweet],
    vocab: &Vocabulary,
    stopwords: &Stopwords,
    flagged: &DomainList,
) -> FeatureMatrix {
    let index = linkage_index(context);
    let (counts, link_flags): (Vec<_>, Vec<_>) = docs
        .par_iter()
        .map(|t| {
            (
                vectorize(&tokenize(&t.text, stopwords), vocab),
                domain_link_features(t, flagged, &index),
            )
        })
        .unzip();
    FeatureMatrix {
        doc_ids: docs.iter().map(|t| t.id.clone()).collect(),
        vocab_hash: vocab.snapshot_hash(),
        n_terms: vocab.len(),
        counts,
        link_flags,
    }
}
