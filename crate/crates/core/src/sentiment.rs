//! Lexicon sentiment: a signed integer score per word and ten emotion
//! categories, summed per tweet and averaged per day and class.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Tweet;
use crate::label::Label;
use crate::textfeat::{tokenize, Stopwords};

pub const DEFAULT_SIGNED_LEXICON: &str = include_str!("../data/signed_lexicon.tsv");
pub const DEFAULT_EMOTION_LEXICON: &str = include_str!("../data/emotion_lexicon.tsv");

pub const N_CATEGORIES: usize = 10;
pub const CATEGORIES: [&str; N_CATEGORIES] = [
    "anger",
    "anticipation",
    "disgust",
    "fear",
    "joy",
    "sadness",
    "surprise",
    "trust",
    "positive",
    "negative",
];

#[derive(Debug, Error)]
pub enum SentimentError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn malformed(line: usize, message: impl Into<String>) -> SentimentError {
    SentimentError::Malformed {
        line,
        message: message.into(),
    }
}

fn open(path: &Path) -> Result<std::io::BufReader<std::fs::File>, SentimentError> {
    std::fs::File::open(path)
        .map(std::io::BufReader::new)
        .map_err(|source| SentimentError::Io {
            path: path.display().to_string(),
            source,
        })
}

/// Term → integer score in [-5, 5].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SignedLexicon {
    scores: HashMap<String, i32>,
}

impl SignedLexicon {
    /// Lines are `term<TAB>score`; blank lines are skipped. Terms are lowercased.
    pub fn parse<R: BufRead>(reader: R) -> Result<Self, SentimentError> {
        let mut scores = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let n = i + 1;
            let line = line.map_err(|e| malformed(n, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let (term, score) = line
                .rsplit_once('\t')
                .ok_or_else(|| malformed(n, "expected term<TAB>score"))?;
            let term = term.trim().to_lowercase();
            if term.is_empty() {
                return Err(malformed(n, "empty term"));
            }
            let score: i32 = score
                .trim()
                .parse()
                .map_err(|_| malformed(n, format!("score {score:?} is not an integer")))?;
            if !(-5..=5).contains(&score) {
                return Err(malformed(n, format!("score {score} outside [-5, 5]")));
            }
            if scores.insert(term.clone(), score).is_some() {
                log::warn!(
                    "signed lexicon line {n}: duplicate term {term:?}, keeping the later score"
                );
            }
        }
        Ok(Self { scores })
    }

    pub fn from_path(path: &Path) -> Result<Self, SentimentError> {
        Self::parse(open(path)?)
    }

    pub fn bundled() -> Self {
        Self::parse(DEFAULT_SIGNED_LEXICON.as_bytes()).expect("bundled lexicon parses")
    }

    pub fn get(&self, term: &str) -> Option<i32> {
        self.scores.get(term).copied()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Term → set of emotion categories, stored as a bit mask over [`CATEGORIES`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EmotionLexicon {
    masks: HashMap<String, u16>,
}

impl EmotionLexicon {
    /// Lines are `term<TAB>category<TAB>0|1`, one per (term, category).
    pub fn parse<R: BufRead>(reader: R) -> Result<Self, SentimentError> {
        let mut masks: HashMap<String, u16> = HashMap::new();
        let mut seen: HashMap<(String, usize), usize> = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let n = i + 1;
            let line = line.map_err(|e| malformed(n, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [term, category, flag] = fields[..] else {
                return Err(malformed(n, "expected term<TAB>category<TAB>0|1"));
            };
            let term = term.trim().to_lowercase();
            if term.is_empty() {
                return Err(malformed(n, "empty term"));
            }
            let c = CATEGORIES
                .iter()
                .position(|&k| k == category.trim())
                .ok_or_else(|| malformed(n, format!("unknown category {category:?}")))?;
            let on = match flag.trim() {
                "1" => true,
                "0" => false,
                other => return Err(malformed(n, format!("flag {other:?} is not 0 or 1"))),
            };
            if let Some(prev) = seen.insert((term.clone(), c), n) {
                log::warn!("emotion lexicon line {n}: {term:?}/{} repeats line {prev}, keeping the later flag", CATEGORIES[c]);
            }
            let mask = masks.entry(term).or_default();
            if on {
                *mask |= 1 << c;
            } else {
                *mask &= !(1 << c);
            }
        }
        Ok(Self { masks })
    }

    pub fn from_path(path: &Path) -> Result<Self, SentimentError> {
        Self::parse(open(path)?)
    }

    pub fn bundled() -> Self {
        Self::parse(DEFAULT_EMOTION_LEXICON.as_bytes()).expect("bundled lexicon parses")
    }

    pub fn categories(&self, term: &str) -> Vec<&'static str> {
        let mask = self.masks.get(term).copied().unwrap_or(0);
        CATEGORIES
            .iter()
            .enumerate()
            .filter(|(c, _)| mask & (1 << c) != 0)
            .map(|(_, &k)| k)
            .collect()
    }

    pub fn has(&self, term: &str, category: usize) -> bool {
        self.masks
            .get(term)
            .is_some_and(|m| m & (1 << category) != 0)
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }
}

/// Sum of lexicon scores over token occurrences; unknown tokens score 0.
pub fn score_signed<S: AsRef<str>>(tokens: &[S], lexicon: &SignedLexicon) -> i64 {
    tokens
        .iter()
        .map(|t| i64::from(lexicon.get(t.as_ref()).unwrap_or(0)))
        .sum()
}

/// Per-category count of token occurrences carrying that category.
pub fn score_emotions<S: AsRef<str>>(
    tokens: &[S],
    lexicon: &EmotionLexicon,
) -> [u32; N_CATEGORIES] {
    let mut counts = [0u32; N_CATEGORIES];
    for t in tokens {
        if let Some(&mask) = lexicon.masks.get(t.as_ref()) {
            for (c, slot) in counts.iter_mut().enumerate() {
                if mask & (1 << c) != 0 {
                    *slot += 1;
                }
            }
        }
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentimentRecord {
    pub tweet_id: String,
    /// UTC calendar day of the tweet.
    pub day: NaiveDate,
    pub afinn_sum: i64,
    pub emotion_counts: [u32; N_CATEGORIES],
    pub n_tokens: usize,
}

pub fn score_tweet(
    tweet: &Tweet,
    stopwords: &Stopwords,
    signed: &SignedLexicon,
    emotions: &EmotionLexicon,
) -> SentimentRecord {
    let tokens = tokenize(&tweet.text, stopwords);
    SentimentRecord {
        tweet_id: tweet.id.clone(),
        day: tweet.created_at.date_naive(),
        afinn_sum: score_signed(&tokens, signed),
        emotion_counts: score_emotions(&tokens, emotions),
        n_tokens: tokens.len(),
    }
}

/// Scores every tweet in parallel; output keeps input order.
pub fn score_corpus(
    tweets: &[Tweet],
    stopwords: &Stopwords,
    signed: &SignedLexicon,
    emotions: &EmotionLexicon,
) -> Vec<SentimentRecord> {
    tweets
        .par_iter()
        .map(|t| score_tweet(t, stopwords, signed, emotions))
        .collect()
}

/// Means for one (day, class) cell; `None` where the cell has no tweets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub day: NaiveDate,
    pub class: Label,
    pub n: usize,
    pub afinn_mean: Option<f64>,
    pub emotion_means: [Option<f64>; N_CATEGORIES],
}

/// Daily means per class over every day from the first to the last scored
/// tweet, both classes on each day. Records whose label is missing or
/// `Uncertain` are ignored.
pub fn aggregate_series(
    records: &[SentimentRecord],
    labels: &HashMap<String, Label>,
) -> Vec<SeriesPoint> {
    #[derive(Default)]
    struct Acc {
        n: usize,
        afinn: i64,
        emotions: [u64; N_CATEGORIES],
    }
    let mut cells: BTreeMap<(NaiveDate, bool), Acc> = BTreeMap::new();
    for r in records {
        let Some(class) = labels.get(&r.tweet_id).and_then(|l| l.as_class()) else {
            continue;
        };
        let acc = cells.entry((r.day, class)).or_default();
        acc.n += 1;
        acc.afinn += r.afinn_sum;
        for (a, &c) in acc.emotions.iter_mut().zip(&r.emotion_counts) {
            *a += u64::from(c);
        }
    }
    let (Some(first), Some(last)) = (
        cells.keys().next().map(|k| k.0),
        cells.keys().last().map(|k| k.0),
    ) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for day in first.iter_days().take_while(|d| *d <= last) {
        for class in [true, false] {
            let point = match cells.get(&(day, class)) {
                Some(acc) => {
                    let n = acc.n as f64;
                    SeriesPoint {
                        day,
                        class: Label::from_class(class),
                        n: acc.n,
                        afinn_mean: Some(acc.afinn as f64 / n),
                        emotion_means: acc.emotions.map(|e| Some(e as f64 / n)),
                    }
                }
                None => SeriesPoint {
                    day,
                    class: Label::from_class(class),
                    n: 0,
                    afinn_mean: None,
                    emotion_means: [None; N_CATEGORIES],
                },
            };
            out.push(point);
        }
    }
    out
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Columns: date, class, afinn_mean, one `<category>_mean` per category, n.
/// Missing means are written as empty fields.
pub fn write_series_csv<W: Write>(points: &[SeriesPoint], out: W) -> Result<(), SentimentError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["date".to_string(), "class".into(), "afinn_mean".into()];
    header.extend(CATEGORIES.iter().map(|c| format!("{c}_mean")));
    header.push("n".into());
    w.write_record(&header)?;
    for p in points {
        let mut rec = vec![
            p.day.to_string(),
            p.class.to_string(),
            fmt_opt(p.afinn_mean),
        ];
        rec.extend(p.emotion_means.iter().map(|&m| fmt_opt(m)));
        rec.push(p.n.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Columns: tweet_id, date, afinn_sum, one count per category, n_tokens.
pub fn write_records_csv<W: Write>(
    records: &[SentimentRecord],
    out: W,
) -> Result<(), SentimentError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["tweet_id".to_string(), "date".into(), "afinn_sum".into()];
    header.extend(CATEGORIES.iter().map(|c| c.to_string()));
    header.push("n_tokens".into());
    w.write_record(&header)?;
    for r in records {
        let mut rec = vec![
            r.tweet_id.clone(),
            r.day.to_string(),
            r.afinn_sum.to_string(),
        ];
        rec.extend(r.emotion_counts.iter().map(|c| c.to_string()));
        rec.push(r.n_tokens.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tests::tweet;
    use proptest::prelude::*;

    #[test]
    fn bundled_lexicons() {
        let s = SignedLexicon::bundled();
        assert_eq!(s.get("good"), Some(3));
        let e = EmotionLexicon::bundled();
        assert!(e.categories("abandon").contains(&"fear"));
        assert!(e.categories("spread").is_empty());
        assert_eq!(e.categories("nonexistent"), Vec::<&str>::new());
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        let err = SignedLexicon::parse("good\t3\n\nbad\tminus\n".as_bytes()).unwrap_err();
        assert!(
            matches!(err, SentimentError::Malformed { line: 3, .. }),
            "{err}"
        );
        assert!(SignedLexicon::parse("x\t6\n".as_bytes()).is_err());
        let err = EmotionLexicon::parse("a\tfear\t1\nb\tglee\t1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, SentimentError::Malformed { line: 2, .. }));
        assert!(EmotionLexicon::parse("a\tfear\n".as_bytes()).is_err());
        assert!(SignedLexicon::parse("".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn duplicates_keep_last() {
        let s = SignedLexicon::parse("good\t3\ngood\t-1\n".as_bytes()).unwrap();
        assert_eq!(s.get("good"), Some(-1));
        let e = EmotionLexicon::parse("a\tfear\t1\na\tfear\t0\n".as_bytes()).unwrap();
        assert!(e.categories("a").is_empty());
    }

    #[test]
    fn additive_scores() {
        let s = SignedLexicon::parse("up\t3\ndown\t-2\n".as_bytes()).unwrap();
        assert_eq!(score_signed::<&str>(&[], &s), 0);
        assert_eq!(score_signed(&["up", "down", "meh"], &s), 1);
        let e = EmotionLexicon::parse("dread\tfear\t1\ndread\tnegative\t1\n".as_bytes()).unwrap();
        let c = score_emotions(&["dread", "dread", "x"], &e);
        assert_eq!((c[3], c[9]), (2, 2));
        assert_eq!(c.iter().sum::<u32>(), 4);
        assert_eq!(score_emotions::<&str>(&[], &e), [0; N_CATEGORIES]);
    }

    #[test]
    fn scoring_a_tweet_uses_tokenizer() {
        let stop = crate::textfeat::default_stopwords();
        let r = score_tweet(
            &tweet("1", "Such a GOOD day, not bad!"),
            &stop,
            &SignedLexicon::bundled(),
            &EmotionLexicon::bundled(),
        );
        assert_eq!(r.afinn_sum, 0);
        assert_eq!(r.day.to_string(), "2020-01-21");
    }

    fn rec(id: &str, day: &str, afinn: i64, fear: u32) -> SentimentRecord {
        let mut emotion_counts = [0; N_CATEGORIES];
        emotion_counts[3] = fear;
        SentimentRecord {
            tweet_id: id.into(),
            day: day.parse().unwrap(),
            afinn_sum: afinn,
            emotion_counts,
            n_tokens: 5,
        }
    }

    #[test]
    fn daily_means_with_gaps() {
        let records = vec![
            rec("a", "2020-03-01", 2, 1),
            rec("b", "2020-03-01", -4, 0),
            rec("c", "2020-03-03", 1, 2),
            rec("d", "2020-03-03", 9, 9),
        ];
        let labels: HashMap<String, Label> = [
            ("a".to_string(), Label::Misinfo),
            ("b".to_string(), Label::Misinfo),
            ("c".to_string(), Label::NotMisinfo),
            ("d".to_string(), Label::Uncertain),
        ]
        .into();
        let series = aggregate_series(&records, &labels);
        assert_eq!(series.len(), 6);
        assert_eq!(series[0].afinn_mean, Some(-1.0));
        assert_eq!(series[0].emotion_means[3], Some(0.5));
        assert_eq!(series[1].afinn_mean, None);
        assert_eq!(series[1].n, 0);
        assert_eq!(series[5].afinn_mean, Some(1.0));

        let mut buf = Vec::new();
        write_series_csv(&series, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert!(lines
            .next()
            .unwrap()
            .starts_with("date,class,afinn_mean,anger_mean,"));
        assert_eq!(lines.nth(1).unwrap(), "2020-03-01,not_misinfo,,,,,,,,,,,,0");
    }

    proptest! {
        #[test]
        fn linear_and_bounded(a in prop::collection::vec("(good|bad|hate|love|x|abandon)", 0..30),
                              b in prop::collection::vec("(good|bad|hate|love|x|abandon)", 0..30)) {
            let s = SignedLexicon::bundled();
            let e = EmotionLexicon::bundled();
            let ab: Vec<String> = a.iter().chain(&b).cloned().collect();
            prop_assert_eq!(score_signed(&ab, &s), score_signed(&a, &s) + score_signed(&b, &s));
            let mut plus = ab.clone();
            plus.push("good".into());
            prop_assert!(score_signed(&plus, &s) >= score_signed(&ab, &s));
            for c in score_emotions(&ab, &e) {
                prop_assert!(c as usize <= ab.len());
            }
        }
    }
}
