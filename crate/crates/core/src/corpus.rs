//! Tweet records: JSONL ingestion, text normalization, deduplication and
//! weekly time slicing.

use std::collections::HashSet;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::sync::OnceLock;

use chrono::{DateTime, Duration, SubsecRound, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("tweet {id} created at {created_at} precedes the slice epoch {epoch}")]
    BeforeEpoch {
        id: String,
        created_at: DateTime<Utc>,
        epoch: DateTime<Utc>,
    },
    #[error("slice width must be positive")]
    ZeroWidth,
}

/// One normalized social-media record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tweet {
    pub id: String,
    pub text: String,
    #[serde(with = "second_precision")]
    pub created_at: DateTime<Utc>,
    pub lang: String,
    pub author_id: String,
    pub reply_to_id: Option<String>,
    pub retweet_of_id: Option<String>,
    #[serde(rename = "urls", default)]
    pub linked_urls: Vec<String>,
    pub source_domain: Option<String>,
}

impl Tweet {
    pub fn normalized_text(&self) -> String {
        normalize_tweet(&self.text)
    }

    /// True when the record's language tag equals `filter` or is a subtag of it
    /// (`en` accepts `en` and `en-GB`).
    pub fn lang_matches(&self, filter: &str) -> bool {
        let lang = self.lang.to_ascii_lowercase();
        let filter = filter.to_ascii_lowercase();
        lang == filter
            || (lang.starts_with(&filter)
                && matches!(lang.as_bytes().get(filter.len()), Some(b'-') | Some(b'_')))
    }
}

/// Timestamps are written as `YYYY-MM-DDTHH:MM:SSZ`; sub-second input is truncated.
mod second_precision {
    use chrono::{DateTime, SecondsFormat, SubsecRound, Utc};
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ts: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&ts.to_rfc3339_opts(SecondsFormat::Secs, true))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let raw = String::deserialize(d)?;
        DateTime::parse_from_rfc3339(&raw)
            .map(|ts| ts.with_timezone(&Utc).trunc_subsecs(0))
            .map_err(|e| de::Error::custom(format!("invalid created_at {raw:?}: {e}")))
    }
}

/// Counters produced while reading a JSONL file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub lines_read: usize,
    pub parsed: usize,
    pub skipped: usize,
    pub language_rejected: usize,
}

/// Streaming reader over line-delimited tweet JSON.
///
/// Malformed lines are counted in the report and skipped. Blank lines are
/// counted as read but are neither parsed nor skipped.
pub struct JsonlReader<R> {
    lines: io::Lines<R>,
    lang_filter: Option<String>,
    report: LoadReport,
}

impl<R: BufRead> JsonlReader<R> {
    pub fn new(reader: R, lang_filter: Option<&str>) -> Self {
        Self {
            lines: reader.lines(),
            lang_filter: lang_filter.map(str::to_owned),
            report: LoadReport::default(),
        }
    }

    pub fn report(&self) -> LoadReport {
        self.report
    }
}

impl<R: BufRead> Iterator for JsonlReader<R> {
    type Item = io::Result<Tweet>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(e) if e.kind() == io::ErrorKind::InvalidData => {
                    // not UTF-8: a line-level defect, not an I/O failure
                    self.report.lines_read += 1;
                    self.report.skipped += 1;
                    continue;
                }
                Err(e) => return Some(Err(e)),
            };
            self.report.lines_read += 1;
            if line.trim().is_empty() {
                continue;
            }
            let tweet: Tweet = match serde_json::from_str(&line) {
                Ok(t) => t,
                Err(e) => {
                    log::debug!("skipping line {}: {e}", self.report.lines_read);
                    self.report.skipped += 1;
                    continue;
                }
            };
            if tweet.id.is_empty() {
                self.report.skipped += 1;
                continue;
            }
            self.report.parsed += 1;
            if let Some(filter) = &self.lang_filter {
                if !tweet.lang_matches(filter) {
                    self.report.language_rejected += 1;
                    continue;
                }
            }
            return Some(Ok(tweet));
        }
    }
}

/// Reads a whole JSONL file. Only an unreadable file is fatal.
pub fn load_jsonl(
    path: impl AsRef<Path>,
    lang_filter: Option<&str>,
) -> Result<(Vec<Tweet>, LoadReport), CorpusError> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    let mut reader = JsonlReader::new(BufReader::new(file), lang_filter);
    let mut tweets = Vec::new();
    for tweet in reader.by_ref() {
        tweets.push(tweet.map_err(io_err)?);
    }
    Ok((tweets, reader.report()))
}

pub fn write_jsonl<'a, W: Write>(
    mut out: W,
    tweets: impl IntoIterator<Item = &'a Tweet>,
) -> io::Result<()> {
    for tweet in tweets {
        serde_json::to_writer(&mut out, tweet)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

fn retweet_marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*rt\s+@[^\s:]+:\s*").unwrap())
}

fn url_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?:https?://|www\.)\S+").unwrap())
}

/// Canonical text form used for deduplication, similarity and tokenizing:
/// NFC, lowercase, leading `rt @handle:` markers removed, URLs removed,
/// whitespace collapsed.
pub fn normalize_tweet(text: &str) -> String {
    let lowered: String = text.nfc().collect::<String>().to_lowercase();
    let mut rest = lowered.as_str();
    while let Some(m) = retweet_marker().find(rest) {
        rest = &rest[m.end()..];
    }
    let without_urls = url_pattern().replace_all(rest, " ");
    without_urls
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DedupKey {
    Id,
    NormalizedText,
}

/// Keeps the first occurrence of each key. Returns the survivors and the
/// number of dropped records.
pub fn deduplicate(tweets: impl IntoIterator<Item = Tweet>, key: DedupKey) -> (Vec<Tweet>, usize) {
    let mut seen = HashSet::new();
    let mut kept = Vec::new();
    let mut dropped = 0;
    for tweet in tweets {
        let k = match key {
            DedupKey::Id => tweet.id.clone(),
            DedupKey::NormalizedText => tweet.normalized_text(),
        };
        if seen.insert(k) {
            kept.push(tweet);
        } else {
            dropped += 1;
        }
    }
    (kept, dropped)
}

/// A fixed-width partition of time starting at `epoch`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceGrid {
    pub epoch: DateTime<Utc>,
    pub width_secs: i64,
}

/// A single bucket of a [`SliceGrid`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeSlice {
    pub index: usize,
    pub start: DateTime<Utc>,
    pub width_secs: i64,
}

impl SliceGrid {
    pub fn new(epoch: DateTime<Utc>, width: Duration) -> Result<Self, CorpusError> {
        let width_secs = width.num_seconds();
        if width_secs <= 0 {
            return Err(CorpusError::ZeroWidth);
        }
        Ok(Self {
            epoch: epoch.trunc_subsecs(0),
            width_secs,
        })
    }

    pub fn weekly(epoch: DateTime<Utc>) -> Self {
        Self::new(epoch, Duration::days(7)).expect("a week is a positive width")
    }

    pub fn index_of(&self, ts: DateTime<Utc>) -> Option<usize> {
        let offset = (ts - self.epoch).num_seconds();
        (offset >= 0).then(|| (offset / self.width_secs) as usize)
    }

    pub fn slice(&self, index: usize) -> TimeSlice {
        TimeSlice {
            index,
            start: self.epoch + Duration::seconds(self.width_secs * index as i64),
            width_secs: self.width_secs,
        }
    }

    /// Number of slices needed to cover `[epoch, last]` inclusive.
    pub fn slices_covering(&self, last: DateTime<Utc>) -> usize {
        self.index_of(last).map_or(0, |i| i + 1)
    }
}

pub fn assign_time_slice(
    tweet: &Tweet,
    epoch: DateTime<Utc>,
    width: Duration,
) -> Result<usize, CorpusError> {
    let grid = SliceGrid::new(epoch, width)?;
    grid.index_of(tweet.created_at)
        .ok_or_else(|| CorpusError::BeforeEpoch {
            id: tweet.id.clone(),
            created_at: tweet.created_at,
            epoch,
        })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;

    pub(crate) fn tweet(id: &str, text: &str) -> Tweet {
        Tweet {
            id: id.into(),
            text: text.into(),
            created_at: Utc.with_ymd_and_hms(2020, 1, 21, 0, 0, 0).unwrap(),
            lang: "en".into(),
            author_id: format!("u{id}"),
            reply_to_id: None,
            retweet_of_id: None,
            linked_urls: vec![],
            source_domain: None,
        }
    }

    fn line(id: &str, lang: &str) -> String {
        let mut t = tweet(id, "hello world");
        t.lang = lang.into();
        serde_json::to_string(&t).unwrap()
    }

    #[test]
    fn language_filter_rejects_other_languages() {
        let data = [
            line("1", "en"),
            line("2", "en-GB"),
            line("3", "es"),
            line("4", "en"),
        ]
        .join("\n");
        let mut reader = JsonlReader::new(data.as_bytes(), Some("en"));
        let got: Vec<_> = reader.by_ref().map(Result::unwrap).collect();
        assert_eq!(got.len(), 3);
        let r = reader.report();
        assert_eq!(r.language_rejected, 1);
        assert_eq!(r.lines_read, 4);
        assert_eq!(r.parsed, 4);
    }

    #[test]
    fn empty_input_reads_nothing() {
        let mut reader = JsonlReader::new(&b""[..], None);
        assert!(reader.next().is_none());
        assert_eq!(reader.report(), LoadReport::default());
    }

    #[test]
    fn truncated_line_is_skipped() {
        let good = line("1", "en");
        let bad = &good[..good.len() / 2];
        let data = format!("{good}\n{bad}\n");
        let mut reader = JsonlReader::new(data.as_bytes(), None);
        let got: Vec<_> = reader.by_ref().collect();
        assert_eq!(got.len(), 1);
        assert_eq!(reader.report().skipped, 1);
        assert_eq!(reader.report().lines_read, 2);
    }

    #[test]
    fn missing_file_is_fatal() {
        assert!(matches!(
            load_jsonl("/nonexistent/corpus.jsonl", None),
            Err(CorpusError::Io { .. })
        ));
    }

    #[test]
    fn normalization_rules() {
        assert_eq!(normalize_tweet("RT @user: The 5G  towers"), "the 5g towers");
        assert_eq!(normalize_tweet("Check https://t.co/abc now"), "check now");
        assert_eq!(normalize_tweet(""), "");
        assert_eq!(normalize_tweet("RT @a: RT @b: nested"), "nested");
        // decomposed e + combining acute composes to the same string as é
        assert_eq!(normalize_tweet("Cafe\u{301}"), normalize_tweet("Café"));
    }

    #[test]
    fn dedup_by_id_and_text() {
        let a = tweet("a", "x");
        let (kept, dropped) =
            deduplicate(vec![a.clone(), a.clone(), tweet("b", "y")], DedupKey::Id);
        assert_eq!(
            kept.iter().map(|t| t.id.as_str()).collect::<Vec<_>>(),
            ["a", "b"]
        );
        assert_eq!(dropped, 1);

        let original = tweet("1", "Bill Gates wants microchips");
        let rt = tweet("2", "RT @x: Bill Gates wants microchips");
        let (kept, dropped) = deduplicate(vec![original, rt], DedupKey::NormalizedText);
        assert_eq!(kept.len(), 1);
        assert_eq!(dropped, 1);
    }

    #[test]
    fn dedup_sample_accounting() {
        // 725 distinct texts, the remainder repeats of earlier ones
        let tweets: Vec<Tweet> = (0..1000)
            .map(|i| tweet(&i.to_string(), &format!("text number {}", i % 725)))
            .collect();
        let (kept, dropped) = deduplicate(tweets, DedupKey::NormalizedText);
        assert_eq!(kept.len(), 725);
        assert_eq!(dropped, 275);
    }

    #[test]
    fn slice_assignment() {
        let epoch = Utc.with_ymd_and_hms(2020, 1, 21, 0, 0, 0).unwrap();
        let mut t = tweet("1", "");
        assert_eq!(assign_time_slice(&t, epoch, Duration::days(7)).unwrap(), 0);
        t.created_at = epoch + Duration::days(13);
        assert_eq!(assign_time_slice(&t, epoch, Duration::days(7)).unwrap(), 1);
        t.created_at = epoch - Duration::seconds(1);
        assert!(matches!(
            assign_time_slice(&t, epoch, Duration::days(7)),
            Err(CorpusError::BeforeEpoch { .. })
        ));
    }

    #[test]
    fn study_window_needs_sixteen_weeks() {
        let epoch = Utc.with_ymd_and_hms(2020, 1, 21, 0, 0, 0).unwrap();
        let last = Utc.with_ymd_and_hms(2020, 5, 8, 0, 0, 0).unwrap();
        assert_eq!((last - epoch).num_days(), 108);
        assert_eq!(SliceGrid::weekly(epoch).slices_covering(last), 16);
    }

    fn arb_tweet() -> impl Strategy<Value = Tweet> {
        (
            "[a-z0-9]{1,8}",
            "\\PC{0,40}",
            0i64..20_000_000,
            prop_oneof![Just("en"), Just("en-GB"), Just("fr")],
            proptest::option::of("[0-9]{1,4}"),
            proptest::collection::vec("https://[a-z]{1,6}\\.com/[a-z]{0,4}", 0..3),
        )
            .prop_map(|(id, text, secs, lang, reply, urls)| Tweet {
                id,
                text,
                created_at: Utc.timestamp_opt(1_579_564_800 + secs, 0).unwrap(),
                lang: lang.into(),
                author_id: "a".into(),
                reply_to_id: reply,
                retweet_of_id: None,
                linked_urls: urls,
                source_domain: None,
            })
    }

    proptest! {
        #[test]
        fn jsonl_round_trip(tweets in proptest::collection::vec(arb_tweet(), 0..20)) {
            let (tweets, _) = deduplicate(tweets, DedupKey::Id);
            let mut buf = Vec::new();
            write_jsonl(&mut buf, &tweets).unwrap();
            let back: Vec<Tweet> = JsonlReader::new(&buf[..], None).map(Result::unwrap).collect();
            prop_assert_eq!(back, tweets);
        }

        #[test]
        fn dedup_is_idempotent(texts in proptest::collection::vec("[ab ]{0,4}", 0..30)) {
            let tweets: Vec<Tweet> = texts.iter().enumerate().map(|(i, t)| tweet(&i.to_string(), t)).collect();
            let (once, _) = deduplicate(tweets, DedupKey::NormalizedText);
            let (twice, dropped) = deduplicate(once.clone(), DedupKey::NormalizedText);
            prop_assert_eq!(dropped, 0);
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn slice_index_monotone(a in 0i64..10_000_000, b in 0i64..10_000_000) {
            let grid = SliceGrid::weekly(Utc.with_ymd_and_hms(2020, 1, 21, 0, 0, 0).unwrap());
            let (lo, hi) = (a.min(b), a.max(b));
            let ia = grid.index_of(grid.epoch + Duration::seconds(lo)).unwrap();
            let ib = grid.index_of(grid.epoch + Duration::seconds(hi)).unwrap();
            prop_assert!(ia <= ib);
        }

        #[test]
        fn normalization_is_stable(s in "\\PC{0,60}") {
            let once = normalize_tweet(&s);
            prop_assert_eq!(normalize_tweet(&s), once);
        }
    }
}
