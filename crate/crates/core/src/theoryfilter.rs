//! Regex-defined theory datasets and their overlap accounting.
//!
//! Patterns are user data: they live in a TOML file with one `[[theory]]`
//! table per theory:
//!
//! ```toml
//! [[theory]]
//! name = "5G"
//! patterns = ['\b5g\b', '#5g']
//! case_insensitive = true   # optional, default true
//! ```
//!
//! Matching runs against the raw tweet text so hashtags and casing survive.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;

use rayon::prelude::*;
use regex::{RegexSet, RegexSetBuilder};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Tweet;

/// Illustrative patterns shipped with the tool.
pub const DEFAULT_THEORIES_TOML: &str = include_str!("../data/theories.toml");

#[derive(Debug, Error)]
pub enum TheoryError {
    #[error("theory {theory}: invalid pattern {pattern:?}: {message}")]
    InvalidPattern {
        theory: String,
        pattern: String,
        message: String,
    },
    #[error("duplicate theory name {0:?}")]
    DuplicateName(String),
    #[error("theory {0:?} has no patterns")]
    NoPatterns(String),
    #[error("malformed theory config: {0}")]
    Config(#[from] toml::de::Error),
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TheoryConfig {
    pub name: String,
    #[serde(rename = "patterns")]
    pub include_patterns: Vec<String>,
    #[serde(default = "default_true")]
    pub case_insensitive: bool,
}

#[derive(Debug, Deserialize)]
struct TheoryFile {
    #[serde(rename = "theory", default)]
    theories: Vec<TheoryConfig>,
}

pub fn parse_theory_configs(text: &str) -> Result<Vec<TheoryConfig>, TheoryError> {
    let file: TheoryFile = toml::from_str(text)?;
    let mut names = HashSet::new();
    for t in &file.theories {
        if !names.insert(t.name.clone()) {
            return Err(TheoryError::DuplicateName(t.name.clone()));
        }
    }
    Ok(file.theories)
}

#[derive(Debug, Clone)]
pub struct CompiledTheory {
    name: String,
    set: RegexSet,
}

impl CompiledTheory {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_match(&self, text: &str) -> bool {
        self.set.is_match(text)
    }
}

pub fn compile_theory(config: &TheoryConfig) -> Result<CompiledTheory, TheoryError> {
    if config.include_patterns.is_empty() {
        return Err(TheoryError::NoPatterns(config.name.clone()));
    }
    // Compile one at a time first so the error names the offending pattern.
    for pattern in &config.include_patterns {
        if let Err(e) = regex::RegexBuilder::new(pattern)
            .case_insensitive(config.case_insensitive)
            .build()
        {
            return Err(TheoryError::InvalidPattern {
                theory: config.name.clone(),
                pattern: pattern.clone(),
                message: e.to_string(),
            });
        }
    }
    let set = RegexSetBuilder::new(&config.include_patterns)
        .case_insensitive(config.case_insensitive)
        .build()
        .map_err(|e| TheoryError::InvalidPattern {
            theory: config.name.clone(),
            pattern: config.include_patterns.join(" | "),
            message: e.to_string(),
        })?;
    Ok(CompiledTheory {
        name: config.name.clone(),
        set,
    })
}

pub fn compile_all(configs: &[TheoryConfig]) -> Result<Vec<CompiledTheory>, TheoryError> {
    let mut seen = HashSet::new();
    configs
        .iter()
        .map(|c| {
            if !seen.insert(c.name.as_str()) {
                return Err(TheoryError::DuplicateName(c.name.clone()));
            }
            compile_theory(c)
        })
        .collect()
}

/// Indices (into `theories`) of every theory whose matcher fires on the raw text.
pub fn match_indices(text: &str, theories: &[CompiledTheory]) -> Vec<usize> {
    theories
        .iter()
        .enumerate()
        .filter(|(_, t)| t.is_match(text))
        .map(|(i, _)| i)
        .collect()
}

pub fn match_theories<'a>(tweet: &Tweet, theories: &'a [CompiledTheory]) -> Vec<&'a str> {
    match_indices(&tweet.text, theories)
        .into_iter()
        .map(|i| theories[i].name())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TheoryCount {
    pub theory: String,
    pub count: u64,
    /// Tweets of this theory that also match at least one other theory.
    pub multi_count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCount {
    pub theory_a: String,
    pub theory_b: String,
    pub count: u64,
}

/// Counts behind the filtering table and the overlap graph.
///
/// Percentages of `count` are taken against `total_assignments`, the sum of
/// per-theory counts, which is the `n` of the published filtering table (a
/// tweet in two theories is counted in both). `total_unique` is the size of
/// the union.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionReport {
    pub theories: Vec<TheoryCount>,
    pub pairwise: Vec<PairCount>,
    pub total_unique: u64,
    pub total_assignments: u64,
}

impl PartitionReport {
    pub fn count_of(&self, theory: &str) -> Option<&TheoryCount> {
        self.theories.iter().find(|t| t.theory == theory)
    }

    pub fn overlap(&self, a: &str, b: &str) -> Option<u64> {
        self.pairwise
            .iter()
            .find(|p| (p.theory_a == a && p.theory_b == b) || (p.theory_a == b && p.theory_b == a))
            .map(|p| p.count)
    }

    /// Share of all theory assignments held by one theory, in percent.
    pub fn pct(&self, theory: &str) -> Option<f64> {
        self.count_of(theory)
            .map(|t| percent(t.count, self.total_assignments))
    }

    pub fn multi_pct(&self, theory: &str) -> Option<f64> {
        self.count_of(theory)
            .map(|t| percent(t.multi_count, t.count))
    }

    /// CSV with header `theory,count,pct,multi_count,multi_pct`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["theory", "count", "pct", "multi_count", "multi_pct"])?;
        for t in &self.theories {
            w.write_record([
                t.theory.clone(),
                t.count.to_string(),
                format!("{:.2}", percent(t.count, self.total_assignments)),
                t.multi_count.to_string(),
                format!("{:.2}", percent(t.multi_count, t.count)),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Edge list CSV with header `theory_a,theory_b,count`.
    pub fn write_edges_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["theory_a", "theory_b", "count"])?;
        for p in &self.pairwise {
            w.write_record([
                p.theory_a.as_str(),
                p.theory_b.as_str(),
                &p.count.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `part / whole` in percent; zero when `whole` is zero.
pub fn percent(part: u64, whole: u64) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

/// Builds the report from per-tweet match index lists.
pub fn report_from_matches(theory_names: &[String], matches: &[Vec<usize>]) -> PartitionReport {
    let k = theory_names.len();
    let mut counts = vec![0u64; k];
    let mut multi = vec![0u64; k];
    let mut pairs: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut unique = 0u64;
    for m in matches {
        if m.is_empty() {
            continue;
        }
        unique += 1;
        for &i in m {
            counts[i] += 1;
            if m.len() > 1 {
                multi[i] += 1;
            }
        }
        for (x, &i) in m.iter().enumerate() {
            for &j in &m[x + 1..] {
                *pairs.entry((i.min(j), i.max(j))).or_default() += 1;
            }
        }
    }
    let theories = theory_names
        .iter()
        .enumerate()
        .map(|(i, name)| TheoryCount {
            theory: name.clone(),
            count: counts[i],
            multi_count: multi[i],
        })
        .collect();
    let mut pairwise = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            pairwise.push(PairCount {
                theory_a: theory_names[i].clone(),
                theory_b: theory_names[j].clone(),
                count: pairs.get(&(i, j)).copied().unwrap_or(0),
            });
        }
    }
    PartitionReport {
        theories,
        pairwise,
        total_unique: unique,
        total_assignments: counts.iter().sum(),
    }
}

/// Per-theory datasets, in theory order, each preserving corpus order.
#[derive(Debug, Clone)]
pub struct Partition {
    pub datasets: Vec<(String, Vec<Tweet>)>,
    pub report: PartitionReport,
}

pub fn partition_corpus(tweets: &[Tweet], theories: &[CompiledTheory]) -> Partition {
    let matches: Vec<Vec<usize>> = tweets
        .par_iter()
        .map(|t| match_indices(&t.text, theories))
        .collect();
    let names: Vec<String> = theories.iter().map(|t| t.name().to_owned()).collect();
    let mut datasets: Vec<(String, Vec<Tweet>)> =
        names.iter().map(|n| (n.clone(), Vec::new())).collect();
    for (tweet, m) in tweets.iter().zip(&matches) {
        for &i in m {
            datasets[i].1.push(tweet.clone());
        }
    }
    Partition {
        datasets,
        report: report_from_matches(&names, &matches),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tests::tweet;
    use proptest::prelude::*;

    fn theory(name: &str, patterns: &[&str]) -> CompiledTheory {
        compile_theory(&TheoryConfig {
            name: name.into(),
            include_patterns: patterns.iter().map(|p| p.to_string()).collect(),
            case_insensitive: true,
        })
        .unwrap()
    }

    #[test]
    fn single_pattern_matching() {
        assert!(theory("5G", &["(?i)5g"]).is_match("5G towers burn"));
        assert!(!theory("Gates", &[r"bill\s+gates"]).is_match("gates of hell"));
        assert!(theory("Vax", &["microchip", "vaccin"]).is_match("the vaccine microchip"));
    }

    #[test]
    fn invalid_pattern_is_named() {
        let err = compile_theory(&TheoryConfig {
            name: "Lab".into(),
            include_patterns: vec!["wuhan".into(), "lab(".into()],
            case_insensitive: true,
        })
        .unwrap_err();
        match err {
            TheoryError::InvalidPattern {
                theory, pattern, ..
            } => {
                assert_eq!(theory, "Lab");
                assert_eq!(pattern, "lab(");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn independent_matchers() {
        let ts = vec![
            theory("Gates", &[r"bill\s+gates"]),
            theory("Lab", &[r"wuhan\s+lab"]),
        ];
        let t = tweet("1", "Bill Gates funded the Wuhan lab");
        assert_eq!(match_theories(&t, &ts), ["Gates", "Lab"]);
        assert!(match_theories(&tweet("2", "good morning"), &ts).is_empty());
    }

    #[test]
    fn set_arithmetic_report() {
        let names = vec!["A".to_string(), "B".to_string()];
        let r = report_from_matches(&names, &[vec![0], vec![0, 1], vec![1]]);
        assert_eq!(r.count_of("A").unwrap().count, 2);
        assert_eq!(r.count_of("B").unwrap().count, 2);
        assert_eq!(r.overlap("A", "B"), Some(1));
        assert_eq!(r.overlap("B", "A"), Some(1));
        assert_eq!(r.count_of("A").unwrap().multi_count, 1);
        assert_eq!(r.count_of("B").unwrap().multi_count, 1);
        assert_eq!(r.total_unique, 3);
    }

    #[test]
    fn published_filter_percentages() {
        let report = PartitionReport {
            theories: [
                ("5G", 127_209, 6300),
                ("Gates", 278_130, 69_566),
                ("Lab", 526_115, 44_198),
                ("Vax", 969_654, 82_380),
            ]
            .into_iter()
            .map(|(t, c, m)| TheoryCount {
                theory: t.into(),
                count: c,
                multi_count: m,
            })
            .collect(),
            pairwise: vec![],
            total_unique: 1_800_000,
            total_assignments: 1_901_108,
        };
        // the published Lab share (27.64) is 0.03 points below its own counts
        for (t, pct) in [
            ("5G", 6.69),
            ("Gates", 14.63),
            ("Lab", 27.64),
            ("Vax", 51.00),
        ] {
            assert!((report.pct(t).unwrap() - pct).abs() < 0.05, "{t}");
        }
        assert!((report.multi_pct("5G").unwrap() - 4.95).abs() < 0.005);
    }

    #[test]
    fn csv_exports() {
        let names = vec!["A".to_string(), "B".to_string()];
        let r = report_from_matches(&names, &[vec![0], vec![0, 1], vec![1]]);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "theory,count,pct,multi_count,multi_pct\nA,2,50.00,1,50.00\nB,2,50.00,1,50.00\n"
        );
        let mut buf = Vec::new();
        r.write_edges_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "theory_a,theory_b,count\nA,B,1\n"
        );
    }

    #[test]
    fn bundled_config_compiles() {
        let configs = parse_theory_configs(DEFAULT_THEORIES_TOML).unwrap();
        let names: Vec<_> = configs.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, ["5G", "Gates", "Lab", "Vax"]);
        compile_all(&configs).unwrap();
    }

    #[test]
    fn duplicate_names_rejected() {
        let text = "[[theory]]\nname='A'\npatterns=['a']\n[[theory]]\nname='A'\npatterns=['b']\n";
        assert!(matches!(
            parse_theory_configs(text),
            Err(TheoryError::DuplicateName(_))
        ));
    }

    proptest! {
        #[test]
        fn order_independent(words in proptest::collection::vec(prop_oneof![Just("alpha"), Just("beta"), Just("gamma"), Just("delta")], 1..40),
                             rot in 0usize..40) {
            let ts = vec![theory("A", &["alpha"]), theory("B", &["beta|gamma"]), theory("C", &["gamma"])];
            let tweets: Vec<Tweet> = words.chunks(2).enumerate()
                .map(|(i, w)| tweet(&i.to_string(), &w.join(" ")))
                .collect();
            let mut shuffled = tweets.clone();
            let len = shuffled.len();
            shuffled.rotate_left(rot % len);
            shuffled.reverse();
            prop_assert_eq!(partition_corpus(&tweets, &ts).report, partition_corpus(&shuffled, &ts).report);
        }

        #[test]
        fn two_way_inclusion_exclusion(sets in proptest::collection::vec(proptest::collection::btree_set(0usize..3, 0..=2), 0..60)) {
            // at most two theories per tweet: union = sum(counts) - sum(pair overlaps)
            let names: Vec<String> = ["A", "B", "C"].iter().map(|s| s.to_string()).collect();
            let matches: Vec<Vec<usize>> = sets.iter().map(|s| s.iter().copied().collect()).collect();
            let r = report_from_matches(&names, &matches);
            let sum: u64 = r.theories.iter().map(|t| t.count).sum();
            let overlaps: u64 = r.pairwise.iter().map(|p| p.count).sum();
            prop_assert_eq!(sum - overlaps, r.total_unique);
            for t in &r.theories {
                prop_assert!(t.multi_count <= t.count);
            }
        }
    }
}
