use rayon::prelude::*;

use super::{LabelSource, LabeledExample};

/// Character-level edit distance (insert, delete, substitute all cost 1).
pub fn levenshtein(a: &[char], b: &[char]) -> usize {
    let (a, b) = if a.len() < b.len() { (b, a) } else { (a, b) };
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn similarity_chars(a: &[char], b: &[char]) -> f64 {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein(a, b) as f64 / longest as f64
}

/// 1 - edit distance / longer length, over Unicode scalar values.
pub fn string_similarity(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    similarity_chars(&a, &b)
}

/// Whether two lengths can possibly reach `threshold` similarity: the edit
/// distance is at least the length difference.
pub fn length_compatible(la: usize, lb: usize, threshold: f64) -> bool {
    let longest = la.max(lb);
    if longest == 0 {
        return true;
    }
    let diff = la.abs_diff(lb) as f64;
    1.0 - diff / longest as f64 >= threshold
}

/// Pool entries with similarity at least `threshold` to a human-labelled
/// tweet, as `Propagated` examples in pool order. Only human labels
/// propagate, so propagated labels never cascade.
pub fn propagate_labels<S: AsRef<str> + Sync>(
    example: &LabeledExample,
    text: &str,
    pool: &[(S, S)],
    threshold: f64,
) -> Vec<LabeledExample> {
    if !matches!(example.source, LabelSource::Human { .. }) {
        return Vec::new();
    }
    let source: Vec<char> = text.chars().collect();
    pool.par_iter()
        .filter_map(|(id, other)| {
            let id = id.as_ref();
            if id == example.tweet_id {
                return None;
            }
            let other = other.as_ref();
            if !length_compatible(source.len(), other.chars().count(), threshold) {
                return None;
            }
            let other: Vec<char> = other.chars().collect();
            let similarity = similarity_chars(&source, &other);
            (similarity >= threshold).then(|| LabeledExample {
                tweet_id: id.to_owned(),
                label: example.label,
                source: LabelSource::Propagated {
                    from_id: example.tweet_id.clone(),
                    similarity,
                },
                round: example.round,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::normalize_tweet;
    use crate::label::Label;
    use proptest::prelude::*;

    #[test]
    fn known_distances() {
        assert!((string_similarity("kitten", "sitting") - (1.0 - 3.0 / 7.0)).abs() < 1e-12);
        assert_eq!(string_similarity("", ""), 1.0);
        assert_eq!(string_similarity("abc", ""), 0.0);
        assert_eq!(string_similarity("same", "same"), 1.0);
        assert_eq!(string_similarity("naïve", "naive"), 0.8);
    }

    #[test]
    fn retweet_normalizes_to_original() {
        let a = normalize_tweet("5G towers spread the virus https://t.co/x");
        let b = normalize_tweet("RT @someone: 5G towers spread the virus");
        assert_eq!(string_similarity(&a, &b), 1.0);
    }

    fn human(id: &str, label: Label) -> LabeledExample {
        LabeledExample {
            tweet_id: id.into(),
            label,
            source: LabelSource::Human {
                annotator_id: "a1".into(),
            },
            round: 1,
        }
    }

    #[test]
    fn duplicates_propagate() {
        let text = "the vaccine contains a tracking chip";
        let mut pool: Vec<(String, String)> = (0..5)
            .map(|i| (format!("d{i}"), text.to_string()))
            .collect();
        pool.push(("other".into(), "completely unrelated words".into()));
        let out = propagate_labels(&human("src", Label::Misinfo), text, &pool, 0.95);
        assert_eq!(out.len(), 5);
        assert!(out.iter().all(|e| e.label == Label::Misinfo));
        assert!(propagate_labels(&human("src", Label::Misinfo), "zzz", &pool, 0.95).is_empty());
        assert_eq!(
            propagate_labels(&human("src", Label::Uncertain), text, &pool, 0.95).len(),
            5
        );
    }

    #[test]
    fn propagated_sources_do_not_cascade() {
        let mut ex = human("src", Label::Misinfo);
        ex.source = LabelSource::Propagated {
            from_id: "x".into(),
            similarity: 1.0,
        };
        let pool = vec![("a".to_string(), "t".to_string())];
        assert!(propagate_labels(&ex, "t", &pool, 0.95).is_empty());
    }

    fn naive_levenshtein(a: &[char], b: &[char]) -> usize {
        let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for (i, row) in d.iter_mut().enumerate() {
            row[0] = i;
        }
        for j in 0..=b.len() {
            d[0][j] = j;
        }
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                let c = usize::from(a[i - 1] != b[j - 1]);
                d[i][j] = (d[i - 1][j] + 1)
                    .min(d[i][j - 1] + 1)
                    .min(d[i - 1][j - 1] + c);
            }
        }
        d[a.len()][b.len()]
    }

    proptest! {
        #[test]
        fn matches_full_table(a in "[abc]{0,12}", b in "[abc]{0,12}") {
            let (ca, cb): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
            prop_assert_eq!(levenshtein(&ca, &cb), naive_levenshtein(&ca, &cb));
            prop_assert_eq!(string_similarity(&a, &b), string_similarity(&b, &a));
        }

        #[test]
        fn length_filter_never_drops_a_match(a in "[ab]{0,40}", b in "[ab]{0,40}", t in 0.5f64..1.0) {
            if string_similarity(&a, &b) >= t {
                prop_assert!(length_compatible(a.chars().count(), b.chars().count(), t));
            }
        }
    }
}
