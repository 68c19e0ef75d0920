use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{ActiveError, LabelSource, LabeledExample};
use crate::label::Label;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub n_overlap: usize,
    pub agreement: f64,
    pub kappa: f64,
}

/// Cohen's kappa for two aligned labelings over any label alphabet.
pub fn cohen_kappa<T: Ord>(a: &[T], b: &[T]) -> Result<AgreementReport, ActiveError> {
    if a.len() != b.len() {
        return Err(ActiveError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(ActiveError::EmptyAgreement);
    }
    let n = a.len() as f64;
    let mut ma: BTreeMap<&T, usize> = BTreeMap::new();
    let mut mb: BTreeMap<&T, usize> = BTreeMap::new();
    let mut matches = 0usize;
    for (x, y) in a.iter().zip(b) {
        *ma.entry(x).or_default() += 1;
        *mb.entry(y).or_default() += 1;
        matches += usize::from(x == y);
    }
    let po = matches as f64 / n;
    let pe: f64 = ma
        .iter()
        .map(|(c, &na)| na as f64 / n * mb.get(c).map_or(0.0, |&nb| nb as f64 / n))
        .sum();
    let kappa = if pe >= 1.0 {
        if matches == a.len() {
            1.0
        } else {
            return Err(ActiveError::KappaUndefined);
        }
    } else {
        (po - pe) / (1.0 - pe)
    };
    Ok(AgreementReport {
        n_overlap: a.len(),
        agreement: po,
        kappa,
    })
}

/// Second pass over `Uncertain` examples: each becomes `Resolved` with the
/// co-raters' label when every definite co-rater label agrees; otherwise it is
/// returned unchanged.
pub fn resolve_uncertain(
    uncertain: &[LabeledExample],
    co_rater_labels: &BTreeMap<String, Vec<Label>>,
) -> Vec<LabeledExample> {
    uncertain
        .iter()
        .map(|ex| {
            if ex.label != Label::Uncertain {
                return ex.clone();
            }
            let definite: BTreeSet<Label> = co_rater_labels
                .get(&ex.tweet_id)
                .into_iter()
                .flatten()
                .copied()
                .filter(|l| *l != Label::Uncertain)
                .collect();
            match definite.len() {
                1 => {
                    let label = *definite.first().expect("one element");
                    log::info!("{}: resolved as {label}", ex.tweet_id);
                    LabeledExample {
                        label,
                        source: LabelSource::Resolved,
                        ..ex.clone()
                    }
                }
                0 => {
                    log::info!(
                        "{}: no definite co-rater label, stays uncertain",
                        ex.tweet_id
                    );
                    ex.clone()
                }
                _ => {
                    log::info!("{}: co-raters disagree, stays uncertain", ex.tweet_id);
                    ex.clone()
                }
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(a: usize, b: usize, c: usize, d: usize) -> (Vec<u8>, Vec<u8>) {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (n, (p, q)) in [(a, (1, 1)), (b, (1, 0)), (c, (0, 1)), (d, (0, 0))] {
            x.extend(std::iter::repeat_n(p, n));
            y.extend(std::iter::repeat_n(q, n));
        }
        (x, y)
    }

    #[test]
    fn textbook_table() {
        let (x, y) = table(20, 5, 10, 15);
        let r = cohen_kappa(&x, &y).unwrap();
        assert!((r.agreement - 0.70).abs() < 1e-12);
        assert!((r.kappa - 0.40).abs() < 1e-12);
        assert_eq!(r.n_overlap, 50);
    }

    #[test]
    fn degenerate_cases() {
        let same = [Label::Misinfo, Label::NotMisinfo, Label::Misinfo];
        assert_eq!(cohen_kappa(&same, &same).unwrap().kappa, 1.0);
        let all = [Label::Misinfo; 4];
        assert_eq!(cohen_kappa(&all, &all).unwrap().kappa, 1.0);
        assert!(cohen_kappa(&same, &same[..2]).is_err());
        assert!(cohen_kappa::<u8>(&[], &[]).is_err());
    }

    fn uncertain(id: &str) -> LabeledExample {
        LabeledExample {
            tweet_id: id.into(),
            label: Label::Uncertain,
            source: LabelSource::Human {
                annotator_id: "a".into(),
            },
            round: 0,
        }
    }

    #[test]
    fn resolution_rules() {
        let co: BTreeMap<String, Vec<Label>> = [
            ("agree".to_string(), vec![Label::Misinfo, Label::Uncertain]),
            ("split".to_string(), vec![Label::Misinfo, Label::NotMisinfo]),
        ]
        .into();
        let out = resolve_uncertain(
            &[uncertain("agree"), uncertain("split"), uncertain("alone")],
            &co,
        );
        assert_eq!(out[0].label, Label::Misinfo);
        assert_eq!(out[0].source, LabelSource::Resolved);
        assert_eq!(out[1].label, Label::Uncertain);
        assert_eq!(out[2].label, Label::Uncertain);
    }

    proptest! {
        #[test]
        fn kappa_properties(pairs in prop::collection::vec((0u8..3, 0u8..3), 1..200)) {
            let (a, b): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
            if let (Ok(ab), Ok(ba)) = (cohen_kappa(&a, &b), cohen_kappa(&b, &a)) {
                prop_assert!((ab.kappa - ba.kappa).abs() < 1e-12);
                prop_assert!(ab.kappa <= 1.0 + 1e-12 && ab.kappa >= -1.0 - 1e-12);
            }
            prop_assert_eq!(cohen_kappa(&a, &a).unwrap().kappa, 1.0);
        }
    }
}
