use std::io::Write;

use serde::{Deserialize, Serialize};

/// Binary confusion counts with the positive class = misinformation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn record(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub confusion: Confusion,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean of precision and recall; zero when both are zero.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Precision and recall are 0 when their denominators are 0.
pub fn metrics_from_confusion(confusion: Confusion) -> Metrics {
    let Confusion { tp, fp, fn_, tn } = confusion;
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    Metrics {
        confusion,
        accuracy: ratio(tp + tn, confusion.total()),
        precision,
        recall,
        f1: f1_score(precision, recall),
    }
}

impl Metrics {
    /// One CSV row in the order accuracy, recall, precision, f1.
    pub fn csv_fields(&self) -> [String; 4] {
        [self.accuracy, self.recall, self.precision, self.f1].map(|v| format!("{v:.6}"))
    }

    pub fn write_csv<W: Write>(rows: &[(String, Metrics)], out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "label",
            "accuracy",
            "recall",
            "precision",
            "f1",
            "tp",
            "fp",
            "fn",
            "tn",
        ])?;
        for (label, m) in rows {
            let c = m.confusion;
            let mut rec = vec![label.clone()];
            rec.extend(m.csv_fields());
            rec.extend([c.tp, c.fp, c.fn_, c.tn].map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn published_f1_pairs() {
        assert!((f1_score(0.728, 0.908) - 0.808).abs() < 5e-4);
        assert!((f1_score(0.883, 0.833) - 0.857).abs() < 5e-4);
    }

    #[test]
    fn all_negative_convention() {
        let m = metrics_from_confusion(Confusion {
            tp: 0,
            fp: 0,
            fn_: 0,
            tn: 10,
        });
        assert_eq!(m.accuracy, 1.0);
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn confusion_serializes_fn_field() {
        let json = serde_json::to_string(&Confusion {
            tp: 1,
            fp: 2,
            fn_: 3,
            tn: 4,
        })
        .unwrap();
        assert_eq!(json, r#"{"tp":1,"fp":2,"fn":3,"tn":4}"#);
    }

    proptest! {
        #[test]
        fn f1_is_bounded_harmonic_mean(tp in 0u64..500, fp in 0u64..500, fn_ in 0u64..500, tn in 0u64..500) {
            let m = metrics_from_confusion(Confusion { tp, fp, fn_, tn });
            prop_assert!((0.0..=1.0).contains(&m.f1));
            prop_assert!(m.f1 <= 2.0 * m.precision.min(m.recall) + 1e-12);
            // 2tp / (2tp + fp + fn) is the same quantity written without P and R
            let direct = if tp == 0 { 0.0 } else { 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64 };
            prop_assert!((m.f1 - direct).abs() < 1e-12);
        }
    }
}
