use serde::Serialize;

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn from_predictions(predictions: &[u8], labels: &[u8]) -> Self {
        let mut c = Confusion::default();
        for (&p, &y) in predictions.iter().zip(labels) {
            match (p, y) {
                (1, 1) => c.tp += 1,
                (1, _) => c.fp += 1,
                (_, 1) => c.fn_ += 1,
                _ => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// `2a / (2a + b + c)`, 0 when the denominator is 0.
fn f1(hits: usize, misses: usize, false_alarms: usize) -> f64 {
    let denom = 2 * hits + misses + false_alarms;
    if denom == 0 {
        0.0
    } else {
        2.0 * hits as f64 / denom as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsRecord {
    pub accuracy: f64,
    /// F1 of the high class.
    pub f1_pos: f64,
    /// Mean of the F1 scores of both classes.
    pub f1_macro: f64,
    pub confusion: Confusion,
}

impl MetricsRecord {
    pub fn from_confusion(c: Confusion) -> Result<Self, EvalError> {
        if c.total() == 0 {
            return Err(EvalError::EmptyTestSet);
        }
        let f1_pos = f1(c.tp, c.fn_, c.fp);
        let f1_neg = f1(c.tn, c.fp, c.fn_);
        Ok(Self {
            accuracy: (c.tp + c.tn) as f64 / c.total() as f64,
            f1_pos,
            f1_macro: (f1_pos + f1_neg) / 2.0,
            confusion: c,
        })
    }

    pub fn from_predictions(predictions: &[u8], labels: &[u8]) -> Result<Self, EvalError> {
        Self::from_confusion(Confusion::from_predictions(predictions, labels))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let m = MetricsRecord::from_predictions(&[1, 0, 1], &[1, 0, 1]).unwrap();
        assert_eq!((m.accuracy, m.f1_pos, m.f1_macro), (1.0, 1.0, 1.0));
    }

    #[test]
    fn constant_positive_predictor() {
        let m = MetricsRecord::from_predictions(&[1, 1, 1, 1], &[1, 0, 1, 0]).unwrap();
        assert_eq!(m.accuracy, 0.5);
        assert!((m.f1_pos - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.f1_macro - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn scripted_confusion() {
        let c = Confusion { tp: 3, fp: 1, tn: 4, fn_: 2 };
        let m = MetricsRecord::from_confusion(c).unwrap();
        assert!((m.accuracy - 0.7).abs() < 1e-15);
        assert!((m.f1_pos - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.f1_macro - (2.0 / 3.0 + 8.0 / 11.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn empty_set_is_an_error() {
        assert!(matches!(
            MetricsRecord::from_predictions(&[], &[]),
            Err(EvalError::EmptyTestSet)
        ));
    }

    #[test]
    fn no_positives_gives_zero_f1() {
        let m = MetricsRecord::from_predictions(&[0, 0], &[0, 0]).unwrap();
        assert_eq!(m.f1_pos, 0.0);
        assert_eq!(m.accuracy, 1.0);
    }
}
