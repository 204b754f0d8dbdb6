use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    /// Mean F1 over the classes that occur in the truth or the predictions.
    pub macro_f1: f64,
}

pub fn classification_metrics(truth: &[usize], predicted: &[usize], num_classes: usize) -> ClassificationMetrics {
    assert_eq!(truth.len(), predicted.len(), "truth and predictions differ in length");
    if truth.is_empty() {
        return ClassificationMetrics { accuracy: 0.0, macro_f1: 0.0 };
    }
    let h = num_classes
        .max(truth.iter().max().map_or(0, |m| m + 1))
        .max(predicted.iter().max().map_or(0, |m| m + 1));
    let mut tp = vec![0usize; h];
    let mut fp = vec![0usize; h];
    let mut fn_ = vec![0usize; h];
    for (&t, &p) in truth.iter().zip(predicted) {
        if t == p {
            tp[t] += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }
    let correct: usize = tp.iter().sum();
    let mut f1_sum = 0.0;
    let mut present = 0;
    for c in 0..h {
        if tp[c] + fp[c] + fn_[c] == 0 {
            continue;
        }
        present += 1;
        f1_sum += 2.0 * tp[c] as f64 / (2 * tp[c] + fp[c] + fn_[c]) as f64;
    }
    ClassificationMetrics {
        accuracy: correct as f64 / truth.len() as f64,
        macro_f1: f1_sum / present as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictor() {
        let y = [0, 1, 2, 1, 0];
        let m = classification_metrics(&y, &y, 3);
        assert_eq!((m.accuracy, m.macro_f1), (1.0, 1.0));
    }

    #[test]
    fn constant_predictor_on_balanced_binary() {
        let truth = [0, 0, 1, 1];
        let m = classification_metrics(&truth, &[1, 1, 1, 1], 2);
        assert_eq!(m.accuracy, 0.5);
        assert!((m.macro_f1 - 1.0 / 3.0).abs() < 1e-15);
    }
}
