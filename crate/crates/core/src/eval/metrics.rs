use serde::Serialize;

use crate::classify::ProbPrediction;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision_weighted: f64,
    pub recall_weighted: f64,
    pub f1_weighted: f64,
    pub f1_macro: f64,
    /// One-vs-rest, macro-averaged over classes with both positives and
    /// negatives in `y_true`. `None` when no class qualifies.
    pub roc_auc: Option<f64>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Scores predictions against true class indices.
///
/// Precision, recall and F1 are computed per class with zero-denominator
/// cases scored 0. Weighted averages use true-class support; the macro F1
/// averages over classes that occur in `y_true` or among the argmax
/// predictions.
pub fn compute_metrics(y_true: &[usize], preds: &[ProbPrediction]) -> Result<Metrics> {
    if y_true.len() != preds.len() {
        return Err(Error::LengthMismatch(y_true.len(), preds.len()));
    }
    if y_true.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let nc = preds[0].0.len();
    if let Some(p) = preds.iter().find(|p| p.0.len() != nc) {
        return Err(Error::DimensionMismatch {
            expected: nc,
            got: p.0.len(),
        });
    }
    if let Some(&bad) = y_true.iter().find(|&&y| y >= nc) {
        return Err(Error::IndexOutOfRange { index: bad, len: nc });
    }
    let y_pred: Vec<usize> = preds.iter().map(ProbPrediction::argmax).collect();
    let m = y_true.len();

    let mut tp = vec![0usize; nc];
    let mut support = vec![0usize; nc];
    let mut predicted = vec![0usize; nc];
    for (&t, &p) in y_true.iter().zip(&y_pred) {
        support[t] += 1;
        predicted[p] += 1;
        if t == p {
            tp[t] += 1;
        }
    }

    let mut acc = (0.0, 0.0, 0.0);
    let mut macro_sum = 0.0;
    let mut macro_count = 0;
    for c in 0..nc {
        let precision = ratio(tp[c], predicted[c]);
        let recall = ratio(tp[c], support[c]);
        let f1 = ratio(2 * tp[c], support[c] + predicted[c]);
        let w = support[c] as f64 / m as f64;
        acc.0 += w * precision;
        acc.1 += w * recall;
        acc.2 += w * f1;
        if support[c] > 0 || predicted[c] > 0 {
            macro_sum += f1;
            macro_count += 1;
        }
    }

    let mut auc_sum = 0.0;
    let mut auc_count = 0;
    for c in 0..nc {
        if support[c] == 0 || support[c] == m {
            continue;
        }
        let scores: Vec<f64> = preds.iter().map(|p| p.0[c]).collect();
        let positive: Vec<bool> = y_true.iter().map(|&y| y == c).collect();
        auc_sum += binary_auc(&scores, &positive);
        auc_count += 1;
    }

    Ok(Metrics {
        accuracy: ratio(tp.iter().sum(), m),
        precision_weighted: acc.0,
        recall_weighted: acc.1,
        f1_weighted: acc.2,
        f1_macro: macro_sum / macro_count as f64,
        roc_auc: (auc_count > 0).then(|| auc_sum / auc_count as f64),
    })
}

/// Area under the ROC curve via the rank-sum statistic with average ranks
/// for ties (equal to the trapezoidal area). Needs both classes present.
pub fn binary_auc(scores: &[f64], positive: &[bool]) -> f64 {
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks are 1-based; tied block i..=j shares the average.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    let n_pos = positive.iter().filter(|&&p| p).count() as f64;
    let n_neg = n as f64 - n_pos;
    let rank_sum: f64 = ranks.iter().zip(positive).filter(|(_, &p)| p).map(|(r, _)| r).sum();
    (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot(classes: &[usize], nc: usize) -> Vec<ProbPrediction> {
        classes
            .iter()
            .map(|&c| {
                let mut v = vec![0.0; nc];
                v[c] = 1.0;
                ProbPrediction(v)
            })
            .collect()
    }

    #[test]
    fn accuracy_two_thirds() {
        let m = compute_metrics(&[1, 1, 0], &one_hot(&[1, 0, 0], 2)).unwrap();
        assert_eq!(m.accuracy, 2.0 / 3.0);
        assert_eq!(m.recall_weighted, m.accuracy);
    }

    #[test]
    fn perfect_separation_auc() {
        let preds = vec![
            ProbPrediction(vec![0.9, 0.1]),
            ProbPrediction(vec![0.8, 0.2]),
            ProbPrediction(vec![0.3, 0.7]),
            ProbPrediction(vec![0.45, 0.55]),
        ];
        let m = compute_metrics(&[0, 0, 1, 1], &preds).unwrap();
        assert_eq!(m.roc_auc, Some(1.0));
        assert_eq!(m.accuracy, 1.0);
    }

    #[test]
    fn tied_scores_give_half() {
        assert_eq!(binary_auc(&[0.5, 0.5, 0.5, 0.5], &[true, false, true, false]), 0.5);
        assert_eq!(binary_auc(&[0.1, 0.9], &[true, false]), 0.0);
    }

    #[test]
    fn single_class_truth_has_no_auc() {
        let m = compute_metrics(&[0, 0], &one_hot(&[0, 1], 2)).unwrap();
        assert_eq!(m.roc_auc, None);
        assert_eq!(m.accuracy, 0.5);
    }

    #[test]
    fn three_class_hand_case() {
        // Confusion matrix (rows true, cols predicted):
        //   [1 1 0]
        //   [0 2 0]
        //   [1 0 1]
        let y_true = [0, 0, 1, 1, 2, 2];
        let y_pred = [0, 1, 1, 1, 0, 2];
        let m = compute_metrics(&y_true, &one_hot(&y_pred, 3)).unwrap();
        // Per class: P = [1/2, 2/3, 1], R = [1/2, 1, 1/2], F1 = [1/2, 4/5, 2/3].
        let f1 = [0.5, 0.8, 2.0 / 3.0];
        assert!((m.f1_macro - f1.iter().sum::<f64>() / 3.0).abs() < 1e-15);
        assert!((m.f1_weighted - f1.iter().sum::<f64>() / 3.0).abs() < 1e-15);
        assert!((m.precision_weighted - (0.5 + 2.0 / 3.0 + 1.0) / 3.0).abs() < 1e-15);
        assert_eq!(m.accuracy, 4.0 / 6.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            compute_metrics(&[0, 1], &one_hot(&[0], 2)),
            Err(Error::LengthMismatch(2, 1))
        ));
        assert!(compute_metrics(&[3], &one_hot(&[0], 2)).is_err());
    }
}
