use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub f1: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Binary metrics with patients (`true`) as the positive class.
pub fn metrics(predicted: &[bool], actual: &[bool]) -> Result<Metrics> {
    if predicted.len() != actual.len() {
        return Err(Error::Shape(format!("{} predictions for {} labels", predicted.len(), actual.len())));
    }
    if predicted.is_empty() {
        return Err(invalid("no predictions"));
    }
    let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
    for (&p, &a) in predicted.iter().zip(actual) {
        match (p, a) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
        }
    }
    Ok(Metrics {
        accuracy: ratio(tp + tn, predicted.len()),
        f1: ratio(2 * tp, 2 * tp + fp + fn_),
        sensitivity: ratio(tp, tp + fn_),
        specificity: ratio(tn, tn + fp),
        tp,
        tn,
        fp,
        fn_,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Roc {
    /// `(false positive rate, true positive rate)` from (0,0) to (1,1).
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// ROC curve over every distinct score threshold, and its trapezoidal
/// area. Tied scores move along the diagonal, so they count one half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<Roc> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(invalid("scores must be finite"));
    }
    let p = labels.iter().filter(|&&l| l).count() as u64;
    let n = labels.len() as u64 - p;
    if p == 0 || n == 0 {
        return Err(invalid("ROC needs both classes"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0u64, 0u64);
    // twice the area times p * n, accumulated exactly
    let mut area2: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let (tp0, fp0) = (tp, fp);
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        area2 += (fp - fp0) * (tp + tp0);
        points.push((fp as f64 / n as f64, tp as f64 / p as f64));
    }
    Ok(Roc { points, auc: area2 as f64 / (2 * p * n) as f64 })
}

/// AUC by counting positive-negative pairs (ties count one half).
pub fn auc_by_pairs(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut num2, mut pairs) = (0u64, 0u64);
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            pairs += 1;
            num2 += if si > sj {
                2
            } else if si == sj {
                1
            } else {
                0
            };
        }
    }
    num2 as f64 / (2 * pairs) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clinical_confusion_counts() {
        let mut pred = vec![true; 24];
        pred.extend([false; 2]);
        pred.extend([false; 17]);
        pred.extend([true; 5]);
        let mut actual = vec![true; 26];
        actual.extend([false; 22]);
        let m = metrics(&pred, &actual).unwrap();
        assert!((m.sensitivity - 24.0 / 26.0).abs() < 1e-15);
        assert!((m.specificity - 17.0 / 22.0).abs() < 1e-15);
        assert!((m.accuracy - 41.0 / 48.0).abs() < 1e-15);
        assert_eq!(format!("{:.2}", 100.0 * m.sensitivity), "92.31");
        assert_eq!(format!("{:.2}", 100.0 * m.specificity), "77.27");
        assert_eq!(format!("{:.2}", 100.0 * m.accuracy), "85.42");
    }

    #[test]
    fn degenerate_predictors() {
        let actual = [true, false, true, false];
        let m = metrics(&actual, &actual).unwrap();
        assert_eq!((m.accuracy, m.f1, m.sensitivity, m.specificity), (1.0, 1.0, 1.0, 1.0));
        let m = metrics(&[true; 4], &actual).unwrap();
        assert_eq!((m.sensitivity, m.specificity), (1.0, 0.0));
        assert!(metrics(&[], &[]).is_err());
    }

    #[test]
    fn roc_endpoints_and_ties() {
        let r = roc_auc(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap();
        assert_eq!(r.auc, 1.0);
        assert_eq!(r.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(r.points.last(), Some(&(1.0, 1.0)));
        let r = roc_auc(&[0.5; 6], &[true, false, true, false, true, false]).unwrap();
        assert_eq!(r.auc, 0.5);
        assert!(roc_auc(&[0.1, 0.2], &[true, true]).is_err());
    }
}
