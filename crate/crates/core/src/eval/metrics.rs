use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub acc: f64,
    pub f1: f64,
    pub auc: f64,
}

impl Metrics {
    pub fn get(&self, column: MetricColumn) -> f64 {
        match column {
            MetricColumn::Acc => self.acc,
            MetricColumn::F1 => self.f1,
            MetricColumn::Auc => self.auc,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricColumn {
    Acc,
    F1,
    Auc,
}

impl MetricColumn {
    pub const ALL: [MetricColumn; 3] = [MetricColumn::Acc, MetricColumn::F1, MetricColumn::Auc];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricColumn::Acc => "ACC",
            MetricColumn::F1 => "F1",
            MetricColumn::Auc => "AUC",
        }
    }
}

fn f1(tp: u64, fp: u64, fn_: u64) -> f64 {
    if tp == 0 {
        0.0
    } else {
        (2 * tp) as f64 / (2 * tp + fp + fn_) as f64
    }
}

/// Accuracy, macro-F1 over both classes, and the Mann-Whitney AUC of `probs`
/// with ties counted as one half.
pub fn compute_metrics(probs: &[f64], preds: &[u8], labels: &[u8]) -> Result<Metrics> {
    let n = labels.len();
    if n == 0 {
        return Err(Error::invalid("metrics need at least one case"));
    }
    for len in [probs.len(), preds.len()] {
        if len != n {
            return Err(Error::Shape { expected: n, got: len });
        }
    }
    if labels.iter().chain(preds).any(|&y| y > 1) {
        return Err(Error::invalid("labels and predictions must be 0 or 1"));
    }
    if probs.iter().any(|p| p.is_nan()) {
        return Err(Error::invalid("probabilities contain NaN"));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0u64, 0u64, 0u64, 0u64);
    for (&p, &y) in preds.iter().zip(labels) {
        match (p, y) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 0) => tn += 1,
            _ => fn_ += 1,
        }
    }
    let pos = tp + fn_;
    let neg = tn + fp;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    let acc = (tp + tn) as f64 / n as f64;
    let f1 = 0.5 * (f1(tp, fp, fn_) + f1(tn, fn_, fp));

    // Rank-based count: sort by score, walk tie groups, and accumulate
    // 2 * wins + ties over positive/negative pairs in integers.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| probs[a].total_cmp(&probs[b]));
    let mut twice_wins: u64 = 0;
    let mut neg_below: u64 = 0;
    let mut start = 0;
    while start < n {
        let mut end = start;
        while end < n && probs[order[end]] == probs[order[start]] {
            end += 1;
        }
        let group_pos = order[start..end].iter().filter(|&&i| labels[i] == 1).count() as u64;
        let group_neg = (end - start) as u64 - group_pos;
        twice_wins += group_pos * (2 * neg_below + group_neg);
        neg_below += group_neg;
        start = end;
    }
    let auc = twice_wins as f64 / (2 * pos * neg) as f64;
    Ok(Metrics { acc, f1, auc })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Explicit confusion matrix and an all-pairs AUC.
    fn oracle(probs: &[f64], preds: &[u8], labels: &[u8]) -> Metrics {
        let mut cm = [[0u64; 2]; 2];
        for (&p, &y) in preds.iter().zip(labels) {
            cm[y as usize][p as usize] += 1;
        }
        // F1 = 2 TP / (2 TP + FP + FN), read straight off the matrix.
        let per_class = |c: usize| {
            let o = 1 - c;
            let tp = cm[c][c];
            if tp == 0 {
                0.0
            } else {
                (2 * tp) as f64 / (2 * tp + cm[o][c] + cm[c][o]) as f64
            }
        };
        let mut score = 0u64;
        let mut pairs = 0u64;
        for i in 0..labels.len() {
            for j in 0..labels.len() {
                if labels[i] == 1 && labels[j] == 0 {
                    pairs += 1;
                    score += match probs[i].partial_cmp(&probs[j]).unwrap() {
                        std::cmp::Ordering::Greater => 2,
                        std::cmp::Ordering::Equal => 1,
                        std::cmp::Ordering::Less => 0,
                    };
                }
            }
        }
        Metrics {
            acc: (cm[0][0] + cm[1][1]) as f64 / labels.len() as f64,
            f1: 0.5 * (per_class(0) + per_class(1)),
            auc: score as f64 / (2 * pairs) as f64,
        }
    }

    #[test]
    fn perfect_predictions() {
        let m = compute_metrics(&[0.9, 0.2, 0.7], &[1, 0, 1], &[1, 0, 1]).unwrap();
        assert_eq!(m, Metrics { acc: 1.0, f1: 1.0, auc: 1.0 });
        assert_eq!(compute_metrics(&[0.9, 0.1], &[1, 0], &[1, 0]).unwrap().auc, 1.0);
    }

    #[test]
    fn constant_positive_predictor() {
        let m = compute_metrics(&[0.6; 4], &[1; 4], &[1, 0, 1, 0]).unwrap();
        assert_eq!(m.acc, 0.5);
        assert_eq!(m.f1, 1.0 / 3.0);
        assert_eq!(m.auc, 0.5);
    }

    #[test]
    fn single_class_labels_are_rejected() {
        assert!(matches!(
            compute_metrics(&[0.1, 0.2], &[0, 1], &[1, 1]),
            Err(Error::SingleClass)
        ));
        assert!(compute_metrics(&[0.1], &[0, 1], &[1]).is_err());
    }

    #[test]
    fn matches_oracle_on_random_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut checked = 0;
        while checked < 200 {
            let n = rng.random_range(2..=50);
            let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
            if labels.iter().all(|&y| y == labels[0]) {
                continue;
            }
            // Coarse grid so ties are common.
            let probs: Vec<f64> = (0..n).map(|_| rng.random_range(0..8) as f64 / 8.0).collect();
            let preds: Vec<u8> = probs.iter().map(|&p| u8::from(p >= 0.5)).collect();
            assert_eq!(compute_metrics(&probs, &preds, &labels).unwrap(), oracle(&probs, &preds, &labels));
            checked += 1;
        }
    }
}
