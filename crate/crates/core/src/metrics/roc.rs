use serde::{Deserialize, Serialize};

use super::{check_lengths, MetricError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Scores `>= threshold` are called positive. The first point uses +inf.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// ROC curve with one point per unique score and trapezoidal AUC.
pub fn roc(scores: &[f64], targets: &[bool]) -> Result<RocCurve, MetricError> {
    check_lengths(scores.len(), targets.len())?;
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    let positives = targets.iter().filter(|&&t| t).count();
    let negatives = targets.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]));

    let mut points = vec![RocPoint { fpr: 0.0, tpr: 0.0, threshold: f64::INFINITY }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if targets[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint { fpr: fp as f64 / negatives as f64, tpr: tp as f64 / positives as f64, threshold });
    }
    let auc = points.windows(2).map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0).sum();
    Ok(RocCurve { points, auc })
}

/// Micro-averaged ROC: (score, target) pairs of every condition are pooled
/// before sweeping thresholds.
pub fn roc_micro(conditions: &[(Vec<f64>, Vec<bool>)]) -> Result<RocCurve, MetricError> {
    let mut scores = Vec::new();
    let mut targets = Vec::new();
    for (s, t) in conditions {
        check_lengths(s.len(), t.len())?;
        scores.extend_from_slice(s);
        targets.extend_from_slice(t);
    }
    roc(&scores, &targets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pairwise_auc(scores: &[f64], targets: &[bool]) -> f64 {
        let (mut wins, mut n) = (0.0, 0.0);
        for (i, &ti) in targets.iter().enumerate() {
            for (j, &tj) in targets.iter().enumerate() {
                if ti && !tj {
                    n += 1.0;
                    wins += match scores[i].partial_cmp(&scores[j]).unwrap() {
                        std::cmp::Ordering::Greater => 1.0,
                        std::cmp::Ordering::Equal => 0.5,
                        std::cmp::Ordering::Less => 0.0,
                    };
                }
            }
        }
        wins / n
    }

    #[test]
    fn perfect_separation() {
        let c = roc(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap();
        assert_eq!(c.auc, 1.0);
        assert_eq!((c.points[0].fpr, c.points[0].tpr), (0.0, 0.0));
        let last = c.points.last().unwrap();
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
    }

    #[test]
    fn single_class_rejected() {
        assert_eq!(roc(&[0.1, 0.2], &[true, true]), Err(MetricError::SingleClass));
    }

    #[test]
    fn random_scores_near_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let scores: Vec<f64> = (0..10_000).map(|_| rng.random()).collect();
        let targets: Vec<bool> = (0..10_000).map(|_| rng.random_bool(0.5)).collect();
        let auc = roc(&scores, &targets).unwrap().auc;
        assert!((auc - 0.5).abs() < 0.02, "{auc}");
    }

    #[test]
    fn micro_pools_conditions() {
        let a = (vec![0.9, 0.1], vec![true, false]);
        let b = (vec![0.2, 0.8], vec![true, false]);
        // positives {0.9, 0.2}, negatives {0.1, 0.8}: 3 of 4 pairs ordered
        let c = roc_micro(&[a, b]).unwrap();
        assert!((c.auc - 0.75).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn equals_mann_whitney(
            data in proptest::collection::vec((0u8..8, any::<bool>()), 2..60)
        ) {
            let scores: Vec<f64> = data.iter().map(|d| d.0 as f64).collect();
            let targets: Vec<bool> = data.iter().map(|d| d.1).collect();
            if let Ok(c) = roc(&scores, &targets) {
                prop_assert!((c.auc - pairwise_auc(&scores, &targets)).abs() < 1e-12);
                prop_assert!(c.points.windows(2).all(|w| w[0].fpr <= w[1].fpr && w[0].tpr <= w[1].tpr));
            }
        }

        #[test]
        fn monotone_transform_invariant(
            data in proptest::collection::vec((-5.0f64..5.0, any::<bool>()), 2..60)
        ) {
            let scores: Vec<f64> = data.iter().map(|d| d.0).collect();
            let targets: Vec<bool> = data.iter().map(|d| d.1).collect();
            let moved: Vec<f64> = scores.iter().map(|s| 3.0 * s.exp() + 1.0).collect();
            if let (Ok(a), Ok(b)) = (roc(&scores, &targets), roc(&moved, &targets)) {
                prop_assert!((a.auc - b.auc).abs() < 1e-12);
            }
        }
    }
}
