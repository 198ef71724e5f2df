//! Classification metrics and support recovery scores.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{argmax, predict_proba, TrainedModel};
use crate::template::{LabeledDataset, TemplateSet};

/// Area under the ROC curve as the Mann–Whitney statistic: the fraction of
/// (positive, negative) pairs ranked correctly, ties counting one half.
///
/// Computed from mid-ranks in `O(n log n)`.
pub fn auc(scores: &[f64], positive: &[bool]) -> Result<f64> {
    if scores.len() != positive.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            found: positive.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("NaN score".into()));
    }
    let n_pos = positive.iter().filter(|p| **p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClassSlice);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Ranks doubled so tied mid-ranks stay integral.
    let mut rank_sum2: u64 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let mid2 = (start + 1 + end) as u64;
        let pos_in_block = order[start..end].iter().filter(|&&k| positive[k]).count() as u64;
        rank_sum2 += mid2 * pos_in_block;
        start = end;
    }
    let n_pos = n_pos as u64;
    let u2 = rank_sum2 - n_pos * (n_pos + 1);
    Ok(u2 as f64 / (2 * n_pos * n_neg as u64) as f64)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCount {
    pub class: usize,
    pub total: usize,
    pub correct: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    /// Absent when the slice holds a single class.
    pub auc: Option<f64>,
    pub per_class_counts: Vec<ClassCount>,
    pub split_seed: Option<u64>,
}

/// Accuracy and AUC on the subjects at `indices`.
///
/// Binary AUC uses the probability of class 1; with more classes it is the
/// unweighted mean of the one-vs-rest AUCs of classes present in the slice.
pub fn evaluate(
    model: &TrainedModel,
    templates: &TemplateSet,
    data: &LabeledDataset,
    indices: &[usize],
) -> Result<EvalReport> {
    let c = data.num_groups();
    let mut probs = Vec::with_capacity(indices.len());
    let mut labels = Vec::with_capacity(indices.len());
    for &k in indices {
        let s = data.subjects().get(k).ok_or(Error::IndexOutOfRange {
            index: k,
            len: data.len(),
        })?;
        probs.push(predict_proba(model, &s.matrix, templates)?);
        labels.push(s.label);
    }

    let mut counts: Vec<ClassCount> = (0..c)
        .map(|class| ClassCount {
            class,
            total: 0,
            correct: 0,
        })
        .collect();
    let mut correct = 0;
    for (p, &y) in probs.iter().zip(&labels) {
        counts[y].total += 1;
        if argmax(p) == y {
            counts[y].correct += 1;
            correct += 1;
        }
    }
    let accuracy = if indices.is_empty() {
        0.0
    } else {
        correct as f64 / indices.len() as f64
    };

    let auc_value = if c == 2 {
        let scores: Vec<f64> = probs.iter().map(|p| p[1]).collect();
        let pos: Vec<bool> = labels.iter().map(|&y| y == 1).collect();
        auc(&scores, &pos).ok()
    } else {
        let per_class: Vec<f64> = (0..c)
            .filter_map(|class| {
                let scores: Vec<f64> = probs.iter().map(|p| p[class]).collect();
                let pos: Vec<bool> = labels.iter().map(|&y| y == class).collect();
                auc(&scores, &pos).ok()
            })
            .collect();
        if per_class.is_empty() {
            None
        } else {
            Some(per_class.iter().sum::<f64>() / per_class.len() as f64)
        }
    };

    Ok(EvalReport {
        accuracy,
        auc: auc_value,
        per_class_counts: counts,
        split_seed: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision, recall and F1 of a predicted edge set against the truth.
pub fn support_f1(predicted: &[(usize, usize)], truth: &[(usize, usize)]) -> SupportScore {
    let p: BTreeSet<_> = predicted.iter().collect();
    let t: BTreeSet<_> = truth.iter().collect();
    let tp = p.intersection(&t).count() as f64;
    let precision = if p.is_empty() {
        0.0
    } else {
        tp / p.len() as f64
    };
    let recall = if t.is_empty() {
        0.0
    } else {
        tp / t.len() as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    SupportScore {
        precision,
        recall,
        f1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_closed_cases() {
        let s = [0.9, 0.8, 0.1, 0.2];
        let p = [true, true, false, false];
        assert_eq!(auc(&s, &p).unwrap(), 1.0);
        assert_eq!(
            auc(&[0.5; 6], &[true, false, true, false, true, false]).unwrap(),
            0.5
        );
        assert_eq!(auc(&s, &[false, false, true, true]).unwrap(), 0.0);
        assert!(matches!(auc(&s, &[true; 4]), Err(Error::SingleClassSlice)));
        assert!(auc(&s, &[true]).is_err());
    }

    #[test]
    fn auc_with_partial_ties() {
        // pairs: (0.5 vs 0.5) tie, (0.5 vs 0.1) win, (0.9 vs both) win
        let v = auc(&[0.5, 0.9, 0.5, 0.1], &[true, true, false, false]).unwrap();
        assert_eq!(v, 3.5 / 4.0);
    }

    #[test]
    fn support_scores() {
        let s = support_f1(&[(0, 1), (1, 2)], &[(0, 1), (2, 3)]);
        assert_eq!(s.precision, 0.5);
        assert_eq!(s.recall, 0.5);
        assert_eq!(s.f1, 0.5);
        assert_eq!(support_f1(&[], &[(0, 1)]).f1, 0.0);
        assert_eq!(support_f1(&[(0, 1)], &[(0, 1)]).f1, 1.0);
    }
}
