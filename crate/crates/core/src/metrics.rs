//! Edge average precision and BCubed clustering scores.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Average precision of a ranking: the mean, over positive items, of the
/// precision at that item's rank. Items are ranked by descending score;
/// equal scores keep their input order.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::SizeMismatch(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // Stable sort keeps input order among ties.
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    if hits == 0 {
        return Err(Error::NoPositives);
    }
    Ok(sum / hits as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BCubed {
    #[serde(rename = "p")]
    pub precision: f64,
    #[serde(rename = "r")]
    pub recall: f64,
    pub f: f64,
}

/// BCubed precision, recall and F between a predicted partition and ground
/// truth, both given as one cluster id per item.
///
/// Item precision is the share of its predicted cluster that shares its true
/// class; recall is the share of its true class inside its predicted cluster.
pub fn bcubed<P, T>(pred: &[P], truth: &[T]) -> Result<BCubed>
where
    P: Eq + Hash + Copy,
    T: Eq + Hash + Copy,
{
    if pred.len() != truth.len() {
        return Err(Error::SizeMismatch(format!(
            "{} predicted assignments for {} true labels",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::SizeMismatch("bcubed needs at least one item".into()));
    }
    let mut pred_size: HashMap<P, usize> = HashMap::new();
    let mut truth_size: HashMap<T, usize> = HashMap::new();
    let mut joint: HashMap<(P, T), usize> = HashMap::new();
    for (&p, &t) in pred.iter().zip(truth) {
        *pred_size.entry(p).or_default() += 1;
        *truth_size.entry(t).or_default() += 1;
        *joint.entry((p, t)).or_default() += 1;
    }
    let n = pred.len() as f64;
    let (mut precision, mut recall) = (0.0, 0.0);
    // Summed per item in input order; map iteration order is randomized and
    // would make the last bits differ between runs.
    for (p, t) in pred.iter().zip(truth) {
        let c = joint[&(*p, *t)] as f64;
        precision += c / pred_size[p] as f64;
        recall += c / truth_size[t] as f64;
    }
    precision /= n;
    recall /= n;
    let f = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(BCubed { precision, recall, f })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_ranking() {
        let ap = average_precision(&[0.9, 0.8, 0.3, 0.1], &[true, true, false, false]).unwrap();
        assert_eq!(ap, 1.0);
    }

    #[test]
    fn hand_ap() {
        let ap = average_precision(&[0.9, 0.8, 0.7], &[true, false, true]).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn ties_keep_input_order() {
        let ap = average_precision(&[0.5, 0.5], &[false, true]).unwrap();
        assert_eq!(ap, 0.5);
        let ap = average_precision(&[0.5, 0.5], &[true, false]).unwrap();
        assert_eq!(ap, 1.0);
    }

    #[test]
    fn no_positive_is_error() {
        assert!(matches!(average_precision(&[0.1], &[false]), Err(Error::NoPositives)));
    }

    #[test]
    fn bcubed_hand_cases() {
        let truth = ['a', 'a', 'b', 'b'];
        let same = bcubed(&[0, 0, 1, 1], &truth).unwrap();
        assert_eq!((same.precision, same.recall, same.f), (1.0, 1.0, 1.0));

        let one = bcubed(&[0, 0, 0, 0], &truth).unwrap();
        assert!((one.precision - 0.5).abs() < 1e-15 && one.recall == 1.0);
        assert!((one.f - 2.0 / 3.0).abs() < 1e-15);

        let single = bcubed(&[0, 1, 2, 3], &truth).unwrap();
        assert!(single.precision == 1.0 && (single.recall - 0.5).abs() < 1e-15);
        assert!((single.f - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn bcubed_size_mismatch() {
        assert!(bcubed(&[0, 1], &[0]).is_err());
    }
}
