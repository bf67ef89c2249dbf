use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::io::LabelMap;

/// Fraction of ground-truth-labeled pixels (truth != 0) whose prediction matches.
pub fn overall_accuracy(predicted: &[u32], truth: &LabelMap) -> Result<f64, ExperimentError> {
    check_lengths(predicted, truth)?;
    let (mut hits, mut total) = (0usize, 0usize);
    for (&p, &t) in predicted.iter().zip(&truth.labels) {
        if t != 0 {
            total += 1;
            hits += usize::from(p == t);
        }
    }
    if total == 0 {
        return Err(ExperimentError::DisjointSupport);
    }
    let accuracy = hits as f64 / total as f64;
    if truth.num_classes <= MAX_ALIGNED_CLASSES {
        if let Ok(confusion) = confusion_matrix(predicted, truth) {
            let aligned = confusion.best_permuted_accuracy();
            if aligned > accuracy {
                log::warn!("relabeling classes would raise accuracy from {accuracy:.4} to {aligned:.4}");
            }
        }
    }
    Ok(accuracy)
}

const MAX_ALIGNED_CLASSES: usize = 8;

/// `counts[a][b]` = number of pixels with truth class `a + 1` predicted as `b + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub counts: Vec<Vec<u64>>,
}

impl Confusion {
    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn trace(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total() as f64
    }

    /// Per-class ground-truth counts.
    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    /// Accuracy under the best relabeling of predicted classes (brute force over permutations).
    pub fn best_permuted_accuracy(&self) -> f64 {
        let c = self.counts.len();
        let mut perm: Vec<usize> = (0..c).collect();
        let mut best = 0u64;
        permute(&mut perm, 0, &mut |p| {
            let hits = (0..c).map(|a| self.counts[a][p[a]]).sum::<u64>();
            best = best.max(hits);
        });
        best as f64 / self.total() as f64
    }
}

fn permute(items: &mut [usize], start: usize, visit: &mut dyn FnMut(&[usize])) {
    if start == items.len() {
        visit(items);
        return;
    }
    for i in start..items.len() {
        items.swap(start, i);
        permute(items, start + 1, visit);
        items.swap(start, i);
    }
}

/// Confusion matrix over ground-truth-labeled pixels. Predictions there must lie in `1..=C`.
pub fn confusion_matrix(predicted: &[u32], truth: &LabelMap) -> Result<Confusion, ExperimentError> {
    check_lengths(predicted, truth)?;
    let c = truth.num_classes;
    let mut counts = vec![vec![0u64; c]; c];
    let mut any = false;
    for (index, (&p, &t)) in predicted.iter().zip(&truth.labels).enumerate() {
        if t == 0 {
            continue;
        }
        if p == 0 || p as usize > c {
            return Err(ExperimentError::LabelOutOfRange { index, label: p, classes: c });
        }
        counts[t as usize - 1][p as usize - 1] += 1;
        any = true;
    }
    if !any {
        return Err(ExperimentError::DisjointSupport);
    }
    Ok(Confusion { counts })
}

fn check_lengths(predicted: &[u32], truth: &LabelMap) -> Result<(), ExperimentError> {
    if predicted.len() != truth.len() {
        return Err(ExperimentError::Length {
            predicted: predicted.len(),
            truth: truth.len(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(labels: Vec<u32>) -> LabelMap {
        LabelMap::new(labels).unwrap()
    }

    #[test]
    fn perfect_and_flipped() {
        let truth = map(vec![1, 2, 2, 1]);
        assert_eq!(overall_accuracy(&truth.labels, &truth).unwrap(), 1.0);
        assert_eq!(overall_accuracy(&[2, 1, 1, 2], &truth).unwrap(), 0.0);
    }

    #[test]
    fn seven_of_ten() {
        let truth = map(vec![1, 1, 1, 2, 2, 2, 3, 3, 3, 3]);
        let pred = [1, 1, 2, 2, 2, 3, 3, 3, 1, 3];
        let manual = pred.iter().zip(&truth.labels).filter(|(p, t)| p == t).count();
        assert_eq!(manual, 7);
        assert_eq!(overall_accuracy(&pred, &truth).unwrap(), 0.7);
    }

    #[test]
    fn background_is_not_evaluated() {
        let truth = map(vec![0, 1, 0, 2]);
        assert_eq!(overall_accuracy(&[2, 1, 1, 2], &truth).unwrap(), 1.0);
        let c = confusion_matrix(&[2, 1, 1, 2], &truth).unwrap();
        assert_eq!(c.total(), 2);
    }

    #[test]
    fn disjoint_support_is_an_error() {
        let truth = LabelMap::with_num_classes(vec![0, 0], 2);
        assert!(matches!(overall_accuracy(&[1, 2], &truth), Err(ExperimentError::DisjointSupport)));
        assert!(overall_accuracy(&[1], &map(vec![1, 2])).is_err());
    }

    #[test]
    fn confusion_closed_forms() {
        let truth = map(vec![1, 2, 2, 3, 3, 3]);
        let c = confusion_matrix(&truth.labels, &truth).unwrap();
        assert_eq!(c.counts, vec![vec![1, 0, 0], vec![0, 2, 0], vec![0, 0, 3]]);
        let single = confusion_matrix(&[2], &LabelMap::with_num_classes(vec![1], 2)).unwrap();
        assert_eq!(single.counts, vec![vec![0, 1], vec![0, 0]]);
        assert!(confusion_matrix(&[0, 1, 1, 1, 1, 1], &truth).is_err());
    }

    #[test]
    fn permutation_alignment() {
        let truth = map(vec![1, 1, 2, 2, 3]);
        let c = confusion_matrix(&[2, 2, 3, 3, 1], &truth).unwrap();
        assert_eq!(c.accuracy(), 0.0);
        assert_eq!(c.best_permuted_accuracy(), 1.0);
    }

    proptest::proptest! {
        #[test]
        fn trace_over_total_is_accuracy(pairs in proptest::collection::vec((0u32..5, 1u32..5), 1..60)) {
            let truth: Vec<u32> = pairs.iter().map(|p| p.0).collect();
            let pred: Vec<u32> = pairs.iter().map(|p| p.1).collect();
            proptest::prop_assume!(truth.iter().any(|&t| t != 0));
            let truth = LabelMap::with_num_classes(truth, 4);
            let c = confusion_matrix(&pred, &truth).unwrap();
            proptest::prop_assert_eq!(c.accuracy(), overall_accuracy(&pred, &truth).unwrap());
            let mut counts = vec![0u64; 4];
            for &t in truth.labels.iter().filter(|&&t| t != 0) {
                counts[t as usize - 1] += 1;
            }
            proptest::prop_assert_eq!(c.row_sums(), counts);
        }
    }
}
