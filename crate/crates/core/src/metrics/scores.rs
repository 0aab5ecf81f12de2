//! Accuracy, precision, recall and one-vs-rest ROC-AUC.

use serde::{Deserialize, Serialize};

use super::confusion::ConfusionMatrix;
use crate::error::{Error, Result};
use crate::model::ProbabilityMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    #[default]
    Macro,
    Micro,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MetricWarning {
    /// No predictions for the class; its precision counts as 0.
    NoPredictions { class: usize },
    /// No true samples of the class; its recall counts as 0.
    NoSupport { class: usize },
    /// The class lacks positives or negatives and is left out of the AUC mean.
    AucSkipped { class: usize },
}

impl std::fmt::Display for MetricWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MetricWarning::NoPredictions { class } => {
                write!(f, "class {class}: tp + fp = 0, precision taken as 0")
            }
            MetricWarning::NoSupport { class } => write!(f, "class {class}: tp + fn = 0, recall taken as 0"),
            MetricWarning::AucSkipped { class } => {
                write!(f, "class {class}: no positive or no negative samples, excluded from AUC")
            }
        }
    }
}

/// A metric value plus any degenerate-class warnings raised computing it.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub value: f64,
    pub warnings: Vec<MetricWarning>,
}

fn require_samples(cm: &ConfusionMatrix) -> Result<u64> {
    match cm.total() {
        0 => Err(Error::UndefinedMetric("confusion matrix is empty".into())),
        n => Ok(n),
    }
}

/// `trace / total`, i.e. `(TP + TN) / total` summed over the diagonal.
pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = require_samples(cm)?;
    Ok(cm.trace() as f64 / total as f64)
}

fn averaged(
    cm: &ConfusionMatrix,
    averaging: Averaging,
    denominator: impl Fn(usize) -> u64,
    warn: impl Fn(usize) -> MetricWarning,
) -> Result<Scored> {
    let total = require_samples(cm)?;
    match averaging {
        Averaging::Micro => {
            let tp: u64 = (0..cm.k()).map(|c| cm.get(c, c)).sum();
            let denom: u64 = (0..cm.k()).map(&denominator).sum();
            debug_assert_eq!(denom, total);
            Ok(Scored {
                value: tp as f64 / denom as f64,
                warnings: Vec::new(),
            })
        }
        Averaging::Macro => {
            let mut warnings = Vec::new();
            let mut sum = 0.0;
            for c in 0..cm.k() {
                let tp = cm.get(c, c);
                match denominator(c) {
                    0 => warnings.push(warn(c)),
                    d => sum += tp as f64 / d as f64,
                }
            }
            Ok(Scored {
                value: sum / cm.k() as f64,
                warnings,
            })
        }
    }
}

/// `TP / (TP + FP)` per class, averaged.
pub fn precision(cm: &ConfusionMatrix, averaging: Averaging) -> Result<Scored> {
    averaged(cm, averaging, |c| cm.col_sum(c), |class| MetricWarning::NoPredictions { class })
}

/// `TP / (TP + FN)` per class, averaged.
pub fn recall(cm: &ConfusionMatrix, averaging: Averaging) -> Result<Scored> {
    averaged(cm, averaging, |c| cm.row_sum(c), |class| MetricWarning::NoSupport { class })
}

pub fn precision_macro(cm: &ConfusionMatrix) -> Result<Scored> {
    precision(cm, Averaging::Macro)
}

pub fn recall_macro(cm: &ConfusionMatrix) -> Result<Scored> {
    recall(cm, Averaging::Macro)
}

/// Mann-Whitney form of the binary ROC-AUC: the fraction of
/// (positive, negative) pairs where the positive scores higher, ties
/// counting one half. `None` when either group is empty.
pub fn binary_auc(scored: &mut [(f64, bool)]) -> Option<f64> {
    let positives = scored.iter().filter(|(_, p)| *p).count();
    let negatives = scored.len() - positives;
    if positives == 0 || negatives == 0 {
        return None;
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0f64;
    let mut i = 0;
    while i < scored.len() {
        let mut j = i + 1;
        while j < scored.len() && scored[j].0 == scored[i].0 {
            j += 1;
        }
        // Ranks i+1..=j share their mean.
        let mean_rank = (i + 1 + j) as f64 / 2.0;
        let pos_in_group = scored[i..j].iter().filter(|(_, p)| *p).count();
        rank_sum += mean_rank * pos_in_group as f64;
        i = j;
    }
    let p = positives as f64;
    let u = rank_sum - p * (p + 1.0) / 2.0;
    Some(u / (p * negatives as f64))
}

fn check_scores(probabilities: &ProbabilityMatrix, actual: &[usize]) -> Result<()> {
    if probabilities.nrows() != actual.len() {
        return Err(Error::invalid(format!(
            "{} probability rows for {} labels",
            probabilities.nrows(),
            actual.len()
        )));
    }
    let k = probabilities.ncols();
    if let Some(&bad) = actual.iter().find(|&&a| a >= k) {
        return Err(Error::invalid(format!("label {bad} outside [0, {k})")));
    }
    if probabilities.iter().any(|p| !p.is_finite()) {
        return Err(Error::invalid("probabilities contain non-finite values"));
    }
    Ok(())
}

/// One-vs-rest ROC-AUC. Macro averages the per-class AUCs over classes with
/// both positives and negatives; micro pools every (sample, class) score.
pub fn auc(probabilities: &ProbabilityMatrix, actual: &[usize], averaging: Averaging) -> Result<Scored> {
    check_scores(probabilities, actual)?;
    let k = probabilities.ncols();
    match averaging {
        Averaging::Macro => {
            let mut warnings = Vec::new();
            let mut per_class = Vec::new();
            for c in 0..k {
                let mut scored: Vec<(f64, bool)> = probabilities
                    .column(c)
                    .iter()
                    .zip(actual)
                    .map(|(&s, &a)| (s, a == c))
                    .collect();
                match binary_auc(&mut scored) {
                    Some(v) => per_class.push(v),
                    None => warnings.push(MetricWarning::AucSkipped { class: c }),
                }
            }
            if per_class.is_empty() {
                return Err(Error::UndefinedMetric(
                    "no class has both positive and negative samples".into(),
                ));
            }
            Ok(Scored {
                value: per_class.iter().sum::<f64>() / per_class.len() as f64,
                warnings,
            })
        }
        Averaging::Micro => {
            let mut scored: Vec<(f64, bool)> = probabilities
                .outer_iter()
                .zip(actual)
                .flat_map(|(row, &a)| row.iter().enumerate().map(move |(c, &s)| (s, a == c)).collect::<Vec<_>>())
                .collect();
            let value = binary_auc(&mut scored)
                .ok_or_else(|| Error::UndefinedMetric("no positive or no negative scores".into()))?;
            Ok(Scored { value, warnings: Vec::new() })
        }
    }
}

pub fn auc_macro(probabilities: &ProbabilityMatrix, actual: &[usize]) -> Result<Scored> {
    auc(probabilities, actual, Averaging::Macro)
}

#[cfg(test)]
mod tests {
    use ndarray::{array, Array2};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::metrics::confusion_matrix;

    fn cm2(rows: [[u64; 2]; 2]) -> ConfusionMatrix {
        ConfusionMatrix::from_counts(2, rows.iter().flatten().copied().collect()).unwrap()
    }

    #[test]
    fn accuracy_cases() {
        let mut predicted: Vec<usize> = (0..20).map(|i| i % 3).collect();
        let actual = predicted.clone();
        predicted[0] = 1;
        let cm = confusion_matrix(&predicted, &actual, 3).unwrap();
        assert_eq!(accuracy(&cm).unwrap(), 0.95);
        assert_eq!(accuracy(&confusion_matrix(&actual, &actual, 3).unwrap()).unwrap(), 1.0);
        assert!(matches!(accuracy(&ConfusionMatrix::zeros(3)), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn macro_precision_recall_by_hand() {
        let cm = cm2([[3, 1], [2, 4]]);
        let p = precision_macro(&cm).unwrap().value;
        let r = recall_macro(&cm).unwrap().value;
        assert!((p - 0.7).abs() < 1e-12);
        assert!((r - (0.75 + 4.0 / 6.0) / 2.0).abs() < 1e-12);
        assert!((r - 0.70833).abs() < 1e-5);
    }

    #[test]
    fn identity_precision_recall() {
        let cm = confusion_matrix(&[0, 1, 2, 3], &[0, 1, 2, 3], 4).unwrap();
        assert_eq!(precision_macro(&cm).unwrap().value, 1.0);
        assert_eq!(recall_macro(&cm).unwrap().value, 1.0);
    }

    #[test]
    fn degenerate_classes_contribute_zero() {
        // Class 2 never occurs and is never predicted.
        let cm = confusion_matrix(&[0, 1], &[0, 1], 3).unwrap();
        let p = precision_macro(&cm).unwrap();
        assert!((p.value - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(p.warnings, vec![MetricWarning::NoPredictions { class: 2 }]);
        let r = recall_macro(&cm).unwrap();
        assert_eq!(r.warnings, vec![MetricWarning::NoSupport { class: 2 }]);
    }

    #[test]
    fn micro_equals_accuracy() {
        let cm = cm2([[3, 1], [2, 4]]);
        assert_eq!(precision(&cm, Averaging::Micro).unwrap().value, 0.7);
        assert_eq!(recall(&cm, Averaging::Micro).unwrap().value, 0.7);
    }

    #[test]
    fn auc_perfect_and_constant() {
        let probs = array![[0.9, 0.1], [0.8, 0.2], [0.3, 0.7], [0.1, 0.9]];
        assert_eq!(auc_macro(&probs, &[0, 0, 1, 1]).unwrap().value, 1.0);
        let flat = Array2::from_elem((5, 3), 1.0 / 3.0);
        assert_eq!(auc_macro(&flat, &[0, 1, 2, 0, 1]).unwrap().value, 0.5);
        assert_eq!(auc(&flat, &[0, 1, 2, 0, 1], Averaging::Micro).unwrap().value, 0.5);
    }

    #[test]
    fn auc_skips_absent_classes() {
        let probs = array![[0.6, 0.3, 0.1], [0.2, 0.7, 0.1]];
        let s = auc_macro(&probs, &[0, 1]).unwrap();
        assert_eq!(s.value, 1.0);
        assert_eq!(s.warnings, vec![MetricWarning::AucSkipped { class: 2 }]);
        assert!(matches!(auc_macro(&array![[1.0], [1.0]], &[0, 0]), Err(Error::UndefinedMetric(_))));
    }

    fn pair_count_auc(probs: &ProbabilityMatrix, actual: &[usize], class: usize) -> Option<f64> {
        let (mut wins, mut pairs) = (0.0, 0.0);
        for (i, &ai) in actual.iter().enumerate() {
            for (j, &aj) in actual.iter().enumerate() {
                if ai == class && aj != class {
                    pairs += 1.0;
                    let (si, sj) = (probs[[i, class]], probs[[j, class]]);
                    wins += if si > sj { 1.0 } else if si == sj { 0.5 } else { 0.0 };
                }
            }
        }
        (pairs > 0.0).then(|| wins / pairs)
    }

    #[test]
    fn auc_matches_pair_counting() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let k = 3;
        // Coarse scores so ties occur.
        let probs = Array2::from_shape_fn((200, k), |_| (rng.random_range(0..20) as f64) / 20.0);
        let actual: Vec<usize> = (0..200).map(|_| rng.random_range(0..k)).collect();
        let per_class: Vec<f64> = (0..k).filter_map(|c| pair_count_auc(&probs, &actual, c)).collect();
        let oracle = per_class.iter().sum::<f64>() / per_class.len() as f64;
        assert!((auc_macro(&probs, &actual).unwrap().value - oracle).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn metrics_stay_in_unit_interval(pairs in prop::collection::vec((0usize..6, 0usize..6), 1..300)) {
            let (p, a): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            let cm = confusion_matrix(&p, &a, 6).unwrap();
            for v in [accuracy(&cm).unwrap(), precision_macro(&cm).unwrap().value, recall_macro(&cm).unwrap().value] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            prop_assert_eq!(accuracy(&cm).unwrap(), recall(&cm, Averaging::Micro).unwrap().value);
        }

        #[test]
        fn permutation_invariance(pairs in prop::collection::vec((0usize..4, 0usize..4), 2..100), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let mut shuffled = pairs.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let build = |v: &[(usize, usize)]| {
                let (p, a): (Vec<_>, Vec<_>) = v.iter().copied().unzip();
                confusion_matrix(&p, &a, 4).unwrap()
            };
            prop_assert_eq!(build(&pairs), build(&shuffled));
        }
    }
}
