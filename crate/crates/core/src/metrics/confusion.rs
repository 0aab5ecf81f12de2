use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `k x k` counts; rows are the true class, columns the predicted class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

/// One-vs-rest counts for a single class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PerClassCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl PerClassCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

pub fn confusion_matrix(predicted: &[usize], actual: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if predicted.len() != actual.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} labels",
            predicted.len(),
            actual.len()
        )));
    }
    let mut cm = ConfusionMatrix::zeros(k);
    for (&p, &a) in predicted.iter().zip(actual) {
        if p >= k || a >= k {
            return Err(Error::invalid(format!("class index ({a}, {p}) outside [0, {k})")));
        }
        cm.counts[a * k + p] += 1;
    }
    Ok(cm)
}

impl ConfusionMatrix {
    pub fn zeros(k: usize) -> Self {
        Self { k, counts: vec![0; k * k] }
    }

    /// Builds from row-major `k x k` counts.
    pub fn from_counts(k: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != k * k {
            return Err(Error::invalid(format!("{} counts for a {k}x{k} matrix", counts.len())));
        }
        Ok(Self { k, counts })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, actual: usize, predicted: usize) -> u64 {
        self.counts[actual * self.k + predicted]
    }

    pub fn row_sum(&self, class: usize) -> u64 {
        self.counts[class * self.k..(class + 1) * self.k].iter().sum()
    }

    pub fn col_sum(&self, class: usize) -> u64 {
        (0..self.k).map(|a| self.get(a, class)).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|i| self.get(i, i)).sum()
    }

    pub fn per_class_counts(&self, class: usize) -> Result<PerClassCounts> {
        if class >= self.k {
            return Err(Error::invalid(format!("class {class} outside [0, {})", self.k)));
        }
        let tp = self.get(class, class);
        let fn_ = self.row_sum(class) - tp;
        let fp = self.col_sum(class) - tp;
        let tn = self.total() - tp - fn_ - fp;
        Ok(PerClassCounts { tp, tn, fp, fn_ })
    }
}

impl fmt::Display for ConfusionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.counts.iter().max().map(|m| m.to_string().len()).unwrap_or(1);
        for a in 0..self.k {
            let row: Vec<String> = (0..self.k).map(|p| format!("{:>width$}", self.get(a, p))).collect();
            writeln!(f, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_diagonal() {
        let cm = confusion_matrix(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
        assert_eq!(cm.trace(), 3);
        assert_eq!(cm.total(), 3);
        for c in 0..3 {
            let pc = cm.per_class_counts(c).unwrap();
            assert_eq!((pc.fp, pc.fn_), (0, 0));
        }
    }

    #[test]
    fn hand_counted_two_class() {
        let cm = confusion_matrix(&[1, 1], &[0, 1], 2).unwrap();
        assert_eq!(cm.get(0, 1), 1);
        assert_eq!(cm.get(1, 1), 1);
        assert_eq!(cm.get(0, 0), 0);
        let pc = cm.per_class_counts(1).unwrap();
        assert_eq!(pc, PerClassCounts { tp: 1, fp: 1, fn_: 0, tn: 0 });
    }

    #[test]
    fn argument_errors() {
        assert!(confusion_matrix(&[0], &[0, 1], 2).is_err());
        assert!(confusion_matrix(&[2], &[0], 2).is_err());
        assert!(confusion_matrix(&[0], &[0], 2).unwrap().per_class_counts(2).is_err());
    }
}
