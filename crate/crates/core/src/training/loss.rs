use crate::error::{Error, Result};
use crate::model::ProbabilityMatrix;

/// Lower clamp applied to the true-class probability before the log.
pub const PROBABILITY_FLOOR: f64 = 1e-7;

const ROW_SUM_TOLERANCE: f64 = 1e-4;

/// Mean over samples of `-ln(p_true)`, with `p_true` clamped to `[1e-7, 1]`.
pub fn categorical_cross_entropy(probabilities: &ProbabilityMatrix, labels: &[usize]) -> Result<f64> {
    if probabilities.nrows() != labels.len() {
        return Err(Error::invalid(format!(
            "{} probability rows for {} labels",
            probabilities.nrows(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::invalid("cross-entropy of an empty batch"));
    }
    let k = probabilities.ncols();
    let mut total = 0.0;
    for (row, &label) in probabilities.outer_iter().zip(labels) {
        if label >= k {
            return Err(Error::invalid(format!("label {label} outside [0, {k})")));
        }
        let sum = row.sum();
        // NaN rows fall through so divergence is reported by the caller.
        if sum.is_finite() && (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(Error::invalid(format!("probability row sums to {sum}")));
        }
        total -= row[label].clamp(PROBABILITY_FLOOR, 1.0).ln();
    }
    Ok(total / labels.len() as f64)
}
