use super::{check_finite, MetricError};
use crate::Scalar;

/// Area under the ROC curve as the Mann-Whitney statistic: the fraction of
/// (positive, negative) pairs where the positive scores higher, ties
/// counting one half.
///
/// Pair counts are accumulated exactly in half-units, so the result is the
/// correctly rounded ratio.
pub fn roc_auc<T: Scalar>(scores: &[T], labels: &[bool]) -> Result<T, MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch(scores.len(), labels.len()));
    }
    check_finite(scores)?;
    let n_pos = labels.iter().filter(|&&l| l).count() as u128;
    let n_neg = labels.len() as u128 - n_pos;
    if n_pos == 0 {
        return Err(MetricError::MissingClass { what: "roc_auc", class: "positive" });
    }
    if n_neg == 0 {
        return Err(MetricError::MissingClass { what: "roc_auc", class: "negative" });
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));

    // twice the Mann-Whitney U of the positives
    let mut u2: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut p, mut q) = (0u128, 0u128);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] {
                p += 1;
            } else {
                q += 1;
            }
            j += 1;
        }
        u2 += 2 * p * neg_below + p * q;
        neg_below += q;
        i = j;
    }
    Ok(T::lit(u2 as f64) / T::lit((2 * n_pos * n_neg) as f64))
}
