use super::{check_finite, MetricError};
use crate::Scalar;

/// Best accuracy over all cut points of the rule `score >= t -> positive`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdFit<T> {
    pub accuracy: T,
    /// A threshold attaining `accuracy`; may be infinite.
    pub threshold: T,
}

/// Sorted distinct scores with per-group (positive, negative) counts.
fn groups<T: Scalar>(scores: &[T], labels: &[bool]) -> Vec<(T, usize, usize)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    let mut out: Vec<(T, usize, usize)> = Vec::new();
    for i in order {
        let (p, q) = if labels[i] { (1, 0) } else { (0, 1) };
        match out.last_mut() {
            Some(g) if g.0 == scores[i] => {
                g.1 += p;
                g.2 += q;
            }
            _ => out.push((scores[i], p, q)),
        }
    }
    out
}

fn check<T: Scalar>(scores: &[T], labels: &[bool]) -> Result<(), MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch(scores.len(), labels.len()));
    }
    if scores.is_empty() {
        return Err(MetricError::TooFew { need: 1, got: 0 });
    }
    check_finite(scores)
}

/// Sweeps every cut between adjacent distinct scores plus both infinities.
/// `gain(pos_above, neg_at_or_below)` is maximized; ties keep the highest
/// threshold.
fn sweep<T: Scalar>(scores: &[T], labels: &[bool], gain: impl Fn(usize, usize) -> f64) -> (f64, T) {
    let gs = groups(scores, labels);
    let total_pos: usize = gs.iter().map(|g| g.1).sum();
    // cut above every group: all predicted negative
    let mut pos_above = 0;
    let mut neg_below: usize = gs.iter().map(|g| g.2).sum();
    let mut best = (gain(0, neg_below), T::infinity());
    for k in (0..gs.len()).rev() {
        pos_above += gs[k].1;
        neg_below -= gs[k].2;
        let t = if k == 0 { T::neg_infinity() } else { gs[k - 1].0 + (gs[k].0 - gs[k - 1].0) / T::lit(2.0) };
        let g = gain(pos_above, neg_below);
        if g > best.0 {
            best = (g, t);
        }
    }
    debug_assert_eq!(pos_above, total_pos);
    best
}

pub fn oracle_threshold_accuracy<T: Scalar>(scores: &[T], labels: &[bool]) -> Result<ThresholdFit<T>, MetricError> {
    check(scores, labels)?;
    let n = scores.len();
    let (correct, threshold) = sweep(scores, labels, |tp, tn| (tp + tn) as f64);
    Ok(ThresholdFit { accuracy: T::lit(correct) / T::lit(n as f64), threshold })
}

/// Same sweep, maximizing the mean of the per-class accuracies.
pub fn oracle_threshold_balanced_accuracy<T: Scalar>(
    scores: &[T],
    labels: &[bool],
) -> Result<ThresholdFit<T>, MetricError> {
    check(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::MissingClass {
            what: "balanced accuracy",
            class: if n_pos == 0 { "positive" } else { "negative" },
        });
    }
    // maximize tp * n_neg + tn * n_pos (integer), then normalize
    let (scaled, threshold) = sweep(scores, labels, |tp, tn| (tp * n_neg + tn * n_pos) as f64);
    Ok(ThresholdFit { accuracy: T::lit(scaled) / T::lit((2 * n_pos * n_neg) as f64), threshold })
}
