use serde::Serialize;

use super::{check_finite, MetricError};
use crate::Scalar;

/// 1-based ranks; tied values share the mean of their positions.
pub fn average_ranks<T: Scalar>(xs: &[T]) -> Vec<T> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).expect("finite values"));
    let mut ranks = vec![T::zero(); xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        // positions i..=j (0-based) -> mean 1-based rank (i + j + 2) / 2
        let r = T::lit((i + j + 2) as f64) / T::lit(2.0);
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn check_pair<T: Scalar>(x: &[T], y: &[T]) -> Result<(), MetricError> {
    if x.len() != y.len() {
        return Err(MetricError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(MetricError::TooFew { need: 2, got: x.len() });
    }
    check_finite(x)?;
    check_finite(y)
}

/// Spearman's rho: Pearson correlation of the average ranks.
pub fn spearman<T: Scalar>(x: &[T], y: &[T]) -> Result<T, MetricError> {
    check_pair(x, y)?;
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = T::lit(x.len() as f64);
    // ranks always average to (n + 1) / 2
    let mean = (n + T::one()) / T::lit(2.0);
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in rx.iter().zip(&ry) {
        let (da, db) = (a - mean, b - mean);
        sxy = sxy + da * db;
        sxx = sxx + da * da;
        syy = syy + db * db;
    }
    if sxx.is_zero() {
        return Err(MetricError::Degenerate("x"));
    }
    if syy.is_zero() {
        return Err(MetricError::Degenerate("y"));
    }
    Ok((sxy / (sxx * syy).sqrt()).max(-T::one()).min(T::one()))
}

/// Number of tied pairs, summed over runs of equal adjacent elements.
fn tied_pairs<T: PartialEq>(sorted: &[T]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Sorts `v` in place, returning the number of inversions.
fn merge_count<T: Copy + PartialOrd>(v: &mut [T], buf: &mut Vec<T>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid], buf) + merge_count(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf.push(v[j]);
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

/// Kendall's tau-b in O(n log n) (Knight's algorithm).
pub fn kendall<T: Scalar>(x: &[T], y: &[T]) -> Result<T, MetricError> {
    check_pair(x, y)?;
    let n = x.len() as u64;
    let mut pairs: Vec<(T, T)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.partial_cmp(&b.1).unwrap()));

    let n0 = n * (n - 1) / 2;
    let xs: Vec<T> = pairs.iter().map(|p| p.0).collect();
    let n1 = tied_pairs(&xs);
    let n3 = tied_pairs(&pairs);

    let mut ys: Vec<T> = pairs.iter().map(|p| p.1).collect();
    let mut buf = Vec::with_capacity(ys.len());
    let discordant = merge_count(&mut ys, &mut buf);
    let n2 = tied_pairs(&ys);

    if n0 == n1 {
        return Err(MetricError::Degenerate("x"));
    }
    if n0 == n2 {
        return Err(MetricError::Degenerate("y"));
    }
    // concordant - discordant = (n0 - n1 - n2 + n3) - 2 * discordant
    let numer = (n0 + n3) as i128 - (n1 + n2) as i128 - 2 * discordant as i128;
    let denom = T::lit((n0 - n1) as f64).sqrt() * T::lit((n0 - n2) as f64).sqrt();
    Ok((T::lit(numer as f64) / denom).max(-T::one()).min(T::one()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Correlation {
    Spearman,
    Kendall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// One correlation over all items.
    #[default]
    Pooled,
    /// Mean of per-group correlations; degenerate groups are skipped.
    PerGroup,
}

/// Correlation over groups of (x, y) samples. Returns the value and the
/// number of groups (or items, when pooled) it averages.
pub fn grouped_correlation<T: Scalar>(
    groups: &[(Vec<T>, Vec<T>)],
    method: Correlation,
    aggregation: Aggregation,
) -> Result<(T, usize), MetricError> {
    let f = |x: &[T], y: &[T]| match method {
        Correlation::Spearman => spearman(x, y),
        Correlation::Kendall => kendall(x, y),
    };
    match aggregation {
        Aggregation::Pooled => {
            let x: Vec<T> = groups.iter().flat_map(|g| g.0.iter().copied()).collect();
            let y: Vec<T> = groups.iter().flat_map(|g| g.1.iter().copied()).collect();
            Ok((f(&x, &y)?, x.len()))
        }
        Aggregation::PerGroup => {
            let mut sum = T::zero();
            let mut used = 0usize;
            for (x, y) in groups {
                match f(x, y) {
                    Ok(v) => {
                        sum = sum + v;
                        used += 1;
                    }
                    Err(MetricError::Degenerate(_)) | Err(MetricError::TooFew { .. }) => {}
                    Err(e) => return Err(e),
                }
            }
            if used == 0 {
                return Err(MetricError::Degenerate("every group"));
            }
            Ok((sum / T::lit(used as f64), used))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_examples() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert!((spearman(&[1.0f64, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(spearman(&[1.0, 1.0], &[1.0, 2.0]), Err(MetricError::Degenerate("x")));
        assert!(matches!(spearman(&[1.0], &[1.0]), Err(MetricError::TooFew { .. })));
    }

    #[test]
    fn kendall_examples() {
        assert_eq!(kendall(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert!((kendall(&[1.0f64, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(kendall(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert_eq!(kendall(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]), Err(MetricError::Degenerate("x")));
    }

    #[test]
    fn ranks_with_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
    }

    #[test]
    fn inversions() {
        let mut v = vec![3, 1, 2, 5, 4];
        assert_eq!(merge_count(&mut v, &mut Vec::new()), 3);
        assert_eq!(v, [1, 2, 3, 4, 5]);
        assert_eq!(tied_pairs(&[1, 1, 1, 2, 2, 3]), 4);
    }

    #[test]
    fn aggregation_modes() {
        let groups = vec![
            (vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]),
            (vec![1.0, 2.0, 3.0], vec![3.0, 2.0, 1.0]),
            (vec![1.0, 1.0], vec![1.0, 2.0]),
        ];
        let (v, used) = grouped_correlation(&groups, Correlation::Kendall, Aggregation::PerGroup).unwrap();
        assert_eq!((v, used), (0.0, 2));
        let (_, n) = grouped_correlation(&groups, Correlation::Spearman, Aggregation::Pooled).unwrap();
        assert_eq!(n, 8);
    }
}
