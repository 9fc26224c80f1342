use std::collections::HashSet;

use super::stopwords::content_tokens;
use crate::corpus::NegType;
use crate::textclf::tokenize;

/// Structural check that `candidate` is a legal negative of `original`.
///
/// Replace: once the common prefix and suffix are removed, both remainders
/// are nonempty and share no token, i.e. a token diff has a single hunk.
/// Swap: same content-token multiset, different content-token order.
pub fn validate_negative(original: &str, candidate: &str, strategy: NegType) -> bool {
    let a = tokenize(original);
    let b = tokenize(candidate);
    if a.is_empty() || b.is_empty() || a == b {
        return false;
    }
    match strategy {
        NegType::Replace => single_span_differs(&a, &b),
        NegType::Swap => {
            let ca = content_tokens(original);
            let cb = content_tokens(candidate);
            if ca == cb {
                return false;
            }
            let (mut sa, mut sb) = (ca, cb);
            sa.sort();
            sb.sort();
            sa == sb
        }
    }
}

fn single_span_differs(a: &[String], b: &[String]) -> bool {
    let prefix = a.iter().zip(b).take_while(|(x, y)| x == y).count();
    let max_suffix = a.len().min(b.len()) - prefix;
    let suffix = a.iter().rev().zip(b.iter().rev()).take(max_suffix).take_while(|(x, y)| x == y).count();
    let mid_a = &a[prefix..a.len() - suffix];
    let mid_b = &b[prefix..b.len() - suffix];
    if mid_a.is_empty() || mid_b.is_empty() {
        return false;
    }
    let in_a: HashSet<&String> = mid_a.iter().collect();
    !mid_b.iter().any(|t| in_a.contains(t))
}
