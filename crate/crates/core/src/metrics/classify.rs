use std::collections::BTreeMap;

use super::{check_lengths, MetricsError, Prf};

/// Per-class F1 weighted by gold support. Classes that only occur in the
/// predictions carry weight 0.
pub fn weighted_macro_f1<S: AsRef<str>, T: AsRef<str>>(gold: &[S], pred: &[T]) -> Result<f64, MetricsError> {
    check_lengths(gold.len(), pred.len())?;
    if gold.is_empty() {
        return Err(MetricsError::EmptyInput("no labels".into()));
    }
    // (tp, predicted, support) per class
    let mut counts: BTreeMap<&str, (usize, usize, usize)> = BTreeMap::new();
    for (g, p) in gold.iter().zip(pred) {
        let (g, p) = (g.as_ref(), p.as_ref());
        counts.entry(g).or_default().2 += 1;
        let c = counts.entry(p).or_default();
        c.1 += 1;
        if g == p {
            c.0 += 1;
        }
    }
    let n = gold.len() as f64;
    Ok(counts
        .values()
        .filter(|c| c.2 > 0)
        .map(|&(tp, p, g)| g as f64 / n * Prf::from_counts(tp, p, g).f1)
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_cases() {
        assert_eq!(weighted_macro_f1(&["a", "b", "a"], &["a", "b", "a"]).unwrap(), 1.0);
        let f = weighted_macro_f1(&["A", "A", "A", "B"], &["A", "A", "B", "B"]).unwrap();
        assert!((f - (0.75 * 0.8 + 0.25 * 2.0 / 3.0)).abs() < 1e-12);
        assert!(weighted_macro_f1::<&str, &str>(&[], &[]).is_err());
        assert!(weighted_macro_f1(&["a"], &["a", "b"]).is_err());
    }
}
