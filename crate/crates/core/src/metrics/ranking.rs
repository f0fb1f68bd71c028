use std::collections::HashSet;

use super::{check_lengths, MetricsError};

/// Mean over queries of `1 / rank` of the first relevant candidate; a query
/// whose ranking holds no relevant candidate contributes 0.
pub fn mrr<S: AsRef<str>>(rankings: &[Vec<S>], relevant: &[HashSet<String>]) -> Result<f64, MetricsError> {
    check_lengths(relevant.len(), rankings.len())?;
    if rankings.is_empty() {
        return Err(MetricsError::EmptyInput("no queries".into()));
    }
    let mut total = 0.0;
    for (q, (ranking, gold)) in rankings.iter().zip(relevant).enumerate() {
        if ranking.is_empty() {
            return Err(MetricsError::EmptyInput(format!("query {q} has no candidates")));
        }
        if let Some(rank) = ranking.iter().position(|c| gold.contains(c.as_ref())) {
            total += 1.0 / (rank + 1) as f64;
        }
    }
    Ok(total / rankings.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(xs: &[&str]) -> HashSet<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn hand_cases() {
        let r = vec![vec!["a", "b"], vec!["x", "y", "z", "w"]];
        let g = vec![set(&["a"]), set(&["w", "q"])];
        assert!((mrr(&r, &g).unwrap() - 0.625).abs() < 1e-12);
        assert_eq!(mrr(&r, &[set(&["a"]), set(&["x"])]).unwrap(), 1.0);
        assert_eq!(mrr(&r, &[set(&[]), set(&["nope"])]).unwrap(), 0.0);
        assert!(mrr::<&str>(&[], &[]).is_err());
        assert!(mrr(&[Vec::<&str>::new()], &[set(&["a"])]).is_err());
    }
}
