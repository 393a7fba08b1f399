//! Distances between response distributions.

use super::items::{ItemSpec, ResponseTable};
use super::MetricError;

const SUM_TOLERANCE: f64 = 1e-9;

/// Empirical answer frequencies in option order. Respondents who skipped the item are excluded.
pub fn distribution(table: &ResponseTable, item: &ItemSpec) -> Result<Vec<f64>, MetricError> {
    let mut counts = vec![0usize; item.options.len()];
    for row in table.answers.values() {
        if let Some(i) = row.get(&item.item_id).and_then(|code| item.code_index(code)) {
            counts[i] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(MetricError::NoAnswers { bank: table.bank_id.clone(), item: item.item_id.clone() });
    }
    Ok(counts.into_iter().map(|c| c as f64 / total as f64).collect())
}

fn check_pair(p: &[f64], q: &[f64]) -> Result<(), MetricError> {
    if p.len() != q.len() {
        return Err(MetricError::LengthMismatch(p.len(), q.len()));
    }
    for v in [p, q] {
        let sum: f64 = v.iter().sum();
        if v.iter().any(|x| !x.is_finite() || *x < 0.0) || (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(MetricError::NotNormalized(sum));
        }
    }
    Ok(())
}

/// One-dimensional earth mover's distance with unit spacing between
/// adjacent categories: the sum of absolute CDF differences. Lies in `[0, K-1]`.
pub fn emd_raw(p: &[f64], q: &[f64]) -> Result<f64, MetricError> {
    check_pair(p, q)?;
    if p.len() < 2 {
        return Err(MetricError::TooFewCategories(p.len()));
    }
    let (mut cp, mut cq, mut total) = (0.0, 0.0, 0.0);
    for k in 0..p.len() - 1 {
        cp += p[k];
        cq += q[k];
        total += f64::abs(cp - cq);
    }
    Ok(total)
}

/// [`emd_raw`] divided by `K - 1`, so the result lies in `[0, 1]`.
pub fn emd_ordinal(p: &[f64], q: &[f64]) -> Result<f64, MetricError> {
    Ok((emd_raw(p, q)? / (p.len() - 1) as f64).min(1.0))
}

/// Total variation distance: half the L1 distance.
pub fn tvd_nominal(p: &[f64], q: &[f64]) -> Result<f64, MetricError> {
    check_pair(p, q)?;
    Ok((0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn emd_examples() {
        assert_eq!(emd_ordinal(&[0.2, 0.3, 0.5], &[0.2, 0.3, 0.5]).unwrap(), 0.0);
        assert_eq!(emd_ordinal(&[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(emd_ordinal(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap(), 0.5);
        assert_eq!(emd_raw(&[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0]).unwrap(), 2.0);
    }

    #[test]
    fn tvd_examples() {
        assert_eq!(tvd_nominal(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_eq!(tvd_nominal(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(tvd_nominal(&[0.5, 0.5, 0.0], &[0.0, 0.5, 0.5]).unwrap(), 0.5);
    }

    #[test]
    fn input_errors() {
        assert_eq!(emd_ordinal(&[1.0], &[1.0]), Err(MetricError::TooFewCategories(1)));
        assert_eq!(tvd_nominal(&[1.0, 0.0], &[1.0]), Err(MetricError::LengthMismatch(2, 1)));
        assert!(matches!(emd_ordinal(&[0.5, 0.4], &[0.5, 0.5]), Err(MetricError::NotNormalized(_))));
        assert!(matches!(tvd_nominal(&[1.5, -0.5], &[0.5, 0.5]), Err(MetricError::NotNormalized(_))));
    }

    #[test]
    fn distribution_counts() {
        let item = ItemSpec::new("Q", true, &["a", "b", "c"]);
        let mut t = ResponseTable::new("D");
        let items = [item.clone()];
        for (r, c) in [("r1", "1"), ("r2", "1"), ("r3", "2"), ("r4", "3")] {
            t.record(&items, r, "Q", c).unwrap();
        }
        t.answers.insert("r5".into(), Default::default());
        assert_eq!(distribution(&t, &item).unwrap(), vec![0.5, 0.25, 0.25]);
        let empty = ResponseTable::new("L");
        assert!(matches!(distribution(&empty, &item), Err(MetricError::NoAnswers { .. })));
    }
}
