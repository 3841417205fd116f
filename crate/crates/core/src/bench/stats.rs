/// Mean, standard deviation and quartiles of one metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation (n − 1); 0 for a single value.
    pub std: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
}

/// Percentile `p ∈ [0, 1]` of sorted values, linear interpolation between
/// closest ranks (position `p·(n−1)`).
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Summary of `values`; `None` when empty.
pub fn summarize_values(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // sum in sorted order so the result does not depend on input order
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Some(Summary {
        count: n,
        mean,
        std,
        p25: percentile_sorted(&sorted, 0.25),
        p50: percentile_sorted(&sorted, 0.5),
        p75: percentile_sorted(&sorted, 0.75),
    })
}

/// Least-squares non-decreasing fit (pool adjacent violators).
pub fn isotonic_fit(values: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (b, nb) = blocks[blocks.len() - 1];
            let (a, na) = blocks[blocks.len() - 2];
            if a <= b {
                break;
            }
            blocks.pop();
            let n = na + nb;
            *blocks.last_mut().expect("two blocks") = ((a * na as f64 + b * nb as f64) / n as f64, n);
        }
    }
    blocks.into_iter().flat_map(|(v, n)| std::iter::repeat_n(v, n)).collect()
}

/// RMS distance between `values` and their isotonic fit.
pub fn isotonic_residual(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let fit = isotonic_fit(values);
    (values.iter().zip(&fit).map(|(v, f)| (v - f).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn percentiles_of_one_to_hundred() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let s = summarize_values(&v).unwrap();
        assert!((s.p25 - 25.75).abs() < 1e-12);
        assert!((s.p50 - 50.5).abs() < 1e-12);
        assert!((s.p75 - 75.25).abs() < 1e-12);
        assert!((s.mean - 50.5).abs() < 1e-12);
    }

    #[test]
    fn single_value() {
        let s = summarize_values(&[3.5]).unwrap();
        assert_eq!((s.p25, s.p50, s.p75, s.mean, s.std), (3.5, 3.5, 3.5, 3.5, 0.0));
        assert!(summarize_values(&[]).is_none());
    }

    #[test]
    fn isotonic_examples() {
        assert_eq!(isotonic_fit(&[1.0, 3.0, 2.0, 4.0]), vec![1.0, 2.5, 2.5, 4.0]);
        assert_eq!(isotonic_residual(&[1.0, 2.0, 3.0]), 0.0);
    }

    proptest! {
        #[test]
        fn summary_ignores_order(mut v in proptest::collection::vec(-1e3f64..1e3, 1..60), seed in any::<u64>()) {
            let a = summarize_values(&v).unwrap();
            let n = v.len();
            for i in 0..n {
                let j = (seed as usize).wrapping_mul(i + 7) % n;
                v.swap(i, j);
            }
            prop_assert_eq!(a, summarize_values(&v).unwrap());
        }

        #[test]
        fn isotonic_fit_is_monotone(v in proptest::collection::vec(-10f64..10.0, 0..40)) {
            let f = isotonic_fit(&v);
            prop_assert_eq!(f.len(), v.len());
            prop_assert!(f.windows(2).all(|w| w[0] <= w[1] + 1e-12));
            let (sv, sf): (f64, f64) = (v.iter().sum(), f.iter().sum());
            prop_assert!((sv - sf).abs() < 1e-9);
        }
    }
}
