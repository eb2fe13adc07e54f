//! Order statistics and moments over replications.

/// Type-7 sample quantile (linear interpolation between order statistics).
/// `sorted` must be ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Median, quartiles, mean and unbiased variance of a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub mean: f64,
    pub variance: f64,
}

impl Summary {
    /// `None` for an empty sample. Non-finite values are the caller's concern.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let variance = if v.len() > 1 {
            v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            f64::NAN
        };
        Some(Self {
            count: v.len(),
            median: quantile_sorted(&v, 0.5),
            q25: quantile_sorted(&v, 0.25),
            q75: quantile_sorted(&v, 0.75),
            mean,
            variance,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type7_quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.5), 2.5);
        assert_eq!(quantile_sorted(&v, 0.25), 1.75);
        assert_eq!(quantile_sorted(&v, 0.75), 3.25);
        assert_eq!(quantile_sorted(&[7.0], 0.3), 7.0);
    }

    #[test]
    fn summary_is_order_free() {
        let a = Summary::of(&[3.0, 1.0, 2.0, 5.0]).unwrap();
        let b = Summary::of(&[5.0, 2.0, 3.0, 1.0]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.mean, 2.75);
        assert!(Summary::of(&[]).is_none());
    }
}
