use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fence multiplier of the box-plot "extreme outlier" convention.
pub const EXTREME_FENCE: f64 = 3.0;

/// A sample with its box-plot extreme outliers removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanSample {
    /// Retained values, ascending.
    #[serde(with = "crate::decimal::vec")]
    pub values: Vec<f64>,
    #[serde(with = "crate::decimal::vec")]
    pub removed_outliers: Vec<f64>,
    #[serde(with = "crate::decimal")]
    pub q1: f64,
    #[serde(with = "crate::decimal")]
    pub q3: f64,
    #[serde(with = "crate::decimal")]
    pub iqr: f64,
    #[serde(with = "crate::decimal")]
    pub fence_lo: f64,
    #[serde(with = "crate::decimal")]
    pub fence_hi: f64,
}

impl CleanSample {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Wraps already-clean data without removing anything. Quartile fields
    /// are computed for reference; fences are infinite.
    pub fn from_values(mut values: Vec<f64>) -> Result<Self> {
        check_finite(&values)?;
        if values.is_empty() {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        values.sort_by(f64::total_cmp);
        let q1 = quantile_linear(&values, 0.25);
        let q3 = quantile_linear(&values, 0.75);
        Ok(CleanSample {
            values,
            removed_outliers: Vec::new(),
            q1,
            q3,
            iqr: q3 - q1,
            fence_lo: f64::NEG_INFINITY,
            fence_hi: f64::INFINITY,
        })
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().find(|v| !v.is_finite()) {
        Some(v) => Err(Error::invalid(format!("sample contains non-finite value {v}"))),
        None => Ok(()),
    }
}

/// Quantile of ascending `sorted` by linear interpolation between the order
/// statistics around position `q·(n−1)`.
pub fn quantile_linear(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Removes values outside `[q1 − k·iqr, q3 + k·iqr]`.
pub fn remove_outliers(values: &[f64], fence_multiplier: f64) -> Result<CleanSample> {
    if values.len() < 4 {
        return Err(Error::InsufficientData {
            needed: 4,
            got: values.len(),
        });
    }
    check_finite(values)?;
    if !(fence_multiplier.is_finite() && fence_multiplier > 0.0) {
        return Err(Error::invalid(format!(
            "fence multiplier must be positive, got {fence_multiplier}"
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_linear(&sorted, 0.25);
    let q3 = quantile_linear(&sorted, 0.75);
    let iqr = q3 - q1;
    let fence_lo = q1 - fence_multiplier * iqr;
    let fence_hi = q3 + fence_multiplier * iqr;
    let (kept, removed): (Vec<f64>, Vec<f64>) = sorted
        .into_iter()
        .partition(|&v| (fence_lo..=fence_hi).contains(&v));
    Ok(CleanSample {
        values: kept,
        removed_outliers: removed,
        q1,
        q3,
        iqr,
        fence_lo,
        fence_hi,
    })
}

/// [`remove_outliers`] with the 3·IQR extreme-outlier fences.
pub fn remove_extreme_outliers(values: &[f64]) -> Result<CleanSample> {
    remove_outliers(values, EXTREME_FENCE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use crate::stats::{normal_quantile, NormalParams};

    #[test]
    fn removes_the_single_extreme() {
        let s = remove_extreme_outliers(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
        assert_eq!((s.q1, s.q3, s.iqr), (2.0, 4.0, 2.0));
        assert_eq!((s.fence_lo, s.fence_hi), (-4.0, 10.0));
        assert_eq!(s.values, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.removed_outliers, vec![100.0]);
    }

    #[test]
    fn zero_spread_keeps_everything() {
        let s = remove_extreme_outliers(&[5.0; 5]).unwrap();
        assert_eq!(s.iqr, 0.0);
        assert_eq!((s.fence_lo, s.fence_hi), (5.0, 5.0));
        assert_eq!(s.values.len(), 5);
    }

    #[test]
    fn second_pass_is_a_no_op() {
        let first = remove_extreme_outliers(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
        let second = remove_extreme_outliers(&first.values).unwrap();
        assert_eq!((second.q1, second.q3, second.iqr), (1.75, 3.25, 1.5));
        assert_eq!((second.fence_lo, second.fence_hi), (-2.75, 7.75));
        assert!(second.removed_outliers.is_empty());
    }

    #[test]
    fn needs_four_values() {
        assert!(matches!(
            remove_extreme_outliers(&[1.0, 2.0, 3.0]),
            Err(Error::InsufficientData { needed: 4, got: 3 })
        ));
        assert!(remove_extreme_outliers(&[1.0, 2.0, f64::NAN, 4.0]).is_err());
    }

    #[test]
    fn gaussian_removal_rate_is_small() {
        let p = NormalParams { mu: 0.0, sigma: 1.0 };
        for seed in 0..20u64 {
            let mut rng = SeededRng::new(seed);
            let xs: Vec<f64> = (0..100)
                .map(|_| p.mu + p.sigma * normal_quantile(rng.next_open01()))
                .collect();
            let s = remove_extreme_outliers(&xs).unwrap();
            assert!(s.removed_outliers.len() * 4 <= xs.len(), "seed {seed}");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn partition_and_fences(values in proptest::collection::vec(-1e6f64..1e6, 4..200)) {
                let s = remove_extreme_outliers(&values).unwrap();
                prop_assert!(s.values.iter().all(|&v| s.fence_lo <= v && v <= s.fence_hi));
                let mut all: Vec<f64> = s.values.iter().chain(&s.removed_outliers).copied().collect();
                all.sort_by(f64::total_cmp);
                let mut input = values.clone();
                input.sort_by(f64::total_cmp);
                prop_assert_eq!(all, input);
            }
        }
    }
}
