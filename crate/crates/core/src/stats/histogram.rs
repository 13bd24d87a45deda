use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::CleanSample;

pub const DEFAULT_BINS: usize = 50;

/// Empirical probability mass over equal-width bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    #[serde(with = "crate::decimal::vec")]
    pub edges: Vec<f64>,
    #[serde(with = "crate::decimal::vec")]
    pub mass: Vec<f64>,
    pub n: usize,
}

impl Histogram {
    /// Builds a histogram directly from per-bin masses.
    pub fn from_mass(edges: Vec<f64>, mass: Vec<f64>, n: usize) -> Result<Self> {
        if edges.len() < 2 || edges.len() != mass.len() + 1 {
            return Err(Error::invalid(format!(
                "{} edges do not bound {} bins",
                edges.len(),
                mass.len()
            )));
        }
        if edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("histogram edges must be strictly increasing"));
        }
        if mass.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::invalid("histogram mass must be finite and non-negative"));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("histogram mass sums to {total}, not 1")));
        }
        Ok(Histogram { edges, mass, n })
    }

    pub fn n_bins(&self) -> usize {
        self.mass.len()
    }
}

/// Equal-width histogram over `[min, max]`; the top edge is inclusive.
pub fn build_histogram(sample: &CleanSample, n_bins: usize) -> Result<Histogram> {
    if n_bins < 2 {
        return Err(Error::invalid(format!("need at least 2 bins, got {n_bins}")));
    }
    if sample.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: sample.len(),
        });
    }
    let (lo, hi) = (sample.min(), sample.max());
    if !(hi > lo) {
        return Err(Error::DegenerateSample(format!(
            "all {} values equal {lo}",
            sample.len()
        )));
    }
    let width = (hi - lo) / n_bins as f64;
    let mut edges: Vec<f64> = (0..n_bins).map(|i| lo + i as f64 * width).collect();
    edges.push(hi);

    let mut counts = vec![0usize; n_bins];
    for &v in &sample.values {
        let idx = (((v - lo) / width).floor() as usize).min(n_bins - 1);
        counts[idx] += 1;
    }
    let n = sample.len();
    let mass = counts.iter().map(|&c| c as f64 / n as f64).collect();
    Ok(Histogram { edges, mass, n })
}

/// `Σ p_i · ln(p_i / q_i)` over bins with `p_i > 0`, in nats.
pub fn kl_divergence(p: &Histogram, q_edges: &[f64], q_mass: &[f64]) -> Result<f64> {
    if q_edges != p.edges.as_slice() {
        return Err(Error::invalid("model mass is defined on different bin edges"));
    }
    if q_mass.len() != p.mass.len() {
        return Err(Error::invalid(format!(
            "model mass has {} bins, histogram has {}",
            q_mass.len(),
            p.mass.len()
        )));
    }
    let total: f64 = q_mass.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("model mass sums to {total}, not 1")));
    }
    let mut kl = 0.0;
    for (i, (&pi, &qi)) in p.mass.iter().zip(q_mass).enumerate() {
        if pi > 0.0 {
            if !(qi > 0.0) {
                return Err(Error::invalid(format!(
                    "model mass is zero in bin {i} where the data has mass"
                )));
            }
            kl += pi * (pi / qi).ln();
        }
    }
    Ok(kl)
}
