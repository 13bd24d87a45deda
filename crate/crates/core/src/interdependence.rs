//! Per-class means of a parameter and their power-law relation to voltage.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid_model::{ParameterKind, VoltageClass};
use crate::per_unit::ParamValue;
use crate::stats::{remove_outliers, CleanSample, EXTREME_FENCE};

pub use crate::reference::bundled_reference;

pub const DEFAULT_MIN_COUNT: usize = 10;
pub const DEFAULT_B_THRESHOLD: f64 = 0.15;
pub const DEFAULT_R2_THRESHOLD: f64 = 0.5;

const GN_MAX_ITERATIONS: usize = 200;
const GN_REL_TOLERANCE: f64 = 1e-10;
const GN_MAX_HALVINGS: usize = 60;

/// Mean of one voltage class after outlier removal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMean {
    pub class: VoltageClass,
    #[serde(with = "crate::decimal")]
    pub mean: f64,
    pub n: usize,
}

impl ClassMean {
    pub fn kv(&self) -> f64 {
        self.class.kv()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMeanSeries {
    pub parameter: ParameterKind,
    /// Ascending by voltage.
    pub points: Vec<ClassMean>,
}

/// Raw values grouped by canonical voltage class; other classes are dropped.
pub fn group_by_class(values: &[ParamValue]) -> BTreeMap<VoltageClass, Vec<f64>> {
    let mut groups: BTreeMap<VoltageClass, Vec<f64>> = BTreeMap::new();
    for v in values.iter().filter(|v| v.voltage_class.is_canonical()) {
        groups.entry(v.voltage_class).or_default().push(v.value);
    }
    groups
}

/// Removes outliers beyond `fence` IQRs. Groups too small for quartiles
/// are kept whole.
pub fn clean_group(values: &[f64], fence: f64) -> Result<CleanSample> {
    match remove_outliers(values, fence) {
        Err(Error::InsufficientData { .. }) => CleanSample::from_values(values.to_vec()),
        other => other,
    }
}

/// [`class_means_with_fence`] with the 3·IQR fences.
pub fn class_means(values: &[ParamValue], min_count: usize) -> Result<ClassMeanSeries> {
    class_means_with_fence(values, min_count, EXTREME_FENCE)
}

/// Per-class means of cleaned samples, for canonical classes keeping at
/// least `min_count` values after cleaning.
pub fn class_means_with_fence(
    values: &[ParamValue],
    min_count: usize,
    fence: f64,
) -> Result<ClassMeanSeries> {
    if min_count == 0 {
        return Err(Error::invalid("min_count must be at least 1"));
    }
    let parameter = values
        .first()
        .map(|v| v.parameter)
        .ok_or(Error::InsufficientData { needed: min_count, got: 0 })?;
    if let Some(other) = values.iter().find(|v| v.parameter != parameter) {
        return Err(Error::invalid(format!(
            "values mix {parameter} and {}",
            other.parameter
        )));
    }
    let mut points = Vec::new();
    let mut largest = 0;
    for (class, group) in group_by_class(values) {
        let sample = clean_group(&group, fence)?;
        largest = largest.max(sample.len());
        if sample.len() >= min_count {
            points.push(ClassMean {
                class,
                mean: sample.mean(),
                n: sample.len(),
            });
        }
    }
    if points.is_empty() {
        return Err(Error::InsufficientData {
            needed: min_count,
            got: largest,
        });
    }
    Ok(ClassMeanSeries { parameter, points })
}

/// `mean(V) = a·V^b` with its fit quality in the parameter's own unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    #[serde(with = "crate::decimal")]
    pub a: f64,
    #[serde(with = "crate::decimal")]
    pub b: f64,
    #[serde(with = "crate::decimal")]
    pub rmse: f64,
    #[serde(with = "crate::decimal")]
    pub r2: f64,
}

impl PowerFit {
    pub fn predict(&self, kv: f64) -> f64 {
        self.a * kv.powf(self.b)
    }
}

fn sse(points: &[(f64, f64)], a: f64, b: f64) -> f64 {
    points.iter().map(|&(x, y)| (y - a * x.powf(b)).powi(2)).sum()
}

fn solve2(m: [[f64; 2]; 2], v: [f64; 2]) -> Option<[f64; 2]> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let scale = (m[0][0] * m[1][1]).abs().max((m[0][1] * m[1][0]).abs());
    if !(det.abs() > 1e-14 * scale) || !det.is_finite() {
        return None;
    }
    Some([
        (v[0] * m[1][1] - m[0][1] * v[1]) / det,
        (m[0][0] * v[1] - m[1][0] * v[0]) / det,
    ])
}

/// Least-squares fit of `a·V^b` to the class means in the original space:
/// log-log regression start, then damped Gauss–Newton.
pub fn fit_power(series: &ClassMeanSeries) -> Result<PowerFit> {
    let points: Vec<(f64, f64)> = series.points.iter().map(|p| (p.kv(), p.mean)).collect();
    fit_power_points(&points)
}

/// [`fit_power`] on bare `(kv, mean)` pairs.
pub fn fit_power_points(points: &[(f64, f64)]) -> Result<PowerFit> {
    if points.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: points.len(),
        });
    }
    for &(x, y) in points {
        if !(x > 0.0 && x.is_finite()) {
            return Err(Error::invalid(format!("voltage must be positive, got {x}")));
        }
        if !(y > 0.0 && y.is_finite()) {
            return Err(Error::invalid(format!(
                "power model needs positive means, got {y}"
            )));
        }
    }

    let n = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|&(x, y)| (x.ln(), y.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    if !(sxx > 1e-12 * n) {
        return Err(Error::FitFailed("all points share one voltage".into()));
    }
    // Iterate on c·(V/V0)^b with V0 the geometric mean voltage; a = c·V0^−b.
    let v0 = mx.exp();
    let scaled: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x / v0, y)).collect();
    let mut b = sxy / sxx;
    let mut c = my.exp();
    let mut current = sse(&scaled, c, b);
    let initial = current;

    for _ in 0..GN_MAX_ITERATIONS {
        let mut jtj = [[0.0; 2]; 2];
        let mut jtr = [0.0; 2];
        for &(x, y) in &scaled {
            let xb = x.powf(b);
            let r = y - c * xb;
            let j = [xb, c * xb * x.ln()];
            for i in 0..2 {
                jtr[i] += j[i] * r;
                for k in 0..2 {
                    jtj[i][k] += j[i] * j[k];
                }
            }
        }
        let Some(delta) = solve2(jtj, jtr) else {
            return Err(Error::FitFailed("singular normal equations".into()));
        };
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..GN_MAX_HALVINGS {
            let (nc, nb) = (c + t * delta[0], b + t * delta[1]);
            if nc > 0.0 {
                let s = sse(&scaled, nc, nb);
                // tolerate rounding-level noise in the SSE near the optimum
                if s <= initial && s <= current * (1.0 + 8.0 * f64::EPSILON) {
                    accepted = Some((nc, nb, s));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((nc, nb, s)) = accepted else { break };
        let change = ((nc - c) / c).abs().max((nb - b).abs() / b.abs().max(1.0));
        c = nc;
        b = nb;
        current = s;
        if change < GN_REL_TOLERANCE {
            break;
        }
    }
    let a = c * v0.powf(-b);
    let current = sse(points, a, b);

    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sst: f64 = points.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let r2 = if sst <= 1e-24 * mean_y * mean_y * n {
        1.0
    } else {
        (1.0 - current / sst).min(1.0)
    };
    Ok(PowerFit {
        a,
        b,
        rmse: (current / n).sqrt(),
        r2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DependenceClass {
    VoltageDependent,
    VoltageIndependent,
}

/// Independent when the exponent is small or the power law explains little
/// of the variation across classes.
pub fn classify_dependence(fit: &PowerFit, b_threshold: f64, r2_threshold: f64) -> DependenceClass {
    if fit.b.abs() < b_threshold || fit.r2 < r2_threshold {
        DependenceClass::VoltageIndependent
    } else {
        DependenceClass::VoltageDependent
    }
}
