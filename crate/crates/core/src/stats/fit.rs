use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::dist::{DistParams, ExponentialParams, Family, GevParams, NormalParams, GEV_MIN_ABS_SHAPE};
use crate::stats::histogram::{build_histogram, kl_divergence, Histogram};
use crate::stats::simplex::{nelder_mead, SimplexOptions};
use crate::stats::CleanSample;

/// ε in the model-mass smoothing `q ← (q + ε) / (1 + n_bins·ε)`.
pub const KL_SMOOTHING: f64 = 1e-9;

const EULER_GAMMA: f64 = 0.5772;
const GEV_MIN_SAMPLES: usize = 20;
const INFEASIBLE: f64 = 1e15;

/// A fitted distribution with its goodness of fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistFit {
    pub params: DistParams,
    /// Natural-log likelihood of the fitted sample.
    #[serde(with = "crate::decimal")]
    pub log_likelihood: f64,
    /// KL divergence (nats) of the model from the sample histogram;
    /// infinite when the sample has no spread to bin.
    #[serde(with = "crate::decimal")]
    pub kl_to_empirical: f64,
}

impl DistFit {
    pub fn family(&self) -> Family {
        self.params.family()
    }

    fn evaluate(params: DistParams, sample: &CleanSample, n_bins: usize) -> Result<Self> {
        let log_likelihood = params.log_likelihood(&sample.values);
        let kl_to_empirical = match build_histogram(sample, n_bins) {
            Ok(hist) => kl_divergence(&hist, &hist.edges, &model_mass(&hist, &params))?,
            Err(Error::DegenerateSample(_)) | Err(Error::InsufficientData { .. }) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        Ok(DistFit {
            params,
            log_likelihood,
            kl_to_empirical,
        })
    }
}

/// Model probability per histogram bin: CDF differences over the bin edges,
/// renormalized to the histogram's range and smoothed so every bin is
/// strictly positive. When the model puts no representable mass on the
/// range at all, bins are weighted by the density at their centres instead.
pub fn model_mass(hist: &Histogram, params: &DistParams) -> Vec<f64> {
    let cdf: Vec<f64> = hist.edges.iter().map(|&e| params.cdf(e)).collect();
    let mut q: Vec<f64> = cdf.windows(2).map(|w| (w[1] - w[0]).max(0.0)).collect();
    let total: f64 = q.iter().sum();
    if total > 0.0 && total.is_finite() {
        q.iter_mut().for_each(|v| *v /= total);
    } else {
        let logs: Vec<f64> = hist
            .edges
            .windows(2)
            .map(|w| params.log_pdf(0.5 * (w[0] + w[1])))
            .collect();
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        q = if top.is_finite() {
            logs.iter().map(|l| (l - top).exp()).collect()
        } else {
            vec![1.0; logs.len()]
        };
        let total: f64 = q.iter().sum();
        q.iter_mut().for_each(|v| *v /= total);
    }
    let n_bins = q.len() as f64;
    q.into_iter()
        .map(|v| (v + KL_SMOOTHING) / (1.0 + n_bins * KL_SMOOTHING))
        .collect()
}

fn distinct(sample: &CleanSample) -> bool {
    sample.len() >= 2 && sample.max() > sample.min()
}

fn mean_and_mle_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Normal fit by maximum likelihood (σ divides by n).
pub fn fit_normal(sample: &CleanSample, n_bins: usize) -> Result<DistFit> {
    if !distinct(sample) {
        return Err(Error::DegenerateSample(
            "normal fit needs at least two distinct values".into(),
        ));
    }
    let (mu, sigma) = mean_and_mle_sd(&sample.values);
    DistFit::evaluate(DistParams::Normal(NormalParams { mu, sigma }), sample, n_bins)
}

/// Exponential fit on `[0, ∞)`: rate = 1 / mean.
pub fn fit_exponential(sample: &CleanSample, n_bins: usize) -> Result<DistFit> {
    if sample.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if let Some(v) = sample.values.iter().find(|&&v| v < 0.0) {
        return Err(Error::invalid(format!(
            "exponential fit needs non-negative values, found {v}"
        )));
    }
    let mean = sample.mean();
    if !(mean > 0.0) {
        return Err(Error::DegenerateSample("exponential fit needs a positive mean".into()));
    }
    DistFit::evaluate(
        DistParams::Exponential(ExponentialParams { rate: 1.0 / mean }),
        sample,
        n_bins,
    )
}

fn floor_shape(zeta: f64) -> f64 {
    if zeta.abs() < GEV_MIN_ABS_SHAPE {
        if zeta < 0.0 {
            -GEV_MIN_ABS_SHAPE
        } else {
            GEV_MIN_ABS_SHAPE
        }
    } else {
        zeta
    }
}

/// Negative log-likelihood, or a large penalty growing with the amount of
/// support violation.
fn gev_objective(values: &[f64], theta: &[f64]) -> f64 {
    let (zeta, mu, sigma) = (floor_shape(theta[0]), theta[1], theta[2]);
    if !(sigma > 0.0) {
        return INFEASIBLE * (1.0 - sigma);
    }
    let inv = 1.0 / zeta;
    let mut violation = 0.0;
    let mut nll = values.len() as f64 * sigma.ln();
    for &x in values {
        let t = 1.0 + zeta * (x - mu) / sigma;
        if t <= 0.0 {
            violation += 1.0 - t;
            continue;
        }
        nll += (1.0 + inv) * t.ln() + t.powf(-inv);
    }
    if violation > 0.0 {
        INFEASIBLE * (1.0 + violation)
    } else {
        nll
    }
}

fn gev_feasible(values: &[f64], p: &GevParams) -> bool {
    p.sigma > 0.0 && values.iter().all(|&x| p.support_term(x) > 0.0)
}

/// GEV fit by maximum likelihood with a Nelder–Mead search over
/// `(ζ, μ, σ)`, started from Gumbel moment matching.
pub fn fit_gev(sample: &CleanSample, n_bins: usize) -> Result<DistFit> {
    let values = &sample.values;
    if values.len() < GEV_MIN_SAMPLES {
        return Err(Error::InsufficientData {
            needed: GEV_MIN_SAMPLES,
            got: values.len(),
        });
    }
    let (mean, sd) = mean_and_mle_sd(values);
    if !(sd > 0.0) {
        return Err(Error::DegenerateSample("GEV fit needs spread".into()));
    }
    let sigma0 = 6f64.sqrt() * sd / std::f64::consts::PI;
    let mu0 = mean - EULER_GAMMA * sigma0;
    let init = GevParams { zeta: 0.1, mu: mu0, sigma: sigma0 };

    let objective = |theta: &[f64]| gev_objective(values, theta);
    let mut best: Option<(f64, GevParams)> = None;
    let consider = |best: &mut Option<(f64, GevParams)>, theta: &[f64], f: f64| {
        let p = GevParams {
            zeta: floor_shape(theta[0]),
            mu: theta[1],
            sigma: theta[2],
        };
        if f < INFEASIBLE && gev_feasible(values, &p) && best.map_or(true, |(bf, _)| f < bf) {
            *best = Some((f, p));
        }
    };

    let start = [init.zeta, init.mu, init.sigma];
    consider(&mut best, &start, objective(&start));
    let opts = SimplexOptions::default();
    for (round, zeta0) in [0.1, -0.1, 0.3, -0.3, 0.5].into_iter().enumerate() {
        if round >= 2 && best.is_some() {
            break;
        }
        let start = [zeta0, mu0, sigma0];
        let first = nelder_mead(objective, &start, &[0.1, 0.1 * sigma0, 0.1 * sigma0], opts);
        // restart from the optimum to shake off a collapsed simplex
        let steps = [0.02, 0.02 * first.x[2].abs(), 0.02 * first.x[2].abs()];
        let polished = nelder_mead(objective, &first.x, &steps, opts);
        consider(&mut best, &first.x, first.f);
        consider(&mut best, &polished.x, polished.f);
    }

    let (_, params) = best.ok_or_else(|| {
        Error::FitFailed("GEV search found no parameters covering every sample".into())
    })?;
    DistFit::evaluate(DistParams::Gev(params), sample, n_bins)
}

/// Fits of the applicable families, ranked by ascending KL divergence
/// (ties: higher log-likelihood first), plus notes about omitted families.
#[derive(Debug, Clone, PartialEq)]
pub struct BestFit {
    pub ranked: Vec<DistFit>,
    pub warnings: Vec<String>,
}

impl BestFit {
    pub fn best(&self) -> &DistFit {
        &self.ranked[0]
    }

    pub fn of_family(&self, family: Family) -> Option<&DistFit> {
        self.ranked.iter().find(|f| f.family() == family)
    }
}

pub fn best_fit(sample: &CleanSample, families: &[Family], n_bins: usize) -> Result<BestFit> {
    let mut ranked = Vec::new();
    let mut warnings = Vec::new();
    let has_negative = sample.values.iter().any(|&v| v < 0.0);
    let mut wanted: Vec<Family> = families.to_vec();
    wanted.sort();
    wanted.dedup();
    for family in wanted {
        let fit = match family {
            Family::Normal => fit_normal(sample, n_bins),
            Family::Exponential if has_negative => {
                warnings.push("exponential skipped: sample has negative values".into());
                continue;
            }
            Family::Exponential => fit_exponential(sample, n_bins),
            Family::Gev => fit_gev(sample, n_bins),
        };
        match fit {
            Ok(f) => ranked.push(f),
            Err(e) => warnings.push(format!("{family} fit omitted: {e}")),
        }
    }
    if ranked.is_empty() {
        return Err(Error::FitFailed(format!(
            "no applicable distribution family ({})",
            warnings.join("; ")
        )));
    }
    ranked.sort_by(|a, b| {
        a.kl_to_empirical
            .total_cmp(&b.kl_to_empirical)
            .then_with(|| b.log_likelihood.total_cmp(&a.log_likelihood))
    });
    Ok(BestFit { ranked, warnings })
}
