//! Outlier removal, histograms, KL divergence and distribution fitting.

mod dist;
mod fit;
mod histogram;
mod outliers;
mod simplex;

pub use dist::{
    gev_cdf, normal_cdf, normal_quantile, DistParams, ExponentialParams, Family, GevParams,
    NormalParams, GEV_MIN_ABS_SHAPE,
};
pub use fit::{best_fit, fit_exponential, fit_gev, fit_normal, model_mass, BestFit, DistFit, KL_SMOOTHING};
pub use histogram::{build_histogram, kl_divergence, Histogram, DEFAULT_BINS};
pub use outliers::{quantile_linear, remove_extreme_outliers, remove_outliers, CleanSample, EXTREME_FENCE};
pub use simplex::{nelder_mead, SimplexOptions, SimplexResult};
