//! Statistics of transmission branch parameters per voltage class.
//!
//! The crate reads grid cases, derives seven branch parameters (transformer
//! own-base reactance, line reactance per km, capacities, X/R ratios and
//! line length), fits candidate distributions ranked by KL divergence,
//! relates class means to nominal voltage with a power law `a·V^b`, and
//! validates or tunes a case against reference statistics.

pub mod bundle;
pub mod cli;
pub mod decimal;
pub mod error;
pub mod grid_model;
pub mod ingest;
pub mod interdependence;
pub mod per_unit;
pub mod reference;
pub mod rng;
pub mod stats;
pub mod synthesis;
pub mod validate;

pub use error::{Error, Result};
