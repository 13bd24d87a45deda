//! Domain types shared across the crate: branch records, system bases,
//! voltage classes and the seven studied branch parameters.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Canonical nominal transmission voltages in kV, ascending.
pub const CANONICAL_KV: [u16; 8] = [69, 115, 138, 161, 230, 345, 500, 735];

/// Default relative tolerance when snapping a raw kV value to a canonical level.
pub const DEFAULT_KV_TOLERANCE: f64 = 0.05;

/// Voltage and power base of a per-unit system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseQuantities {
    /// kV
    pub v_base: f64,
    /// MVA
    pub s_base: f64,
}

impl BaseQuantities {
    pub fn new(v_base: f64, s_base: f64) -> Result<Self> {
        let base = BaseQuantities { v_base, s_base };
        base.validate()?;
        Ok(base)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v_base.is_finite() && self.v_base > 0.0) {
            return Err(Error::invalid(format!(
                "voltage base must be positive and finite, got {}",
                self.v_base
            )));
        }
        if !(self.s_base.is_finite() && self.s_base > 0.0) {
            return Err(Error::invalid(format!(
                "power base must be positive and finite, got {}",
                self.s_base
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchKind {
    Line,
    Transformer,
}

impl BranchKind {
    /// Token used in branch CSV files.
    pub fn csv_token(self) -> &'static str {
        match self {
            BranchKind::Line => "line",
            BranchKind::Transformer => "xfmr",
        }
    }
}

impl FromStr for BranchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "line" => Ok(BranchKind::Line),
            "xfmr" => Ok(BranchKind::Transformer),
            other => Err(Error::invalid(format!(
                "unknown branch kind `{other}` (expected `line` or `xfmr`)"
            ))),
        }
    }
}

/// A geographic location in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        let p = GeoPoint { lat, lon };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(-90.0..=90.0).contains(&self.lat) {
            return Err(Error::invalid(format!(
                "latitude {} outside [-90, 90]",
                self.lat
            )));
        }
        if !(-180.0..=180.0).contains(&self.lon) {
            return Err(Error::invalid(format!(
                "longitude {} outside [-180, 180]",
                self.lon
            )));
        }
        Ok(())
    }
}

/// One transmission line or two-winding transformer.
///
/// `x_pu` and `r_pu` are expressed on `system_base`. For transformers the
/// voltage base is the high-side nominal voltage.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchRecord {
    pub id: String,
    pub kind: BranchKind,
    pub from_bus: Option<String>,
    pub to_bus: Option<String>,
    pub x_pu: f64,
    pub r_pu: f64,
    pub system_base: BaseQuantities,
    pub rating_mva: Option<f64>,
    pub kv_high: f64,
    pub kv_low: f64,
    pub length_km: Option<f64>,
    /// Set when `length_km` was computed from `endpoints_geo` rather than read.
    pub length_estimated: bool,
    pub endpoints_geo: Option<(GeoPoint, GeoPoint)>,
}

impl BranchRecord {
    /// Checks the record-level invariants. Parsers call this before
    /// accepting a row.
    pub fn validate(&self) -> Result<()> {
        self.system_base.validate()?;
        if !self.x_pu.is_finite() {
            return Err(Error::invalid(format!("{}: x_pu is not finite", self.id)));
        }
        if !(self.r_pu.is_finite() && self.r_pu >= 0.0) {
            return Err(Error::invalid(format!(
                "{}: r_pu must be finite and non-negative, got {}",
                self.id, self.r_pu
            )));
        }
        if !(self.kv_high.is_finite() && self.kv_high > 0.0) {
            return Err(Error::invalid(format!(
                "{}: kv_high must be positive, got {}",
                self.id, self.kv_high
            )));
        }
        if !(self.kv_low.is_finite() && self.kv_low > 0.0) {
            return Err(Error::invalid(format!(
                "{}: kv_low must be positive, got {}",
                self.id, self.kv_low
            )));
        }
        if let Some(rating) = self.rating_mva {
            if !(rating.is_finite() && rating > 0.0) {
                return Err(Error::invalid(format!(
                    "{}: rating must be positive, got {rating}",
                    self.id
                )));
            }
        }
        match self.kind {
            BranchKind::Line => {
                if self.kv_high != self.kv_low {
                    return Err(Error::invalid(format!(
                        "{}: line with differing terminal voltages {} / {}",
                        self.id, self.kv_high, self.kv_low
                    )));
                }
                if let Some(len) = self.length_km {
                    if !(len.is_finite() && len > 0.0) {
                        return Err(Error::invalid(format!(
                            "{}: length must be positive, got {len}",
                            self.id
                        )));
                    }
                }
            }
            BranchKind::Transformer => {
                if self.length_km.is_some() {
                    return Err(Error::invalid(format!(
                        "{}: transformers carry no length",
                        self.id
                    )));
                }
            }
        }
        if let Some((a, b)) = &self.endpoints_geo {
            a.validate()?;
            b.validate()?;
        }
        Ok(())
    }

    /// Voltage class of the branch: the high side for transformers.
    pub fn voltage_class(&self, tolerance_frac: f64) -> Result<VoltageClass> {
        classify_voltage(self.kv_high, tolerance_frac)
    }
}

/// Nominal voltage level a branch is binned into.
#[derive(Debug, Clone, Copy)]
pub enum VoltageClass {
    /// One of [`CANONICAL_KV`].
    Canonical(u16),
    Other(f64),
}

impl VoltageClass {
    pub fn kv(self) -> f64 {
        match self {
            VoltageClass::Canonical(kv) => f64::from(kv),
            VoltageClass::Other(kv) => kv,
        }
    }

    pub fn is_canonical(self) -> bool {
        matches!(self, VoltageClass::Canonical(_))
    }

    /// Exact lookup: canonical only when `kv` is literally a canonical level.
    pub fn from_kv_exact(kv: f64) -> Self {
        CANONICAL_KV
            .iter()
            .find(|&&level| f64::from(level) == kv)
            .map(|&level| VoltageClass::Canonical(level))
            .unwrap_or(VoltageClass::Other(kv))
    }
}

impl PartialEq for VoltageClass {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for VoltageClass {}

impl PartialOrd for VoltageClass {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for VoltageClass {
    fn cmp(&self, other: &Self) -> Ordering {
        self.kv()
            .total_cmp(&other.kv())
            .then_with(|| self.is_canonical().cmp(&other.is_canonical()))
    }
}

impl fmt::Display for VoltageClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VoltageClass::Canonical(kv) => write!(f, "{kv} kV"),
            VoltageClass::Other(kv) => write!(f, "other ({kv} kV)"),
        }
    }
}

impl Serialize for VoltageClass {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        crate::decimal::serialize(&self.kv(), serializer)
    }
}

impl<'de> Deserialize<'de> for VoltageClass {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let kv = crate::decimal::deserialize(deserializer)?;
        Ok(VoltageClass::from_kv_exact(kv))
    }
}

/// Snaps a raw nominal voltage to the nearest canonical level when it lies
/// within `tolerance_frac` of it (relative to the level).
pub fn classify_voltage(kv: f64, tolerance_frac: f64) -> Result<VoltageClass> {
    if !(kv.is_finite() && kv > 0.0) {
        return Err(Error::invalid(format!("voltage must be positive, got {kv}")));
    }
    if !(0.0..0.5).contains(&tolerance_frac) {
        return Err(Error::invalid(format!(
            "voltage tolerance must lie in [0, 0.5), got {tolerance_frac}"
        )));
    }
    let nearest = CANONICAL_KV
        .iter()
        .map(|&level| (level, (kv - f64::from(level)).abs() / f64::from(level)))
        .min_by(|a, b| a.1.total_cmp(&b.1));
    match nearest {
        Some((level, rel)) if rel <= tolerance_frac => Ok(VoltageClass::Canonical(level)),
        _ => Ok(VoltageClass::Other(kv)),
    }
}

/// The seven branch parameters studied per voltage class, in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParameterKind {
    /// Transformer reactance in p.u. of its own MVA rating.
    XfmrXpuOwnBase,
    /// Line series reactance per km.
    LineXOhmPerKm,
    XfmrCapacityMva,
    XfmrXOverR,
    LineLengthKm,
    LineXOverR,
    LineCapacityMva,
}

impl ParameterKind {
    pub const ALL: [ParameterKind; 7] = [
        ParameterKind::XfmrXpuOwnBase,
        ParameterKind::LineXOhmPerKm,
        ParameterKind::XfmrCapacityMva,
        ParameterKind::XfmrXOverR,
        ParameterKind::LineLengthKm,
        ParameterKind::LineXOverR,
        ParameterKind::LineCapacityMva,
    ];

    pub fn branch_kind(self) -> BranchKind {
        match self {
            ParameterKind::XfmrXpuOwnBase
            | ParameterKind::XfmrCapacityMva
            | ParameterKind::XfmrXOverR => BranchKind::Transformer,
            ParameterKind::LineXOhmPerKm
            | ParameterKind::LineLengthKm
            | ParameterKind::LineXOverR
            | ParameterKind::LineCapacityMva => BranchKind::Line,
        }
    }

    /// Row label used in the validation table.
    pub fn label(self) -> &'static str {
        match self {
            ParameterKind::XfmrXpuOwnBase => "Transformer X (p.u.)",
            ParameterKind::LineXOhmPerKm => "Line X (Ω/km)",
            ParameterKind::XfmrCapacityMva => "Transformer Capacity (MVA)",
            ParameterKind::XfmrXOverR => "Transformer X/R ratio",
            ParameterKind::LineLengthKm => "Line Length l (km)",
            ParameterKind::LineXOverR => "Line X/R ratio",
            ParameterKind::LineCapacityMva => "Line Capacity (MVA)",
        }
    }

    /// Stable machine key, also accepted by `FromStr`.
    pub fn key(self) -> &'static str {
        match self {
            ParameterKind::XfmrXpuOwnBase => "xfmr_xpu_own_base",
            ParameterKind::LineXOhmPerKm => "line_x_ohm_per_km",
            ParameterKind::XfmrCapacityMva => "xfmr_capacity_mva",
            ParameterKind::XfmrXOverR => "xfmr_x_over_r",
            ParameterKind::LineLengthKm => "line_length_km",
            ParameterKind::LineXOverR => "line_x_over_r",
            ParameterKind::LineCapacityMva => "line_capacity_mva",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            ParameterKind::XfmrXpuOwnBase => "p.u.",
            ParameterKind::LineXOhmPerKm => "Ω/km",
            ParameterKind::XfmrCapacityMva | ParameterKind::LineCapacityMva => "MVA",
            ParameterKind::XfmrXOverR | ParameterKind::LineXOverR => "ratio",
            ParameterKind::LineLengthKm => "km",
        }
    }
}

impl fmt::Display for ParameterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for ParameterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let wanted = s.trim().replace('-', "_").to_ascii_lowercase();
        ParameterKind::ALL
            .into_iter()
            .find(|p| p.key() == wanted)
            .ok_or_else(|| Error::invalid(format!("unknown parameter `{s}`")))
    }
}
