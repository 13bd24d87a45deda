//! Per-unit base conversion and the per-branch parameter derivations.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::grid_model::{BaseQuantities, BranchKind, BranchRecord, ParameterKind, VoltageClass};

/// Why a record contributed no value for a parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    WrongKind,
    MissingRating,
    MissingLength,
    ZeroResistance,
    NegativeReactance,
    InvalidValue,
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SkipReason::WrongKind => "wrong_kind",
            SkipReason::MissingRating => "missing_rating",
            SkipReason::MissingLength => "missing_length",
            SkipReason::ZeroResistance => "zero_resistance",
            SkipReason::NegativeReactance => "negative_reactance",
            SkipReason::InvalidValue => "invalid_value",
        })
    }
}

/// Failure of a single derivation: either the record is simply not
/// eligible (`Skip`) or its data is unusable (`Invalid`).
#[derive(Debug, Clone, PartialEq)]
pub enum DeriveError {
    Skip(SkipReason),
    Invalid(String),
}

impl From<DeriveError> for Error {
    fn from(e: DeriveError) -> Self {
        match e {
            DeriveError::Skip(reason) => Error::InvalidInput(format!("record skipped: {reason}")),
            DeriveError::Invalid(msg) => Error::InvalidInput(msg),
        }
    }
}

type Derived = std::result::Result<f64, DeriveError>;

/// One derived parameter value of one branch.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamValue {
    pub branch_id: String,
    pub parameter: ParameterKind,
    pub value: f64,
    pub voltage_class: VoltageClass,
}

/// Per-reason counts of records that produced no value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SkipReport {
    pub counts: BTreeMap<SkipReason, usize>,
    /// Values computed from lengths that were estimated from geography.
    pub estimated_lengths: usize,
}

impl SkipReport {
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    fn bump(&mut self, reason: SkipReason) {
        *self.counts.entry(reason).or_default() += 1;
    }
}

/// Converts a per-unit impedance between two base systems:
/// `z · (V_given / V_new)² · (S_new / S_given)`.
pub fn convert_pu(z_given: f64, given: BaseQuantities, new: BaseQuantities) -> crate::Result<f64> {
    given.validate()?;
    new.validate()?;
    let v_ratio = given.v_base / new.v_base;
    Ok(z_given * v_ratio * v_ratio * (new.s_base / given.s_base))
}

fn require_kind(rec: &BranchRecord, kind: BranchKind) -> Result<(), DeriveError> {
    if rec.kind == kind {
        Ok(())
    } else {
        Err(DeriveError::Skip(SkipReason::WrongKind))
    }
}

fn positive_rating(rec: &BranchRecord) -> Derived {
    match rec.rating_mva {
        None => Err(DeriveError::Skip(SkipReason::MissingRating)),
        Some(r) if r.is_finite() && r > 0.0 => Ok(r),
        Some(r) => Err(DeriveError::Invalid(format!(
            "{}: rating must be positive, got {r}",
            rec.id
        ))),
    }
}

/// Transformer reactance referred to the transformer's own MVA rating.
/// Terminal voltages are the voltage bases on both sides, so only the power
/// base changes.
pub fn to_own_base_x(rec: &BranchRecord) -> Derived {
    require_kind(rec, BranchKind::Transformer)?;
    let rating = positive_rating(rec)?;
    Ok(rec.x_pu * (rating / rec.system_base.s_base))
}

/// Inverse of [`to_own_base_x`]: system-base reactance for an own-base value.
pub fn from_own_base_x(x_own: f64, rating_mva: f64, system_base: BaseQuantities) -> f64 {
    x_own * (system_base.s_base / rating_mva)
}

/// Line reactance in Ω/km: `x_pu · V_B² / (l · S_B)`.
pub fn distributed_reactance(rec: &BranchRecord) -> Derived {
    require_kind(rec, BranchKind::Line)?;
    let length = match rec.length_km {
        Some(l) if l > 0.0 => l,
        _ => return Err(DeriveError::Skip(SkipReason::MissingLength)),
    };
    let BaseQuantities { v_base, s_base } = rec.system_base;
    Ok(rec.x_pu * v_base * v_base / (length * s_base))
}

/// Per-unit reactance of a line with the given Ω/km and length.
pub fn x_pu_from_distributed(x_ohm_per_km: f64, length_km: f64, base: BaseQuantities) -> f64 {
    x_ohm_per_km * length_km * base.s_base / (base.v_base * base.v_base)
}

/// Reactance to resistance ratio. Both are on the same base, so no
/// conversion is needed.
pub fn x_over_r(rec: &BranchRecord) -> Derived {
    if rec.r_pu < 0.0 {
        return Err(DeriveError::Invalid(format!(
            "{}: negative resistance {}",
            rec.id, rec.r_pu
        )));
    }
    if rec.r_pu == 0.0 {
        return Err(DeriveError::Skip(SkipReason::ZeroResistance));
    }
    Ok(rec.x_pu / rec.r_pu)
}

/// Value of `parameter` for one record.
pub fn derive_parameter(rec: &BranchRecord, parameter: ParameterKind) -> Derived {
    require_kind(rec, parameter.branch_kind())?;
    if rec.x_pu < 0.0 {
        return Err(DeriveError::Skip(SkipReason::NegativeReactance));
    }
    let value = match parameter {
        ParameterKind::XfmrXpuOwnBase => to_own_base_x(rec)?,
        ParameterKind::LineXOhmPerKm => distributed_reactance(rec)?,
        ParameterKind::XfmrCapacityMva | ParameterKind::LineCapacityMva => positive_rating(rec)?,
        ParameterKind::XfmrXOverR | ParameterKind::LineXOverR => x_over_r(rec)?,
        ParameterKind::LineLengthKm => rec
            .length_km
            .ok_or(DeriveError::Skip(SkipReason::MissingLength))?,
    };
    if !value.is_finite() {
        return Err(DeriveError::Invalid(format!("{}: non-finite {parameter}", rec.id)));
    }
    Ok(value)
}

/// Derives `parameter` for every eligible record and tags it with the
/// record's voltage class.
pub fn extract_parameter(
    records: &[BranchRecord],
    parameter: ParameterKind,
    kv_tolerance: f64,
) -> (Vec<ParamValue>, SkipReport) {
    let mut values = Vec::new();
    let mut skips = SkipReport::default();
    for rec in records {
        let derived = derive_parameter(rec, parameter);
        let class = rec.voltage_class(kv_tolerance);
        match (derived, class) {
            (Ok(value), Ok(voltage_class)) => {
                if rec.length_estimated
                    && matches!(parameter, ParameterKind::LineLengthKm | ParameterKind::LineXOhmPerKm)
                {
                    skips.estimated_lengths += 1;
                }
                values.push(ParamValue {
                    branch_id: rec.id.clone(),
                    parameter,
                    value,
                    voltage_class,
                });
            }
            (Err(DeriveError::Skip(reason)), _) => skips.bump(reason),
            (Err(DeriveError::Invalid(_)), _) | (_, Err(_)) => skips.bump(SkipReason::InvalidValue),
        }
    }
    (values, skips)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(v: f64, s: f64) -> BaseQuantities {
        BaseQuantities::new(v, s).unwrap()
    }

    fn xfmr(x: f64, rating: Option<f64>) -> BranchRecord {
        BranchRecord {
            id: "T".into(),
            kind: BranchKind::Transformer,
            from_bus: None,
            to_bus: None,
            x_pu: x,
            r_pu: 0.002,
            system_base: base(230.0, 100.0),
            rating_mva: rating,
            kv_high: 230.0,
            kv_low: 115.0,
            length_km: None,
            length_estimated: false,
            endpoints_geo: None,
        }
    }

    fn line(x: f64, kv: f64, len: Option<f64>) -> BranchRecord {
        BranchRecord {
            id: "L".into(),
            kind: BranchKind::Line,
            from_bus: None,
            to_bus: None,
            x_pu: x,
            r_pu: 0.001,
            system_base: base(kv, 100.0),
            rating_mva: Some(200.0),
            kv_high: kv,
            kv_low: kv,
            length_km: len,
            length_estimated: false,
            endpoints_geo: None,
        }
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn convert_examples() {
        assert_eq!(convert_pu(0.10, base(230.0, 100.0), base(230.0, 100.0)).unwrap(), 0.10);
        assert_eq!(convert_pu(0.10, base(230.0, 100.0), base(230.0, 200.0)).unwrap(), 0.20);
        let z = convert_pu(0.05, base(138.0, 100.0), base(115.0, 100.0)).unwrap();
        assert!(close(z, 0.072, 1e-15), "{z}");
        assert!(convert_pu(0.1, base(1.0, 1.0), BaseQuantities { v_base: 0.0, s_base: 1.0 }).is_err());
    }

    #[test]
    fn own_base_examples() {
        assert_eq!(to_own_base_x(&xfmr(0.05, Some(100.0))).unwrap(), 0.05);
        assert_eq!(to_own_base_x(&xfmr(0.05, Some(200.0))).unwrap(), 0.10);
        assert_eq!(to_own_base_x(&xfmr(0.20, Some(50.0))).unwrap(), 0.10);
        assert_eq!(
            to_own_base_x(&xfmr(0.05, None)),
            Err(DeriveError::Skip(SkipReason::MissingRating))
        );
        assert!(matches!(
            to_own_base_x(&xfmr(0.05, Some(-1.0))),
            Err(DeriveError::Invalid(_))
        ));
    }

    #[test]
    fn distributed_examples() {
        let v = distributed_reactance(&line(0.01, 230.0, Some(10.0))).unwrap();
        assert!(close(v, 0.529, 1e-12), "{v}");
        assert_eq!(distributed_reactance(&line(0.0, 230.0, Some(10.0))).unwrap(), 0.0);
        let v = distributed_reactance(&line(0.02, 115.0, Some(26.45))).unwrap();
        assert!(close(v, 0.1, 1e-12), "{v}");
        assert_eq!(
            distributed_reactance(&line(0.02, 115.0, None)),
            Err(DeriveError::Skip(SkipReason::MissingLength))
        );
    }

    #[test]
    fn x_over_r_examples() {
        let mut rec = xfmr(0.05, None);
        rec.r_pu = 0.05;
        assert_eq!(x_over_r(&rec).unwrap(), 1.0);
        rec.x_pu = 0.10;
        rec.r_pu = 0.004;
        assert!(close(x_over_r(&rec).unwrap(), 25.0, 1e-12));
        rec.r_pu = 0.0;
        assert_eq!(x_over_r(&rec), Err(DeriveError::Skip(SkipReason::ZeroResistance)));
        rec.r_pu = -0.1;
        assert!(matches!(x_over_r(&rec), Err(DeriveError::Invalid(_))));
    }

    #[test]
    fn extract_examples() {
        let xfmrs: Vec<_> = [100.0, 200.0, 300.0]
            .iter()
            .map(|&r| xfmr(0.05, Some(r)))
            .collect();
        let (vals, skips) = extract_parameter(&xfmrs, ParameterKind::XfmrCapacityMva, 0.05);
        assert_eq!(vals.iter().map(|v| v.value).collect::<Vec<_>>(), vec![100.0, 200.0, 300.0]);
        assert_eq!(skips.total(), 0);

        let lines = vec![line(0.01, 230.0, Some(10.0)), line(0.01, 230.0, None)];
        let (vals, skips) = extract_parameter(&lines, ParameterKind::LineLengthKm, 0.05);
        assert_eq!(vals.len(), 1);
        assert_eq!(skips.counts[&SkipReason::MissingLength], 1);

        let mixed: Vec<_> = xfmrs.iter().cloned().chain(lines).collect();
        let (vals, skips) = extract_parameter(&mixed, ParameterKind::XfmrXpuOwnBase, 0.05);
        assert_eq!(vals.len(), 3);
        assert!(vals.iter().all(|v| v.voltage_class == VoltageClass::Canonical(230)));
        assert_eq!(skips.counts[&SkipReason::WrongKind], 2);
    }

    #[test]
    fn negative_reactance_excluded_everywhere() {
        let rec = xfmr(-0.05, Some(100.0));
        for p in [ParameterKind::XfmrXpuOwnBase, ParameterKind::XfmrCapacityMva, ParameterKind::XfmrXOverR] {
            let (vals, skips) = extract_parameter(std::slice::from_ref(&rec), p, 0.05);
            assert!(vals.is_empty());
            assert_eq!(skips.counts[&SkipReason::NegativeReactance], 1);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn bases() -> impl Strategy<Value = BaseQuantities> {
            (1.0f64..1000.0, 1.0f64..5000.0).prop_map(|(v, s)| BaseQuantities { v_base: v, s_base: s })
        }

        proptest! {
            #[test]
            fn round_trip(z in -10.0f64..10.0, a in bases(), b in bases()) {
                let back = convert_pu(convert_pu(z, a, b).unwrap(), b, a).unwrap();
                prop_assert!((back - z).abs() <= 1e-12 * z.abs().max(f64::MIN_POSITIVE));
            }

            #[test]
            fn equal_voltage_is_power_ratio(z in -10.0f64..10.0, v in 1.0f64..1000.0, s1 in 1.0f64..5000.0, s2 in 1.0f64..5000.0) {
                let got = convert_pu(z, BaseQuantities { v_base: v, s_base: s1 }, BaseQuantities { v_base: v, s_base: s2 }).unwrap();
                prop_assert_eq!(got, z * (s2 / s1));
            }

            #[test]
            fn x_over_r_is_base_invariant(x in 0.001f64..1.0, r in 0.0001f64..0.5, a in bases(), b in bases()) {
                let mut rec = xfmr(x, Some(100.0));
                rec.r_pu = r;
                rec.system_base = a;
                let before = x_over_r(&rec).unwrap();
                rec.x_pu = convert_pu(x, a, b).unwrap();
                rec.r_pu = convert_pu(r, a, b).unwrap();
                let after = x_over_r(&rec).unwrap();
                prop_assert!((before - after).abs() <= 1e-12 * before);
            }

            #[test]
            fn distributed_scales_inversely_with_length(x in 0.0001f64..1.0, kv in 50.0f64..800.0, l in 0.1f64..500.0) {
                let one = distributed_reactance(&line(x, kv, Some(l))).unwrap();
                let two = distributed_reactance(&line(x, kv, Some(2.0 * l))).unwrap();
                prop_assert!((one - 2.0 * two).abs() <= 1e-12 * one);
            }

            #[test]
            fn own_base_inverse(x in 0.0001f64..1.0, rating in 1.0f64..3000.0) {
                let rec = xfmr(x, Some(rating));
                let own = to_own_base_x(&rec).unwrap();
                let back = from_own_base_x(own, rating, rec.system_base);
                prop_assert!((back - x).abs() <= 1e-12 * x);
            }
        }
    }
}
