//! Seeded sampling and reassignment of out-of-scope branch parameters.
//!
//! All sampling is by inverse CDF from one [`SeededRng`] stream per
//! (parameter, voltage class), so a plan depends only on the records, the
//! reference, the failure list and the seed. Tuned values are drawn
//! independently of the values they replace; the original rank order of a
//! class (large units staying large) is not preserved.

use std::collections::BTreeMap;

use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::grid_model::{BaseQuantities, BranchKind, BranchRecord, ParameterKind, VoltageClass};
use crate::per_unit::{derive_parameter, from_own_base_x, x_pu_from_distributed};
use crate::reference::ReferenceStats;
pub use crate::rng::SeededRng;
use crate::stats::{DistParams, ExponentialParams, GevParams, NormalParams};

/// Draws per tuned value before giving up on the physical bounds.
pub const MAX_RESAMPLE_ATTEMPTS: usize = 100;

pub fn sample_normal(params: NormalParams, rng: &mut SeededRng, n: usize) -> Vec<f64> {
    sample(&DistParams::Normal(params), rng, n)
}

/// `x = −ln(1 − u) / rate`.
pub fn sample_exponential(params: ExponentialParams, rng: &mut SeededRng, n: usize) -> Vec<f64> {
    sample(&DistParams::Exponential(params), rng, n)
}

/// `x = μ + σ·((−ln u)^(−ζ) − 1) / ζ`.
pub fn sample_gev(params: GevParams, rng: &mut SeededRng, n: usize) -> Vec<f64> {
    sample(&DistParams::Gev(params), rng, n)
}

pub fn sample(params: &DistParams, rng: &mut SeededRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| params.quantile(rng.next_open01())).collect()
}

/// Moves a distribution so its analytic mean is `target`, keeping its shape:
/// a Normal is translated, an Exponential gets rate `1/target`, a GEV keeps
/// `ζ` and `σ` and gets `μ = target − σ·(Γ(1−ζ) − 1)/ζ`.
pub fn pin_mean(params: &DistParams, target: f64) -> Result<DistParams> {
    if !target.is_finite() {
        return Err(Error::invalid(format!("target mean must be finite, got {target}")));
    }
    match *params {
        DistParams::Normal(p) => Ok(DistParams::Normal(NormalParams { mu: target, ..p })),
        DistParams::Exponential(_) => {
            if target <= 0.0 {
                return Err(Error::invalid(format!(
                    "exponential mean must be positive, got {target}"
                )));
            }
            Ok(DistParams::Exponential(ExponentialParams { rate: 1.0 / target }))
        }
        DistParams::Gev(p) => {
            if p.zeta >= 1.0 {
                return Err(Error::NoFiniteMean { shape: p.zeta });
            }
            let offset = p.sigma * (gamma(1.0 - p.zeta) - 1.0) / p.zeta;
            Ok(DistParams::Gev(GevParams { mu: target - offset, ..p }))
        }
    }
}

/// One reassigned value.
#[derive(Debug, Clone, PartialEq)]
pub struct TuningEntry {
    pub branch_id: String,
    pub parameter: ParameterKind,
    pub old: f64,
    pub new: f64,
    pub voltage_class: VoltageClass,
    /// The distribution the new value was drawn from.
    pub source: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TuningPlan {
    pub entries: Vec<TuningEntry>,
}

impl TuningPlan {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// `branch_id,parameter,old,new,class_kv`, numbers in shortest
    /// round-trip form.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["branch_id", "parameter", "old", "new", "class_kv"])
            .expect("in-memory write");
        for e in &self.entries {
            w.write_record([
                e.branch_id.as_str(),
                e.parameter.key(),
                &crate::decimal::format(e.old),
                &crate::decimal::format(e.new),
                &crate::decimal::format(e.voltage_class.kv()),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }
}

fn in_bounds(value: f64, range: Option<(f64, f64)>) -> bool {
    value.is_finite() && value > 0.0 && range.map_or(true, |(lo, hi)| lo < value && value <= hi)
}

fn stream_key(parameter: ParameterKind, class: VoltageClass) -> u64 {
    let ordinal = ParameterKind::ALL.iter().position(|&p| p == parameter).unwrap() as u64;
    (ordinal << 56) ^ class.kv().to_bits()
}

fn check_unique_ids(records: &[BranchRecord]) -> Result<BTreeMap<&str, usize>> {
    let mut index = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        if index.insert(r.id.as_str(), i).is_some() {
            return Err(Error::invalid(format!("duplicate branch id `{}`", r.id)));
        }
    }
    Ok(index)
}

/// Draws replacement values for every branch in each failing
/// (parameter, class). Records are left untouched; see [`apply_plan`].
pub fn tune_case(
    records: &[BranchRecord],
    reference: &ReferenceStats,
    failures: &[(ParameterKind, VoltageClass)],
    rng: &SeededRng,
    kv_tolerance: f64,
) -> Result<TuningPlan> {
    check_unique_ids(records)?;
    let mut seen = Vec::new();
    let mut plan = TuningPlan::default();
    for &(parameter, class) in failures {
        if seen.contains(&(parameter, class)) {
            continue;
        }
        seen.push((parameter, class));
        let entry = reference.get(parameter).ok_or_else(|| Error::CannotTune {
            parameter,
            reason: "missing from the reference".into(),
        })?;
        let dist = entry.tuning_distribution(class)?;
        let range = entry.independent_range;
        let mut stream = rng.split(stream_key(parameter, class));
        for rec in records {
            let Ok(old) = derive_parameter(rec, parameter) else { continue };
            if rec.voltage_class(kv_tolerance).ok() != Some(class) {
                continue;
            }
            let new = (0..MAX_RESAMPLE_ATTEMPTS)
                .map(|_| dist.quantile(stream.next_open01()))
                .find(|&v| in_bounds(v, range))
                .ok_or(Error::ResampleExhausted {
                    parameter,
                    attempts: MAX_RESAMPLE_ATTEMPTS,
                })?;
            plan.entries.push(TuningEntry {
                branch_id: rec.id.clone(),
                parameter,
                old,
                new,
                voltage_class: class,
                source: dist.to_string(),
            });
        }
    }
    Ok(plan)
}

/// Writes `new` into a record, adjusting the stored per-unit data so the
/// branch's other derived parameters keep their values: capacity changes
/// rescale the system-base impedance, reactance changes carry the
/// resistance along, and X/R changes move only the resistance.
pub fn set_parameter(rec: &mut BranchRecord, parameter: ParameterKind, new: f64) -> Result<()> {
    let old = derive_parameter(rec, parameter).map_err(Error::from)?;
    if !(new > 0.0 && new.is_finite()) {
        return Err(Error::invalid(format!("{parameter} must be positive, got {new}")));
    }
    let scale_xr = |rec: &mut BranchRecord, factor: f64| {
        rec.x_pu *= factor;
        rec.r_pu *= factor;
    };
    match parameter {
        ParameterKind::XfmrCapacityMva => {
            scale_xr(rec, old / new);
            rec.rating_mva = Some(new);
        }
        ParameterKind::LineCapacityMva => rec.rating_mva = Some(new),
        ParameterKind::XfmrXpuOwnBase => {
            let rating = rec.rating_mva.expect("derived own-base value needs a rating");
            let x = from_own_base_x(new, rating, rec.system_base);
            set_x_keep_ratio(rec, x);
        }
        ParameterKind::LineXOhmPerKm => {
            let length = rec.length_km.expect("derived reactance needs a length");
            let x = x_pu_from_distributed(new, length, rec.system_base);
            set_x_keep_ratio(rec, x);
        }
        ParameterKind::XfmrXOverR | ParameterKind::LineXOverR => rec.r_pu = rec.x_pu / new,
        ParameterKind::LineLengthKm => {
            scale_xr(rec, new / old);
            rec.length_km = Some(new);
            rec.length_estimated = false;
        }
    }
    rec.validate()
}

fn set_x_keep_ratio(rec: &mut BranchRecord, x: f64) {
    if rec.x_pu > 0.0 {
        rec.r_pu *= x / rec.x_pu;
    }
    rec.x_pu = x;
}

/// Records with every plan entry applied in order.
pub fn apply_plan(records: &[BranchRecord], plan: &TuningPlan) -> Result<Vec<BranchRecord>> {
    let index = check_unique_ids(records)?;
    let mut out = records.to_vec();
    for e in &plan.entries {
        let &i = index
            .get(e.branch_id.as_str())
            .ok_or_else(|| Error::invalid(format!("plan names unknown branch `{}`", e.branch_id)))?;
        set_parameter(&mut out[i], e.parameter, e.new)?;
    }
    Ok(out)
}

/// A case whose every parameter is drawn from `reference`:
/// `per_class` lines and `per_class` transformers at each listed voltage,
/// on a 100 MVA system base.
pub fn synthesize_case(
    reference: &ReferenceStats,
    classes_kv: &[u16],
    per_class: usize,
    seed: u64,
) -> Result<Vec<BranchRecord>> {
    let root = SeededRng::new(seed);
    let s_base = 100.0;
    let mut records = Vec::new();
    for &kv in classes_kv {
        let class = VoltageClass::Canonical(kv);
        let v = f64::from(kv);
        let base = BaseQuantities::new(v, s_base)?;
        let mut draws: BTreeMap<ParameterKind, Vec<f64>> = BTreeMap::new();
        for parameter in ParameterKind::ALL {
            let entry = reference.get(parameter).ok_or_else(|| Error::CannotTune {
                parameter,
                reason: "missing from the reference".into(),
            })?;
            let dist = entry.synthesis_distribution(class)?;
            let mut stream = root.split(stream_key(parameter, class));
            let values = (0..per_class)
                .map(|_| {
                    (0..MAX_RESAMPLE_ATTEMPTS)
                        .map(|_| dist.quantile(stream.next_open01()))
                        .find(|&x| in_bounds(x, entry.independent_range))
                        .ok_or(Error::ResampleExhausted {
                            parameter,
                            attempts: MAX_RESAMPLE_ATTEMPTS,
                        })
                })
                .collect::<Result<Vec<f64>>>()?;
            draws.insert(parameter, values);
        }
        let d = |p: ParameterKind, i: usize| draws[&p][i];
        for i in 0..per_class {
            let rating = d(ParameterKind::XfmrCapacityMva, i);
            let x = from_own_base_x(d(ParameterKind::XfmrXpuOwnBase, i), rating, base);
            records.push(BranchRecord {
                id: format!("T{kv}_{i}"),
                kind: BranchKind::Transformer,
                from_bus: None,
                to_bus: None,
                x_pu: x,
                r_pu: x / d(ParameterKind::XfmrXOverR, i),
                system_base: base,
                rating_mva: Some(rating),
                kv_high: v,
                kv_low: v / 2.0,
                length_km: None,
                length_estimated: false,
                endpoints_geo: None,
            });
        }
        for i in 0..per_class {
            let length = d(ParameterKind::LineLengthKm, i);
            let x = x_pu_from_distributed(d(ParameterKind::LineXOhmPerKm, i), length, base);
            records.push(BranchRecord {
                id: format!("L{kv}_{i}"),
                kind: BranchKind::Line,
                from_bus: None,
                to_bus: None,
                x_pu: x,
                r_pu: x / d(ParameterKind::LineXOverR, i),
                system_base: base,
                rating_mva: Some(d(ParameterKind::LineCapacityMva, i)),
                kv_high: v,
                kv_low: v,
                length_km: Some(length),
                length_estimated: false,
                endpoints_geo: None,
            });
        }
    }
    Ok(records)
}
