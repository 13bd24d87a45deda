//! Reference statistics that a case is validated and tuned against.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid_model::{ParameterKind, VoltageClass, CANONICAL_KV};
use crate::interdependence::{DependenceClass, PowerFit};
use crate::stats::{DistParams, ExponentialParams, Family, GevParams, NormalParams};
use crate::synthesis::pin_mean;

/// A reference number that may be a stand-in awaiting real data.
/// Placeholders carry no value and are never used to pass a check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefValue {
    #[serde(with = "crate::decimal::opt")]
    pub value: Option<f64>,
    pub placeholder: bool,
}

impl RefValue {
    pub fn known(value: f64) -> Self {
        RefValue {
            value: Some(value),
            placeholder: false,
        }
    }

    pub fn placeholder() -> Self {
        RefValue {
            value: None,
            placeholder: true,
        }
    }

    /// The value, unless it is a placeholder.
    pub fn get(&self) -> Option<f64> {
        if self.placeholder {
            None
        } else {
            self.value
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencePowerLaw {
    pub a: RefValue,
    pub b: RefValue,
    #[serde(default, with = "crate::decimal::opt")]
    pub rmse: Option<f64>,
    #[serde(default, with = "crate::decimal::opt")]
    pub r2: Option<f64>,
}

impl ReferencePowerLaw {
    pub fn from_fit(fit: &PowerFit) -> Self {
        ReferencePowerLaw {
            a: RefValue::known(fit.a),
            b: RefValue::known(fit.b),
            rmse: Some(fit.rmse),
            r2: Some(fit.r2),
        }
    }

    /// `a·kv^b`, if both constants are known.
    pub fn predict(&self, kv: f64) -> Option<f64> {
        Some(self.a.get()? * kv.powf(self.b.get()?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassFit {
    pub class: VoltageClass,
    pub params: DistParams,
}

/// Reference statistics of one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterReference {
    pub parameter: ParameterKind,
    pub dependence: DependenceClass,
    pub family: Family,
    pub power_law: Option<ReferencePowerLaw>,
    /// Admissible class-mean interval `(lo, hi]`.
    #[serde(default, with = "crate::decimal::opt_pair")]
    pub independent_range: Option<(f64, f64)>,
    pub global_mean: RefValue,
    /// Distribution per voltage class, ascending.
    pub class_fits: Vec<ClassFit>,
    /// Distribution of all classes pooled.
    pub pooled_fit: Option<DistParams>,
    /// True when no distribution parameters are known.
    pub fits_placeholder: bool,
    pub provenance: String,
}

impl ParameterReference {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Bundle(format!("{}: {msg}", self.parameter)));
        match self.dependence {
            DependenceClass::VoltageDependent if self.power_law.is_none() => {
                return fail("voltage-dependent entry without a power law")
            }
            DependenceClass::VoltageIndependent
                if self.independent_range.is_none()
                    && self.global_mean.value.is_none()
                    && !self.global_mean.placeholder =>
            {
                return fail("voltage-independent entry without a range or global mean")
            }
            _ => {}
        }
        if let Some((lo, hi)) = self.independent_range {
            if !(lo < hi) {
                return fail("empty independent range");
            }
        }
        for v in std::iter::once(self.global_mean).chain(self.power_law.iter().flat_map(|p| [p.a, p.b]))
        {
            if v.placeholder == v.value.is_some() {
                return fail("value and placeholder flag disagree");
            }
        }
        for fit in self.class_fits.iter().map(|c| &c.params).chain(&self.pooled_fit) {
            fit.validate()?;
            if fit.family() != self.family {
                return fail("fit family differs from the entry family");
            }
        }
        if self.class_fits.windows(2).any(|w| w[0].class >= w[1].class) {
            return fail("class fits must be strictly ascending");
        }
        Ok(())
    }

    /// Mean a tuned class should have: the power law at the class voltage
    /// for dependent parameters, otherwise the range midpoint or the global
    /// mean.
    pub fn target_mean(&self, class: VoltageClass) -> Result<f64> {
        let target = match self.dependence {
            DependenceClass::VoltageDependent => {
                self.power_law.as_ref().and_then(|p| p.predict(class.kv()))
            }
            DependenceClass::VoltageIndependent => self
                .independent_range
                .map(|(lo, hi)| 0.5 * (lo + hi))
                .or_else(|| self.global_mean.get()),
        };
        target.ok_or_else(|| Error::CannotTune {
            parameter: self.parameter,
            reason: "reference target mean is a placeholder".into(),
        })
    }

    /// Reference distribution for `class`, before pinning.
    pub fn distribution(&self, class: VoltageClass) -> Result<DistParams> {
        if self.fits_placeholder {
            return Err(Error::CannotTune {
                parameter: self.parameter,
                reason: "reference distribution is a placeholder".into(),
            });
        }
        self.class_fits
            .iter()
            .find(|c| c.class == class)
            .map(|c| c.params)
            .or(self.pooled_fit)
            .ok_or_else(|| Error::CannotTune {
                parameter: self.parameter,
                reason: format!("no reference distribution for {class}"),
            })
    }

    /// Distribution to draw a fresh case from: pinned to the power law for
    /// dependent parameters, the reference distribution as is otherwise.
    pub fn synthesis_distribution(&self, class: VoltageClass) -> Result<DistParams> {
        match self.dependence {
            DependenceClass::VoltageDependent => self.tuning_distribution(class),
            DependenceClass::VoltageIndependent => {
                self.target_mean(class)?;
                self.distribution(class)
            }
        }
    }

    /// Reference distribution for `class` with its mean moved to the
    /// target mean.
    pub fn tuning_distribution(&self, class: VoltageClass) -> Result<DistParams> {
        let target = self.target_mean(class)?;
        pin_mean(&self.distribution(class)?, target)
    }

    /// True when nothing in the entry can support a verdict.
    pub fn is_placeholder(&self) -> bool {
        let law = self.power_law.as_ref().and_then(|p| p.a.get().zip(p.b.get()));
        match self.dependence {
            DependenceClass::VoltageDependent => law.is_none(),
            DependenceClass::VoltageIndependent => {
                self.independent_range.is_none() && self.global_mean.get().is_none()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceStats {
    pub provenance: String,
    /// One entry per parameter in declaration order.
    pub entries: Vec<ParameterReference>,
}

impl ReferenceStats {
    pub fn get(&self, parameter: ParameterKind) -> Option<&ParameterReference> {
        self.entries.iter().find(|e| e.parameter == parameter)
    }

    pub fn validate(&self) -> Result<()> {
        let order: Vec<ParameterKind> = self.entries.iter().map(|e| e.parameter).collect();
        if order != ParameterKind::ALL {
            return Err(Error::Bundle(
                "reference must list all seven parameters in order".into(),
            ));
        }
        self.entries.iter().try_for_each(ParameterReference::validate)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let stats: ReferenceStats =
            serde_json::from_str(text).map_err(|e| Error::Bundle(e.to_string()))?;
        stats.validate()?;
        Ok(stats)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reference serializes") + "\n"
    }
}

/// Family conventionally used for each parameter.
pub fn default_family(parameter: ParameterKind) -> Family {
    match parameter {
        ParameterKind::XfmrXpuOwnBase | ParameterKind::LineXOverR | ParameterKind::LineCapacityMva => {
            Family::Normal
        }
        ParameterKind::LineXOhmPerKm => Family::Exponential,
        ParameterKind::XfmrCapacityMva | ParameterKind::XfmrXOverR | ParameterKind::LineLengthKm => {
            Family::Gev
        }
    }
}

const PUBLISHED: &str = "published survey of utility transmission data";

fn placeholder_entry(parameter: ParameterKind, dependence: DependenceClass) -> ParameterReference {
    ParameterReference {
        parameter,
        dependence,
        family: default_family(parameter),
        power_law: (dependence == DependenceClass::VoltageDependent).then(|| ReferencePowerLaw {
            a: RefValue::placeholder(),
            b: RefValue::placeholder(),
            rmse: None,
            r2: None,
        }),
        independent_range: None,
        global_mean: RefValue::placeholder(),
        class_fits: Vec::new(),
        pooled_fit: None,
        fits_placeholder: true,
        provenance: format!("{PUBLISHED}; unpublished values are placeholders"),
    }
}

/// The shipped reference: published constants only, everything else a
/// placeholder.
///
/// * transformer capacity `0.172·V^1.332` MVA
/// * line X/R exponent `b = 0.95`
/// * transformer own-base reactance within `(0, 0.25]` p.u.
pub fn bundled_reference() -> ReferenceStats {
    use DependenceClass::*;
    use ParameterKind::*;
    let mut entries = Vec::new();
    for parameter in ParameterKind::ALL {
        let mut e = match parameter {
            XfmrXpuOwnBase | LineXOhmPerKm => placeholder_entry(parameter, VoltageIndependent),
            _ => placeholder_entry(parameter, VoltageDependent),
        };
        match parameter {
            XfmrXpuOwnBase => e.independent_range = Some((0.0, 0.25)),
            XfmrCapacityMva => {
                let law = e.power_law.as_mut().unwrap();
                law.a = RefValue::known(0.172);
                law.b = RefValue::known(1.332);
            }
            LineXOverR => e.power_law.as_mut().unwrap().b = RefValue::known(0.95),
            _ => {}
        }
        entries.push(e);
    }
    ReferenceStats {
        provenance: PUBLISHED.into(),
        entries,
    }
}

/// A complete reference with made-up but plausible values for every
/// parameter, for demonstrations and tests. It keeps the published
/// constants and fills in the rest:
///
/// | parameter | mean | family |
/// |---|---|---|
/// | transformer X | 0.10 p.u., range (0, 0.25] | Normal, σ 0.03 |
/// | line X | 0.4 Ω/km | Exponential |
/// | transformer capacity | 0.172·V^1.332 MVA | GEV, ζ 0.1, σ ¼ of mean |
/// | transformer X/R | 2·V^0.5 | GEV, ζ 0.1, σ ¼ of mean |
/// | line length | 0.5·V^0.9 km | GEV, ζ 0.1, σ ¼ of mean |
/// | line X/R | 0.04·V^0.95 | Normal, σ ⅕ of mean |
/// | line capacity | 0.05·V^1.5 MVA | Normal, σ ⅕ of mean |
pub fn illustrative_reference() -> ReferenceStats {
    use ParameterKind::*;
    let provenance = "illustrative values, not measured data".to_string();
    let dependent = |parameter: ParameterKind, a: f64, b: f64| {
        let law = ReferencePowerLaw {
            a: RefValue::known(a),
            b: RefValue::known(b),
            rmse: None,
            r2: None,
        };
        let family = default_family(parameter);
        let shape = |mean: f64| match family {
            Family::Gev => DistParams::Gev(GevParams { zeta: 0.1, mu: mean, sigma: 0.25 * mean }),
            _ => DistParams::Normal(NormalParams { mu: mean, sigma: 0.2 * mean }),
        };
        let class_fits = CANONICAL_KV
            .iter()
            .map(|&kv| {
                let mean = a * f64::from(kv).powf(b);
                ClassFit {
                    class: VoltageClass::Canonical(kv),
                    params: pin_mean(&shape(mean), mean).expect("finite mean"),
                }
            })
            .collect();
        let mid = a * 230f64.powf(b);
        ParameterReference {
            parameter,
            dependence: DependenceClass::VoltageDependent,
            family,
            power_law: Some(law),
            independent_range: None,
            global_mean: RefValue::placeholder(),
            class_fits,
            pooled_fit: Some(pin_mean(&shape(mid), mid).expect("finite mean")),
            fits_placeholder: false,
            provenance: provenance.clone(),
        }
    };
    let entries = vec![
        ParameterReference {
            parameter: XfmrXpuOwnBase,
            dependence: DependenceClass::VoltageIndependent,
            family: Family::Normal,
            power_law: None,
            independent_range: Some((0.0, 0.25)),
            global_mean: RefValue::known(0.10),
            class_fits: Vec::new(),
            pooled_fit: Some(DistParams::Normal(NormalParams { mu: 0.10, sigma: 0.03 })),
            fits_placeholder: false,
            provenance: provenance.clone(),
        },
        ParameterReference {
            parameter: LineXOhmPerKm,
            dependence: DependenceClass::VoltageIndependent,
            family: Family::Exponential,
            power_law: None,
            independent_range: None,
            global_mean: RefValue::known(0.4),
            class_fits: Vec::new(),
            pooled_fit: Some(DistParams::Exponential(ExponentialParams { rate: 2.5 })),
            fits_placeholder: false,
            provenance: provenance.clone(),
        },
        dependent(XfmrCapacityMva, 0.172, 1.332),
        dependent(XfmrXOverR, 2.0, 0.5),
        dependent(LineLengthKm, 0.5, 0.9),
        dependent(LineXOverR, 0.04, 0.95),
        dependent(LineCapacityMva, 0.05, 1.5),
    ];
    ReferenceStats { provenance, entries }
}
