//! Per-class comparison of a case against reference statistics, and the
//! ✓ / TR summary table.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid_model::{BranchRecord, ParameterKind, VoltageClass, DEFAULT_KV_TOLERANCE};
use crate::interdependence::{clean_group, group_by_class, DependenceClass, DEFAULT_MIN_COUNT};
use crate::per_unit::extract_parameter;
use crate::reference::{ParameterReference, ReferenceStats};
use crate::stats::{build_histogram, kl_divergence, model_mass, CleanSample, DEFAULT_BINS, EXTREME_FENCE};

pub const DEFAULT_RATIO_LO: f64 = 0.5;
pub const DEFAULT_RATIO_HI: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationSettings {
    #[serde(with = "crate::decimal")]
    pub ratio_lo: f64,
    #[serde(with = "crate::decimal")]
    pub ratio_hi: f64,
    pub min_count: usize,
    #[serde(with = "crate::decimal")]
    pub fence_multiplier: f64,
    #[serde(with = "crate::decimal")]
    pub kv_tolerance: f64,
    pub n_bins: usize,
}

impl Default for ValidationSettings {
    fn default() -> Self {
        ValidationSettings {
            ratio_lo: DEFAULT_RATIO_LO,
            ratio_hi: DEFAULT_RATIO_HI,
            min_count: DEFAULT_MIN_COUNT,
            fence_multiplier: EXTREME_FENCE,
            kv_tolerance: DEFAULT_KV_TOLERANCE,
            n_bins: DEFAULT_BINS,
        }
    }
}

impl ValidationSettings {
    pub fn check(&self) -> Result<()> {
        if !(0.0 < self.ratio_lo && self.ratio_lo < 1.0 && 1.0 < self.ratio_hi && self.ratio_hi.is_finite()) {
            return Err(Error::invalid(format!(
                "ratio band must satisfy 0 < lo < 1 < hi, got [{}, {}]",
                self.ratio_lo, self.ratio_hi
            )));
        }
        if self.min_count == 0 {
            return Err(Error::invalid("min_count must be at least 1"));
        }
        if !(self.fence_multiplier > 0.0 && self.fence_multiplier.is_finite()) {
            return Err(Error::invalid("fence multiplier must be positive"));
        }
        if self.n_bins < 2 {
            return Err(Error::invalid("need at least 2 bins"));
        }
        Ok(())
    }

    fn in_band(&self, ratio: f64) -> bool {
        self.ratio_lo <= ratio && ratio <= self.ratio_hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    TuningRequired,
    NoData,
}

impl Verdict {
    /// Table cell text.
    pub fn symbol(self) -> &'static str {
        match self {
            Verdict::Pass => "✓",
            Verdict::TuningRequired => "TR",
            Verdict::NoData => "n.d.",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassVerdict {
    pub class: VoltageClass,
    /// Values left after outlier removal.
    pub n: usize,
    #[serde(with = "crate::decimal::opt")]
    pub case_mean: Option<f64>,
    /// Mean of the raw values, before outlier removal.
    #[serde(with = "crate::decimal::opt")]
    pub raw_mean: Option<f64>,
    #[serde(with = "crate::decimal::opt")]
    pub reference_value: Option<f64>,
    #[serde(with = "crate::decimal::opt")]
    pub ratio: Option<f64>,
    pub verdict: Verdict,
    /// KL divergence of the reference distribution from the case histogram.
    /// Reported only; it never changes the verdict.
    #[serde(with = "crate::decimal::opt")]
    pub shape_kl: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationVerdict {
    pub parameter: ParameterKind,
    pub classes: Vec<ClassVerdict>,
    pub overall: Verdict,
    pub notes: Vec<String>,
}

fn overall(classes: &[ClassVerdict]) -> Verdict {
    if classes.iter().any(|c| c.verdict == Verdict::TuningRequired) {
        Verdict::TuningRequired
    } else if classes.iter().any(|c| c.verdict == Verdict::Pass) {
        Verdict::Pass
    } else {
        Verdict::NoData
    }
}

fn shape_kl(entry: &ParameterReference, class: VoltageClass, sample: &CleanSample, n_bins: usize) -> Option<f64> {
    let dist = entry.distribution(class).ok()?;
    let hist = build_histogram(sample, n_bins).ok()?;
    kl_divergence(&hist, &hist.edges, &model_mass(&hist, &dist)).ok()
}

/// Verdicts for all seven parameters in declaration order.
///
/// Each canonical voltage class with at least `min_count` cleaned values is
/// judged on its mean: against the power law for voltage-dependent
/// parameters, against the admissible range or the global mean otherwise.
/// Placeholder reference values never produce a pass.
pub fn validate_case(
    records: &[BranchRecord],
    reference: &ReferenceStats,
    settings: &ValidationSettings,
) -> Result<Vec<ValidationVerdict>> {
    settings.check()?;
    if records.is_empty() {
        return Err(Error::invalid("case has no branches"));
    }
    let mut out = Vec::new();
    for parameter in ParameterKind::ALL {
        let entry = reference
            .get(parameter)
            .ok_or_else(|| Error::Bundle(format!("reference lacks {parameter}")))?;
        let (values, _) = extract_parameter(records, parameter, settings.kv_tolerance);
        let mut notes = Vec::new();
        if entry.is_placeholder() {
            notes.push("reference values are placeholders".to_string());
        }
        let mut classes = Vec::new();
        for (class, group) in group_by_class(&values) {
            let mut sorted = group.clone();
            sorted.sort_by(f64::total_cmp);
            let raw_mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
            let sample = clean_group(&group, settings.fence_multiplier)?;
            let mut cv = ClassVerdict {
                class,
                n: sample.len(),
                case_mean: Some(sample.mean()),
                raw_mean: Some(raw_mean),
                reference_value: None,
                ratio: None,
                verdict: Verdict::NoData,
                shape_kl: None,
            };
            if sample.len() >= settings.min_count {
                judge(entry, settings, &mut cv);
                cv.shape_kl = shape_kl(entry, class, &sample, settings.n_bins);
            }
            classes.push(cv);
        }
        if values.is_empty() {
            notes.push("no values in the case".to_string());
        } else if classes.iter().all(|c| c.n < settings.min_count) {
            notes.push(format!("no voltage class has {} values", settings.min_count));
        }
        out.push(ValidationVerdict {
            parameter,
            overall: overall(&classes),
            classes,
            notes,
        });
    }
    Ok(out)
}

fn judge(entry: &ParameterReference, settings: &ValidationSettings, cv: &mut ClassVerdict) {
    let mean = cv.case_mean.expect("judged classes have a mean");
    match entry.dependence {
        DependenceClass::VoltageDependent => {
            if let Some(r) = entry.power_law.as_ref().and_then(|p| p.predict(cv.class.kv())) {
                let ratio = mean / r;
                cv.reference_value = Some(r);
                cv.ratio = Some(ratio);
                cv.verdict = if settings.in_band(ratio) { Verdict::Pass } else { Verdict::TuningRequired };
            }
        }
        DependenceClass::VoltageIndependent => {
            let in_range = entry.independent_range.map(|(lo, hi)| lo < mean && mean <= hi);
            let in_band = entry.global_mean.get().map(|g| {
                cv.reference_value = Some(g);
                cv.ratio = Some(mean / g);
                settings.in_band(mean / g)
            });
            cv.verdict = match (in_range, in_band) {
                (None, None) => Verdict::NoData,
                (Some(true), _) | (_, Some(true)) => Verdict::Pass,
                _ => Verdict::TuningRequired,
            };
        }
    }
}

/// The (parameter, class) pairs that need tuning.
pub fn failures(verdicts: &[ValidationVerdict]) -> Vec<(ParameterKind, VoltageClass)> {
    verdicts
        .iter()
        .flat_map(|v| {
            v.classes
                .iter()
                .filter(|c| c.verdict == Verdict::TuningRequired)
                .map(move |c| (v.parameter, c.class))
        })
        .collect()
}

/// Worst overall verdict: TR if any parameter needs tuning.
pub fn any_tuning_required(verdicts: &[ValidationVerdict]) -> bool {
    verdicts.iter().any(|v| v.overall == Verdict::TuningRequired)
}

/// Tab-separated summary table, one row per parameter and one column for
/// the case:
///
/// ```text
/// Parameter	Synthetic Grid Models
/// 	case name
/// Transformer X (p.u.)	✓
/// ```
pub fn render_table(verdicts: &[ValidationVerdict], case_name: &str) -> String {
    render_columns(&[(case_name, verdicts)])
}

/// [`render_table`] with one column per case.
pub fn render_columns(columns: &[(&str, &[ValidationVerdict])]) -> String {
    let mut out = String::from("Parameter\tSynthetic Grid Models");
    for _ in 1..columns.len() {
        out.push('\t');
    }
    out.push('\n');
    for (name, _) in columns {
        out.push('\t');
        out.push_str(name);
    }
    out.push('\n');
    for parameter in ParameterKind::ALL {
        let cells: Vec<&str> = columns
            .iter()
            .filter_map(|(_, vs)| vs.iter().find(|v| v.parameter == parameter))
            .map(|v| v.overall.symbol())
            .collect();
        if cells.is_empty() {
            continue;
        }
        out.push_str(parameter.label());
        for c in cells {
            out.push('\t');
            out.push_str(c);
        }
        out.push('\n');
    }
    out
}

/// Markdown version of the summary table.
pub fn render_markdown_table(verdicts: &[ValidationVerdict], case_name: &str) -> String {
    let mut out = format!("| Parameter | {case_name} |\n|---|:---:|\n");
    for parameter in ParameterKind::ALL {
        if let Some(v) = verdicts.iter().find(|v| v.parameter == parameter) {
            let _ = writeln!(out, "| {} | {} |", parameter.label(), v.overall.symbol());
        }
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "–".to_string(), |x| format!("{x:.6}"))
}

/// Markdown report: the summary table and one detail section per parameter.
pub fn render_report(
    verdicts: &[ValidationVerdict],
    case_name: &str,
    reference: &ReferenceStats,
    settings: &ValidationSettings,
    seed: u64,
) -> String {
    let mut out = format!("# Validation of {case_name}\n\n");
    let _ = writeln!(out, "Reference: {}", reference.provenance);
    let _ = writeln!(
        out,
        "Ratio band [{}, {}], min count {}, fence {}·IQR, {} bins, seed {seed}.\n",
        settings.ratio_lo, settings.ratio_hi, settings.min_count, settings.fence_multiplier, settings.n_bins
    );
    out.push_str(&render_markdown_table(verdicts, case_name));
    for v in verdicts {
        let _ = writeln!(out, "\n## {}\n", v.parameter.label());
        let _ = writeln!(out, "Overall: {}", v.overall.symbol());
        if let Some(e) = reference.get(v.parameter) {
            if let Some((lo, hi)) = e.independent_range {
                let _ = writeln!(out, "Admissible mean range: ({lo}, {hi}] {}", v.parameter.unit());
            }
        }
        for note in &v.notes {
            let _ = writeln!(out, "Note: {note}");
        }
        if v.classes.is_empty() {
            continue;
        }
        out.push_str("\n| class | n | mean | raw mean | reference | ratio | shape KL | verdict |\n");
        out.push_str("|---:|---:|---:|---:|---:|---:|---:|:---:|\n");
        for c in &v.classes {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} | {} | {} |",
                c.class,
                c.n,
                opt(c.case_mean),
                opt(c.raw_mean),
                opt(c.reference_value),
                opt(c.ratio),
                opt(c.shape_kl),
                c.verdict.symbol()
            );
        }
    }
    out
}
