//! Whole-case analysis and the stats bundle file that records it.
//!
//! A bundle is pretty-printed JSON. Floating-point numbers, and the seed,
//! are decimal strings that parse back to the identical value; counts are
//! plain integers. A bundle doubles as a reference for validating other
//! cases.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid_model::{BranchRecord, ParameterKind, DEFAULT_KV_TOLERANCE};
use crate::interdependence::{
    class_means_with_fence, classify_dependence, clean_group, fit_power, group_by_class, ClassMean,
    DependenceClass, PowerFit, DEFAULT_B_THRESHOLD, DEFAULT_MIN_COUNT, DEFAULT_R2_THRESHOLD,
};
use crate::per_unit::{extract_parameter, SkipReport};
use crate::reference::{
    bundled_reference, ClassFit, ParameterReference, RefValue, ReferencePowerLaw, ReferenceStats,
};
use crate::stats::{
    best_fit, build_histogram, fit_exponential, fit_gev, fit_normal, model_mass, CleanSample, DistFit,
    Family, Histogram, DEFAULT_BINS, EXTREME_FENCE,
};
use crate::validate::{ValidationSettings, ValidationVerdict, DEFAULT_RATIO_HI, DEFAULT_RATIO_LO};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub n_bins: usize,
    #[serde(with = "crate::decimal")]
    pub fence_multiplier: f64,
    #[serde(with = "crate::decimal")]
    pub ratio_lo: f64,
    #[serde(with = "crate::decimal")]
    pub ratio_hi: f64,
    pub min_count: usize,
    #[serde(with = "crate::decimal::uint")]
    pub seed: u64,
    #[serde(with = "crate::decimal")]
    pub kv_tolerance: f64,
    #[serde(with = "crate::decimal")]
    pub b_threshold: f64,
    #[serde(with = "crate::decimal")]
    pub r2_threshold: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            n_bins: DEFAULT_BINS,
            fence_multiplier: EXTREME_FENCE,
            ratio_lo: DEFAULT_RATIO_LO,
            ratio_hi: DEFAULT_RATIO_HI,
            min_count: DEFAULT_MIN_COUNT,
            seed: DEFAULT_SEED,
            kv_tolerance: DEFAULT_KV_TOLERANCE,
            b_threshold: DEFAULT_B_THRESHOLD,
            r2_threshold: DEFAULT_R2_THRESHOLD,
        }
    }
}

impl Settings {
    pub fn validation(&self) -> ValidationSettings {
        ValidationSettings {
            ratio_lo: self.ratio_lo,
            ratio_hi: self.ratio_hi,
            min_count: self.min_count,
            fence_multiplier: self.fence_multiplier,
            kv_tolerance: self.kv_tolerance,
            n_bins: self.n_bins,
        }
    }

    pub fn check(&self) -> Result<()> {
        self.validation().check()?;
        if !(0.0..0.5).contains(&self.kv_tolerance) {
            return Err(Error::invalid("kV tolerance must be in [0, 0.5)"));
        }
        if !(self.b_threshold > 0.0) {
            return Err(Error::invalid("b threshold must be positive"));
        }
        if !(self.r2_threshold > 0.0 && self.r2_threshold <= 1.0) {
            return Err(Error::invalid("r2 threshold must be in (0, 1]"));
        }
        Ok(())
    }
}

/// Summary of a cleaned sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub n: usize,
    #[serde(with = "crate::decimal::vec")]
    pub removed_outliers: Vec<f64>,
    #[serde(with = "crate::decimal")]
    pub mean: f64,
    #[serde(with = "crate::decimal")]
    pub min: f64,
    #[serde(with = "crate::decimal")]
    pub max: f64,
    #[serde(with = "crate::decimal")]
    pub q1: f64,
    #[serde(with = "crate::decimal")]
    pub q3: f64,
    #[serde(with = "crate::decimal")]
    pub fence_lo: f64,
    #[serde(with = "crate::decimal")]
    pub fence_hi: f64,
}

impl From<&CleanSample> for SampleSummary {
    fn from(s: &CleanSample) -> Self {
        SampleSummary {
            n: s.len(),
            removed_outliers: s.removed_outliers.clone(),
            mean: s.mean(),
            min: s.min(),
            max: s.max(),
            q1: s.q1,
            q3: s.q3,
            fence_lo: s.fence_lo,
            fence_hi: s.fence_hi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Analyzed,
    NoData,
}

/// Everything computed for one parameter of a case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterAnalysis {
    pub parameter: ParameterKind,
    pub status: Status,
    pub n_values: usize,
    pub skips: SkipReport,
    pub pooled: Option<SampleSummary>,
    pub histogram: Option<Histogram>,
    /// Candidate fits, best first.
    pub fits: Vec<DistFit>,
    pub notes: Vec<String>,
    pub class_means: Vec<ClassMean>,
    pub class_samples: Vec<ClassSample>,
    pub power_fit: Option<PowerFit>,
    pub dependence: Option<DependenceClass>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSample {
    pub class: crate::grid_model::VoltageClass,
    pub summary: SampleSummary,
    pub fit: Option<DistFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSection {
    pub analysis: ParameterAnalysis,
    /// What this section contributes when the bundle is used as a reference.
    pub reference: ParameterReference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsBundle {
    pub schema_version: u32,
    pub case_name: String,
    pub settings: Settings,
    pub parameters: Vec<ParameterSection>,
    /// Provenance of the reference the verdicts were computed against.
    pub verdict_reference: String,
    pub verdicts: Vec<ValidationVerdict>,
}

fn fit_family(family: Family, sample: &CleanSample, n_bins: usize) -> Result<DistFit> {
    match family {
        Family::Normal => fit_normal(sample, n_bins),
        Family::Exponential => fit_exponential(sample, n_bins),
        Family::Gev => fit_gev(sample, n_bins),
    }
}

/// Runs extraction, cleaning, fitting and the voltage power law for one
/// parameter.
pub fn analyze_parameter(
    records: &[BranchRecord],
    parameter: ParameterKind,
    settings: &Settings,
) -> Result<ParameterSection> {
    let (values, skips) = extract_parameter(records, parameter, settings.kv_tolerance);
    let mut analysis = ParameterAnalysis {
        parameter,
        status: Status::NoData,
        n_values: values.len(),
        skips,
        pooled: None,
        histogram: None,
        fits: Vec::new(),
        notes: Vec::new(),
        class_means: Vec::new(),
        class_samples: Vec::new(),
        power_fit: None,
        dependence: None,
    };
    let placeholder = || {
        let mut r = bundled_reference().entries.remove(
            ParameterKind::ALL.iter().position(|&p| p == parameter).unwrap(),
        );
        r.provenance = "no data in the analyzed case; published values only".into();
        r
    };

    let raw: Vec<f64> = values.iter().map(|v| v.value).collect();
    if raw.len() < settings.min_count {
        analysis
            .notes
            .push(format!("{} values, fewer than the minimum {}", raw.len(), settings.min_count));
        return Ok(ParameterSection { analysis, reference: placeholder() });
    }
    let pooled = clean_group(&raw, settings.fence_multiplier)?;
    analysis.pooled = Some(SampleSummary::from(&pooled));
    analysis.histogram = build_histogram(&pooled, settings.n_bins).ok();
    let ranked = match best_fit(&pooled, &Family::ALL, settings.n_bins) {
        Ok(r) => r,
        Err(e) => {
            analysis.notes.push(format!("no distribution fit: {e}"));
            return Ok(ParameterSection { analysis, reference: placeholder() });
        }
    };
    analysis.status = Status::Analyzed;
    analysis.notes.extend(ranked.warnings.iter().cloned());
    let family = ranked.best().family();
    let pooled_fit = ranked.best().params;
    analysis.fits = ranked.ranked;

    let groups = group_by_class(&values);
    for (class, group) in &groups {
        let sample = clean_group(group, settings.fence_multiplier)?;
        if sample.len() < settings.min_count {
            continue;
        }
        let fit = fit_family(family, &sample, settings.n_bins).ok();
        analysis.class_samples.push(ClassSample {
            class: *class,
            summary: SampleSummary::from(&sample),
            fit,
        });
    }

    match class_means_with_fence(&values, settings.min_count, settings.fence_multiplier) {
        Ok(series) => {
            analysis.class_means = series.points.clone();
            match fit_power(&series) {
                Ok(fit) => {
                    analysis.power_fit = Some(fit);
                    analysis.dependence =
                        Some(classify_dependence(&fit, settings.b_threshold, settings.r2_threshold));
                }
                Err(e) => analysis.notes.push(format!("no power law: {e}")),
            }
        }
        Err(e) => analysis.notes.push(format!("no class means: {e}")),
    }

    let dependence = analysis.dependence.unwrap_or(DependenceClass::VoltageIndependent);
    let reference = ParameterReference {
        parameter,
        dependence,
        family,
        power_law: analysis.power_fit.as_ref().map(ReferencePowerLaw::from_fit),
        independent_range: None,
        global_mean: RefValue::known(pooled.mean()),
        class_fits: analysis
            .class_samples
            .iter()
            .filter_map(|c| c.fit.as_ref().map(|f| ClassFit { class: c.class, params: f.params }))
            .collect(),
        pooled_fit: Some(pooled_fit),
        fits_placeholder: false,
        provenance: String::new(),
    };
    Ok(ParameterSection { analysis, reference })
}

/// Analyzes all seven parameters and validates the case against
/// `verdict_reference`.
pub fn analyze_case(
    records: &[BranchRecord],
    case_name: &str,
    settings: &Settings,
    verdict_reference: &ReferenceStats,
) -> Result<StatsBundle> {
    settings.check()?;
    if records.is_empty() {
        return Err(Error::invalid("case has no branches"));
    }
    let provenance = format!("analysis of {case_name} (seed {})", settings.seed);
    let mut parameters = Vec::new();
    for parameter in ParameterKind::ALL {
        let mut section = analyze_parameter(records, parameter, settings)?;
        if section.analysis.status == Status::Analyzed {
            section.reference.provenance = provenance.clone();
        }
        parameters.push(section);
    }
    let verdicts = crate::validate::validate_case(records, verdict_reference, &settings.validation())?;
    Ok(StatsBundle {
        schema_version: SCHEMA_VERSION,
        case_name: case_name.to_string(),
        settings: *settings,
        parameters,
        verdict_reference: verdict_reference.provenance.clone(),
        verdicts,
    })
}

impl StatsBundle {
    pub fn has_data(&self) -> bool {
        self.parameters.iter().any(|p| p.analysis.status == Status::Analyzed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bundle serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let bundle: StatsBundle = serde_json::from_str(text).map_err(|e| Error::Bundle(e.to_string()))?;
        if bundle.schema_version != SCHEMA_VERSION {
            return Err(Error::Bundle(format!(
                "schema version {} is not supported (expected {SCHEMA_VERSION})",
                bundle.schema_version
            )));
        }
        bundle.to_reference().validate()?;
        Ok(bundle)
    }

    /// The bundle's statistics as a validation reference.
    pub fn to_reference(&self) -> ReferenceStats {
        ReferenceStats {
            provenance: format!("analysis of {} (seed {})", self.case_name, self.settings.seed),
            entries: self.parameters.iter().map(|p| p.reference.clone()).collect(),
        }
    }

    pub fn section(&self, parameter: ParameterKind) -> Option<&ParameterSection> {
        self.parameters.iter().find(|p| p.analysis.parameter == parameter)
    }
}

pub fn write_stats_bundle(bundle: &StatsBundle, path: &Path) -> Result<()> {
    std::fs::write(path, bundle.to_json()).map_err(|e| Error::io(path, e))
}

pub fn load_stats_bundle(path: &Path) -> Result<StatsBundle> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    StatsBundle::from_json(&text)
}

/// Reads a reference from either a stats bundle or a bare reference file.
pub fn load_reference(path: &Path) -> Result<ReferenceStats> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Bundle(e.to_string()))?;
    if value.get("schema_version").is_some() {
        Ok(StatsBundle::from_json(&text)?.to_reference())
    } else {
        ReferenceStats::from_json(&text)
    }
}

fn xy_csv(points: impl IntoIterator<Item = (f64, f64)>) -> String {
    let mut out = String::from("x,y\n");
    for (x, y) in points {
        let _ = writeln!(out, "{},{}", crate::decimal::format(x), crate::decimal::format(y));
    }
    out
}

/// Plot data as `(file name, x,y CSV)` pairs: class means against
/// voltage, the fitted power curve, histogram mass per bin centre and the
/// best fit's mass on the same bins.
pub fn plot_files(bundle: &StatsBundle) -> Vec<(String, String)> {
    let mut files = Vec::new();
    for section in &bundle.parameters {
        let a = &section.analysis;
        let key = a.parameter.key();
        if !a.class_means.is_empty() {
            files.push((
                format!("{key}_class_means.csv"),
                xy_csv(a.class_means.iter().map(|c| (c.kv(), c.mean))),
            ));
        }
        if let Some(fit) = &a.power_fit {
            let kv = (0..=100).map(|i| 69.0 + (735.0 - 69.0) * f64::from(i) / 100.0);
            files.push((
                format!("{key}_power_curve.csv"),
                xy_csv(kv.map(|v| (v, fit.predict(v)))),
            ));
        }
        if let Some(h) = &a.histogram {
            let centres: Vec<f64> = h.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
            files.push((
                format!("{key}_histogram.csv"),
                xy_csv(centres.iter().copied().zip(h.mass.iter().copied())),
            ));
            if let Some(best) = a.fits.first() {
                files.push((
                    format!("{key}_fit_{}.csv", best.family()),
                    xy_csv(centres.iter().copied().zip(model_mass(h, &best.params))),
                ));
            }
        }
    }
    files
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "–".into(), |x| format!("{x:.6}"))
}

/// Markdown report of a bundle.
pub fn render_bundle_report(bundle: &StatsBundle) -> String {
    let s = &bundle.settings;
    let mut out = format!("# Branch statistics of {}\n\n", bundle.case_name);
    let _ = writeln!(
        out,
        "Bins {}, fence {}·IQR, min count {}, ratio band [{}, {}], |b| threshold {}, r² threshold {}, seed {}.\n",
        s.n_bins, s.fence_multiplier, s.min_count, s.ratio_lo, s.ratio_hi, s.b_threshold, s.r2_threshold, s.seed
    );
    let _ = writeln!(out, "Verdicts against: {}\n", bundle.verdict_reference);
    out.push_str(&crate::validate::render_markdown_table(&bundle.verdicts, &bundle.case_name));
    for section in &bundle.parameters {
        let a = &section.analysis;
        let _ = writeln!(out, "\n## {}\n", a.parameter.label());
        let skipped = a.skips.total();
        let _ = writeln!(out, "Values: {} ({} records skipped)", a.n_values, skipped);
        if a.skips.estimated_lengths > 0 {
            let _ = writeln!(out, "Values using estimated lengths: {}", a.skips.estimated_lengths);
        }
        if a.status == Status::NoData {
            let _ = writeln!(out, "Status: n.d.");
        }
        if let Some(p) = &a.pooled {
            let _ = writeln!(
                out,
                "After outlier removal: n = {}, mean {:.6}, range [{:.6}, {:.6}], {} removed",
                p.n,
                p.mean,
                p.min,
                p.max,
                p.removed_outliers.len()
            );
        }
        if !a.fits.is_empty() {
            out.push_str("\n| family | parameters | log-likelihood | KL (nats) |\n|---|---|---:|---:|\n");
            for f in &a.fits {
                let _ = writeln!(
                    out,
                    "| {} | {} | {:.4} | {:.6} |",
                    f.family(),
                    f.params,
                    f.log_likelihood,
                    f.kl_to_empirical
                );
            }
        }
        if let Some(p) = &a.power_fit {
            let _ = writeln!(
                out,
                "\nPower law: {:.6}·V^{:.6} (RMSE {:.6}, r² {:.4}), {}",
                p.a,
                p.b,
                p.rmse,
                p.r2,
                match a.dependence {
                    Some(DependenceClass::VoltageDependent) => "voltage dependent",
                    _ => "voltage independent",
                }
            );
        }
        if !a.class_means.is_empty() {
            out.push_str("\n| class | n | mean | fitted |\n|---:|---:|---:|---:|\n");
            for c in &a.class_means {
                let _ = writeln!(
                    out,
                    "| {} | {} | {:.6} | {} |",
                    c.class,
                    c.n,
                    c.mean,
                    fmt_opt(a.power_fit.map(|p| p.predict(c.kv())))
                );
            }
        }
        for note in &a.notes {
            let _ = writeln!(out, "\nNote: {note}");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_model::BranchKind;
    use crate::reference::illustrative_reference;
    use crate::synthesis::synthesize_case;

    fn toy() -> Vec<BranchRecord> {
        synthesize_case(&illustrative_reference(), &[69, 138, 230, 345], 60, 42).unwrap()
    }

    #[test]
    fn analysis_covers_every_parameter() {
        let b = analyze_case(&toy(), "toy", &Settings::default(), &bundled_reference()).unwrap();
        assert_eq!(b.parameters.len(), 7);
        assert!(b.parameters.iter().all(|p| p.analysis.status == Status::Analyzed));
        let cap = b.section(ParameterKind::XfmrCapacityMva).unwrap();
        let fit = cap.analysis.power_fit.unwrap();
        assert!((fit.b - 1.332).abs() < 0.15, "{fit:?}");
        assert_eq!(cap.reference.dependence, DependenceClass::VoltageDependent);
        assert_eq!(cap.analysis.class_means.len(), 4);
        assert_eq!(b.settings.n_bins, 50);
        assert_eq!(b.settings.fence_multiplier, 3.0);
    }

    #[test]
    fn round_trip_is_exact() {
        let b = analyze_case(&toy(), "toy", &Settings::default(), &illustrative_reference()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stats.json");
        write_stats_bundle(&b, &path).unwrap();
        let back = load_stats_bundle(&path).unwrap();
        assert_eq!(back, b);
        assert_eq!(back.to_reference(), b.to_reference());
        assert_eq!(load_reference(&path).unwrap(), b.to_reference());
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"n_bins\": 50"));
        assert!(text.contains("\"fence_multiplier\": \"3.0\""));
        assert!(text.contains("\"seed\": \"42\""));
    }

    #[test]
    fn self_validation_passes() {
        let records = toy();
        let b = analyze_case(&records, "toy", &Settings::default(), &bundled_reference()).unwrap();
        let v = crate::validate::validate_case(&records, &b.to_reference(), &ValidationSettings::default()).unwrap();
        assert!(!crate::validate::any_tuning_required(&v), "{v:?}");
    }

    #[test]
    fn transformers_only_case_marks_lines_no_data() {
        let records: Vec<BranchRecord> = toy().into_iter().filter(|r| r.kind == BranchKind::Transformer).collect();
        let b = analyze_case(&records, "xf", &Settings::default(), &bundled_reference()).unwrap();
        for p in &b.parameters {
            let want = if p.analysis.parameter.branch_kind() == BranchKind::Line {
                Status::NoData
            } else {
                Status::Analyzed
            };
            assert_eq!(p.analysis.status, want, "{}", p.analysis.parameter);
        }
        let r = b.to_reference();
        r.validate().unwrap();
        assert!(r.get(ParameterKind::LineLengthKm).unwrap().is_placeholder());
    }

    #[test]
    fn rejects_bad_bundles() {
        assert!(StatsBundle::from_json("{}").is_err());
        let b = analyze_case(&toy(), "toy", &Settings::default(), &bundled_reference()).unwrap();
        let text = b.to_json().replacen("\"schema_version\": 1", "\"schema_version\": 9", 1);
        assert!(StatsBundle::from_json(&text).is_err());
    }

    #[test]
    fn plot_data() {
        let b = analyze_case(&toy(), "toy", &Settings::default(), &bundled_reference()).unwrap();
        let files = plot_files(&b);
        assert!(files.iter().any(|(n, _)| n == "xfmr_capacity_mva_class_means.csv"));
        assert!(files.iter().all(|(_, c)| c.starts_with("x,y\n")));
        let report = render_bundle_report(&b);
        assert!(report.contains("## Line Capacity (MVA)"));
    }
}
