//! Command-line front end.
//!
//! Exit codes: 0 success, 1 tuning required, 2 input or I/O error,
//! 3 not enough data, 4 a parameter cannot be tuned.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bundle::{
    analyze_case, load_reference, load_stats_bundle, plot_files, render_bundle_report, write_stats_bundle,
    Settings, StatsBundle, DEFAULT_SEED,
};
use crate::error::{Error, Result};
use crate::grid_model::{BranchRecord, ParameterKind, VoltageClass};
use crate::ingest::{fill_line_lengths, rewrite_matpower, write_branch_csv, CaseFormat, CaseSource};
use crate::per_unit::extract_parameter;
use crate::reference::{bundled_reference, illustrative_reference, ReferenceStats};
use crate::rng::SeededRng;
use crate::stats::{best_fit, Family};
use crate::synthesis::{apply_plan, synthesize_case, tune_case};
use crate::validate::{any_tuning_required, failures, render_report, render_table, validate_case, Verdict};

pub const EXIT_OK: i32 = 0;
pub const EXIT_TUNING_REQUIRED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NO_DATA: i32 = 3;
pub const EXIT_CANNOT_TUNE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "branchstat", version, about = "Statistics, validation and tuning of transmission branch parameters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct StatFlags {
    /// Histogram bins
    #[arg(long, default_value_t = crate::stats::DEFAULT_BINS)]
    bins: usize,
    /// Minimum cleaned values for a voltage class to count
    #[arg(long, default_value_t = crate::interdependence::DEFAULT_MIN_COUNT)]
    min_count: usize,
    /// Outlier fence in IQRs beyond the quartiles
    #[arg(long, default_value_t = crate::stats::EXTREME_FENCE)]
    fence: f64,
    #[arg(long, default_value_t = crate::validate::DEFAULT_RATIO_LO)]
    ratio_lo: f64,
    #[arg(long, default_value_t = crate::validate::DEFAULT_RATIO_HI)]
    ratio_hi: f64,
    /// Exponents smaller than this in magnitude count as voltage independent
    #[arg(long, default_value_t = crate::interdependence::DEFAULT_B_THRESHOLD)]
    b_threshold: f64,
    /// Power laws explaining less than this share of variance count as voltage independent
    #[arg(long, default_value_t = crate::interdependence::DEFAULT_R2_THRESHOLD)]
    r2_threshold: f64,
    /// Relative distance within which a voltage snaps to a nominal level
    #[arg(long, default_value_t = crate::grid_model::DEFAULT_KV_TOLERANCE)]
    kv_tolerance: f64,
    #[arg(long, env = "BRANCHSTAT_SEED", default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// System MVA base for MATPOWER cases, overriding baseMVA
    #[arg(long)]
    s_base: Option<f64>,
}

impl StatFlags {
    fn settings(&self) -> Settings {
        Settings {
            n_bins: self.bins,
            fence_multiplier: self.fence,
            ratio_lo: self.ratio_lo,
            ratio_hi: self.ratio_hi,
            min_count: self.min_count,
            seed: self.seed,
            kv_tolerance: self.kv_tolerance,
            b_threshold: self.b_threshold,
            r2_threshold: self.r2_threshold,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Derive statistics from one or more cases and write a stats bundle
    Analyze {
        #[arg(required = true)]
        cases: Vec<PathBuf>,
        /// Reference for the verdicts recorded in the bundle: `bundled`, `illustrative` or a file
        #[arg(long, default_value = "bundled")]
        reference: String,
        #[arg(long, default_value = "stats.json")]
        out: PathBuf,
        /// Directory for x,y plot-data CSV files
        #[arg(long)]
        plots: Option<PathBuf>,
        #[command(flatten)]
        flags: StatFlags,
    },
    /// Rank candidate distributions per parameter and voltage class
    Fit {
        #[arg(required = true)]
        cases: Vec<PathBuf>,
        #[command(flatten)]
        flags: StatFlags,
    },
    /// Compare a case with a reference; exits 1 if any parameter needs tuning
    Validate {
        case: PathBuf,
        #[arg(long, default_value = "bundled")]
        reference: String,
        /// Markdown report path
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        flags: StatFlags,
    },
    /// Reassign failing parameters from the reference distributions
    Tune {
        case: PathBuf,
        #[arg(long, default_value = "bundled")]
        reference: String,
        /// Tune every class of these parameters instead of the failing ones
        #[arg(long, value_delimiter = ',')]
        params: Option<Vec<ParameterKind>>,
        /// Tuned case path; defaults to `<case>_tuned.<ext>`
        #[arg(long)]
        out: Option<PathBuf>,
        /// Plan CSV path; defaults to `<out>` with extension `plan.csv`
        #[arg(long)]
        plan: Option<PathBuf>,
        #[command(flatten)]
        flags: StatFlags,
    },
    /// Render a markdown report from a stats bundle
    Report {
        bundle: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a branch CSV case drawn from a complete reference
    Synth {
        #[arg(long, default_value = "illustrative")]
        reference: String,
        /// Nominal voltages, comma separated
        #[arg(long, value_delimiter = ',', default_value = "138,230,345")]
        classes: Vec<u16>,
        /// Lines and transformers per class
        #[arg(long, default_value_t = 120)]
        per_class: usize,
        #[arg(long, env = "BRANCHSTAT_SEED", default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InsufficientData { .. } | Error::DegenerateSample(_) | Error::FitFailed(_) => EXIT_NO_DATA,
        Error::CannotTune { .. } | Error::ResampleExhausted { .. } | Error::NoFiniteMean { .. } => {
            EXIT_CANNOT_TUNE
        }
        _ => EXIT_INPUT,
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Analyze { cases, reference, out, plots, flags } => {
            cmd_analyze(&cases, &reference, &out, plots.as_deref(), &flags)
        }
        Command::Fit { cases, flags } => cmd_fit(&cases, &flags),
        Command::Validate { case, reference, out, flags } => cmd_validate(&case, &reference, out.as_deref(), &flags),
        Command::Tune { case, reference, params, out, plan, flags } => {
            cmd_tune(&case, &reference, params.as_deref(), out, plan, &flags)
        }
        Command::Report { bundle, out } => cmd_report(&bundle, out.as_deref()),
        Command::Synth { reference, classes, per_class, seed, out } => {
            cmd_synth(&reference, &classes, per_class, seed, &out)
        }
    }
}

fn resolve_reference(spec: &str) -> Result<ReferenceStats> {
    match spec {
        "bundled" => Ok(bundled_reference()),
        "illustrative" => Ok(illustrative_reference()),
        path => load_reference(Path::new(path)),
    }
}

/// Loads a case, reporting skipped rows on stderr. Parse errors carry the
/// file name.
fn load_case(path: &Path, s_base: Option<f64>) -> Result<(CaseSource, Vec<BranchRecord>)> {
    let mut source = CaseSource::new(path);
    source.s_base_override = s_base;
    let parsed = source.load().map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })?;
    for w in &parsed.warnings {
        eprintln!("warning: {}: {w}", path.display());
    }
    Ok((source, fill_line_lengths(parsed.records)))
}

fn case_name(paths: &[PathBuf]) -> String {
    paths
        .iter()
        .map(|p| p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned()))
        .collect::<Vec<_>>()
        .join("+")
}

fn load_all(paths: &[PathBuf], s_base: Option<f64>) -> Result<Vec<BranchRecord>> {
    let mut records = Vec::new();
    for p in paths {
        records.extend(load_case(p, s_base)?.1);
    }
    Ok(records)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn cmd_analyze(
    cases: &[PathBuf],
    reference: &str,
    out: &Path,
    plots: Option<&Path>,
    flags: &StatFlags,
) -> Result<i32> {
    let settings = flags.settings();
    let reference = resolve_reference(reference)?;
    let records = load_all(cases, flags.s_base)?;
    let name = case_name(cases);
    let bundle = analyze_case(&records, &name, &settings, &reference)?;
    if !bundle.has_data() {
        eprintln!("error: no parameter has enough data in {name}");
        return Ok(EXIT_NO_DATA);
    }
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    write_stats_bundle(&bundle, out)?;
    if let Some(dir) = plots {
        for (file, contents) in plot_files(&bundle) {
            write(&dir.join(file), &contents)?;
        }
    }
    print_summary(&bundle);
    println!("wrote {}", out.display());
    Ok(EXIT_OK)
}

fn print_summary(bundle: &StatsBundle) {
    println!("case {} (analysis, seed {})", bundle.case_name, bundle.settings.seed);
    for section in &bundle.parameters {
        let a = &section.analysis;
        let best = a.fits.first().map_or("n.d.".to_string(), |f| f.family().to_string());
        let law = a
            .power_fit
            .map_or(String::new(), |p| format!(", {:.4}·V^{:.4} r²={:.3}", p.a, p.b, p.r2));
        println!("  {:<28} n={:<6} best={best}{law}", a.parameter.label(), a.n_values);
    }
}

fn cmd_fit(cases: &[PathBuf], flags: &StatFlags) -> Result<i32> {
    let settings = flags.settings();
    settings.check()?;
    let records = load_all(cases, flags.s_base)?;
    let mut any = false;
    println!("seed {}", settings.seed);
    for parameter in ParameterKind::ALL {
        let (values, _) = extract_parameter(&records, parameter, settings.kv_tolerance);
        println!("{}", parameter.label());
        let mut groups: Vec<(String, Vec<f64>)> =
            vec![("all".into(), values.iter().map(|v| v.value).collect())];
        for (class, g) in crate::interdependence::group_by_class(&values) {
            groups.push((class.to_string(), g));
        }
        for (label, group) in groups {
            if group.len() < settings.min_count {
                continue;
            }
            let sample = crate::interdependence::clean_group(&group, settings.fence_multiplier)?;
            match best_fit(&sample, &Family::ALL, settings.n_bins) {
                Ok(ranked) => {
                    any = true;
                    let cells: Vec<String> = ranked
                        .ranked
                        .iter()
                        .map(|f| format!("{} KL={:.5}", f.params, f.kl_to_empirical))
                        .collect();
                    println!("  {label:<8} n={:<6} {}", sample.len(), cells.join(" | "));
                }
                Err(e) => println!("  {label:<8} n={:<6} {e}", sample.len()),
            }
        }
    }
    Ok(if any { EXIT_OK } else { EXIT_NO_DATA })
}

fn cmd_validate(case: &Path, reference: &str, out: Option<&Path>, flags: &StatFlags) -> Result<i32> {
    let settings = flags.settings();
    settings.check()?;
    let reference = resolve_reference(reference)?;
    let (_, records) = load_case(case, flags.s_base)?;
    let name = case_name(&[case.to_path_buf()]);
    let verdicts = validate_case(&records, &reference, &settings.validation())?;
    print!("{}", render_table(&verdicts, &name));
    println!("seed {}", settings.seed);
    if verdicts.iter().all(|v| v.overall == Verdict::NoData) {
        eprintln!("warning: no parameter could be judged against {}", reference.provenance);
    }
    if let Some(path) = out {
        write(path, &render_report(&verdicts, &name, &reference, &settings.validation(), settings.seed))?;
    }
    Ok(if any_tuning_required(&verdicts) { EXIT_TUNING_REQUIRED } else { EXIT_OK })
}

fn default_tuned_path(case: &Path) -> PathBuf {
    let stem = case.file_stem().map_or_else(|| "case".into(), |s| s.to_string_lossy().into_owned());
    let name = match case.extension() {
        Some(ext) => format!("{stem}_tuned.{}", ext.to_string_lossy()),
        None => format!("{stem}_tuned"),
    };
    case.with_file_name(name)
}

fn cmd_tune(
    case: &Path,
    reference: &str,
    params: Option<&[ParameterKind]>,
    out: Option<PathBuf>,
    plan_path: Option<PathBuf>,
    flags: &StatFlags,
) -> Result<i32> {
    let settings = flags.settings();
    settings.check()?;
    let reference = resolve_reference(reference)?;
    let (source, records) = load_case(case, flags.s_base)?;
    let out = out.unwrap_or_else(|| default_tuned_path(case));
    let plan_path = plan_path.unwrap_or_else(|| out.with_extension("plan.csv"));

    let targets: Vec<(ParameterKind, VoltageClass)> = match params {
        Some(list) => {
            let mut t = Vec::new();
            for &p in list {
                let (values, _) = extract_parameter(&records, p, settings.kv_tolerance);
                for class in crate::interdependence::group_by_class(&values).into_keys() {
                    t.push((p, class));
                }
            }
            t
        }
        None => failures(&validate_case(&records, &reference, &settings.validation())?),
    };
    if targets.is_empty() {
        println!("nothing to tune: no parameter needs tuning (seed {})", settings.seed);
        return Ok(EXIT_OK);
    }

    let plan = tune_case(&records, &reference, &targets, &SeededRng::new(settings.seed), settings.kv_tolerance)?;
    let mut tuned = apply_plan(&records, &plan)?;
    for r in tuned.iter_mut().filter(|r| r.length_estimated) {
        r.length_km = None;
        r.length_estimated = false;
    }
    let text = match source.format {
        CaseFormat::MatpowerSubset => rewrite_matpower(&source.read_text()?, &tuned)?,
        CaseFormat::BranchCsv => write_branch_csv(&tuned),
    };
    write(&out, &text)?;
    write(&plan_path, &plan.to_csv())?;

    println!("tuned {} values in {} (parameter, class) groups, seed {}", plan.len(), targets.len(), settings.seed);
    for (p, class) in &targets {
        let n = plan.entries.iter().filter(|e| e.parameter == *p && e.voltage_class == *class).count();
        let source = plan
            .entries
            .iter()
            .find(|e| e.parameter == *p && e.voltage_class == *class)
            .map_or("", |e| e.source.as_str());
        println!("  {} at {class}: {n} branches from {source}", p.label());
    }
    println!("wrote {} and {}", out.display(), plan_path.display());
    Ok(EXIT_OK)
}

fn cmd_report(bundle: &Path, out: Option<&Path>) -> Result<i32> {
    let bundle = load_stats_bundle(bundle)?;
    let report = render_bundle_report(&bundle);
    match out {
        Some(path) => write(path, &report)?,
        None => print!("{report}"),
    }
    Ok(EXIT_OK)
}

fn cmd_synth(reference: &str, classes: &[u16], per_class: usize, seed: u64, out: &Path) -> Result<i32> {
    let reference = resolve_reference(reference)?;
    for &kv in classes {
        if !crate::grid_model::CANONICAL_KV.contains(&kv) {
            return Err(Error::invalid(format!("{kv} kV is not a nominal voltage level")));
        }
    }
    let records = synthesize_case(&reference, classes, per_class, seed)?;
    write(out, &write_branch_csv(&records))?;
    println!("wrote {} branches to {} (seed {seed})", records.len(), out.display());
    Ok(EXIT_OK)
}
