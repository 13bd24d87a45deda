//! Acceptance criteria, run sequentially with one PASS/FAIL line each.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use branchstat::cli;
use branchstat::grid_model::{BaseQuantities, BranchKind, BranchRecord, ParameterKind, CANONICAL_KV};
use branchstat::ingest::write_branch_csv;
use branchstat::interdependence::{bundled_reference, fit_power_points};
use branchstat::per_unit::{convert_pu, distributed_reactance};
use branchstat::reference::illustrative_reference;
use branchstat::rng::SeededRng;
use branchstat::stats::{
    fit_gev, gev_cdf, kl_divergence, remove_outliers, CleanSample, DistParams, GevParams, Histogram, NormalParams,
    EXTREME_FENCE,
};
use branchstat::synthesis::{sample_gev, sample_normal, set_parameter, synthesize_case};
use branchstat::validate::{render_table, validate_case, ValidationSettings, ValidationVerdict, Verdict};

fn uniform(rng: &mut SeededRng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.next_open01()
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs())
}

fn random_mass(rng: &mut SeededRng, n: usize, allow_zero: bool) -> Vec<f64> {
    let w: Vec<f64> = (0..n)
        .map(|_| {
            let u = rng.next_open01();
            if allow_zero && u < 0.2 {
                0.0
            } else {
                u
            }
        })
        .collect();
    let total: f64 = w.iter().sum();
    if total == 0.0 {
        let mut w = vec![0.0; n];
        w[0] = 1.0;
        return w;
    }
    w.iter().map(|x| x / total).collect()
}

fn line(id: &str, x_pu: f64, kv: f64, s_base: f64, length_km: f64) -> BranchRecord {
    BranchRecord {
        id: id.into(),
        kind: BranchKind::Line,
        from_bus: None,
        to_bus: None,
        x_pu,
        r_pu: x_pu / 10.0,
        system_base: BaseQuantities::new(kv, s_base).unwrap(),
        rating_mva: Some(100.0),
        kv_high: kv,
        kv_low: kv,
        length_km: Some(length_km),
        length_estimated: false,
        endpoints_geo: None,
    }
}

fn criterion_1() {
    let mut rng = SeededRng::new(42);
    for _ in 0..100 {
        let n = 2 + (rng.next_u64() % 63) as usize;
        let edges: Vec<f64> = (0..=n).map(|i| i as f64).collect();
        let p = random_mass(&mut rng, n, true);
        let q = random_mass(&mut rng, n, false);
        let hist = Histogram::from_mass(edges.clone(), p.clone(), 1000).unwrap();
        let got = kl_divergence(&hist, &edges, &q).unwrap();
        let oracle: f64 = p
            .iter()
            .zip(&q)
            .filter(|(pi, _)| **pi > 0.0)
            .map(|(pi, qi)| pi * (pi.ln() - qi.ln()))
            .sum();
        assert!((got - oracle).abs() <= 1e-12, "kl {got} vs oracle {oracle}");
        assert!(kl_divergence(&hist, &edges, &p).unwrap().abs() <= 1e-12);
    }
    let edges = vec![0.0, 1.0, 2.0];
    let hist = Histogram::from_mass(edges.clone(), vec![0.5, 0.5], 2).unwrap();
    let kl = kl_divergence(&hist, &edges, &[0.25, 0.75]).unwrap();
    assert!((kl - 0.143841).abs() <= 1e-6, "hand case {kl}");
}

fn criterion_2() {
    let mut rng = SeededRng::new(7);
    for _ in 0..1000 {
        let a = BaseQuantities::new(uniform(&mut rng, 1.0, 800.0), uniform(&mut rng, 1.0, 1000.0)).unwrap();
        let b = BaseQuantities::new(uniform(&mut rng, 1.0, 800.0), uniform(&mut rng, 1.0, 1000.0)).unwrap();
        let z = uniform(&mut rng, 1e-4, 2.0);
        let back = convert_pu(convert_pu(z, a, b).unwrap(), b, a).unwrap();
        assert!(rel_close(back, z, 1e-12), "{z} -> {back}");
        let direct = z * (a.v_base / b.v_base).powi(2) * (b.s_base / a.s_base);
        assert!(rel_close(convert_pu(z, a, b).unwrap(), direct, 1e-12));
    }
    let doubled = convert_pu(
        0.10,
        BaseQuantities::new(138.0, 100.0).unwrap(),
        BaseQuantities::new(138.0, 200.0).unwrap(),
    )
    .unwrap();
    assert_eq!(format!("{doubled:.2}"), "0.20");
    let revolted = convert_pu(
        0.05,
        BaseQuantities::new(138.0, 100.0).unwrap(),
        BaseQuantities::new(115.0, 100.0).unwrap(),
    )
    .unwrap();
    assert_eq!(format!("{revolted:.3}"), "0.072");
}

fn criterion_3() {
    let x = distributed_reactance(&line("L", 0.01, 230.0, 100.0, 10.0)).unwrap();
    assert!((x - 0.529).abs() <= 1e-9, "{x}");
    let mut rng = SeededRng::new(3);
    for i in 0..1000 {
        let kv = f64::from(CANONICAL_KV[i % CANONICAL_KV.len()]);
        let l = uniform(&mut rng, 0.5, 300.0);
        let k = uniform(&mut rng, 1.1, 10.0);
        let rec = line("L", uniform(&mut rng, 1e-4, 0.2), kv, uniform(&mut rng, 10.0, 1000.0), l);
        let mut longer = rec.clone();
        longer.length_km = Some(k * l);
        let x1 = distributed_reactance(&rec).unwrap();
        let xk = distributed_reactance(&longer).unwrap();
        assert!(rel_close(x1, k * xk, 1e-12), "{x1} vs {k}·{xk}");
    }
}

fn criterion_4() {
    let mut rng = SeededRng::new(11);
    for _ in 0..100 {
        let params = GevParams {
            zeta: uniform(&mut rng, -1.0, 1.0),
            mu: uniform(&mut rng, -500.0, 500.0),
            sigma: uniform(&mut rng, 0.01, 100.0),
        };
        let c = gev_cdf(params.mu, &params).unwrap();
        assert!((c - (-1.0f64).exp()).abs() <= 1e-12, "{params:?}: {c}");
    }
    let truth = GevParams {
        zeta: 0.1,
        mu: 100.0,
        sigma: 30.0,
    };
    let values = sample_gev(truth, &mut SeededRng::new(42), 10_000);
    let fit = fit_gev(&CleanSample::from_values(values).unwrap(), 50).unwrap();
    let DistParams::Gev(g) = fit.params else {
        panic!("not a GEV fit")
    };
    assert!((g.zeta - 0.1).abs() <= 0.05, "zeta {}", g.zeta);
    assert!((g.mu - 100.0).abs() <= 2.0, "mu {}", g.mu);
    assert!((g.sigma - 30.0).abs() <= 2.0, "sigma {}", g.sigma);
}

fn criterion_5() {
    let truths = [(2.0, 1.5), (0.172, 1.332), (5.0, 0.95)];
    for (i, &(a, b)) in truths.iter().enumerate() {
        let exact: Vec<(f64, f64)> = CANONICAL_KV
            .iter()
            .map(|&kv| (f64::from(kv), a * f64::from(kv).powf(b)))
            .collect();
        let fit = fit_power_points(&exact).unwrap();
        assert!(rel_close(fit.a, a, 1e-6), "a {} vs {a}", fit.a);
        assert!(rel_close(fit.b, b, 1e-6), "b {} vs {b}", fit.b);

        let mut rng = SeededRng::new(42).split(i as u64);
        let noisy: Vec<(f64, f64)> = exact
            .iter()
            .map(|&(kv, y)| (kv, y * (1.0 + 0.05 * (2.0 * rng.next_open01() - 1.0))))
            .collect();
        let fit = fit_power_points(&noisy).unwrap();
        assert!((fit.b - b).abs() <= 0.15, "noisy b {} vs {b}", fit.b);
    }
}

fn criterion_6() {
    let reference = bundled_reference();
    let cap = reference.get(ParameterKind::XfmrCapacityMva).unwrap();
    let law = cap.power_law.as_ref().unwrap();
    assert_eq!(law.a.get(), Some(0.172));
    assert_eq!(law.b.get(), Some(1.332));
    let at_230 = law.predict(230.0).unwrap();
    assert!((at_230 - 240.6).abs() <= 0.5, "{at_230}");
    let xr = reference.get(ParameterKind::LineXOverR).unwrap();
    assert_eq!(xr.power_law.as_ref().unwrap().b.get(), Some(0.95));
    let own = reference.get(ParameterKind::XfmrXpuOwnBase).unwrap();
    assert_eq!(own.independent_range, Some((0.0, 0.25)));
}

fn hand_built(cells: [Verdict; 7]) -> Vec<ValidationVerdict> {
    ParameterKind::ALL
        .iter()
        .zip(cells)
        .map(|(&parameter, overall)| ValidationVerdict {
            parameter,
            classes: Vec::new(),
            overall,
            notes: Vec::new(),
        })
        .collect()
}

fn run_cli(args: &[&str]) -> i32 {
    let mut full = vec!["branchstat"];
    full.extend_from_slice(args);
    cli::run(full)
}

fn scaled_capacity(records: &[BranchRecord]) -> Vec<BranchRecord> {
    let mut scaled = records.to_vec();
    for r in scaled.iter_mut().filter(|r| r.kind == BranchKind::Transformer) {
        let cap = r.rating_mva.unwrap();
        set_parameter(r, ParameterKind::XfmrCapacityMva, 10.0 * cap).unwrap();
    }
    scaled
}

fn criterion_7() {
    use Verdict::*;
    let table = render_table(&hand_built([Pass, TuningRequired, Pass, Pass, Pass, Pass, Pass]), "case A");
    let cells: Vec<&str> = table.lines().skip(2).map(|l| l.rsplit('\t').next().unwrap()).collect();
    assert_eq!(cells, ["✓", "TR", "✓", "✓", "✓", "✓", "✓"]);
    let labels: Vec<&str> = table.lines().skip(2).map(|l| l.split('\t').next().unwrap()).collect();
    let expected: Vec<&str> = ParameterKind::ALL.iter().map(|p| p.label()).collect();
    assert_eq!(labels, expected);

    let reference = illustrative_reference();
    let settings = ValidationSettings::default();
    let records = synthesize_case(&reference, &[138, 230, 345], 120, 42).unwrap();
    for class in [138, 230, 345] {
        let n = records
            .iter()
            .filter(|r| r.kind == BranchKind::Transformer && r.kv_high == f64::from(class))
            .count();
        assert!(n >= 100);
    }
    let verdicts = validate_case(&records, &reference, &settings).unwrap();
    assert!(verdicts.iter().all(|v| v.overall == Pass), "conforming case");

    let scaled = scaled_capacity(&records);
    let verdicts = validate_case(&scaled, &reference, &settings).unwrap();
    for v in &verdicts {
        let want = if v.parameter == ParameterKind::XfmrCapacityMva {
            TuningRequired
        } else {
            Pass
        };
        assert_eq!(v.overall, want, "{:?}", v.parameter);
    }
    assert!(verdicts[2].classes.iter().all(|c| c.verdict == TuningRequired));

    let dir = tempfile::tempdir().unwrap();
    let case = dir.path().join("scaled.csv");
    fs::write(&case, write_branch_csv(&scaled)).unwrap();
    let tuned = dir.path().join("tuned.csv");
    let case_s = case.to_str().unwrap();
    let tuned_s = tuned.to_str().unwrap();
    assert_eq!(run_cli(&["validate", case_s, "--reference", "illustrative"]), 1);
    assert_eq!(
        run_cli(&["tune", case_s, "--reference", "illustrative", "--out", tuned_s, "--seed", "42"]),
        0
    );
    assert_eq!(run_cli(&["validate", tuned_s, "--reference", "illustrative"]), 0);
}

fn criterion_8() {
    let clean = remove_outliers(&[1.0, 2.0, 3.0, 4.0, 100.0], EXTREME_FENCE).unwrap();
    assert_eq!(clean.removed_outliers, vec![100.0]);
    assert_eq!(clean.values, vec![1.0, 2.0, 3.0, 4.0]);
    let root = SeededRng::new(42);
    for trial in 0..50 {
        let values = sample_normal(NormalParams { mu: 0.0, sigma: 1.0 }, &mut root.split(trial), 1000);
        let clean = remove_outliers(&values, EXTREME_FENCE).unwrap();
        let rate = clean.removed_outliers.len() as f64 / values.len() as f64;
        assert!(rate < 0.05, "trial {trial}: {rate}");
    }
}

fn analyze_and_tune(dir: &Path, case_text: &str) -> Vec<(String, Vec<u8>)> {
    let case = dir.join("toy.csv");
    fs::write(&case, case_text).unwrap();
    let case_s = case.to_str().unwrap();
    let stats = dir.join("stats.json");
    let plots = dir.join("plots");
    assert_eq!(
        run_cli(&[
            "analyze",
            case_s,
            "--reference",
            "illustrative",
            "--seed",
            "42",
            "--out",
            stats.to_str().unwrap(),
            "--plots",
            plots.to_str().unwrap(),
        ]),
        0
    );
    assert_eq!(
        run_cli(&["tune", case_s, "--reference", "illustrative", "--seed", "42"]),
        0
    );
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let name = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                files.push((name, fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

fn criterion_9() {
    let records = synthesize_case(&illustrative_reference(), &[138, 230, 345], 120, 42).unwrap();
    let text = write_branch_csv(&scaled_capacity(&records));
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let a = analyze_and_tune(first.path(), &text);
    let b = analyze_and_tune(second.path(), &text);
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    assert!(names.contains(&"stats.json"));
    assert!(names.contains(&"toy_tuned.csv"));
    assert!(names.contains(&"toy_tuned.plan.csv"));
    assert!(names.len() > 4);
    assert_eq!(a.len(), b.len());
    for ((na, ba), (nb, bb)) in a.iter().zip(&b) {
        assert_eq!(na, nb);
        assert!(ba == bb, "{na} differs between runs");
    }
}

fn main() {
    let criteria: [(&str, fn(), Option<Duration>); 9] = [
        ("KL oracle equivalence", criterion_1, Some(Duration::from_secs(1))),
        ("per-unit algebra", criterion_2, Some(Duration::from_secs(1))),
        ("distributed reactance", criterion_3, None),
        ("GEV correctness", criterion_4, Some(Duration::from_secs(30))),
        ("power-fit recovery", criterion_5, Some(Duration::from_secs(1))),
        ("reference constants", criterion_6, None),
        ("table mechanics and tuning", criterion_7, Some(Duration::from_secs(60))),
        ("outlier removal", criterion_8, None),
        ("determinism", criterion_9, None),
    ];
    let mut failed = 0;
    for (i, (name, run, bound)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run));
        let elapsed = start.elapsed();
        let slow = bound.is_some_and(|b| elapsed > b);
        let pass = outcome.is_ok() && !slow;
        if !pass {
            failed += 1;
        }
        let bound_text = bound.map_or(String::new(), |b| format!(" (bound {} s)", b.as_secs()));
        println!(
            "criterion {}: {} {name} in {:.3} s{bound_text}",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
    println!("{} of 9 criteria passed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
