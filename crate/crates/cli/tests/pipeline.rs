//! End-to-end CLI behavior on a small synthetic world: command wiring, exit
//! codes, degraded modes (missing or corrupt inputs), and the blindness
//! guarantees of `estimate`.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use matchbias_cli::report::{ReportBundle, VerifyReport};
use matchbias_cli::schema;
use tempfile::TempDir;

// `spline_knots` must leave the (knots + 2)-function basis no wider than the
// 9 count buckets an 8-annotator world produces.
const SMALL_CONFIG: &str = "\
items_per_dataset = 400
annotators = 8
em_components = 2
em_restarts = 3
resamples = 40
sample_size = 150
spline_knots = 5
";

fn mb(out: &Path, args: &[&str]) -> i32 {
    let mut argv: Vec<OsString> = vec!["matchbias".into(), "--out".into(), out.into()];
    argv.extend(args.iter().map(OsString::from));
    matchbias_cli::run(argv)
}

/// Temp dir with the small config written; returns (dir, config-flag value).
fn world() -> (TempDir, String) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.txt");
    fs::write(&cfg, SMALL_CONFIG).unwrap();
    (dir, cfg.to_str().unwrap().to_string())
}

fn run_ok(dir: &Path, cfg: &str, args: &[&str]) {
    let mut full = vec!["--config", cfg, "--seed", "5"];
    full.extend(args);
    let code = mb(dir, &full);
    assert_eq!(code, 0, "{args:?} exited {code}");
}

#[test]
fn full_pipeline_produces_consistent_artifacts() {
    let (dir, cfg) = world();
    let out = dir.path();

    run_ok(out, &cfg, &["simulate"]);
    for file in ["annotations.csv", "correctness.csv", "truth.csv"] {
        assert!(out.join(file).exists(), "{file} missing after simulate");
    }

    run_ok(out, &cfg, &["match"]);
    let matched = schema::read_matched(&out.join("matched.csv")).unwrap();
    assert_eq!(matched.len(), 150);

    run_ok(out, &cfg, &["estimate"]);
    run_ok(out, &cfg, &["verify"]);
    for kind in [
        "histograms",
        "conditional_accuracy",
        "subsample_curve",
        "jackknife_linearity",
        "fit_overlay",
        "scatter",
    ] {
        run_ok(out, &cfg, &["series", "--which", kind]);
        assert!(out.join(format!("series_{kind}.csv")).exists());
    }
    run_ok(out, &cfg, &["em-fit", "--dataset", "candidate"]);
    run_ok(out, &cfg, &["spline-fit"]);
    // Second estimate sees the series files and lists them in the manifest.
    run_ok(out, &cfg, &["estimate"]);

    let report: ReportBundle =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.schema_version, 1);
    assert_eq!(report.seed, 5);
    assert_eq!(report.n_annotators, Some(8));
    assert!(report.stage_errors.is_empty(), "{:?}", report.stage_errors);
    assert_eq!(report.datasets["v1"].records, 400);
    assert_eq!(report.datasets["candidate"].records, 400);
    assert_eq!(report.datasets["v2"].records, 150);
    assert_eq!(report.series_manifest.len(), 6);
    assert!(report.em_fits.contains_key("v1") && report.em_fits.contains_key("candidate"));
    assert_eq!(report.em_fits["v1"].components.len(), 2);

    let model = &report.models["model-00"];
    for value in [
        model.raw_v1,
        model.raw_v2,
        model.naive.as_ref().map(|n| n.estimate),
        model.jackknife.as_ref().map(|j| j.estimate),
        model.parametric.as_ref().map(|p| p.estimate),
    ] {
        let v = value.expect("every stage present on the happy path");
        assert!((0.0..=1.0).contains(&v) || v.is_finite(), "estimate {v} out of range");
    }
    let gap = model.gap_naive.as_ref().unwrap();
    assert!(
        (gap.total_gap - (gap.bias_corrected_gap + gap.selection_gap + gap.finite_sample_gap))
            .abs()
            < 1e-12
    );

    let verify: VerifyReport =
        serde_json::from_str(&fs::read_to_string(out.join("verify.json")).unwrap()).unwrap();
    assert_eq!(verify.config_hash, report.config_hash);
    let errors = &verify.models["model-00"].errors;
    for key in ["raw_v1", "raw_v2", "naive", "jackknife", "parametric"] {
        assert!(errors[key].is_finite(), "verify error {key} not finite");
    }

    // Histogram series: per-dataset fractions sum to 1.
    let rows = schema::read_series(&out.join("series_histograms.csv")).unwrap();
    for name in ["v1", "candidate", "v2"] {
        let total: f64 = rows.iter().filter(|r| r.series == name).map(|r| r.y).sum();
        assert!((total - 1.0).abs() < 1e-9, "{name} histogram sums to {total}");
    }

    // Fit overlay: three labeled series per fitted dataset.
    let rows = schema::read_series(&out.join("series_fit_overlay.csv")).unwrap();
    for dataset in ["v1", "candidate"] {
        for part in ["observed", "fitted_counts", "latent"] {
            let name = format!("{dataset}:{part}");
            assert!(rows.iter().any(|r| r.series == name), "missing series {name}");
        }
    }

    // Standalone fit files parse and carry the same config hash.
    let em: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("em_fit_candidate.json")).unwrap())
            .unwrap();
    assert_eq!(em["config_hash"], serde_json::json!(report.config_hash));
    let spline: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("spline_fit.json")).unwrap()).unwrap();
    assert!(spline["models"]["model-00"]["estimate"].as_f64().unwrap().is_finite());

    assert!(out.join("report.meta.json").exists());
}

#[test]
fn estimate_is_blind_to_ground_truth() {
    let (dir, cfg) = world();
    let out = dir.path();
    run_ok(out, &cfg, &["simulate"]);

    // The flag is rejected outright.
    let code = mb(out, &["--config", &cfg, "estimate", "--truth", "truth.csv"]);
    assert_eq!(code, 1);

    // Pointing the annotations input at the truth table is refused by name…
    let code = mb(out, &["--config", &cfg, "estimate", "--annotations", "truth.csv"]);
    assert_eq!(code, 1);

    // …and by header sniffing when the name gives nothing away.
    let disguised = out.join("data.csv");
    fs::copy(out.join("truth.csv"), &disguised).unwrap();
    let code = mb(
        out,
        &["--config", &cfg, "estimate", "--annotations", disguised.to_str().unwrap()],
    );
    assert_eq!(code, 1);
}

#[test]
fn missing_inputs_are_prerequisite_errors() {
    let (dir, cfg) = world();
    let out = dir.path();
    assert_eq!(mb(out, &["--config", &cfg, "estimate"]), 2);
    assert_eq!(mb(out, &["--config", &cfg, "verify"]), 2);
    assert_eq!(mb(out, &["--config", &cfg, "series", "--which", "histograms"]), 2);
    assert_eq!(mb(out, &["--config", &cfg, "spline-fit"]), 2);
}

#[test]
fn missing_correctness_degrades_but_still_reports() {
    let (dir, cfg) = world();
    let out = dir.path();
    run_ok(out, &cfg, &["simulate"]);
    run_ok(out, &cfg, &["match"]);
    fs::remove_file(out.join("correctness.csv")).unwrap();

    run_ok(out, &cfg, &["estimate"]);
    let report: ReportBundle =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(report.stage_errors.contains_key("correctness"));
    assert!(report.models.is_empty(), "no model stages without correctness");
    // The blind stages that need only annotations still ran.
    assert!(report.em_fits.contains_key("v1"));
    assert_eq!(report.datasets["v2"].records, 150);
}

#[test]
fn corrupt_annotations_fail_with_schema_error() {
    let (dir, cfg) = world();
    let out = dir.path();
    run_ok(out, &cfg, &["simulate"]);
    let path = out.join("annotations.csv");
    let mut text = fs::read_to_string(&path).unwrap();
    text.push_str("zz,v1,0,8,2,11000000\n");
    fs::write(&path, text).unwrap();
    assert_eq!(mb(out, &["--config", &cfg, "estimate"]), 2);
}

#[test]
fn verify_rejects_mismatched_truth_or_config() {
    let (dir, cfg) = world();
    let out = dir.path();
    for cmd in ["simulate", "match", "estimate"] {
        run_ok(out, &cfg, &[cmd]);
    }

    // Different resolved config (seed) than the report's → refused.
    assert_eq!(mb(out, &["--config", &cfg, "--seed", "6", "verify"]), 2);

    // Truth table covering a different item set → refused.
    let truth_path = out.join("truth.csv");
    let mut truth = schema::read_truth(&truth_path).unwrap();
    truth.pop();
    schema::write_truth(&truth_path, &truth).unwrap();
    assert_eq!(mb(out, &["--config", &cfg, "--seed", "5", "verify"]), 2);
}

#[test]
fn zero_item_world_round_trips_as_headers() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let cfg_path = out.join("config.txt");
    fs::write(&cfg_path, "items_per_dataset = 0\nannotators = 8\n").unwrap();
    let cfg = cfg_path.to_str().unwrap().to_string();

    assert_eq!(mb(out, &["--config", &cfg, "simulate"]), 0);
    for file in ["annotations.csv", "correctness.csv", "truth.csv"] {
        let text = fs::read_to_string(out.join(file)).unwrap();
        assert_eq!(text.lines().count(), 1, "{file} should be header-only");
    }

    // Estimation degrades to a report full of stage errors, not a crash.
    assert_eq!(mb(out, &["--config", &cfg, "estimate"]), 0);
    let report: ReportBundle =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(!report.stage_errors.is_empty());
    assert!(report.datasets.is_empty() || report.datasets.values().all(|d| d.records == 0));
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();

    // Unknown subcommand / flag.
    assert_eq!(mb(out, &["frobnicate"]), 1);
    assert_eq!(mb(out, &["--bogus", "simulate"]), 1);

    // Unknown config key and unparseable value, via the dispatch path.
    let bad_key = out.join("bad_key.txt");
    fs::write(&bad_key, "mystery = 1\n").unwrap();
    assert_eq!(mb(out, &["--config", bad_key.to_str().unwrap(), "simulate"]), 1);
    let bad_value = out.join("bad_value.txt");
    fs::write(&bad_value, "annotators = banana\n").unwrap();
    assert_eq!(mb(out, &["--config", bad_value.to_str().unwrap(), "simulate"]), 1);

    // Missing config file is a config error, not an I/O crash.
    assert_eq!(mb(out, &["--config", "/nonexistent/x.txt", "simulate"]), 1);

    // Bad em-fit dataset name.
    assert_eq!(mb(out, &["em-fit", "--dataset", "moon"]), 1);

    // Help and version are not errors.
    assert_eq!(mb(out, &["--help"]), 0);
    assert_eq!(mb(out, &["--version"]), 0);
}

#[test]
fn simulate_outputs_are_seed_deterministic() {
    let (dir_a, cfg_a) = world();
    let (dir_b, cfg_b) = world();
    run_ok(dir_a.path(), &cfg_a, &["simulate"]);
    run_ok(dir_b.path(), &cfg_b, &["simulate"]);
    for file in ["annotations.csv", "correctness.csv", "truth.csv"] {
        assert_eq!(
            fs::read(dir_a.path().join(file)).unwrap(),
            fs::read(dir_b.path().join(file)).unwrap(),
            "{file} differs between same-seed runs"
        );
    }

    // A different seed produces different data (not just different metadata).
    let code = mb(dir_b.path(), &["--config", &cfg_b, "--seed", "6", "simulate"]);
    assert_eq!(code, 0);
    assert_ne!(
        fs::read(dir_a.path().join("annotations.csv")).unwrap(),
        fs::read(dir_b.path().join("annotations.csv")).unwrap()
    );
}

#[test]
fn all_correct_world_reports_unit_estimates() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let cfg_path = out.join("config.txt");
    // Default world size: the spline deconvolution needs the full count
    // range to stay conditioned. Only the EM budget is trimmed for speed.
    fs::write(
        &cfg_path,
        "em_components = 2\nem_restarts = 6\nresamples = 80\ncurve = constant\ncurve_value = 1\n",
    )
    .unwrap();
    let cfg = cfg_path.to_str().unwrap().to_string();
    for cmd in ["simulate", "match", "estimate", "verify"] {
        run_ok(out, &cfg, &[cmd]);
    }

    let report: ReportBundle =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let model = &report.models["model-00"];
    assert_eq!(model.raw_v1, Some(1.0));
    assert_eq!(model.raw_v2, Some(1.0));
    assert!((model.naive.as_ref().unwrap().estimate - 1.0).abs() < 1e-12);
    assert!((model.jackknife.as_ref().unwrap().estimate - 1.0).abs() < 1e-12);
    // A curve pinned at 1.0 sits on the clamp boundary of the spline fit:
    // the estimate is close but carries the designed clamp warning.
    let parametric = model.parametric.as_ref().unwrap();
    assert!((parametric.estimate - 1.0).abs() < 0.05);
    assert!(parametric.clamp_warning);

    let verify: VerifyReport =
        serde_json::from_str(&fs::read_to_string(out.join("verify.json")).unwrap()).unwrap();
    assert!((verify.oracle_adjusted_accuracy - 1.0).abs() < 1e-9);
    let errors = &verify.models["model-00"].errors;
    for key in ["raw_v1", "raw_v2", "naive", "jackknife"] {
        assert!(errors[key] < 1e-9, "{key} error {} should vanish", errors[key]);
    }
}

#[test]
fn subsample_gap_grows_as_annotators_shrink() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let cfg_path = out.join("config.txt");
    fs::write(
        &cfg_path,
        "items_per_dataset = 6000\nsample_size = 1500\n",
    )
    .unwrap();
    let cfg = cfg_path.to_str().unwrap().to_string();
    run_ok(out, &cfg, &["simulate"]);
    run_ok(out, &cfg, &["series", "--which", "subsample_curve"]);

    let rows = schema::read_series(&out.join("series_subsample_curve.csv")).unwrap();
    let gaps: Vec<(u32, f64)> = rows
        .iter()
        .filter(|r| r.series == "gap:model-00")
        .map(|r| (r.x as u32, r.y))
        .collect();
    assert_eq!(gaps.iter().map(|&(n, _)| n).collect::<Vec<_>>(), vec![5, 8, 10, 20, 40]);

    let gap_at = |n: u32| gaps.iter().find(|&&(c, _)| c == n).unwrap().1;
    let (first, last) = (gap_at(5), gap_at(40));
    let max = gaps.iter().map(|&(_, g)| g).fold(f64::MIN, f64::max);
    assert!(
        first > last && (first - max).abs() < 1e-12 && first > 0.0,
        "gap should peak at the fewest annotators: {gaps:?}"
    );
}

#[test]
fn oversized_spline_basis_degrades_to_a_stage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let cfg_path = out.join("config.txt");
    // Default spline_knots = 8 → 10 basis functions, but 8 annotators give
    // only 9 count buckets: the parametric stage must fail in isolation.
    fs::write(
        &cfg_path,
        "items_per_dataset = 400\nannotators = 8\nem_components = 2\nem_restarts = 3\nresamples = 40\nsample_size = 150\n",
    )
    .unwrap();
    let cfg = cfg_path.to_str().unwrap().to_string();
    for cmd in ["simulate", "match", "estimate"] {
        run_ok(out, &cfg, &[cmd]);
    }
    let report: ReportBundle =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(report.stage_errors.contains_key("parametric:model-00"));
    let model = &report.models["model-00"];
    assert!(model.parametric.is_none());
    assert!(model.naive.is_some() && model.jackknife.is_some(), "other stages unaffected");
}

#[test]
fn em_fit_without_derivable_dataset_is_a_data_error() {
    let (dir, cfg) = world();
    let out = dir.path();
    run_ok(out, &cfg, &["simulate"]);
    // No matched.csv and no explicit v2 rows → the v2 dataset is empty.
    assert_eq!(mb(out, &["--config", &cfg, "em-fit", "--dataset", "v2"]), 2);
}
