//! `estimate`: run every estimator stage over the annotation and
//! correctness tables and write one JSON report.
//!
//! Stages run in dependency order — raw accuracies, count-bucket
//! reweighting, jackknife correction, latent-density EM, spline-recovered
//! parametric adjustment — and fail independently: a broken stage lands in
//! `stage_errors` under `stage:model` while everything else proceeds. The
//! command only fails as a whole when the annotation table itself is
//! unreadable (or ground truth is smuggled in; estimation is blind by
//! contract).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use matchbias::estimators::{
    bootstrap_ci, gap_decomposition, jackknife_naive_adjusted, naive_adjusted_accuracy,
    raw_accuracy,
};
use matchbias::parametric::fit_report;
use matchbias::quad::QuadratureGrid;
use matchbias::rng::derive_seed;
use matchbias::synthpop::{common_annotator_count, AnnotationRecord, DatasetTag};

use crate::commands::{
    bits_for, correctness_by_model, derive_v2, mean_observed_frequency, records_of, run_em,
    scan_series_manifest, TAG_BOOTSTRAP,
};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::report::{
    self, DatasetSummary, GapStage, JackknifeStage, ModelReport, NaiveStage, ParametricStage,
    ReportBundle, REPORT_SCHEMA_VERSION,
};
use crate::schema;

pub fn cmd_estimate(
    cfg: &RunConfig,
    out: &Path,
    annotations_override: Option<&Path>,
    correctness_override: Option<&Path>,
) -> Result<()> {
    let ann_path = resolve_input(out, annotations_override, &cfg.annotations_file);
    let corr_path = resolve_input(out, correctness_override, &cfg.correctness_file);
    refuse_ground_truth(&ann_path, cfg)?;
    refuse_ground_truth(&corr_path, cfg)?;

    let rows = schema::read_annotations(&ann_path)?;
    let mut stage_errors: BTreeMap<String, String> = BTreeMap::new();

    let matched_path = cfg.matched_path(out);
    let matched: Option<Vec<u64>> = if matched_path.exists() {
        Some(schema::read_matched(&matched_path)?)
    } else {
        None
    };

    let v1 = records_of(&rows, DatasetTag::V1);
    let candidate = records_of(&rows, DatasetTag::Candidate);
    let (v2, _v2_from_match) = derive_v2(&rows, matched.as_deref());

    let n_annotators = {
        let all: Vec<AnnotationRecord> = rows.iter().map(|r| r.record.clone()).collect();
        match common_annotator_count(&all) {
            Ok(n) => Some(n),
            Err(e) => {
                stage_errors.insert("annotator_count".into(), e.to_string());
                None
            }
        }
    };

    let mut datasets = BTreeMap::new();
    for (name, records) in [("v1", &v1), ("candidate", &candidate), ("v2", &v2)] {
        if records.is_empty() && name == "v2" {
            continue;
        }
        datasets.insert(
            name.to_string(),
            DatasetSummary {
                records: records.len(),
                id_digest: report::id_digest(records.iter().map(|r| r.item_id)),
                mean_observed_frequency: mean_observed_frequency(records),
            },
        );
    }
    let all_items_digest = report::id_digest(rows.iter().map(|r| r.record.item_id));

    // Latent-density fits; downstream parametric stages consume these.
    let mut em_fits = BTreeMap::new();
    let mut mixtures = BTreeMap::new();
    for (name, tag, records) in [
        ("v1", DatasetTag::V1, &v1),
        ("candidate", DatasetTag::Candidate, &candidate),
    ] {
        match run_em(records, cfg, tag) {
            Ok((stage, mixture)) => {
                em_fits.insert(name.to_string(), stage);
                mixtures.insert(name.to_string(), mixture);
            }
            Err(e) => {
                stage_errors.insert(format!("em:{name}"), e.to_string());
            }
        }
    }

    let correctness = match schema::read_correctness(&corr_path) {
        Ok(c) => Some(c),
        Err(e) => {
            stage_errors.insert("correctness".into(), e.to_string());
            None
        }
    };

    let grid = QuadratureGrid::<f64>::gauss_legendre(cfg.grid_size, 4)?;
    let mut models: BTreeMap<String, ModelReport> = BTreeMap::new();

    if let Some(correctness) = &correctness {
        for (model, verdicts) in correctness_by_model(correctness) {
            let mut entry = ModelReport::default();
            let fail =
                |errs: &mut BTreeMap<String, String>, stage: &str, message: String| {
                    errs.insert(format!("{stage}:{model}"), message);
                };

            let v1_bits = bits_for(&v1, &verdicts);
            match &v1_bits {
                Some(bits) if !bits.is_empty() => match raw_accuracy::<f64>(bits) {
                    Ok(est) => {
                        entry.raw_v1 = Some(est.value);
                        entry.raw_v1_ci = bootstrap_ci(
                            bits,
                            |b| raw_accuracy::<f64>(b).map(|e| e.value),
                            cfg.resamples,
                            derive_seed(cfg.seed, TAG_BOOTSTRAP),
                        )
                        .ok();
                    }
                    Err(e) => fail(&mut stage_errors, "raw_v1", e.to_string()),
                },
                _ => fail(
                    &mut stage_errors,
                    "raw_v1",
                    "v1 correctness verdicts unavailable".into(),
                ),
            }

            let v2_bits = bits_for(&v2, &verdicts);
            if v2.is_empty() {
                fail(
                    &mut stage_errors,
                    "raw_v2",
                    "no v2 dataset (run `match` first or provide v2 rows)".into(),
                );
            } else {
                match &v2_bits {
                    Some(bits) => match raw_accuracy::<f64>(bits) {
                        Ok(est) => {
                            entry.raw_v2 = Some(est.value);
                            entry.raw_v2_ci = bootstrap_ci(
                                bits,
                                |b| raw_accuracy::<f64>(b).map(|e| e.value),
                                cfg.resamples,
                                derive_seed(cfg.seed, TAG_BOOTSTRAP + 1),
                            )
                            .ok();
                        }
                        Err(e) => fail(&mut stage_errors, "raw_v2", e.to_string()),
                    },
                    None => fail(
                        &mut stage_errors,
                        "raw_v2",
                        "v2 correctness verdicts unavailable".into(),
                    ),
                }
            }

            let cand_bits = bits_for(&candidate, &verdicts);
            match &cand_bits {
                Some(bits) => {
                    match naive_adjusted_accuracy::<f64>(&v1, &candidate, bits) {
                        Ok(est) => {
                            entry.naive = Some(NaiveStage {
                                estimate: est.value,
                                dropped_target_mass: est.dropped_target_mass,
                            })
                        }
                        Err(e) => fail(&mut stage_errors, "naive", e.to_string()),
                    }
                    match jackknife_naive_adjusted::<f64>(&v1, &candidate, bits) {
                        Ok(jk) => {
                            entry.jackknife = Some(JackknifeStage {
                                estimate: jk.corrected,
                                uncorrected: jk.full,
                                bias: jk.bias,
                                se: jk.se,
                            })
                        }
                        Err(e) => fail(&mut stage_errors, "jackknife", e.to_string()),
                    }
                    match (mixtures.get("candidate"), mixtures.get("v1")) {
                        (Some(source), Some(target)) => {
                            match fit_report::<f64>(
                                &candidate,
                                bits,
                                source,
                                target,
                                cfg.spline_knots,
                                &grid,
                            ) {
                                Ok(fit) => {
                                    entry.parametric = Some(ParametricStage {
                                        estimate: fit.adjusted_accuracy,
                                        spline_condition: fit.condition,
                                        spline_residual_rms: fit.residual_rms,
                                        clamp_warning: fit.model.clamp_warning(),
                                        knots: fit.model.knots().to_vec(),
                                        coeffs: fit.model.coeffs().to_vec(),
                                    })
                                }
                                Err(e) => fail(&mut stage_errors, "parametric", e.to_string()),
                            }
                        }
                        _ => fail(
                            &mut stage_errors,
                            "parametric",
                            "latent density unavailable (EM stage failed)".into(),
                        ),
                    }
                }
                None => {
                    let msg = "candidate correctness verdicts unavailable".to_string();
                    fail(&mut stage_errors, "naive", msg.clone());
                    fail(&mut stage_errors, "jackknife", msg.clone());
                    fail(&mut stage_errors, "parametric", msg);
                }
            }

            if let (Some(raw_v1), Some(raw_v2)) = (entry.raw_v1, entry.raw_v2) {
                if let Some(naive) = &entry.naive {
                    entry.gap_naive = Some(to_gap_stage(raw_v1, raw_v2, naive.estimate));
                }
                if let Some(par) = &entry.parametric {
                    entry.gap_parametric = Some(to_gap_stage(raw_v1, raw_v2, par.estimate));
                }
            }

            models.insert(model, entry);
        }
    }

    let bundle = ReportBundle {
        schema_version: REPORT_SCHEMA_VERSION,
        config_hash: cfg.hash().to_string(),
        seed: cfg.seed,
        n_annotators,
        all_items_digest,
        datasets,
        models,
        em_fits,
        stage_errors,
        series_manifest: scan_series_manifest(out),
    };
    let report_path = cfg.report_path(out);
    report::write_json(&report_path, &bundle)?;
    report::write_meta(&report_path)?;

    println!(
        "estimate: wrote {} ({} stage error(s))",
        cfg.report_file,
        bundle.stage_errors.len()
    );
    Ok(())
}

fn to_gap_stage(raw_v1: f64, raw_v2: f64, adjusted: f64) -> GapStage {
    let gap = gap_decomposition(raw_v1, raw_v2, adjusted);
    GapStage {
        total_gap: gap.total_gap,
        bias_corrected_gap: gap.bias_corrected_gap,
        selection_gap: gap.selection_gap,
        finite_sample_gap: gap.finite_sample_gap,
    }
}

fn resolve_input(out: &Path, flag: Option<&Path>, config_name: &str) -> PathBuf {
    match flag {
        Some(p) => out.join(p),
        None => out.join(config_name),
    }
}

/// Estimation never touches latent frequencies. Reject any input that looks
/// like (or is named like) the ground-truth table before reading a byte
/// further.
fn refuse_ground_truth(path: &Path, cfg: &RunConfig) -> Result<()> {
    if path.file_name().and_then(|n| n.to_str()) == Some(cfg.truth_file.as_str()) {
        return Err(CliError::Usage(format!(
            "estimation is blind: refusing ground-truth input {}",
            path.display()
        )));
    }
    if path.exists() {
        if let Ok(header) = schema::peek_header(path) {
            if header == schema::TRUTH_HEADER.join(",") {
                return Err(CliError::Usage(format!(
                    "estimation is blind: {} has the ground-truth schema",
                    path.display()
                )));
            }
        }
    }
    Ok(())
}
