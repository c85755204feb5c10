//! `verify`: score an estimate report against ground truth.
//!
//! The oracle is the true adjusted accuracy `∫ g · p₁` of the configured
//! scenario, computed analytically; a nonparametric cross-check
//! (latent-frequency binning of the observed correctness) is attached per
//! model when annotations and correctness are available. Ground truth must
//! cover exactly the items the report was computed from — a digest mismatch
//! is treated the same as missing truth.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use matchbias::synthpop::{true_adjusted_accuracy, DatasetTag};

use crate::commands::correctness_by_model;
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::report::{self, ReportBundle, VerifyModel, VerifyReport};
use crate::schema;

const TRUE_S_BINS: usize = 50;

pub fn cmd_verify(cfg: &RunConfig, out: &Path) -> Result<()> {
    let report_path = cfg.report_path(out);
    if !report_path.exists() {
        return Err(CliError::MissingPrerequisite {
            what: "estimate report (run `estimate` first)".into(),
            path: report_path,
        });
    }
    let bundle: ReportBundle = report::read_json(&report_path)?;
    if bundle.config_hash != cfg.hash() {
        return Err(CliError::Data(format!(
            "config hash mismatch: report was produced under {}, current configuration is {}",
            bundle.config_hash,
            cfg.hash()
        )));
    }

    let truth_path = cfg.truth_path(out);
    if !truth_path.exists() {
        return Err(CliError::MissingPrerequisite {
            what: "ground truth".into(),
            path: truth_path,
        });
    }
    let truth = schema::read_truth(&truth_path)?;
    let truth_digest = report::id_digest(truth.iter().map(|(id, _)| *id));
    if truth_digest != bundle.all_items_digest {
        return Err(CliError::Data(
            "ground truth unavailable for the reported items: id digests differ".into(),
        ));
    }

    let oracle = true_adjusted_accuracy(&cfg.curve, &cfg.v1_mixture, 1e-9)?;
    let empirical = empirical_oracles(cfg, out, &truth);

    let mut models = BTreeMap::new();
    for (name, entry) in &bundle.models {
        let mut signed = BTreeMap::new();
        let mut put = |method: &str, value: Option<f64>| {
            if let Some(v) = value {
                signed.insert(method.to_string(), v - oracle);
            }
        };
        put("raw_v1", entry.raw_v1);
        put("raw_v2", entry.raw_v2);
        put("naive", entry.naive.as_ref().map(|s| s.estimate));
        put("jackknife", entry.jackknife.as_ref().map(|s| s.estimate));
        put("parametric", entry.parametric.as_ref().map(|s| s.estimate));

        let errors = signed.iter().map(|(k, v)| (k.clone(), v.abs())).collect();
        models.insert(
            name.clone(),
            VerifyModel {
                empirical_oracle: empirical.as_ref().and_then(|m| m.get(name)).copied(),
                signed_errors: signed,
                errors,
            },
        );
    }

    let verdict = VerifyReport {
        config_hash: bundle.config_hash.clone(),
        oracle_adjusted_accuracy: oracle,
        models,
    };
    let verify_path = out.join("verify.json");
    report::write_json(&verify_path, &verdict)?;
    println!("verify: oracle {oracle:.6} -> verify.json");
    Ok(())
}

/// Nonparametric oracle per model: bin every item by its true latent
/// frequency, average correctness per bin, and reweight by the v1 bin
/// occupancy. Returns `None` when annotations or correctness can't be read.
fn empirical_oracles(
    cfg: &RunConfig,
    out: &Path,
    truth: &[(u64, f64)],
) -> Option<BTreeMap<String, f64>> {
    let rows = schema::read_annotations(&cfg.annotations_path(out)).ok()?;
    let correctness = schema::read_correctness(&cfg.correctness_path(out)).ok()?;
    let true_s: HashMap<u64, f64> = truth.iter().copied().collect();

    let bin_of = |s: f64| ((s * TRUE_S_BINS as f64) as usize).min(TRUE_S_BINS - 1);

    let mut v1_count = vec![0usize; TRUE_S_BINS];
    let mut v1_total = 0usize;
    for row in &rows {
        if row.dataset == DatasetTag::V1 {
            let s = *true_s.get(&row.record.item_id)?;
            v1_count[bin_of(s)] += 1;
            v1_total += 1;
        }
    }
    if v1_total == 0 {
        return None;
    }

    let mut out_map = BTreeMap::new();
    for (model, verdicts) in correctness_by_model(&correctness) {
        let mut hits = vec![0usize; TRUE_S_BINS];
        let mut seen = vec![0usize; TRUE_S_BINS];
        for (id, correct) in &verdicts {
            let Some(&s) = true_s.get(id) else { continue };
            let b = bin_of(s);
            seen[b] += 1;
            if *correct {
                hits[b] += 1;
            }
        }
        let mut acc = 0.0;
        let mut mass = 0.0;
        for b in 0..TRUE_S_BINS {
            if v1_count[b] == 0 || seen[b] == 0 {
                continue;
            }
            let p1 = v1_count[b] as f64 / v1_total as f64;
            acc += p1 * hits[b] as f64 / seen[b] as f64;
            mass += p1;
        }
        if mass > 0.0 {
            out_map.insert(model, acc / mass);
        }
    }
    Some(out_map)
}
