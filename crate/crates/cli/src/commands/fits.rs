//! `em-fit` and `spline-fit`: run the two halves of the parametric pipeline
//! on their own and dump full diagnostics, for poking at fits without a
//! complete `estimate` run.

use std::collections::BTreeMap;
use std::path::Path;

use matchbias::parametric::fit_report;
use matchbias::quad::QuadratureGrid;
use matchbias::synthpop::{common_annotator_count, DatasetTag};
use serde::{Deserialize, Serialize};

use crate::commands::{bits_for, correctness_by_model, derive_v2, records_of, run_em};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::report::{self, EmStage, ParametricStage};
use crate::schema;

#[derive(Debug, Serialize, Deserialize)]
pub struct EmFitFile {
    pub config_hash: String,
    pub seed: u64,
    pub dataset: String,
    pub n_annotators: Option<u32>,
    pub em: EmStage,
    /// Human-readable mixture, e.g. `0.6*Beta(3,2) + 0.4*Beta(2,2)`.
    pub mixture: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SplineFitFile {
    pub config_hash: String,
    pub seed: u64,
    pub em_v1: EmStage,
    pub em_candidate: EmStage,
    pub models: BTreeMap<String, ParametricStage>,
    pub errors: BTreeMap<String, String>,
}

pub fn cmd_em_fit(cfg: &RunConfig, out: &Path, dataset: &str) -> Result<()> {
    let tag = DatasetTag::parse(dataset)
        .map_err(|e| CliError::Usage(format!("--dataset: {e}")))?;
    let rows = schema::read_annotations(&cfg.annotations_path(out))?;
    let records = match tag {
        DatasetTag::V2 => {
            let matched_path = cfg.matched_path(out);
            let matched = if matched_path.exists() {
                Some(schema::read_matched(&matched_path)?)
            } else {
                None
            };
            derive_v2(&rows, matched.as_deref()).0
        }
        other => records_of(&rows, other),
    };
    if records.is_empty() {
        return Err(CliError::Data(format!("no {dataset} annotations to fit")));
    }
    let (stage, mixture) = run_em(&records, cfg, tag)?;

    let file = EmFitFile {
        config_hash: cfg.hash().to_string(),
        seed: cfg.seed,
        dataset: dataset.to_string(),
        n_annotators: common_annotator_count(&records).ok(),
        em: stage,
        mixture: mixture.to_string(),
    };
    let name = format!("em_fit_{dataset}.json");
    report::write_json(&out.join(&name), &file)?;
    println!(
        "em-fit: {} ({} records, log-likelihood {:.4}) -> {name}",
        file.mixture, file.em.n_records, file.em.log_likelihood
    );
    Ok(())
}

pub fn cmd_spline_fit(cfg: &RunConfig, out: &Path) -> Result<()> {
    let rows = schema::read_annotations(&cfg.annotations_path(out))?;
    let corr_path = cfg.correctness_path(out);
    if !corr_path.exists() {
        return Err(CliError::MissingPrerequisite {
            what: "correctness verdicts".into(),
            path: corr_path,
        });
    }
    let correctness = schema::read_correctness(&corr_path)?;

    let v1 = records_of(&rows, DatasetTag::V1);
    let candidate = records_of(&rows, DatasetTag::Candidate);
    if v1.is_empty() || candidate.is_empty() {
        return Err(CliError::Data(
            "spline fitting needs both v1 and candidate annotations".into(),
        ));
    }

    let (em_v1, target) = run_em(&v1, cfg, DatasetTag::V1)?;
    let (em_candidate, source) = run_em(&candidate, cfg, DatasetTag::Candidate)?;
    let grid = QuadratureGrid::<f64>::gauss_legendre(cfg.grid_size, 4)?;

    let mut models = BTreeMap::new();
    let mut errors = BTreeMap::new();
    for (model, verdicts) in correctness_by_model(&correctness) {
        let Some(bits) = bits_for(&candidate, &verdicts) else {
            errors.insert(model, "candidate correctness verdicts unavailable".into());
            continue;
        };
        match fit_report::<f64>(&candidate, &bits, &source, &target, cfg.spline_knots, &grid) {
            Ok(fit) => {
                models.insert(
                    model,
                    ParametricStage {
                        estimate: fit.adjusted_accuracy,
                        spline_condition: fit.condition,
                        spline_residual_rms: fit.residual_rms,
                        clamp_warning: fit.model.clamp_warning(),
                        knots: fit.model.knots().to_vec(),
                        coeffs: fit.model.coeffs().to_vec(),
                    },
                );
            }
            Err(e) => {
                errors.insert(model, e.to_string());
            }
        }
    }

    let file = SplineFitFile {
        config_hash: cfg.hash().to_string(),
        seed: cfg.seed,
        em_v1,
        em_candidate,
        models,
        errors,
    };
    report::write_json(&out.join("spline_fit.json"), &file)?;
    println!(
        "spline-fit: {} model(s), {} error(s) -> spline_fit.json",
        file.models.len(),
        file.errors.len()
    );
    Ok(())
}
