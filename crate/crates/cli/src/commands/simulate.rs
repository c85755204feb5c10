//! `simulate`: draw a synthetic two-dataset world from the configured
//! scenario and write the three pipeline inputs — annotations, correctness
//! verdicts, and the ground-truth latent frequencies.

use std::path::Path;

use matchbias::synthpop::ScenarioConfig;

use crate::config::RunConfig;
use crate::error::Result;
use crate::schema::{self, AnnotationRow};

pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let scenario = ScenarioConfig {
        v1_mixture: cfg.v1_mixture.clone(),
        candidate_mixture: cfg.candidate_mixture.clone(),
        curve: cfg.curve.clone(),
        n_annotators: cfg.annotators,
        items_per_dataset: cfg.items_per_dataset,
        model_names: cfg.models.clone(),
        retain_draws: cfg.retain_draws,
    };
    let pop = scenario.build(cfg.seed)?;

    let rows: Vec<AnnotationRow> = pop
        .items
        .iter()
        .zip(&pop.annotations)
        .map(|(item, record)| AnnotationRow {
            record: record.clone(),
            dataset: item.dataset,
            class: item.class,
        })
        .collect();
    schema::write_annotations(&cfg.annotations_path(out), &rows, cfg.retain_draws)?;
    schema::write_correctness(&cfg.correctness_path(out), &pop.correctness)?;

    let truth: Vec<(u64, f64)> = pop.items.iter().map(|it| (it.id, it.true_s)).collect();
    schema::write_truth(&cfg.truth_path(out), &truth)?;

    println!(
        "simulate: {} items -> {}, {}, {}",
        pop.items.len(),
        cfg.annotations_file,
        cfg.correctness_file,
        cfg.truth_file
    );
    Ok(())
}
