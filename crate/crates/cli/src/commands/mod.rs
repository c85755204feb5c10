//! Subcommand implementations.
//!
//! Each command is a plain function over a resolved [`RunConfig`] and an
//! output directory, so the binary shell stays thin and tests can drive
//! commands without spawning processes.

mod estimate;
mod fits;
mod matchcmd;
mod series;
mod simulate;
mod verify;

pub use estimate::cmd_estimate;
pub use fits::{cmd_em_fit, cmd_spline_fit};
pub use matchcmd::cmd_match;
pub use series::{cmd_series, SeriesKind};
pub use simulate::cmd_simulate;
pub use verify::cmd_verify;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use matchbias::dist::BetaMixture;
use matchbias::parametric::em_fit;
use matchbias::rng::derive_seed;
use matchbias::synthpop::{AnnotationRecord, CorrectnessRecord, DatasetTag};

use crate::config::RunConfig;
use crate::error::Result;
use crate::report::{EmComponent, EmStage};
use crate::schema::AnnotationRow;

/// Stream tags for seeds derived from the run seed. Simulation consumes
/// tags 1–6 inside the population builder, so command-level stages start
/// higher up.
pub(crate) const TAG_MATCH: u64 = 101;
pub(crate) const TAG_EM_BASE: u64 = 110; // + dataset tag
pub(crate) const TAG_BOOTSTRAP: u64 = 120;
pub(crate) const TAG_SERIES: u64 = 130;

pub(crate) fn records_of(rows: &[AnnotationRow], tag: DatasetTag) -> Vec<AnnotationRecord> {
    rows.iter()
        .filter(|r| r.dataset == tag)
        .map(|r| r.record.clone())
        .collect()
}

/// The v2 dataset: explicit `v2` rows when the annotation table has them,
/// otherwise the candidate rows selected by a `match` run. The flag says
/// which source was used.
pub(crate) fn derive_v2(
    rows: &[AnnotationRow],
    matched: Option<&[u64]>,
) -> (Vec<AnnotationRecord>, bool) {
    let explicit = records_of(rows, DatasetTag::V2);
    if !explicit.is_empty() {
        return (explicit, false);
    }
    let Some(ids) = matched else {
        return (Vec::new(), false);
    };
    let wanted: std::collections::HashSet<u64> = ids.iter().copied().collect();
    let from_match: Vec<AnnotationRecord> = rows
        .iter()
        .filter(|r| r.dataset == DatasetTag::Candidate && wanted.contains(&r.record.item_id))
        .map(|r| r.record.clone())
        .collect();
    (from_match, true)
}

/// `model → (item id → correct)`, sorted by model name.
pub(crate) fn correctness_by_model(
    records: &[CorrectnessRecord],
) -> BTreeMap<String, HashMap<u64, bool>> {
    let mut out: BTreeMap<String, HashMap<u64, bool>> = BTreeMap::new();
    for r in records {
        out.entry(r.model_name.clone())
            .or_default()
            .insert(r.item_id, r.correct);
    }
    out
}

/// Correctness bits aligned with `records`; `None` when any item lacks a
/// verdict for this model.
pub(crate) fn bits_for(
    records: &[AnnotationRecord],
    verdicts: &HashMap<u64, bool>,
) -> Option<Vec<bool>> {
    records
        .iter()
        .map(|r| verdicts.get(&r.item_id).copied())
        .collect()
}

/// Fit the latent mixture of one dataset's counts and summarize it for the
/// report. The mixture itself is returned for downstream stages.
pub(crate) fn run_em(
    records: &[AnnotationRecord],
    cfg: &RunConfig,
    tag: DatasetTag,
) -> Result<(EmStage, BetaMixture<f64>)> {
    let seed = derive_seed(cfg.seed, TAG_EM_BASE + tag as u64);
    let fit = em_fit::<f64>(records, &cfg.em, seed)?;
    let stage = EmStage {
        n_records: fit.n_records,
        log_likelihood: fit.log_likelihood,
        converged: fit.converged,
        degenerate: fit.degenerate,
        restart_index: fit.restart_index,
        components: fit
            .mixture
            .components()
            .iter()
            .map(|(w, p)| EmComponent {
                weight: *w,
                alpha: p.alpha(),
                beta: p.beta(),
            })
            .collect(),
    };
    Ok((stage, fit.mixture))
}

/// Sorted list of series files already present in the output directory.
pub(crate) fn scan_series_manifest(out: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(out)
        .map(|entries| {
            entries
                .filter_map(|e| e.ok())
                .filter_map(|e| e.file_name().into_string().ok())
                .filter(|n| n.starts_with("series_") && n.ends_with(".csv"))
                .collect()
        })
        .unwrap_or_default();
    names.sort();
    names
}

/// Mean observed selection frequency of a record set, when defined.
pub(crate) fn mean_observed_frequency(records: &[AnnotationRecord]) -> Option<f64> {
    if records.is_empty() || records.iter().any(|r| r.n_annotators == 0) {
        return None;
    }
    let sum: f64 = records.iter().map(|r| r.s_hat::<f64>()).sum();
    Some(sum / records.len() as f64)
}
