//! JSON report structures.
//!
//! Reports are byte-reproducible: maps are `BTreeMap`s (sorted keys), float
//! formatting is the serializer's shortest round-trip form, and nothing
//! time- or host-dependent is stored in the report itself. Wall-clock
//! metadata lives in a sidecar (`<report>.meta.json`) that is deliberately
//! excluded from the reproducibility contract.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Everything `estimate` produces for one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportBundle {
    pub schema_version: u32,
    pub config_hash: String,
    pub seed: u64,
    /// Shared annotator count, when the annotation table is rectangular.
    pub n_annotators: Option<u32>,
    /// Digest over the deduplicated ids of every annotated item; `verify`
    /// uses it to refuse ground truth for a different item set.
    pub all_items_digest: String,
    pub datasets: BTreeMap<String, DatasetSummary>,
    pub models: BTreeMap<String, ModelReport>,
    /// Latent-density fits per dataset (`v1`, `candidate`).
    pub em_fits: BTreeMap<String, EmStage>,
    /// Failed stages, keyed `stage` or `stage:model`; successful stages of
    /// the same run are unaffected.
    pub stage_errors: BTreeMap<String, String>,
    /// Series files present in the output directory when the report was
    /// written.
    pub series_manifest: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub records: usize,
    pub id_digest: String,
    pub mean_observed_frequency: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ModelReport {
    pub raw_v1: Option<f64>,
    pub raw_v1_ci: Option<(f64, f64)>,
    pub raw_v2: Option<f64>,
    pub raw_v2_ci: Option<(f64, f64)>,
    pub naive: Option<NaiveStage>,
    pub jackknife: Option<JackknifeStage>,
    pub parametric: Option<ParametricStage>,
    pub gap_naive: Option<GapStage>,
    pub gap_parametric: Option<GapStage>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NaiveStage {
    pub estimate: f64,
    /// Target count mass renormalized away because the source pool had no
    /// items at those counts.
    pub dropped_target_mass: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JackknifeStage {
    pub estimate: f64,
    pub uncorrected: f64,
    pub bias: f64,
    pub se: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParametricStage {
    pub estimate: f64,
    pub spline_condition: f64,
    pub spline_residual_rms: f64,
    pub clamp_warning: bool,
    pub knots: Vec<f64>,
    pub coeffs: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmStage {
    pub n_records: usize,
    pub log_likelihood: f64,
    pub converged: bool,
    pub degenerate: bool,
    pub restart_index: usize,
    pub components: Vec<EmComponent>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmComponent {
    pub weight: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// v1 → v2 accuracy gap split into its sources; the three parts sum to the
/// total by construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapStage {
    pub total_gap: f64,
    pub bias_corrected_gap: f64,
    pub selection_gap: f64,
    pub finite_sample_gap: f64,
}

/// Output of `verify`: per-model, per-method deviations from the oracle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyReport {
    pub config_hash: String,
    /// `∫ g · p₁` computed analytically from the configured scenario.
    pub oracle_adjusted_accuracy: f64,
    pub models: BTreeMap<String, VerifyModel>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyModel {
    /// Oracle recomputed nonparametrically from ground truth and observed
    /// correctness (latent-frequency binning), as a cross-check on the
    /// analytic value.
    pub empirical_oracle: Option<f64>,
    /// method → estimate − oracle.
    pub signed_errors: BTreeMap<String, f64>,
    /// method → |estimate − oracle|.
    pub errors: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub created_unix_seconds: u64,
    pub tool_version: String,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Data(format!("cannot serialize {}: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text).map_err(CliError::io(path))?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::Data(format!("cannot parse {}: {e}", path.display()))
    })
}

/// Sidecar path for volatile run metadata: `report.json` → `report.meta.json`.
pub fn meta_path(report: &Path) -> PathBuf {
    let stem = report
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("report");
    report.with_file_name(format!("{stem}.meta.json"))
}

pub fn write_meta(report: &Path) -> Result<()> {
    let created = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    write_json(
        &meta_path(report),
        &RunMeta {
            created_unix_seconds: created,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        },
    )
}

/// Order-independent digest of an id set (sorted, deduplicated,
/// little-endian u64s).
pub fn id_digest(ids: impl IntoIterator<Item = u64>) -> String {
    let mut sorted: Vec<u64> = ids.into_iter().collect();
    sorted.sort_unstable();
    sorted.dedup();
    let mut hasher = Sha256::new();
    for id in sorted {
        hasher.update(id.to_le_bytes());
    }
    format!("{:x}", hasher.finalize())
}
