//! `series`: export plot-ready long-format CSV (`series,x,y,ci_lo,ci_hi`)
//! for the standard diagnostic views.

use std::path::Path;

use matchbias::estimators::{bootstrap_ci, jackknife_linearity_series, naive_adjusted_accuracy, raw_accuracy};
use matchbias::matching::{annotator_subsample_curve_records, match_then_score, HistogramSpec};
use matchbias::parametric::fit_report;
use matchbias::quad::QuadratureGrid;
use matchbias::rng::derive_seed;
use matchbias::synthpop::{common_annotator_count, AnnotationRecord, DatasetTag};

use crate::commands::{
    bits_for, correctness_by_model, derive_v2, records_of, run_em, TAG_BOOTSTRAP, TAG_SERIES,
};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::schema::{self, SeriesRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SeriesKind {
    /// Observed-frequency histograms per dataset.
    #[value(name = "histograms")]
    Histograms,
    /// Accuracy conditioned on the selection count, per dataset and model.
    #[value(name = "conditional_accuracy")]
    ConditionalAccuracy,
    /// v1-to-replication gap as annotators are subsampled.
    #[value(name = "subsample_curve")]
    SubsampleCurve,
    /// Reweighting estimate against 1/n with its linear fit.
    #[value(name = "jackknife_linearity")]
    JackknifeLinearity,
    /// Observed counts vs fitted count pmf vs fitted latent density.
    #[value(name = "fit_overlay")]
    FitOverlay,
    /// Raw matched accuracy and adjusted estimates against v1 accuracy.
    #[value(name = "scatter")]
    Scatter,
}

impl SeriesKind {
    pub fn file_name(self) -> &'static str {
        match self {
            SeriesKind::Histograms => "series_histograms.csv",
            SeriesKind::ConditionalAccuracy => "series_conditional_accuracy.csv",
            SeriesKind::SubsampleCurve => "series_subsample_curve.csv",
            SeriesKind::JackknifeLinearity => "series_jackknife_linearity.csv",
            SeriesKind::FitOverlay => "series_fit_overlay.csv",
            SeriesKind::Scatter => "series_scatter.csv",
        }
    }
}

pub fn cmd_series(cfg: &RunConfig, out: &Path, kind: SeriesKind) -> Result<()> {
    let rows = read_required_annotations(cfg, out)?;
    let matched = {
        let path = cfg.matched_path(out);
        if path.exists() {
            Some(schema::read_matched(&path)?)
        } else {
            None
        }
    };
    let v1 = records_of(&rows, DatasetTag::V1);
    let candidate = records_of(&rows, DatasetTag::Candidate);
    let (v2, _) = derive_v2(&rows, matched.as_deref());

    let series = match kind {
        SeriesKind::Histograms => histograms(cfg, &v1, &candidate, &v2)?,
        SeriesKind::ConditionalAccuracy => {
            conditional_accuracy(cfg, out, &v1, &candidate, &v2)?
        }
        SeriesKind::SubsampleCurve => subsample_curve(cfg, out, &v1, &candidate)?,
        SeriesKind::JackknifeLinearity => jackknife_linearity(cfg, out, &v1, &candidate)?,
        SeriesKind::FitOverlay => fit_overlay(cfg, &v1, &candidate)?,
        SeriesKind::Scatter => scatter(cfg, out, &v1, &candidate, &v2)?,
    };

    let path = out.join(kind.file_name());
    schema::write_series(&path, &series)?;
    println!("series: wrote {} ({} rows)", kind.file_name(), series.len());
    Ok(())
}

fn read_required_annotations(cfg: &RunConfig, out: &Path) -> Result<Vec<schema::AnnotationRow>> {
    let path = cfg.annotations_path(out);
    if !path.exists() {
        return Err(CliError::MissingPrerequisite {
            what: "annotations (run `simulate` first or point --config at real data)".into(),
            path,
        });
    }
    schema::read_annotations(&path)
}

fn read_required_correctness(
    cfg: &RunConfig,
    out: &Path,
) -> Result<Vec<matchbias::synthpop::CorrectnessRecord>> {
    let path = cfg.correctness_path(out);
    if !path.exists() {
        return Err(CliError::MissingPrerequisite {
            what: "correctness verdicts".into(),
            path,
        });
    }
    schema::read_correctness(&path)
}

/// Datasets that actually have records, in fixed order.
fn present<'a>(
    v1: &'a [AnnotationRecord],
    candidate: &'a [AnnotationRecord],
    v2: &'a [AnnotationRecord],
) -> Vec<(&'static str, &'a [AnnotationRecord])> {
    [("v1", v1), ("candidate", candidate), ("v2", v2)]
        .into_iter()
        .filter(|(_, r)| !r.is_empty())
        .collect()
}

fn histograms(
    cfg: &RunConfig,
    v1: &[AnnotationRecord],
    candidate: &[AnnotationRecord],
    v2: &[AnnotationRecord],
) -> Result<Vec<SeriesRow>> {
    let spec = HistogramSpec::<f64>::new(cfg.bin_edges.clone())?;
    let datasets = present(v1, candidate, v2);
    if datasets.is_empty() {
        return Err(CliError::Data("no annotations to histogram".into()));
    }
    let mut out = Vec::new();
    for (name, records) in datasets {
        let mut counts = vec![0usize; spec.bin_count()];
        for r in records {
            if r.n_annotators == 0 {
                return Err(CliError::Data(format!(
                    "item {} has zero annotators; its observed frequency is undefined",
                    r.item_id
                )));
            }
            counts[spec.bin_of(r.s_hat::<f64>())] += 1;
        }
        let total = records.len() as f64;
        for (b, c) in counts.iter().enumerate() {
            out.push(SeriesRow {
                series: name.to_string(),
                x: (cfg.bin_edges[b] + cfg.bin_edges[b + 1]) / 2.0,
                y: *c as f64 / total,
                ci: None,
            });
        }
    }
    Ok(out)
}

fn conditional_accuracy(
    cfg: &RunConfig,
    out: &Path,
    v1: &[AnnotationRecord],
    candidate: &[AnnotationRecord],
    v2: &[AnnotationRecord],
) -> Result<Vec<SeriesRow>> {
    let correctness = read_required_correctness(cfg, out)?;
    let by_model = correctness_by_model(&correctness);
    let mut rows = Vec::new();
    for (name, records) in present(v1, candidate, v2) {
        let n = common_annotator_count(records)?;
        if n == 0 {
            return Err(CliError::Data("zero-annotator records have no counts".into()));
        }
        for (model, verdicts) in &by_model {
            let Some(bits) = bits_for(records, verdicts) else {
                continue;
            };
            let mut hits = vec![0usize; n as usize + 1];
            let mut seen = vec![0usize; n as usize + 1];
            for (r, correct) in records.iter().zip(&bits) {
                let k = r.n_selected as usize;
                seen[k] += 1;
                if *correct {
                    hits[k] += 1;
                }
            }
            for k in 0..=n as usize {
                if seen[k] == 0 {
                    continue;
                }
                let acc = hits[k] as f64 / seen[k] as f64;
                let half = 1.96 * (acc * (1.0 - acc) / seen[k] as f64).sqrt();
                rows.push(SeriesRow {
                    series: format!("{name}:{model}"),
                    x: f64::from(k as u32) / f64::from(n),
                    y: acc,
                    ci: Some(((acc - half).max(0.0), (acc + half).min(1.0))),
                });
            }
        }
    }
    Ok(rows)
}

fn usable_counts(cfg: &RunConfig, n: u32, minimum: usize) -> Result<Vec<u32>> {
    let counts: Vec<u32> = cfg
        .subsample_counts
        .iter()
        .copied()
        .filter(|&c| c <= n)
        .collect();
    if counts.len() < minimum {
        return Err(CliError::Data(format!(
            "need at least {minimum} usable annotator counts <= {n}, have {:?}",
            counts
        )));
    }
    Ok(counts)
}

fn subsample_curve(
    cfg: &RunConfig,
    out: &Path,
    v1: &[AnnotationRecord],
    candidate: &[AnnotationRecord],
) -> Result<Vec<SeriesRow>> {
    let correctness = read_required_correctness(cfg, out)?;
    let n = common_annotator_count(v1).and_then(|nt| {
        let ns = common_annotator_count(candidate)?;
        Ok(nt.min(ns))
    })?;
    let counts = usable_counts(cfg, n, 1)?;
    let spec = HistogramSpec::<f64>::new(cfg.bin_edges.clone())?;

    let mut rows = Vec::new();
    for (model, verdicts) in correctness_by_model(&correctness) {
        let (Some(v1_bits), Some(cand_bits)) =
            (bits_for(v1, &verdicts), bits_for(candidate, &verdicts))
        else {
            continue;
        };
        let curve = annotator_subsample_curve_records::<f64, _>(
            v1,
            candidate,
            &v1_bits,
            &cand_bits,
            &counts,
            match_then_score(spec.clone(), cfg.sample_size),
            derive_seed(cfg.seed, TAG_SERIES),
        )?;
        for (count, gap) in curve {
            rows.push(SeriesRow {
                series: format!("gap:{model}"),
                x: f64::from(count),
                y: gap,
                ci: None,
            });
        }
    }
    if rows.is_empty() {
        return Err(CliError::Data(
            "no model had complete correctness verdicts for both datasets".into(),
        ));
    }
    Ok(rows)
}

fn jackknife_linearity(
    cfg: &RunConfig,
    out: &Path,
    v1: &[AnnotationRecord],
    candidate: &[AnnotationRecord],
) -> Result<Vec<SeriesRow>> {
    let correctness = read_required_correctness(cfg, out)?;
    let n = common_annotator_count(v1).and_then(|nt| {
        let ns = common_annotator_count(candidate)?;
        Ok(nt.min(ns))
    })?;
    let counts = usable_counts(cfg, n, 2)?;

    let mut rows = Vec::new();
    for (model, verdicts) in correctness_by_model(&correctness) {
        let Some(cand_bits) = bits_for(candidate, &verdicts) else {
            continue;
        };
        let series = jackknife_linearity_series::<f64>(v1, candidate, &cand_bits, &counts)?;
        for p in &series.points {
            rows.push(SeriesRow {
                series: format!("estimate:{model}"),
                x: p.inv_n,
                y: p.estimate,
                ci: None,
            });
        }
        let x_max = series.points.iter().map(|p| p.inv_n).fold(0.0, f64::max);
        for x in [0.0, x_max] {
            rows.push(SeriesRow {
                series: format!("fit:{model}"),
                x,
                y: series.intercept + series.slope * x,
                ci: None,
            });
        }
    }
    if rows.is_empty() {
        return Err(CliError::Data(
            "no model had complete candidate correctness verdicts".into(),
        ));
    }
    Ok(rows)
}

fn fit_overlay(
    cfg: &RunConfig,
    v1: &[AnnotationRecord],
    candidate: &[AnnotationRecord],
) -> Result<Vec<SeriesRow>> {
    let mut rows = Vec::new();
    for (name, tag, records) in [
        ("v1", DatasetTag::V1, v1),
        ("candidate", DatasetTag::Candidate, candidate),
    ] {
        if records.is_empty() {
            continue;
        }
        let n = common_annotator_count(records)?;
        if n == 0 {
            return Err(CliError::Data("zero-annotator records have no counts".into()));
        }
        let (_, mixture) = run_em(records, cfg, tag)?;

        let mut observed = vec![0usize; n as usize + 1];
        for r in records {
            observed[r.n_selected as usize] += 1;
        }
        for k in 0..=n {
            let x = f64::from(k) / f64::from(n);
            rows.push(SeriesRow {
                series: format!("{name}:observed"),
                x,
                y: observed[k as usize] as f64 / records.len() as f64,
                ci: None,
            });
            rows.push(SeriesRow {
                series: format!("{name}:fitted_counts"),
                x,
                y: mixture.induced_pmf(n, k)?,
                ci: None,
            });
        }
        for i in 0..=100 {
            let s = f64::from(i) / 100.0;
            rows.push(SeriesRow {
                series: format!("{name}:latent"),
                x: s,
                y: mixture.pdf(s),
                ci: None,
            });
        }
    }
    if rows.is_empty() {
        return Err(CliError::Data("no annotations to fit".into()));
    }
    Ok(rows)
}

fn scatter(
    cfg: &RunConfig,
    out: &Path,
    v1: &[AnnotationRecord],
    candidate: &[AnnotationRecord],
    v2: &[AnnotationRecord],
) -> Result<Vec<SeriesRow>> {
    let correctness = read_required_correctness(cfg, out)?;
    if v2.is_empty() {
        return Err(CliError::MissingPrerequisite {
            what: "matched selection (run `match` first)".into(),
            path: cfg.matched_path(out),
        });
    }
    let grid = QuadratureGrid::<f64>::gauss_legendre(cfg.grid_size, 4)?;
    let em_v1 = run_em(v1, cfg, DatasetTag::V1).ok().map(|(_, m)| m);
    let em_cand = run_em(candidate, cfg, DatasetTag::Candidate).ok().map(|(_, m)| m);

    let mut rows = Vec::new();
    for (model, verdicts) in correctness_by_model(&correctness) {
        let (Some(v1_bits), Some(v2_bits), Some(cand_bits)) = (
            bits_for(v1, &verdicts),
            bits_for(v2, &verdicts),
            bits_for(candidate, &verdicts),
        ) else {
            continue;
        };
        let x = raw_accuracy::<f64>(&v1_bits)?.value;
        let y = raw_accuracy::<f64>(&v2_bits)?.value;
        let ci = bootstrap_ci(
            &v2_bits,
            |b| raw_accuracy::<f64>(b).map(|e| e.value),
            cfg.resamples,
            derive_seed(cfg.seed, TAG_BOOTSTRAP + 2),
        )
        .ok();
        rows.push(SeriesRow {
            series: format!("matched:{model}"),
            x,
            y,
            ci,
        });
        if let Ok(est) = naive_adjusted_accuracy::<f64>(v1, candidate, &cand_bits) {
            rows.push(SeriesRow {
                series: format!("naive:{model}"),
                x,
                y: est.value,
                ci: None,
            });
        }
        if let (Some(source), Some(target)) = (&em_cand, &em_v1) {
            if let Ok(fit) =
                fit_report::<f64>(candidate, &cand_bits, source, target, cfg.spline_knots, &grid)
            {
                rows.push(SeriesRow {
                    series: format!("adjusted:{model}"),
                    x,
                    y: fit.adjusted_accuracy,
                    ci: None,
                });
            }
        }
    }
    if rows.is_empty() {
        return Err(CliError::Data(
            "no model had complete correctness verdicts across datasets".into(),
        ));
    }
    Ok(rows)
}
