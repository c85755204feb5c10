//! Accuracy estimators over blind annotation data.
//!
//! None of these functions ever see a latent frequency — only observed
//! counts and correctness bits. The central object is the
//! frequency-reweighting ("naive adjusted") estimator
//!
//! ```text
//! Σ_k  Ê[f | ŝ_src = k/n] · p̂_tgt(ŝ_tgt = k/n)
//! ```
//!
//! which is consistent as the annotator count grows but biased at finite
//! `n`, because the observed frequency is only a noisy proxy for the latent
//! one. The jackknife over annotators removes the leading `O(1/n)` term of
//! that bias; the parametric route in [`crate::parametric`] removes more.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::Error;
use crate::rng::stream_rng;
use crate::scalar::Scalar;
use crate::synthpop::{common_annotator_count, AnnotationRecord};
use crate::Result;

/// How an [`AccuracyEstimate`] was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMethod {
    Raw,
    NaiveAdjusted,
    JackknifeAdjusted,
    ParametricAdjusted,
}

/// An accuracy value together with how it was obtained.
///
/// `annotators_used` is 0 for estimators that don't consume annotations
/// (raw accuracy). `dropped_target_mass` is the total target-frequency mass
/// that had no source bucket to borrow accuracy from and was renormalized
/// away (zero for exact-overlap data).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AccuracyEstimate<S: Scalar = f64> {
    pub value: S,
    pub method: EstimatorMethod,
    pub ci: Option<(S, S)>,
    pub annotators_used: u32,
    pub dropped_target_mass: S,
}

/// Plain accuracy: the mean of the correctness bits.
pub fn raw_accuracy<S: Scalar>(correct: &[bool]) -> Result<AccuracyEstimate<S>> {
    if correct.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let hits = correct.iter().filter(|&&c| c).count();
    Ok(AccuracyEstimate {
        value: S::from_count(hits) / S::from_count(correct.len()),
        method: EstimatorMethod::Raw,
        ci: None,
        annotators_used: 0,
        dropped_target_mass: S::zero(),
    })
}

/// Frequency-reweighting estimator: per-bucket source accuracy weighted by
/// the target's observed-frequency distribution.
///
/// Target buckets with no source items are dropped and the remaining target
/// mass renormalized; the dropped mass is reported on the estimate. Both
/// record sets must be rectangular with the same annotator count.
pub fn naive_adjusted_accuracy<S: Scalar>(
    target: &[AnnotationRecord],
    source: &[AnnotationRecord],
    source_correct: &[bool],
) -> Result<AccuracyEstimate<S>> {
    let (value, dropped, n) = reweight_buckets(target, source, source_correct)?;
    Ok(AccuracyEstimate {
        value,
        method: EstimatorMethod::NaiveAdjusted,
        ci: None,
        annotators_used: n,
        dropped_target_mass: dropped,
    })
}

/// Identical arithmetic to [`naive_adjusted_accuracy`], named for its other
/// use: reweighting a raw candidate pool (rather than an already-matched
/// replication) to the target's frequency distribution.
pub fn flickr_reweighted_accuracy<S: Scalar>(
    target: &[AnnotationRecord],
    candidates: &[AnnotationRecord],
    candidate_correct: &[bool],
) -> Result<AccuracyEstimate<S>> {
    naive_adjusted_accuracy(target, candidates, candidate_correct)
}

fn reweight_buckets<S: Scalar>(
    target: &[AnnotationRecord],
    source: &[AnnotationRecord],
    source_correct: &[bool],
) -> Result<(S, S, u32)> {
    let n_t = common_annotator_count(target)?;
    let n_s = common_annotator_count(source)?;
    if n_t != n_s {
        return Err(Error::RaggedAnnotations {
            expected: n_t,
            found: n_s,
        });
    }
    if n_t == 0 {
        return Err(Error::InsufficientAnnotators {
            needed: 1,
            available: 0,
        });
    }
    if source.len() != source_correct.len() {
        return Err(Error::InvalidParam {
            name: "source_correct",
            message: format!(
                "{} correctness bits for {} source records",
                source_correct.len(),
                source.len()
            ),
        });
    }
    let buckets = n_t as usize + 1;
    let mut target_mass = vec![S::zero(); buckets];
    let unit = S::one() / S::from_count(target.len());
    for r in target {
        target_mass[r.n_selected as usize] += unit;
    }
    let mut src_count = vec![0u64; buckets];
    let mut src_hits = vec![0u64; buckets];
    for (r, &c) in source.iter().zip(source_correct) {
        src_count[r.n_selected as usize] += 1;
        if c {
            src_hits[r.n_selected as usize] += 1;
        }
    }
    let mut value = S::zero();
    let mut kept = S::zero();
    let mut dropped = S::zero();
    for k in 0..buckets {
        if target_mass[k] == S::zero() {
            continue;
        }
        if src_count[k] == 0 {
            dropped += target_mass[k];
        } else {
            let acc = S::of(src_hits[k] as f64 / src_count[k] as f64);
            value += acc * target_mass[k];
            kept += target_mass[k];
        }
    }
    if kept == S::zero() {
        let first_empty = (0..buckets)
            .find(|&k| target_mass[k] > S::zero() && src_count[k] == 0)
            .unwrap_or(0);
        return Err(Error::EmptyBucket {
            k: first_empty as u32,
        });
    }
    Ok((value / kept, dropped, n_t))
}

/// Additive split of a v1→v2 accuracy gap. `finite_sample_gap` is pinned to
/// zero — the estimator-noise share is not separated out — so the telescoping
/// identity `total = bias_corrected + selection + finite_sample` holds
/// bitwise by construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapDecomposition<S: Scalar = f64> {
    pub total_gap: S,
    pub bias_corrected_gap: S,
    pub selection_gap: S,
    pub finite_sample_gap: S,
}

/// Decompose `acc_v1 − acc_v2` using an adjusted accuracy: the part the
/// adjustment explains away (`acc_v1 − adjusted`) and the remaining
/// distribution-shift part (`adjusted − acc_v2`).
pub fn gap_decomposition<S: Scalar>(acc_v1: S, acc_v2: S, adjusted: S) -> GapDecomposition<S> {
    let bias_corrected_gap = acc_v1 - adjusted;
    let selection_gap = adjusted - acc_v2;
    let finite_sample_gap = S::zero();
    GapDecomposition {
        total_gap: bias_corrected_gap + selection_gap + finite_sample_gap,
        bias_corrected_gap,
        selection_gap,
        finite_sample_gap,
    }
}

/// Output of a leave-one-out jackknife.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JackknifeResult<S: Scalar = f64> {
    pub full: S,
    pub corrected: S,
    pub bias: S,
    pub se: S,
    pub leave_one_out: Vec<S>,
}

/// Generic leave-one-out jackknife over `n` exchangeable samples.
///
/// `estimate` receives the retained sample indices (the full set once, then
/// each set with one index removed). Bias is `(n−1)·(mean(LOO) − full)`;
/// the corrected value removes it exactly for estimators whose expectation
/// is quadratic in the samples.
pub fn jackknife<S: Scalar>(
    n: usize,
    mut estimate: impl FnMut(&[usize]) -> Result<S>,
) -> Result<JackknifeResult<S>> {
    if n < 2 {
        return Err(Error::InsufficientAnnotators {
            needed: 2,
            available: n,
        });
    }
    let all: Vec<usize> = (0..n).collect();
    let full = estimate(&all)?;
    let mut leave_one_out = Vec::with_capacity(n);
    let mut retained = Vec::with_capacity(n - 1);
    for j in 0..n {
        retained.clear();
        retained.extend(all.iter().copied().filter(|&i| i != j));
        leave_one_out.push(estimate(&retained)?);
    }
    let nf = S::from_count(n);
    let mean = leave_one_out.iter().copied().sum::<S>() / nf;
    let bias = (nf - S::one()) * (mean - full);
    let var = leave_one_out
        .iter()
        .map(|&v| (v - mean) * (v - mean))
        .sum::<S>();
    let se = ((nf - S::one()) / nf * var).sqrt();
    Ok(JackknifeResult {
        full,
        corrected: full - bias,
        bias,
        se,
        leave_one_out,
    })
}

/// Jackknife of the reweighting estimator over annotators: annotator `j` is
/// removed as a *column* — every record in both datasets loses that draw —
/// and the estimator reruns at `n − 1`. Requires retained draws.
pub fn jackknife_naive_adjusted<S: Scalar>(
    target: &[AnnotationRecord],
    source: &[AnnotationRecord],
    source_correct: &[bool],
) -> Result<JackknifeResult<S>> {
    let n_t = common_annotator_count(target)?;
    let n_s = common_annotator_count(source)?;
    if n_t != n_s {
        return Err(Error::RaggedAnnotations {
            expected: n_t,
            found: n_s,
        });
    }
    let t_draws = draw_matrix(target)?;
    let s_draws = draw_matrix(source)?;
    jackknife(n_t as usize, |retained| {
        let t: Vec<AnnotationRecord> = subset_records(target, &t_draws, retained);
        let s: Vec<AnnotationRecord> = subset_records(source, &s_draws, retained);
        Ok(naive_adjusted_accuracy::<S>(&t, &s, source_correct)?.value)
    })
}

fn draw_matrix(records: &[AnnotationRecord]) -> Result<Vec<&[bool]>> {
    records
        .iter()
        .map(|r| r.draws.as_deref().ok_or(Error::MissingDraws))
        .collect()
}

fn subset_records(
    records: &[AnnotationRecord],
    draws: &[&[bool]],
    retained: &[usize],
) -> Vec<AnnotationRecord> {
    records
        .iter()
        .zip(draws)
        .map(|(r, d)| {
            let k = retained.iter().filter(|&&j| d[j]).count() as u32;
            AnnotationRecord {
                item_id: r.item_id,
                n_annotators: retained.len() as u32,
                n_selected: k,
                draws: None,
            }
        })
        .collect()
}

/// Percentile bootstrap confidence interval (2.5% / 97.5%) for an estimator
/// over items. Resample `r` uses stream `r` of `seed`, so the interval is
/// deterministic given the seed and invariant to thread scheduling.
pub fn bootstrap_ci<S, T, F>(
    data: &[T],
    estimator: F,
    resamples: u32,
    seed: u64,
) -> Result<(S, S)>
where
    S: Scalar,
    T: Clone + Sync,
    F: Fn(&[T]) -> Result<S> + Sync,
{
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if resamples < 2 {
        return Err(Error::InvalidParam {
            name: "resamples",
            message: "need at least 2 bootstrap resamples".into(),
        });
    }
    let mut estimates: Vec<S> = (0..resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, u64::from(r));
            let resampled: Vec<T> = (0..data.len())
                .map(|_| data[rng.gen_range(0..data.len())].clone())
                .collect();
            estimator(&resampled)
        })
        .collect::<Result<_>>()?;
    if estimates.iter().any(|e| !e.is_finite()) {
        return Err(Error::NonFinite("bootstrap estimate"));
    }
    estimates.sort_by(|a, b| a.partial_cmp(b).expect("finite estimates are ordered"));
    Ok((
        percentile(&estimates, S::of(0.025)),
        percentile(&estimates, S::of(0.975)),
    ))
}

/// Linear-interpolated empirical percentile of a sorted sample.
fn percentile<S: Scalar>(sorted: &[S], q: S) -> S {
    let pos = q * S::from_count(sorted.len() - 1);
    let lo = pos.floor().to_f64_lossy() as usize;
    let hi = pos.ceil().to_f64_lossy() as usize;
    let frac = pos - pos.floor();
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// One point of the bias-vs-1/n diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearityPoint<S: Scalar = f64> {
    pub n_annotators: u32,
    pub inv_n: S,
    pub estimate: S,
}

/// Reweighting estimates at several annotator counts with an OLS fit in
/// `1/n`. Near-linearity of the series (R² close to 1) is what justifies
/// the jackknife's leading-order bias removal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearitySeries<S: Scalar = f64> {
    pub points: Vec<LinearityPoint<S>>,
    pub slope: S,
    pub intercept: S,
    pub r_squared: S,
}

/// Rerun the reweighting estimator with the first `n` annotator draws for
/// each `n` in `counts`, and fit estimate ≈ a + b·(1/n).
pub fn jackknife_linearity_series<S: Scalar>(
    target: &[AnnotationRecord],
    source: &[AnnotationRecord],
    source_correct: &[bool],
    counts: &[u32],
) -> Result<LinearitySeries<S>> {
    if counts.len() < 2 {
        return Err(Error::InvalidParam {
            name: "counts",
            message: "need at least two annotator counts for a line".into(),
        });
    }
    let mut points = Vec::with_capacity(counts.len());
    for &n in counts {
        if n == 0 {
            return Err(Error::InsufficientAnnotators {
                needed: 1,
                available: 0,
            });
        }
        let t: Vec<AnnotationRecord> = target
            .iter()
            .map(|r| r.truncate_annotators(n))
            .collect::<Result<_>>()?;
        let s: Vec<AnnotationRecord> = source
            .iter()
            .map(|r| r.truncate_annotators(n))
            .collect::<Result<_>>()?;
        let est = naive_adjusted_accuracy::<S>(&t, &s, source_correct)?;
        points.push(LinearityPoint {
            n_annotators: n,
            inv_n: S::one() / S::of(f64::from(n)),
            estimate: est.value,
        });
    }
    let xs: Vec<S> = points.iter().map(|p| p.inv_n).collect();
    let ys: Vec<S> = points.iter().map(|p| p.estimate).collect();
    let (slope, intercept, r_squared) = fit_ols(&xs, &ys)?;
    Ok(LinearitySeries {
        points,
        slope,
        intercept,
        r_squared,
    })
}

/// Ordinary least squares `y ≈ intercept + slope·x`; returns
/// `(slope, intercept, r²)`. Errors if all abscissae coincide.
pub fn fit_ols<S: Scalar>(xs: &[S], ys: &[S]) -> Result<(S, S, S)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InvalidParam {
            name: "points",
            message: "OLS needs at least two (x, y) pairs".into(),
        });
    }
    let nf = S::from_count(xs.len());
    let xm = xs.iter().copied().sum::<S>() / nf;
    let ym = ys.iter().copied().sum::<S>() / nf;
    let sxx = xs.iter().map(|&x| (x - xm) * (x - xm)).sum::<S>();
    if sxx == S::zero() {
        return Err(Error::DegenerateFit("all x values identical in OLS".into()));
    }
    let sxy = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| (x - xm) * (y - ym))
        .sum::<S>();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let ss_tot = ys.iter().map(|&y| (y - ym) * (y - ym)).sum::<S>();
    let ss_res = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum::<S>();
    let r_squared = if ss_tot == S::zero() {
        S::one()
    } else {
        S::one() - ss_res / ss_tot
    };
    Ok((slope, intercept, r_squared))
}

/// OLS slope across models with a model-level bootstrap CI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit<S: Scalar = f64> {
    pub slope: S,
    pub intercept: S,
    pub r_squared: S,
    pub slope_ci: (S, S),
}

/// Fit `acc_new ≈ a + b·acc_v1` over per-model accuracy pairs, with a
/// percentile bootstrap CI for the slope obtained by resampling models.
pub fn slope_fit<S: Scalar>(
    pairs: &[(S, S)],
    resamples: u32,
    seed: u64,
) -> Result<SlopeFit<S>> {
    let xs: Vec<S> = pairs.iter().map(|p| p.0).collect();
    let ys: Vec<S> = pairs.iter().map(|p| p.1).collect();
    let (slope, intercept, r_squared) = fit_ols(&xs, &ys)?;
    let mut slopes: Vec<S> = Vec::with_capacity(resamples as usize);
    for r in 0..resamples {
        let mut rng = stream_rng(seed, u64::from(r));
        let sample: Vec<(S, S)> = (0..pairs.len())
            .map(|_| pairs[rng.gen_range(0..pairs.len())])
            .collect();
        let rx: Vec<S> = sample.iter().map(|p| p.0).collect();
        let ry: Vec<S> = sample.iter().map(|p| p.1).collect();
        // A resample can put all mass on one model; skip those.
        if let Ok((s, _, _)) = fit_ols(&rx, &ry) {
            slopes.push(s);
        }
    }
    if slopes.len() < 2 {
        return Err(Error::DegenerateFit(
            "too few non-degenerate bootstrap resamples for a slope CI".into(),
        ));
    }
    slopes.sort_by(|a, b| a.partial_cmp(b).expect("finite slopes"));
    let slope_ci = (percentile(&slopes, S::of(0.025)), percentile(&slopes, S::of(0.975)));
    Ok(SlopeFit {
        slope,
        intercept,
        r_squared,
        slope_ci,
    })
}
