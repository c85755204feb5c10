//! Matching a source pool to a target's observed-frequency distribution.
//!
//! This is the mechanism under study: both matchers select source items
//! using only the *observed* frequency `k/n`, and thereby tilt the latent
//! frequency distribution of what they select (annotation noise lets
//! lower-`s` items sneak into high-frequency bins). The conjugate toy model
//! in [`crate::dist::toy_model_matched_density`] predicts the tilt exactly
//! for the rejection matcher.

use rand::Rng;
use serde::Serialize;

use crate::error::Error;
use crate::rng::{derive_seed, stream_rng};
use crate::scalar::Scalar;
use crate::synthpop::{
    common_annotator_count, split_annotations, AnnotationRecord, DatasetTag, SyntheticPopulation,
};
use crate::Result;

/// Bin edges over `[0, 1]` for frequency histograms: strictly increasing,
/// first edge 0, last edge 1. Membership is `[e_i, e_{i+1})` with the last
/// bin closed on the right.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramSpec<S: Scalar = f64> {
    edges: Vec<S>,
}

impl<S: Scalar> HistogramSpec<S> {
    pub fn new(edges: Vec<S>) -> Result<Self> {
        if edges.len() < 2 {
            return Err(Error::InvalidParam {
                name: "edges",
                message: "need at least two bin edges".into(),
            });
        }
        if edges[0] != S::zero() || edges[edges.len() - 1] != S::one() {
            return Err(Error::InvalidParam {
                name: "edges",
                message: "bin edges must start at 0 and end at 1".into(),
            });
        }
        for w in edges.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidParam {
                    name: "edges",
                    message: "bin edges must be strictly increasing".into(),
                });
            }
        }
        Ok(Self { edges })
    }

    /// Five equal bins of width 0.2.
    pub fn default_bins() -> Self {
        Self::new(vec![S::zero(), S::of(0.2), S::of(0.4), S::of(0.6), S::of(0.8), S::one()])
            .expect("static edges are valid")
    }

    pub fn edges(&self) -> &[S] {
        &self.edges
    }

    pub fn bin_count(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn bin_of(&self, s: S) -> usize {
        let last = self.bin_count() - 1;
        if s >= self.edges[last] {
            return last;
        }
        // partition_point: first edge strictly greater than s, minus one.
        self.edges.partition_point(|&e| e <= s).saturating_sub(1)
    }
}

impl<S: Scalar> Default for HistogramSpec<S> {
    fn default() -> Self {
        Self::default_bins()
    }
}

/// What to do when a source bin can't supply its requested quota.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BinExhaustionPolicy {
    /// Take everything the bin has and redistribute the deficit over the
    /// remaining bins in proportion to target mass.
    #[default]
    Redistribute,
    /// Fail with the bin index and deficit.
    Strict,
}

/// Per-bin bookkeeping of a histogram match.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinAllocation<S: Scalar = f64> {
    pub bin: usize,
    pub target_mass: S,
    pub requested: usize,
    pub selected: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMethod {
    Histogram,
    Rejection,
}

/// A matched selection: which source items were taken, and how.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchedDataset<S: Scalar = f64> {
    pub selected: Vec<u64>,
    pub method: MatchMethod,
    pub seed: u64,
    /// Histogram matches only; empty for rejection.
    pub allocations: Vec<BinAllocation<S>>,
}

/// Sample `sample_size` source items whose observed-frequency histogram
/// matches the target's (largest-remainder quota allocation, then uniform
/// sampling without replacement inside each bin).
pub fn histogram_match<S: Scalar>(
    target: &[AnnotationRecord],
    source: &[AnnotationRecord],
    spec: &HistogramSpec<S>,
    sample_size: usize,
    policy: BinExhaustionPolicy,
    seed: u64,
) -> Result<MatchedDataset<S>> {
    let n_t = common_annotator_count(target)?;
    let n_s = common_annotator_count(source)?;
    if n_t != n_s {
        return Err(Error::RaggedAnnotations { expected: n_t, found: n_s });
    }
    if n_t == 0 {
        return Err(Error::InsufficientAnnotators { needed: 1, available: 0 });
    }
    if sample_size == 0 {
        return Err(Error::InvalidParam {
            name: "sample_size",
            message: "cannot match an empty sample".into(),
        });
    }

    let bins = spec.bin_count();
    let mut target_mass = vec![S::zero(); bins];
    let unit = S::one() / S::from_count(target.len());
    for r in target {
        target_mass[spec.bin_of(r.s_hat::<S>())] += unit;
    }

    // Source items per bin, in input order.
    let mut by_bin: Vec<Vec<usize>> = vec![Vec::new(); bins];
    for (i, r) in source.iter().enumerate() {
        by_bin[spec.bin_of(r.s_hat::<S>())].push(i);
    }

    let mut quota = largest_remainder(&target_mass, sample_size);

    // Resolve exhausted bins. Each pass closes every over-subscribed bin and
    // re-allocates the deficit across bins that still have spare capacity,
    // in proportion to target mass; a bin once closed stays closed.
    let mut closed = vec![false; bins];
    loop {
        let mut deficit = 0usize;
        let mut worst_bin = 0usize;
        for b in 0..bins {
            if quota[b] > by_bin[b].len() {
                let short = quota[b] - by_bin[b].len();
                if policy == BinExhaustionPolicy::Strict {
                    return Err(Error::BinExhausted { bin: b, deficit: short });
                }
                deficit += short;
                worst_bin = b;
                quota[b] = by_bin[b].len();
                closed[b] = true;
            }
        }
        if deficit == 0 {
            break;
        }
        let mut open_mass = vec![S::zero(); bins];
        let mut any_open = false;
        for b in 0..bins {
            if !closed[b] && by_bin[b].len() > quota[b] {
                open_mass[b] = target_mass[b] + S::of(1e-12); // keep zero-mass bins usable
                any_open = true;
            }
        }
        if !any_open {
            return Err(Error::BinExhausted { bin: worst_bin, deficit });
        }
        let total: S = open_mass.iter().copied().sum();
        let norm: Vec<S> = open_mass.iter().map(|&m| m / total).collect();
        let extra = largest_remainder(&norm, deficit);
        for b in 0..bins {
            quota[b] += extra[b];
        }
    }

    let mut allocations = Vec::with_capacity(bins);
    let mut selected = Vec::with_capacity(sample_size);
    for b in 0..bins {
        let take = quota[b];
        let chosen = sample_without_replacement(&by_bin[b], take, stream_rng(seed, b as u64));
        allocations.push(BinAllocation {
            bin: b,
            target_mass: target_mass[b],
            requested: take,
            selected: chosen.len(),
        });
        selected.extend(chosen.into_iter().map(|i| source[i].item_id));
    }
    Ok(MatchedDataset {
        selected,
        method: MatchMethod::Histogram,
        seed,
        allocations,
    })
}

/// Integer quotas for `total` slots proportional to `mass`, by the
/// largest-remainder method with ties broken toward lower bins.
fn largest_remainder<S: Scalar>(mass: &[S], total: usize) -> Vec<usize> {
    let sum: S = mass.iter().copied().sum();
    let mut quota = vec![0usize; mass.len()];
    if sum <= S::zero() {
        return quota;
    }
    let mut rema: Vec<(usize, f64)> = Vec::with_capacity(mass.len());
    let mut assigned = 0usize;
    for (b, &m) in mass.iter().enumerate() {
        let exact = (m / sum * S::from_count(total)).to_f64_lossy();
        let base = exact.floor() as usize;
        quota[b] = base;
        assigned += base;
        rema.push((b, exact - exact.floor()));
    }
    rema.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for (b, _) in rema.into_iter().take(total.saturating_sub(assigned)) {
        quota[b] += 1;
    }
    quota
}

/// Partial Fisher–Yates: `take` distinct entries of `pool`, uniformly.
fn sample_without_replacement(
    pool: &[usize],
    take: usize,
    mut rng: impl Rng,
) -> Vec<usize> {
    let mut pool = pool.to_vec();
    let take = take.min(pool.len());
    for j in 0..take {
        let pick = rng.gen_range(j..pool.len());
        pool.swap(j, pick);
    }
    pool.truncate(take);
    pool
}

/// Accept each source item with probability proportional to
/// `target_pmf(k) / source_pmf(k)`, scaled so the largest ratio accepts
/// with probability exactly 1. Acceptance depends only on the observed
/// count, which is precisely how the latent-distribution tilt arises.
///
/// With `n = 0` records both pmfs concentrate at `k = 0`, the ratio is 1
/// and everything is accepted: no annotations, no filtering.
pub fn rejection_match<S: Scalar>(
    source: &[AnnotationRecord],
    target_pmf: impl Fn(u32) -> S,
    source_pmf: impl Fn(u32) -> S,
    seed: u64,
) -> Result<MatchedDataset<S>> {
    let n = common_annotator_count(source)?;
    let mut ratio = vec![None::<S>; n as usize + 1];
    let mut r_max = S::zero();
    for k in 0..=n {
        let t = target_pmf(k);
        let s = source_pmf(k);
        if !(t.is_finite() && s.is_finite()) || t < S::zero() || s < S::zero() {
            return Err(Error::NonFinite("matching pmf"));
        }
        if s > S::zero() {
            let r = t / s;
            ratio[k as usize] = Some(r);
            if r > r_max {
                r_max = r;
            }
        }
    }
    if r_max <= S::zero() {
        return Err(Error::ZeroDensity { k: 0 });
    }
    let mut selected = Vec::new();
    for (i, rec) in source.iter().enumerate() {
        let accept = match ratio[rec.n_selected as usize] {
            Some(r) => r / r_max,
            None => return Err(Error::ZeroDensity { k: rec.n_selected }),
        };
        let u: f64 = stream_rng(seed, i as u64).gen();
        if S::of(u) < accept {
            selected.push(rec.item_id);
        }
    }
    Ok(MatchedDataset {
        selected,
        method: MatchMethod::Rejection,
        seed,
        allocations: Vec::new(),
    })
}

/// In-sample vs held-out frequency means of a histogram-matched selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeldoutGapReport<S: Scalar = f64> {
    /// Mean in-sample frequency of the selected items (what was matched on).
    pub in_sample_mean: S,
    /// Mean held-out frequency of the same items (independent annotators).
    pub heldout_mean: S,
    /// Mean in-sample frequency of the target records.
    pub target_mean: S,
    pub selected: usize,
}

/// Split annotators, match candidates to the v1 target on the in-sample
/// half, then score the selection on the held-out half. A drop from
/// `in_sample_mean` to `heldout_mean` is the statistic-matching bias made
/// visible without any ground truth.
pub fn heldout_gap_experiment<S: Scalar>(
    population: &SyntheticPopulation<S>,
    in_sample: u32,
    spec: &HistogramSpec<S>,
    sample_size: usize,
    seed: u64,
) -> Result<HeldoutGapReport<S>> {
    let targets = population.annotations_of(DatasetTag::V1);
    let candidates = population.annotations_of(DatasetTag::Candidate);
    let (target_train, _) = split_annotations(&targets, in_sample, derive_seed(seed, 1))?;
    let (cand_train, cand_held) = split_annotations(&candidates, in_sample, derive_seed(seed, 2))?;

    let matched = histogram_match(
        &target_train,
        &cand_train,
        spec,
        sample_size,
        BinExhaustionPolicy::Redistribute,
        derive_seed(seed, 3),
    )?;

    let train_hat: std::collections::HashMap<u64, S> = cand_train
        .iter()
        .map(|r| (r.item_id, r.s_hat::<S>()))
        .collect();
    let held_hat: std::collections::HashMap<u64, S> = cand_held
        .iter()
        .map(|r| (r.item_id, r.s_hat::<S>()))
        .collect();

    let m = S::from_count(matched.selected.len());
    let in_sample_mean = matched.selected.iter().map(|id| train_hat[id]).sum::<S>() / m;
    let heldout_mean = matched.selected.iter().map(|id| held_hat[id]).sum::<S>() / m;
    let target_mean = target_train
        .iter()
        .map(|r| r.s_hat::<S>())
        .sum::<S>()
        / S::from_count(target_train.len());
    Ok(HeldoutGapReport {
        in_sample_mean,
        heldout_mean,
        target_mean,
        selected: matched.selected.len(),
    })
}

/// Downstream accuracies when matching from the raw candidate pool vs a
/// pool pre-filtered on *held-out* annotations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FilteredSourceReport<S: Scalar = f64> {
    pub raw_accuracy: S,
    pub filtered_accuracy: S,
    pub raw_in_sample_mean: S,
    pub filtered_in_sample_mean: S,
    pub filtered_pool: usize,
}

/// Match the same target twice — once from all candidates, once from
/// candidates whose held-out selection fraction reaches `heldout_threshold`
/// — and report the model accuracy of each selection. The filter can only
/// help: it removes items whose in-sample frequency overstated their latent
/// one. Threshold 0 keeps the full pool, making the two arms identical.
pub fn filtered_source_experiment<S: Scalar>(
    population: &SyntheticPopulation<S>,
    model: &str,
    in_sample: u32,
    heldout_threshold: S,
    spec: &HistogramSpec<S>,
    sample_size: usize,
    seed: u64,
) -> Result<FilteredSourceReport<S>> {
    if heldout_threshold < S::zero() || heldout_threshold > S::one() {
        return Err(Error::InvalidParam {
            name: "heldout_threshold",
            message: format!("threshold {heldout_threshold} outside [0, 1]"),
        });
    }
    let targets = population.annotations_of(DatasetTag::V1);
    let candidates = population.annotations_of(DatasetTag::Candidate);
    let correct_bits = population.correctness_of(DatasetTag::Candidate, model);
    if correct_bits.len() != candidates.len() {
        return Err(Error::InvalidParam {
            name: "model",
            message: format!("no complete correctness column for model {model:?}"),
        });
    }

    let (target_train, _) = split_annotations(&targets, in_sample, derive_seed(seed, 1))?;
    let (cand_train, cand_held) = split_annotations(&candidates, in_sample, derive_seed(seed, 2))?;

    // j-of-m form: pass iff held-out selections ≥ ceil(threshold·m).
    let m_held = cand_held[0].n_annotators;
    let need = (heldout_threshold.to_f64_lossy() * f64::from(m_held)).ceil() as u32;
    let passing: std::collections::HashSet<u64> = cand_held
        .iter()
        .filter(|r| r.n_selected >= need)
        .map(|r| r.item_id)
        .collect();

    let filtered_train: Vec<AnnotationRecord> = cand_train
        .iter()
        .filter(|r| passing.contains(&r.item_id))
        .cloned()
        .collect();
    if filtered_train.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let correct: std::collections::HashMap<u64, bool> = candidates
        .iter()
        .zip(&correct_bits)
        .map(|(r, &c)| (r.item_id, c))
        .collect();
    let train_hat: std::collections::HashMap<u64, S> = cand_train
        .iter()
        .map(|r| (r.item_id, r.s_hat::<S>()))
        .collect();

    let match_seed = derive_seed(seed, 3);
    let raw = histogram_match(
        &target_train,
        &cand_train,
        spec,
        sample_size,
        BinExhaustionPolicy::Redistribute,
        match_seed,
    )?;
    let filtered = histogram_match(
        &target_train,
        &filtered_train,
        spec,
        sample_size,
        BinExhaustionPolicy::Redistribute,
        match_seed,
    )?;

    let score = |sel: &[u64]| -> (S, S) {
        let m = S::from_count(sel.len());
        let acc = sel.iter().filter(|id| correct[id]).count();
        let mean_hat = sel.iter().map(|id| train_hat[id]).sum::<S>() / m;
        (S::from_count(acc) / m, mean_hat)
    };
    let (raw_accuracy, raw_in_sample_mean) = score(&raw.selected);
    let (filtered_accuracy, filtered_in_sample_mean) = score(&filtered.selected);
    Ok(FilteredSourceReport {
        raw_accuracy,
        filtered_accuracy,
        raw_in_sample_mean,
        filtered_in_sample_mean,
        filtered_pool: filtered_train.len(),
    })
}

/// Everything a replication-accuracy hook gets to see: blind records for
/// both datasets (restricted to the current annotator count) and the
/// correctness bits of one model, aligned with each record list.
pub struct SubsampleView<'a> {
    pub n_annotators: u32,
    pub target_records: &'a [AnnotationRecord],
    pub source_records: &'a [AnnotationRecord],
    pub target_correct: &'a [bool],
    pub source_correct: &'a [bool],
}

/// The v1-to-replication accuracy gap as a function of annotator count,
/// from blind records.
///
/// For each `n` in `counts`, records are re-derived from the first `n`
/// retained draws and `replication_accuracy` is recomputed; the emitted gap
/// is `raw v1 accuracy − hook(view)`. The default hook (histogram match +
/// raw accuracy of the selection) is [`match_then_score`].
pub fn annotator_subsample_curve_records<S: Scalar, F>(
    targets: &[AnnotationRecord],
    sources: &[AnnotationRecord],
    target_correct: &[bool],
    source_correct: &[bool],
    counts: &[u32],
    mut replication_accuracy: F,
    seed: u64,
) -> Result<Vec<(u32, S)>>
where
    F: FnMut(&SubsampleView<'_>, u64) -> Result<S>,
{
    let v1_acc = crate::estimators::raw_accuracy::<S>(target_correct)?.value;
    let mut out = Vec::with_capacity(counts.len());
    for &n in counts {
        let t: Vec<AnnotationRecord> = targets
            .iter()
            .map(|r| r.truncate_annotators(n))
            .collect::<Result<_>>()?;
        let s: Vec<AnnotationRecord> = sources
            .iter()
            .map(|r| r.truncate_annotators(n))
            .collect::<Result<_>>()?;
        let view = SubsampleView {
            n_annotators: n,
            target_records: &t,
            source_records: &s,
            target_correct,
            source_correct,
        };
        let acc = replication_accuracy(&view, derive_seed(seed, u64::from(n)))?;
        out.push((n, v1_acc - acc));
    }
    Ok(out)
}

/// [`annotator_subsample_curve_records`] over a synthetic population's v1
/// and candidate datasets.
pub fn annotator_subsample_curve<S: Scalar, F>(
    population: &SyntheticPopulation<S>,
    model: &str,
    counts: &[u32],
    replication_accuracy: F,
    seed: u64,
) -> Result<Vec<(u32, S)>>
where
    F: FnMut(&SubsampleView<'_>, u64) -> Result<S>,
{
    annotator_subsample_curve_records(
        &population.annotations_of(DatasetTag::V1),
        &population.annotations_of(DatasetTag::Candidate),
        &population.correctness_of(DatasetTag::V1, model),
        &population.correctness_of(DatasetTag::Candidate, model),
        counts,
        replication_accuracy,
        seed,
    )
}

/// Default subsample-curve hook: histogram-match the source to the target
/// and return the raw accuracy of the selected items.
pub fn match_then_score<S: Scalar>(
    spec: HistogramSpec<S>,
    sample_size: usize,
) -> impl FnMut(&SubsampleView<'_>, u64) -> Result<S> {
    move |view, seed| {
        let matched = histogram_match(
            view.target_records,
            view.source_records,
            &spec,
            sample_size,
            BinExhaustionPolicy::Redistribute,
            seed,
        )?;
        let correct: std::collections::HashMap<u64, bool> = view
            .source_records
            .iter()
            .zip(view.source_correct)
            .map(|(r, &c)| (r.item_id, c))
            .collect();
        let hits = matched.selected.iter().filter(|id| correct[id]).count();
        Ok(S::from_count(hits) / S::from_count(matched.selected.len()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{beta_binomial_pmf, BetaMixture, BetaParams, BinomialNoiseModel};
    use crate::synthpop::{annotate, generate_population, DatasetTag};

    fn rec(id: u64, k: u32, n: u32) -> AnnotationRecord {
        AnnotationRecord::new(id, n, k).unwrap()
    }

    #[test]
    fn histogram_spec_validation_and_bins() {
        let spec = HistogramSpec::<f64>::default_bins();
        assert_eq!(spec.bin_count(), 5);
        assert_eq!(spec.bin_of(0.0), 0);
        assert_eq!(spec.bin_of(0.19), 0);
        assert_eq!(spec.bin_of(0.2), 1);
        assert_eq!(spec.bin_of(0.999), 4);
        assert_eq!(spec.bin_of(1.0), 4); // last bin closed
        assert!(HistogramSpec::new(vec![0.0f64, 0.5]).is_err());
        assert!(HistogramSpec::new(vec![0.0f64, 0.5, 0.5, 1.0]).is_err());
        assert!(HistogramSpec::new(vec![0.1f64, 1.0]).is_err());
        assert!(HistogramSpec::new(vec![0.0f64, 1.0]).is_ok());
    }

    #[test]
    fn largest_remainder_sums_and_orders() {
        let q = largest_remainder(&[0.5f64, 0.3, 0.2], 10);
        assert_eq!(q, vec![5, 3, 2]);
        let q = largest_remainder(&[1.0f64 / 3.0; 3], 10);
        assert_eq!(q.iter().sum::<usize>(), 10);
        // Ties break toward the lower bin.
        assert!(q[0] >= q[2]);
        let q = largest_remainder(&[0.0f64, 0.0], 5);
        assert_eq!(q, vec![0, 0]);
    }

    #[test]
    fn histogram_match_reproduces_target_histogram() {
        // Source has plenty of everything; the matched histogram must equal
        // the target's up to quota rounding.
        let n = 10u32;
        let target: Vec<_> = (0..1000)
            .map(|i| rec(i, if i % 10 < 7 { 8 } else { 2 }, n))
            .collect();
        let source: Vec<_> = (0..20_000).map(|i| rec(10_000 + i, (i % 11) as u32, n)).collect();
        let spec = HistogramSpec::<f64>::default_bins();
        let m = histogram_match(&target, &source, &spec, 2000, BinExhaustionPolicy::Strict, 3)
            .unwrap();
        assert_eq!(m.selected.len(), 2000);
        let by_id: std::collections::HashMap<u64, u32> =
            source.iter().map(|r| (r.item_id, r.n_selected)).collect();
        let mut got = vec![0usize; spec.bin_count()];
        for id in &m.selected {
            got[spec.bin_of(f64::from(by_id[id]) / f64::from(n))] += 1;
        }
        // Target: 70% in bin of 0.8 (bin 4), 30% in bin of 0.2 (bin 1).
        assert_eq!(got[4], 1400);
        assert_eq!(got[1], 600);
        // No duplicates.
        let mut ids = m.selected.clone();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 2000);
    }

    #[test]
    fn histogram_match_one_bin_target() {
        let n = 4u32;
        let target: Vec<_> = (0..10).map(|i| rec(i, 4, n)).collect(); // all ŝ = 1
        let source: Vec<_> = (0..100).map(|i| rec(100 + i, (i % 5) as u32, n)).collect();
        let spec = HistogramSpec::<f64>::default_bins();
        let m = histogram_match(&target, &source, &spec, 15, BinExhaustionPolicy::Strict, 1)
            .unwrap();
        let by_id: std::collections::HashMap<u64, u32> =
            source.iter().map(|r| (r.item_id, r.n_selected)).collect();
        assert!(m.selected.iter().all(|id| by_id[id] == 4));
        assert_eq!(m.selected.len(), 15);
    }

    #[test]
    fn histogram_match_exhaustion_policies() {
        let n = 4u32;
        let target: Vec<_> = (0..10).map(|i| rec(i, 4, n)).collect();
        // Only 3 items in the needed bin; 50 elsewhere.
        let mut source: Vec<_> = (0..3).map(|i| rec(100 + i, 4, n)).collect();
        source.extend((0..50).map(|i| rec(200 + i, 1, n)));
        let spec = HistogramSpec::<f64>::default_bins();

        let strict = histogram_match(&target, &source, &spec, 10, BinExhaustionPolicy::Strict, 1);
        assert!(matches!(strict, Err(Error::BinExhausted { bin: 4, deficit: 7 })));

        let redist =
            histogram_match(&target, &source, &spec, 10, BinExhaustionPolicy::Redistribute, 1)
                .unwrap();
        assert_eq!(redist.selected.len(), 10);
        // The 3 available high-bin items are all taken.
        let high: Vec<_> = redist.selected.iter().filter(|&&id| (100..200).contains(&id)).collect();
        assert_eq!(high.len(), 3);

        // Global shortage: not enough items anywhere.
        let tiny: Vec<_> = (0..5).map(|i| rec(300 + i, 1, n)).collect();
        let too_many =
            histogram_match(&target, &tiny, &spec, 10, BinExhaustionPolicy::Redistribute, 1);
        assert!(matches!(too_many, Err(Error::BinExhausted { .. })));
    }

    #[test]
    fn histogram_match_is_deterministic() {
        let n = 6u32;
        let target: Vec<_> = (0..200).map(|i| rec(i, (i % 7) as u32, n)).collect();
        let source: Vec<_> = (0..2000).map(|i| rec(1000 + i, (i % 7) as u32, n)).collect();
        let spec = HistogramSpec::<f64>::default_bins();
        let a = histogram_match(&target, &source, &spec, 500, BinExhaustionPolicy::Strict, 9).unwrap();
        let b = histogram_match(&target, &source, &spec, 500, BinExhaustionPolicy::Strict, 9).unwrap();
        assert_eq!(a, b);
        let c = histogram_match(&target, &source, &spec, 500, BinExhaustionPolicy::Strict, 10).unwrap();
        assert_ne!(a.selected, c.selected);
    }

    #[test]
    fn rejection_match_accepts_max_ratio_with_probability_one() {
        // Identical pmfs: every ratio is 1 = max, so everything is accepted.
        let n = 6u32;
        let source: Vec<_> = (0..500).map(|i| rec(i, (i % 7) as u32, n)).collect();
        let pmf = |_k: u32| 1.0f64 / 7.0;
        let m = rejection_match(&source, pmf, pmf, 5).unwrap();
        assert_eq!(m.selected.len(), 500);
    }

    #[test]
    fn rejection_match_zero_density_detection() {
        let n = 2u32;
        let source = vec![rec(0, 1, n)];
        // Source pmf is zero at the observed k=1.
        let err = rejection_match(
            &source,
            |_k| 1.0f64 / 3.0,
            |k| if k == 1 { 0.0 } else { 0.5 },
            1,
        );
        assert!(matches!(err, Err(Error::ZeroDensity { k: 1 })));
    }

    #[test]
    fn rejection_match_no_annotations_accepts_everything() {
        let source: Vec<_> = (0..100)
            .map(|i| AnnotationRecord::new(i, 0, 0).unwrap())
            .collect();
        let m = rejection_match(&source, |_| 1.0f64, |_| 1.0f64, 3).unwrap();
        assert_eq!(m.selected.len(), 100);
    }

    /// Smaller-scale version of the headline toy-model check: rejection
    /// matching Beta(2,2) candidates toward the Beta(3,2)-induced count
    /// distribution tilts the latent mean to the predicted mixture's.
    #[test]
    fn rejection_match_mean_matches_toy_model() {
        let n = 10u32;
        let pool = BetaParams::new(2.0, 2.0).unwrap();
        let target = BetaParams::new(3.0, 2.0).unwrap();
        let items = generate_population(
            &BetaMixture::single(pool),
            120_000,
            DatasetTag::Candidate,
            71,
        );
        let recs = annotate(&items, BinomialNoiseModel::new(n).unwrap(), false, 72).unwrap();
        let m = rejection_match(
            &recs,
            |k| beta_binomial_pmf(&target, n, k).unwrap(),
            |k| beta_binomial_pmf(&pool, n, k).unwrap(),
            73,
        )
        .unwrap();
        let s_of: std::collections::HashMap<u64, f64> =
            items.iter().map(|it| (it.id, it.true_s)).collect();
        let mean: f64 =
            m.selected.iter().map(|id| s_of[id]).sum::<f64>() / m.selected.len() as f64;
        // Toy solution: (10/14)·Beta(3,2) + (4/14)·Beta(2,2) → mean ≈ 0.5714.
        let sol = crate::dist::toy_model_matched_density(2.0, 2.0, n).unwrap();
        let want = sol.v1_weight * 0.6 + sol.flickr_weight * 0.5;
        assert!((mean - want).abs() < 5e-3, "matched mean {mean}, toy predicts {want}");
        // And the bias signature: strictly between source and target means.
        assert!(mean > 0.5 + 2e-3 && mean < 0.6 - 2e-3);
    }

    fn small_population() -> SyntheticPopulation<f64> {
        use crate::synthpop::{simulate_correctness, GroundTruthAccuracyCurve, ImageItem};
        let v1 = generate_population(
            &BetaMixture::single(BetaParams::new(6.0, 2.0).unwrap()),
            4_000,
            DatasetTag::V1,
            31,
        );
        let cand = generate_population(
            &BetaMixture::single(BetaParams::new(2.0, 2.0).unwrap()),
            40_000,
            DatasetTag::Candidate,
            32,
        );
        let noise = BinomialNoiseModel::new(10).unwrap();
        let mut items: Vec<ImageItem<f64>> = v1;
        items.extend(cand);
        let annotations = annotate(&items, noise, true, 33).unwrap();
        let curve = GroundTruthAccuracyCurve::logistic(8.0, 0.7).unwrap();
        let correctness = simulate_correctness(&items, &curve, &["m0"], 34).unwrap();
        SyntheticPopulation { items, annotations, correctness }
    }

    #[test]
    fn heldout_gap_shows_matching_bias() {
        let pop = small_population();
        let report = heldout_gap_experiment(
            &pop,
            5,
            &HistogramSpec::default_bins(),
            3_000,
            91,
        )
        .unwrap();
        assert_eq!(report.selected, 3_000);
        // The selection was tuned on the in-sample half, so its held-out
        // frequencies regress toward the pool.
        assert!(
            report.in_sample_mean - report.heldout_mean > 0.005,
            "in-sample {} vs held-out {}",
            report.in_sample_mean,
            report.heldout_mean
        );
        // Matching pushed the in-sample mean well above the pool's 0.5.
        assert!(report.in_sample_mean > 0.6);
    }

    #[test]
    fn filtered_source_improves_selection() {
        let pop = small_population();
        let spec = HistogramSpec::default_bins();
        let report =
            filtered_source_experiment(&pop, "m0", 5, 0.5, &spec, 3_000, 55).unwrap();
        assert!(
            report.filtered_accuracy >= report.raw_accuracy,
            "filtered {} < raw {}",
            report.filtered_accuracy,
            report.raw_accuracy
        );
        assert!((report.raw_in_sample_mean - report.filtered_in_sample_mean).abs() < 0.02);
        assert!(report.filtered_pool < 40_000);

        // Threshold 0 keeps the whole pool: identical selections.
        let zero = filtered_source_experiment(&pop, "m0", 5, 0.0, &spec, 3_000, 55).unwrap();
        assert_eq!(zero.raw_accuracy, zero.filtered_accuracy);
        assert_eq!(zero.filtered_pool, 40_000);
    }

    #[test]
    fn subsample_curve_gap_grows_as_annotators_shrink() {
        let pop = small_population();
        let spec = HistogramSpec::default_bins();
        let curve = annotator_subsample_curve(
            &pop,
            "m0",
            &[2, 10],
            match_then_score(spec, 3_000),
            77,
        )
        .unwrap();
        assert_eq!(curve.len(), 2);
        let gap_at = |n: u32| curve.iter().find(|(c, _)| *c == n).unwrap().1;
        // Fewer annotators → noisier matching → more bias → larger gap.
        assert!(
            gap_at(2) > gap_at(10),
            "gap(2) = {}, gap(10) = {}",
            gap_at(2),
            gap_at(10)
        );
    }

    #[test]
    fn observed_match_quality_chi_square() {
        // The histogram matcher must reproduce the *observed* histogram
        // essentially exactly — χ² over bins stays below the α=0.001
        // critical value for 4 degrees of freedom (18.47).
        let pop = small_population();
        let spec = HistogramSpec::<f64>::default_bins();
        let targets = pop.annotations_of(DatasetTag::V1);
        let cands = pop.annotations_of(DatasetTag::Candidate);
        let m = histogram_match(&targets, &cands, &spec, 3000, BinExhaustionPolicy::Redistribute, 5)
            .unwrap();
        let hat: std::collections::HashMap<u64, f64> =
            cands.iter().map(|r| (r.item_id, r.s_hat::<f64>())).collect();
        let mut got = vec![0.0f64; spec.bin_count()];
        for id in &m.selected {
            got[spec.bin_of(hat[id])] += 1.0;
        }
        let mut want = vec![0.0f64; spec.bin_count()];
        for r in &targets {
            want[spec.bin_of(r.s_hat::<f64>())] += 1.0;
        }
        let scale = 3000.0 / targets.len() as f64;
        let chi2: f64 = got
            .iter()
            .zip(&want)
            .filter(|(_, &w)| w > 0.0)
            .map(|(&g, &w)| {
                let e = w * scale;
                (g - e) * (g - e) / e
            })
            .sum();
        assert!(chi2 < 18.47, "chi-square {chi2} too large: {got:?} vs {want:?}");
    }
}
