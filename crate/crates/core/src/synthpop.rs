//! Synthetic populations with known ground truth.
//!
//! Items carry a latent selection frequency `true_s`; the observation
//! channel draws per-annotator Bernoulli selections; model correctness is
//! Bernoulli in a ground-truth accuracy curve `g(true_s)`. Estimators never
//! see `true_s` — they consume [`AnnotationRecord`] / [`CorrectnessRecord`]
//! only, and the blind CSV serialization on the CLI side mirrors that.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{BetaMixture, BinomialNoiseModel};
use crate::error::Error;
use crate::quad::integrate_beta_weighted;
use crate::rng::{derive_seed, stream_rng};
use crate::scalar::Scalar;
use crate::special::logistic;
use crate::Result;

/// Which dataset an item belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetTag {
    V1,
    V2,
    Candidate,
}

impl DatasetTag {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetTag::V1 => "v1",
            DatasetTag::V2 => "v2",
            DatasetTag::Candidate => "candidate",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "v1" => Ok(DatasetTag::V1),
            "v2" => Ok(DatasetTag::V2),
            "candidate" => Ok(DatasetTag::Candidate),
            other => Err(Error::InvalidParam {
                name: "dataset",
                message: format!("unknown dataset tag {other:?}"),
            }),
        }
    }
}

/// One item with its hidden latent frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageItem<S: Scalar = f64> {
    pub id: u64,
    pub dataset: DatasetTag,
    pub class: u32,
    pub true_s: S,
}

/// Annotation summary for one item: `n_selected` of `n_annotators` selected
/// it, optionally with the per-annotator draws retained (needed by the
/// split/jackknife machinery). `n_annotators = 0` encodes the degenerate
/// "no annotation" channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub item_id: u64,
    pub n_annotators: u32,
    pub n_selected: u32,
    pub draws: Option<Vec<bool>>,
}

impl AnnotationRecord {
    pub fn new(item_id: u64, n_annotators: u32, n_selected: u32) -> Result<Self> {
        if n_selected > n_annotators {
            return Err(Error::CountOutOfRange {
                k: n_selected,
                n: n_annotators,
            });
        }
        Ok(Self {
            item_id,
            n_annotators,
            n_selected,
            draws: None,
        })
    }

    pub fn with_draws(item_id: u64, draws: Vec<bool>) -> Self {
        let n_selected = draws.iter().filter(|&&d| d).count() as u32;
        Self {
            item_id,
            n_annotators: draws.len() as u32,
            n_selected,
            draws: Some(draws),
        }
    }

    /// Observed selection frequency `k/n`. Requires `n ≥ 1`.
    #[inline]
    pub fn s_hat<S: Scalar>(&self) -> S {
        debug_assert!(self.n_annotators > 0, "s_hat undefined for n = 0");
        S::of(f64::from(self.n_selected) / f64::from(self.n_annotators))
    }

    /// Record restricted to the first `n` retained draws.
    pub fn truncate_annotators(&self, n: u32) -> Result<Self> {
        let draws = self.draws.as_ref().ok_or(Error::MissingDraws)?;
        if (n as usize) > draws.len() {
            return Err(Error::InsufficientAnnotations {
                needed: n,
                available: draws.len() as u32,
            });
        }
        Ok(Self::with_draws(self.item_id, draws[..n as usize].to_vec()))
    }
}

/// One (item, model) correctness bit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectnessRecord {
    pub item_id: u64,
    pub model_name: String,
    pub correct: bool,
}

/// Ground-truth accuracy curve `g : [0,1] → [0,1]`, the probability that a
/// model classifies an item correctly given its latent frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GroundTruthAccuracyCurve<S: Scalar = f64> {
    Constant { value: S },
    Linear { intercept: S, slope: S },
    Logistic { steepness: S, midpoint: S },
    /// Piecewise-linear interpolation through sorted `(s, g)` breakpoints;
    /// constant extrapolation outside the breakpoint range.
    Table { points: Vec<(S, S)> },
}

impl<S: Scalar> GroundTruthAccuracyCurve<S> {
    pub fn constant(value: S) -> Result<Self> {
        in_unit(value, "constant accuracy")?;
        Ok(Self::Constant { value })
    }

    /// `g(s) = intercept + slope·s`, required monotone nondecreasing with
    /// both endpoints inside `[0, 1]`.
    pub fn linear(intercept: S, slope: S) -> Result<Self> {
        if slope < S::zero() {
            return Err(Error::InvalidCurve("linear slope must be ≥ 0".into()));
        }
        in_unit(intercept, "linear intercept")?;
        in_unit(intercept + slope, "linear value at s = 1")?;
        Ok(Self::Linear { intercept, slope })
    }

    /// `g(s) = σ(steepness · (s − midpoint))`, `steepness ≥ 0`.
    pub fn logistic(steepness: S, midpoint: S) -> Result<Self> {
        if steepness < S::zero() || !steepness.is_finite() || !midpoint.is_finite() {
            return Err(Error::InvalidCurve(
                "logistic steepness must be finite and ≥ 0".into(),
            ));
        }
        Ok(Self::Logistic { steepness, midpoint })
    }

    pub fn table(points: Vec<(S, S)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidCurve("table needs at least one point".into()));
        }
        for window in points.windows(2) {
            if window[1].0 <= window[0].0 {
                return Err(Error::InvalidCurve(
                    "table abscissae must be strictly increasing".into(),
                ));
            }
        }
        for &(x, y) in &points {
            in_unit(x, "table abscissa")?;
            in_unit(y, "table value")?;
        }
        Ok(Self::Table { points })
    }

    pub fn eval(&self, s: S) -> S {
        match self {
            Self::Constant { value } => *value,
            Self::Linear { intercept, slope } => *intercept + *slope * s,
            Self::Logistic { steepness, midpoint } => logistic(*steepness * (s - *midpoint)),
            Self::Table { points } => {
                if s <= points[0].0 {
                    return points[0].1;
                }
                if s >= points[points.len() - 1].0 {
                    return points[points.len() - 1].1;
                }
                let idx = points.partition_point(|&(x, _)| x < s);
                let (x0, y0) = points[idx - 1];
                let (x1, y1) = points[idx];
                y0 + (y1 - y0) * (s - x0) / (x1 - x0)
            }
        }
    }
}

fn in_unit<S: Scalar>(v: S, what: &str) -> Result<()> {
    if !v.is_finite() || v < S::zero() || v > S::one() {
        return Err(Error::InvalidCurve(format!("{what} must lie in [0, 1], got {v}")));
    }
    Ok(())
}

/// The shared annotator count of a rectangular record set; errors on empty
/// or ragged input. Estimator buckets are indexed by `k = 0..=n`, so every
/// record must use the same `n`.
pub fn common_annotator_count(records: &[AnnotationRecord]) -> Result<u32> {
    let first = records.first().ok_or(Error::EmptyDataset)?.n_annotators;
    for r in records {
        if r.n_annotators != first {
            return Err(Error::RaggedAnnotations {
                expected: first,
                found: r.n_annotators,
            });
        }
        if r.n_selected > r.n_annotators {
            return Err(Error::CountOutOfRange {
                k: r.n_selected,
                n: r.n_annotators,
            });
        }
    }
    Ok(first)
}

/// Items, annotations and correctness bits generated together.
#[derive(Debug, Clone)]
pub struct SyntheticPopulation<S: Scalar = f64> {
    pub items: Vec<ImageItem<S>>,
    pub annotations: Vec<AnnotationRecord>,
    pub correctness: Vec<CorrectnessRecord>,
}

impl<S: Scalar> SyntheticPopulation<S> {
    /// Indices of items (and their aligned annotations) carrying `tag`.
    pub fn indices_of(&self, tag: DatasetTag) -> Vec<usize> {
        self.items
            .iter()
            .enumerate()
            .filter(|(_, it)| it.dataset == tag)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn annotations_of(&self, tag: DatasetTag) -> Vec<AnnotationRecord> {
        self.indices_of(tag)
            .into_iter()
            .map(|i| self.annotations[i].clone())
            .collect()
    }

    /// Correctness bits of `model` aligned with `annotations_of(tag)`.
    pub fn correctness_of(&self, tag: DatasetTag, model: &str) -> Vec<bool> {
        let map: std::collections::HashMap<u64, bool> = self
            .correctness
            .iter()
            .filter(|c| c.model_name == model)
            .map(|c| (c.item_id, c.correct))
            .collect();
        self.items
            .iter()
            .filter(|it| it.dataset == tag)
            .map(|it| map[&it.id])
            .collect()
    }

    pub fn model_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .correctness
            .iter()
            .map(|c| c.model_name.clone())
            .collect();
        names.sort();
        names.dedup();
        names
    }
}

/// Draw `count` items with latent frequencies from `mixture`. Item ids are
/// unique across tags (the tag lives in the high bits).
pub fn generate_population<S: Scalar>(
    mixture: &BetaMixture<S>,
    count: usize,
    tag: DatasetTag,
    seed: u64,
) -> Vec<ImageItem<S>> {
    let base = (tag as u64 + 1) << 40;
    mixture
        .sample(count, seed)
        .into_iter()
        .enumerate()
        .map(|(i, s)| ImageItem {
            id: base + i as u64,
            dataset: tag,
            class: 0,
            true_s: s,
        })
        .collect()
}

/// Annotate each item: `n` Bernoulli(`true_s`) draws, summarized as a count
/// and (optionally) kept draw-by-draw. Item `i` uses stream `i` of `seed`.
pub fn annotate<S: Scalar>(
    items: &[ImageItem<S>],
    noise: BinomialNoiseModel,
    retain_draws: bool,
    seed: u64,
) -> Result<Vec<AnnotationRecord>> {
    let n = noise.n();
    items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let p = item.true_s.to_f64_lossy();
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParam {
                    name: "true_s",
                    message: format!("item {} has true_s = {p} outside [0, 1]", item.id),
                });
            }
            let mut rng = stream_rng(seed, i as u64);
            let draws: Vec<bool> = (0..n).map(|_| rng.gen_bool(p)).collect();
            Ok(if retain_draws {
                AnnotationRecord::with_draws(item.id, draws)
            } else {
                let k = draws.iter().filter(|&&d| d).count() as u32;
                AnnotationRecord {
                    item_id: item.id,
                    n_annotators: n,
                    n_selected: k,
                    draws: None,
                }
            })
        })
        .collect()
}

/// Split each record's draws into a disjoint in-sample/held-out pair of
/// records (`in_sample` and `n − in_sample` annotators). The subset is
/// chosen by a per-item random permutation, so with exchangeable draws the
/// two halves are statistically interchangeable.
pub fn split_annotations(
    records: &[AnnotationRecord],
    in_sample: u32,
    seed: u64,
) -> Result<(Vec<AnnotationRecord>, Vec<AnnotationRecord>)> {
    let mut train = Vec::with_capacity(records.len());
    let mut heldout = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let draws = rec.draws.as_ref().ok_or(Error::MissingDraws)?;
        if in_sample == 0 || (in_sample as usize) >= draws.len() {
            return Err(Error::InsufficientAnnotations {
                needed: in_sample + 1,
                available: draws.len() as u32,
            });
        }
        let mut order: Vec<usize> = (0..draws.len()).collect();
        let mut rng = stream_rng(seed, i as u64);
        // Fisher–Yates
        for j in (1..order.len()).rev() {
            let pick = rng.gen_range(0..=j);
            order.swap(j, pick);
        }
        let (a, b) = order.split_at(in_sample as usize);
        train.push(AnnotationRecord::with_draws(
            rec.item_id,
            a.iter().map(|&j| draws[j]).collect(),
        ));
        heldout.push(AnnotationRecord::with_draws(
            rec.item_id,
            b.iter().map(|&j| draws[j]).collect(),
        ));
    }
    Ok((train, heldout))
}

/// Bernoulli correctness bits for each (item, model) pair with success
/// probability `g(true_s)`.
pub fn simulate_correctness<S: Scalar>(
    items: &[ImageItem<S>],
    curve: &GroundTruthAccuracyCurve<S>,
    model_names: &[&str],
    seed: u64,
) -> Result<Vec<CorrectnessRecord>> {
    let mut out = Vec::with_capacity(items.len() * model_names.len());
    for (i, item) in items.iter().enumerate() {
        for (m, name) in model_names.iter().enumerate() {
            let p = curve.eval(item.true_s).to_f64_lossy();
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidCurve(format!(
                    "curve value {p} outside [0, 1] at true_s = {}",
                    item.true_s
                )));
            }
            let mut rng = stream_rng(seed, (i * model_names.len() + m) as u64);
            out.push(CorrectnessRecord {
                item_id: item.id,
                model_name: (*name).to_string(),
                correct: rng.gen_bool(p),
            });
        }
    }
    Ok(out)
}

/// The quantity every estimator in this crate is chasing:
/// `∫ g(s) · p₁(s) ds`, the accuracy a model would have on items drawn from
/// the target latent distribution. Adaptive quadrature, absolute error
/// below `tol` (callers typically pass 1e-9; anything ≤ 1e-8 satisfies the
/// advertised precision).
pub fn true_adjusted_accuracy<S: Scalar>(
    curve: &GroundTruthAccuracyCurve<S>,
    target: &BetaMixture<S>,
    tol: S,
) -> Result<S> {
    let mut total = S::zero();
    for (w, params) in target.components() {
        if *w == S::zero() {
            continue;
        }
        total += *w * integrate_beta_weighted(|s| curve.eval(s), params, tol / *w)?;
    }
    Ok(total)
}

/// Everything needed to materialize the default experiment world: latent
/// mixtures per dataset, the shared accuracy curve, channel width and sizes.
#[derive(Debug, Clone)]
pub struct ScenarioConfig<S: Scalar = f64> {
    pub v1_mixture: BetaMixture<S>,
    pub candidate_mixture: BetaMixture<S>,
    pub curve: GroundTruthAccuracyCurve<S>,
    pub n_annotators: u32,
    pub items_per_dataset: usize,
    pub model_names: Vec<String>,
    pub retain_draws: bool,
}

impl<S: Scalar> ScenarioConfig<S> {
    /// The canonical benchmark world: target latent distribution Beta(3,2),
    /// candidate pool Beta(2,2), logistic accuracy curve, 40 annotators,
    /// 10⁴ items per dataset.
    pub fn default_scenario() -> Self {
        Self {
            v1_mixture: BetaMixture::single(
                crate::dist::BetaParams::new(S::of(3.0), S::of(2.0)).unwrap(),
            ),
            candidate_mixture: BetaMixture::single(
                crate::dist::BetaParams::new(S::of(2.0), S::of(2.0)).unwrap(),
            ),
            curve: GroundTruthAccuracyCurve::logistic(S::of(8.0), S::of(0.7)).unwrap(),
            n_annotators: 40,
            items_per_dataset: 10_000,
            model_names: vec!["model-00".into()],
            retain_draws: true,
        }
    }

    /// Generate items, annotations and correctness for the v1 and candidate
    /// datasets. Stage seeds are derived from `seed` with fixed tags, so any
    /// two runs with the same config and seed agree bit for bit.
    pub fn build(&self, seed: u64) -> Result<SyntheticPopulation<S>> {
        let noise = BinomialNoiseModel::new(self.n_annotators)?;
        let names: Vec<&str> = self.model_names.iter().map(String::as_str).collect();

        let mut items = generate_population(&self.v1_mixture, self.items_per_dataset, DatasetTag::V1, derive_seed(seed, 1));
        items.extend(generate_population(
            &self.candidate_mixture,
            self.items_per_dataset,
            DatasetTag::Candidate,
            derive_seed(seed, 2),
        ));

        let v1_count = self.items_per_dataset;
        let mut annotations = annotate(&items[..v1_count], noise, self.retain_draws, derive_seed(seed, 3))?;
        annotations.extend(annotate(&items[v1_count..], noise, self.retain_draws, derive_seed(seed, 4))?);

        let mut correctness = simulate_correctness(&items[..v1_count], &self.curve, &names, derive_seed(seed, 5))?;
        correctness.extend(simulate_correctness(&items[v1_count..], &self.curve, &names, derive_seed(seed, 6))?);

        Ok(SyntheticPopulation {
            items,
            annotations,
            correctness,
        })
    }
}
