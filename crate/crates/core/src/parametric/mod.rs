//! Parametric bias correction.
//!
//! Two stages, usable separately:
//!
//! 1. [`em_fit`] recovers a latent beta-mixture frequency distribution from
//!    blind annotation counts (EM on the beta-binomial likelihood).
//! 2. [`spline_fit`] deconvolves the accuracy-vs-frequency curve from joint
//!    (correct, count) probabilities, and
//!    [`parametric_adjusted_accuracy`] integrates that curve against the
//!    *target* latent density instead of the biased one.
//!
//! Everything here consumes only observable data — counts and correctness
//! bits — never the latent frequencies themselves.

mod lsq;
mod spline;

pub use lsq::{householder_lsq, LsqSolution, CONDITION_LIMIT};
pub use spline::{
    fit_report, joint_selected_probabilities, parametric_adjusted_accuracy, spline_fit,
    uniform_knots, FitReport, SplineFitOutcome, SplineModel,
};

use rand::Rng;
use rayon::prelude::*;

use crate::dist::{BetaMixture, BetaParams};
use crate::error::Error;
use crate::rng::stream_rng;
use crate::scalar::Scalar;
use crate::special::{ln_beta, ln_choose};
use crate::synthpop::{common_annotator_count, AnnotationRecord};
use crate::Result;

/// Knobs for the EM fit. The defaults favor robustness over speed: many
/// random restarts, a tight relative tolerance, and wide (but bounded)
/// shape ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct EmOptions {
    /// Number of beta components.
    pub components: usize,
    /// Independent random restarts; the best final likelihood wins.
    pub restarts: usize,
    /// Relative log-likelihood change that counts as converged.
    pub tol: f64,
    /// EM iteration budget per restart.
    pub max_iter: usize,
    /// Lower bound for both shape parameters during optimization.
    pub shape_floor: f64,
    /// Upper bound for both shape parameters; hitting it flags the fit as
    /// degenerate (the data look like a point mass).
    pub shape_cap: f64,
    /// Shapes are initialized log-uniformly in `[init_low, init_high]`.
    pub init_low: f64,
    pub init_high: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            components: 3,
            restarts: 20,
            tol: 1e-7,
            max_iter: 500,
            shape_floor: 1e-2,
            shape_cap: 1e4,
            init_low: 0.5,
            init_high: 50.0,
        }
    }
}

impl EmOptions {
    /// Reject impossible settings (zero components/restarts/iterations,
    /// non-positive tolerance, inverted or non-positive shape bounds).
    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, message: String| Err(Error::InvalidParam { name, message });
        if self.components == 0 {
            return bad("components", "need at least one mixture component".into());
        }
        if self.restarts == 0 {
            return bad("restarts", "need at least one restart".into());
        }
        if self.max_iter == 0 {
            return bad("max_iter", "need at least one iteration".into());
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return bad("tol", format!("tolerance must be positive and finite, got {}", self.tol));
        }
        if !(self.shape_floor > 0.0 && self.shape_cap > self.shape_floor) {
            return bad(
                "shape_floor",
                format!("need 0 < floor < cap, got [{}, {}]", self.shape_floor, self.shape_cap),
            );
        }
        if !(self.init_low >= self.shape_floor
            && self.init_high >= self.init_low
            && self.init_high <= self.shape_cap)
        {
            return bad(
                "init_low",
                format!(
                    "initial range [{}, {}] must sit inside [{}, {}]",
                    self.init_low, self.init_high, self.shape_floor, self.shape_cap
                ),
            );
        }
        Ok(())
    }
}

/// Outcome of [`em_fit`]: the winning restart's mixture plus diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureFitResult<S: Scalar = f64> {
    pub mixture: BetaMixture<S>,
    /// Total data log-likelihood of `mixture`.
    pub log_likelihood: S,
    /// Log-likelihood after each EM iteration of the winning restart
    /// (nondecreasing; the first entry is the initial likelihood).
    pub ll_trace: Vec<S>,
    /// Whether the relative tolerance was reached within the budget.
    pub converged: bool,
    /// A shape parameter ended on the cap or floor — the component tried to
    /// degenerate into a point mass (or flat line) and was clipped.
    pub degenerate: bool,
    /// Which restart won (ties go to the lowest index).
    pub restart_index: usize,
    pub n_records: usize,
}

/// Log-likelihood of blind annotation counts under a candidate mixture.
pub fn count_log_likelihood<S: Scalar>(
    records: &[AnnotationRecord],
    mixture: &BetaMixture<S>,
) -> Result<S> {
    let n = common_annotator_count(records)?;
    let counts = bucket_counts::<S>(records, n);
    let lnc = ln_choose_table::<S>(n);
    let comps: Vec<(S, S, S)> = mixture
        .components()
        .iter()
        .map(|(w, p)| (*w, p.alpha(), p.beta()))
        .collect();
    Ok(counts_ll(&counts, n, &lnc, &comps))
}

/// Maximum-likelihood beta mixture for blind annotation counts, via EM with
/// random restarts.
///
/// The E-step runs over count buckets (there are only `n + 1` of them), so
/// cost is independent of the number of records. The M-step maximizes each
/// component's weighted beta-binomial likelihood by coordinate golden-section
/// search on `(ln α, ln β)`, keeping the previous shapes whenever the search
/// fails to improve — so every iteration's likelihood is nondecreasing.
/// All randomness is derived from `seed`; results are reproducible and
/// independent of thread scheduling.
pub fn em_fit<S: Scalar>(
    records: &[AnnotationRecord],
    options: &EmOptions,
    seed: u64,
) -> Result<MixtureFitResult<S>> {
    options.validate()?;
    let n = common_annotator_count(records)?;
    if n == 0 {
        return Err(Error::InsufficientAnnotators { needed: 1, available: 0 });
    }
    let counts = bucket_counts::<S>(records, n);
    let lnc = ln_choose_table::<S>(n);

    let runs: Vec<(usize, SingleRun<S>)> = (0..options.restarts)
        .into_par_iter()
        .map(|r| (r, run_restart(&counts, n, &lnc, options, stream_rng(seed, r as u64))))
        .collect();

    let (restart_index, best) = runs
        .into_iter()
        .max_by(|(ia, a), (ib, b)| {
            let la = if a.log_likelihood.is_nan() { S::neg_infinity() } else { a.log_likelihood };
            let lb = if b.log_likelihood.is_nan() { S::neg_infinity() } else { b.log_likelihood };
            // Highest likelihood wins; on exact ties prefer the lower index.
            la.partial_cmp(&lb).unwrap().then(ib.cmp(ia))
        })
        .expect("restarts >= 1");
    if !best.log_likelihood.is_finite() {
        return Err(Error::DegenerateFit(
            "every EM restart ended with a non-finite likelihood".into(),
        ));
    }

    // Canonical component order (by mean, then α) so equal fits serialize
    // identically regardless of the restart's internal labeling.
    let mut comps = best.components;
    comps.sort_by(|a, b| {
        let ma = a.1 / (a.1 + a.2);
        let mb = b.1 / (b.1 + b.2);
        ma.partial_cmp(&mb).unwrap().then(a.1.partial_cmp(&b.1).unwrap())
    });
    let floor = S::of(options.shape_floor);
    let cap = S::of(options.shape_cap);
    let near = |x: S, bound: S| (x / bound).ln().abs() < S::of(1e-3);
    let degenerate = comps.iter().any(|&(w, a, b)| {
        w > S::of(1e-6) && (near(a, cap) || near(b, cap) || near(a, floor) || near(b, floor))
    });
    let mixture = BetaMixture::new(
        comps
            .into_iter()
            .map(|(w, a, b)| Ok((w, BetaParams::new(a, b)?)))
            .collect::<Result<Vec<_>>>()?,
    )?;

    Ok(MixtureFitResult {
        mixture,
        log_likelihood: best.log_likelihood,
        ll_trace: best.ll_trace,
        converged: best.converged,
        degenerate,
        restart_index,
        n_records: records.len(),
    })
}

struct SingleRun<S: Scalar> {
    /// `(weight, alpha, beta)` per component.
    components: Vec<(S, S, S)>,
    log_likelihood: S,
    ll_trace: Vec<S>,
    converged: bool,
}

fn bucket_counts<S: Scalar>(records: &[AnnotationRecord], n: u32) -> Vec<S> {
    let mut counts = vec![S::zero(); n as usize + 1];
    for r in records {
        counts[r.n_selected as usize] += S::one();
    }
    counts
}

fn ln_choose_table<S: Scalar>(n: u32) -> Vec<S> {
    (0..=n).map(|k| ln_choose(n, k)).collect()
}

fn ln_pmf<S: Scalar>(lnc_k: S, n: u32, k: u32, alpha: S, beta: S) -> S {
    lnc_k + ln_beta(alpha + S::of(f64::from(k)), beta + S::of(f64::from(n - k)))
        - ln_beta(alpha, beta)
}

fn counts_ll<S: Scalar>(counts: &[S], n: u32, lnc: &[S], comps: &[(S, S, S)]) -> S {
    let mut ll = S::zero();
    for (k, &c) in counts.iter().enumerate() {
        if c == S::zero() {
            continue;
        }
        ll += c * bucket_lse(n, k as u32, lnc, comps);
    }
    ll
}

/// `ln Σ_j γ_j·pmf_j(k)` via the usual max-shifted sum.
fn bucket_lse<S: Scalar>(n: u32, k: u32, lnc: &[S], comps: &[(S, S, S)]) -> S {
    let mut terms = Vec::with_capacity(comps.len());
    let mut hi = S::neg_infinity();
    for &(w, a, b) in comps {
        let t = if w > S::zero() {
            w.ln() + ln_pmf(lnc[k as usize], n, k, a, b)
        } else {
            S::neg_infinity()
        };
        if t > hi {
            hi = t;
        }
        terms.push(t);
    }
    if !hi.is_finite() {
        return S::neg_infinity();
    }
    hi + terms.into_iter().map(|t| (t - hi).exp()).sum::<S>().ln()
}

fn run_restart<S: Scalar>(
    counts: &[S],
    n: u32,
    lnc: &[S],
    options: &EmOptions,
    mut rng: impl Rng,
) -> SingleRun<S> {
    let j = options.components;
    let total: S = counts.iter().copied().sum();
    let (lo, hi) = (options.init_low.ln(), options.init_high.ln());
    let mut comps: Vec<(S, S, S)> = (0..j)
        .map(|_| {
            let a = S::of(rng.gen_range(lo..=hi).exp());
            let b = S::of(rng.gen_range(lo..=hi).exp());
            (S::one() / S::from_count(j), a, b)
        })
        .collect();

    let buckets = counts.len();
    let e_step = |comps: &[(S, S, S)]| -> (S, Vec<Vec<S>>) {
        let mut ll = S::zero();
        let mut resp = vec![vec![S::zero(); buckets]; j];
        for (k, &c) in counts.iter().enumerate() {
            if c == S::zero() {
                continue;
            }
            let lse = bucket_lse(n, k as u32, lnc, comps);
            ll += c * lse;
            for (jj, &(w, a, b)) in comps.iter().enumerate() {
                if w > S::zero() {
                    let l = w.ln() + ln_pmf(lnc[k], n, k as u32, a, b);
                    resp[jj][k] = (l - lse).exp();
                }
            }
        }
        (ll, resp)
    };

    let floor = S::of(options.shape_floor);
    let cap = S::of(options.shape_cap);
    let (mut ll, mut resp) = e_step(&comps);
    let mut trace = vec![ll];
    let mut converged = false;
    for _ in 0..options.max_iter {
        // M-step: exact weight update, guarded coordinate search for shapes.
        // The search runs over (mean, concentration) rather than (α, β):
        // near-degenerate likelihoods ridge along α ≈ β, which coordinate
        // moves in shape space climb only additively, while in
        // mean/concentration coordinates the ridge is axis-aligned.
        for jj in 0..j {
            let weights: Vec<S> = counts
                .iter()
                .enumerate()
                .map(|(k, &c)| c * resp[jj][k])
                .collect();
            let mass: S = weights.iter().copied().sum();
            comps[jj].0 = mass / total;
            if mass <= S::zero() {
                continue; // dead component: objective is flat, keep shapes
            }
            let q = |a: S, b: S| -> S {
                let lnb0 = ln_beta(a, b);
                let mut acc = S::zero();
                for (k, &w) in weights.iter().enumerate() {
                    if w > S::zero() {
                        acc += w
                            * (lnc[k] + ln_beta(a + S::of(k as f64), b + S::of(f64::from(n) - k as f64))
                                - lnb0);
                    }
                }
                acc
            };
            let mut mu = comps[jj].1 / (comps[jj].1 + comps[jj].2);
            let mut nu = comps[jj].1 + comps[jj].2;
            for _sweep in 0..2 {
                // Concentration given mean; both shapes must stay inside
                // [floor, cap], which bounds ν on both sides.
                let lo = floor / mu.min(S::one() - mu);
                let hi = cap / mu.max(S::one() - mu);
                if lo < hi {
                    let best = golden_max(
                        |lv: S| q(mu * lv.exp(), (S::one() - mu) * lv.exp()),
                        lo.ln(),
                        hi.ln(),
                        40,
                    )
                    .exp();
                    if q(mu * best, (S::one() - mu) * best) > q(mu * nu, (S::one() - mu) * nu) {
                        nu = best;
                    }
                }
                // Mean given concentration.
                let lo = (floor / nu).max(S::one() - cap / nu);
                let hi = (S::one() - floor / nu).min(cap / nu);
                if lo < hi {
                    let best = golden_max(|m: S| q(m * nu, (S::one() - m) * nu), lo, hi, 40);
                    if q(best * nu, (S::one() - best) * nu) > q(mu * nu, (S::one() - mu) * nu) {
                        mu = best;
                    }
                }
            }
            comps[jj].1 = (mu * nu).max(floor).min(cap);
            comps[jj].2 = ((S::one() - mu) * nu).max(floor).min(cap);
        }
        let (ll_new, resp_new) = e_step(&comps);
        trace.push(ll_new);
        let done = (ll_new - ll).abs() <= S::of(options.tol) * (S::one() + ll_new.abs());
        ll = ll_new;
        resp = resp_new;
        if done {
            converged = true;
            break;
        }
    }
    SingleRun {
        components: comps,
        log_likelihood: ll,
        ll_trace: trace,
        converged,
    }
}

/// Maximize a unimodal-ish function on `[a, b]` by golden-section search.
/// Fixed iteration count keeps it allocation-free and fully deterministic;
/// 40 iterations shrink the bracket by ~1e-8 of its width.
fn golden_max<S: Scalar>(mut f: impl FnMut(S) -> S, mut a: S, mut b: S, iters: usize) -> S {
    let inv_phi = S::of(0.618_033_988_749_894_9);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc > fd {
        c
    } else {
        d
    }
}
