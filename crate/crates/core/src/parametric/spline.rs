//! Deconvolving the accuracy-vs-frequency curve from count data.
//!
//! For every count `k`, the joint probability of "model correct and `k` of
//! `n` annotators selected the item" is linear in the unknown accuracy
//! curve `g`:
//!
//! ```text
//! y_k = ∫ g(s) · C(n,k) sᵏ(1−s)ⁿ⁻ᵏ · p₂(s) ds
//! ```
//!
//! where `p₂` is the latent frequency density of the scored dataset (known
//! in simulation, or EM-fitted from the same counts). Expanding `g` in a
//! natural cubic spline basis turns the `n + 1` observed `y_k` into a small
//! linear least-squares problem; the recovered curve is then integrated
//! against the *target* density `p₁`, which removes the selection bias that
//! contaminates every ŝ-conditioned estimate.

use serde::Serialize;

use super::lsq::householder_lsq;
use crate::dist::BetaMixture;
use crate::error::Error;
use crate::quad::QuadratureGrid;
use crate::scalar::Scalar;
use crate::special::ln_choose;
use crate::synthpop::{common_annotator_count, AnnotationRecord};
use crate::Result;

/// Natural cubic spline on `[0, 1]`: cubic between knots, linear beyond the
/// boundary knots. With `K` knots the basis has exactly `K` functions
/// (truncated-power construction with the two end conditions built in).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplineModel<S: Scalar = f64> {
    knots: Vec<S>,
    coeffs: Vec<S>,
    clamp_warning: bool,
}

/// Equally spaced knots: `interior` knots strictly inside `(0, 1)` plus the
/// two boundary knots. `interior = 8` gives a 10-function basis.
pub fn uniform_knots<S: Scalar>(interior: usize) -> Vec<S> {
    let k = interior + 2;
    (0..k)
        .map(|i| S::from_count(i) / S::from_count(k - 1))
        .collect()
}

impl<S: Scalar> SplineModel<S> {
    /// Build a spline from knots and basis coefficients. The clamp warning
    /// is set when the raw curve leaves `[0, 1]` anywhere on a fine scan of
    /// the unit interval — the curve is a probability, so [`Self::eval`]
    /// clips it, and the flag tells the caller that clipping is real.
    pub fn new(knots: Vec<S>, coeffs: Vec<S>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::InvalidParam {
                name: "knots",
                message: "need at least two knots".into(),
            });
        }
        for w in knots.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidParam {
                    name: "knots",
                    message: "knots must be strictly increasing".into(),
                });
            }
        }
        if knots[0] < S::zero() || knots[knots.len() - 1] > S::one() {
            return Err(Error::InvalidParam {
                name: "knots",
                message: "knots must lie in [0, 1]".into(),
            });
        }
        if coeffs.len() != knots.len() {
            return Err(Error::InvalidParam {
                name: "coeffs",
                message: format!(
                    "{} coefficients for a {}-function basis",
                    coeffs.len(),
                    knots.len()
                ),
            });
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("spline coefficients"));
        }
        let mut model = Self { knots, coeffs, clamp_warning: false };
        let slack = S::of(1e-9);
        model.clamp_warning = (0..=1000).any(|i| {
            let v = model.eval_raw(S::from_count(i) / S::of(1000.0));
            v < -slack || v > S::one() + slack
        });
        Ok(model)
    }

    pub fn knots(&self) -> &[S] {
        &self.knots
    }

    pub fn coeffs(&self) -> &[S] {
        &self.coeffs
    }

    pub fn clamp_warning(&self) -> bool {
        self.clamp_warning
    }

    /// The spline itself, unclipped.
    pub fn eval_raw(&self, x: S) -> S {
        let mut basis = vec![S::zero(); self.knots.len()];
        natural_basis(&self.knots, x, &mut basis);
        basis.iter().zip(&self.coeffs).map(|(&b, &c)| b * c).sum()
    }

    /// The spline clipped to `[0, 1]` — what the accuracy estimate uses.
    pub fn eval(&self, x: S) -> S {
        self.eval_raw(x).max(S::zero()).min(S::one())
    }
}

/// Evaluate the `K` natural-spline basis functions at `x` into `out`.
///
/// Basis: `1`, `x`, then `d_j(x) − d_{K−2}(x)` for `j = 0..K−2`, with
/// `d_j(x) = [(x−ξ_j)₊³ − (x−ξ_{K−1})₊³] / (ξ_{K−1} − ξ_j)`. The two linear
/// functions plus `K − 2` differences of truncated cubics span exactly the
/// natural cubic splines on these knots.
fn natural_basis<S: Scalar>(knots: &[S], x: S, out: &mut [S]) {
    let kk = knots.len();
    debug_assert_eq!(out.len(), kk);
    out[0] = S::one();
    out[1] = x;
    if kk == 2 {
        return;
    }
    let cube_plus = |t: S| {
        if t > S::zero() {
            t * t * t
        } else {
            S::zero()
        }
    };
    let last = knots[kk - 1];
    let d = |j: usize| (cube_plus(x - knots[j]) - cube_plus(x - last)) / (last - knots[j]);
    let d_pen = d(kk - 2);
    for j in 0..kk - 2 {
        out[j + 2] = d(j) - d_pen;
    }
}

/// Empirical joint probabilities `y_k = #{correct ∧ count = k} / N` for
/// `k = 0..=n`. `correct` must align one-to-one with `records`.
pub fn joint_selected_probabilities<S: Scalar>(
    records: &[AnnotationRecord],
    correct: &[bool],
) -> Result<Vec<S>> {
    let n = common_annotator_count(records)?;
    if correct.len() != records.len() {
        return Err(Error::InvalidParam {
            name: "correct",
            message: format!(
                "{} correctness bits for {} records",
                correct.len(),
                records.len()
            ),
        });
    }
    let mut y = vec![S::zero(); n as usize + 1];
    for (r, &c) in records.iter().zip(correct) {
        if c {
            y[r.n_selected as usize] += S::one();
        }
    }
    let total = S::from_count(records.len());
    for v in &mut y {
        *v /= total;
    }
    Ok(y)
}

/// A fitted curve plus the diagnostics a caller needs to trust it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplineFitOutcome<S: Scalar = f64> {
    pub model: SplineModel<S>,
    /// Condition proxy of the design matrix (see [`super::CONDITION_LIMIT`]).
    pub condition: S,
    /// Root-mean-square misfit of the joint probabilities.
    pub residual_rms: S,
}

/// Recover the accuracy curve from joint probabilities by least squares.
///
/// `joint[k]` must hold `P(correct ∧ count = k)` for `k = 0..=n`, and
/// `source_density` the latent density those counts were drawn from. The
/// design matrix entries are quadrature sums over `grid`, so any curve
/// whose joint probabilities were produced with the same grid is recovered
/// to solver precision.
pub fn spline_fit<S: Scalar>(
    joint: &[S],
    source_density: &BetaMixture<S>,
    n: u32,
    interior_knots: usize,
    grid: &QuadratureGrid<S>,
) -> Result<SplineFitOutcome<S>> {
    if joint.len() != n as usize + 1 {
        return Err(Error::InvalidParam {
            name: "joint",
            message: format!("{} joint probabilities for n = {n} (need n + 1)", joint.len()),
        });
    }
    if joint.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("joint probabilities"));
    }
    let knots = uniform_knots::<S>(interior_knots);
    let kk = knots.len();
    if (n as usize + 1) < kk {
        return Err(Error::InvalidParam {
            name: "interior_knots",
            message: format!("{kk}-function basis needs at least {kk} count buckets, have {}", n as usize + 1),
        });
    }

    let lnc: Vec<S> = (0..=n).map(|k| ln_choose(n, k)).collect();
    let mut design = vec![vec![S::zero(); kk]; n as usize + 1];
    let mut basis = vec![S::zero(); kk];
    for (&x, &w) in grid.nodes().iter().zip(grid.weights()) {
        let wp = w * source_density.pdf(x);
        if wp == S::zero() {
            continue;
        }
        natural_basis(&knots, x, &mut basis);
        let (lx, l1x) = (x.ln(), (S::one() - x).ln());
        for k in 0..=n as usize {
            let pk = (lnc[k] + S::of(k as f64) * lx + S::of((n as usize - k) as f64) * l1x).exp();
            let row = &mut design[k];
            let wpk = wp * pk;
            for (b, &nb) in basis.iter().enumerate() {
                row[b] += wpk * nb;
            }
        }
    }

    let sol = householder_lsq(&design, joint)?;
    let model = SplineModel::new(knots, sol.x)?;
    let rows = S::from_count(n as usize + 1);
    Ok(SplineFitOutcome {
        model,
        condition: sol.condition,
        residual_rms: sol.residual_norm / rows.sqrt(),
    })
}

/// `∫ g(s)·p₁(s) ds` on a fixed grid: the accuracy the scored model would
/// show on items drawn from the target latent density `p₁`. Exact for
/// polynomial integrands up to the grid's degree; for heavily endpoint-
/// singular targets pass a finer grid.
pub fn parametric_adjusted_accuracy<S: Scalar>(
    curve: impl Fn(S) -> S,
    target_density: &BetaMixture<S>,
    grid: &QuadratureGrid<S>,
) -> S {
    grid.integrate(|s| curve(s) * target_density.pdf(s))
}

/// End-to-end parametric corrected accuracy with its fit diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport<S: Scalar = f64> {
    pub model: SplineModel<S>,
    /// Recovered-curve estimate of the accuracy on the target distribution.
    pub adjusted_accuracy: S,
    pub condition: S,
    pub residual_rms: S,
    pub n_annotators: u32,
    pub n_records: usize,
}

/// Fit the accuracy curve from `(records, correct)` drawn under
/// `source_density`, then integrate it against `target_density`.
pub fn fit_report<S: Scalar>(
    records: &[AnnotationRecord],
    correct: &[bool],
    source_density: &BetaMixture<S>,
    target_density: &BetaMixture<S>,
    interior_knots: usize,
    grid: &QuadratureGrid<S>,
) -> Result<FitReport<S>> {
    let n = common_annotator_count(records)?;
    let joint = joint_selected_probabilities::<S>(records, correct)?;
    let fit = spline_fit(&joint, source_density, n, interior_knots, grid)?;
    let adjusted = parametric_adjusted_accuracy(|s| fit.model.eval(s), target_density, grid);
    Ok(FitReport {
        model: fit.model,
        adjusted_accuracy: adjusted,
        condition: fit.condition,
        residual_rms: fit.residual_rms,
        n_annotators: n,
        n_records: records.len(),
    })
}
