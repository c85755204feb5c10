//! Numerical integration over the unit interval.
//!
//! Two regimes:
//!
//! * [`QuadratureGrid`] — a fixed open grid used by the parametric pipeline,
//!   where many integrands share the same nodes. The default is a 128-panel
//!   composite 4-point Gauss–Legendre rule (512 nodes), which integrates
//!   polynomial-times-smooth-density integrands to near machine precision
//!   while never touching the endpoints. A plain composite midpoint
//!   constructor is also provided.
//! * [`integrate_adaptive`] / [`integrate_beta_weighted`] — adaptive
//!   Gauss–Kronrod (7/15) bisection for one-off oracle integrals with an
//!   absolute error bound. Beta weights with shapes below 1 are handled by
//!   the power substitution `u = s^α` (and its mirror), which removes the
//!   endpoint singularity analytically.

use crate::dist::BetaParams;
use crate::error::Error;
use crate::scalar::Scalar;
use crate::special::ln_beta;
use crate::Result;

/// Open integration grid on `[0, 1]`: strictly interior nodes, positive
/// weights summing to 1.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct QuadratureGrid<S: Scalar = f64> {
    nodes: Vec<S>,
    weights: Vec<S>,
}

impl<S: Scalar> QuadratureGrid<S> {
    /// Composite midpoint rule with `n` equal panels.
    pub fn midpoint(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParam {
                name: "panels",
                message: "midpoint rule needs at least one panel".into(),
            });
        }
        let h = S::one() / S::from_count(n);
        let half = S::of(0.5);
        Ok(Self {
            nodes: (0..n).map(|i| (S::from_count(i) + half) * h).collect(),
            weights: vec![h; n],
        })
    }

    /// Composite Gauss–Legendre rule: `panels` equal panels with a
    /// `points`-node rule in each (exact through degree `2·points − 1` per
    /// panel).
    pub fn gauss_legendre(panels: usize, points: usize) -> Result<Self> {
        if panels == 0 || points == 0 {
            return Err(Error::InvalidParam {
                name: "panels",
                message: "Gauss–Legendre rule needs panels ≥ 1 and points ≥ 1".into(),
            });
        }
        let base = legendre_rule(points);
        let h = 1.0 / panels as f64;
        let mut nodes = Vec::with_capacity(panels * points);
        let mut weights = Vec::with_capacity(panels * points);
        for p in 0..panels {
            let mid = (p as f64 + 0.5) * h;
            for &(x, w) in &base {
                nodes.push(S::of(mid + 0.5 * h * x));
                weights.push(S::of(0.5 * h * w));
            }
        }
        Ok(Self { nodes, weights })
    }

    /// The pipeline default: 512 interior nodes (128 × 4-point Gauss).
    pub fn default_grid() -> Self {
        Self::gauss_legendre(128, 4).expect("static arguments are valid")
    }

    #[inline]
    pub fn nodes(&self) -> &[S] {
        &self.nodes
    }

    #[inline]
    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, mut f: impl FnMut(S) -> S) -> S {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

impl<S: Scalar> Default for QuadratureGrid<S> {
    fn default() -> Self {
        Self::default_grid()
    }
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`,
/// by Newton iteration on the Legendre recurrence.
fn legendre_rule(n: usize) -> Vec<(f64, f64)> {
    let mut rule = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0f64, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = if n == 1 {
                1.0
            } else {
                n as f64 * (x * p1 - p0) / (x * x - 1.0)
            };
            let step = p1 / dp;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.push((x, w));
    }
    rule.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    rule
}

// 15-point Kronrod extension of 7-point Gauss; positive half of the nodes.
const XGK: [f64; 8] = [
    0.991_455_371_120_813,
    0.949_107_912_342_759,
    0.864_864_423_359_769,
    0.741_531_185_599_394,
    0.586_087_235_467_691,
    0.405_845_151_377_397,
    0.207_784_955_007_898,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529,
    0.063_092_092_629_979,
    0.104_790_010_322_250,
    0.140_653_259_715_525,
    0.169_004_726_639_267,
    0.190_350_578_064_785,
    0.204_432_940_075_298,
    0.209_482_141_084_728,
];
const WG: [f64; 4] = [
    0.129_484_966_168_870,
    0.279_705_391_489_277,
    0.381_830_050_505_119,
    0.417_959_183_673_469,
];

/// One Gauss–Kronrod 7/15 panel: returns `(kronrod, |kronrod − gauss|)`.
fn gk15<S: Scalar>(f: &mut impl FnMut(S) -> S, a: S, b: S) -> (S, S) {
    let half = (b - a).half();
    let mid = (a + b).half();
    let mut kronrod = S::zero();
    let mut gauss = S::zero();
    for (j, (&x, &wk)) in XGK.iter().zip(&WGK).enumerate() {
        let (xs, ws) = (S::of(x), S::of(wk));
        let contribution = if j == 7 {
            f(mid)
        } else {
            f(mid - half * xs) + f(mid + half * xs)
        };
        kronrod += ws * contribution;
        // Gauss nodes sit at the odd Kronrod indices (and the center, j = 7).
        if j % 2 == 1 {
            gauss += S::of(WG[j / 2]) * contribution;
        }
    }
    (kronrod * half, (kronrod - gauss).abs() * half)
}

/// Adaptive Gauss–Kronrod integration of `f` over `[lo, hi]` to absolute
/// tolerance `tol`. Never evaluates the endpoints.
pub fn integrate_adaptive<S: Scalar>(
    mut f: impl FnMut(S) -> S,
    lo: S,
    hi: S,
    tol: S,
) -> Result<S> {
    let mut stack = vec![(lo, hi, tol)];
    let mut total = S::zero();
    let mut err_total = S::zero();
    let mut panels = 0usize;
    let min_width = (hi - lo).abs() * S::of(1e-14);
    while let Some((a, b, t)) = stack.pop() {
        panels += 1;
        if panels > 200_000 {
            return Err(Error::QuadratureFailure {
                estimate: err_total.to_f64_lossy(),
                tol: tol.to_f64_lossy(),
            });
        }
        let (value, err) = gk15(&mut f, a, b);
        if !value.is_finite() {
            return Err(Error::NonFinite("adaptive quadrature panel"));
        }
        if err <= t || (b - a).abs() <= min_width {
            total += value;
            err_total += err;
        } else {
            let mid = (a + b).half();
            let ht = t.half();
            stack.push((a, mid, ht));
            stack.push((mid, b, ht));
        }
    }
    if err_total > tol {
        return Err(Error::QuadratureFailure {
            estimate: err_total.to_f64_lossy(),
            tol: tol.to_f64_lossy(),
        });
    }
    Ok(total)
}

/// `∫₀¹ f(s) · beta_pdf(s; α, β) ds` to absolute tolerance `tol`, valid for
/// any positive shapes including the singular `α < 1` / `β < 1` cases.
///
/// The interval is split at ½. On a singular side the power substitution
/// (`u = s^α` on the left, `t = (1−s)^β` on the right) turns the integrand
/// into a bounded one; on a regular side the density is integrated as-is.
pub fn integrate_beta_weighted<S: Scalar>(
    f: impl Fn(S) -> S,
    params: &BetaParams<S>,
    tol: S,
) -> Result<S> {
    let (a, b) = (params.alpha(), params.beta());
    let one = S::one();
    let half_tol = tol.half();
    let lnb = ln_beta(a, b);

    let left = if a >= one {
        integrate_adaptive(|s| f(s) * params.ln_pdf_interior(s).exp(), S::zero(), S::of(0.5), half_tol)?
    } else {
        // s = u^{1/α}: ∫₀^½ f·s^{α−1}(1−s)^{β−1}/B ds
        //            = (1/(αB)) ∫₀^{½^α} f(u^{1/α})·(1−u^{1/α})^{β−1} du
        let upper = S::of(0.5).powf(a);
        let g = |u: S| {
            let s = u.powf(one / a);
            f(s) * ((b - one) * (one - s).ln() - lnb - a.ln()).exp()
        };
        integrate_adaptive(g, S::zero(), upper, half_tol)?
    };

    let right = if b >= one {
        integrate_adaptive(|s| f(s) * params.ln_pdf_interior(s).exp(), S::of(0.5), one, half_tol)?
    } else {
        let upper = S::of(0.5).powf(b);
        let g = |t: S| {
            let s = one - t.powf(one / b);
            f(s) * ((a - one) * s.ln() - lnb - b.ln()).exp()
        };
        integrate_adaptive(g, S::zero(), upper, half_tol)?
    };

    Ok(left + right)
}
