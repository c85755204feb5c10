//! Toolkit for studying selection-frequency bias in replicated datasets.
//!
//! When a dataset is replicated by matching a *noisy* per-item statistic
//! (the fraction of annotators who select an item), the matched set does not
//! follow the target distribution of the underlying latent statistic: items
//! are admitted partly because annotation noise pushed their observed
//! frequency into the desired range. This crate provides
//!
//! * closed-form machinery for the beta / beta-binomial model of that
//!   process ([`dist`]),
//! * synthetic population generation with known ground truth ([`synthpop`]),
//! * histogram and rejection matchers that reproduce the bias ([`matching`]),
//! * frequency-reweighting estimators plus jackknife and bootstrap
//!   corrections ([`estimators`]),
//! * a parametric pipeline (beta-binomial mixture EM, spline deconvolution
//!   of the accuracy-vs-frequency curve) ([`parametric`]).
//!
//! All numeric code is generic over a [`Scalar`] floating type; `f64` is the
//! default type parameter everywhere, and `f32` aliases are exported at the
//! crate root. Sampling draws at `f64` precision and converts, so a seed
//! produces the same underlying variates regardless of scalar type.

pub mod dist;
pub mod error;
pub mod estimators;
pub mod matching;
pub mod parametric;
pub mod quad;
pub mod rng;
pub mod scalar;
pub mod special;
pub mod synthpop;

pub use error::Error;
pub use scalar::Scalar;

pub type Result<T> = std::result::Result<T, Error>;

// Concrete aliases for the non-default precision. The `f64` names are the
// bare generic types (default type parameter).
pub type BetaParams32 = dist::BetaParams<f32>;
pub type BetaMixture32 = dist::BetaMixture<f32>;
pub type ToyModelSolution32 = dist::ToyModelSolution<f32>;
pub type QuadratureGrid32 = quad::QuadratureGrid<f32>;
pub type AccuracyEstimate32 = estimators::AccuracyEstimate<f32>;
pub type SplineModel32 = parametric::SplineModel<f32>;
