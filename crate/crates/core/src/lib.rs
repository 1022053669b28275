//! Numerics for the fractional Edwards measure.
//!
//! Fractional Brownian motion on a uniform grid, Cameron–Martin shifts and
//! their Gaussian densities, the heat-kernel regularized self-intersection
//! local time with Varadhan centering, the moment bounds behind continuity of
//! the shifted density, and estimators under `ν_{H,g} ∝ e^{−g L_c} ν_H`
//! (importance weights, a gradient Dirichlet form, a path-space MALA chain).
//!
//! Everything path-valued is generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix the scalar for the common case. Statistical summaries
//! are always reported in `f64`.
//!
//! ```
//! use fracedwards::{FbmSampler64, ModelParams64};
//!
//! let params = ModelParams64::new(0.5, 2, 1.0, 0.1, 65, 7).unwrap();
//! let path = FbmSampler64::new(&params).unwrap().replica(0);
//! let lc = fracedwards::silt::silt_centered(&params, &path, 0.05).unwrap();
//! assert!(lc.centered.is_finite());
//! ```

// `!(x > 0)` is deliberate throughout: NaN must fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cameron_martin;
pub mod edwards;
pub mod error;
pub mod fbm;
pub mod linalg;
pub mod moments;
pub mod quadrature;
pub mod rng;
pub mod scalar;
pub mod silt;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Real;

pub type ModelParams64 = fbm::ModelParams<f64>;
pub type ModelParams32 = fbm::ModelParams<f32>;
pub type TimeGrid64 = fbm::TimeGrid<f64>;
pub type FbmSampler64 = fbm::FbmSampler<f64>;
pub type FbmSampler32 = fbm::FbmSampler<f32>;
pub type FbmPath64 = fbm::FbmPath<f64>;
pub type FbmPath32 = fbm::FbmPath<f32>;
pub type RawPath64 = fbm::RawPath<f64>;
pub type CMShift64 = cameron_martin::CMShift<f64>;
pub type CMShift32 = cameron_martin::CMShift<f32>;
pub type SiltEstimator64 = silt::SiltEstimator<f64>;
pub type LadderConfig64 = silt::LadderConfig<f64>;
pub type SigmaMatrix64 = moments::SigmaMatrix<f64>;
pub type WeightedEnsemble64 = edwards::WeightedEnsemble<f64>;
pub type CylinderFunction64 = edwards::CylinderFunction<f64>;
pub type MalaConfig64 = edwards::MalaConfig<f64>;
pub type ChainState64 = edwards::ChainState<f64>;
