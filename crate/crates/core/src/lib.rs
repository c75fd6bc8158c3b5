//! Conformal off-policy prediction for contextual bandits.
//!
//! Given data logged under a behaviour policy, the crate builds prediction
//! sets for outcomes under a different target policy by reweighting split
//! conformal calibration scores with the likelihood ratio
//! `w(x, y) = dP^{target}(y|x) / dP^{behaviour}(y|x)`.
//!
//! Module map:
//! - [`data`], [`policy`], [`sets`]: domain types.
//! - [`models`]: neural estimators of `P(y|x,a)`, quantiles and `pi_b`.
//! - [`weights`]: exact, Monte Carlo, exact-sum and regression weights.
//! - [`conformal`]: weighted quantiles and prediction-set construction.
//! - [`baselines`]: WIS and sampling-based intervals.
//! - [`envs`]: synthetic environments and classification ingestion.
//! - [`eval`]: metrics and the seeded experiment runner.

pub mod baselines;
pub mod conformal;
pub mod data;
pub mod envs;
pub mod error;
pub mod eval;
pub mod models;
pub mod policy;
pub mod sets;
pub mod stats;
pub mod weights;

pub use error::{Error, Result};
