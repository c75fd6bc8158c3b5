//! Trainable estimators: outcome densities, conditional quantiles and
//! behaviour policies, all small ReLU networks trained with Adam.

mod behavior;
pub mod checkpoint;
mod classifier;
mod features;
mod gaussian;
pub mod losses;
mod mlp;
pub mod objectives;
mod quantile;
mod train;

pub use behavior::{fit_behavior_policy, BehaviorModel, GaussianPolicyModel};
pub use classifier::{fit_label_model, fit_softmax, ClassifierOutcome, LabelModel, SoftmaxModel};
pub use features::{ActionEncoding, Standardizer, TargetScale};
pub use gaussian::{fit_gaussian_conditional, GaussianConditional, SIGMA_FLOOR};
pub use losses::{pinball_loss, softmax};
pub use mlp::{ForwardCache, Mlp, MlpSpec};
pub use quantile::{fit_quantile_net, fit_quantile_pair, QuantileNet, QuantilePair};
pub use train::{grad_check, holdout, train, Objective, TrainOpts, TrainReport};

use crate::data::Action;

/// A conditional outcome law `P(y | x, a)`; a density for continuous
/// outcomes and a probability mass for labels.
pub trait OutcomeModel: Send + Sync {
    /// `y -> ln P(y | x, a)` with `(x, a)` fixed.
    fn log_density_fn<'a>(&'a self, x: &[f64], a: &Action) -> Box<dyn Fn(f64) -> f64 + 'a>;

    fn log_density(&self, x: &[f64], a: &Action, y: f64) -> f64 {
        (self.log_density_fn(x, a))(y)
    }

    /// `(mean, sd)` when `Y | x, a` is Gaussian; lets callers skip the
    /// boxed density in hot loops.
    fn gaussian_params(&self, _x: &[f64], _a: &Action) -> Option<(f64, f64)> {
        None
    }
}

impl<T: OutcomeModel + ?Sized> OutcomeModel for &T {
    fn log_density_fn<'a>(&'a self, x: &[f64], a: &Action) -> Box<dyn Fn(f64) -> f64 + 'a> {
        (**self).log_density_fn(x, a)
    }

    fn gaussian_params(&self, x: &[f64], a: &Action) -> Option<(f64, f64)> {
        (**self).gaussian_params(x, a)
    }
}

/// Outcome laws that are Gaussian given `(x, a)`; used for sampling.
pub trait GaussianOutcome: Send + Sync {
    fn mean_sd(&self, x: &[f64], a: &Action) -> (f64, f64);
}

impl GaussianOutcome for GaussianConditional {
    fn mean_sd(&self, x: &[f64], a: &Action) -> (f64, f64) {
        GaussianConditional::mean_sd(self, x, a)
    }
}

impl GaussianOutcome for crate::envs::SyntheticEnv {
    fn mean_sd(&self, x: &[f64], a: &Action) -> (f64, f64) {
        self.outcome_params(x, a)
    }
}

/// Default hidden layers, mirroring the small architectures used for the
/// synthetic experiments.
pub mod arch {
    pub const BEHAVIOR: &[usize] = &[16, 16];
    pub const OUTCOME: &[usize] = &[32];
    pub const QUANTILE: &[usize] = &[32];
    pub const WIDE: &[usize] = &[64, 64];
}
