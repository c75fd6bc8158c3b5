//! Synthetic bandit environments with closed-form outcome laws, plus
//! classification datasets recast as bandits.

pub mod classification;
pub mod mixture;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Action, ActionKind, BanditDataset, LoggedSample, OutcomeKind};
use crate::error::{Error, Result};
use crate::models::OutcomeModel;
use crate::policy::{ActionDist, Policy};
use crate::stats::normal_log_pdf;

pub use classification::{
    load_classification_csv, to_bandit, BlobOutcome, ClassificationBandit, GaussianBlobs,
};
pub use mixture::GaussianMixture;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SyntheticEnv {
    /// `X ~ N(0, x_sd^2)`, action index `k` has value `action_values[k]`,
    /// `Y | x, a ~ N(value(a) * x, 1)`.
    ToyDiscrete { action_values: Vec<f64>, x_sd: f64 },
    /// `X ~ N(0, x_sd^2)`, real actions, `Y | x, a ~ N(a + x, 1)`.
    ToyContinuous { x_sd: f64 },
}

impl SyntheticEnv {
    /// Four actions with values `{1, 2, 3, 4}` and `X ~ N(0, 9)`.
    pub fn toy_discrete() -> Self {
        SyntheticEnv::ToyDiscrete {
            action_values: vec![1.0, 2.0, 3.0, 4.0],
            x_sd: 3.0,
        }
    }

    /// `X ~ N(0, 4)`.
    pub fn toy_continuous() -> Self {
        SyntheticEnv::ToyContinuous { x_sd: 2.0 }
    }

    pub fn action_kind(&self) -> ActionKind {
        match self {
            SyntheticEnv::ToyDiscrete { action_values, .. } => {
                ActionKind::Discrete(action_values.len())
            }
            SyntheticEnv::ToyContinuous { .. } => ActionKind::Continuous,
        }
    }

    pub fn outcome_kind(&self) -> OutcomeKind {
        OutcomeKind::Continuous
    }

    pub fn dim(&self) -> usize {
        1
    }

    fn x_sd(&self) -> f64 {
        match self {
            SyntheticEnv::ToyDiscrete { x_sd, .. } | SyntheticEnv::ToyContinuous { x_sd } => *x_sd,
        }
    }

    pub fn sample_x<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        vec![Normal::new(0.0, self.x_sd()).expect("sd > 0").sample(rng)]
    }

    /// Mean and standard deviation of `Y | x, a`.
    pub fn outcome_params(&self, x: &[f64], a: &Action) -> (f64, f64) {
        match (self, a) {
            (SyntheticEnv::ToyDiscrete { action_values, .. }, Action::Discrete(k)) => {
                (action_values[*k] * x[0], 1.0)
            }
            (SyntheticEnv::ToyContinuous { .. }, Action::Continuous(v)) => (v + x[0], 1.0),
            _ => panic!("action {a:?} does not belong to this environment"),
        }
    }

    pub fn sample_y<R: Rng + ?Sized>(&self, x: &[f64], a: &Action, rng: &mut R) -> f64 {
        let (m, s) = self.outcome_params(x, a);
        Normal::new(m, s).expect("sd > 0").sample(rng)
    }

    fn check_policy<P: Policy + ?Sized>(&self, p: &P) -> Result<()> {
        let ok = match (self.action_kind(), p.action_kind()) {
            (ActionKind::Discrete(k), ActionKind::Discrete(j)) => j <= k,
            (ActionKind::Continuous, ActionKind::Continuous) => true,
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Type(format!(
                "policy over {:?} is incompatible with environment actions {:?}",
                p.action_kind(),
                self.action_kind()
            )))
        }
    }

    /// The outcome law `P^pi(y | x)` with actions integrated out.
    pub fn marginal<P: Policy + ?Sized>(&self, policy: &P, x: &[f64]) -> Result<GaussianMixture> {
        self.check_policy(policy)?;
        let comps = match policy.dist(x) {
            ActionDist::Categorical(p) => p
                .iter()
                .enumerate()
                .map(|(k, &w)| {
                    let (m, s) = self.outcome_params(x, &Action::Discrete(k));
                    (w, m, s)
                })
                .collect(),
            ActionDist::PointMass(a) => {
                let (m, s) = self.outcome_params(x, &a);
                vec![(1.0, m, s)]
            }
            ActionDist::Gaussian { mean, std } => {
                // Y = A + x + noise with A ~ N(mean, std^2)
                vec![(1.0, mean + x[0], (1.0 + std * std).sqrt())]
            }
        };
        Ok(GaussianMixture { components: comps })
    }

    pub fn sample_target_outcome<P: Policy + ?Sized, R: Rng + ?Sized>(
        &self,
        policy: &P,
        x: &[f64],
        rng: &mut R,
    ) -> f64 {
        let a = policy.dist(x).sample(rng);
        self.sample_y(x, &a, rng)
    }
}

impl OutcomeModel for SyntheticEnv {
    fn log_density_fn<'a>(&'a self, x: &[f64], a: &Action) -> Box<dyn Fn(f64) -> f64 + 'a> {
        let (m, s) = self.outcome_params(x, a);
        Box::new(move |y| normal_log_pdf(y, m, s))
    }

    fn gaussian_params(&self, x: &[f64], a: &Action) -> Option<(f64, f64)> {
        Some(self.outcome_params(x, a))
    }
}

/// Exact `P(y | x, a)`.
pub fn env_density(env: &SyntheticEnv, x: &[f64], a: &Action, y: f64) -> f64 {
    env.log_density(x, a, y).exp()
}

/// `n_obs` i.i.d. draws `X -> A | X -> Y | X, A`.
pub fn gen_synthetic<P: Policy + ?Sized, R: Rng + ?Sized>(
    env: &SyntheticEnv,
    behavior: &P,
    n_obs: usize,
    rng: &mut R,
) -> Result<BanditDataset> {
    env.check_policy(behavior)?;
    let samples = (0..n_obs)
        .map(|_| {
            let x = env.sample_x(rng);
            let a = behavior.dist(&x).sample(rng);
            let y = env.sample_y(&x, &a, rng);
            LoggedSample::new(x, a, y)
        })
        .collect();
    BanditDataset::new(samples, env.action_kind(), env.outcome_kind())
}

/// Central `1 - alpha` interval of `P^{target}(y | x)`.
pub fn oracle_interval<P: Policy + ?Sized>(
    env: &SyntheticEnv,
    target: &P,
    x: &[f64],
    alpha: f64,
) -> Result<(f64, f64)> {
    let mix = env.marginal(target, x)?;
    Ok((mix.quantile(alpha / 2.0)?, mix.quantile(1.0 - alpha / 2.0)?))
}
