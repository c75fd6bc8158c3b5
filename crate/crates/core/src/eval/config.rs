use std::fmt;

use serde::{Deserialize, Serialize};

use crate::conformal::GridSpec;
use crate::error::{Error, Result};
use crate::models::TrainOpts;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodId {
    CoppGt,
    CoppEst,
    CoppRegressionWeights,
    StandardCp,
    UnionCp,
    Wis,
    Sba,
    ClassBalancedCopp,
    Oracle,
}

impl MethodId {
    pub fn as_str(&self) -> &'static str {
        match self {
            MethodId::CoppGt => "copp_gt",
            MethodId::CoppEst => "copp_est",
            MethodId::CoppRegressionWeights => "copp_regression_weights",
            MethodId::StandardCp => "standard_cp",
            MethodId::UnionCp => "union_cp",
            MethodId::Wis => "wis",
            MethodId::Sba => "sba",
            MethodId::ClassBalancedCopp => "class_balanced_copp",
            MethodId::Oracle => "oracle",
        }
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Data-generating setup. Behaviour and target policies belong to the
/// environment's policy family, indexed by `eps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvConfig {
    /// Four actions, region-based policies; targets are `π_{eps*}`.
    ToyDiscrete {
        #[serde(default = "default_eps_b")]
        eps_b: f64,
    },
    /// Real actions; behaviour `N(x/4, 1)`, targets `N(x/4 + eps*, 1)`.
    ToyContinuous {},
    /// Gaussian-blob classification posed as a bandit with binary outcome.
    /// A classifier fitted on `classifier_m` fresh rows defines both
    /// policies: `eps` on its top class, the rest spread evenly.
    Blobs {
        classes: usize,
        dim: usize,
        radius: f64,
        #[serde(default)]
        priors: Option<Vec<f64>>,
        eps_b: f64,
        #[serde(default = "default_classifier_m")]
        classifier_m: usize,
    },
}

fn default_eps_b() -> f64 {
    0.3
}

fn default_classifier_m() -> usize {
    1000
}

impl EnvConfig {
    pub fn discrete_actions(&self) -> bool {
        !matches!(self, EnvConfig::ToyContinuous {})
    }

    pub fn discrete_outcomes(&self) -> bool {
        matches!(self, EnvConfig::Blobs { .. })
    }

    fn check_eps(&self, eps: f64, what: &str) -> Result<()> {
        let ok = match self {
            EnvConfig::ToyDiscrete { .. } => (0.0..=1.0 / 3.0).contains(&eps),
            EnvConfig::ToyContinuous {} => eps.is_finite(),
            EnvConfig::Blobs { .. } => (0.0..=1.0).contains(&eps),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Schema(format!("{what} = {eps} is outside the policy family's range")))
        }
    }
}

/// How `copp_est` estimates weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightEstimator {
    /// Exact sums over finite actions, Monte Carlo otherwise.
    #[default]
    Auto,
    ExactSum,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub env: EnvConfig,
    pub eps_star: Vec<f64>,
    pub alpha: f64,
    pub m: usize,
    pub n: usize,
    pub n_test: usize,
    #[serde(default)]
    pub grid: GridSpec,
    pub methods: Vec<MethodId>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_h")]
    pub h: usize,
    #[serde(default = "default_ell")]
    pub ell: usize,
    #[serde(default)]
    pub weight_estimator: WeightEstimator,
    #[serde(default)]
    pub train: TrainOpts,
}

fn default_h() -> usize {
    crate::weights::DEFAULT_MC_DRAWS
}

fn default_ell() -> usize {
    crate::baselines::DEFAULT_SBA_DRAWS
}

impl ExperimentConfig {
    /// Parse and validate; schema errors name the offending key.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::Schema(format!("at `{}`: {}", e.path(), e.inner())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let schema = |m: String| Err(Error::Schema(m));
        if self.seeds.is_empty() {
            return schema("`seeds` must not be empty".into());
        }
        if self.eps_star.is_empty() {
            return schema("`eps_star` must not be empty".into());
        }
        if self.methods.is_empty() {
            return schema("`methods` must not be empty".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return schema(format!("`alpha` = {} must lie in (0, 1)", self.alpha));
        }
        if self.m == 0 || self.n == 0 || self.n_test == 0 {
            return schema("`m`, `n` and `n_test` must be positive".into());
        }
        if self.h == 0 || self.ell < 2 {
            return schema("`h` must be >= 1 and `ell` >= 2".into());
        }
        self.grid.validate().map_err(|e| Error::Schema(format!("`grid`: {e}")))?;
        self.train.validate().map_err(|e| Error::Schema(format!("`train`: {e}")))?;
        match &self.env {
            EnvConfig::ToyDiscrete { eps_b } => self.env.check_eps(*eps_b, "env.eps_b")?,
            EnvConfig::ToyContinuous {} => {}
            EnvConfig::Blobs {
                classes,
                dim,
                radius,
                priors,
                eps_b,
                classifier_m,
            } => {
                self.env.check_eps(*eps_b, "env.eps_b")?;
                crate::envs::GaussianBlobs::ring(*classes, *dim, *radius, priors.clone())
                    .map_err(|e| Error::Schema(format!("`env`: {e}")))?;
                if *classes < 2 || *classifier_m == 0 {
                    return schema("blobs need at least 2 classes and classifier_m >= 1".into());
                }
            }
        }
        for &e in &self.eps_star {
            self.env.check_eps(e, "eps_star")?;
        }
        for m in &self.methods {
            let ok = match m {
                MethodId::UnionCp => matches!(self.env, EnvConfig::ToyDiscrete { .. }),
                MethodId::ClassBalancedCopp => self.env.discrete_outcomes(),
                MethodId::Wis | MethodId::Sba | MethodId::Oracle | MethodId::CoppRegressionWeights => {
                    !self.env.discrete_outcomes()
                }
                _ => true,
            };
            if !ok {
                return schema(format!("method `{m}` is not available for this environment"));
            }
        }
        if self.weight_estimator == WeightEstimator::ExactSum && !self.env.discrete_actions() {
            return schema("exact-sum weights need a finite action set".into());
        }
        Ok(())
    }
}
