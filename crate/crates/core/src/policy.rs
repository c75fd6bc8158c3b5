//! Action distributions `π(a|x)`: closed-form policy families and the
//! [`Policy`] trait shared with fitted behaviour-policy models.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Action, ActionKind};
use crate::error::{Error, Result};
use crate::models::SoftmaxModel;
use crate::stats::normal_pdf;

/// The action distribution of a policy at one covariate value.
#[derive(Debug, Clone, PartialEq)]
pub enum ActionDist {
    Categorical(Vec<f64>),
    Gaussian { mean: f64, std: f64 },
    PointMass(Action),
}

impl ActionDist {
    /// Probability of a discrete action, or density of a continuous one.
    /// A continuous point mass reports 1 at its atom and 0 elsewhere.
    pub fn prob(&self, a: &Action) -> Result<f64> {
        match (self, a) {
            (ActionDist::Categorical(p), Action::Discrete(k)) => p
                .get(*k)
                .copied()
                .ok_or_else(|| Error::Type(format!("action {k} outside 0..{}", p.len()))),
            (ActionDist::Gaussian { mean, std }, Action::Continuous(v)) => {
                Ok(normal_pdf((v - mean) / std) / std)
            }
            (ActionDist::PointMass(b), a) => match (b, a) {
                (Action::Discrete(i), Action::Discrete(j)) => Ok(if i == j { 1.0 } else { 0.0 }),
                (Action::Continuous(u), Action::Continuous(v)) => {
                    Ok(if u == v { 1.0 } else { 0.0 })
                }
                _ => Err(Error::Type("action kind mismatch".into())),
            },
            _ => Err(Error::Type("action kind mismatch".into())),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Action {
        match self {
            ActionDist::Categorical(p) => Action::Discrete(sample_categorical(p, rng)),
            ActionDist::Gaussian { mean, std } => {
                let n = Normal::new(*mean, *std).expect("std > 0");
                Action::Continuous(n.sample(rng))
            }
            ActionDist::PointMass(a) => *a,
        }
    }
}

pub(crate) fn sample_categorical<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random::<f64>() * p.iter().sum::<f64>();
    let mut acc = 0.0;
    for (k, &pk) in p.iter().enumerate() {
        acc += pk;
        if u < acc {
            return k;
        }
    }
    // u landed on the rounding slack; return the last action with mass
    p.iter().rposition(|&pk| pk > 0.0).unwrap_or(p.len() - 1)
}

/// Anything that yields an action distribution for each covariate vector.
pub trait Policy: Send + Sync {
    fn action_kind(&self) -> ActionKind;

    fn dist(&self, x: &[f64]) -> ActionDist;

    /// Full probability vector for discrete policies.
    fn probs(&self, x: &[f64]) -> Option<Vec<f64>> {
        match self.dist(x) {
            ActionDist::Categorical(p) => Some(p),
            ActionDist::PointMass(Action::Discrete(k)) => {
                let n = self.action_kind().num_actions()?;
                let mut p = vec![0.0; n];
                p[k] = 1.0;
                Some(p)
            }
            _ => None,
        }
    }
}

impl<P: Policy + ?Sized> Policy for &P {
    fn action_kind(&self) -> ActionKind {
        (**self).action_kind()
    }

    fn dist(&self, x: &[f64]) -> ActionDist {
        (**self).dist(x)
    }
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn action_kind(&self) -> ActionKind {
        (**self).action_kind()
    }

    fn dist(&self, x: &[f64]) -> ActionDist {
        (**self).dist(x)
    }
}

/// `π(a|x)`; a density for continuous actions.
pub fn policy_prob<P: Policy + ?Sized>(p: &P, x: &[f64], a: &Action) -> Result<f64> {
    if !matches!(
        (p.action_kind(), a),
        (ActionKind::Discrete(_), Action::Discrete(_)) | (ActionKind::Continuous, Action::Continuous(_))
    ) {
        return Err(Error::Type(format!(
            "action {a:?} does not match policy kind {:?}",
            p.action_kind()
        )));
    }
    p.dist(x).prob(a)
}

pub fn policy_sample<P: Policy + ?Sized, R: Rng + ?Sized>(p: &P, x: &[f64], rng: &mut R) -> Action {
    p.dist(x).sample(rng)
}

/// Deterministic action rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum DeterministicRule {
    Constant { action: Action },
    /// Continuous action `coef * x0 + shift`.
    Linear { coef: f64, shift: f64 },
}

/// Serializable policy families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicySpec {
    /// Row `r` of `table` applies when exactly `r` thresholds lie strictly
    /// below `|x0|`.
    TabularRule {
        thresholds: Vec<f64>,
        table: Vec<Vec<f64>>,
    },
    /// `N(coef * x0 + shift, std^2)` over a real action.
    GaussianLinear { coef: f64, shift: f64, std: f64 },
    Deterministic { rule: DeterministicRule },
    /// Probability `eps` on the classifier's most likely class and
    /// `(1 - eps) / (K - 1)` on each remaining class.
    ClassifierEpsilon { eps: f64, classifier: SoftmaxModel },
}

impl PolicySpec {
    /// The region-based family over four actions with values `{1,2,3,4}`:
    /// the favoured action is `1` on `|x| <= 1`, `2` on `(1,2]`, `3` on
    /// `(2,3]` and `4` beyond; it receives `1 - 3 eps`, the others `eps`.
    pub fn toy_discrete(eps: f64) -> Result<Self> {
        if !(0.0..=1.0 / 3.0).contains(&eps) {
            return Err(Error::Domain(format!("eps must lie in [0, 1/3], got {eps}")));
        }
        let table = (0..4)
            .map(|fav| {
                (0..4)
                    .map(|a| if a == fav { 1.0 - 3.0 * eps } else { eps })
                    .collect()
            })
            .collect();
        Ok(PolicySpec::TabularRule {
            thresholds: vec![1.0, 2.0, 3.0],
            table,
        })
    }

    /// `N(x/4 + eps, 1)`.
    pub fn toy_continuous(eps: f64) -> Self {
        PolicySpec::GaussianLinear {
            coef: 0.25,
            shift: eps,
            std: 1.0,
        }
    }

    pub fn uniform(k: usize) -> Self {
        PolicySpec::TabularRule {
            thresholds: vec![],
            table: vec![vec![1.0 / k as f64; k]],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PolicySpec::TabularRule { thresholds, table } => {
                if table.len() != thresholds.len() + 1 {
                    return Err(Error::Schema(format!(
                        "tabular rule needs {} rows, has {}",
                        thresholds.len() + 1,
                        table.len()
                    )));
                }
                if thresholds.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::Schema("thresholds must increase strictly".into()));
                }
                let k = table[0].len();
                for row in table {
                    if row.len() != k || k == 0 {
                        return Err(Error::Schema("ragged probability table".into()));
                    }
                    if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                        return Err(Error::Domain("probabilities must lie in [0, 1]".into()));
                    }
                    let s: f64 = row.iter().sum();
                    if (s - 1.0).abs() > 1e-9 {
                        return Err(Error::Domain(format!("probability row sums to {s}")));
                    }
                }
                Ok(())
            }
            PolicySpec::GaussianLinear { std, coef, shift } => {
                if !(*std > 0.0 && std.is_finite() && coef.is_finite() && shift.is_finite()) {
                    return Err(Error::Domain("gaussian policy needs finite parameters and std > 0".into()));
                }
                Ok(())
            }
            PolicySpec::Deterministic { .. } => Ok(()),
            PolicySpec::ClassifierEpsilon { eps, classifier } => {
                if !(0.0..=1.0).contains(eps) {
                    return Err(Error::Domain(format!("eps must lie in [0, 1], got {eps}")));
                }
                if classifier.num_classes() == 0 {
                    return Err(Error::Schema("classifier has no classes".into()));
                }
                Ok(())
            }
        }
    }
}

impl Policy for PolicySpec {
    fn action_kind(&self) -> ActionKind {
        match self {
            PolicySpec::TabularRule { table, .. } => ActionKind::Discrete(table[0].len()),
            PolicySpec::GaussianLinear { .. } => ActionKind::Continuous,
            PolicySpec::Deterministic { rule } => match rule {
                DeterministicRule::Constant {
                    action: Action::Discrete(k),
                } => ActionKind::Discrete(k + 1),
                _ => ActionKind::Continuous,
            },
            PolicySpec::ClassifierEpsilon { classifier, .. } => {
                ActionKind::Discrete(classifier.num_classes())
            }
        }
    }

    fn dist(&self, x: &[f64]) -> ActionDist {
        match self {
            PolicySpec::TabularRule { thresholds, table } => {
                let ax = x[0].abs();
                let region = thresholds.iter().filter(|&&t| ax > t).count();
                ActionDist::Categorical(table[region].clone())
            }
            PolicySpec::GaussianLinear { coef, shift, std } => ActionDist::Gaussian {
                mean: coef * x[0] + shift,
                std: *std,
            },
            PolicySpec::Deterministic { rule } => match rule {
                DeterministicRule::Constant { action } => ActionDist::PointMass(*action),
                DeterministicRule::Linear { coef, shift } => {
                    ActionDist::PointMass(Action::Continuous(coef * x[0] + shift))
                }
            },
            PolicySpec::ClassifierEpsilon { eps, classifier } => {
                let k = classifier.num_classes();
                if k == 1 {
                    return ActionDist::Categorical(vec![1.0]);
                }
                let fav = argmax(&classifier.predict_proba(x));
                let rest = (1.0 - eps) / (k - 1) as f64;
                ActionDist::Categorical(
                    (0..k).map(|a| if a == fav { *eps } else { rest }).collect(),
                )
            }
        }
    }
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn toy_family_favours_by_region() {
        let p = PolicySpec::toy_discrete(0.3).unwrap();
        let probs = p.probs(&[0.5]).unwrap();
        assert!((probs[0] - 0.1).abs() < 1e-12);
        for &q in &probs[1..] {
            assert!((q - 0.3).abs() < 1e-12);
        }
        assert_eq!(argmax(&PolicySpec::toy_discrete(0.1).unwrap().probs(&[-3.5]).unwrap()), 3);
        assert_eq!(argmax(&PolicySpec::toy_discrete(0.1).unwrap().probs(&[2.0]).unwrap()), 1);
        assert_eq!(argmax(&PolicySpec::toy_discrete(0.1).unwrap().probs(&[2.5]).unwrap()), 2);
        assert_eq!(argmax(&PolicySpec::toy_discrete(0.1).unwrap().probs(&[1.0]).unwrap()), 0);
        assert!(PolicySpec::toy_discrete(0.4).is_err());
    }

    #[test]
    fn gaussian_density_at_mean() {
        let p = PolicySpec::toy_continuous(0.0);
        let d = policy_prob(&p, &[0.0], &Action::Continuous(0.0)).unwrap();
        assert!((d - 0.398_942_280_401_432_7).abs() < 1e-12);
    }

    #[test]
    fn deterministic_point_mass() {
        let p = PolicySpec::Deterministic {
            rule: DeterministicRule::Constant {
                action: Action::Discrete(2),
            },
        };
        assert_eq!(policy_prob(&p, &[1.0], &Action::Discrete(2)).unwrap(), 1.0);
        assert_eq!(policy_prob(&p, &[1.0], &Action::Discrete(0)).unwrap(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            assert_eq!(policy_sample(&p, &[0.3], &mut rng), Action::Discrete(2));
        }
    }

    #[test]
    fn kind_mismatch_is_type_error() {
        let p = PolicySpec::toy_discrete(0.2).unwrap();
        assert!(matches!(
            policy_prob(&p, &[0.0], &Action::Continuous(1.0)),
            Err(Error::Type(_))
        ));
    }

    #[test]
    fn validate_rejects_bad_rows() {
        let bad = PolicySpec::TabularRule {
            thresholds: vec![],
            table: vec![vec![0.5, 0.6]],
        };
        assert!(bad.validate().is_err());
        let bad_std = PolicySpec::GaussianLinear {
            coef: 0.0,
            shift: 0.0,
            std: 0.0,
        };
        assert!(bad_std.validate().is_err());
        assert!(PolicySpec::toy_discrete(0.2).unwrap().validate().is_ok());
    }

    #[test]
    fn spec_json_round_trip() {
        let p = PolicySpec::toy_continuous(1.5);
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<PolicySpec>(&s).unwrap(), p);
    }
}
