//! Competing interval constructors: a weighted-importance-sampling CDF of
//! logged outcomes, and sampling through the fitted outcome model.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::conformal::QUANTILE_RTOL;
use crate::data::{Action, BanditDataset};
use crate::error::{Error, Result};
use crate::models::GaussianOutcome;
use crate::policy::{policy_prob, ActionDist, Policy};
use crate::sets::PredictionSet;
use crate::weights::DENOM_FLOOR;

/// Default number of outcome draws per test point for sampling intervals.
pub const DEFAULT_SBA_DRAWS: usize = 1000;

/// Right-continuous step CDF of weighted outcome values.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedCdf {
    values: Vec<f64>,
    /// Normalised cumulative weights; the last entry is 1.
    cum: Vec<f64>,
}

impl WeightedCdf {
    pub fn new(values: &[f64], weights: &[f64]) -> Result<Self> {
        if values.is_empty() || values.len() != weights.len() {
            return Err(Error::Shape("values and weights must be nonempty and aligned".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Numeric("weights must be finite and nonnegative".into()));
        }
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&i, &j| values[i].total_cmp(&values[j]).then(i.cmp(&j)));
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::DegenerateWeights("all importance ratios are zero".into()));
        }
        let mut acc = 0.0;
        let cum = order
            .iter()
            .map(|&i| {
                acc += weights[i];
                acc / total
            })
            .collect();
        Ok(Self {
            values: order.iter().map(|&i| values[i]).collect(),
            cum,
        })
    }

    pub fn unweighted(values: &[f64]) -> Result<Self> {
        Self::new(values, &vec![1.0; values.len()])
    }

    pub fn cdf(&self, t: f64) -> f64 {
        let i = self.values.partition_point(|&v| v <= t);
        if i == 0 {
            0.0
        } else {
            self.cum[i - 1]
        }
    }

    /// `inf { t : F(t) >= beta }`.
    pub fn quantile(&self, beta: f64) -> f64 {
        let need = beta * (1.0 - QUANTILE_RTOL);
        let i = self.cum.partition_point(|&c| c < need);
        self.values[i.min(self.values.len() - 1)]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Self-normalised CDF with ratios `π*(a_i|x_i) / π̂_b(a_i|x_i)`. Also
/// returns how many behaviour probabilities hit the floor.
pub fn wis_cdf<T: Policy + ?Sized, B: Policy + ?Sized>(
    data: &BanditDataset,
    target: &T,
    behavior_hat: &B,
) -> Result<(WeightedCdf, usize)> {
    let mut floors = 0;
    let mut rho = Vec::with_capacity(data.len());
    for s in data.iter() {
        let mut pb = policy_prob(behavior_hat, &s.x, &s.a)?;
        if pb < DENOM_FLOOR {
            floors += 1;
            pb = DENOM_FLOOR;
        }
        rho.push(policy_prob(target, &s.x, &s.a)? / pb);
    }
    let ys: Vec<f64> = data.iter().map(|s| s.y).collect();
    Ok((WeightedCdf::new(&ys, &rho)?, floors))
}

/// `[q_{α/2}, q_{1-α/2}]`, the same for every test point.
pub fn wis_interval(cdf: &WeightedCdf, alpha: f64) -> Result<PredictionSet> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha {alpha} outside (0, 1)")));
    }
    Ok(PredictionSet::interval(cdf.quantile(alpha / 2.0), cdf.quantile(1.0 - alpha / 2.0)))
}

/// Empirical central interval of `ell` draws `A ~ π*(·|x)`, `Y ~ p̂(·|x, A)`.
pub fn sba_interval<T: Policy + ?Sized, M: GaussianOutcome + ?Sized, R: Rng + ?Sized>(
    x: &[f64],
    target: &T,
    model: &M,
    ell: usize,
    alpha: f64,
    rng: &mut R,
) -> Result<PredictionSet> {
    if ell < 2 {
        return Err(Error::Domain("sampling intervals need at least 2 draws".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha {alpha} outside (0, 1)")));
    }
    let dist = target.dist(x);
    // discrete actions: one model evaluation per action, not per draw
    let mut cache: Vec<Option<(f64, f64)>> = match &dist {
        ActionDist::Categorical(p) => vec![None; p.len()],
        _ => Vec::new(),
    };
    let draws: Vec<f64> = (0..ell)
        .map(|_| {
            let a = dist.sample(rng);
            let (m, s) = match a {
                Action::Discrete(k) if k < cache.len() => {
                    *cache[k].get_or_insert_with(|| model.mean_sd(x, &a))
                }
                _ => model.mean_sd(x, &a),
            };
            Normal::new(m, s).expect("sd > 0").sample(rng)
        })
        .collect();
    wis_interval(&WeightedCdf::unweighted(&draws)?, alpha)
}
