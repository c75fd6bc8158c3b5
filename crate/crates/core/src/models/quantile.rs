//! Conditional quantile networks trained with the (optionally weighted)
//! pinball loss.

use serde::{Deserialize, Serialize};

use super::features::{normalize_weights, Standardizer, TargetScale};
use super::mlp::{Mlp, MlpSpec};
use super::objectives::{ScalarLoss, ScalarObjective};
use super::train::{train, TrainOpts};
use crate::data::BanditDataset;
use crate::error::{Error, Result};

/// One conditional quantile `x -> q_beta(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileNet {
    pub level: f64,
    pub net: Mlp,
    pub input: Standardizer,
    pub target: TargetScale,
}

impl QuantileNet {
    /// A fixed affine quantile `coef · x + intercept`.
    pub fn linear(level: f64, coef: &[f64], intercept: f64) -> Result<Self> {
        let mut params = coef.to_vec();
        params.push(intercept);
        Ok(Self {
            level,
            net: Mlp::from_parts(vec![coef.len(), 1], params)?,
            input: Standardizer::identity(coef.len()),
            target: TargetScale { loc: 0.0, scale: 1.0 },
        })
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.target.from_std(self.net.forward(&self.input.apply(x))[0])
    }
}

/// Lower and upper conditional quantiles. Predictions never cross.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantilePair {
    pub lo: QuantileNet,
    pub hi: QuantileNet,
}

impl QuantilePair {
    pub fn alpha_lo(&self) -> f64 {
        self.lo.level
    }

    pub fn alpha_hi(&self) -> f64 {
        self.hi.level
    }

    /// `(q_lo(x), max(q_hi(x), q_lo(x)))`.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let lo = self.lo.predict(x);
        let hi = self.hi.predict(x);
        (lo, hi.max(lo))
    }
}

/// Fit one quantile network on raw covariate rows.
pub fn fit_quantile_net(
    rows: &[Vec<f64>],
    ys: &[f64],
    beta: f64,
    hidden: &[usize],
    opts: &TrainOpts,
    sample_weights: Option<&[f64]>,
) -> Result<QuantileNet> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Domain(format!("quantile level must lie in (0, 1), got {beta}")));
    }
    if rows.is_empty() || rows.len() != ys.len() {
        return Err(Error::Shape("quantile fit needs matching, nonempty rows and targets".into()));
    }
    let weights = normalize_weights(sample_weights, rows.len())?;
    let input = Standardizer::fit(rows);
    let target = TargetScale::fit(ys);
    let spec = MlpSpec::new(rows[0].len(), hidden, 1, opts.seed);
    let mut obj = ScalarObjective {
        net: Mlp::new(&spec)?,
        inputs: rows.iter().map(|r| input.apply(r)).collect(),
        targets: ys.iter().map(|&y| target.to_std(y)).collect(),
        weights,
        // `pinball_loss` charges `beta` on over-prediction, whose minimiser
        // is the `1 - beta` quantile; flip it to target level `beta`.
        loss: ScalarLoss::Pinball(1.0 - beta),
    };
    train(&mut obj, rows.len(), opts)
        .map_err(|e| match e {
            Error::Training(m) => Error::Training(format!("quantile level {beta}: {m}")),
            other => other,
        })?;
    Ok(QuantileNet {
        level: beta,
        net: obj.net,
        input,
        target,
    })
}

/// Fit `q_{alpha_lo}` and `q_{alpha_hi}` of `Y | X` on the training samples.
pub fn fit_quantile_pair(
    train_data: &BanditDataset,
    alpha_lo: f64,
    alpha_hi: f64,
    hidden: &[usize],
    opts: &TrainOpts,
    sample_weights: Option<&[f64]>,
) -> Result<QuantilePair> {
    if !(alpha_lo < alpha_hi) {
        return Err(Error::Domain(format!(
            "need alpha_lo < alpha_hi, got {alpha_lo} and {alpha_hi}"
        )));
    }
    let rows: Vec<Vec<f64>> = train_data.iter().map(|s| s.x.clone()).collect();
    let ys: Vec<f64> = train_data.iter().map(|s| s.y).collect();
    let lo = fit_quantile_net(&rows, &ys, alpha_lo, hidden, opts, sample_weights)?;
    let hi_opts = opts.clone().with_seed(opts.seed.wrapping_add(1));
    let hi = fit_quantile_net(&rows, &ys, alpha_hi, hidden, &hi_opts, sample_weights)?;
    Ok(QuantilePair { lo, hi })
}
