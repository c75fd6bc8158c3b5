//! Heteroscedastic Gaussian outcome model `P(y|x,a) = N(mu(x,a), sigma(x,a)^2)`.

use serde::{Deserialize, Serialize};

use super::features::{ActionEncoding, Standardizer, TargetScale};
use super::losses::positive_scale;
use super::mlp::{Mlp, MlpSpec};
use super::objectives::GaussianObjective;
use super::train::{train, TrainOpts};
use super::OutcomeModel;
use crate::data::{Action, BanditDataset, OutcomeKind};
use crate::error::{Error, Result};
use crate::stats::normal_log_pdf;

/// Lower bound on the predicted standard deviation, in outcome units.
pub const SIGMA_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianConditional {
    pub mu: Mlp,
    pub sigma: Mlp,
    pub encoding: ActionEncoding,
    pub input: Standardizer,
    pub target: TargetScale,
    pub floor: f64,
}

impl GaussianConditional {
    /// Mean and standard deviation of `Y | x, a`.
    pub fn mean_sd(&self, x: &[f64], a: &Action) -> (f64, f64) {
        let f = self.input.apply(&self.encoding.encode(x, Some(a)));
        let m = self.mu.forward(&f)[0];
        let raw = self.sigma.forward(&f)[0];
        let sd_std = positive_scale(raw, self.floor / self.target.scale);
        (self.target.from_std(m), sd_std * self.target.scale)
    }
}

impl OutcomeModel for GaussianConditional {
    fn log_density_fn<'a>(&'a self, x: &[f64], a: &Action) -> Box<dyn Fn(f64) -> f64 + 'a> {
        let (m, sd) = self.mean_sd(x, a);
        Box::new(move |y| normal_log_pdf(y, m, sd))
    }

    fn gaussian_params(&self, x: &[f64], a: &Action) -> Option<(f64, f64)> {
        Some(self.mean_sd(x, a))
    }
}

/// Fit mean and scale networks jointly by maximum likelihood.
pub fn fit_gaussian_conditional(
    train_data: &BanditDataset,
    hidden: &[usize],
    opts: &TrainOpts,
) -> Result<GaussianConditional> {
    if train_data.outcome_kind() != OutcomeKind::Continuous {
        return Err(Error::Type("gaussian outcome model needs continuous outcomes".into()));
    }
    let encoding = ActionEncoding::for_kind(train_data.action_kind());
    let rows: Vec<Vec<f64>> = train_data
        .iter()
        .map(|s| encoding.encode(&s.x, Some(&s.a)))
        .collect();
    let ys: Vec<f64> = train_data.iter().map(|s| s.y).collect();
    let input = Standardizer::fit(&rows);
    let target = TargetScale::fit(&ys);
    let d = rows[0].len();
    let mut obj = GaussianObjective {
        mu: Mlp::new(&MlpSpec::new(d, hidden, 1, opts.seed))?,
        sigma: Mlp::new(&MlpSpec::new(d, hidden, 1, opts.seed.wrapping_add(7919)))?,
        inputs: rows.iter().map(|r| input.apply(r)).collect(),
        targets: ys.iter().map(|&y| target.to_std(y)).collect(),
        floor: SIGMA_FLOOR / target.scale,
    };
    train(&mut obj, rows.len(), opts)?;
    Ok(GaussianConditional {
        mu: obj.mu,
        sigma: obj.sigma,
        encoding,
        input,
        target,
        floor: SIGMA_FLOOR,
    })
}
