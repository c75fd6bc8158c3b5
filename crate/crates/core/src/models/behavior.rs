//! Estimated behaviour policies.

use serde::{Deserialize, Serialize};

use super::classifier::{fit_softmax, SoftmaxModel};
use super::features::{ActionEncoding, Standardizer, TargetScale};
use super::mlp::{Mlp, MlpSpec};
use super::objectives::{ScalarLoss, ScalarObjective};
use super::train::{train, TrainOpts};
use crate::data::{ActionKind, BanditDataset};
use crate::error::Result;
use crate::policy::{ActionDist, Policy};

/// `A | x ~ N(m(x), std^2)` with a network mean and a pooled residual std.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicyModel {
    pub mean: Mlp,
    pub input: Standardizer,
    pub target: TargetScale,
    pub std: f64,
}

impl GaussianPolicyModel {
    pub fn mean_at(&self, x: &[f64]) -> f64 {
        self.target.from_std(self.mean.forward(&self.input.apply(x))[0])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BehaviorModel {
    Softmax(SoftmaxModel),
    Gaussian(GaussianPolicyModel),
}

impl Policy for BehaviorModel {
    fn action_kind(&self) -> ActionKind {
        match self {
            BehaviorModel::Softmax(m) => ActionKind::Discrete(m.num_classes()),
            BehaviorModel::Gaussian(_) => ActionKind::Continuous,
        }
    }

    fn dist(&self, x: &[f64]) -> ActionDist {
        match self {
            BehaviorModel::Softmax(m) => ActionDist::Categorical(m.predict_proba(x)),
            BehaviorModel::Gaussian(g) => ActionDist::Gaussian {
                mean: g.mean_at(x),
                std: g.std,
            },
        }
    }
}

/// Estimate `pi_b(a|x)` from logged `(x, a)` pairs.
pub fn fit_behavior_policy(
    train_data: &BanditDataset,
    hidden: &[usize],
    opts: &TrainOpts,
) -> Result<BehaviorModel> {
    let rows: Vec<Vec<f64>> = train_data.iter().map(|s| s.x.clone()).collect();
    match train_data.action_kind() {
        ActionKind::Discrete(k) => {
            let labels: Vec<usize> = train_data.iter().map(|s| s.a.index().unwrap()).collect();
            Ok(BehaviorModel::Softmax(fit_softmax(
                &rows,
                &labels,
                k,
                ActionEncoding::None,
                hidden,
                opts,
            )?))
        }
        ActionKind::Continuous => {
            let acts: Vec<f64> = train_data.iter().map(|s| s.a.as_f64()).collect();
            let input = Standardizer::fit(&rows);
            let target = TargetScale::fit(&acts);
            let mut obj = ScalarObjective {
                net: Mlp::new(&MlpSpec::new(rows[0].len(), hidden, 1, opts.seed))?,
                inputs: rows.iter().map(|r| input.apply(r)).collect(),
                targets: acts.iter().map(|&a| target.to_std(a)).collect(),
                weights: vec![1.0; rows.len()],
                loss: ScalarLoss::Squared,
            };
            let report = train(&mut obj, rows.len(), opts)?;
            let mut model = GaussianPolicyModel {
                mean: obj.net,
                input,
                target,
                std: 1.0,
            };
            let fit_idx: Vec<usize> = {
                let held: std::collections::HashSet<usize> = report.val_idx.iter().copied().collect();
                (0..rows.len()).filter(|i| !held.contains(i)).collect()
            };
            let mse = fit_idx
                .iter()
                .map(|&i| (acts[i] - model.mean_at(&rows[i])).powi(2))
                .sum::<f64>()
                / fit_idx.len() as f64;
            model.std = mse.sqrt().max(1e-3);
            Ok(BehaviorModel::Gaussian(model))
        }
    }
}
