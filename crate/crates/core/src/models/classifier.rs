//! Softmax classifiers: behaviour-policy estimates, label models
//! `P(y|x,a)` for discrete outcomes, and feature classifiers.

use serde::{Deserialize, Serialize};

use super::features::{ActionEncoding, Standardizer};
use super::losses::softmax;
use super::mlp::{Mlp, MlpSpec};
use super::objectives::SoftmaxObjective;
use super::train::{train, TrainOpts};
use super::OutcomeModel;
use crate::data::{Action, BanditDataset, OutcomeKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxModel {
    pub net: Mlp,
    pub input: Standardizer,
    pub encoding: ActionEncoding,
}

impl SoftmaxModel {
    pub fn num_classes(&self) -> usize {
        self.net.output_dim()
    }

    /// Class probabilities for a covariate-only model.
    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.net.forward(&self.input.apply(x)))
    }

    /// Class probabilities for a model that also takes the action as input.
    pub fn predict_proba_action(&self, x: &[f64], a: &Action) -> Vec<f64> {
        softmax(&self.net.forward(&self.input.apply(&self.encoding.encode(x, Some(a)))))
    }
}

/// Fit a classifier on pre-encoded rows.
pub fn fit_softmax(
    rows: &[Vec<f64>],
    labels: &[usize],
    num_classes: usize,
    encoding: ActionEncoding,
    hidden: &[usize],
    opts: &TrainOpts,
) -> Result<SoftmaxModel> {
    if rows.is_empty() || rows.len() != labels.len() {
        return Err(Error::Shape("classifier needs matching, nonempty rows and labels".into()));
    }
    if num_classes == 0 || labels.iter().any(|&l| l >= num_classes) {
        return Err(Error::Domain(format!("labels must lie in 0..{num_classes}")));
    }
    let input = Standardizer::fit(rows);
    let mut obj = SoftmaxObjective {
        net: Mlp::new(&MlpSpec::new(rows[0].len(), hidden, num_classes, opts.seed))?,
        inputs: rows.iter().map(|r| input.apply(r)).collect(),
        labels: labels.to_vec(),
    };
    train(&mut obj, rows.len(), opts)?;
    Ok(SoftmaxModel {
        net: obj.net,
        input,
        encoding,
    })
}

/// `P(y | x, a)` for discrete outcomes, as a softmax over labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelModel {
    pub model: SoftmaxModel,
}

impl LabelModel {
    pub fn num_labels(&self) -> usize {
        self.model.num_classes()
    }

    pub fn proba(&self, x: &[f64], a: &Action) -> Vec<f64> {
        self.model.predict_proba_action(x, a)
    }
}

impl OutcomeModel for LabelModel {
    fn log_density_fn<'a>(&'a self, x: &[f64], a: &Action) -> Box<dyn Fn(f64) -> f64 + 'a> {
        let p = self.proba(x, a);
        Box::new(move |y| {
            let i = y as usize;
            if y < 0.0 || i >= p.len() {
                f64::NEG_INFINITY
            } else {
                p[i].ln()
            }
        })
    }
}

pub fn fit_label_model(
    train_data: &BanditDataset,
    hidden: &[usize],
    opts: &TrainOpts,
) -> Result<LabelModel> {
    let OutcomeKind::Discrete(l) = train_data.outcome_kind() else {
        return Err(Error::Type("label model needs discrete outcomes".into()));
    };
    let encoding = ActionEncoding::for_kind(train_data.action_kind());
    let rows: Vec<Vec<f64>> = train_data
        .iter()
        .map(|s| encoding.encode(&s.x, Some(&s.a)))
        .collect();
    let labels: Vec<usize> = train_data.iter().map(|s| s.label()).collect();
    Ok(LabelModel {
        model: fit_softmax(&rows, &labels, l, encoding, hidden, opts)?,
    })
}

/// Binary outcome `Y = 1(A is the true class)` scored by a feature
/// classifier: `P(Y = 1 | x, a) = f(x)_a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierOutcome {
    pub classifier: SoftmaxModel,
}

impl OutcomeModel for ClassifierOutcome {
    fn log_density_fn<'a>(&'a self, x: &[f64], a: &Action) -> Box<dyn Fn(f64) -> f64 + 'a> {
        let p = self.classifier.predict_proba(x);
        let p1 = a.index().map(|k| p[k]).unwrap_or(0.0);
        Box::new(move |y| if y == 1.0 { p1.ln() } else if y == 0.0 { (1.0 - p1).ln() } else { f64::NEG_INFINITY })
    }
}
