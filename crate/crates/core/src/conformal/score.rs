//! Nonconformity scores: larger means `y` fits `x` worse.

use serde::{Deserialize, Serialize};

use crate::models::QuantilePair;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    Cqr,
    DiscreteCumprob,
    Custom,
}

pub trait ScoreFn: Send + Sync {
    fn kind(&self) -> ScoreKind;

    fn score(&self, x: &[f64], y: f64) -> f64;

    /// Scores of many candidates at one `x`.
    fn score_many(&self, x: &[f64], ys: &[f64]) -> Vec<f64> {
        ys.iter().map(|&y| self.score(x, y)).collect()
    }
}

impl<S: ScoreFn + ?Sized> ScoreFn for &S {
    fn kind(&self) -> ScoreKind {
        (**self).kind()
    }
    fn score(&self, x: &[f64], y: f64) -> f64 {
        (**self).score(x, y)
    }
    fn score_many(&self, x: &[f64], ys: &[f64]) -> Vec<f64> {
        (**self).score_many(x, ys)
    }
}

/// `max(lo - y, y - hi)`.
pub fn cqr_score(q: &QuantilePair, x: &[f64], y: f64) -> f64 {
    let (lo, hi) = q.predict(x);
    (lo - y).max(y - hi)
}

/// `Σ_{y'} p[y'] 1(p[y'] >= p[y])`: the mass of labels at least as likely
/// as `y`.
pub fn discrete_cumprob_score(pyx: &[f64], y: usize) -> f64 {
    let py = pyx[y];
    pyx.iter().filter(|&&p| p >= py).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CqrScore {
    pub pair: QuantilePair,
}

impl ScoreFn for CqrScore {
    fn kind(&self) -> ScoreKind {
        ScoreKind::Cqr
    }
    fn score(&self, x: &[f64], y: f64) -> f64 {
        cqr_score(&self.pair, x, y)
    }
    fn score_many(&self, x: &[f64], ys: &[f64]) -> Vec<f64> {
        let (lo, hi) = self.pair.predict(x);
        ys.iter().map(|&y| (lo - y).max(y - hi)).collect()
    }
}

/// Cumulative-probability score from a label distribution `x -> p(·|x)`.
pub struct CumprobScore<F> {
    probs: F,
}

impl<F: Fn(&[f64]) -> Vec<f64> + Send + Sync> CumprobScore<F> {
    pub fn new(probs: F) -> Self {
        Self { probs }
    }
}

impl<F: Fn(&[f64]) -> Vec<f64> + Send + Sync> ScoreFn for CumprobScore<F> {
    fn kind(&self) -> ScoreKind {
        ScoreKind::DiscreteCumprob
    }
    fn score(&self, x: &[f64], y: f64) -> f64 {
        discrete_cumprob_score(&(self.probs)(x), y as usize)
    }
    fn score_many(&self, x: &[f64], ys: &[f64]) -> Vec<f64> {
        let p = (self.probs)(x);
        ys.iter().map(|&y| discrete_cumprob_score(&p, y as usize)).collect()
    }
}

/// A score given by a closure.
pub struct FnScore<F>(pub F);

impl<F: Fn(&[f64], f64) -> f64 + Send + Sync> ScoreFn for FnScore<F> {
    fn kind(&self) -> ScoreKind {
        ScoreKind::Custom
    }
    fn score(&self, x: &[f64], y: f64) -> f64 {
        (self.0)(x, y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cumprob_examples() {
        let p = [0.7, 0.2, 0.1];
        assert!((discrete_cumprob_score(&p, 0) - 0.7).abs() < 1e-15);
        assert!((discrete_cumprob_score(&p, 1) - 0.9).abs() < 1e-15);
        assert!((discrete_cumprob_score(&p, 2) - 1.0).abs() < 1e-15);
        assert_eq!(discrete_cumprob_score(&[0.25; 4], 3), 1.0);
        assert_eq!(discrete_cumprob_score(&[1.0, 0.0, 0.0], 0), 1.0);
        assert_eq!(discrete_cumprob_score(&[1.0, 0.0, 0.0], 1), 1.0);
    }
}
