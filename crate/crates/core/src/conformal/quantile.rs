//! Weighted empirical quantiles of calibration scores with an atom at `+∞`
//! carrying the test point's weight.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weights::WeightFn;

/// Relative slack when comparing cumulative mass against the level, so
/// that exact ties survive floating-point rounding.
pub const QUANTILE_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub score: f64,
    pub x: Vec<f64>,
    pub y: f64,
}

/// Calibration scores sorted ascending with cumulative weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    scores: Vec<f64>,
    cum: Vec<f64>,
}

impl Calibration {
    /// Evaluate `ŵ(x_i, y_i)` once per record.
    pub fn new<W: WeightFn + ?Sized>(records: &[CalibrationRecord], w_hat: &W) -> Result<Self> {
        let weights = records
            .iter()
            .map(|r| w_hat.eval(&r.x, r.y))
            .collect::<Result<Vec<f64>>>()?;
        Self::from_scores(records.iter().map(|r| r.score).collect(), weights)
    }

    pub fn from_scores(scores: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::Size("calibration set is empty".into()));
        }
        if scores.len() != weights.len() {
            return Err(Error::Shape("scores and weights differ in length".into()));
        }
        if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
            return Err(Error::Numeric(format!("non-finite calibration score {s}")));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::Numeric(format!("invalid calibration weight {w}")));
        }
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]).then(i.cmp(&j)));
        let mut acc = 0.0;
        let cum = order
            .iter()
            .map(|&i| {
                acc += weights[i];
                acc
            })
            .collect();
        Ok(Self {
            scores: order.iter().map(|&i| scores[i]).collect(),
            cum,
        })
    }

    pub fn unweighted(scores: Vec<f64>) -> Result<Self> {
        let n = scores.len();
        Self::from_scores(scores, vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    /// Sorted scores.
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// The `level` quantile of `Σ p_i δ_{V_i} + p_{n+1} δ_{+∞}` where the
    /// test point carries weight `test_weight`.
    pub fn quantile(&self, test_weight: f64, level: f64) -> Result<f64> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::Domain(format!("quantile level {level} outside (0, 1)")));
        }
        let total = self.total_weight() + test_weight;
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::DegenerateWeights(format!(
                "calibration plus test weight is {total}"
            )));
        }
        let need = level * total * (1.0 - QUANTILE_RTOL);
        let i = self.cum.partition_point(|&c| c < need);
        Ok(if i < self.scores.len() {
            self.scores[i]
        } else {
            f64::INFINITY
        })
    }
}

/// One-shot weighted quantile at test point `(x, y)`.
pub fn weighted_quantile<W: WeightFn + ?Sized>(
    records: &[CalibrationRecord],
    w_hat: &W,
    x: &[f64],
    y: f64,
    level: f64,
) -> Result<f64> {
    Calibration::new(records, w_hat)?.quantile(w_hat.eval(x, y)?, level)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::{FnWeight, UnitWeight};

    fn recs(scores: &[f64]) -> Vec<CalibrationRecord> {
        scores
            .iter()
            .enumerate()
            .map(|(i, &s)| CalibrationRecord {
                score: s,
                x: vec![i as f64],
                y: 0.0,
            })
            .collect()
    }

    #[test]
    fn uniform_weights_apply_finite_sample_correction() {
        let r = recs(&[4.0, 2.0, 1.0, 3.0]);
        assert_eq!(weighted_quantile(&r, &UnitWeight, &[0.0], 0.0, 0.8).unwrap(), 4.0);
        assert_eq!(weighted_quantile(&r, &UnitWeight, &[0.0], 0.0, 0.81).unwrap(), f64::INFINITY);
    }

    #[test]
    fn hand_weighted_example() {
        let r = recs(&[1.0, 2.0, 3.0]);
        // calibration weights 1, 1, 2 keyed by x; test weight 1 at x = -1
        let w = FnWeight(|x: &[f64], _y: f64| if x[0] == 2.0 { 2.0 } else { 1.0 });
        assert_eq!(weighted_quantile(&r, &w, &[-1.0], 0.0, 0.75).unwrap(), 3.0);
        assert_eq!(weighted_quantile(&r, &w, &[-1.0], 0.0, 0.4).unwrap(), 2.0);
    }

    #[test]
    fn heavy_test_point_gives_infinity() {
        let r = recs(&[1.0, 2.0]);
        let w = FnWeight(|x: &[f64], _y: f64| if x[0] < 0.0 { 1e6 } else { 1.0 });
        assert_eq!(weighted_quantile(&r, &w, &[-1.0], 0.0, 0.1).unwrap(), f64::INFINITY);
    }

    #[test]
    fn single_point_is_infinite_at_high_level() {
        let c = Calibration::unweighted(vec![0.3]).unwrap();
        assert_eq!(c.quantile(1.0, 0.6).unwrap(), f64::INFINITY);
        assert_eq!(c.quantile(1.0, 0.5).unwrap(), 0.3);
    }

    #[test]
    fn zero_weights_are_degenerate() {
        let c = Calibration::from_scores(vec![1.0, 2.0], vec![0.0, 0.0]).unwrap();
        assert!(matches!(c.quantile(0.0, 0.5), Err(Error::DegenerateWeights(_))));
        assert_eq!(c.quantile(1.0, 0.5).unwrap(), f64::INFINITY);
    }

    #[test]
    fn ties_merge() {
        let c = Calibration::from_scores(vec![1.0, 1.0, 2.0], vec![1.0, 1.0, 1.0]).unwrap();
        assert_eq!(c.quantile(1.0, 0.3).unwrap(), 1.0);
        assert_eq!(c.quantile(1.0, 0.5).unwrap(), 1.0);
        assert_eq!(c.quantile(1.0, 0.51).unwrap(), 2.0);
    }
}
