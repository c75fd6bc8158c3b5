//! Prediction sets: accept every candidate whose score is at most the
//! weighted quantile computed with that candidate as the test outcome.

use serde::{Deserialize, Serialize};

use super::quantile::Calibration;
use super::score::ScoreFn;
use crate::error::{Error, Result};
use crate::sets::PredictionSet;
use crate::weights::{UnitWeight, WeightFn};

/// Candidate grid for continuous outcomes, anchored on the calibration
/// outcomes: `[min - margin * span, max + margin * span]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub count: usize,
    pub margin: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            count: 100,
            margin: 0.25,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.count < 2 {
            return Err(Error::Domain(format!("grid needs at least 2 points, got {}", self.count)));
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return Err(Error::Domain(format!("grid margin {} must be >= 0", self.margin)));
        }
        Ok(())
    }

    /// A degenerate outcome range is widened to unit span.
    pub fn build(&self, cal_ys: &[f64]) -> Result<Grid> {
        self.validate()?;
        if cal_ys.is_empty() {
            return Err(Error::Size("grid needs calibration outcomes".into()));
        }
        let lo = cal_ys.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = cal_ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
        let span = hi - lo;
        Grid::new(lo - self.margin * span, hi + self.margin * span, self.count)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub points: Vec<f64>,
    pub spacing: f64,
}

impl Grid {
    pub fn new(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if count < 2 || !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Domain(format!("invalid grid [{lo}, {hi}] with {count} points")));
        }
        let spacing = (hi - lo) / (count - 1) as f64;
        let mut points: Vec<f64> = (0..count).map(|i| lo + i as f64 * spacing).collect();
        points[count - 1] = hi;
        Ok(Self { points, spacing })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// The outcome values to test.
#[derive(Debug, Clone, Copy)]
pub enum Candidates<'a> {
    Grid(&'a Grid),
    /// Labels `0..L`.
    Labels(usize),
}

impl Candidates<'_> {
    fn values(&self) -> Vec<f64> {
        match self {
            Candidates::Grid(g) => g.points.clone(),
            Candidates::Labels(l) => (0..*l).map(|y| y as f64).collect(),
        }
    }

    fn build(&self, accepted: &[bool], any_infinite: bool) -> PredictionSet {
        let all = accepted.iter().all(|&a| a);
        let unbounded = any_infinite && all;
        match self {
            Candidates::Grid(g) => PredictionSet::grid(
                g.points.iter().zip(accepted).filter(|p| *p.1).map(|p| *p.0).collect(),
                g.spacing,
                g.len(),
                unbounded,
            ),
            Candidates::Labels(l) => {
                PredictionSet::labels((0..*l).filter(|&y| accepted[y]).collect(), unbounded)
            }
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("alpha {alpha} outside (0, 1)")))
    }
}

/// `{y : s(x, y) <= η(x, y)}` with `η` the `1 - alpha` weighted quantile.
pub fn copp_predict<S: ScoreFn + ?Sized, W: WeightFn + ?Sized>(
    x: &[f64],
    candidates: Candidates<'_>,
    score: &S,
    w_hat: &W,
    calib: &Calibration,
    alpha: f64,
) -> Result<PredictionSet> {
    check_alpha(alpha)?;
    let ys = candidates.values();
    let scores = score.score_many(x, &ys);
    let ws = w_hat.eval_grid(x, &ys)?;
    let mut any_inf = false;
    let mut accepted = Vec::with_capacity(ys.len());
    for (s, w) in scores.iter().zip(&ws) {
        let eta = calib.quantile(*w, 1.0 - alpha)?;
        any_inf |= eta == f64::INFINITY;
        accepted.push(*s <= eta);
    }
    Ok(candidates.build(&accepted, any_inf))
}

pub fn copp_predict_continuous<S: ScoreFn + ?Sized, W: WeightFn + ?Sized>(
    x: &[f64],
    grid: &Grid,
    score: &S,
    w_hat: &W,
    calib: &Calibration,
    alpha: f64,
) -> Result<PredictionSet> {
    copp_predict(x, Candidates::Grid(grid), score, w_hat, calib, alpha)
}

pub fn copp_predict_discrete<S: ScoreFn + ?Sized, W: WeightFn + ?Sized>(
    x: &[f64],
    num_labels: usize,
    score: &S,
    w_hat: &W,
    calib: &Calibration,
    alpha: f64,
) -> Result<PredictionSet> {
    copp_predict(x, Candidates::Labels(num_labels), score, w_hat, calib, alpha)
}

/// Split conformal prediction without reweighting; `calib` should carry
/// unit weights.
pub fn standard_cp<S: ScoreFn + ?Sized>(
    x: &[f64],
    candidates: Candidates<'_>,
    score: &S,
    calib: &Calibration,
    alpha: f64,
) -> Result<PredictionSet> {
    copp_predict(x, candidates, score, &UnitWeight, calib, alpha)
}

/// Score and unit-weight calibration for one action's subset; `None`
/// when that action never appears in the calibration data.
#[derive(Debug, Clone)]
pub struct ActionCalibration<S> {
    pub score: S,
    pub calib: Option<Calibration>,
}

/// Union over actions of the per-action standard conformal sets.
/// Actions without calibration data are skipped.
pub fn union_cp<S: ScoreFn>(
    x: &[f64],
    candidates: Candidates<'_>,
    per_action: &[ActionCalibration<S>],
    alpha: f64,
) -> Result<PredictionSet> {
    check_alpha(alpha)?;
    let ys = candidates.values();
    let mut accepted = vec![false; ys.len()];
    let mut any_inf = false;
    for ac in per_action {
        let Some(calib) = &ac.calib else { continue };
        let eta = calib.quantile(1.0, 1.0 - alpha)?;
        any_inf |= eta == f64::INFINITY;
        for (acc, s) in accepted.iter_mut().zip(ac.score.score_many(x, &ys)) {
            *acc |= s <= eta;
        }
    }
    Ok(candidates.build(&accepted, any_inf))
}

/// Label-conditional calibration: label `y` is tested against the weighted
/// quantile of the label-`y` records only. A label without records is
/// always included.
pub fn class_balanced_copp<S: ScoreFn + ?Sized, W: WeightFn + ?Sized>(
    x: &[f64],
    num_labels: usize,
    score: &S,
    w_hat: &W,
    per_label: &[Option<Calibration>],
    alpha: f64,
) -> Result<PredictionSet> {
    check_alpha(alpha)?;
    if per_label.len() != num_labels {
        return Err(Error::Shape(format!(
            "{} label calibrations for {num_labels} labels",
            per_label.len()
        )));
    }
    let ys: Vec<f64> = (0..num_labels).map(|y| y as f64).collect();
    let scores = score.score_many(x, &ys);
    let ws = w_hat.eval_grid(x, &ys)?;
    let mut any_inf = false;
    let mut accepted = Vec::with_capacity(num_labels);
    for y in 0..num_labels {
        let eta = match &per_label[y] {
            Some(c) => c.quantile(ws[y], 1.0 - alpha)?,
            None => f64::INFINITY,
        };
        any_inf |= eta == f64::INFINITY;
        accepted.push(scores[y] <= eta);
    }
    Ok(Candidates::Labels(num_labels).build(&accepted, any_inf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal::FnScore;
    use crate::sets::SetKind;

    #[test]
    fn grid_from_calibration() {
        let g = GridSpec::default().build(&[0.0, 4.0, 2.0]).unwrap();
        assert_eq!(g.len(), 100);
        assert_eq!(g.points[0], -1.0);
        assert_eq!(g.points[99], 5.0);
        assert!((g.spacing - 6.0 / 99.0).abs() < 1e-15);
        assert!(GridSpec { count: 1, margin: 0.0 }.build(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn single_point_alpha_04_is_full() {
        let g = Grid::new(-1.0, 1.0, 5).unwrap();
        let cal = Calibration::unweighted(vec![0.0]).unwrap();
        let s = FnScore(|_x: &[f64], y: f64| y.abs());
        let set = standard_cp(&[0.0], Candidates::Grid(&g), &s, &cal, 0.4).unwrap();
        assert!(set.unbounded);
        assert_eq!(set.size(), 5.0 * 0.5);
    }

    #[test]
    fn tiny_alpha_gives_all_labels() {
        let cal = Calibration::unweighted(vec![0.2, 0.5, 0.9]).unwrap();
        let s = FnScore(|_x: &[f64], y: f64| y);
        let set = copp_predict_discrete(&[0.0], 3, &s, &UnitWeight, &cal, 1e-9).unwrap();
        assert_eq!(set.kind, SetKind::Labels { labels: vec![0, 1, 2] });
        assert!(set.unbounded);
    }

    #[test]
    fn missing_label_is_included() {
        let s = FnScore(|_x: &[f64], y: f64| 10.0 * y);
        let per = vec![Some(Calibration::unweighted(vec![0.0; 20]).unwrap()), None];
        let set = class_balanced_copp(&[0.0], 2, &s, &UnitWeight, &per, 0.1).unwrap();
        assert_eq!(set.kind, SetKind::Labels { labels: vec![0, 1] });
        let set = class_balanced_copp(&[0.0], 1, &s, &UnitWeight, &per[..1], 0.1).unwrap();
        assert_eq!(set.kind, SetKind::Labels { labels: vec![0] });
    }
}
