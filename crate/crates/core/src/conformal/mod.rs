//! The conformal engine: weighted score quantiles and prediction sets for
//! off-policy, standard, per-action union and class-balanced calibration.

mod predict;
mod quantile;
mod score;

pub use predict::{
    class_balanced_copp, copp_predict, copp_predict_continuous, copp_predict_discrete,
    standard_cp, union_cp, ActionCalibration, Candidates, Grid, GridSpec,
};
pub use quantile::{weighted_quantile, Calibration, CalibrationRecord, QUANTILE_RTOL};
pub use score::{cqr_score, discrete_cumprob_score, CqrScore, CumprobScore, FnScore, ScoreFn, ScoreKind};
