//! Per-sample losses and their derivatives with respect to network outputs.

use crate::error::{Error, Result};
use crate::stats::{softplus, LN_SQRT_2PI};

/// Quantile (pinball) loss at level `beta`.
pub fn pinball_loss(prediction: f64, y: f64, beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Domain(format!("quantile level must lie in (0, 1), got {beta}")));
    }
    Ok(pinball(prediction, y, beta).0)
}

/// Loss and derivative in `prediction`. At `prediction == y` the
/// `beta` slope is used.
pub(crate) fn pinball(prediction: f64, y: f64, beta: f64) -> (f64, f64) {
    let r = prediction - y;
    if r >= 0.0 {
        (beta * r, beta)
    } else {
        (-(1.0 - beta) * r, -(1.0 - beta))
    }
}

/// Negative log-likelihood of `y` under `N(mean, sd^2)`, with derivatives
/// in `mean` and `sd`.
pub(crate) fn gaussian_nll(y: f64, mean: f64, sd: f64) -> (f64, f64, f64) {
    let z = (y - mean) / sd;
    let loss = 0.5 * z * z + sd.ln() + LN_SQRT_2PI;
    (loss, -z / sd, (1.0 - z * z) / sd)
}

/// `softplus(raw) + floor`; always strictly positive.
pub(crate) fn positive_scale(raw: f64, floor: f64) -> f64 {
    softplus(raw) + floor
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Cross-entropy of `label` against softmax(`logits`) and its gradient.
pub(crate) fn cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    let mut g: Vec<f64> = logits.iter().map(|l| (l - lse).exp()).collect();
    g[label] -= 1.0;
    (lse - logits[label], g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinball_branches() {
        assert_eq!(pinball_loss(1.3, 1.3, 0.9).unwrap(), 0.0);
        assert!((pinball_loss(2.0, 0.0, 0.9).unwrap() - 1.8).abs() < 1e-12);
        assert!((pinball_loss(0.0, 2.0, 0.9).unwrap() - 0.2).abs() < 1e-12);
        assert!(pinball_loss(0.0, 1.0, 0.0).is_err());
        assert!(pinball_loss(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn pinball_kink_uses_beta_slope() {
        assert_eq!(pinball(1.0, 1.0, 0.25).1, 0.25);
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[1.0, -2.0, 700.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let (l, g) = cross_entropy(&[0.0, 0.0], 1);
        assert!((l - 2f64.ln()).abs() < 1e-12);
        assert!((g[0] - 0.5).abs() < 1e-12 && (g[1] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn nll_minimised_at_mean() {
        let (l0, dm, _) = gaussian_nll(1.0, 1.0, 2.0);
        let (l1, _, _) = gaussian_nll(1.0, 1.5, 2.0);
        assert!(l0 < l1);
        assert_eq!(dm, 0.0);
    }
}
