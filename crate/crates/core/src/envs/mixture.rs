//! Finite Gaussian mixtures over a real outcome.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::policy::sample_categorical;
use crate::stats::{log_sum_exp, normal_cdf, normal_log_pdf};

/// Largest `|F(y) - level|` accepted once bisection has converged.
pub const CDF_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    /// `(weight, mean, sd)`; weights sum to one.
    pub components: Vec<(f64, f64, f64)>,
}

impl GaussianMixture {
    pub fn single(mean: f64, sd: f64) -> Self {
        Self {
            components: vec![(1.0, mean, sd)],
        }
    }

    pub fn log_pdf(&self, y: f64) -> f64 {
        let terms: Vec<f64> = self
            .components
            .iter()
            .filter(|c| c.0 > 0.0)
            .map(|&(w, m, s)| w.ln() + normal_log_pdf(y, m, s))
            .collect();
        log_sum_exp(&terms)
    }

    pub fn pdf(&self, y: f64) -> f64 {
        self.log_pdf(y).exp()
    }

    pub fn cdf(&self, y: f64) -> f64 {
        self.components
            .iter()
            .map(|&(w, m, s)| w * normal_cdf((y - m) / s))
            .sum()
    }

    /// `inf { y : F(y) >= level }`, bisected down to floating-point
    /// resolution.
    pub fn quantile(&self, level: f64) -> Result<f64> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::Domain(format!("quantile level {level} outside (0, 1)")));
        }
        let mut lo = self
            .components
            .iter()
            .map(|&(_, m, s)| m - 40.0 * s)
            .fold(f64::INFINITY, f64::min);
        let mut hi = self
            .components
            .iter()
            .map(|&(_, m, s)| m + 40.0 * s)
            .fold(f64::NEG_INFINITY, f64::max);
        for _ in 0..300 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < level {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= f64::EPSILON * mid.abs().max(1.0) {
                break;
            }
        }
        let mid = 0.5 * (lo + hi);
        let resid = (self.cdf(mid) - level).abs();
        if resid <= CDF_TOL {
            Ok(mid)
        } else {
            Err(Error::Numeric(format!(
                "mixture quantile bisection stalled with residual {resid:e}"
            )))
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let w: Vec<f64> = self.components.iter().map(|c| c.0).collect();
        let (_, m, s) = self.components[sample_categorical(&w, rng)];
        Normal::new(m, s).expect("sd > 0").sample(rng)
    }
}
