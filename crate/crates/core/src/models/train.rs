//! Mini-batch Adam with validation early stopping, and a finite-difference
//! gradient checker.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainOpts {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub val_fraction: f64,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainOpts {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 300,
            batch_size: 128,
            val_fraction: 0.1,
            patience: 10,
            seed: 0,
        }
    }
}

impl TrainOpts {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Domain("learning rate must be positive".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Domain("epochs and batch size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Domain("validation fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// A differentiable empirical loss over indexed samples.
pub trait Objective {
    fn params(&self) -> Vec<f64>;
    fn set_params(&mut self, p: &[f64]);
    /// Mean loss over `idx`; adds the gradient of that mean into `grad`.
    fn loss_grad(&self, idx: &[usize], grad: &mut [f64]) -> f64;
    fn loss(&self, idx: &[usize]) -> f64;
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub best_val_loss: f64,
    pub final_train_loss: f64,
    /// Held-out indices; empty when the dataset was too small to split.
    pub val_idx: Vec<usize>,
}

/// Split `0..n` into (train, validation) using `opts.seed`.
pub fn holdout(n: usize, opts: &TrainOpts) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x005e_ed0f_7a11);
    idx.shuffle(&mut rng);
    let n_val = (n as f64 * opts.val_fraction).round() as usize;
    if n_val == 0 || n - n_val == 0 || n < 20 {
        return (idx, Vec::new());
    }
    let val = idx.split_off(n - n_val);
    (idx, val)
}

/// Adam on mini-batches; keeps the parameters with the best validation loss.
pub fn train<O: Objective>(obj: &mut O, n: usize, opts: &TrainOpts) -> Result<TrainReport> {
    opts.validate()?;
    let (mut tr, val) = holdout(n, opts);
    let monitor: Vec<usize> = if val.is_empty() { tr.clone() } else { val.clone() };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let p = obj.params().len();
    let (b1, b2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let mut m = vec![0.0; p];
    let mut v = vec![0.0; p];
    let mut grad = vec![0.0; p];
    let mut t = 0i32;

    let mut best = obj.loss(&monitor);
    if !best.is_finite() {
        return Err(Error::Training(format!("initial loss is {best}")));
    }
    let mut theta = obj.params();
    let mut best_params = theta.clone();
    let mut since_best = 0;
    let mut epochs_run = 0;
    let mut train_loss = f64::NAN;

    for epoch in 0..opts.epochs {
        epochs_run = epoch + 1;
        tr.shuffle(&mut rng);
        let mut sum = 0.0;
        for batch in tr.chunks(opts.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let l = obj.loss_grad(batch, &mut grad);
            if !l.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Training(format!(
                    "non-finite loss {l} at epoch {epoch} (batch of {})",
                    batch.len()
                )));
            }
            sum += l * batch.len() as f64;
            t += 1;
            let c1 = 1.0 - b1.powi(t);
            let c2 = 1.0 - b2.powi(t);
            for i in 0..p {
                m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
                v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
                theta[i] -= opts.learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
            obj.set_params(&theta);
        }
        train_loss = sum / tr.len() as f64;
        let vl = obj.loss(&monitor);
        if !vl.is_finite() {
            return Err(Error::Training(format!("non-finite validation loss at epoch {epoch}")));
        }
        if vl < best {
            best = vl;
            best_params.copy_from_slice(&theta);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= opts.patience {
                break;
            }
        }
    }
    obj.set_params(&best_params);
    Ok(TrainReport {
        epochs_run,
        best_val_loss: best,
        final_train_loss: train_loss,
        val_idx: val,
    })
}

/// Max over parameters of `|analytic - central| / (|central| + 1e-8)`.
pub fn grad_check<O: Objective>(obj: &mut O, idx: &[usize], step: f64) -> f64 {
    let mut theta = obj.params();
    let mut analytic = vec![0.0; theta.len()];
    obj.loss_grad(idx, &mut analytic);
    let mut worst = 0.0f64;
    for i in 0..theta.len() {
        let orig = theta[i];
        theta[i] = orig + step;
        obj.set_params(&theta);
        let up = obj.loss(idx);
        theta[i] = orig - step;
        obj.set_params(&theta);
        let down = obj.loss(idx);
        theta[i] = orig;
        obj.set_params(&theta);
        let central = (up - down) / (2.0 * step);
        worst = worst.max((analytic[i] - central).abs() / (central.abs() + 1e-8));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Least squares on a line, `params = (slope, intercept)`.
    struct Line {
        p: Vec<f64>,
        xs: Vec<f64>,
        ys: Vec<f64>,
    }

    impl Objective for Line {
        fn params(&self) -> Vec<f64> {
            self.p.clone()
        }
        fn set_params(&mut self, p: &[f64]) {
            self.p.copy_from_slice(p);
        }
        fn loss_grad(&self, idx: &[usize], grad: &mut [f64]) -> f64 {
            let n = idx.len() as f64;
            let mut l = 0.0;
            for &i in idx {
                let r = self.p[0] * self.xs[i] + self.p[1] - self.ys[i];
                l += r * r / n;
                grad[0] += 2.0 * r * self.xs[i] / n;
                grad[1] += 2.0 * r / n;
            }
            l
        }
        fn loss(&self, idx: &[usize]) -> f64 {
            let mut g = [0.0; 2];
            self.loss_grad(idx, &mut g)
        }
    }

    fn line() -> Line {
        let xs: Vec<f64> = (0..200).map(|i| i as f64 / 100.0 - 1.0).collect();
        let ys = xs.iter().map(|x| 3.0 * x - 0.5).collect();
        Line { p: vec![0.0, 0.0], xs, ys }
    }

    #[test]
    fn adam_recovers_line() {
        let mut obj = line();
        let opts = TrainOpts {
            learning_rate: 0.05,
            epochs: 2000,
            patience: 50,
            ..TrainOpts::default()
        };
        train(&mut obj, 200, &opts).unwrap();
        assert!((obj.p[0] - 3.0).abs() < 1e-2, "{:?}", obj.p);
        assert!((obj.p[1] + 0.5).abs() < 1e-2);
    }

    #[test]
    fn quadratic_grad_check_is_tight() {
        let mut obj = line();
        obj.p = vec![0.3, -0.2];
        let idx: Vec<usize> = (0..200).collect();
        assert!(grad_check(&mut obj, &idx, 1e-5) <= 1e-6);
    }

    #[test]
    fn divergence_is_reported() {
        let mut obj = line();
        obj.ys[3] = f64::NAN;
        let opts = TrainOpts::default();
        assert!(matches!(train(&mut obj, 200, &opts), Err(Error::Training(_))));
    }

    #[test]
    fn bad_opts_rejected() {
        let opts = TrainOpts {
            learning_rate: 0.0,
            ..TrainOpts::default()
        };
        assert!(opts.validate().is_err());
        let opts = TrainOpts {
            epochs: 0,
            ..TrainOpts::default()
        };
        assert!(opts.validate().is_err());
    }
}
