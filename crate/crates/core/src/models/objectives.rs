//! Training objectives: scalar regression (pinball or squared error),
//! heteroscedastic Gaussian likelihood and softmax cross-entropy.

use super::losses::{cross_entropy, gaussian_nll, pinball, positive_scale};
use super::mlp::{ForwardCache, Mlp};
use super::train::Objective;
use crate::stats::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalarLoss {
    Pinball(f64),
    Squared,
}

impl ScalarLoss {
    fn eval(&self, pred: f64, y: f64) -> (f64, f64) {
        match *self {
            ScalarLoss::Pinball(beta) => pinball(pred, y, beta),
            ScalarLoss::Squared => {
                let r = pred - y;
                (r * r, 2.0 * r)
            }
        }
    }
}

/// Weighted mean of a scalar loss of a single-output network.
pub struct ScalarObjective {
    pub net: Mlp,
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub weights: Vec<f64>,
    pub loss: ScalarLoss,
}

impl Objective for ScalarObjective {
    fn params(&self) -> Vec<f64> {
        self.net.params().to_vec()
    }

    fn set_params(&mut self, p: &[f64]) {
        self.net.params_mut().copy_from_slice(p);
    }

    fn loss_grad(&self, idx: &[usize], grad: &mut [f64]) -> f64 {
        let wsum: f64 = idx.iter().map(|&i| self.weights[i]).sum();
        if wsum <= 0.0 {
            return 0.0;
        }
        let mut cache = ForwardCache::default();
        let mut total = 0.0;
        for &i in idx {
            let w = self.weights[i];
            if w == 0.0 {
                continue;
            }
            self.net.forward_cached(&self.inputs[i], &mut cache);
            let (l, d) = self.loss.eval(cache.output()[0], self.targets[i]);
            total += w * l;
            self.net.backward(&cache, &[d], w / wsum, grad);
        }
        total / wsum
    }

    fn loss(&self, idx: &[usize]) -> f64 {
        let wsum: f64 = idx.iter().map(|&i| self.weights[i]).sum();
        if wsum <= 0.0 {
            return 0.0;
        }
        idx.iter()
            .map(|&i| {
                let p = self.net.forward(&self.inputs[i])[0];
                self.weights[i] * self.loss.eval(p, self.targets[i]).0
            })
            .sum::<f64>()
            / wsum
    }
}

/// Gaussian negative log-likelihood with separate mean and scale networks;
/// `sd = softplus(raw) + floor`.
pub struct GaussianObjective {
    pub mu: Mlp,
    pub sigma: Mlp,
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub floor: f64,
}

impl Objective for GaussianObjective {
    fn params(&self) -> Vec<f64> {
        let mut p = self.mu.params().to_vec();
        p.extend_from_slice(self.sigma.params());
        p
    }

    fn set_params(&mut self, p: &[f64]) {
        let k = self.mu.num_params();
        self.mu.params_mut().copy_from_slice(&p[..k]);
        self.sigma.params_mut().copy_from_slice(&p[k..]);
    }

    fn loss_grad(&self, idx: &[usize], grad: &mut [f64]) -> f64 {
        let n = idx.len() as f64;
        let k = self.mu.num_params();
        let (gmu, gsig) = grad.split_at_mut(k);
        let mut cm = ForwardCache::default();
        let mut cs = ForwardCache::default();
        let mut total = 0.0;
        for &i in idx {
            self.mu.forward_cached(&self.inputs[i], &mut cm);
            self.sigma.forward_cached(&self.inputs[i], &mut cs);
            let raw = cs.output()[0];
            let sd = positive_scale(raw, self.floor);
            let (l, dm, dsd) = gaussian_nll(self.targets[i], cm.output()[0], sd);
            total += l;
            self.mu.backward(&cm, &[dm], 1.0 / n, gmu);
            self.sigma.backward(&cs, &[dsd * sigmoid(raw)], 1.0 / n, gsig);
        }
        total / n
    }

    fn loss(&self, idx: &[usize]) -> f64 {
        let n = idx.len() as f64;
        idx.iter()
            .map(|&i| {
                let m = self.mu.forward(&self.inputs[i])[0];
                let sd = positive_scale(self.sigma.forward(&self.inputs[i])[0], self.floor);
                gaussian_nll(self.targets[i], m, sd).0
            })
            .sum::<f64>()
            / n
    }
}

/// Mean softmax cross-entropy.
pub struct SoftmaxObjective {
    pub net: Mlp,
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl Objective for SoftmaxObjective {
    fn params(&self) -> Vec<f64> {
        self.net.params().to_vec()
    }

    fn set_params(&mut self, p: &[f64]) {
        self.net.params_mut().copy_from_slice(p);
    }

    fn loss_grad(&self, idx: &[usize], grad: &mut [f64]) -> f64 {
        let n = idx.len() as f64;
        let mut cache = ForwardCache::default();
        let mut total = 0.0;
        for &i in idx {
            self.net.forward_cached(&self.inputs[i], &mut cache);
            let (l, g) = cross_entropy(cache.output(), self.labels[i]);
            total += l;
            self.net.backward(&cache, &g, 1.0 / n, grad);
        }
        total / n
    }

    fn loss(&self, idx: &[usize]) -> f64 {
        let n = idx.len() as f64;
        idx.iter()
            .map(|&i| cross_entropy(&self.net.forward(&self.inputs[i]), self.labels[i]).0)
            .sum::<f64>()
            / n
    }
}
