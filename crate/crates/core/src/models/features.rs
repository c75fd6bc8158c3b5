//! Input encoding and standardisation shared by the fitted models.

use serde::{Deserialize, Serialize};

use crate::data::{Action, ActionKind};

/// How an action is appended to the covariates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionEncoding {
    None,
    OneHot(usize),
    Scalar,
}

impl ActionEncoding {
    pub fn for_kind(kind: ActionKind) -> Self {
        match kind {
            ActionKind::Discrete(k) => ActionEncoding::OneHot(k),
            ActionKind::Continuous => ActionEncoding::Scalar,
        }
    }

    pub fn width(&self) -> usize {
        match *self {
            ActionEncoding::None => 0,
            ActionEncoding::OneHot(k) => k,
            ActionEncoding::Scalar => 1,
        }
    }

    pub fn encode(&self, x: &[f64], a: Option<&Action>) -> Vec<f64> {
        let mut v = Vec::with_capacity(x.len() + self.width());
        v.extend_from_slice(x);
        match (*self, a) {
            (ActionEncoding::OneHot(k), Some(a)) => {
                let i = a.index().expect("discrete action");
                v.extend((0..k).map(|j| if j == i { 1.0 } else { 0.0 }));
            }
            (ActionEncoding::Scalar, Some(a)) => v.push(a.as_f64()),
            _ => {}
        }
        v
    }
}

/// Column-wise affine map to zero mean and unit variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let d = rows.first().map(|r| r.len()).unwrap_or(0);
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        let scale = var
            .into_iter()
            .map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 })
            .collect();
        Self { mean, scale }
    }

    pub fn identity(d: usize) -> Self {
        Self {
            mean: vec![0.0; d],
            scale: vec![1.0; d],
        }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

/// Scalar location/scale for regression targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetScale {
    pub loc: f64,
    pub scale: f64,
}

impl TargetScale {
    pub fn fit(ys: &[f64]) -> Self {
        let s = Standardizer::fit(&ys.iter().map(|&y| vec![y]).collect::<Vec<_>>());
        Self {
            loc: s.mean[0],
            scale: s.scale[0],
        }
    }

    pub fn to_std(&self, y: f64) -> f64 {
        (y - self.loc) / self.scale
    }

    pub fn from_std(&self, z: f64) -> f64 {
        z * self.scale + self.loc
    }
}

/// Sample weights rescaled to unit mean. Equal weights become exactly 1.
pub(crate) fn normalize_weights(w: Option<&[f64]>, n: usize) -> crate::error::Result<Vec<f64>> {
    use crate::error::Error;
    match w {
        None => Ok(vec![1.0; n]),
        Some(w) => {
            if w.len() != n {
                return Err(Error::Shape(format!("{} weights for {n} samples", w.len())));
            }
            if w.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(Error::Domain("sample weights must be finite and nonnegative".into()));
            }
            if w.iter().all(|&v| v == w[0]) {
                return if w[0] > 0.0 {
                    Ok(vec![1.0; n])
                } else {
                    Err(Error::Domain("sample weights are all zero".into()))
                };
            }
            let mean = w.iter().sum::<f64>() / n as f64;
            if mean <= 0.0 {
                return Err(Error::Domain("sample weights are all zero".into()));
            }
            Ok(w.iter().map(|v| v / mean).collect())
        }
    }
}
