//! Classification data posed as a contextual bandit: the action is a label
//! guess and the outcome is `1` exactly when the guess is correct.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Action, ActionKind, BanditDataset, LoggedSample, OutcomeKind};
use crate::error::{Error, Result};
use crate::models::OutcomeModel;
use crate::policy::{sample_categorical, Policy};
use crate::stats::log_sum_exp;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationBandit {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl ClassificationBandit {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if features.is_empty() || features.len() != labels.len() {
            return Err(Error::Shape("features and labels must be nonempty and aligned".into()));
        }
        let d = features[0].len();
        if d == 0 || features.iter().any(|f| f.len() != d) {
            return Err(Error::Shape("ragged feature rows".into()));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Schema(format!("label {l} outside 0..{num_classes}")));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features[0].len()
    }

    /// Rows `range` as a new dataset.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        Self::new(
            self.features[range.clone()].to_vec(),
            self.labels[range].to_vec(),
            self.num_classes,
        )
    }

    /// Header `x0,...,x{d-1},label`.
    pub fn write_csv_to<W: Write>(&self, out: &mut W) -> Result<()> {
        let mut header: Vec<String> = (0..self.dim()).map(|j| format!("x{j}")).collect();
        header.push("label".into());
        writeln!(out, "{}", header.join(","))?;
        for (f, l) in self.features.iter().zip(&self.labels) {
            let cells: Vec<String> = f.iter().map(|v| format!("{v}")).collect();
            writeln!(out, "{},{l}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn read_csv_from<R: std::io::Read>(reader: R, num_classes: Option<usize>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let n = headers.len();
        if n < 2 || &headers[n - 1] != "label" {
            return Err(Error::Schema("classification header must be x0,...,x{d-1},label".into()));
        }
        for j in 0..n - 1 {
            if headers[j] != format!("x{j}") {
                return Err(Error::Schema(format!("expected column x{j}, found {}", &headers[j])));
            }
        }
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| Error::Ingestion {
                line,
                msg: e.to_string(),
            })?;
            if rec.len() != n {
                return Err(Error::Ingestion {
                    line,
                    msg: format!("expected {n} fields, found {}", rec.len()),
                });
            }
            let row = (0..n - 1)
                .map(|j| {
                    rec[j].trim().parse::<f64>().map_err(|_| Error::Ingestion {
                        line,
                        msg: format!("not a number: {:?}", &rec[j]),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            let label = rec[n - 1].trim().parse::<usize>().map_err(|_| Error::Ingestion {
                line,
                msg: format!("not a label index: {:?}", &rec[n - 1]),
            })?;
            features.push(row);
            labels.push(label);
        }
        if labels.is_empty() {
            return Err(Error::Size("classification file has no rows".into()));
        }
        let seen = labels.iter().max().unwrap() + 1;
        let k = match num_classes {
            Some(k) if seen > k => {
                return Err(Error::Schema(format!(
                    "found label {} but {k} classes were declared",
                    seen - 1
                )))
            }
            Some(k) => k,
            None => seen,
        };
        Self::new(features, labels, k)
    }
}

pub fn load_classification_csv(path: &Path, num_classes: Option<usize>) -> Result<ClassificationBandit> {
    ClassificationBandit::read_csv_from(std::fs::File::open(path)?, num_classes)
}

/// For each row draw `A ~ pi(. | x)` and record `Y = 1(A == label)`.
pub fn to_bandit<P: Policy + ?Sized, R: Rng + ?Sized>(
    cb: &ClassificationBandit,
    policy: &P,
    rng: &mut R,
) -> Result<BanditDataset> {
    match policy.action_kind() {
        ActionKind::Discrete(k) if k == cb.num_classes => {}
        other => {
            return Err(Error::Schema(format!(
                "policy actions {other:?} do not match {} classes",
                cb.num_classes
            )))
        }
    }
    let samples = cb
        .features
        .iter()
        .zip(&cb.labels)
        .map(|(x, &label)| {
            let a = policy.dist(x).sample(rng);
            let y = if a == Action::Discrete(label) { 1.0 } else { 0.0 };
            LoggedSample::new(x.clone(), a, y)
        })
        .collect();
    BanditDataset::new(samples, ActionKind::Discrete(cb.num_classes), OutcomeKind::Discrete(2))
}

/// Isotropic Gaussian classes with known posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianBlobs {
    pub means: Vec<Vec<f64>>,
    pub priors: Vec<f64>,
    pub sd: f64,
}

impl GaussianBlobs {
    /// `k` class means evenly spaced on a circle of `radius` in the first
    /// two coordinates of `dim`-dimensional space.
    pub fn ring(k: usize, dim: usize, radius: f64, priors: Option<Vec<f64>>) -> Result<Self> {
        if k == 0 || dim < 2 {
            return Err(Error::Domain("blobs need k >= 1 classes and dim >= 2".into()));
        }
        let priors = priors.unwrap_or_else(|| vec![1.0 / k as f64; k]);
        if priors.len() != k || (priors.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Domain("class priors must have k entries summing to 1".into()));
        }
        let means = (0..k)
            .map(|c| {
                let t = std::f64::consts::TAU * c as f64 / k as f64;
                let mut m = vec![0.0; dim];
                m[0] = radius * t.cos();
                m[1] = radius * t.sin();
                m
            })
            .collect();
        Ok(Self {
            means,
            priors,
            sd: 1.0,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.means.len()
    }

    pub fn generate<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<ClassificationBandit> {
        let noise = Normal::new(0.0, self.sd).expect("sd > 0");
        let mut features = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let c = sample_categorical(&self.priors, rng);
            features.push(self.means[c].iter().map(|m| m + noise.sample(rng)).collect());
            labels.push(c);
        }
        ClassificationBandit::new(features, labels, self.num_classes())
    }

    /// `P(class | x)`.
    pub fn posterior(&self, x: &[f64]) -> Vec<f64> {
        let logs: Vec<f64> = self
            .means
            .iter()
            .zip(&self.priors)
            .map(|(m, p)| {
                let d2: f64 = m.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum();
                p.ln() - 0.5 * d2 / (self.sd * self.sd)
            })
            .collect();
        let z = log_sum_exp(&logs);
        logs.iter().map(|l| (l - z).exp()).collect()
    }
}

/// Exact `P(Y = 1 | x, a)` for a bandit derived from [`GaussianBlobs`].
#[derive(Debug, Clone, PartialEq)]
pub struct BlobOutcome {
    pub blobs: GaussianBlobs,
}

impl OutcomeModel for BlobOutcome {
    fn log_density_fn<'a>(&'a self, x: &[f64], a: &Action) -> Box<dyn Fn(f64) -> f64 + 'a> {
        let p1 = a.index().map(|k| self.blobs.posterior(x)[k]).unwrap_or(0.0);
        Box::new(move |y| {
            if y == 1.0 {
                p1.ln()
            } else if y == 0.0 {
                (1.0 - p1).ln()
            } else {
                f64::NEG_INFINITY
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{DeterministicRule, PolicySpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn csv_round_trip_and_errors() {
        let blobs = GaussianBlobs::ring(3, 2, 2.0, None).unwrap();
        let cb = blobs.generate(40, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut buf = Vec::new();
        cb.write_csv_to(&mut buf).unwrap();
        let back = ClassificationBandit::read_csv_from(&buf[..], Some(3)).unwrap();
        assert_eq!(back, cb);

        let bad = "x0,x1,label\n0.1,0.2,0\n0.3,oops,1\n";
        match ClassificationBandit::read_csv_from(bad.as_bytes(), None) {
            Err(Error::Ingestion { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let too_many = "x0,label\n0.1,0\n0.3,4\n";
        assert!(matches!(
            ClassificationBandit::read_csv_from(too_many.as_bytes(), Some(3)),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn perfect_policy_always_correct() {
        let cb = ClassificationBandit::new(vec![vec![0.0]; 4], vec![2, 2, 2, 2], 3).unwrap();
        let p = PolicySpec::Deterministic {
            rule: DeterministicRule::Constant {
                action: Action::Discrete(2),
            },
        };
        // a point mass over index 2 has three actions
        let d = to_bandit(&cb, &p, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(d.iter().all(|s| s.y == 1.0));
    }

    #[test]
    fn posterior_normalised() {
        let blobs = GaussianBlobs::ring(4, 3, 1.5, Some(vec![0.1, 0.2, 0.3, 0.4])).unwrap();
        let p = blobs.posterior(&[0.3, -0.2, 1.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
