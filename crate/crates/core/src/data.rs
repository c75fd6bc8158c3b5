//! Logged bandit samples, datasets and deterministic train/calibration splits.
//!
//! Actions and labels are zero-based indices. Outcomes are stored as `f64`
//! for both outcome kinds; a discrete label `l` is stored as `l as f64`.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single action, either an index into `0..K` or a real number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Discrete(usize),
    Continuous(f64),
}

impl Action {
    pub fn index(&self) -> Option<usize> {
        match *self {
            Action::Discrete(k) => Some(k),
            Action::Continuous(_) => None,
        }
    }

    pub fn value(&self) -> Option<f64> {
        match *self {
            Action::Discrete(_) => None,
            Action::Continuous(v) => Some(v),
        }
    }

    /// Numeric representation used in CSV files.
    pub fn as_f64(&self) -> f64 {
        match *self {
            Action::Discrete(k) => k as f64,
            Action::Continuous(v) => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Discrete(usize),
    Continuous,
}

impl ActionKind {
    pub fn num_actions(&self) -> Option<usize> {
        match *self {
            ActionKind::Discrete(k) => Some(k),
            ActionKind::Continuous => None,
        }
    }

    pub fn admits(&self, a: &Action) -> bool {
        match (*self, *a) {
            (ActionKind::Discrete(k), Action::Discrete(i)) => i < k,
            (ActionKind::Continuous, Action::Continuous(v)) => v.is_finite(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Continuous,
    Discrete(usize),
}

impl OutcomeKind {
    pub fn num_labels(&self) -> Option<usize> {
        match *self {
            OutcomeKind::Discrete(l) => Some(l),
            OutcomeKind::Continuous => None,
        }
    }

    pub fn admits(&self, y: f64) -> bool {
        match *self {
            OutcomeKind::Continuous => y.is_finite(),
            OutcomeKind::Discrete(l) => y >= 0.0 && y.fract() == 0.0 && (y as usize) < l,
        }
    }
}

/// One logged `(x, a, y)` triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedSample {
    pub x: Vec<f64>,
    pub a: Action,
    pub y: f64,
}

impl LoggedSample {
    pub fn new(x: Vec<f64>, a: Action, y: f64) -> Self {
        Self { x, a, y }
    }

    /// The outcome as a label index. Only meaningful for discrete outcomes.
    pub fn label(&self) -> usize {
        self.y as usize
    }
}

/// An immutable, nonempty collection of logged samples sharing one schema.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditDataset {
    samples: Vec<LoggedSample>,
    action_kind: ActionKind,
    outcome_kind: OutcomeKind,
    dim: usize,
}

impl BanditDataset {
    pub fn new(
        samples: Vec<LoggedSample>,
        action_kind: ActionKind,
        outcome_kind: OutcomeKind,
    ) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::Size("dataset must be nonempty".into()))?;
        let dim = first.x.len();
        if dim == 0 {
            return Err(Error::Shape("covariate dimension must be at least 1".into()));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.x.len() != dim {
                return Err(Error::Shape(format!(
                    "sample {i} has dimension {} (expected {dim})",
                    s.x.len()
                )));
            }
            if !action_kind.admits(&s.a) {
                return Err(Error::Type(format!(
                    "sample {i}: action {:?} does not match {:?}",
                    s.a, action_kind
                )));
            }
            if !outcome_kind.admits(s.y) {
                return Err(Error::Type(format!(
                    "sample {i}: outcome {} does not match {:?}",
                    s.y, outcome_kind
                )));
            }
        }
        Ok(Self {
            samples,
            action_kind,
            outcome_kind,
            dim,
        })
    }

    pub fn samples(&self) -> &[LoggedSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn action_kind(&self) -> ActionKind {
        self.action_kind
    }

    pub fn outcome_kind(&self) -> OutcomeKind {
        self.outcome_kind
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LoggedSample> {
        self.samples.iter()
    }

    /// Subset by indices; returns `None` when `idx` is empty.
    pub fn select(&self, idx: &[usize]) -> Option<BanditDataset> {
        if idx.is_empty() {
            return None;
        }
        Some(BanditDataset {
            samples: idx.iter().map(|&i| self.samples[i].clone()).collect(),
            action_kind: self.action_kind,
            outcome_kind: self.outcome_kind,
            dim: self.dim,
        })
    }

    /// Samples whose predicate holds; `None` when nothing matches.
    pub fn filter(&self, pred: impl Fn(&LoggedSample) -> bool) -> Option<BanditDataset> {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| pred(&self.samples[i])).collect();
        self.select(&idx)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut out = std::io::BufWriter::new(file);
        self.write_csv_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    /// Header `x0,...,x{d-1},a,y`, LF line endings, shortest round-trip floats.
    pub fn write_csv_to<W: Write>(&self, out: &mut W) -> Result<()> {
        let header: Vec<String> = (0..self.dim)
            .map(|j| format!("x{j}"))
            .chain(["a".to_string(), "y".to_string()])
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for s in &self.samples {
            let mut line = String::new();
            for v in &s.x {
                line.push_str(&format!("{v},"));
            }
            match s.a {
                Action::Discrete(k) => line.push_str(&format!("{k},")),
                Action::Continuous(v) => line.push_str(&format!("{v},")),
            }
            match self.outcome_kind {
                OutcomeKind::Discrete(_) => line.push_str(&format!("{}", s.label())),
                OutcomeKind::Continuous => line.push_str(&format!("{}", s.y)),
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn read_csv(path: &Path, action_kind: ActionKind, outcome_kind: OutcomeKind) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv_from(file, action_kind, outcome_kind)
    }

    pub fn read_csv_from<R: std::io::Read>(
        reader: R,
        action_kind: ActionKind,
        outcome_kind: OutcomeKind,
    ) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let cols: Vec<&str> = headers.iter().collect();
        let n = cols.len();
        if n < 3 || cols[n - 2] != "a" || cols[n - 1] != "y" {
            return Err(Error::Schema(
                "dataset header must be x0,...,x{d-1},a,y".into(),
            ));
        }
        for (j, c) in cols[..n - 2].iter().enumerate() {
            if *c != format!("x{j}") {
                return Err(Error::Schema(format!("expected column x{j}, found {c}")));
            }
        }
        let dim = n - 2;
        let mut samples = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            // header is line 1
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
            let parse = |s: &str| -> Result<f64> {
                s.trim().parse::<f64>().map_err(|_| Error::Ingestion {
                    line,
                    msg: format!("not a number: {s:?}"),
                })
            };
            let x = (0..dim).map(|j| parse(&rec[j])).collect::<Result<Vec<_>>>()?;
            let a = match action_kind {
                ActionKind::Discrete(_) => {
                    Action::Discrete(rec[dim].trim().parse::<usize>().map_err(|_| {
                        Error::Ingestion {
                            line,
                            msg: format!("not an action index: {:?}", &rec[dim]),
                        }
                    })?)
                }
                ActionKind::Continuous => Action::Continuous(parse(&rec[dim])?),
            };
            let y = parse(&rec[dim + 1])?;
            let s = LoggedSample::new(x, a, y);
            if !action_kind.admits(&s.a) || !outcome_kind.admits(s.y) {
                return Err(Error::Ingestion {
                    line,
                    msg: "action or outcome outside declared kind".into(),
                });
            }
            samples.push(s);
        }
        Self::new(samples, action_kind, outcome_kind)
    }
}

/// Sizes and seed for a training/calibration split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub m: usize,
    pub n: usize,
    pub seed: u64,
}

/// Partition `data` into disjoint training (`m`) and calibration (`n`) sets.
///
/// The permutation is a pure function of `spec.seed`.
pub fn split_dataset(
    data: &BanditDataset,
    spec: SplitSpec,
) -> Result<(BanditDataset, BanditDataset)> {
    if spec.m == 0 || spec.n == 0 {
        return Err(Error::Size("m and n must both be at least 1".into()));
    }
    if spec.m + spec.n > data.len() {
        return Err(Error::Size(format!(
            "m + n = {} exceeds dataset size {}",
            spec.m + spec.n,
            data.len()
        )));
    }
    let mut idx: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    idx.shuffle(&mut rng);
    let train = data.select(&idx[..spec.m]).expect("m >= 1");
    let cal = data.select(&idx[spec.m..spec.m + spec.n]).expect("n >= 1");
    Ok((train, cal))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> BanditDataset {
        let samples = (0..n)
            .map(|i| LoggedSample::new(vec![i as f64], Action::Discrete(i % 3), i as f64 * 0.5))
            .collect();
        BanditDataset::new(samples, ActionKind::Discrete(3), OutcomeKind::Continuous).unwrap()
    }

    #[test]
    fn split_sizes_and_disjoint() {
        let d = toy(10);
        let (tr, cal) = split_dataset(&d, SplitSpec { m: 6, n: 4, seed: 1 }).unwrap();
        assert_eq!(tr.len(), 6);
        assert_eq!(cal.len(), 4);
        let mut ids: Vec<i64> = tr.iter().chain(cal.iter()).map(|s| s.x[0] as i64).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 10);
    }

    #[test]
    fn split_is_seed_deterministic() {
        let d = toy(10);
        let a = split_dataset(&d, SplitSpec { m: 6, n: 4, seed: 1 }).unwrap();
        let b = split_dataset(&d, SplitSpec { m: 6, n: 4, seed: 1 }).unwrap();
        assert_eq!(a, b);
        let c = split_dataset(&d, SplitSpec { m: 6, n: 4, seed: 2 }).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn split_rejects_oversize() {
        let d = toy(10);
        assert!(matches!(
            split_dataset(&d, SplitSpec { m: 6, n: 5, seed: 1 }),
            Err(Error::Size(_))
        ));
        assert!(split_dataset(&d, SplitSpec { m: 0, n: 5, seed: 1 }).is_err());
    }

    #[test]
    fn dataset_validates_schema() {
        assert!(BanditDataset::new(vec![], ActionKind::Continuous, OutcomeKind::Continuous).is_err());
        let bad = vec![LoggedSample::new(vec![0.0], Action::Discrete(3), 0.0)];
        assert!(matches!(
            BanditDataset::new(bad, ActionKind::Discrete(3), OutcomeKind::Continuous),
            Err(Error::Type(_))
        ));
        let ragged = vec![
            LoggedSample::new(vec![0.0], Action::Continuous(0.0), 0.0),
            LoggedSample::new(vec![0.0, 1.0], Action::Continuous(0.0), 0.0),
        ];
        assert!(BanditDataset::new(ragged, ActionKind::Continuous, OutcomeKind::Continuous).is_err());
        let bad_label = vec![LoggedSample::new(vec![0.0], Action::Continuous(0.0), 2.0)];
        assert!(BanditDataset::new(bad_label, ActionKind::Continuous, OutcomeKind::Discrete(2)).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let d = toy(7);
        let mut buf = Vec::new();
        d.write_csv_to(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x0,a,y\n"));
        assert!(!text.contains('\r'));
        let back = BanditDataset::read_csv_from(&buf[..], ActionKind::Discrete(3), OutcomeKind::Continuous)
            .unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn csv_reports_bad_line() {
        let text = "x0,a,y\n0.5,1,2.0\n0.1,zz,1.0\n";
        let err = BanditDataset::read_csv_from(text.as_bytes(), ActionKind::Discrete(3), OutcomeKind::Continuous)
            .unwrap_err();
        match err {
            Error::Ingestion { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
