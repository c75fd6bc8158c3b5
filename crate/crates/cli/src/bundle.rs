//! Model directories: everything `predict` needs to rebuild estimated-weight
//! conformal sets, written by `train`.
//!
//! Layout: `manifest.json`, `behavior.json`, either `quantiles.json` +
//! `outcome.json` (real outcomes) or `labels.json` (discrete outcomes), and
//! the held-out `calibration.csv`.

use std::path::{Path, PathBuf};

use clap::Args;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use coppkit::conformal::{
    copp_predict, Calibration, CalibrationRecord, Candidates, CqrScore, CumprobScore, GridSpec, ScoreFn,
};
use coppkit::data::{split_dataset, Action, ActionKind, BanditDataset, OutcomeKind, SplitSpec};
use coppkit::models::{
    arch, checkpoint, fit_behavior_policy, fit_gaussian_conditional, fit_label_model, fit_quantile_pair,
    BehaviorModel, GaussianConditional, LabelModel, OutcomeModel, QuantilePair, TrainOpts,
};
use coppkit::policy::{Policy, PolicySpec};
use coppkit::sets::{PredictionSet, SetKind};
use coppkit::weights::{exact_sum_weight, mc_weight, WeightFn, DEFAULT_MC_DRAWS};
use coppkit::Error;

use crate::{outcome_kind, parse_action_kind, Failure};

const MANIFEST: &str = "manifest.json";
const BEHAVIOR: &str = "behavior.json";
const QUANTILES: &str = "quantiles.json";
const OUTCOME: &str = "outcome.json";
const LABELS: &str = "labels.json";
const CALIBRATION: &str = "calibration.csv";
const DIR_FORMAT: &str = "coppkit-model-dir-1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    dim: usize,
    action_kind: ActionKind,
    outcome_kind: OutcomeKind,
    alpha: f64,
    seed: u64,
    train_rows: usize,
    calibration_rows: usize,
}

impl Manifest {
    fn load(dir: &Path) -> Result<Self, Failure> {
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        if m.format != DIR_FORMAT {
            return Err(Failure::Usage(format!("{}: unsupported format {:?}", path.display(), m.format)));
        }
        Ok(m)
    }
}

#[derive(Args)]
pub struct TrainArgs {
    /// Logged dataset with header `x0,...,x{d-1},a,y`.
    #[arg(long)]
    data: PathBuf,
    /// Number of discrete actions, or `continuous`.
    #[arg(long, value_parser = parse_action_kind)]
    actions: ActionKind,
    /// Number of outcome labels; omit for real-valued outcomes.
    #[arg(long)]
    labels: Option<usize>,
    /// Training rows; the rest calibrate. Defaults to half.
    #[arg(long)]
    m: Option<usize>,
    /// Miscoverage level the quantile score is fitted for.
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    model_dir: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
}

fn check_alpha(alpha: f64) -> Result<(), Failure> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Failure::Usage(format!("--alpha must lie in (0, 1), got {alpha}")))
    }
}

pub fn train(args: &TrainArgs) -> Result<(), Failure> {
    check_alpha(args.alpha)?;
    let outcomes = outcome_kind(args.labels);
    if matches!(outcomes, OutcomeKind::Discrete(_)) && args.actions == ActionKind::Continuous {
        return Err(Failure::Usage("discrete outcomes need a finite action set".into()));
    }
    let data = BanditDataset::read_csv(&args.data, args.actions, outcomes)?;
    let m = args.m.unwrap_or(data.len() / 2);
    if m == 0 || m >= data.len() {
        return Err(Failure::Usage(format!("--m must leave rows for both splits; dataset has {}", data.len())));
    }
    let (train, cal) = split_dataset(&data, SplitSpec {
        m,
        n: data.len() - m,
        seed: args.seed,
    })?;

    let mut opts = TrainOpts::default();
    if let Some(e) = args.epochs {
        opts.epochs = e;
    }
    if let Some(b) = args.batch_size {
        opts.batch_size = b;
    }
    if let Some(lr) = args.learning_rate {
        opts.learning_rate = lr;
    }
    opts.validate()?;
    let opts_k = |k: u64| opts.clone().with_seed(args.seed.wrapping_mul(1_000_003).wrapping_add(k));

    let dir = &args.model_dir;
    std::fs::create_dir_all(dir).map_err(|e| Failure::Usage(format!("{}: {e}", dir.display())))?;
    let behavior = fit_behavior_policy(&train, arch::BEHAVIOR, &opts_k(2))?;
    checkpoint::save(&dir.join(BEHAVIOR), "behavior_policy", &behavior)?;
    match outcomes {
        OutcomeKind::Continuous => {
            let pair = fit_quantile_pair(&train, args.alpha / 2.0, 1.0 - args.alpha / 2.0, arch::QUANTILE, &opts_k(1), None)?;
            checkpoint::save(&dir.join(QUANTILES), "quantile_pair", &pair)?;
            let outcome = fit_gaussian_conditional(&train, arch::OUTCOME, &opts_k(3))?;
            checkpoint::save(&dir.join(OUTCOME), "gaussian_conditional", &outcome)?;
        }
        OutcomeKind::Discrete(_) => {
            let labels = fit_label_model(&train, arch::OUTCOME, &opts_k(3))?;
            checkpoint::save(&dir.join(LABELS), "label_model", &labels)?;
        }
    }
    cal.write_csv(&dir.join(CALIBRATION))?;
    let manifest = Manifest {
        format: DIR_FORMAT.into(),
        dim: data.dim(),
        action_kind: args.actions,
        outcome_kind: outcomes,
        alpha: args.alpha,
        seed: args.seed,
        train_rows: train.len(),
        calibration_rows: cal.len(),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(Error::from)? + "\n";
    std::fs::write(dir.join(MANIFEST), text).map_err(Error::from)?;
    println!(
        "trained on {} rows, kept {} for calibration; models in {}",
        train.len(),
        cal.len(),
        dir.display()
    );
    Ok(())
}

#[derive(Args)]
pub struct PredictArgs {
    #[arg(long)]
    model_dir: PathBuf,
    /// Covariate CSV with columns `x0,...,x{d-1}` (extra `a`, `y` ignored).
    #[arg(long)]
    data: PathBuf,
    /// Target policy as inline JSON or a path to a JSON file.
    #[arg(long)]
    target_policy: String,
    /// Defaults to the level the model directory was trained for.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    /// Candidate grid size for real outcomes.
    #[arg(long, default_value_t = 100)]
    grid_count: usize,
    /// Monte Carlo draws per weight for continuous actions.
    #[arg(long, default_value_t = DEFAULT_MC_DRAWS)]
    h: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_policy(arg: &str) -> Result<PolicySpec, Failure> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        std::fs::read_to_string(arg).map_err(|e| Failure::Usage(format!("{arg}: {e}")))?
    };
    let p: PolicySpec =
        serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("target policy: {e}")))?;
    p.validate()?;
    Ok(p)
}

/// Covariate rows; columns named `x<j>` must be exactly `x0..x{dim-1}`.
fn read_covariates(path: &Path, dim: usize) -> Result<Vec<Vec<f64>>, Failure> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let headers = rdr.headers().map_err(Error::from)?.clone();
    let xcols: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with('x'))
        .map(|(i, _)| i)
        .collect();
    let names: Vec<&str> = xcols.iter().map(|&i| &headers[i]).collect();
    let expected: Vec<String> = (0..dim).map(|j| format!("x{j}")).collect();
    if names != expected {
        return Err(Failure::Usage(format!(
            "data columns {names:?} do not match the model's {dim} covariates"
        )));
    }
    if let Some(h) = headers.iter().find(|h| !h.starts_with('x') && *h != "a" && *h != "y") {
        return Err(Failure::Usage(format!("unexpected column {h:?} in {}", path.display())));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(Error::from)?;
        let x = xcols
            .iter()
            .map(|&c| {
                rec[c].trim().parse::<f64>().map_err(|_| {
                    Failure::Usage(format!("line {}: not a number: {:?}", i + 2, &rec[c]))
                })
            })
            .collect::<Result<Vec<f64>, Failure>>()?;
        rows.push(x);
    }
    if rows.is_empty() {
        return Err(Failure::Usage(format!("{} has no rows", path.display())));
    }
    Ok(rows)
}

fn load<T: serde::de::DeserializeOwned>(dir: &Path, file: &str, kind: &str) -> Result<T, Failure> {
    checkpoint::load(&dir.join(file), kind).map_err(|e| Failure::Usage(format!("{file}: {e}")))
}

struct Setup<'a> {
    rows: &'a [Vec<f64>],
    cal: &'a BanditDataset,
    behavior: &'a BehaviorModel,
    target: &'a PolicySpec,
    action_kind: ActionKind,
    alpha: f64,
    h: usize,
    seed: u64,
}

impl Setup<'_> {
    fn sets<M: OutcomeModel, S: ScoreFn>(
        &self,
        model: M,
        score: &S,
        cands: Candidates<'_>,
    ) -> Result<Vec<PredictionSet>, Failure> {
        let w: Box<dyn WeightFn + '_> = match self.action_kind {
            ActionKind::Discrete(_) => Box::new(exact_sum_weight(model, self.behavior, self.target)?),
            ActionKind::Continuous => Box::new(mc_weight(model, self.behavior, self.target, self.h, self.seed)?),
        };
        let records: Vec<CalibrationRecord> = self
            .cal
            .iter()
            .map(|s| CalibrationRecord {
                score: score.score(&s.x, s.y),
                x: s.x.clone(),
                y: s.y,
            })
            .collect();
        let calib = Calibration::new(&records, &*w)?;
        let sets = self
            .rows
            .par_iter()
            .map(|x| copp_predict(x, cands, score, &*w, &calib, self.alpha))
            .collect::<coppkit::Result<Vec<_>>>()?;
        if w.floor_hits() > 0 {
            eprintln!("warning: {} weight denominators hit the floor", w.floor_hits());
        }
        Ok(sets)
    }
}

pub fn predict(args: &PredictArgs) -> Result<(), Failure> {
    let dir = &args.model_dir;
    let manifest = Manifest::load(dir)?;
    let alpha = args.alpha.unwrap_or(manifest.alpha);
    check_alpha(alpha)?;
    if args.grid_count < 2 || args.h == 0 {
        return Err(Failure::Usage("--grid-count must be >= 2 and --h >= 1".into()));
    }
    let target = parse_policy(&args.target_policy)?;
    if target.action_kind() != manifest.action_kind {
        return Err(Failure::Usage(format!(
            "target policy acts on {:?} but the models were trained on {:?}",
            target.action_kind(),
            manifest.action_kind
        )));
    }
    let behavior: BehaviorModel = load(dir, BEHAVIOR, "behavior_policy")?;
    let cal = BanditDataset::read_csv(&dir.join(CALIBRATION), manifest.action_kind, manifest.outcome_kind)?;
    let rows = read_covariates(&args.data, manifest.dim)?;
    let setup = Setup {
        rows: &rows,
        cal: &cal,
        behavior: &behavior,
        target: &target,
        action_kind: manifest.action_kind,
        alpha,
        h: args.h,
        seed: args.seed,
    };

    let sets = match manifest.outcome_kind {
        OutcomeKind::Continuous => {
            let pair: QuantilePair = load(dir, QUANTILES, "quantile_pair")?;
            let outcome: GaussianConditional = load(dir, OUTCOME, "gaussian_conditional")?;
            let ys: Vec<f64> = cal.iter().map(|s| s.y).collect();
            let grid = GridSpec {
                count: args.grid_count,
                ..GridSpec::default()
            }
            .build(&ys)?;
            setup.sets(&outcome, &CqrScore { pair }, Candidates::Grid(&grid))?
        }
        OutcomeKind::Discrete(l) => {
            let labels: LabelModel = load(dir, LABELS, "label_model")?;
            // label distribution under the behaviour policy
            let score = CumprobScore::new(|x: &[f64]| {
                let pb = behavior.probs(x).expect("discrete behaviour model");
                let mut p = vec![0.0; l];
                for (a, w) in pb.iter().enumerate() {
                    for (acc, q) in p.iter_mut().zip(labels.proba(x, &Action::Discrete(a))) {
                        *acc += w * q;
                    }
                }
                p
            });
            setup.sets(&labels, &score, Candidates::Labels(l))?
        }
    };

    write_sets(&args.out, &sets)?;
    let unbounded = sets.iter().filter(|s| s.unbounded).count();
    if unbounded > 0 {
        eprintln!("warning: {unbounded} of {} prediction sets are unbounded", sets.len());
    }
    println!("wrote {} prediction sets to {}", sets.len(), args.out.display());
    Ok(())
}

/// `row,lo,hi,length,unbounded` for grid sets, `row,labels,unbounded` with
/// `;`-separated labels otherwise. Empty sets leave `lo`/`hi` blank.
fn write_sets(path: &Path, sets: &[PredictionSet]) -> Result<(), Failure> {
    let file = std::fs::File::create(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(std::io::BufWriter::new(file));
    let labels = matches!(sets.first().map(|s| &s.kind), Some(SetKind::Labels { .. }));
    let header: &[&str] = if labels {
        &["row", "labels", "unbounded"]
    } else {
        &["row", "lo", "hi", "length", "unbounded"]
    };
    w.write_record(header).map_err(Error::from)?;
    for (i, s) in sets.iter().enumerate() {
        let rec = match &s.kind {
            SetKind::Labels { labels } => vec![
                i.to_string(),
                labels.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(";"),
                s.unbounded.to_string(),
            ],
            _ => {
                let (lo, hi) = s.bounds().map_or((String::new(), String::new()), |(a, b)| (a.to_string(), b.to_string()));
                vec![i.to_string(), lo, hi, s.size().to_string(), s.unbounded.to_string()]
            }
        };
        w.write_record(&rec).map_err(Error::from)?;
    }
    w.flush().map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    Ok(())
}
